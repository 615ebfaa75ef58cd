//! Result envelopes and CSV tables.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "spectramech.run/1";

/// What a command produces: a JSON payload, the same data as a table, and
/// the exit status to report after printing them.
pub struct Output {
    pub payload: Value,
    pub table: Table,
    pub status: u8,
}

impl Output {
    pub fn new(payload: impl Serialize, table: Table) -> Self {
        Self { payload: serde_json::to_value(payload).expect("payload serializes"), table, status: 0 }
    }
}

#[derive(Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Full-precision text for a float; `f64`'s `Display` is shortest round-trip.
pub fn num(v: f64) -> String {
    format!("{v}")
}

#[derive(Serialize)]
pub struct RunResult<'a, S: Serialize> {
    pub schema: &'static str,
    pub command: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub settings: S,
    pub payload: &'a Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

//! Scenario files.
//!
//! A scenario is a TOML document with a `schema_version`, a `model` (`fd` or
//! `ss`), the resource budget, the noise density, optional `[solver]`
//! settings and one `[[users]]` table per user. Unknown keys are rejected.
//!
//! ```toml
//! schema_version = 1
//! model = "fd"
//! seed = 7
//! bandwidth = 1.0
//! noise_density = 1.0
//!
//! [[users]]
//! type = { kind = "uniform", min = 0.0, max = 1.0 }
//! gain = { kind = "deterministic", value = 1.0 }
//! transmit_power = 1.0
//! ```
//!
//! Spread-spectrum users give `gains = [...]`, their row of the gain matrix
//! (gains from this user's transmitter to every receiver), instead of
//! `gain` and `transmit_power`; the scenario gives `total_power` and
//! `bandwidth`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::FdScenario;
use crate::mechanism::Mechanism;
use crate::montecarlo::DEFAULT_MC_SAMPLES;
use crate::payment::DEFAULT_GRID_M;
use crate::rate::{FdUserPhysical, GainDistribution, SsPhysical};
use crate::ss::{SsScenario, SsSolverOptions};
use crate::types::{certify_regularity, Regularity, TypeDistribution, VirtualTypeProfile, DEFAULT_REGULARITY_GRID};
use crate::verification::DEFAULT_GRID_POINTS;

/// The only schema version this build reads.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Fd,
    Ss,
}

/// Numerical settings; every field has a default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Riemann subintervals for taxes.
    pub grid_m: usize,
    pub mc_samples: usize,
    /// Random starts of the spread-spectrum solver.
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub regularity_grid: usize,
    pub override_regularity: bool,
    /// Points per user in verification grids.
    pub verify_grid: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let ss = SsSolverOptions::default();
        Self {
            grid_m: DEFAULT_GRID_M,
            mc_samples: DEFAULT_MC_SAMPLES,
            restarts: ss.restarts,
            max_iterations: ss.max_iterations,
            tolerance: ss.tolerance,
            regularity_grid: DEFAULT_REGULARITY_GRID,
            override_regularity: false,
            verify_grid: DEFAULT_GRID_POINTS,
        }
    }
}

impl SolverSettings {
    pub fn ss_options(&self, seed: u64) -> SsSolverOptions {
        SsSolverOptions {
            restarts: self.restarts,
            seed,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    #[serde(rename = "type")]
    pub type_distribution: TypeDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<GainDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmit_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub model: Model,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_power: Option<f64>,
    pub noise_density: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    pub users: Vec<UserConfig>,
}

/// Outcome of checking a configuration without running anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub model: Model,
    pub num_users: usize,
    /// Every violated invariant, in file order.
    pub problems: Vec<String>,
    /// Regularity verdict per user; `None` where the distribution is invalid.
    pub regularity: Vec<Option<Regularity>>,
}

/// A validated scenario of either model.
#[derive(Debug, Clone)]
pub enum Scenario {
    Fd(FdScenario),
    Ss(SsScenario),
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        match self {
            Scenario::Fd(s) => s.num_users(),
            Scenario::Ss(s) => s.num_users(),
        }
    }

    pub fn profile(&self) -> &VirtualTypeProfile {
        match self {
            Scenario::Fd(s) => &s.profile,
            Scenario::Ss(s) => &s.profile,
        }
    }

    /// The mechanism with the tax grid and solver settings fixed.
    pub fn mechanism(&self, settings: &SolverSettings, seed: u64) -> Box<dyn Mechanism + '_> {
        match self {
            Scenario::Fd(s) => Box::new(s.mechanism(settings.grid_m)),
            Scenario::Ss(s) => Box::new(s.mechanism(settings.grid_m, settings.ss_options(seed))),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Checks every invariant and certifies regularity, collecting all
    /// problems rather than stopping at the first.
    pub fn validate(&self) -> ValidationReport {
        let mut problems = Vec::new();
        let mut regularity = Vec::with_capacity(self.users.len());
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.users.is_empty() {
            problems.push("at least one user is required".into());
        }
        check_positive(&mut problems, "noise_density", Some(self.noise_density));
        let s = &self.solver;
        for (name, v) in [("grid_m", s.grid_m), ("max_iterations", s.max_iterations)] {
            if v < 1 {
                problems.push(format!("solver.{name} must be at least 1"));
            }
        }
        for (name, v) in [("mc_samples", s.mc_samples), ("regularity_grid", s.regularity_grid), ("verify_grid", s.verify_grid)] {
            if v < 2 {
                problems.push(format!("solver.{name} must be at least 2"));
            }
        }
        if !(s.tolerance.is_finite() && s.tolerance > 0.0) {
            problems.push(format!("solver.tolerance {} must be positive", s.tolerance));
        }

        let n = self.users.len();
        match self.model {
            Model::Fd => {
                check_positive(&mut problems, "bandwidth", self.bandwidth);
                if self.total_power.is_some() {
                    problems.push("total_power is a spread-spectrum key; fd scenarios use bandwidth".into());
                }
            }
            Model::Ss => {
                check_positive(&mut problems, "total_power", self.total_power);
                check_positive(&mut problems, "bandwidth", self.bandwidth);
            }
        }
        for (i, u) in self.users.iter().enumerate() {
            let at = |m: String| format!("users[{i}]: {m}");
            match u.type_distribution.validate() {
                Ok(()) => match certify_regularity(&u.type_distribution, s.regularity_grid.max(2)) {
                    Ok(r) => {
                        if let Regularity::Violated { theta_a, theta_b, .. } = r {
                            if !s.override_regularity {
                                problems.push(at(format!(
                                    "virtual type not increasing between {theta_a} and {theta_b}; \
                                     the mechanisms require an increasing virtual type (regularity)"
                                )));
                            }
                        }
                        regularity.push(Some(r));
                    }
                    Err(e) => {
                        problems.push(at(e.to_string()));
                        regularity.push(None);
                    }
                },
                Err(e) => {
                    problems.push(at(e.to_string()));
                    regularity.push(None);
                }
            }
            match self.model {
                Model::Fd => {
                    match &u.gain {
                        Some(g) => {
                            if let Err(e) = g.validate() {
                                problems.push(at(e.to_string()));
                            }
                        }
                        None => problems.push(at("fd users need a gain distribution".into())),
                    }
                    match u.transmit_power {
                        Some(p) if p.is_finite() && p > 0.0 => {}
                        Some(p) => problems.push(at(format!("transmit_power {p} must be positive"))),
                        None => problems.push(at("fd users need transmit_power".into())),
                    }
                    if u.gains.is_some() {
                        problems.push(at("gains is a spread-spectrum key; fd users use gain".into()));
                    }
                }
                Model::Ss => {
                    match &u.gains {
                        Some(row) if row.len() != n => {
                            problems.push(at(format!("gains has {} entries, expected {n}", row.len())))
                        }
                        Some(row) => {
                            if let Some(h) = row.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
                                problems.push(at(format!("channel gain {h} must be positive and finite")));
                            }
                        }
                        None => problems.push(at("ss users need a gains row".into())),
                    }
                    if u.gain.is_some() || u.transmit_power.is_some() {
                        problems.push(at("gain and transmit_power are fd keys; ss users use gains".into()));
                    }
                }
            }
        }
        ValidationReport { valid: problems.is_empty(), model: self.model, num_users: n, problems, regularity }
    }

    /// Builds the scenario, failing on the first violated invariant.
    pub fn build(&self) -> Result<Scenario> {
        let report = self.validate();
        if let Some(first) = report.problems.first() {
            // Regularity refusals keep their own error class.
            for (user, r) in report.regularity.iter().enumerate() {
                if let Some(Regularity::Violated { theta_a, theta_b, grid_points }) = r {
                    if !self.solver.override_regularity && report.problems.len() == 1 {
                        return Err(Error::Regularity { user, theta_a: *theta_a, theta_b: *theta_b, grid_points: *grid_points });
                    }
                }
            }
            return Err(Error::Config(first.clone()));
        }
        let types = self.users.iter().map(|u| u.type_distribution.clone()).collect();
        let profile = VirtualTypeProfile::certify(types, self.solver.regularity_grid, self.solver.override_regularity)?;
        let missing = |what: &str| Error::Config(format!("{what} is required"));
        match self.model {
            Model::Fd => {
                let users = self
                    .users
                    .iter()
                    .map(|u| {
                        FdUserPhysical::new(
                            u.gain.clone().ok_or_else(|| missing("gain"))?,
                            u.transmit_power.ok_or_else(|| missing("transmit_power"))?,
                            self.noise_density,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let w = self.bandwidth.ok_or_else(|| missing("bandwidth"))?;
                Ok(Scenario::Fd(FdScenario::new(w, users, profile)?))
            }
            Model::Ss => {
                let gains = self
                    .users
                    .iter()
                    .map(|u| u.gains.clone().ok_or_else(|| missing("gains")))
                    .collect::<Result<Vec<_>>>()?;
                let phys = SsPhysical::new(gains, self.bandwidth.ok_or_else(|| missing("bandwidth"))?, self.noise_density)?;
                Ok(Scenario::Ss(SsScenario::new(self.total_power.ok_or_else(|| missing("total_power"))?, phys, profile)?))
            }
        }
    }
}

fn check_positive(problems: &mut Vec<String>, name: &str, value: Option<f64>) {
    match value {
        Some(v) if v.is_finite() && v > 0.0 => {}
        Some(v) => problems.push(format!("{name} {v} must be positive and finite")),
        None => problems.push(format!("{name} is required")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FD: &str = r#"
schema_version = 1
model = "fd"
bandwidth = 2.0
noise_density = 1.0

[[users]]
type = { kind = "uniform", min = 0.0, max = 1.0 }
gain = { kind = "discrete", points = [[0.5, 0.5], [1.5, 0.5]] }
transmit_power = 1.0
"#;

    const SS: &str = r#"
schema_version = 1
model = "ss"
seed = 3
total_power = 2.0
bandwidth = 1.0
noise_density = 1.0

[solver]
restarts = 4

[[users]]
type = { kind = "uniform", min = 0.0, max = 1.0 }
gains = [1.0, 0.2]

[[users]]
type = { kind = "power", min = 0.5, max = 1.5, exponent = 1.0 }
gains = [0.3, 1.0]
"#;

    #[test]
    fn fd_round_trip() {
        let c = ScenarioConfig::from_toml_str(FD).unwrap();
        assert!(c.validate().valid);
        assert!(matches!(c.build().unwrap(), Scenario::Fd(_)));
        let again = ScenarioConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn ss_parses_with_solver_section() {
        let c = ScenarioConfig::from_toml_str(SS).unwrap();
        assert_eq!(c.solver.restarts, 4);
        assert_eq!(c.solver.grid_m, DEFAULT_GRID_M);
        let Scenario::Ss(s) = c.build().unwrap() else { panic!("expected ss") };
        assert_eq!(s.phys.gains[1][0], 0.3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = FD.replace("bandwidth = 2.0", "bandwidth = 2.0\nbandwith = 3.0");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn degenerate_support_named() {
        let text = FD.replace("max = 1.0", "max = 0.0");
        let r = ScenarioConfig::from_toml_str(&text).unwrap().validate();
        assert!(!r.valid);
        assert!(r.problems[0].contains("max > min"), "{:?}", r.problems);
    }

    #[test]
    fn irregular_profile_refused_unless_overridden() {
        let text = FD.replace(
            r#"{ kind = "uniform", min = 0.0, max = 1.0 }"#,
            r#"{ kind = "tabulated", theta = [0.0, 0.5, 1.0], cdf = [0.0, 0.9, 1.0] }"#,
        );
        let c = ScenarioConfig::from_toml_str(&text).unwrap();
        assert!(matches!(c.build(), Err(Error::Regularity { user: 0, .. })));
        let mut c = c;
        c.solver.override_regularity = true;
        assert!(c.build().is_ok());
    }
}

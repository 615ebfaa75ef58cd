//! Tax computation shared by both mechanisms.
//!
//! For user `i` with report `θ_i` the tax is
//! `θ_i v(θ_i) − ∫_{θ_min}^{θ_i} v(s) ds`, where `v(s)` is the rate user `i`
//! receives when it reports `s` and everyone else keeps their reports.
//! `v` is non-decreasing at exact optima, so a right-endpoint Riemann sum
//! over-estimates the integral and the computed tax never exceeds the exact
//! one. The gap is bounded by right sum minus left sum, which telescopes to
//! `Δ (v(θ_i) − v(θ_min))`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Default number of Riemann subintervals.
pub const DEFAULT_GRID_M: usize = 64;

/// Relative drop in `v` between consecutive grid points tolerated before a
/// sample is reported as non-monotone.
const MONOTONE_TOLERANCE: f64 = 1e-9;

/// A decrease of the rate integrand between two consecutive tax-grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonMonotoneSample {
    pub s_prev: f64,
    pub s: f64,
    pub rate_prev: f64,
    pub rate: f64,
}

/// A computed tax with its approximation bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxEstimate {
    pub payment: f64,
    /// Upper bound on `exact tax − payment` when the integrand is monotone.
    pub error_bound: f64,
    /// Rate received at the report itself, `v(θ_i)`.
    pub rate: f64,
    /// Rate received when reporting the type minimum, `v(θ_min)`.
    pub base_rate: f64,
    pub nonmonotone: Vec<NonMonotoneSample>,
}

/// Taxes of every user for one reported profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payments {
    pub payments: Vec<f64>,
    pub tax_error_bounds: Vec<f64>,
    /// Non-monotone tax-grid steps, tagged with the user they belong to.
    pub nonmonotone: Vec<(usize, NonMonotoneSample)>,
}

impl Payments {
    /// Collects per-user estimates, in user order.
    pub fn from_taxes(taxes: Vec<TaxEstimate>) -> Self {
        let mut out = Self { payments: vec![], tax_error_bounds: vec![], nonmonotone: vec![] };
        for (user, tax) in taxes.into_iter().enumerate() {
            out.payments.push(tax.payment);
            out.tax_error_bounds.push(tax.error_bound);
            out.nonmonotone.extend(tax.nonmonotone.into_iter().map(|s| (user, s)));
        }
        out
    }
}

fn check_report(report: f64, theta_min: f64) -> Result<()> {
    if !(report.is_finite() && theta_min.is_finite() && report >= theta_min) {
        return Err(Error::Domain(format!(
            "report {report} must not be below the type minimum {theta_min}"
        )));
    }
    Ok(())
}

/// Right-endpoint Riemann tax over `grid_m` equal subintervals of
/// `[theta_min, report]`. `rate_at(s)` evaluates the rate for report `s`.
pub fn riemann_tax<F>(report: f64, theta_min: f64, grid_m: usize, mut rate_at: F) -> Result<TaxEstimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid_m < 1 {
        return Err(Error::Config("tax grid needs at least one subinterval".into()));
    }
    check_report(report, theta_min)?;
    let rate = rate_at(report)?;
    if report == theta_min {
        return Ok(TaxEstimate {
            payment: theta_min * rate,
            error_bound: 0.0,
            rate,
            base_rate: rate,
            nonmonotone: Vec::new(),
        });
    }

    let step = (report - theta_min) / grid_m as f64;
    let base_rate = rate_at(theta_min)?;
    let mut prev = base_rate;
    let mut prev_s = theta_min;
    let mut sum = 0.0;
    let mut nonmonotone = Vec::new();
    for k in 1..=grid_m {
        let (s, v) = if k == grid_m {
            (report, rate)
        } else {
            let s = theta_min + step * k as f64;
            (s, rate_at(s)?)
        };
        if v < prev - MONOTONE_TOLERANCE * prev.abs().max(1.0) {
            nonmonotone.push(NonMonotoneSample { s_prev: prev_s, s, rate_prev: prev, rate: v });
        }
        sum += v;
        prev = v;
        prev_s = s;
    }
    let payment = ensure_finite(report * rate - step * sum, || format!("tax at report {report}"))?;
    Ok(TaxEstimate {
        payment,
        error_bound: step * (rate - base_rate).max(0.0),
        rate,
        base_rate,
        nonmonotone,
    })
}

/// Tax written as a base amount plus the area left of the rate-type curve:
/// `θ_min v(θ_min) + ∫_{v(θ_min)}^{v(θ_i)} Z(y) dy` with
/// `Z(y) = inf{s : v(s) ≥ y}` found by bisection. The `y`-integral uses the
/// midpoint rule on `grid` cells; since `Z` is non-decreasing the midpoint
/// sum lies between the left and right sums, whose gap is the reported bound.
pub fn z_decomposition_tax<F>(report: f64, theta_min: f64, grid: usize, mut rate_at: F) -> Result<TaxEstimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid < 1 {
        return Err(Error::Config("rate grid needs at least one cell".into()));
    }
    check_report(report, theta_min)?;
    let rate = rate_at(report)?;
    let base_rate = if report == theta_min { rate } else { rate_at(theta_min)? };
    let base = theta_min * base_rate;
    if rate <= base_rate {
        return Ok(TaxEstimate {
            payment: base,
            error_bound: 0.0,
            rate,
            base_rate,
            nonmonotone: Vec::new(),
        });
    }
    let dy = (rate - base_rate) / grid as f64;
    let width = report - theta_min;
    let mut area = 0.0;
    for j in 0..grid {
        let y = base_rate + (j as f64 + 0.5) * dy;
        area += min_report_for_rate(y, theta_min, report, &mut rate_at)?;
    }
    Ok(TaxEstimate {
        payment: base + dy * area,
        error_bound: dy * width + BISECTION_TOLERANCE * width * (rate - base_rate),
        rate,
        base_rate,
        nonmonotone: Vec::new(),
    })
}

const BISECTION_TOLERANCE: f64 = 1e-12;

/// `Z(y)`: the smallest report in `[lo, hi]` whose rate reaches `y`, assuming
/// `rate_at(lo) < y ≤ rate_at(hi)`.
pub fn min_report_for_rate<F>(y: f64, lo: f64, hi: f64, rate_at: &mut F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = (lo, hi);
    let tol = BISECTION_TOLERANCE * (hi - lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate_at(mid)? >= y {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

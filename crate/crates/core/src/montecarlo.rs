//! Monte Carlo estimators of interim quantities and expected revenue.
//!
//! Draw `k` of the other users' types comes from ChaCha stream `k` of the
//! seed, so results are identical whether draws run serially or in
//! parallel. Partial results are collected in draw order and reduced
//! sequentially.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::types::{draw_types, TypeDistribution};

/// Default number of Monte Carlo draws.
pub const DEFAULT_MC_SAMPLES: usize = 4096;

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std_error: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, std_error: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        Self { mean, std_error: (var / n as f64).sqrt() }
    }
}

/// Type vectors for `mc_samples` draws.
pub fn type_draws(distributions: &[TypeDistribution], mc_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    draws_for(distributions, mc_samples, mc_samples, seed)
}

/// Draws of everyone but one user. With a single user there is nothing to
/// average over and one draw stands for all of them.
pub fn others_draws(distributions: &[TypeDistribution], mc_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let count = if distributions.len() == 1 { 1 } else { mc_samples };
    draws_for(distributions, mc_samples, count, seed)
}

fn draws_for(distributions: &[TypeDistribution], mc_samples: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if mc_samples < 2 {
        return Err(Error::Config(format!("need at least 2 Monte Carlo samples, got {mc_samples}")));
    }
    Ok((0..count as u64)
        .into_par_iter()
        .map(|k| draw_types(distributions, seed, k))
        .collect())
}

pub(crate) fn distributions<M: Mechanism + ?Sized>(mech: &M) -> Vec<TypeDistribution> {
    (0..mech.num_users()).map(|i| mech.type_distribution(i).clone()).collect()
}

/// Interim expected rate `Q_i(r)` and payment `T_i(r)` for one report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimEstimate {
    pub user: usize,
    pub report: f64,
    pub samples: usize,
    pub expected_rate: MeanEstimate,
    pub expected_payment: MeanEstimate,
    /// Mean tax-approximation bound over the draws.
    pub tax_error_bound: f64,
    pub nonmonotone_steps: usize,
}

pub fn interim_estimate<M: Mechanism + ?Sized>(
    mech: &M,
    user: usize,
    report: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<InterimEstimate> {
    if user >= mech.num_users() {
        return Err(Error::Domain(format!("user {user} out of range")));
    }
    let draws = others_draws(&distributions(mech), mc_samples, seed)?;
    let outcomes = draws
        .into_par_iter()
        .map(|mut theta| {
            theta[user] = report;
            mech.user_outcome(user, &theta)
        })
        .collect::<Result<Vec<_>>>()?;
    let rates: Vec<f64> = outcomes.iter().map(|o| o.rate).collect();
    let pays: Vec<f64> = outcomes.iter().map(|o| o.payment).collect();
    let eps: Vec<f64> = outcomes.iter().map(|o| o.tax_error_bound).collect();
    Ok(InterimEstimate {
        user,
        report,
        samples: mc_samples,
        expected_rate: MeanEstimate::from_samples(&rates),
        expected_payment: MeanEstimate::from_samples(&pays),
        tax_error_bound: MeanEstimate::from_samples(&eps).mean,
        nonmonotone_steps: outcomes.iter().map(|o| o.nonmonotone_steps).sum(),
    })
}

/// Expected revenue computed two ways on the same draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueEstimate {
    pub samples: usize,
    /// `E[Σ_i t_i(θ)]`.
    pub via_payments: MeanEstimate,
    /// `E[Σ_i w_i(θ_i) rate_i(θ)]`.
    pub via_virtual_surplus: MeanEstimate,
    /// Standard error of the per-draw difference of the two estimators.
    pub difference_std_error: f64,
    /// `E[Σ_i θ_i rate_i(θ)]`, what a seller who saw the types could charge.
    pub omniscient_bound: MeanEstimate,
    /// Mean over draws of `Σ_i` tax-approximation bounds.
    pub tax_error_bound: f64,
    /// Mean tax-approximation bound of each user.
    pub tax_error_bounds: Vec<f64>,
    pub nonmonotone_steps: usize,
    /// `|via_payments − via_virtual_surplus| ≤ tax_error_bound + 3·difference_std_error`.
    pub identity_holds: bool,
}

pub fn expected_revenue<M: Mechanism + ?Sized>(mech: &M, mc_samples: usize, seed: u64) -> Result<RevenueEstimate> {
    let dists = distributions(mech);
    let draws = type_draws(&dists, mc_samples, seed)?;
    let rows = draws
        .into_par_iter()
        .map(|theta| {
            let out = mech.profile_outcome(&theta)?;
            let mut virtual_surplus = 0.0;
            let mut omniscient = 0.0;
            for (i, d) in dists.iter().enumerate() {
                virtual_surplus += d.virtual_type(theta[i])? * out.rates[i];
                omniscient += theta[i] * out.rates[i];
            }
            let pay: f64 = out.payments.iter().sum();
            Ok((pay, virtual_surplus, omniscient, out.tax_error_bounds, out.nonmonotone_steps))
        })
        .collect::<Result<Vec<_>>>()?;

    let pay: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let vs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let omni: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.3.iter().sum()).collect();
    let tax_error_bounds = (0..dists.len())
        .map(|i| MeanEstimate::from_samples(&rows.iter().map(|r| r.3[i]).collect::<Vec<_>>()).mean)
        .collect();
    let diff: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let via_payments = MeanEstimate::from_samples(&pay);
    let via_virtual_surplus = MeanEstimate::from_samples(&vs);
    let difference_std_error = MeanEstimate::from_samples(&diff).std_error;
    let tax_error_bound = MeanEstimate::from_samples(&eps).mean;
    let identity_holds = (via_payments.mean - via_virtual_surplus.mean).abs()
        <= tax_error_bound + 3.0 * difference_std_error;
    Ok(RevenueEstimate {
        samples: mc_samples,
        via_payments,
        via_virtual_surplus,
        difference_std_error,
        omniscient_bound: MeanEstimate::from_samples(&omni),
        tax_error_bound,
        tax_error_bounds,
        nonmonotone_steps: rows.iter().map(|r| r.4).sum(),
        identity_holds,
    })
}

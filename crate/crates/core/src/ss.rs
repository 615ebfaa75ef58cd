//! Spread-spectrum mechanism.
//!
//! For reported types θ the seller splits `P_total` watts to maximize
//! `Σ_i w_i(θ_i) ψ̃_i(x)` over `{x ≥ 0, Σ x_i ≤ P_total}`. Interference makes
//! the objective non-concave, so the solver is a multistart projected
//! gradient ascent and everything built on it holds up to local optimality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, UserOutcome};
use crate::montecarlo::{self, InterimEstimate, RevenueEstimate};
use crate::payment::{self, Payments, TaxEstimate};
use crate::rate::SsPhysical;
use crate::types::{TypeDistribution, VirtualTypeProfile};

/// Armijo sufficient-increase constant.
const ARMIJO: f64 = 1e-4;
/// Backtracking gives up once the step is this small relative to the first trial.
const MIN_STEP_RATIO: f64 = 1e-30;

/// Multistart solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsSolverOptions {
    /// Random interior starts, in addition to the `N + 1` deterministic ones.
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop when the scaled projected-gradient residual falls below this.
    pub tolerance: f64,
}

impl Default for SsSolverOptions {
    fn default() -> Self {
        Self { restarts: 16, seed: 0, max_iterations: 5000, tolerance: 1e-8 }
    }
}

/// A spread-spectrum auction instance.
#[derive(Debug, Clone, Serialize)]
pub struct SsScenario {
    /// Total power budget in watts.
    pub total_power: f64,
    pub phys: SsPhysical,
    pub profile: VirtualTypeProfile,
}

/// Power split for one reported profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsAllocation {
    /// Power per user in watts (`q`).
    pub power: Vec<f64>,
    /// `ψ̃_i(q)` per user.
    pub rates: Vec<f64>,
    pub virtual_types: Vec<f64>,
    /// `Σ_i w_i ψ̃_i(q)`.
    pub objective: f64,
    pub restarts_used: usize,
    /// Index of the winning start: 0 is the uniform split, `1..=N` put all
    /// power on one user, later ones are random starts.
    pub best_restart: usize,
    /// Starts that stopped on the residual test rather than the iteration cap.
    pub converged_restarts: usize,
    /// `‖q − Π(q + s∇)‖_∞ / P_total` with `s = P_total / ‖∇‖_∞`.
    pub kkt_residual_projected: f64,
    pub iterations: usize,
}

/// Allocation together with payments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsOutcome {
    #[serde(flatten)]
    pub allocation: SsAllocation,
    #[serde(flatten)]
    pub payments: Payments,
}

/// Euclidean projection of `y` onto `{x ≥ 0, Σ x ≤ cap}`.
pub fn project_capped_simplex(y: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    // Otherwise the cap binds: shift by τ so the positive parts sum to cap.
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let t = (prefix - cap) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    y.iter().map(|v| (v - tau).max(0.0)).collect()
}

struct LocalResult {
    x: Vec<f64>,
    value: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
}

impl SsScenario {
    pub fn new(total_power: f64, phys: SsPhysical, profile: VirtualTypeProfile) -> Result<Self> {
        if !(total_power.is_finite() && total_power > 0.0) {
            return Err(Error::Config(format!("total power {total_power} must be positive")));
        }
        if phys.num_users() != profile.num_users() {
            return Err(Error::Config(format!(
                "gain matrix covers {} users but there are {} type distributions",
                phys.num_users(),
                profile.num_users()
            )));
        }
        Ok(Self { total_power, phys, profile })
    }

    pub fn num_users(&self) -> usize {
        self.phys.num_users()
    }

    /// `Σ_i weights[i] ψ̃_i(powers)` and its gradient in the powers.
    pub fn objective_and_gradient(&self, weights: &[f64], powers: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.num_users();
        if weights.len() != n {
            return Err(Error::Domain(format!("{} weights for {n} users", weights.len())));
        }
        self.phys.interference_rate(powers, 0)?;
        let mut grad = vec![0.0; n];
        let value = self.phys.weighted_objective(powers, weights, &mut grad);
        Ok((value, grad))
    }

    /// Revenue-maximizing power split for reported types `reports`.
    pub fn allocate(&self, reports: &[f64], options: &SsSolverOptions) -> Result<SsAllocation> {
        let weights = self.profile.virtual_types(reports)?;
        self.maximize(weights, options)
    }

    /// Best local maximizer of `Σ weights[i] ψ̃_i(x)` over the capped simplex.
    pub fn maximize(&self, weights: Vec<f64>, options: &SsSolverOptions) -> Result<SsAllocation> {
        let n = self.num_users();
        if options.max_iterations == 0 || !(options.tolerance > 0.0) {
            return Err(Error::Config("solver needs a positive iteration cap and tolerance".into()));
        }
        if weights.iter().all(|&w| w <= 0.0) {
            // Every term is non-positive and zero power attains zero.
            return Ok(SsAllocation {
                power: vec![0.0; n],
                rates: vec![0.0; n],
                virtual_types: weights,
                objective: 0.0,
                restarts_used: 0,
                best_restart: 0,
                converged_restarts: 0,
                kkt_residual_projected: 0.0,
                iterations: 0,
            });
        }

        let starts = self.starts(options);
        let mut best: Option<(usize, LocalResult)> = None;
        let mut converged = 0;
        let mut iterations = 0;
        for (k, start) in starts.iter().enumerate() {
            let local = self.ascend(&weights, start.clone(), options)?;
            iterations += local.iterations;
            converged += local.converged as usize;
            if best.as_ref().is_none_or(|(_, b)| local.value > b.value) {
                best = Some((k, local));
            }
        }
        if converged == 0 {
            return Err(Error::Solver(format!(
                "all {} starts hit the {}-iteration cap",
                starts.len(),
                options.max_iterations
            )));
        }
        let (best_restart, local) = best.expect("at least one start");
        let rates = (0..n).map(|i| self.phys.rate_unchecked(&local.x, i)).collect();
        Ok(SsAllocation {
            power: local.x,
            rates,
            virtual_types: weights,
            objective: local.value,
            restarts_used: starts.len(),
            best_restart,
            converged_restarts: converged,
            kkt_residual_projected: local.residual,
            iterations,
        })
    }

    fn starts(&self, options: &SsSolverOptions) -> Vec<Vec<f64>> {
        let n = self.num_users();
        let p = self.total_power;
        let mut starts = vec![vec![p / n as f64; n]];
        for i in 0..n {
            let mut x = vec![0.0; n];
            x[i] = p;
            starts.push(x);
        }
        for r in 0..options.restarts {
            // Uniform on the capped simplex: normalized exponentials with a slack coordinate.
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r as u64);
            let e: Vec<f64> = (0..=n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = e.iter().sum();
            starts.push(e[..n].iter().map(|v| p * v / total).collect());
        }
        starts
    }

    fn residual(&self, x: &[f64], grad: &[f64]) -> f64 {
        let p = self.total_power;
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax == 0.0 {
            return 0.0;
        }
        let scale = p / gmax;
        let trial: Vec<f64> = x.iter().zip(grad).map(|(x, g)| x + scale * g).collect();
        let proj = project_capped_simplex(&trial, p);
        proj.iter().zip(x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / p
    }

    fn ascend(&self, weights: &[f64], mut x: Vec<f64>, options: &SsSolverOptions) -> Result<LocalResult> {
        let n = self.num_users();
        let p = self.total_power;
        let mut grad = vec![0.0; n];
        let mut value = self.phys.weighted_objective(&x, weights, &mut grad);
        let mut step = f64::NAN;
        for it in 0..options.max_iterations {
            if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!("gradient component {j} is {} at power {x:?}", grad[j])));
            }
            let residual = self.residual(&x, &grad);
            if residual <= options.tolerance {
                return Ok(LocalResult { x, value, residual, iterations: it, converged: true });
            }
            if !step.is_finite() {
                let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
                step = p / gmax;
            }
            let first = step;
            let accepted = loop {
                let trial: Vec<f64> = x.iter().zip(&grad).map(|(x, g)| x + step * g).collect();
                let y = project_capped_simplex(&trial, p);
                let fy = self.phys.weighted_value(&y, weights);
                let ascent: f64 = grad.iter().zip(y.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
                if fy >= value + ARMIJO * ascent {
                    break Some(y);
                }
                step *= 0.5;
                if step < first * MIN_STEP_RATIO || y == x {
                    break None;
                }
            };
            let Some(y) = accepted else {
                // No representable improvement remains along the projected arc.
                return Ok(LocalResult { x, value, residual, iterations: it, converged: true });
            };
            x = y;
            value = self.phys.weighted_objective(&x, weights, &mut grad);
            step *= 2.0;
        }
        let residual = self.residual(&x, &grad);
        Ok(LocalResult { x, value, residual, iterations: options.max_iterations, converged: residual <= options.tolerance })
    }

    fn rate_with_report(&self, user: usize, reports: &mut [f64], s: f64, options: &SsSolverOptions) -> Result<f64> {
        let saved = reports[user];
        reports[user] = s;
        let result = self.allocate(reports, options).map(|a| a.rates[user]);
        reports[user] = saved;
        result
    }

    /// Right-endpoint Riemann tax of `user`; decreasing integrand steps are
    /// returned in `nonmonotone` as local-optimum artifacts.
    pub fn user_tax(&self, user: usize, reports: &[f64], grid_m: usize, options: &SsSolverOptions) -> Result<TaxEstimate> {
        self.profile.virtual_types(reports)?;
        let theta_min = self.profile.distribution(user)?.min();
        let mut work = reports.to_vec();
        payment::riemann_tax(reports[user], theta_min, grid_m, |s| {
            self.rate_with_report(user, &mut work, s, options)
        })
    }

    pub fn payments(&self, reports: &[f64], grid_m: usize, options: &SsSolverOptions) -> Result<Payments> {
        let taxes = (0..self.num_users())
            .map(|user| self.user_tax(user, reports, grid_m, options))
            .collect::<Result<Vec<_>>>()?;
        Ok(Payments::from_taxes(taxes))
    }

    pub fn outcome(&self, reports: &[f64], grid_m: usize, options: &SsSolverOptions) -> Result<SsOutcome> {
        Ok(SsOutcome {
            allocation: self.allocate(reports, options)?,
            payments: self.payments(reports, grid_m, options)?,
        })
    }

    pub fn mechanism(&self, grid_m: usize, options: SsSolverOptions) -> SsMechanism<'_> {
        SsMechanism { scenario: self, grid_m, options }
    }

    pub fn interim(
        &self,
        user: usize,
        report: f64,
        grid_m: usize,
        options: SsSolverOptions,
        mc_samples: usize,
        seed: u64,
    ) -> Result<InterimEstimate> {
        montecarlo::interim_estimate(&self.mechanism(grid_m, options), user, report, mc_samples, seed)
    }

    pub fn expected_revenue(
        &self,
        grid_m: usize,
        options: SsSolverOptions,
        mc_samples: usize,
        seed: u64,
    ) -> Result<RevenueEstimate> {
        montecarlo::expected_revenue(&self.mechanism(grid_m, options), mc_samples, seed)
    }
}

/// The spread-spectrum mechanism with fixed tax grid and solver settings, so
/// the allocation is a deterministic function of the reports.
#[derive(Debug, Clone, Copy)]
pub struct SsMechanism<'a> {
    pub scenario: &'a SsScenario,
    pub grid_m: usize,
    pub options: SsSolverOptions,
}

impl Mechanism for SsMechanism<'_> {
    fn num_users(&self) -> usize {
        self.scenario.num_users()
    }

    fn type_distribution(&self, user: usize) -> &TypeDistribution {
        &self.scenario.profile.distributions[user]
    }

    fn rate(&self, user: usize, reports: &[f64]) -> Result<f64> {
        Ok(self.scenario.allocate(reports, &self.options)?.rates[user])
    }

    fn user_outcome(&self, user: usize, reports: &[f64]) -> Result<UserOutcome> {
        let tax = self.scenario.user_tax(user, reports, self.grid_m, &self.options)?;
        Ok(UserOutcome {
            rate: tax.rate,
            payment: tax.payment,
            tax_error_bound: tax.error_bound,
            nonmonotone_steps: tax.nonmonotone.len(),
        })
    }
}

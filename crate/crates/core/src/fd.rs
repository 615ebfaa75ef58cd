//! Optimal frequency-division mechanism.
//!
//! For reported types θ the seller splits `W` Hz to maximize
//! `Σ_i w_i(θ_i) ψ_i(x_i)` subject to `Σ x_i ≤ W`. Users with non-positive
//! virtual type get nothing. The rest share the band by water-filling: each
//! active user's weighted marginal rate `w_i ψ_i'(x_i)` equals a common
//! multiplier λ, and since `ψ_i' > 0` everywhere the budget is exhausted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, UserOutcome};
use crate::montecarlo::{self, InterimEstimate, RevenueEstimate};
use crate::payment::{self, Payments, TaxEstimate};
use crate::rate::FdUserPhysical;
use crate::types::{TypeDistribution, VirtualTypeProfile};

/// Stop the multiplier search once `|Σ x_i − W| ≤ BUDGET_TARGET·W`.
const BUDGET_TARGET: f64 = 1e-12;
/// Fail if the multiplier search ends with a budget gap above this.
const BUDGET_TOLERANCE: f64 = 1e-9;
/// The λ bracket's upper end is where every user's allocation is below `W·X_FLOOR`.
const X_FLOOR: f64 = 1e-9;
const MAX_MULTIPLIER_ITERATIONS: usize = 200;

/// A frequency-division auction instance.
#[derive(Debug, Clone, Serialize)]
pub struct FdScenario {
    /// Total bandwidth `W` in Hz.
    pub bandwidth: f64,
    pub users: Vec<FdUserPhysical>,
    pub profile: VirtualTypeProfile,
}

/// Bandwidth split for one reported profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdAllocation {
    /// Bandwidth per user in Hz (`q`).
    pub bandwidth: Vec<f64>,
    /// `ψ_i(q_i)` per user.
    pub rates: Vec<f64>,
    pub virtual_types: Vec<f64>,
    /// Common weighted marginal rate of the active users; zero if none.
    pub multiplier: f64,
    /// `max_i |w_i ψ_i'(q_i) − λ| / λ` over active users.
    pub kkt_residual: f64,
    /// `Σ q_i − W`, or `Σ q_i` when nobody is active.
    pub budget_residual: f64,
    /// Users with positive virtual type.
    pub active_set: Vec<usize>,
    /// `Σ_i w_i ψ_i(q_i)`.
    pub objective: f64,
    pub iterations: usize,
}

/// Allocation together with payments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdOutcome {
    #[serde(flatten)]
    pub allocation: FdAllocation,
    #[serde(flatten)]
    pub payments: Payments,
}

impl FdScenario {
    pub fn new(bandwidth: f64, users: Vec<FdUserPhysical>, profile: VirtualTypeProfile) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!("bandwidth {bandwidth} must be positive")));
        }
        if users.is_empty() {
            return Err(Error::Config("at least one user is required".into()));
        }
        if users.len() != profile.num_users() {
            return Err(Error::Config(format!(
                "{} physical users but {} type distributions",
                users.len(),
                profile.num_users()
            )));
        }
        Ok(Self { bandwidth, users, profile })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Revenue-maximizing bandwidth split for reported types `reports`.
    pub fn allocate(&self, reports: &[f64]) -> Result<FdAllocation> {
        let weights = self.profile.virtual_types(reports)?;
        self.water_fill(weights)
    }

    /// Maximizes `Σ weights[i] ψ_i(x_i)` over `{x ≥ 0, Σ x ≤ W}`.
    pub fn water_fill(&self, weights: Vec<f64>) -> Result<FdAllocation> {
        let n = self.num_users();
        let budget = self.bandwidth;
        let active: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
        let mut q = vec![0.0; n];
        let mut multiplier = 0.0;
        let mut iterations = 0;

        match active.as_slice() {
            [] => {}
            &[only] => {
                q[only] = budget;
                multiplier = weights[only] * self.users[only].slope_unchecked(budget);
            }
            _ => {
                let (lambda, its) = self.solve_multiplier(&weights, &active, &mut q)?;
                multiplier = lambda;
                iterations = its;
            }
        }

        let rates: Vec<f64> = self.users.iter().zip(&q).map(|(u, &x)| u.rate_unchecked(x)).collect();
        // Allocations that underflow to zero satisfy w ψ'(0) = ∞ ≥ λ and are skipped.
        let kkt_residual = active
            .iter()
            .filter(|&&i| q[i] > 0.0)
            .map(|&i| (weights[i] * self.users[i].slope_unchecked(q[i]) - multiplier).abs() / multiplier)
            .fold(0.0, f64::max);
        let total: f64 = q.iter().sum();
        let budget_residual = if active.is_empty() { total } else { total - budget };
        let objective = weights.iter().zip(&rates).map(|(w, r)| w * r).sum();
        Ok(FdAllocation {
            bandwidth: q,
            rates,
            virtual_types: weights,
            multiplier,
            kkt_residual,
            budget_residual,
            active_set: active,
            objective,
            iterations,
        })
    }

    /// Finds λ with `Σ_{i active} x_i(λ) = W` where `w_i ψ_i'(x_i(λ)) = λ`.
    /// Safeguarded Newton in `ln λ`, falling back to bisection of the bracket.
    fn solve_multiplier(&self, weights: &[f64], active: &[usize], q: &mut [f64]) -> Result<(f64, usize)> {
        let budget = self.bandwidth;
        let floor = budget * X_FLOOR;
        // At λ_lo every active x_i ≥ W; at λ_hi every x_i ≤ W·X_FLOOR.
        let mut lo = active
            .iter()
            .map(|&i| weights[i] * self.users[i].slope_unchecked(budget))
            .fold(f64::INFINITY, f64::min);
        let mut hi = active
            .iter()
            .map(|&i| weights[i] * self.users[i].slope_unchecked(floor))
            .fold(0.0, f64::max);
        let share = budget / active.len() as f64;
        for &i in active {
            q[i] = share;
        }
        let start: f64 = active
            .iter()
            .map(|&i| (weights[i] * self.users[i].slope_unchecked(share)).ln())
            .sum::<f64>()
            / active.len() as f64;
        let mut log_lambda = start.clamp(lo.ln(), hi.ln());

        let mut gap = f64::INFINITY;
        for it in 1..=MAX_MULTIPLIER_ITERATIONS {
            let lambda = log_lambda.exp();
            let mut total = 0.0;
            let mut d_total = 0.0;
            for &i in active {
                let x = self.users[i].bandwidth_for_slope(lambda / weights[i], q[i])?;
                q[i] = x;
                total += x;
                d_total += 1.0 / (weights[i] * self.users[i].curvature_unchecked(x));
            }
            gap = total - budget;
            if gap.abs() <= BUDGET_TARGET * budget {
                return Ok((lambda, it));
            }
            if gap > 0.0 {
                lo = lambda;
            } else {
                hi = lambda;
            }
            let (log_lo, log_hi) = (lo.ln(), hi.ln());
            let mut next = log_lambda - gap / (lambda * d_total);
            if !(next > log_lo && next < log_hi) {
                next = 0.5 * (log_lo + log_hi);
            }
            if (next - log_lambda).abs() <= 1e-15 * log_lambda.abs().max(1.0) {
                break;
            }
            log_lambda = next;
        }
        if gap.abs() <= BUDGET_TOLERANCE * budget {
            Ok((log_lambda.exp(), MAX_MULTIPLIER_ITERATIONS))
        } else {
            Err(Error::Solver(format!(
                "water-filling stalled: budget gap {gap:e} with λ bracket [{lo:e}, {hi:e}]"
            )))
        }
    }

    /// Rate of `user` when it reports `s` and the others report `reports`.
    fn rate_with_report(&self, user: usize, reports: &mut [f64], s: f64) -> Result<f64> {
        let saved = reports[user];
        reports[user] = s;
        // Non-positive virtual type means zero bandwidth, no solve needed.
        let result = if self.profile.virtual_type(user, s)? <= 0.0 {
            Ok(0.0)
        } else {
            self.allocate(reports).map(|a| a.rates[user])
        };
        reports[user] = saved;
        result
    }

    fn check_reports(&self, reports: &[f64]) -> Result<()> {
        self.profile.virtual_types(reports).map(|_| ())
    }

    /// Right-endpoint Riemann tax of `user`.
    pub fn user_tax(&self, user: usize, reports: &[f64], grid_m: usize) -> Result<TaxEstimate> {
        self.check_reports(reports)?;
        let theta_min = self.profile.distribution(user)?.min();
        let mut work = reports.to_vec();
        payment::riemann_tax(reports[user], theta_min, grid_m, |s| {
            self.rate_with_report(user, &mut work, s)
        })
    }

    /// Tax of every user via the right-endpoint Riemann sum.
    pub fn payments(&self, reports: &[f64], grid_m: usize) -> Result<Payments> {
        let taxes = (0..self.num_users())
            .map(|user| self.user_tax(user, reports, grid_m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Payments::from_taxes(taxes))
    }

    /// Tax of every user via the base-amount-plus-`Z` decomposition; an
    /// independent route to the same quantity as [`FdScenario::payments`].
    pub fn payments_via_z(&self, reports: &[f64], grid: usize) -> Result<Vec<TaxEstimate>> {
        self.check_reports(reports)?;
        (0..self.num_users())
            .map(|user| {
                let theta_min = self.profile.distribution(user)?.min();
                let mut work = reports.to_vec();
                payment::z_decomposition_tax(reports[user], theta_min, grid, |s| {
                    self.rate_with_report(user, &mut work, s)
                })
            })
            .collect()
    }

    pub fn outcome(&self, reports: &[f64], grid_m: usize) -> Result<FdOutcome> {
        Ok(FdOutcome { allocation: self.allocate(reports)?, payments: self.payments(reports, grid_m)? })
    }

    pub fn mechanism(&self, grid_m: usize) -> FdMechanism<'_> {
        FdMechanism { scenario: self, grid_m }
    }

    /// Monte Carlo estimate of `Q_i(r)` and `T_i(r)`.
    pub fn interim(&self, user: usize, report: f64, grid_m: usize, mc_samples: usize, seed: u64) -> Result<InterimEstimate> {
        montecarlo::interim_estimate(&self.mechanism(grid_m), user, report, mc_samples, seed)
    }

    /// Expected revenue estimated from payments and from virtual surplus.
    pub fn expected_revenue(&self, grid_m: usize, mc_samples: usize, seed: u64) -> Result<RevenueEstimate> {
        montecarlo::expected_revenue(&self.mechanism(grid_m), mc_samples, seed)
    }
}

/// The frequency-division mechanism with a fixed tax grid.
#[derive(Debug, Clone, Copy)]
pub struct FdMechanism<'a> {
    pub scenario: &'a FdScenario,
    pub grid_m: usize,
}

impl Mechanism for FdMechanism<'_> {
    fn num_users(&self) -> usize {
        self.scenario.num_users()
    }

    fn type_distribution(&self, user: usize) -> &TypeDistribution {
        &self.scenario.profile.distributions[user]
    }

    fn rate(&self, user: usize, reports: &[f64]) -> Result<f64> {
        let mut work = reports.to_vec();
        self.scenario.rate_with_report(user, &mut work, reports[user])
    }

    fn user_outcome(&self, user: usize, reports: &[f64]) -> Result<UserOutcome> {
        let tax = self.scenario.user_tax(user, reports, self.grid_m)?;
        Ok(UserOutcome {
            rate: tax.rate,
            payment: tax.payment,
            tax_error_bound: tax.error_bound,
            nonmonotone_steps: tax.nonmonotone.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::GainDistribution;

    fn det_user(h: f64) -> FdUserPhysical {
        FdUserPhysical::new(GainDistribution::Deterministic { value: h }, 1.0, 1.0).unwrap()
    }

    fn scenario(gains: &[f64], types: Vec<TypeDistribution>, w: f64) -> FdScenario {
        let profile = VirtualTypeProfile::certify(types, 1024, false).unwrap();
        FdScenario::new(w, gains.iter().map(|&h| det_user(h)).collect(), profile).unwrap()
    }

    fn unit_uniform(n: usize) -> Vec<TypeDistribution> {
        vec![TypeDistribution::uniform(0.0, 1.0).unwrap(); n]
    }

    #[test]
    fn single_active_user_takes_everything() {
        let s = scenario(&[1.3], unit_uniform(1), 2.0);
        let a = s.allocate(&[0.8]).unwrap();
        assert_eq!(a.bandwidth, vec![2.0]);
        assert_eq!(a.active_set, vec![0]);
    }

    #[test]
    fn negative_virtual_types_get_nothing_and_pay_nothing() {
        let s = scenario(&[1.0, 2.0, 0.5], unit_uniform(3), 1.0);
        let theta = [0.1, 0.3, 0.45];
        let o = s.outcome(&theta, 64).unwrap();
        assert_eq!(o.allocation.bandwidth, vec![0.0; 3]);
        assert_eq!(o.payments.payments, vec![0.0; 3]);
        assert!(o.allocation.active_set.is_empty());
    }

    #[test]
    fn zero_virtual_type_is_inactive() {
        let s = scenario(&[1.0, 1.0], unit_uniform(2), 1.0);
        let a = s.allocate(&[0.5, 0.9]).unwrap();
        assert_eq!(a.bandwidth[0], 0.0);
        assert_eq!(a.bandwidth[1], 1.0);
    }

    #[test]
    fn symmetric_users_split_evenly() {
        let s = scenario(&[1.0, 1.0], unit_uniform(2), 3.0);
        let a = s.allocate(&[0.8, 0.8]).unwrap();
        assert!((a.bandwidth[0] - 1.5).abs() < 1e-9);
        assert!((a.bandwidth[1] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn water_filling_satisfies_kkt_and_budget() {
        let s = scenario(&[0.2, 1.0, 5.0], unit_uniform(3), 10.0);
        let a = s.allocate(&[0.6, 0.95, 0.7]).unwrap();
        assert_eq!(a.active_set, vec![0, 1, 2]);
        assert!(a.kkt_residual <= 1e-6, "{}", a.kkt_residual);
        assert!(a.budget_residual.abs() <= 1e-6 * 10.0);
        assert!(a.bandwidth.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn tax_at_type_minimum_is_base_amount() {
        let types = vec![TypeDistribution::uniform(0.6, 1.0).unwrap(); 2];
        let s = scenario(&[1.0, 2.0], types, 1.0);
        let reports = [0.6, 0.9];
        let p = s.payments(&reports, 64).unwrap();
        let a = s.allocate(&reports).unwrap();
        assert_eq!(p.payments[0], 0.6 * a.rates[0]);
    }

    #[test]
    fn single_user_tax_two_routes_agree() {
        // N=1, uniform [0,1]: rate jumps from 0 to ψ(W) at θ = 1/2, so the
        // exact tax for θ > 1/2 is ψ(W)/2.
        let s = scenario(&[1.0], unit_uniform(1), 1.0);
        let psi_w = 2f64.ln();
        for &theta in &[0.55, 0.8, 1.0] {
            let r = s.user_tax(0, &[theta], 64).unwrap();
            let z = &s.payments_via_z(&[theta], 64).unwrap()[0];
            let exact = psi_w / 2.0;
            assert!(r.payment <= exact + 1e-12);
            assert!(exact - r.payment <= r.error_bound + 1e-12);
            assert!((z.payment - exact).abs() <= z.error_bound + 1e-12);
            assert!((r.payment - z.payment).abs() <= r.error_bound + z.error_bound + 1e-12);
        }
    }

    #[test]
    fn reports_outside_support_rejected() {
        let s = scenario(&[1.0], unit_uniform(1), 1.0);
        assert!(matches!(s.allocate(&[1.5]), Err(Error::Domain(_))));
        assert!(matches!(s.allocate(&[0.5, 0.5]), Err(Error::Domain(_))));
    }
}

//! The interface the Monte Carlo estimators and verifiers work against.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::TypeDistribution;

/// What one user sees for one reported profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    /// Expected rate delivered to the user.
    pub rate: f64,
    pub payment: f64,
    /// Bound on how far `payment` may fall below the exact tax.
    pub tax_error_bound: f64,
    /// Number of tax-grid steps where the rate integrand decreased.
    pub nonmonotone_steps: usize,
}

/// Every user's outcome for one reported profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileOutcome {
    pub rates: Vec<f64>,
    pub payments: Vec<f64>,
    pub tax_error_bounds: Vec<f64>,
    pub nonmonotone_steps: usize,
}

/// A direct mechanism: users report types, the mechanism returns rates and
/// payments. Implementations must be deterministic functions of the reports.
pub trait Mechanism: Sync {
    fn num_users(&self) -> usize;

    fn type_distribution(&self, user: usize) -> &TypeDistribution;

    /// Rate of `user` under the allocation chosen for `reports`.
    fn rate(&self, user: usize, reports: &[f64]) -> Result<f64>;

    /// Rate and payment of `user` for `reports`.
    fn user_outcome(&self, user: usize, reports: &[f64]) -> Result<UserOutcome>;

    fn profile_outcome(&self, reports: &[f64]) -> Result<ProfileOutcome> {
        let n = self.num_users();
        let mut out = ProfileOutcome {
            rates: Vec::with_capacity(n),
            payments: Vec::with_capacity(n),
            tax_error_bounds: Vec::with_capacity(n),
            nonmonotone_steps: 0,
        };
        for user in 0..n {
            let o = self.user_outcome(user, reports)?;
            out.rates.push(o.rate);
            out.payments.push(o.payment);
            out.tax_error_bounds.push(o.tax_error_bound);
            out.nonmonotone_steps += o.nonmonotone_steps;
        }
        Ok(out)
    }
}

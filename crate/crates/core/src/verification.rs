//! Empirical checks of incentive compatibility, individual rationality,
//! interim monotonicity and the interim payment identity.
//!
//! Every check for a user runs on one table of outcomes: the same draws of
//! the other users' types are reused for every report (common random
//! numbers), so differences between reports are paired per draw and the
//! truthful row compared with itself is exactly zero.
//!
//! Tolerances are `ε + z·se` where `ε` is the tax-approximation bound the
//! mechanism reports and `se` the standard error of the paired quantity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, UserOutcome};
use crate::montecarlo::{distributions, others_draws, MeanEstimate};
use crate::types::TypeDistribution;

/// Default number of grid points for types and misreports.
pub const DEFAULT_GRID_POINTS: usize = 17;
/// Default statistical slack in standard errors.
pub const DEFAULT_SIGMAS: f64 = 3.0;
/// Default number of trapezoid cells per misreport-grid cell in the identity check.
pub const DEFAULT_IDENTITY_REFINEMENT: usize = 8;

/// Relative allowance for floating-point roundoff, applied to the size of
/// the quantities being compared so noise-free checks are not failed by
/// the last bits.
const ROUNDOFF: f64 = 1e-12;

/// Monte Carlo settings shared by all checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub mc_samples: usize,
    pub seed: u64,
    pub sigmas: f64,
    /// Added to every tolerance; zero by default.
    pub extra_tolerance: f64,
    pub identity_refinement: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mc_samples: crate::montecarlo::DEFAULT_MC_SAMPLES,
            seed: 0,
            sigmas: DEFAULT_SIGMAS,
            extra_tolerance: 0.0,
            identity_refinement: DEFAULT_IDENTITY_REFINEMENT,
        }
    }
}

/// `points` equispaced values spanning the support, endpoints included.
pub fn equispaced(dist: &TypeDistribution, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Config(format!("grid needs at least 2 points, got {points}")));
    }
    let (lo, hi) = (dist.min(), dist.max());
    Ok((0..points)
        .map(|k| if k + 1 == points { hi } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 })
        .collect())
}

/// Equispaced grids for every user of `mech`.
pub fn default_grids<M: Mechanism + ?Sized>(mech: &M, points: usize) -> Result<Vec<Vec<f64>>> {
    (0..mech.num_users()).map(|i| equispaced(mech.type_distribution(i), points)).collect()
}

/// Outcomes of one user for every report in `reports` and every draw of the
/// other users' types, `outcomes[report][draw]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimTable {
    pub user: usize,
    pub reports: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
    pub outcomes: Vec<Vec<UserOutcome>>,
}

impl InterimTable {
    pub fn build<M: Mechanism + ?Sized>(
        mech: &M,
        user: usize,
        reports: &[f64],
        options: &VerifyOptions,
    ) -> Result<Self> {
        check_user(mech, user)?;
        let mut reports = reports.to_vec();
        reports.sort_by(f64::total_cmp);
        reports.dedup();
        check_reports(mech.type_distribution(user), &reports)?;
        let draws = others_draws(&distributions(mech), options.mc_samples, options.seed)?;
        let cells: Vec<(usize, usize)> = (0..reports.len())
            .flat_map(|r| (0..draws.len()).map(move |k| (r, k)))
            .collect();
        let flat = cells
            .into_par_iter()
            .map(|(r, k)| {
                let mut theta = draws[k].clone();
                theta[user] = reports[r];
                mech.user_outcome(user, &theta).map_err(|e| at_report(e, user, reports[r]))
            })
            .collect::<Result<Vec<_>>>()?;
        let outcomes = flat.chunks(draws.len()).map(<[UserOutcome]>::to_vec).collect();
        Ok(Self { user, reports, draws, outcomes })
    }

    fn index_of(&self, report: f64) -> Result<usize> {
        self.reports
            .iter()
            .position(|&r| r == report)
            .ok_or_else(|| Error::Domain(format!("report {report} is not in the table")))
    }

    /// `U(θ, r) = θ v(r) − t(r)` per draw.
    fn utilities(&self, theta: f64, r: usize) -> Vec<f64> {
        self.outcomes[r].iter().map(|o| theta * o.rate - o.payment).collect()
    }

    /// Mean of `|θ v(r)| + |t(r)|`.
    fn magnitude(&self, theta: f64, r: usize) -> f64 {
        self.outcomes[r].iter().map(|o| (theta * o.rate).abs() + o.payment.abs()).sum::<f64>() / self.draws.len() as f64
    }

    fn mean_eps(&self, r: usize) -> f64 {
        MeanEstimate::from_samples(&self.outcomes[r].iter().map(|o| o.tax_error_bound).collect::<Vec<_>>()).mean
    }

    fn nonmonotone_steps(&self) -> usize {
        self.outcomes.iter().flatten().map(|o| o.nonmonotone_steps).sum()
    }
}

fn check_user<M: Mechanism + ?Sized>(mech: &M, user: usize) -> Result<()> {
    if user < mech.num_users() {
        Ok(())
    } else {
        Err(Error::Domain(format!("user {user} out of range")))
    }
}

fn check_reports(dist: &TypeDistribution, reports: &[f64]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Config("report grid is empty".into()));
    }
    if let Some(r) = reports.iter().find(|&&r| !(r >= dist.min() && r <= dist.max())) {
        return Err(Error::Domain(format!(
            "grid point {r} outside the type support [{}, {}]",
            dist.min(),
            dist.max()
        )));
    }
    Ok(())
}

fn at_report(e: Error, user: usize, report: f64) -> Error {
    match e {
        Error::Solver(m) => Error::Solver(format!("user {user}, report {report}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("user {user}, report {report}: {m}")),
        other => other,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn paired(a: &[f64], b: &[f64]) -> MeanEstimate {
    MeanEstimate::from_samples(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// One misreport of one true type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub report: f64,
    /// `U(θ, r)`.
    pub utility: MeanEstimate,
    /// `U(θ, r) − U(θ, θ)`, paired per draw.
    pub gain: MeanEstimate,
    /// `ε + z·se` for this misreport, plus a roundoff allowance.
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub user: usize,
    pub theta: f64,
    pub deviations: Vec<Deviation>,
    /// Largest mean gain over the misreport grid.
    pub best_deviation_gain: f64,
    pub best_report: f64,
    /// Largest mean tax-approximation bound over the misreports.
    pub eps_tax: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrEntry {
    pub user: usize,
    pub theta: f64,
    /// Truthful interim utility `V(θ)`.
    pub utility: MeanEstimate,
    pub eps_tax: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrReport {
    pub entries: Vec<IrEntry>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityEntry {
    pub report: f64,
    /// `T(r)`.
    pub expected_payment: MeanEstimate,
    /// `r Q(r) − ∫ Q`, the payment the identity predicts with `K = 0`.
    pub predicted_payment: MeanEstimate,
    /// `T(r) − r Q(r) + ∫ Q`, paired per draw.
    pub residual: MeanEstimate,
    pub eps_tax: f64,
    /// Trapezoid error bound for `∫ Q`, valid when the rate is monotone.
    pub quadrature_bound: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub user: usize,
    pub entries: Vec<IdentityEntry>,
    pub nonmonotone_steps: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneStep {
    pub from: f64,
    pub to: f64,
    /// `Q(to) − Q(from)`, paired per draw.
    pub increase: MeanEstimate,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub user: usize,
    pub reports: Vec<f64>,
    pub expected_rate: Vec<MeanEstimate>,
    pub steps: Vec<MonotoneStep>,
    pub nonmonotone_steps: usize,
    pub passed: bool,
}

fn ic_from_table(table: &InterimTable, theta: f64, misreports: &[f64], options: &VerifyOptions) -> Result<IcReport> {
    let truth_idx = table.index_of(theta)?;
    let truth = table.utilities(theta, truth_idx);
    let mut deviations = Vec::with_capacity(misreports.len());
    for &r in misreports {
        let idx = table.index_of(r)?;
        let utility = table.utilities(theta, idx);
        let gain = paired(&utility, &truth);
        let tolerance = table.mean_eps(idx)
            + options.extra_tolerance
            + options.sigmas * gain.std_error
            + ROUNDOFF * (table.magnitude(theta, idx) + table.magnitude(theta, truth_idx));
        deviations.push(Deviation {
            report: r,
            utility: MeanEstimate::from_samples(&utility),
            gain,
            tolerance,
            passed: gain.mean <= tolerance,
        });
    }
    let best = deviations
        .iter()
        .fold(None::<&Deviation>, |b, d| match b {
            Some(b) if b.gain.mean >= d.gain.mean => Some(b),
            _ => Some(d),
        })
        .expect("non-empty misreport grid");
    Ok(IcReport {
        user: table.user,
        theta,
        best_deviation_gain: best.gain.mean,
        best_report: best.report,
        eps_tax: misreports
            .iter()
            .map(|&r| table.index_of(r).map(|i| table.mean_eps(i)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max),
        passed: deviations.iter().all(|d| d.passed),
        deviations,
    })
}

fn ir_from_table(table: &InterimTable, thetas: &[f64], options: &VerifyOptions) -> Result<Vec<IrEntry>> {
    thetas
        .iter()
        .map(|&theta| {
            let idx = table.index_of(theta)?;
            let utility = MeanEstimate::from_samples(&table.utilities(theta, idx));
            let eps_tax = table.mean_eps(idx);
            Ok(IrEntry {
                user: table.user,
                theta,
                utility,
                eps_tax,
                passed: utility.mean
                    >= -(eps_tax
                        + options.extra_tolerance
                        + options.sigmas * utility.std_error
                        + ROUNDOFF * table.magnitude(theta, idx)),
            })
        })
        .collect()
}

fn monotone_from_table(table: &InterimTable, options: &VerifyOptions) -> MonotoneReport {
    let rates: Vec<Vec<f64>> = table.outcomes.iter().map(|row| row.iter().map(|o| o.rate).collect()).collect();
    let steps: Vec<MonotoneStep> = (1..rates.len())
        .map(|j| {
            let increase = paired(&rates[j], &rates[j - 1]);
            let size = mean(&rates[j]).abs() + mean(&rates[j - 1]).abs();
            MonotoneStep {
                from: table.reports[j - 1],
                to: table.reports[j],
                increase,
                passed: increase.mean >= -(options.extra_tolerance + options.sigmas * increase.std_error + ROUNDOFF * size),
            }
        })
        .collect();
    MonotoneReport {
        user: table.user,
        reports: table.reports.clone(),
        expected_rate: rates.iter().map(|r| MeanEstimate::from_samples(r)).collect(),
        passed: steps.iter().all(|s| s.passed),
        steps,
        nonmonotone_steps: table.nonmonotone_steps(),
    }
}

/// Rates of `table.user` on a refinement of `[θ_min] ∪ reports`, per draw,
/// with the cumulative trapezoid integral and its monotone error bound at
/// each table report.
fn integrated_rates<M: Mechanism + ?Sized>(
    mech: &M,
    table: &InterimTable,
    refinement: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if refinement < 1 {
        return Err(Error::Config("identity refinement must be at least 1".into()));
    }
    let user = table.user;
    let theta_min = mech.type_distribution(user).min();
    let mut knots = vec![theta_min];
    knots.extend(table.reports.iter().copied().filter(|&r| r > theta_min));
    let mut fine = vec![theta_min];
    let mut marks = Vec::with_capacity(knots.len());
    marks.push(0);
    for w in knots.windows(2) {
        for k in 1..=refinement {
            fine.push(if k == refinement { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / refinement as f64 });
        }
        marks.push(fine.len() - 1);
    }

    let per_draw = table
        .draws
        .par_iter()
        .map(|draw| {
            let mut theta = draw.clone();
            let mut rates = Vec::with_capacity(fine.len());
            for &s in &fine {
                theta[user] = s;
                rates.push(mech.rate(user, &theta).map_err(|e| at_report(e, user, s))?);
            }
            let mut integral = vec![0.0; fine.len()];
            let mut bound = vec![0.0; fine.len()];
            for j in 1..fine.len() {
                let h = fine[j] - fine[j - 1];
                integral[j] = integral[j - 1] + 0.5 * h * (rates[j] + rates[j - 1]);
                bound[j] = bound[j - 1] + 0.5 * h * (rates[j] - rates[j - 1]).abs();
            }
            Ok((integral, bound))
        })
        .collect::<Result<Vec<_>>>()?;

    // Map each table report to its position in `fine`.
    let position = |r: f64| {
        if r == theta_min {
            0
        } else {
            marks[knots.iter().position(|&k| k == r).expect("report is a knot")]
        }
    };
    let mut integrals = vec![Vec::with_capacity(table.draws.len()); table.reports.len()];
    let mut bounds = vec![Vec::with_capacity(table.draws.len()); table.reports.len()];
    for (integral, bound) in &per_draw {
        for (j, &r) in table.reports.iter().enumerate() {
            let p = position(r);
            integrals[j].push(integral[p]);
            bounds[j].push(bound[p]);
        }
    }
    Ok((integrals, bounds))
}

fn identity_from_table<M: Mechanism + ?Sized>(
    mech: &M,
    table: &InterimTable,
    options: &VerifyOptions,
) -> Result<IdentityReport> {
    let (integrals, bounds) = integrated_rates(mech, table, options.identity_refinement)?;
    let mut entries = Vec::with_capacity(table.reports.len());
    for (j, &r) in table.reports.iter().enumerate() {
        let row = &table.outcomes[j];
        let pays: Vec<f64> = row.iter().map(|o| o.payment).collect();
        let predicted: Vec<f64> = row.iter().zip(&integrals[j]).map(|(o, i)| r * o.rate - i).collect();
        let residual = paired(&pays, &predicted);
        let eps_tax = table.mean_eps(j);
        let quadrature_bound = MeanEstimate::from_samples(&bounds[j]).mean;
        let size = mean(&pays).abs() + mean(&predicted.iter().map(|p| p.abs()).collect::<Vec<_>>());
        let tolerance = eps_tax
            + quadrature_bound
            + options.extra_tolerance
            + options.sigmas * residual.std_error
            + ROUNDOFF * size;
        entries.push(IdentityEntry {
            report: r,
            expected_payment: MeanEstimate::from_samples(&pays),
            predicted_payment: MeanEstimate::from_samples(&predicted),
            residual,
            eps_tax,
            quadrature_bound,
            tolerance,
            passed: residual.mean.abs() <= tolerance,
        });
    }
    Ok(IdentityReport {
        user: table.user,
        passed: entries.iter().all(|e| e.passed),
        entries,
        nonmonotone_steps: table.nonmonotone_steps(),
    })
}

fn union(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().chain(b).copied().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn check_grids<M: Mechanism + ?Sized>(mech: &M, grids: &[Vec<f64>], what: &str) -> Result<()> {
    if grids.len() != mech.num_users() {
        return Err(Error::Config(format!(
            "{} {what} grids for {} users",
            grids.len(),
            mech.num_users()
        )));
    }
    Ok(())
}

/// For every user and every true type in `theta_grids[user]`, the interim
/// gain from each misreport in `report_grids[user]`.
pub fn verify_ic<M: Mechanism + ?Sized>(
    mech: &M,
    theta_grids: &[Vec<f64>],
    report_grids: &[Vec<f64>],
    options: &VerifyOptions,
) -> Result<Vec<IcReport>> {
    check_grids(mech, theta_grids, "type")?;
    check_grids(mech, report_grids, "misreport")?;
    let mut out = Vec::new();
    for user in 0..mech.num_users() {
        check_reports(mech.type_distribution(user), &theta_grids[user])?;
        let table = InterimTable::build(mech, user, &union(&theta_grids[user], &report_grids[user]), options)?;
        for &theta in &theta_grids[user] {
            out.push(ic_from_table(&table, theta, &report_grids[user], options)?);
        }
    }
    Ok(out)
}

/// Truthful interim utility at every grid type of every user.
pub fn verify_ir<M: Mechanism + ?Sized>(
    mech: &M,
    theta_grids: &[Vec<f64>],
    options: &VerifyOptions,
) -> Result<IrReport> {
    check_grids(mech, theta_grids, "type")?;
    let mut entries = Vec::new();
    for user in 0..mech.num_users() {
        let table = InterimTable::build(mech, user, &theta_grids[user], options)?;
        entries.extend(ir_from_table(&table, &theta_grids[user], options)?);
    }
    Ok(IrReport { passed: entries.iter().all(|e| e.passed), entries })
}

/// `T(r) = r Q(r) − ∫_{θ_min}^r Q(s) ds` for `user` at every report in `reports`.
pub fn verify_payment_identity<M: Mechanism + ?Sized>(
    mech: &M,
    user: usize,
    reports: &[f64],
    options: &VerifyOptions,
) -> Result<IdentityReport> {
    let table = InterimTable::build(mech, user, reports, options)?;
    identity_from_table(mech, &table, options)
}

/// Whether `Q(r)` is non-decreasing across `reports`.
pub fn verify_monotone_interim<M: Mechanism + ?Sized>(
    mech: &M,
    user: usize,
    reports: &[f64],
    options: &VerifyOptions,
) -> Result<MonotoneReport> {
    let table = InterimTable::build(mech, user, reports, options)?;
    Ok(monotone_from_table(&table, options))
}

/// Which checks [`verify_suite`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Ic,
    Ir,
    Identity,
    Monotone,
    All,
}

impl Suite {
    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

/// Results of [`verify_suite`]; checks that were not requested are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub ic: Vec<IcReport>,
    pub ir: Option<IrReport>,
    pub identity: Vec<IdentityReport>,
    pub monotone: Vec<MonotoneReport>,
    pub passed: bool,
}

/// Runs the requested checks using the same grid as both true types and
/// misreports, building a single outcome table per user.
pub fn verify_suite<M: Mechanism + ?Sized>(
    mech: &M,
    suite: Suite,
    grids: &[Vec<f64>],
    options: &VerifyOptions,
) -> Result<VerificationReport> {
    check_grids(mech, grids, "report")?;
    let mut report = VerificationReport { ic: vec![], ir: None, identity: vec![], monotone: vec![], passed: true };
    let mut ir_entries = Vec::new();
    for (user, grid) in grids.iter().enumerate() {
        let table = InterimTable::build(mech, user, grid, options)?;
        if suite.includes(Suite::Ic) {
            for &theta in &table.reports {
                report.ic.push(ic_from_table(&table, theta, &table.reports, options)?);
            }
        }
        if suite.includes(Suite::Ir) {
            ir_entries.extend(ir_from_table(&table, &table.reports, options)?);
        }
        if suite.includes(Suite::Identity) {
            report.identity.push(identity_from_table(mech, &table, options)?);
        }
        if suite.includes(Suite::Monotone) {
            report.monotone.push(monotone_from_table(&table, options));
        }
    }
    if suite.includes(Suite::Ir) {
        report.ir = Some(IrReport { passed: ir_entries.iter().all(|e| e.passed), entries: ir_entries });
    }
    report.passed = report.ic.iter().all(|r| r.passed)
        && report.ir.as_ref().is_none_or(|r| r.passed)
        && report.identity.iter().all(|r| r.passed)
        && report.monotone.iter().all(|r| r.passed);
    Ok(report)
}

/// Mechanisms that violate the guarantees on purpose, to show the checks can fail.
pub mod adversarial {
    use super::*;

    /// Fixed rates whatever is reported; each user pays its report times its
    /// rate, so under-reporting always pays off.
    #[derive(Debug, Clone)]
    pub struct ReportProportional {
        pub distributions: Vec<TypeDistribution>,
        pub rates: Vec<f64>,
    }

    impl Mechanism for ReportProportional {
        fn num_users(&self) -> usize {
            self.rates.len()
        }

        fn type_distribution(&self, user: usize) -> &TypeDistribution {
            &self.distributions[user]
        }

        fn rate(&self, user: usize, _reports: &[f64]) -> Result<f64> {
            Ok(self.rates[user])
        }

        fn user_outcome(&self, user: usize, reports: &[f64]) -> Result<UserOutcome> {
            Ok(UserOutcome {
                rate: self.rates[user],
                payment: reports[user] * self.rates[user],
                tax_error_bound: 0.0,
                nonmonotone_steps: 0,
            })
        }
    }

    /// Another mechanism's allocation with a constant fee in place of its tax.
    #[derive(Debug, Clone)]
    pub struct FlatFee<M> {
        pub inner: M,
        pub fee: f64,
    }

    impl<M: Mechanism> Mechanism for FlatFee<M> {
        fn num_users(&self) -> usize {
            self.inner.num_users()
        }

        fn type_distribution(&self, user: usize) -> &TypeDistribution {
            self.inner.type_distribution(user)
        }

        fn rate(&self, user: usize, reports: &[f64]) -> Result<f64> {
            self.inner.rate(user, reports)
        }

        fn user_outcome(&self, user: usize, reports: &[f64]) -> Result<UserOutcome> {
            Ok(UserOutcome {
                rate: self.inner.rate(user, reports)?,
                payment: self.fee,
                tax_error_bound: 0.0,
                nonmonotone_steps: 0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::adversarial::*;
    use super::*;

    fn proportional() -> ReportProportional {
        ReportProportional {
            distributions: vec![TypeDistribution::uniform(0.0, 1.0).unwrap(); 2],
            rates: vec![1.0, 2.0],
        }
    }

    fn options() -> VerifyOptions {
        VerifyOptions { mc_samples: 64, ..Default::default() }
    }

    #[test]
    fn self_comparison_gain_is_zero() {
        let m = proportional();
        let grids = vec![vec![0.5]; 2];
        let ic = verify_ic(&m, &grids, &grids, &options()).unwrap();
        for r in ic {
            assert_eq!(r.best_deviation_gain, 0.0);
            assert!(r.passed);
        }
    }

    #[test]
    fn report_proportional_fails_ic_and_identity() {
        let m = proportional();
        let grids = default_grids(&m, 9).unwrap();
        let ic = verify_ic(&m, &grids, &grids, &options()).unwrap();
        assert!(ic.iter().any(|r| !r.passed && r.best_deviation_gain > 0.0));
        let id = verify_payment_identity(&m, 0, &grids[0], &options()).unwrap();
        assert!(!id.passed);
    }

    #[test]
    fn grid_outside_support_rejected() {
        let m = proportional();
        assert!(matches!(
            verify_payment_identity(&m, 0, &[1.5], &options()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn equispaced_hits_endpoints() {
        let d = TypeDistribution::uniform(0.2, 1.3).unwrap();
        let g = equispaced(&d, 17).unwrap();
        assert_eq!(g.len(), 17);
        assert_eq!(g[0], 0.2);
        assert_eq!(g[16], 1.3);
    }
}

//! Prior distributions over user types and their virtual types.
//!
//! A user's type is its willingness to pay per unit of expected rate. The
//! seller's revenue depends on types only through the virtual type
//! `w(θ) = θ − (1 − F(θ))/f(θ)`, and both mechanisms require `w` to be
//! increasing (regularity).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of grid points used to certify regularity.
pub const DEFAULT_REGULARITY_GRID: usize = 1024;

const CDF_ENDPOINT_TOLERANCE: f64 = 1e-9;

/// Prior density of one user's type on `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TypeDistribution {
    Uniform {
        min: f64,
        max: f64,
    },
    /// Density proportional to `θ^exponent`, truncated to the support.
    Power {
        min: f64,
        max: f64,
        exponent: f64,
    },
    /// Density proportional to `exp(−rate·θ)`; a negative rate gives an
    /// increasing density.
    TruncatedExponential {
        min: f64,
        max: f64,
        rate: f64,
    },
    /// Piecewise-linear CDF through `(theta[k], cdf[k])`; the density is its
    /// piecewise-constant derivative.
    Tabulated {
        theta: Vec<f64>,
        cdf: Vec<f64>,
    },
}

impl TypeDistribution {
    pub fn uniform(min: f64, max: f64) -> Result<Self> {
        let d = TypeDistribution::Uniform { min, max };
        d.validate()?;
        Ok(d)
    }

    pub fn min(&self) -> f64 {
        match self {
            TypeDistribution::Uniform { min, .. }
            | TypeDistribution::Power { min, .. }
            | TypeDistribution::TruncatedExponential { min, .. } => *min,
            TypeDistribution::Tabulated { theta, .. } => theta[0],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            TypeDistribution::Uniform { max, .. }
            | TypeDistribution::Power { max, .. }
            | TypeDistribution::TruncatedExponential { max, .. } => *max,
            TypeDistribution::Tabulated { theta, .. } => theta[theta.len() - 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let TypeDistribution::Tabulated { theta, cdf } = self {
            return validate_table(theta, cdf);
        }
        let (min, max) = (self.min(), self.max());
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::Config(format!("type support [{min}, {max}] is not finite")));
        }
        if min < 0.0 {
            return Err(Error::Config(format!("type minimum {min} is negative")));
        }
        if max <= min {
            return Err(Error::Config(format!(
                "type support needs max > min, got [{min}, {max}]"
            )));
        }
        match self {
            TypeDistribution::Power { exponent, .. } => {
                if !exponent.is_finite() {
                    return Err(Error::Config(format!("power exponent {exponent} is not finite")));
                }
                if *exponent != 0.0 && min <= 0.0 {
                    return Err(Error::Config(
                        "power density needs min > 0 so that f > 0 on the whole support".into(),
                    ));
                }
            }
            TypeDistribution::TruncatedExponential { rate, .. } => {
                if !(rate.is_finite() && *rate != 0.0) {
                    return Err(Error::Config(format!(
                        "exponential rate {rate} must be finite and non-zero"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn check_support(&self, theta: f64) -> Result<()> {
        if theta >= self.min() && theta <= self.max() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "type {theta} outside support [{}, {}]",
                self.min(),
                self.max()
            )))
        }
    }

    pub fn pdf(&self, theta: f64) -> Result<f64> {
        self.check_support(theta)?;
        Ok(self.pdf_unchecked(theta))
    }

    pub fn cdf(&self, theta: f64) -> Result<f64> {
        self.check_support(theta)?;
        Ok(1.0 - self.survival_unchecked(theta))
    }

    /// `θ − (1 − F(θ))/f(θ)`.
    pub fn virtual_type(&self, theta: f64) -> Result<f64> {
        self.check_support(theta)?;
        Ok(self.virtual_type_unchecked(theta))
    }

    pub(crate) fn virtual_type_unchecked(&self, theta: f64) -> f64 {
        theta - self.survival_unchecked(theta) / self.pdf_unchecked(theta)
    }

    fn pdf_unchecked(&self, theta: f64) -> f64 {
        match *self {
            TypeDistribution::Uniform { min, max } => 1.0 / (max - min),
            TypeDistribution::Power { min, max, exponent } => {
                if exponent == -1.0 {
                    1.0 / (theta * (max / min).ln())
                } else {
                    let k1 = exponent + 1.0;
                    k1 * theta.powf(exponent) / (max.powf(k1) - min.powf(k1))
                }
            }
            TypeDistribution::TruncatedExponential { min, max, rate } => {
                let norm = -(-rate * (max - min)).exp_m1();
                rate * (-rate * (theta - min)).exp() / norm
            }
            TypeDistribution::Tabulated { theta: ref knots, ref cdf } => {
                let j = table_piece(knots, theta);
                (cdf[j + 1] - cdf[j]) / (knots[j + 1] - knots[j])
            }
        }
    }

    /// `1 − F(θ)`, computed directly so that it is exactly 0 at `max`.
    fn survival_unchecked(&self, theta: f64) -> f64 {
        match *self {
            TypeDistribution::Uniform { min, max } => (max - theta) / (max - min),
            TypeDistribution::Power { min, max, exponent } => {
                if exponent == -1.0 {
                    (max / theta).ln() / (max / min).ln()
                } else {
                    let k1 = exponent + 1.0;
                    (max.powf(k1) - theta.powf(k1)) / (max.powf(k1) - min.powf(k1))
                }
            }
            TypeDistribution::TruncatedExponential { min, max, rate } => {
                // (e^{−r(θ−a)} − e^{−r(b−a)}) / (1 − e^{−r(b−a)})
                let norm = -(-rate * (max - min)).exp_m1();
                let upper = (-rate * (max - min)).exp();
                ((-rate * (theta - min)).exp() - upper) / norm
            }
            TypeDistribution::Tabulated { theta: ref knots, ref cdf } => {
                let last = knots.len() - 1;
                if theta >= knots[last] {
                    return 0.0;
                }
                let j = table_piece(knots, theta);
                let slope = (cdf[j + 1] - cdf[j]) / (knots[j + 1] - knots[j]);
                (cdf[last] - cdf[j + 1]) + slope * (knots[j + 1] - theta)
            }
        }
    }

    /// Inverse CDF for `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level {u} outside [0, 1]")));
        }
        let x = match *self {
            TypeDistribution::Uniform { min, max } => min + u * (max - min),
            TypeDistribution::Power { min, max, exponent } => {
                if exponent == -1.0 {
                    min * (max / min).powf(u)
                } else {
                    let k1 = exponent + 1.0;
                    let (a, b) = (min.powf(k1), max.powf(k1));
                    (a + u * (b - a)).powf(1.0 / k1)
                }
            }
            TypeDistribution::TruncatedExponential { min, max, rate } => {
                let norm = -(-rate * (max - min)).exp_m1();
                min - (-u * norm).ln_1p() / rate
            }
            TypeDistribution::Tabulated { ref theta, ref cdf } => {
                let j = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1) - 1;
                let span = cdf[j + 1] - cdf[j];
                if span <= 0.0 {
                    return Err(Error::Config("tabulated CDF is not invertible".into()));
                }
                theta[j] + (u - cdf[j]) / span * (theta[j + 1] - theta[j])
            }
        };
        Ok(x.clamp(self.min(), self.max()))
    }
}

fn validate_table(theta: &[f64], cdf: &[f64]) -> Result<()> {
    if theta.len() < 2 || theta.len() != cdf.len() {
        return Err(Error::Config(format!(
            "tabulated distribution needs matching knot lists of length ≥ 2, got {} and {}",
            theta.len(),
            cdf.len()
        )));
    }
    if theta.iter().chain(cdf).any(|v| !v.is_finite()) {
        return Err(Error::Config("tabulated distribution has non-finite entries".into()));
    }
    if theta[0] < 0.0 {
        return Err(Error::Config(format!("type minimum {} is negative", theta[0])));
    }
    if cdf[0].abs() > CDF_ENDPOINT_TOLERANCE || (cdf[cdf.len() - 1] - 1.0).abs() > CDF_ENDPOINT_TOLERANCE {
        return Err(Error::Config("tabulated CDF must start at 0 and end at 1".into()));
    }
    for k in 1..theta.len() {
        if theta[k] <= theta[k - 1] {
            return Err(Error::Config(
                "type support needs max > min: tabulated knots must be strictly increasing".into(),
            ));
        }
        if cdf[k] <= cdf[k - 1] {
            return Err(Error::Config(format!(
                "tabulated CDF must be strictly increasing (density > 0); flat between {} and {}",
                theta[k - 1],
                theta[k]
            )));
        }
    }
    Ok(())
}

/// Index `j` of the piece `[knots[j], knots[j+1])` holding `theta`; the last
/// piece also holds the right endpoint.
fn table_piece(knots: &[f64], theta: f64) -> usize {
    knots.partition_point(|&k| k <= theta).clamp(1, knots.len() - 1) - 1
}

/// Outcome of a regularity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Regularity {
    Certified { grid_points: usize },
    /// `w(theta_b) ≤ w(theta_a)` for consecutive grid points `theta_a < theta_b`.
    Violated { theta_a: f64, theta_b: f64, grid_points: usize },
}

impl Regularity {
    pub fn is_certified(&self) -> bool {
        matches!(self, Regularity::Certified { .. })
    }
}

/// Checks that the virtual type is strictly increasing on an equispaced grid.
pub fn certify_regularity(dist: &TypeDistribution, grid_points: usize) -> Result<Regularity> {
    dist.validate()?;
    if grid_points < 2 {
        return Err(Error::Domain(format!("regularity grid needs ≥ 2 points, got {grid_points}")));
    }
    let (min, max) = (dist.min(), dist.max());
    let at = |k: usize| {
        if k == grid_points - 1 {
            max
        } else {
            min + (max - min) * k as f64 / (grid_points - 1) as f64
        }
    };
    let mut prev_theta = min;
    let mut prev_w = dist.virtual_type_unchecked(min);
    for k in 1..grid_points {
        let theta = at(k);
        let w = dist.virtual_type_unchecked(theta);
        if !(w > prev_w) {
            return Ok(Regularity::Violated { theta_a: prev_theta, theta_b: theta, grid_points });
        }
        prev_theta = theta;
        prev_w = w;
    }
    Ok(Regularity::Certified { grid_points })
}

/// Per-user type priors together with their regularity certificates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VirtualTypeProfile {
    pub distributions: Vec<TypeDistribution>,
    pub regularity: Vec<Regularity>,
    /// True when the caller chose to run on a profile that failed certification.
    pub override_used: bool,
}

impl VirtualTypeProfile {
    /// Certifies every distribution; fails on the first violation unless
    /// `allow_irregular` is set.
    pub fn certify(
        distributions: Vec<TypeDistribution>,
        grid_points: usize,
        allow_irregular: bool,
    ) -> Result<Self> {
        if distributions.is_empty() {
            return Err(Error::Config("at least one user is required".into()));
        }
        let mut regularity = Vec::with_capacity(distributions.len());
        let mut override_used = false;
        for (user, d) in distributions.iter().enumerate() {
            let r = certify_regularity(d, grid_points)?;
            if let Regularity::Violated { theta_a, theta_b, grid_points } = r {
                if !allow_irregular {
                    return Err(Error::Regularity { user, theta_a, theta_b, grid_points });
                }
                override_used = true;
            }
            regularity.push(r);
        }
        Ok(Self { distributions, regularity, override_used })
    }

    pub fn num_users(&self) -> usize {
        self.distributions.len()
    }

    pub fn virtual_type(&self, user: usize, theta: f64) -> Result<f64> {
        self.distribution(user)?.virtual_type(theta)
    }

    pub fn distribution(&self, user: usize) -> Result<&TypeDistribution> {
        self.distributions
            .get(user)
            .ok_or_else(|| Error::Domain(format!("user {user} out of range")))
    }

    /// Virtual types for a full report vector, checking its length and support.
    pub fn virtual_types(&self, reports: &[f64]) -> Result<Vec<f64>> {
        if reports.len() != self.num_users() {
            return Err(Error::Domain(format!(
                "type vector has {} entries for {} users",
                reports.len(),
                self.num_users()
            )));
        }
        self.distributions
            .iter()
            .zip(reports)
            .map(|(d, &t)| d.virtual_type(t))
            .collect()
    }
}

/// Independent draw `index` of a full type vector under `seed`.
///
/// Each draw owns the ChaCha stream `index` of the seed, so draws can be
/// produced in any order or in parallel with identical results.
pub fn draw_types(distributions: &[TypeDistribution], seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    distributions
        .iter()
        .map(|d| {
            let u: f64 = rng.random();
            d.quantile(u).expect("validated distribution with u in [0, 1)")
        })
        .collect()
}

/// `count` type vectors by inverse-CDF sampling, one row per draw.
pub fn sample_types(distributions: &[TypeDistribution], seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    for d in distributions {
        d.validate()?;
    }
    Ok((0..count as u64).map(|k| draw_types(distributions, seed, k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inverse_square() -> TypeDistribution {
        TypeDistribution::Power { min: 1.0, max: 2.0, exponent: -2.0 }
    }

    #[test]
    fn uniform_virtual_type_examples() {
        let u = TypeDistribution::uniform(0.0, 1.0).unwrap();
        assert!((u.virtual_type(0.75).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(u.virtual_type(1.0).unwrap(), 1.0);
        let v = TypeDistribution::uniform(1.0, 2.0).unwrap();
        assert_eq!(v.virtual_type(1.0).unwrap(), 0.0);
        assert!(matches!(u.virtual_type(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn virtual_type_at_max_is_max_for_every_kind() {
        let dists = vec![
            TypeDistribution::uniform(0.2, 3.0).unwrap(),
            inverse_square(),
            TypeDistribution::Power { min: 0.5, max: 2.0, exponent: -1.0 },
            TypeDistribution::TruncatedExponential { min: 0.0, max: 2.0, rate: 1.5 },
            TypeDistribution::Tabulated { theta: vec![0.0, 0.5, 1.0], cdf: vec![0.0, 0.3, 1.0] },
        ];
        for d in dists {
            assert_eq!(d.virtual_type(d.max()).unwrap(), d.max(), "{d:?}");
        }
    }

    #[test]
    fn inverse_square_density_matches_symbolic_virtual_type() {
        // F = 2(1 − 1/θ), f = 2/θ², so w(θ) = θ²/2.
        let d = inverse_square();
        for k in 0..=20 {
            let t = 1.0 + k as f64 / 20.0;
            assert!((d.virtual_type(t).unwrap() - t * t / 2.0).abs() < 1e-12);
        }
        assert!(certify_regularity(&d, 1024).unwrap().is_certified());
    }

    #[test]
    fn two_point_grid_certifies_uniform() {
        let u = TypeDistribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(certify_regularity(&u, 2).unwrap(), Regularity::Certified { grid_points: 2 });
        assert!(certify_regularity(&u, 1).is_err());
    }

    #[test]
    fn decreasing_tabulated_density_violates_regularity() {
        // density 1.8 on [0, 0.5), 0.2 on [0.5, 1]
        let d = TypeDistribution::Tabulated { theta: vec![0.0, 0.5, 1.0], cdf: vec![0.0, 0.9, 1.0] };
        match certify_regularity(&d, 1024).unwrap() {
            Regularity::Violated { theta_a, theta_b, .. } => {
                assert!(theta_a < 0.5 && theta_b >= 0.5);
            }
            other => panic!("expected violation, got {other:?}"),
        }
        let err = VirtualTypeProfile::certify(vec![d.clone()], 1024, false).unwrap_err();
        assert!(matches!(err, Error::Regularity { user: 0, .. }));
        let profile = VirtualTypeProfile::certify(vec![d], 1024, true).unwrap();
        assert!(profile.override_used);
    }

    #[test]
    fn degenerate_support_rejected() {
        assert!(TypeDistribution::uniform(1.0, 1.0).is_err());
        let flat = TypeDistribution::Tabulated { theta: vec![0.0, 0.5, 1.0], cdf: vec![0.0, 0.0, 1.0] };
        assert!(matches!(flat.validate(), Err(Error::Config(_))));
        assert!(TypeDistribution::Power { min: 0.0, max: 1.0, exponent: 1.0 }.validate().is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_in_support() {
        let u = vec![TypeDistribution::uniform(0.0, 1.0).unwrap()];
        let a = sample_types(&u, 7, 2).unwrap();
        let b = sample_types(&u, 7, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| (0.0..=1.0).contains(&r[0])));
        assert_ne!(sample_types(&u, 8, 2).unwrap(), a);
        assert!(sample_types(&u, 7, 0).is_err());
    }

    #[test]
    fn uniform_sample_mean_within_three_sigma() {
        let u = vec![TypeDistribution::uniform(0.0, 1.0).unwrap()];
        let n = 100_000;
        let mean = sample_types(&u, 2024, n).unwrap().iter().map(|r| r[0]).sum::<f64>() / n as f64;
        let sigma = (1.0f64 / 12.0).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn quantile_inverts_cdf() {
        let dists = vec![
            inverse_square(),
            TypeDistribution::Power { min: 0.5, max: 2.0, exponent: -1.0 },
            TypeDistribution::Power { min: 0.5, max: 2.0, exponent: 1.0 },
            TypeDistribution::TruncatedExponential { min: 0.0, max: 2.0, rate: -0.7 },
            TypeDistribution::Tabulated { theta: vec![0.0, 0.5, 1.0], cdf: vec![0.0, 0.3, 1.0] },
        ];
        for d in dists {
            for k in 0..=10 {
                let u = k as f64 / 10.0;
                let x = d.quantile(u).unwrap();
                assert!((d.cdf(x).unwrap() - u).abs() < 1e-12, "{d:?} at {u}");
            }
        }
    }
}

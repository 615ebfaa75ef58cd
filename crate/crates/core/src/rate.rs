//! Expected-rate functions for the two sharing models.
//!
//! Frequency division: a user given `x` Hz earns `x ln(1 + hP/(N0 x))`
//! nats/s for channel gain `h`; the expected rate averages this over the
//! gain distribution. Spread spectrum: every user transmits over the whole
//! band and the other users' powers enter as interference.
//!
//! All rates are in nats/s (natural logarithm).

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Default Gauss-Legendre order for continuous gain densities.
pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

const PROBABILITY_TOLERANCE: f64 = 1e-12;
const DENSITY_MASS_TOLERANCE: f64 = 1e-9;

/// Shape of a continuous gain density on its declared support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainDensity {
    Uniform,
    /// Exponential density with the given mean, renormalised to the support.
    /// Models Rayleigh-fading power gains truncated to a finite interval.
    TruncatedExponential { mean: f64 },
}

/// Distribution of a user's own channel gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainDistribution {
    Deterministic {
        value: f64,
    },
    /// Finite support; each entry is `[gain, probability]`.
    Discrete {
        points: Vec<(f64, f64)>,
    },
    Continuous {
        lo: f64,
        hi: f64,
        density: GainDensity,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<usize>,
    },
}

impl GainDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            GainDistribution::Deterministic { value } => check_gain(*value),
            GainDistribution::Discrete { points } => {
                if points.is_empty() {
                    return Err(Error::Config("discrete gain distribution has no points".into()));
                }
                let mut total = 0.0;
                for &(gain, prob) in points {
                    check_gain(gain)?;
                    if !(prob.is_finite() && prob >= 0.0) {
                        return Err(Error::Config(format!("gain probability {prob} is not a probability")));
                    }
                    total += prob;
                }
                if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                    return Err(Error::Config(format!(
                        "discrete gain probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            GainDistribution::Continuous { lo, hi, density, order } => {
                check_gain(*lo)?;
                check_gain(*hi)?;
                if hi <= lo {
                    return Err(Error::Config(format!("gain support [{lo}, {hi}] is empty")));
                }
                if order == &Some(0) {
                    return Err(Error::Config("quadrature order must be at least 1".into()));
                }
                if let GainDensity::TruncatedExponential { mean } = density {
                    if !(mean.is_finite() && *mean > 0.0) {
                        return Err(Error::Config(format!("exponential mean {mean} must be positive")));
                    }
                    if truncated_exponential_mass(*mean, *lo, *hi) <= f64::MIN_POSITIVE {
                        return Err(Error::Config("exponential density has no mass on the support".into()));
                    }
                }
                let mass: f64 = self.atoms_unchecked().iter().map(|a| a.1).sum();
                if (mass - 1.0).abs() > DENSITY_MASS_TOLERANCE {
                    return Err(Error::Config(format!(
                        "gain density integrates to {mass} on its support"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Probability mass of the untruncated density lying outside the support.
    /// Zero for everything except the truncated exponential.
    pub fn truncation_mass(&self) -> f64 {
        match self {
            GainDistribution::Continuous {
                lo,
                hi,
                density: GainDensity::TruncatedExponential { mean },
                ..
            } => 1.0 - truncated_exponential_mass(*mean, *lo, *hi),
            _ => 0.0,
        }
    }

    /// Gain atoms `(h, weight)` with weights summing to one: the exact
    /// support for deterministic/discrete gains, quadrature nodes otherwise.
    pub fn atoms(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        Ok(self.atoms_unchecked())
    }

    fn atoms_unchecked(&self) -> Vec<(f64, f64)> {
        match self {
            GainDistribution::Deterministic { value } => vec![(*value, 1.0)],
            GainDistribution::Discrete { points } => points.clone(),
            GainDistribution::Continuous { lo, hi, density, order } => {
                let order = order.unwrap_or(DEFAULT_QUADRATURE_ORDER);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                legendre_rule(order)
                    .into_iter()
                    .map(|(node, weight)| {
                        let h = mid + half * node;
                        (h, weight * half * density_at(density, *lo, *hi, h))
                    })
                    .collect()
            }
        }
    }
}

fn check_gain(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("channel gain {h} must be positive and finite")))
    }
}

fn truncated_exponential_mass(mean: f64, lo: f64, hi: f64) -> f64 {
    (-lo / mean).exp() - (-hi / mean).exp()
}

fn density_at(density: &GainDensity, lo: f64, hi: f64, h: f64) -> f64 {
    match density {
        GainDensity::Uniform => 1.0 / (hi - lo),
        GainDensity::TruncatedExponential { mean } => {
            (-h / mean).exp() / mean / truncated_exponential_mass(*mean, lo, hi)
        }
    }
}

fn legendre_rule(order: usize) -> Vec<(f64, f64)> {
    let order = NonZeroUsize::new(order).expect("order validated as non-zero");
    GaussLegendre::new(order).as_node_weight_pairs().to_vec()
}

/// Slope of the expected-rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slope {
    /// The derivative at zero bandwidth, which diverges.
    Unbounded,
    Finite(f64),
}

impl Slope {
    pub fn finite(self) -> Option<f64> {
        match self {
            Slope::Finite(v) => Some(v),
            Slope::Unbounded => None,
        }
    }
}

/// Physical description of one frequency-division user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdUserPhysical {
    pub gain: GainDistribution,
    /// Transmit power in watts.
    pub transmit_power: f64,
    /// Noise spectral density in watts/Hz.
    pub noise_density: f64,
    /// `(hP/N0, weight)` pairs, cached at construction.
    #[serde(skip)]
    snr_atoms: Vec<(f64, f64)>,
    /// `Σ weight · ln(hP/N0)`.
    #[serde(skip)]
    log_geometric_snr: f64,
}

impl FdUserPhysical {
    pub fn new(gain: GainDistribution, transmit_power: f64, noise_density: f64) -> Result<Self> {
        if !(transmit_power.is_finite() && transmit_power > 0.0) {
            return Err(Error::Config(format!("transmit power {transmit_power} must be positive")));
        }
        if !(noise_density.is_finite() && noise_density > 0.0) {
            return Err(Error::Config(format!("noise density {noise_density} must be positive")));
        }
        let snr_atoms = gain
            .atoms()?
            .into_iter()
            .map(|(h, w)| (h * transmit_power / noise_density, w))
            .collect::<Vec<(f64, f64)>>();
        let log_geometric_snr = snr_atoms.iter().map(|&(a, w)| w * a.ln()).sum();
        Ok(Self { gain, transmit_power, noise_density, snr_atoms, log_geometric_snr })
    }

    /// Expected rate `E_h[x ln(1 + hP/(N0 x))]` for `x` Hz of bandwidth.
    /// Zero bandwidth gives exactly zero.
    pub fn expected_rate(&self, x: f64) -> Result<f64> {
        check_bandwidth(x)?;
        ensure_finite(self.rate_unchecked(x), || format!("expected rate at x = {x}"))
    }

    /// `dψ/dx = E_h[ln(1 + a/x) − a/(x + a)]` with `a = hP/N0`.
    pub fn expected_rate_derivative(&self, x: f64) -> Result<Slope> {
        check_bandwidth(x)?;
        if x == 0.0 {
            return Ok(Slope::Unbounded);
        }
        let d = self.slope_unchecked(x);
        ensure_finite(d, || format!("rate derivative at x = {x}")).map(Slope::Finite)
    }

    pub fn expected_rate_second_derivative(&self, x: f64) -> Result<f64> {
        check_bandwidth(x)?;
        if x == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.curvature_unchecked(x))
    }

    pub(crate) fn rate_unchecked(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        self.snr_atoms.iter().map(|&(a, w)| w * x_ln_1p_a_over_x(a, x)).sum()
    }

    pub(crate) fn slope_unchecked(&self, x: f64) -> f64 {
        self.snr_atoms.iter().map(|&(a, w)| w * slope_kernel(a / x)).sum()
    }

    pub(crate) fn curvature_unchecked(&self, x: f64) -> f64 {
        -self
            .snr_atoms
            .iter()
            .map(|&(a, w)| {
                let s = a + x;
                w * a * a / (s * s * x)
            })
            .sum::<f64>()
    }

    /// Solves `ψ'(x) = slope` for `x > 0`; `hint` seeds the bracket search.
    ///
    /// ψ' decreases strictly from +∞ at 0 to 0 at ∞, so every positive slope
    /// has exactly one preimage. Returns 0 when that preimage underflows f64.
    /// Newton steps in `ln x` with a bisection fallback keep the iterate
    /// inside the current bracket.
    pub fn bandwidth_for_slope(&self, slope: f64, hint: f64) -> Result<f64> {
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::Domain(format!("target slope {slope} must be positive")));
        }
        let mut x = if hint.is_finite() && hint > 0.0 { hint } else { 1.0 };
        let (mut lo, mut hi);
        if self.slope_unchecked(x) > slope {
            lo = x;
            loop {
                x *= 2.0;
                if !x.is_finite() {
                    return Err(Error::Solver(format!("no bandwidth reaches slope {slope}")));
                }
                if self.slope_unchecked(x) <= slope {
                    hi = x;
                    break;
                }
                lo = x;
            }
        } else {
            hi = x;
            // ln(1 + a/x) > ln(a/x) and a/(x + a) < 1 give ψ'(x) > ln(G/x) − 1
            // with G the weighted geometric mean of a, so this x has ψ'(x) > slope.
            let below = (self.log_geometric_snr - slope - 1.0).exp();
            if below == 0.0 {
                return Ok(0.0);
            }
            lo = below.min(0.5 * hi);
            while self.slope_unchecked(lo) <= slope {
                hi = lo;
                lo *= 0.5;
                if lo == 0.0 {
                    return Ok(0.0);
                }
            }
        }

        let mut u = 0.5 * (lo.ln() + hi.ln());
        for _ in 0..200 {
            let x = u.exp();
            let residual = self.slope_unchecked(x) - slope;
            if residual == 0.0 {
                return Ok(x);
            }
            if residual > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.curvature_unchecked(x) * x;
            let (log_lo, log_hi) = (lo.ln(), hi.ln());
            let mut next = u - residual / d;
            if !(next > log_lo && next < log_hi) {
                next = 0.5 * (log_lo + log_hi);
            }
            if (next - u).abs() <= 1e-13 || hi - lo <= 1e-12 * lo {
                return Ok(next.exp());
            }
            u = next;
        }
        Err(Error::Solver(format!(
            "bandwidth for slope {slope} not converged, bracket [{lo}, {hi}]"
        )))
    }
}

fn check_bandwidth(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("bandwidth {x} must be finite and non-negative")))
    }
}

/// `ln(1 + u) − u/(1 + u)`, accurate for small `u`.
/// `x ln(1 + a/x)`, staying finite when `a/x` overflows.
fn x_ln_1p_a_over_x(a: f64, x: f64) -> f64 {
    let u = a / x;
    if u.is_finite() {
        x * u.ln_1p()
    } else {
        x * (a.ln() - x.ln())
    }
}

fn slope_kernel(u: f64) -> f64 {
    if u.is_infinite() {
        f64::INFINITY
    } else if u < 1e-3 {
        // Σ_{n≥2} (−1)^n (n−1)/n u^n
        let mut term = u * u;
        let mut sum = 0.0;
        for n in 2..10 {
            let nf = n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (nf - 1.0) / nf * term;
            term *= u;
        }
        sum
    } else {
        u.ln_1p() - u / (1.0 + u)
    }
}

/// Spread-spectrum physical layer: fixed, known gains on a shared band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsPhysical {
    /// `gains[i][j]` is the gain from transmitter `i` to receiver `j`.
    pub gains: Vec<Vec<f64>>,
    /// Shared band in Hz.
    pub bandwidth: f64,
    pub noise_density: f64,
}

impl SsPhysical {
    pub fn new(gains: Vec<Vec<f64>>, bandwidth: f64, noise_density: f64) -> Result<Self> {
        let n = gains.len();
        if n == 0 {
            return Err(Error::Config("gain matrix is empty".into()));
        }
        for (i, row) in gains.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "gain matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for &h in row {
                check_gain(h)?;
            }
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!("bandwidth {bandwidth} must be positive")));
        }
        if !(noise_density.is_finite() && noise_density > 0.0) {
            return Err(Error::Config(format!("noise density {noise_density} must be positive")));
        }
        Ok(Self { gains, bandwidth, noise_density })
    }

    pub fn num_users(&self) -> usize {
        self.gains.len()
    }

    fn check_powers(&self, powers: &[f64]) -> Result<()> {
        if powers.len() != self.num_users() {
            return Err(Error::Domain(format!(
                "power vector has {} entries for {} users",
                powers.len(),
                self.num_users()
            )));
        }
        if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Domain(format!("power {p} must be finite and non-negative")));
        }
        Ok(())
    }

    /// Noise plus interference seen at receiver `i`: `N0 W + Σ_{j≠i} h_ji P_j`.
    fn interference(&self, powers: &[f64], i: usize) -> f64 {
        let mut d = self.noise_density * self.bandwidth;
        for (j, &p) in powers.iter().enumerate() {
            if j != i {
                d += self.gains[j][i] * p;
            }
        }
        d
    }

    /// `W ln(1 + h_ii P_i / (N0 W + Σ_{j≠i} h_ji P_j))`.
    pub fn interference_rate(&self, powers: &[f64], i: usize) -> Result<f64> {
        self.check_powers(powers)?;
        self.check_user(i)?;
        Ok(self.rate_unchecked(powers, i))
    }

    /// `∂ψ̃_i/∂P_j` for every `j`.
    pub fn interference_rate_gradient(&self, powers: &[f64], i: usize) -> Result<Vec<f64>> {
        self.check_powers(powers)?;
        self.check_user(i)?;
        let mut grad = vec![0.0; self.num_users()];
        self.accumulate_gradient(powers, i, 1.0, &mut grad);
        Ok(grad)
    }

    fn check_user(&self, i: usize) -> Result<()> {
        if i < self.num_users() {
            Ok(())
        } else {
            Err(Error::Domain(format!("user {i} out of range for {} users", self.num_users())))
        }
    }

    pub(crate) fn rate_unchecked(&self, powers: &[f64], i: usize) -> f64 {
        let d = self.interference(powers, i);
        self.bandwidth * (self.gains[i][i] * powers[i] / d).ln_1p()
    }

    fn accumulate_gradient(&self, powers: &[f64], i: usize, weight: f64, grad: &mut [f64]) {
        let d = self.interference(powers, i);
        let signal = self.gains[i][i] * powers[i];
        let total = d + signal;
        let w = self.bandwidth * weight;
        grad[i] += w * self.gains[i][i] / total;
        if signal > 0.0 {
            let cross = -w * signal / (d * total);
            for (j, g) in grad.iter_mut().enumerate() {
                if j != i {
                    *g += cross * self.gains[j][i];
                }
            }
        }
    }

    /// `Σ_i weights[i] ψ̃_i(P)` and its gradient, without validation.
    pub(crate) fn weighted_objective(&self, powers: &[f64], weights: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            value += w * self.rate_unchecked(powers, i);
            self.accumulate_gradient(powers, i, w, grad);
        }
        value
    }

    pub(crate) fn weighted_value(&self, powers: &[f64], weights: &[f64]) -> f64 {
        weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, &w)| w * self.rate_unchecked(powers, i))
            .sum()
    }
}

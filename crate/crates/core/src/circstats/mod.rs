//! Circular statistics: angle folding, resultant lengths, the von Mises
//! distribution and its maximum-likelihood fit, circular mixtures fitted by
//! EM, and the doubled/quadrupled-angle axiality test.

pub mod bessel;
mod mixture;

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mixture::{fit_mixture, MixtureConfig, MixtureFit, MixtureKind, MixtureStart};

/// Resultant lengths below this are treated as zero (mean direction undefined).
pub const DEGENERATE_RBAR: f64 = 1e-12;

/// Concentration reported for samples whose angles all coincide.
pub const DEFAULT_KAPPA_CAP: f64 = 1e4;

/// Reduce `angle_deg` modulo `modulus` into `[0, modulus)`.
pub fn fold_angle(angle_deg: f64, modulus: f64) -> Result<f64> {
    if !angle_deg.is_finite() {
        return Err(Error::input(format!("angle {angle_deg} is not finite")));
    }
    if !(modulus > 0.0) || !modulus.is_finite() {
        return Err(Error::param(format!("fold modulus must be positive, got {modulus}")));
    }
    Ok(wrap(angle_deg, modulus))
}

/// Mathematical modulo into `[0, m)`, guarding the `-tiny mod m == m` rounding case.
pub(crate) fn wrap(x: f64, m: f64) -> f64 {
    let r = x.rem_euclid(m);
    if r >= m {
        0.0
    } else {
        r
    }
}

/// Wrap radians into `[0, 2π)`.
pub fn wrap_radians(theta: f64) -> f64 {
    wrap(theta, TAU)
}

/// Map an orientation folded into `[0, m)` degrees onto the full circle.
pub fn scale_to_circle(folded_deg: f64, modulus: f64) -> Result<f64> {
    if !(modulus > 0.0) {
        return Err(Error::param(format!("modulus must be positive, got {modulus}")));
    }
    if !(0.0..modulus).contains(&folded_deg) {
        return Err(Error::input(format!(
            "folded angle {folded_deg} outside [0, {modulus})"
        )));
    }
    Ok(wrap_radians(folded_deg * TAU / modulus))
}

/// Inverse of [`scale_to_circle`].
pub fn unscale_from_circle(theta: f64, modulus: f64) -> f64 {
    wrap(wrap_radians(theta) * modulus / TAU, modulus)
}

/// Fold degrees modulo `modulus` and scale onto the circle in one step.
pub fn fold_to_circle(angle_deg: f64, modulus: f64) -> Result<f64> {
    scale_to_circle(fold_angle(angle_deg, modulus)?, modulus)
}

/// Angles on the full circle, optionally weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularSample {
    angles: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl CircularSample {
    /// Angles must already lie in `[0, 2π)`.
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::input("circular sample needs at least one angle"));
        }
        if let Some(bad) = angles.iter().find(|a| !(0.0..TAU).contains(*a)) {
            return Err(Error::input(format!("angle {bad} outside [0, 2π)")));
        }
        Ok(Self { angles, weights: None })
    }

    /// Wraps arbitrary finite radians into `[0, 2π)` first.
    pub fn from_radians(angles: impl IntoIterator<Item = f64>) -> Result<Self> {
        let angles = angles
            .into_iter()
            .map(|a| {
                if a.is_finite() {
                    Ok(wrap_radians(a))
                } else {
                    Err(Error::input(format!("angle {a} is not finite")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(angles)
    }

    /// Directions in degrees on the full circle.
    pub fn from_degrees(angles: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::from_radians(angles.into_iter().map(f64::to_radians))
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.angles.len() {
            return Err(Error::input(format!(
                "{} weights for {} angles",
                weights.len(),
                self.angles.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::input("weights must be finite and nonnegative"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Every angle multiplied by `k` and rewrapped; weights carried over.
    pub fn multiplied(&self, k: f64) -> Self {
        Self {
            angles: self.angles.iter().map(|a| wrap_radians(a * k)).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Mean direction and mean resultant length of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanResultant {
    /// `None` when the resultant vanishes and the direction is undefined.
    pub mean: Option<f64>,
    pub rbar: f64,
}

impl MeanResultant {
    pub fn is_degenerate(&self) -> bool {
        self.mean.is_none()
    }
}

fn weighted_resultant<'a>(pairs: impl Iterator<Item = (f64, f64)> + 'a) -> Result<MeanResultant> {
    let (mut c, mut s, mut total) = (0.0, 0.0, 0.0);
    for (theta, w) in pairs {
        c += w * theta.cos();
        s += w * theta.sin();
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::input("total weight must be positive"));
    }
    let rbar = (c.hypot(s) / total).min(1.0);
    let mean = (rbar >= DEGENERATE_RBAR).then(|| wrap_radians(s.atan2(c)));
    Ok(MeanResultant { mean, rbar })
}

pub fn circular_mean_resultant(sample: &CircularSample) -> Result<MeanResultant> {
    weighted_resultant((0..sample.len()).map(|i| (sample.angles[i], sample.weight(i))))
}

/// Von Mises parameters; `mu` in `[0, 2π)`, `kappa >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VonMisesParams {
    mu: f64,
    kappa: f64,
}

impl VonMisesParams {
    pub fn new(mu: f64, kappa: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::param(format!("von Mises mean {mu} is not finite")));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::param(format!(
                "von Mises concentration must be finite and >= 0, got {kappa}"
            )));
        }
        Ok(Self { mu: wrap_radians(mu), kappa })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Natural log of the density at `theta`.
    pub fn ln_density(&self, theta: f64) -> f64 {
        // exp(κ cos d) / (2π I0(κ)) = exp(κ (cos d − 1)) / (2π i0e(κ))
        self.kappa * ((theta - self.mu).cos() - 1.0) - (TAU * bessel::i0e(self.kappa)).ln()
    }

    pub fn density(&self, theta: f64) -> f64 {
        self.ln_density(theta).exp()
    }

    /// Circular standard deviation `sqrt(-2 ln A(κ))`, in radians.
    pub fn circular_std(&self) -> f64 {
        let a = bessel::a1(self.kappa);
        if a <= 0.0 {
            f64::INFINITY
        } else {
            (-2.0 * a.ln()).sqrt()
        }
    }
}

pub fn vonmises_density(theta: f64, params: &VonMisesParams) -> f64 {
    params.density(theta)
}

/// Result of a maximum-likelihood von Mises fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VonMisesFit {
    pub params: VonMisesParams,
    pub rbar: f64,
    /// All mass at one angle; `kappa` was clamped to the cap.
    pub saturated: bool,
    /// Resultant vanished; `mu` is arbitrary (reported as 0) and `kappa = 0`.
    pub degenerate_mean: bool,
}

/// Solve `A(κ) = rbar` for κ, capped at `cap`.
///
/// Newton iterations from the Best–Fisher approximation, falling back to
/// bisection whenever a step leaves the current bracket.
pub fn kappa_from_rbar(rbar: f64, cap: f64) -> (f64, bool) {
    if rbar < DEGENERATE_RBAR {
        return (0.0, false);
    }
    if rbar >= bessel::a1(cap) {
        return (cap, true);
    }
    let mut kappa = if rbar < 0.53 {
        2.0 * rbar + rbar.powi(3) + 5.0 * rbar.powi(5) / 6.0
    } else if rbar < 0.85 {
        -0.4 + 1.39 * rbar + 0.43 / (1.0 - rbar)
    } else {
        1.0 / (rbar.powi(3) - 4.0 * rbar * rbar + 3.0 * rbar)
    };
    let (mut lo, mut hi) = (0.0, cap);
    kappa = kappa.clamp(lo, hi);
    for _ in 0..200 {
        let a = bessel::a1(kappa);
        let resid = a - rbar;
        if resid.abs() < 1e-14 {
            break;
        }
        if resid < 0.0 {
            lo = kappa;
        } else {
            hi = kappa;
        }
        let slope = if kappa > 0.0 { 1.0 - a / kappa - a * a } else { 0.5 };
        let mut next = kappa - resid / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - kappa).abs() <= 1e-15 * kappa.max(1.0) {
            kappa = next;
            break;
        }
        kappa = next;
    }
    (kappa, false)
}

/// Weighted von Mises MLE from `(angle, weight)` pairs.
pub(crate) fn fit_weighted(
    angles: &[f64],
    weights: impl Fn(usize) -> f64,
    cap: f64,
) -> Result<VonMisesFit> {
    let mr = weighted_resultant((0..angles.len()).map(|i| (angles[i], weights(i))))?;
    let (kappa, saturated) = kappa_from_rbar(mr.rbar, cap);
    Ok(VonMisesFit {
        params: VonMisesParams { mu: mr.mean.unwrap_or(0.0), kappa },
        rbar: mr.rbar,
        saturated,
        degenerate_mean: mr.mean.is_none(),
    })
}

/// Maximum-likelihood von Mises fit with the default κ cap.
pub fn fit_vonmises_mle(sample: &CircularSample) -> Result<VonMisesFit> {
    fit_vonmises_mle_capped(sample, DEFAULT_KAPPA_CAP)
}

pub fn fit_vonmises_mle_capped(sample: &CircularSample, kappa_cap: f64) -> Result<VonMisesFit> {
    if sample.len() < 2 {
        return Err(Error::input("von Mises fit needs at least 2 angles"));
    }
    if !(kappa_cap > 0.0) {
        return Err(Error::param("kappa cap must be positive"));
    }
    fit_weighted(&sample.angles, |i| sample.weight(i), kappa_cap)
}

/// Draw from a von Mises distribution (Best & Fisher rejection sampler).
pub fn sample_vonmises<R: Rng + ?Sized>(rng: &mut R, params: &VonMisesParams) -> f64 {
    let kappa = params.kappa;
    if kappa < 1e-8 {
        return rng.random_range(0.0..TAU);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        let u2: f64 = rng.random();
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let d = if u3 > 0.5 { f.acos() } else { -f.acos() };
            return wrap_radians(params.mu + d);
        }
    }
}

/// Outcome of the axiality discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiality {
    Perpendicular,
    Collinear,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialityVerdict {
    pub classification: Axiality,
    /// Resultant length of the doubled angles.
    pub r2: f64,
    /// Resultant length of the quadrupled angles.
    pub r4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialityThresholds {
    pub r4: f64,
    pub r2: f64,
}

impl Default for AxialityThresholds {
    fn default() -> Self {
        Self { r4: 0.5, r2: 0.5 }
    }
}

/// Distinguish four-fold (grid) structure from two-fold (line) structure in
/// raw directions on the full circle.
pub fn axiality_test(
    directions: &CircularSample,
    thresholds: AxialityThresholds,
) -> Result<AxialityVerdict> {
    if directions.len() < 5 {
        return Err(Error::input(format!(
            "axiality test needs at least 5 directions, got {}",
            directions.len()
        )));
    }
    let r2 = circular_mean_resultant(&directions.multiplied(2.0))?.rbar;
    let r4 = circular_mean_resultant(&directions.multiplied(4.0))?.rbar;
    let classification = if r4 >= thresholds.r4 {
        if r2 < thresholds.r2 {
            Axiality::Perpendicular
        } else {
            Axiality::Collinear
        }
    } else {
        Axiality::Neither
    };
    Ok(AxialityVerdict { classification, r2, r4 })
}

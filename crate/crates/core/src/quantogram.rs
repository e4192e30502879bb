//! Cosine quantogram over a frequency grid, Monte Carlo comparison boundary,
//! peak location and bootstrap error range.
//!
//! The quantogram of lengths `X₁…X_N` at frequency `ω = 1/q` is
//! `√(2/N) Σ cos(2π ω Xᵢ)`; values that are near-multiples of `q` push it
//! towards its maximum `√(2N)`.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::MeasurementSet;
use crate::rng::{substream, DEFAULT_SEED};

/// Grid frequencies are recomputed exactly every this many steps of the
/// rotation recurrence.
const REANCHOR: usize = 64;

/// `1/x` for a positive quantum (metres) or frequency (per metre).
pub fn quantum_frequency_convert(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::input(format!("cannot invert non-positive value {x}")));
    }
    Ok(1.0 / x)
}

/// Uniform frequency grid with a region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub step: f64,
    pub roi_min: f64,
    pub roi_max: f64,
}

impl Default for FrequencyGrid {
    /// `ω ∈ [0.05, 1.2]` step 0.001, ROI `[0.15, 0.33]` (quanta 3–6.5 m).
    fn default() -> Self {
        Self { omega_min: 0.05, omega_max: 1.2, step: 0.001, roi_min: 0.15, roi_max: 0.33 }
    }
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, step: f64, roi_min: f64, roi_max: f64) -> Result<Self> {
        let g = Self { omega_min, omega_max, step, roi_min, roi_max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega_min, self.omega_max, self.step, self.roi_min, self.roi_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("frequency grid values must be finite"));
        }
        if !(self.omega_min > 0.0 && self.omega_min < self.omega_max) {
            return Err(Error::param(format!(
                "need 0 < omega_min < omega_max, got [{}, {}]",
                self.omega_min, self.omega_max
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::param(format!("frequency step must be positive, got {}", self.step)));
        }
        if (self.omega_max - self.omega_min) / self.step > 1e7 {
            return Err(Error::param("frequency grid has more than 10^7 points"));
        }
        let slack = 1e-9 * self.omega_max;
        if !(self.roi_min < self.roi_max
            && self.roi_min >= self.omega_min - slack
            && self.roi_max <= self.omega_max + slack)
        {
            return Err(Error::param(format!(
                "region of interest [{}, {}] must be a nonempty sub-interval of [{}, {}]",
                self.roi_min, self.roi_max, self.omega_min, self.omega_max
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.omega_max - self.omega_min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frequency(&self, j: usize) -> f64 {
        self.omega_min + j as f64 * self.step
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.frequency(j)).collect()
    }

    pub fn in_roi(&self, omega: f64) -> bool {
        let slack = 1e-9 * self.step;
        omega >= self.roi_min - slack && omega <= self.roi_max + slack
    }

    /// Grid index nearest to `omega`, clamped to the grid.
    pub fn nearest_index(&self, omega: f64) -> usize {
        let j = ((omega - self.omega_min) / self.step).round();
        (j.max(0.0) as usize).min(self.len() - 1)
    }

    /// Index range covering the ROI plus one neighbour on each side.
    fn roi_window(&self) -> std::ops::Range<usize> {
        let lo = ((self.roi_min - self.omega_min) / self.step - 1e-9).ceil().max(0.0) as usize;
        let hi = (((self.roi_max - self.omega_min) / self.step + 1e-9).floor() as usize).min(self.len() - 1);
        lo.saturating_sub(1)..(hi + 2).min(self.len())
    }
}

/// Quantogram heights at one frequency, by direct summation.
pub fn quantogram_at(values: &[f64], omega: f64) -> f64 {
    let sum: f64 = values.iter().map(|x| (TAU * omega * x).cos()).sum();
    (2.0 / values.len() as f64).sqrt() * sum
}

/// Heights at `omega_start + j·step` for `j < n`.
///
/// Cosines along the grid come from a complex rotation recurrence, re-seeded
/// from exact values every [`REANCHOR`] steps.
pub fn quantogram_heights(values: &[f64], omega_start: f64, step: f64, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for &x in values {
        let (rs, rc) = (TAU * step * x).sin_cos();
        let mut block = 0;
        while block < n {
            let (mut s, mut c) = (TAU * (omega_start + block as f64 * step) * x).sin_cos();
            let end = (block + REANCHOR).min(n);
            for a in &mut acc[block..end] {
                *a += c;
                let next_c = c * rc - s * rs;
                s = s * rc + c * rs;
                c = next_c;
            }
            block = end;
        }
    }
    let scale = (2.0 / values.len() as f64).sqrt();
    for a in &mut acc {
        *a *= scale;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantogramCurve {
    pub frequencies: Vec<f64>,
    pub heights: Vec<f64>,
    /// Number of measurements behind the curve.
    pub n: usize,
}

pub fn cosine_quantogram(data: &MeasurementSet, grid: &FrequencyGrid) -> Result<QuantogramCurve> {
    grid.validate()?;
    if data.len() < 2 {
        return Err(Error::input(format!(
            "quantogram needs at least 2 measurements, got {}",
            data.len()
        )));
    }
    Ok(QuantogramCurve {
        frequencies: grid.frequencies(),
        heights: quantogram_heights(data.values(), grid.omega_min, grid.step, grid.len()),
        n: data.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    pub n_sims: usize,
    pub rank: usize,
    pub jitter_fraction: f64,
    pub seed: u64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self { n_sims: 499, rank: 5, jitter_fraction: 0.15, seed: DEFAULT_SEED }
    }
}

impl BoundaryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rank >= 1 && self.rank <= self.n_sims) {
            return Err(Error::param(format!(
                "need 1 <= rank <= nsims, got rank {} with {} simulations",
                self.rank, self.n_sims
            )));
        }
        if !(self.jitter_fraction > 0.0) {
            return Err(Error::param(format!(
                "jitter fraction must be positive, got {}",
                self.jitter_fraction
            )));
        }
        if !(self.jitter_fraction < 1.0) {
            return Err(Error::param(format!(
                "jitter fraction must be below 1 to keep lengths positive, got {}",
                self.jitter_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub frequencies: Vec<f64>,
    pub boundary_heights: Vec<f64>,
    pub n_sims: usize,
    pub rank: usize,
    pub seed: u64,
}

/// One jittered copy of the data: `Xᵢ·(1 + f·Uᵢ)`, `Uᵢ ~ U[−1, 1]`.
pub fn jitter_values<R: Rng + ?Sized>(rng: &mut R, values: &[f64], fraction: f64) -> Vec<f64> {
    values.iter().map(|x| x * (1.0 + fraction * rng.random_range(-1.0..=1.0))).collect()
}

/// Quantogram heights of `n_sims` jittered replicates, replicate `s` drawn
/// from substream `s` of `seed`.
pub fn simulate_replicates(
    values: &[f64],
    omega_start: f64,
    step: f64,
    n: usize,
    cfg: &BoundaryConfig,
) -> Vec<Vec<f64>> {
    (0..cfg.n_sims)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(cfg.seed, s as u64);
            let jittered = jitter_values(&mut rng, values, cfg.jitter_fraction);
            quantogram_heights(&jittered, omega_start, step, n)
        })
        .collect()
}

/// Pointwise `rank`-th largest height over the replicates.
pub fn rank_envelope(replicates: &[Vec<f64>], rank: usize) -> Vec<f64> {
    let n = replicates.first().map_or(0, Vec::len);
    let mut column = vec![0.0; replicates.len()];
    (0..n)
        .map(|j| {
            for (c, r) in column.iter_mut().zip(replicates) {
                *c = r[j];
            }
            let (_, kth, _) = column.select_nth_unstable_by(rank - 1, |a, b| b.total_cmp(a));
            *kth
        })
        .collect()
}

pub fn simulate_boundary(
    data: &MeasurementSet,
    grid: &FrequencyGrid,
    cfg: &BoundaryConfig,
) -> Result<BoundaryCurve> {
    grid.validate()?;
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::input("boundary simulation needs at least 2 measurements"));
    }
    let reps = simulate_replicates(data.values(), grid.omega_min, grid.step, grid.len(), cfg);
    Ok(BoundaryCurve {
        frequencies: grid.frequencies(),
        boundary_heights: rank_envelope(&reps, cfg.rank),
        n_sims: cfg.n_sims,
        rank: cfg.rank,
        seed: cfg.seed,
    })
}

/// A local maximum of a quantogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub quantum: f64,
    pub frequency: f64,
    pub height: f64,
    pub grid_index: usize,
    pub in_roi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRange {
    /// Half-width of the central interval of bootstrap peak quanta, metres.
    pub half_width: f64,
    pub lower_quantum: f64,
    pub upper_quantum: f64,
    pub level: f64,
    pub replicates_used: usize,
    pub replicates_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    /// Highest local maximum inside the region of interest.
    pub primary: Option<Peak>,
    pub exceeds_boundary: Option<bool>,
    pub boundary_height: Option<f64>,
    pub error_range: Option<ErrorRange>,
    /// Every other strict local maximum, highest first.
    pub secondary_peaks: Vec<Peak>,
    pub diagnostic: Option<String>,
}

impl PeakReport {
    /// Highest local maximum anywhere on the grid.
    pub fn dominant(&self) -> Option<Peak> {
        self.primary
            .iter()
            .chain(self.secondary_peaks.first())
            .copied()
            .max_by(|a, b| a.height.total_cmp(&b.height))
    }
}

/// Quadratic refinement of the strict local maximum at `j`.
fn refine(frequencies: &[f64], heights: &[f64], j: usize) -> (f64, f64) {
    let (a, b, c) = (heights[j - 1], heights[j], heights[j + 1]);
    let step = frequencies[j + 1] - frequencies[j];
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return (frequencies[j], b);
    }
    let p = 0.5 * (a - c) / denom;
    (frequencies[j] + p * step, b - 0.25 * (a - c) * p)
}

fn local_maxima(heights: &[f64]) -> impl Iterator<Item = usize> + '_ {
    (1..heights.len().saturating_sub(1))
        .filter(move |&j| heights[j] > heights[j - 1] && heights[j] > heights[j + 1])
}

/// Locate the ROI peak and list the other local maxima.
pub fn find_peak(
    curve: &QuantogramCurve,
    boundary: Option<&BoundaryCurve>,
    grid: &FrequencyGrid,
) -> Result<PeakReport> {
    if curve.heights.is_empty() || curve.heights.len() != curve.frequencies.len() {
        return Err(Error::input("quantogram curve is empty or malformed"));
    }
    if curve.frequencies.len() != grid.len() {
        return Err(Error::input(format!(
            "curve has {} points but the grid has {}",
            curve.frequencies.len(),
            grid.len()
        )));
    }
    if let Some(b) = boundary {
        if b.boundary_heights.len() != curve.heights.len() {
            return Err(Error::input("boundary and curve are on different grids"));
        }
    }

    let mut peaks: Vec<Peak> = local_maxima(&curve.heights)
        .map(|j| {
            let (frequency, height) = refine(&curve.frequencies, &curve.heights, j);
            Peak {
                quantum: 1.0 / frequency,
                frequency,
                height,
                grid_index: j,
                in_roi: grid.in_roi(curve.frequencies[j]),
            }
        })
        .collect();
    // Highest first; equal heights keep grid order.
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.grid_index.cmp(&b.grid_index)));

    let primary_pos = peaks.iter().position(|p| p.in_roi);
    let primary = primary_pos.map(|i| peaks.remove(i));
    let (exceeds_boundary, boundary_height) = match (primary, boundary) {
        (Some(p), Some(b)) => {
            let bh = b.boundary_heights[grid.nearest_index(p.frequency)];
            (Some(p.height > bh), Some(bh))
        }
        _ => (None, None),
    };
    let diagnostic = primary.is_none().then(|| {
        format!(
            "no local maximum of the quantogram inside the region of interest [{}, {}]",
            grid.roi_min, grid.roi_max
        )
    });
    Ok(PeakReport {
        primary,
        exceeds_boundary,
        boundary_height,
        error_range: None,
        secondary_peaks: peaks,
        diagnostic,
    })
}

/// Refined ROI peak quantum from heights over the ROI window of the grid.
fn roi_peak_quantum(values: &[f64], grid: &FrequencyGrid) -> Option<f64> {
    let window = grid.roi_window();
    let freqs: Vec<f64> = window.clone().map(|j| grid.frequency(j)).collect();
    let heights = quantogram_heights(values, freqs[0], grid.step, freqs.len());
    local_maxima(&heights)
        .filter(|&j| grid.in_roi(freqs[j]))
        .max_by(|&a, &b| heights[a].total_cmp(&heights[b]).then(b.cmp(&a)))
        .map(|j| 1.0 / refine(&freqs, &heights, j).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    /// Optional multiplicative smoothing jitter applied to each resample
    /// (0 = plain nonparametric bootstrap).
    pub jitter_fraction: f64,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_boot: 199, jitter_fraction: 0.0, level: 0.95, seed: DEFAULT_SEED }
    }
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap range of the ROI peak quantum.
pub fn estimate_error_range(
    data: &MeasurementSet,
    grid: &FrequencyGrid,
    cfg: &BootstrapConfig,
) -> Result<ErrorRange> {
    grid.validate()?;
    if cfg.n_boot < 2 {
        return Err(Error::param("bootstrap needs at least 2 replicates"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::param(format!("interval level must lie in (0, 1), got {}", cfg.level)));
    }
    if !(cfg.jitter_fraction >= 0.0 && cfg.jitter_fraction < 1.0) {
        return Err(Error::param("bootstrap jitter fraction must lie in [0, 1)"));
    }
    if data.len() < 2 {
        return Err(Error::degenerate(format!(
            "error range needs at least 2 measurements, got {}",
            data.len()
        )));
    }
    let values = data.values();
    if roi_peak_quantum(values, grid).is_none() {
        return Err(Error::degenerate("no quantogram peak inside the region of interest"));
    }
    let quanta: Vec<Option<f64>> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, b as u64);
            let mut resample: Vec<f64> =
                (0..values.len()).map(|_| values[rng.random_range(0..values.len())]).collect();
            if cfg.jitter_fraction > 0.0 {
                resample = jitter_values(&mut rng, &resample, cfg.jitter_fraction);
            }
            roi_peak_quantum(&resample, grid)
        })
        .collect();
    let mut kept: Vec<f64> = quanta.into_iter().flatten().collect();
    let dropped = cfg.n_boot - kept.len();
    if 2 * dropped > cfg.n_boot {
        return Err(Error::degenerate(format!(
            "{dropped} of {} bootstrap replicates had no peak in the region of interest",
            cfg.n_boot
        )));
    }
    kept.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - cfg.level);
    let lower = quantile(&kept, tail);
    let upper = quantile(&kept, 1.0 - tail);
    Ok(ErrorRange {
        half_width: 0.5 * (upper - lower),
        lower_quantum: lower,
        upper_quantum: upper,
        level: cfg.level,
        replicates_used: kept.len(),
        replicates_dropped: dropped,
    })
}

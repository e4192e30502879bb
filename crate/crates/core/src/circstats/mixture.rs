//! EM fitting of two-component circular mixtures: uniform + von Mises, and
//! von Mises + von Mises.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{circular_mean_resultant, fit_weighted, CircularSample, VonMisesParams};
use crate::error::{Error, Result};
use crate::rng::{substream, DEFAULT_SEED};

/// Component weights below this mark the fit as having a collapsed component.
pub const DEGENERATE_WEIGHT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureKind {
    /// Column 0 is the uniform component, column 1 the von Mises component.
    UniformVonMises,
    /// Two von Mises components, ordered by mean direction.
    TwoVonMises,
}

impl MixtureKind {
    fn n_vonmises(self) -> usize {
        match self {
            MixtureKind::UniformVonMises => 1,
            MixtureKind::TwoVonMises => 2,
        }
    }
}

/// Starting point for EM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureStart {
    pub weights: [f64; 2],
    pub components: Vec<VonMisesParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub kappa_cap: f64,
    /// Replaces the moment-based start when given.
    pub init: Option<MixtureStart>,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            n_starts: 10,
            seed: DEFAULT_SEED,
            kappa_cap: super::DEFAULT_KAPPA_CAP,
            init: None,
        }
    }
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 || self.n_starts < 1 {
            return Err(Error::param("mixture fit needs max_iter >= 1 and n_starts >= 1"));
        }
        if !(self.tol > 0.0) || !(self.kappa_cap > 0.0) {
            return Err(Error::param("mixture tolerance and kappa cap must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub kind: MixtureKind,
    pub weights: [f64; 2],
    pub components: Vec<VonMisesParams>,
    /// Per observation, posterior probability of each component.
    pub responsibilities: Vec<[f64; 2]>,
    pub log_likelihood: f64,
    /// Log-likelihood at the start and after every EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Index of the restart that produced this fit.
    pub restart: usize,
    pub degenerate_component: bool,
}

impl MixtureFit {
    /// Weight of the (first) von Mises component.
    pub fn vonmises_weight(&self) -> f64 {
        match self.kind {
            MixtureKind::UniformVonMises => self.weights[1],
            MixtureKind::TwoVonMises => self.weights[0],
        }
    }

    /// Column of `responsibilities` holding the (first) von Mises component.
    pub fn vonmises_column(&self) -> usize {
        match self.kind {
            MixtureKind::UniformVonMises => 1,
            MixtureKind::TwoVonMises => 0,
        }
    }

    /// Posterior responsibilities for a new angle under the fitted mixture.
    pub fn responsibility_at(&self, theta: f64) -> [f64; 2] {
        let params = Params { weights: self.weights, components: self.components.clone() };
        params.posterior(self.kind, theta).0
    }
}

#[derive(Debug, Clone)]
struct Params {
    weights: [f64; 2],
    components: Vec<VonMisesParams>,
}

impl Params {
    fn ln_component(&self, kind: MixtureKind, k: usize, theta: f64) -> f64 {
        match (kind, k) {
            (MixtureKind::UniformVonMises, 0) => -(TAU.ln()),
            (MixtureKind::UniformVonMises, _) => self.components[0].ln_density(theta),
            (MixtureKind::TwoVonMises, k) => self.components[k].ln_density(theta),
        }
    }

    /// Responsibilities and log mixture density at `theta`.
    fn posterior(&self, kind: MixtureKind, theta: f64) -> ([f64; 2], f64) {
        let mut terms = [f64::NEG_INFINITY; 2];
        for (k, term) in terms.iter_mut().enumerate() {
            if self.weights[k] > 0.0 {
                *term = self.weights[k].ln() + self.ln_component(kind, k, theta);
            }
        }
        let top = terms[0].max(terms[1]);
        let e0 = (terms[0] - top).exp();
        let e1 = (terms[1] - top).exp();
        let sum = e0 + e1;
        ([e0 / sum, e1 / sum], top + sum.ln())
    }
}

fn e_step(kind: MixtureKind, sample: &CircularSample, params: &Params) -> (Vec<[f64; 2]>, f64) {
    let mut ll = 0.0;
    let resp = sample
        .angles()
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let (r, ln_f) = params.posterior(kind, theta);
            ll += sample.weight(i) * ln_f;
            r
        })
        .collect();
    (resp, ll)
}

fn m_step(
    kind: MixtureKind,
    sample: &CircularSample,
    resp: &[[f64; 2]],
    prev: &Params,
    kappa_cap: f64,
) -> Params {
    let total: f64 = (0..sample.len()).map(|i| sample.weight(i)).sum();
    let mut mass = [0.0; 2];
    for (i, r) in resp.iter().enumerate() {
        let w = sample.weight(i);
        mass[0] += w * r[0];
        mass[1] += w * r[1];
    }
    let weights = [mass[0] / total, mass[1] / total];
    let vm_columns: &[usize] = match kind {
        MixtureKind::UniformVonMises => &[1],
        MixtureKind::TwoVonMises => &[0, 1],
    };
    let components = vm_columns
        .iter()
        .zip(&prev.components)
        .map(|(&col, old)| {
            if mass[col] <= 0.0 {
                return *old;
            }
            fit_weighted(sample.angles(), |i| sample.weight(i) * resp[i][col], kappa_cap)
                .map(|f| f.params)
                .unwrap_or(*old)
        })
        .collect();
    Params { weights, components }
}

struct Run {
    params: Params,
    resp: Vec<[f64; 2]>,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn run_em(kind: MixtureKind, sample: &CircularSample, start: Params, cfg: &MixtureConfig) -> Run {
    let mut params = start;
    let (mut resp, mut ll) = e_step(kind, sample, &params);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        params = m_step(kind, sample, &resp, &params, cfg.kappa_cap);
        let (next_resp, next_ll) = e_step(kind, sample, &params);
        resp = next_resp;
        trace.push(next_ll);
        let gain = next_ll - ll;
        ll = next_ll;
        if gain < cfg.tol {
            converged = true;
            break;
        }
    }
    Run { params, resp, trace, converged, iterations }
}

fn moment_start(kind: MixtureKind, sample: &CircularSample, cap: f64) -> Result<Params> {
    let all = fit_weighted(sample.angles(), |i| sample.weight(i), cap)?;
    match kind {
        MixtureKind::UniformVonMises => Ok(Params {
            weights: [0.5, 0.5],
            components: vec![VonMisesParams::new(all.params.mu(), all.params.kappa().max(0.5))?],
        }),
        MixtureKind::TwoVonMises => {
            // Split at the overall mean direction and fit each side.
            let centre = all.params.mu();
            let side = |i: usize| (sample.angles()[i] - centre).sin() >= 0.0;
            let mut components = Vec::with_capacity(2);
            for (which, offset) in [(false, -PI / 2.0), (true, PI / 2.0)] {
                let half = fit_weighted(
                    sample.angles(),
                    |i| if side(i) == which { sample.weight(i) } else { 0.0 },
                    cap,
                );
                let params = match half {
                    Ok(f) if !f.degenerate_mean => f.params,
                    _ => VonMisesParams::new(centre + offset, 1.0)?,
                };
                components.push(params);
            }
            Ok(Params { weights: [0.5, 0.5], components })
        }
    }
}

fn random_start(kind: MixtureKind, seed: u64, index: usize) -> Params {
    let mut rng = substream(seed, index as u64);
    let components = (0..kind.n_vonmises())
        .map(|_| {
            let mu = rng.random_range(0.0..TAU);
            let kappa = rng.random_range(0.5..8.0);
            VonMisesParams { mu, kappa }
        })
        .collect();
    let w: f64 = rng.random_range(0.2..0.8);
    Params { weights: [w, 1.0 - w], components }
}

/// Fit a two-component circular mixture by EM with seeded restarts.
///
/// Restart 0 starts from sample moments (or `cfg.init`); the others from
/// random mean directions. The result is the highest-likelihood converged
/// run, ties going to the lowest restart index. If no run converges the best
/// run is returned with `converged = false`.
pub fn fit_mixture(
    sample: &CircularSample,
    kind: MixtureKind,
    cfg: &MixtureConfig,
) -> Result<MixtureFit> {
    if sample.len() < 5 {
        return Err(Error::input(format!(
            "mixture fit needs at least 5 angles, got {}",
            sample.len()
        )));
    }
    cfg.validate()?;
    circular_mean_resultant(sample)?;

    let first = match &cfg.init {
        Some(init) => {
            if init.components.len() != kind.n_vonmises() {
                return Err(Error::param("initial start has the wrong number of components"));
            }
            let s = init.weights[0] + init.weights[1];
            if init.weights.iter().any(|w| !(*w >= 0.0)) || !(s > 0.0) {
                return Err(Error::param("initial weights must be nonnegative"));
            }
            Params {
                weights: [init.weights[0] / s, init.weights[1] / s],
                components: init.components.clone(),
            }
        }
        None => moment_start(kind, sample, cfg.kappa_cap)?,
    };

    let runs: Vec<Run> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|i| {
            let start =
                if i == 0 { first.clone() } else { random_start(kind, cfg.seed, i) };
            run_em(kind, sample, start, cfg)
        })
        .collect();

    let any_converged = runs.iter().any(|r| r.converged);
    let mut best: Option<(usize, &Run)> = None;
    for (i, run) in runs.iter().enumerate() {
        if any_converged && !run.converged {
            continue;
        }
        let ll = *run.trace.last().unwrap();
        if best.is_none_or(|(_, b)| ll > *b.trace.last().unwrap()) {
            best = Some((i, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");

    let mut weights = run.params.weights;
    let mut components = run.params.components.clone();
    let mut responsibilities = run.resp.clone();
    if kind == MixtureKind::TwoVonMises && components[0].mu() > components[1].mu() {
        components.swap(0, 1);
        weights.swap(0, 1);
        for r in &mut responsibilities {
            r.swap(0, 1);
        }
    }
    let degenerate_component = weights.iter().any(|w| *w < DEGENERATE_WEIGHT);

    Ok(MixtureFit {
        kind,
        weights,
        components,
        responsibilities,
        log_likelihood: *run.trace.last().unwrap(),
        log_likelihood_trace: run.trace.clone(),
        converged: run.converged,
        iterations: run.iterations,
        restart,
        degenerate_component,
    })
}

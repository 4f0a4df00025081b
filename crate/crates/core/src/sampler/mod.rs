//! Hamiltonian Monte Carlo over an unconstrained log-density.
//!
//! [`sample`] runs independent chains (in parallel when a rayon pool is
//! available), each with its own keyed random stream, so results depend only
//! on the target and the configuration.

mod adapt;
mod diagnostics;
mod export;
mod integrator;
mod nuts;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Constraint, Likelihood, ModelSpec, Pooling, ToolParams};
use crate::rng::{substream, StreamRng};

pub use adapt::DualAveraging;
pub use diagnostics::{bulk_ess, diagnostics, split_rhat, Diagnostics};
pub use export::{read_draws_csv, write_draws_csv, write_summary_json, ParamSummary, Summary};
pub use integrator::{leapfrog, PhasePoint};
pub use nuts::{TransitionStats, MAX_DELTA_H};

/// A differentiable log-density on `R^d`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log-density at `u`, writing its gradient into `grad`. Non-finite
    /// values mark points outside the support.
    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> f64;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    /// Map a point to the values recorded as draws.
    fn constrain_into(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(u);
    }

    fn positive_mask(&self) -> Vec<bool> {
        vec![false; self.dim()]
    }

    fn model_info(&self) -> Option<ModelInfo> {
        None
    }
}

impl LogDensity for ModelSpec {
    fn dim(&self) -> usize {
        ModelSpec::dim(self)
    }

    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(u, grad)
    }

    fn param_names(&self) -> Vec<String> {
        self.layout().names()
    }

    fn constrain_into(&self, u: &[f64], out: &mut [f64]) {
        ModelSpec::constrain_into(self, u, out)
    }

    fn positive_mask(&self) -> Vec<bool> {
        self.layout()
            .params
            .iter()
            .map(|p| p.constraint == Constraint::Positive)
            .collect()
    }

    fn model_info(&self) -> Option<ModelInfo> {
        Some(ModelInfo {
            pooling: self.pooling(),
            likelihood: self.likelihood(),
            tools: self.layout().tools.clone(),
        })
    }
}

/// What a set of draws needs to be read as line parameters per tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub pooling: Pooling,
    pub likelihood: Likelihood,
    pub tools: Vec<ToolParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Algorithm {
    Nuts,
    /// Fixed trajectory length; kept as a fallback and for testing.
    StaticHmc { n_leapfrog: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub warmup: usize,
    pub draws: usize,
    pub chains: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    /// Initial points are uniform on `[-init_jitter, init_jitter]^d`.
    pub init_jitter: f64,
    pub adapt_metric: bool,
    pub algorithm: Algorithm,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            warmup: 1000,
            draws: 2000,
            chains: 4,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            init_jitter: 1.0,
            adapt_metric: true,
            algorithm: Algorithm::Nuts,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::config("draws", "must be >= 1"));
        }
        if self.chains == 0 {
            return Err(Error::config("chains", "must be >= 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config("target_accept", "must lie in (0, 1)"));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::config("max_tree_depth", "must be >= 1"));
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return Err(Error::config("init_jitter", "must be finite and >= 0"));
        }
        if let Algorithm::StaticHmc { n_leapfrog: 0 } = self.algorithm {
            return Err(Error::config("algorithm.n_leapfrog", "must be >= 1"));
        }
        Ok(())
    }
}

/// Retained draws of every chain, in constrained space.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub positive: Vec<bool>,
    pub n_chains: usize,
    pub n_draws: usize,
    /// Row-major `[chain][draw][param]`.
    pub values: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub divergent: Vec<bool>,
    pub treedepth_saturated: Vec<bool>,
    pub step_size: Vec<f64>,
    pub model: Option<ModelInfo>,
}

impl PosteriorSamples {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.n_draws
    }

    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let d = self.dim();
        let start = (chain * self.n_draws + iter) * d;
        &self.values[start..start + d]
    }

    /// Iterate every retained draw, chain by chain.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim().max(1))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// All draws of parameter `j`, chain by chain.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_draws().map(|d| d[j]).collect()
    }

    /// Draws of parameter `j` split by chain.
    pub fn chains_of(&self, j: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_draws).map(|i| self.draw(c, i)[j]).collect())
            .collect()
    }

    pub fn divergences(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }

    pub fn mean(&self, j: usize) -> f64 {
        let n = self.total_draws() as f64;
        self.iter_draws().map(|d| d[j]).sum::<f64>() / n
    }
}

struct ChainOutput {
    values: Vec<f64>,
    accept: Vec<f64>,
    divergent: Vec<bool>,
    saturated: Vec<bool>,
    step: f64,
}

fn initial_point<T: LogDensity + ?Sized>(target: &T, jitter: f64, rng: &mut StreamRng) -> Result<PhasePoint> {
    let d = target.dim();
    for _ in 0..100 {
        let q: Vec<f64> = (0..d)
            .map(|_| if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 })
            .collect();
        let z = PhasePoint::at(target, q);
        if z.is_finite() {
            return Ok(z);
        }
    }
    Err(Error::Initialization(format!(
        "no finite log-density found in 100 attempts within ±{jitter}"
    )))
}

/// Stan's heuristic: double or halve the step until a single leapfrog step
/// crosses an acceptance probability of 0.8.
fn initial_step_size<T: LogDensity + ?Sized>(
    target: &T,
    z: &PhasePoint,
    inv_mass: &[f64],
    start: f64,
    rng: &mut StreamRng,
) -> f64 {
    let threshold = 0.8f64.ln();
    let mut step = start;
    let mut direction = 0.0;
    for _ in 0..100 {
        let mut trial = z.clone();
        nuts::draw_momentum(&mut trial, inv_mass, rng);
        let h0 = trial.energy(inv_mass);
        integrator::leapfrog_in_place(target, &mut trial, step, inv_mass);
        let delta = h0 - trial.energy(inv_mass);
        if direction == 0.0 {
            direction = if delta > threshold { 1.0 } else { -1.0 };
        } else if (direction > 0.0 && delta <= threshold) || (direction < 0.0 && delta >= threshold) {
            break;
        }
        step = if direction > 0.0 { 2.0 * step } else { 0.5 * step };
        if !(1e-12..=1e7).contains(&step) {
            break;
        }
    }
    step.clamp(1e-12, 1e7)
}

fn run_chain<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = substream(cfg.seed, "chain", chain as u64);
    let d = target.dim();
    let mut z = initial_point(target, cfg.init_jitter, &mut rng)?;
    let mut inv_mass = vec![1.0; d];
    let mut step = initial_step_size(target, &z, &inv_mass, 1.0, &mut rng);
    let mut da = DualAveraging::new(step, cfg.target_accept);
    let mut windows = adapt::WindowSchedule::new(cfg.warmup, cfg.adapt_metric);
    let mut est = adapt::VarianceEstimator::new(d);

    let transition = |z: &PhasePoint, inv_mass: &[f64], step: f64, rng: &mut StreamRng| match cfg.algorithm {
        Algorithm::Nuts => nuts::nuts_transition(target, z, inv_mass, step, cfg.max_tree_depth, rng),
        Algorithm::StaticHmc { n_leapfrog } => nuts::static_hmc_transition(target, z, inv_mass, step, n_leapfrog, rng),
    };

    for _ in 0..cfg.warmup {
        let (next, stats) = transition(&z, &inv_mass, step, &mut rng);
        z = next;
        step = da.update(stats.accept_stat);
        if let Some(var) = windows.observe(&mut est, &z.q) {
            inv_mass = var;
            z = PhasePoint::at(target, z.q);
            step = initial_step_size(target, &z, &inv_mass, step, &mut rng);
            da.restart(step);
        }
    }
    if cfg.warmup > 0 {
        step = da.final_step();
    }

    let mut out = ChainOutput {
        values: Vec::with_capacity(cfg.draws * d),
        accept: Vec::with_capacity(cfg.draws),
        divergent: Vec::with_capacity(cfg.draws),
        saturated: Vec::with_capacity(cfg.draws),
        step,
    };
    let mut buf = vec![0.0; d];
    for _ in 0..cfg.draws {
        let (next, stats) = transition(&z, &inv_mass, step, &mut rng);
        z = next;
        target.constrain_into(&z.q, &mut buf);
        out.values.extend_from_slice(&buf);
        out.accept.push(stats.accept_stat);
        out.divergent.push(stats.divergent);
        out.saturated.push(stats.saturated);
    }
    Ok(out)
}

/// Draw posterior samples from `target`. Fails with
/// [`Error::InferenceFailure`] when every transition of some chain diverged.
pub fn sample<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    if target.dim() == 0 {
        return Err(Error::InvalidArgument("target has zero dimensions".into()));
    }
    let chains: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(target, cfg, c))
        .collect::<Result<_>>()?;

    let mut samples = PosteriorSamples {
        names: target.param_names(),
        positive: target.positive_mask(),
        n_chains: cfg.chains,
        n_draws: cfg.draws,
        values: Vec::with_capacity(cfg.chains * cfg.draws * target.dim()),
        accept_stat: Vec::new(),
        divergent: Vec::new(),
        treedepth_saturated: Vec::new(),
        step_size: Vec::new(),
        model: target.model_info(),
    };
    let mut all_divergent = None;
    for (i, c) in chains.into_iter().enumerate() {
        if c.divergent.iter().all(|d| *d) {
            all_divergent = Some(i);
        }
        samples.values.extend(c.values);
        samples.accept_stat.extend(c.accept);
        samples.divergent.extend(c.divergent);
        samples.treedepth_saturated.extend(c.saturated);
        samples.step_size.push(c.step);
    }
    let saturated = samples.treedepth_saturated.iter().filter(|s| **s).count();
    if saturated > 0 {
        log::warn!("{saturated} transitions hit the maximum tree depth");
    }
    if let Some(chain) = all_divergent {
        let diag = diagnostics(&samples).unwrap_or_default();
        return Err(Error::InferenceFailure {
            reason: format!("every transition of chain {chain} diverged"),
            diagnostics: Box::new(diag),
        });
    }
    Ok(samples)
}

//! Convergence diagnostics on rank-normalised split chains.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::PosteriorSamples;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub names: Vec<String>,
    /// Split R-hat per parameter; NaN when the parameter is constant.
    pub rhat: Vec<f64>,
    /// Bulk effective sample size per parameter; 0 when constant.
    pub ess_bulk: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub mean_accept: f64,
    pub divergences: usize,
    pub treedepth_saturations: usize,
}

impl Diagnostics {
    /// Largest finite R-hat, or NaN if none is finite.
    pub fn max_rhat(&self) -> f64 {
        self.rhat
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess_bulk
            .iter()
            .zip(&self.degenerate)
            .filter(|(_, d)| !**d)
            .map(|(e, _)| *e)
            .fold(f64::NAN, f64::min)
    }

    /// Whether every non-degenerate parameter has R-hat at most `limit`.
    pub fn converged(&self, limit: f64) -> bool {
        self.rhat
            .iter()
            .zip(&self.degenerate)
            .all(|(r, d)| *d || *r <= limit)
    }
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        // Drop the middle draw of odd-length chains.
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Replace values by normal scores of their average ranks across all chains.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| v.iter().enumerate().map(move |(i, x)| (*x, c, i)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = all.len() as f64;
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based average rank of the tie block.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, k) in &all[i..=j] {
            out[c][k] = z;
        }
        i = j + 1;
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn rhat_classic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = n * var(&means);
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|x| *x == first)
}

/// Rank-normalised split R-hat; NaN for constant input.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) || is_constant(chains) {
        return f64::NAN;
    }
    rhat_classic(&rank_normalize(&split(chains)))
}

fn autocov(x: &[f64], lag: usize) -> f64 {
    let m = mean(x);
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain ESS with Geyer's initial monotone sequence.
fn ess_classic(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let chain_var: Vec<f64> = chains.iter().map(|c| autocov(c, 0) * nf / (nf - 1.0)).collect();
    let mean_var = mean(&chain_var);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if chains.len() > 1 {
        var_plus += var(&chains.iter().map(|c| mean(c)).collect::<Vec<_>>());
    }
    let acov = |s: usize| mean(&chains.iter().map(|c| autocov(c, s)).collect::<Vec<_>>());
    let mut rho = vec![0.0; n + 2];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut s = 1;
    while s + 4 < n && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - acov(s + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - acov(s + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho[max_s + 1] = rho_even;
    }
    let mut s = 1;
    while s + 3 <= max_s {
        if rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s] {
            rho[s + 1] = (rho[s - 1] + rho[s]) / 2.0;
            rho[s + 2] = rho[s + 1];
        }
        s += 2;
    }
    let total = m * nf;
    let tau = (-1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1]).max(1.0 / total.log10());
    total / tau
}

/// Bulk effective sample size of rank-normalised split chains; 0 for
/// constant input.
pub fn bulk_ess(chains: &[Vec<f64>]) -> f64 {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) || is_constant(chains) {
        return 0.0;
    }
    ess_classic(&rank_normalize(&split(chains)))
}

/// Per-parameter R-hat and bulk ESS plus sampler health counters. Needs at
/// least two chains of four draws.
pub fn diagnostics(samples: &PosteriorSamples) -> Result<Diagnostics> {
    if samples.n_chains < 2 || samples.n_draws < 4 {
        return Err(Error::InsufficientDraws(format!(
            "need >= 2 chains of >= 4 draws, got {} x {}",
            samples.n_chains, samples.n_draws
        )));
    }
    let mut out = Diagnostics {
        names: samples.names.clone(),
        mean_accept: mean(&samples.accept_stat),
        divergences: samples.divergences(),
        treedepth_saturations: samples.treedepth_saturated.iter().filter(|s| **s).count(),
        ..Diagnostics::default()
    };
    for j in 0..samples.dim() {
        let chains = samples.chains_of(j);
        let constant = is_constant(&chains);
        out.degenerate.push(constant);
        out.rhat.push(split_rhat(&chains));
        out.ess_bulk.push(bulk_ess(&chains));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(chains: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..chains)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn iid_chains_look_converged() {
        let c = iid(4, 1000, 1);
        let r = split_rhat(&c);
        assert!((r - 1.0).abs() < 0.01, "rhat {r}");
        let e = bulk_ess(&c);
        assert!(e > 3000.0 && e < 5000.0, "ess {e}");
    }

    #[test]
    fn shifted_chain_detected() {
        let mut c = iid(4, 500, 2);
        c[0].iter_mut().for_each(|x| *x += 3.0);
        assert!(split_rhat(&c) > 1.1);
    }

    #[test]
    fn trend_within_chain_detected() {
        // Split chains catch a drift that whole-chain means would hide.
        let c: Vec<Vec<f64>> = (0..2).map(|_| (0..400).map(|i| i as f64 / 100.0).collect()).collect();
        assert!(split_rhat(&c) > 1.5);
    }

    #[test]
    fn autocorrelated_chain_has_low_ess() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..1000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = 0.9 * x + e;
                        x
                    })
                    .collect()
            })
            .collect();
        // AR(1) with phi = 0.9 has ESS/N about (1 - phi) / (1 + phi).
        let e = bulk_ess(&chains);
        assert!(e > 100.0 && e < 400.0, "ess {e}");
    }

    #[test]
    fn constant_parameter_is_degenerate() {
        let c = vec![vec![2.0; 10]; 3];
        assert!(split_rhat(&c).is_nan());
        assert_eq!(bulk_ess(&c), 0.0);
    }
}

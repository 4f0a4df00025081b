//! Forecasts, threshold-exceedance probabilities and failure times derived
//! from posterior draws.

use std::io::Write;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{PopulationDataset, ToolId};
use crate::error::{Error, Result};
use crate::model::Likelihood;
use crate::rng::substream;
use crate::sampler::PosteriorSamples;
use crate::stats::{mean_sd, quantile_sorted};

/// Whether exceedance counts the latent line alone or a noisy predictive
/// draw around it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceedanceMode {
    #[default]
    LatentOnly,
    WithNoise,
}

/// Per-draw `(slope, intercept, noise scale)` of one tool.
pub fn tool_lines(samples: &PosteriorSamples, tool: ToolId) -> Result<Vec<(f64, f64, f64)>> {
    let info = samples
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("samples carry no model layout".into()))?;
    let t = info
        .tools
        .iter()
        .find(|t| t.tool_id == tool)
        .ok_or(Error::UnknownTool(tool))?;
    Ok(samples
        .iter_draws()
        .map(|d| (d[t.slope], d[t.intercept], d[t.noise]))
        .collect())
}

fn likelihood_of(samples: &PosteriorSamples) -> Likelihood {
    samples
        .model
        .as_ref()
        .map(|m| m.likelihood)
        .unwrap_or(Likelihood::Cauchy)
}

fn noise_draw<R: Rng>(family: Likelihood, scale: f64, rng: &mut R) -> f64 {
    match family {
        Likelihood::Cauchy => Cauchy::new(0.0, scale).map(|d| d.sample(rng)).unwrap_or(f64::NAN),
        Likelihood::Gaussian => Normal::new(0.0, scale).map(|d| d.sample(rng)).unwrap_or(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub tool_id: ToolId,
    pub x_grid: Vec<f64>,
    pub n_draws: usize,
    /// Row-major `[draw][grid]` values of `m·x + c`.
    pub latent: Vec<f64>,
    /// Latent plus observation noise, same layout.
    pub predictive: Option<Vec<f64>>,
}

/// Pointwise summary of a forecast along its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub x: f64,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Forecast {
    pub fn latent_at(&self, draw: usize, j: usize) -> f64 {
        self.latent[draw * self.x_grid.len() + j]
    }

    fn column(values: &[f64], n_grid: usize, j: usize) -> Vec<f64> {
        values.iter().skip(j).step_by(n_grid).copied().collect()
    }

    /// Summaries of the predictive draws when present, else of the latent.
    pub fn summarize(&self) -> Vec<ForecastPoint> {
        let values = self.predictive.as_ref().unwrap_or(&self.latent);
        summarize(values, &self.x_grid)
    }

    pub fn summarize_latent(&self) -> Vec<ForecastPoint> {
        summarize(&self.latent, &self.x_grid)
    }
}

fn summarize(values: &[f64], x_grid: &[f64]) -> Vec<ForecastPoint> {
    x_grid
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let mut col = Forecast::column(values, x_grid.len(), j);
            let (mean, sd) = mean_sd(&col);
            col.sort_by(f64::total_cmp);
            ForecastPoint {
                x,
                mean,
                sd,
                q05: quantile_sorted(&col, 0.05),
                q50: quantile_sorted(&col, 0.5),
                q95: quantile_sorted(&col, 0.95),
            }
        })
        .collect()
}

/// Posterior (predictive) curves of one tool over `x_grid`. Noise draws use
/// the stream keyed by `seed` and the tool id.
pub fn forecast(
    samples: &PosteriorSamples,
    tool: ToolId,
    x_grid: &[f64],
    include_noise: bool,
    seed: u64,
) -> Result<Forecast> {
    if x_grid.is_empty() {
        return Err(Error::InvalidArgument("forecast grid is empty".into()));
    }
    let lines = tool_lines(samples, tool)?;
    let mut latent = Vec::with_capacity(lines.len() * x_grid.len());
    for &(m, c, _) in &lines {
        latent.extend(x_grid.iter().map(|x| m * x + c));
    }
    let predictive = include_noise.then(|| {
        let family = likelihood_of(samples);
        let mut rng = substream(seed, "predictive-noise", tool as u64);
        let mut out = latent.clone();
        for (row, &(_, _, s)) in out.chunks_exact_mut(x_grid.len()).zip(&lines) {
            for v in row {
                *v += noise_draw(family, s, &mut rng);
            }
        }
        out
    });
    Ok(Forecast {
        tool_id: tool,
        x_grid: x_grid.to_vec(),
        n_draws: lines.len(),
        latent,
        predictive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceEstimate {
    pub probability: f64,
    pub mode: ExceedanceMode,
    pub x_eval: f64,
    pub n_draws: usize,
    pub n_exceed: usize,
}

/// Fraction of draws whose forecast at `x_eval` lies strictly above
/// `s_crit`. Noise, when requested, comes from `rng`.
pub fn exceedance_probability_with_rng<R: Rng>(
    samples: &PosteriorSamples,
    tool: ToolId,
    x_eval: f64,
    s_crit: f64,
    mode: ExceedanceMode,
    rng: &mut R,
) -> Result<ExceedanceEstimate> {
    if x_eval.is_nan() || x_eval < 0.0 {
        return Err(Error::InvalidArgument(format!("x_eval must be >= 0, got {x_eval}")));
    }
    let lines = tool_lines(samples, tool)?;
    let family = likelihood_of(samples);
    let mut n_exceed = 0;
    for &(m, c, s) in &lines {
        let mut v = m * x_eval + c;
        if mode == ExceedanceMode::WithNoise {
            v += noise_draw(family, s, rng);
        }
        if v > s_crit {
            n_exceed += 1;
        }
    }
    let n = lines.len();
    Ok(ExceedanceEstimate {
        probability: if n == 0 { 0.0 } else { n_exceed as f64 / n as f64 },
        mode,
        x_eval,
        n_draws: n,
        n_exceed,
    })
}

/// [`exceedance_probability_with_rng`] with noise from a fixed stream keyed
/// by the tool and evaluation point, so repeated calls agree.
pub fn exceedance_probability(
    samples: &PosteriorSamples,
    tool: ToolId,
    x_eval: f64,
    s_crit: f64,
    mode: ExceedanceMode,
) -> Result<ExceedanceEstimate> {
    let key = (tool as u64) ^ x_eval.to_bits().rotate_left(17);
    let mut rng = substream(0, "exceedance-noise", key);
    exceedance_probability_with_rng(samples, tool, x_eval, s_crit, mode, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureTimeDistribution {
    pub tool_id: ToolId,
    /// Per-draw crossing distance; `+∞` for lines that never cross.
    pub t_f: Vec<f64>,
}

/// Distance at which one latent line reaches `s_crit`.
pub fn crossing_distance(m: f64, c: f64, s_crit: f64) -> f64 {
    if c >= s_crit {
        0.0
    } else if m > 0.0 {
        (s_crit - c) / m
    } else {
        f64::INFINITY
    }
}

pub fn failure_time(samples: &PosteriorSamples, tool: ToolId, s_crit: f64) -> Result<FailureTimeDistribution> {
    let t_f = tool_lines(samples, tool)?
        .into_iter()
        .map(|(m, c, _)| crossing_distance(m, c, s_crit))
        .collect();
    Ok(FailureTimeDistribution { tool_id: tool, t_f })
}

/// Fraction of draws failing strictly before `t`.
pub fn prob_failure_before(ftd: &FailureTimeDistribution, t: f64) -> f64 {
    if ftd.t_f.is_empty() {
        return 0.0;
    }
    ftd.t_f.iter().filter(|&&f| f < t).count() as f64 / ftd.t_f.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolMse {
    pub tool_id: ToolId,
    pub n_heldout: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub per_tool: Vec<ToolMse>,
    /// Sum of the per-tool means.
    pub total: f64,
}

/// Squared error of the posterior-mean latent prediction at every hidden
/// (unrevealed) point of `dataset`.
pub fn total_mse(samples: &PosteriorSamples, dataset: &PopulationDataset) -> Result<MseReport> {
    let mut per_tool = Vec::new();
    for t in &dataset.tools {
        let hidden: Vec<_> = t
            .observations
            .iter()
            .zip(&t.revealed)
            .filter(|(_, r)| !**r)
            .map(|(o, _)| *o)
            .collect();
        if hidden.is_empty() {
            continue;
        }
        let lines = tool_lines(samples, t.tool_id)?;
        let n = lines.len() as f64;
        let mut sse = 0.0;
        for o in &hidden {
            let pred = lines.iter().map(|(m, c, _)| m * o.x + c).sum::<f64>() / n;
            sse += (pred - o.y).powi(2);
        }
        per_tool.push(ToolMse {
            tool_id: t.tool_id,
            n_heldout: hidden.len(),
            mse: sse / hidden.len() as f64,
        });
    }
    if per_tool.is_empty() {
        return Err(Error::InvalidArgument("no held-out points".into()));
    }
    let total = per_tool.iter().map(|t| t.mse).sum();
    Ok(MseReport { per_tool, total })
}

/// `tool_id,x,mean,q05,q50,q95` rows for each forecast.
pub fn write_forecasts_csv<W: Write>(forecasts: &[Forecast], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tool_id", "x", "mean", "q05", "q50", "q95"])?;
    for f in forecasts {
        for p in f.summarize() {
            w.write_record([
                f.tool_id.to_string(),
                p.x.to_string(),
                p.mean.to_string(),
                p.q05.to_string(),
                p.q50.to_string(),
                p.q95.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{Pooling, ToolParams};
    use crate::sampler::ModelInfo;

    /// Samples of a one-tool model from explicit `(m, c, gamma)` draws.
    pub(crate) fn lines_samples(draws: &[(f64, f64, f64)]) -> PosteriorSamples {
        let values = draws.iter().flat_map(|&(m, c, g)| [m, c, g]).collect();
        PosteriorSamples {
            names: vec!["m[1]".into(), "c[1]".into(), "gamma[1]".into()],
            positive: vec![false, false, true],
            n_chains: 1,
            n_draws: draws.len(),
            values,
            accept_stat: vec![1.0; draws.len()],
            divergent: vec![false; draws.len()],
            treedepth_saturated: vec![false; draws.len()],
            step_size: vec![0.1],
            model: Some(ModelInfo {
                pooling: Pooling::None,
                likelihood: Likelihood::Cauchy,
                tools: vec![ToolParams {
                    tool_id: 1,
                    slope: 0,
                    intercept: 1,
                    noise: 2,
                }],
            }),
        }
    }

    #[test]
    fn latent_line_value() {
        let s = lines_samples(&[(0.1, 0.5, 0.01)]);
        let f = forecast(&s, 1, &[2.0], false, 0).unwrap();
        assert!((f.latent_at(0, 0) - 0.7).abs() < 1e-15);
        assert!(forecast(&s, 1, &[], false, 0).is_err());
        assert!(matches!(forecast(&s, 9, &[1.0], false, 0), Err(Error::UnknownTool(9))));
    }

    #[test]
    fn predictive_noise_is_centred() {
        let draws = vec![(0.1, 0.5, 0.05); 4000];
        let s = lines_samples(&draws);
        let f = forecast(&s, 1, &[1.0], true, 7).unwrap();
        let mut diff: Vec<f64> = f
            .predictive
            .as_ref()
            .unwrap()
            .iter()
            .zip(&f.latent)
            .map(|(p, l)| p - l)
            .collect();
        diff.sort_by(f64::total_cmp);
        let med = quantile_sorted(&diff, 0.5);
        // Sample median of Cauchy(0, g): sd ~ pi g / (2 sqrt(n)).
        let se = std::f64::consts::PI * 0.05 / (2.0 * (diff.len() as f64).sqrt());
        assert!(med.abs() < 3.0 * se, "median {med}, se {se}");
    }

    #[test]
    fn exceedance_examples() {
        let s = lines_samples(&[(0.1, 0.5, 0.01); 3]);
        let e = exceedance_probability(&s, 1, 2.0, 0.9, ExceedanceMode::LatentOnly).unwrap();
        assert_eq!(e.probability, 0.0);
        let s = lines_samples(&[(0.0, 0.85, 0.01), (0.0, 0.95, 0.01)]);
        let e = exceedance_probability(&s, 1, 1.0, 0.9, ExceedanceMode::LatentOnly).unwrap();
        assert_eq!(e.probability, 0.5);
        assert_eq!(e.n_draws, 2);
    }

    #[test]
    fn failure_time_examples() {
        assert!((crossing_distance(0.1, 0.5, 0.9) - 4.0).abs() < 1e-12);
        assert_eq!(crossing_distance(-0.01, 0.5, 0.9), f64::INFINITY);
        assert_eq!(crossing_distance(0.3, 1.0, 0.9), 0.0);
        let all_inf = FailureTimeDistribution {
            tool_id: 1,
            t_f: vec![f64::INFINITY; 4],
        };
        assert_eq!(prob_failure_before(&all_inf, 1e9), 0.0);
        let ftd = FailureTimeDistribution {
            tool_id: 1,
            t_f: vec![2.0, 6.0, 10.0],
        };
        assert!((prob_failure_before(&ftd, 7.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mse_examples() {
        use crate::data::{Observation, ToolSeries};
        let obs = vec![Observation { x: 1.0, y: 0.6 }, Observation { x: 2.0, y: 0.9 }];
        let t = ToolSeries::new(1, obs, vec![true, false]).unwrap();
        let d = PopulationDataset::new(vec![t], 1.0).unwrap();
        // Prediction at x=2 is 0.7, off by 0.2.
        let s = lines_samples(&[(0.1, 0.5, 0.01)]);
        let r = total_mse(&s, &d).unwrap();
        assert!((r.total - 0.04).abs() < 1e-12);
        let exact = lines_samples(&[(0.2, 0.5, 0.01)]);
        assert!(total_mse(&exact, &d).unwrap().total < 1e-24);
        let full = PopulationDataset::new(vec![ToolSeries::revealed_all(1, vec![Observation { x: 1.0, y: 0.6 }]).unwrap()], 1.0)
            .unwrap();
        assert!(total_mse(&s, &full).is_err());
    }

    #[test]
    fn forecast_csv_columns() {
        let s = lines_samples(&[(0.1, 0.5, 0.01), (0.2, 0.5, 0.01)]);
        let f = forecast(&s, 1, &[1.0, 2.0], false, 0).unwrap();
        let mut buf = Vec::new();
        write_forecasts_csv(&[f], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tool_id,x,mean,q05,q50,q95"));
        assert_eq!(lines.count(), 2);
    }
}

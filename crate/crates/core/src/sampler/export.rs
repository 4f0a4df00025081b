use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Diagnostics, PosteriorSamples};
use crate::error::{Error, Result};
use crate::stats::{mean_sd, quantile_sorted};

/// Write one row per retained draw: `chain,iter,<param...>`, both indices
/// 1-based. Values use the shortest representation that round-trips.
pub fn write_draws_csv<W: Write>(samples: &PosteriorSamples, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain".to_string(), "iter".to_string()];
    header.extend(samples.names.iter().cloned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for c in 0..samples.n_chains {
        for i in 0..samples.n_draws {
            row.clear();
            row.push((c + 1).to_string());
            row.push((i + 1).to_string());
            row.extend(samples.draw(c, i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read draws written by [`write_draws_csv`]. Sampler statistics are not
/// part of the file and come back empty.
pub fn read_draws_csv<R: Read>(input: R) -> Result<PosteriorSamples> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[0] != "chain" || &header[1] != "iter" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header chain,iter,<params>".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut values = Vec::new();
    let mut per_chain: Vec<usize> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row as u64 + 2;
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("{s:?}: {e}"),
            })
        };
        let chain: usize = rec[0].parse().map_err(|_| Error::Parse {
            line,
            message: "bad chain index".into(),
        })?;
        if chain == 0 || chain > per_chain.len() + 1 {
            return Err(Error::Parse {
                line,
                message: "chains must be contiguous and 1-based".into(),
            });
        }
        if chain > per_chain.len() {
            per_chain.push(0);
        }
        per_chain[chain - 1] += 1;
        for s in rec.iter().skip(2) {
            values.push(parse(s)?);
        }
    }
    let n_draws = per_chain.first().copied().unwrap_or(0);
    if per_chain.iter().any(|n| *n != n_draws) {
        return Err(Error::InvalidDataset("chains have unequal draw counts".into()));
    }
    Ok(PosteriorSamples {
        positive: vec![false; names.len()],
        names,
        n_chains: per_chain.len(),
        n_draws,
        values,
        accept_stat: Vec::new(),
        divergent: Vec::new(),
        treedepth_saturated: Vec::new(),
        step_size: Vec::new(),
        model: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    /// `None` when the parameter is constant across draws.
    pub rhat: Option<f64>,
    pub ess_bulk: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub chains: usize,
    pub draws: usize,
    pub mean_accept: f64,
    pub divergences: usize,
    pub treedepth_saturations: usize,
    pub step_size: Vec<f64>,
    pub params: Vec<ParamSummary>,
}

impl Summary {
    pub fn new(samples: &PosteriorSamples, diag: &Diagnostics) -> Self {
        let params = (0..samples.dim())
            .map(|j| {
                let mut col = samples.column(j);
                let (mean, sd) = mean_sd(&col);
                col.sort_by(f64::total_cmp);
                ParamSummary {
                    name: samples.names[j].clone(),
                    mean,
                    sd,
                    q05: quantile_sorted(&col, 0.05),
                    q50: quantile_sorted(&col, 0.5),
                    q95: quantile_sorted(&col, 0.95),
                    rhat: Some(diag.rhat[j]).filter(|r| r.is_finite()),
                    ess_bulk: diag.ess_bulk[j],
                    degenerate: diag.degenerate[j],
                }
            })
            .collect();
        Summary {
            chains: samples.n_chains,
            draws: samples.n_draws,
            mean_accept: diag.mean_accept,
            divergences: diag.divergences,
            treedepth_saturations: diag.treedepth_saturations,
            step_size: samples.step_size.clone(),
            params,
        }
    }
}

pub fn write_summary_json<W: Write>(samples: &PosteriorSamples, diag: &Diagnostics, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &Summary::new(samples, diag))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake() -> PosteriorSamples {
        let values: Vec<f64> = (0..2 * 5 * 2).map(|i| 0.1 * i as f64 + 1e-17 * i as f64).collect();
        PosteriorSamples {
            names: vec!["a".into(), "b".into()],
            positive: vec![false, false],
            n_chains: 2,
            n_draws: 5,
            values,
            accept_stat: vec![0.9; 10],
            divergent: vec![false; 10],
            treedepth_saturated: vec![false; 10],
            step_size: vec![0.5, 0.5],
            model: None,
        }
    }

    #[test]
    fn draws_round_trip_exactly() {
        let s = fake();
        let mut buf = Vec::new();
        write_draws_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("chain,iter,a,b\n1,1,"));
        let back = read_draws_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!((back.n_chains, back.n_draws), (2, 5));
    }

    #[test]
    fn constant_parameter_serialises_null_rhat() {
        let mut s = fake();
        for c in 0..2 {
            for i in 0..5 {
                let k = (c * 5 + i) * 2 + 1;
                s.values[k] = 3.0;
            }
        }
        let diag = super::super::diagnostics(&s).unwrap();
        let mut buf = Vec::new();
        write_summary_json(&s, &diag, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert!(v["params"][1]["rhat"].is_null());
        assert_eq!(v["params"][1]["degenerate"], true);
    }
}

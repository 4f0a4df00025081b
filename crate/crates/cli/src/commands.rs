use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rbal::harness::{
    compare, generate_synthetic, gold_standard_replacements, run_periodic, run_risk_based, write_compare_csv,
    write_replacements_csv, BayesRisk, PolicyComparison,
};
use rbal::sampler::{diagnostics, write_draws_csv, write_summary_json};
use rbal::{build_model, sample, Error, Likelihood, PopulationDataset, PriorConfig, SimulationResult};

use crate::config::Loaded;
use crate::output::{Outputs, RunManifest};
use crate::{CliError, FitArgs, GenerateArgs, PolicyArg, ReportArgs, SimulateArgs};

const RHAT_LIMIT: f64 = 1.05;

pub fn generate(run: &Loaded, args: &GenerateArgs, force: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let (data, truth) = generate_synthetic(&run.config.synthetic)?;
    let mut out = Outputs::new(&args.out, &["dataset.csv", "truth.json"], force)?;
    out.write("dataset.csv", |w| data.write_csv(w))?;
    out.write("truth.json", |w| Ok(serde_json::to_writer_pretty(w, &truth)?))?;
    RunManifest::print("generate", &run.hash, run.config.seed, out.written(), started);
    Ok(())
}

fn dataset_path(arg: &Option<PathBuf>, run: &Loaded) -> Option<PathBuf> {
    arg.clone().or_else(|| run.config.dataset.clone())
}

fn read_dataset(path: &PathBuf) -> Result<PopulationDataset, CliError> {
    PopulationDataset::read_csv_path(path, None).map_err(|e| e.context(path.display().to_string()).into())
}

pub fn fit(run: &Loaded, args: &FitArgs, force: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let path = dataset_path(&args.data, run).ok_or_else(|| Error::config("dataset", "pass --data or set `dataset`"))?;
    let data = read_dataset(&path)?;
    let scenario = &run.config.scenario;
    let likelihood: Likelihood = args.likelihood.map(Into::into).unwrap_or(scenario.likelihood);
    let priors = if likelihood == scenario.likelihood {
        scenario.priors.clone()
    } else {
        PriorConfig::default_for(likelihood)
    };
    let model = build_model(args.pooling.into(), likelihood, priors, &data)?;
    let mut cfg = scenario.sampler.clone();
    cfg.chains = args.chains.unwrap_or(cfg.chains);
    cfg.warmup = args.warmup.unwrap_or(cfg.warmup);
    cfg.draws = args.draws.unwrap_or(cfg.draws);
    cfg.validate()?;

    let mut out = Outputs::new(&args.out, &["draws.csv", "summary.json"], force)?;
    let samples = sample(&model, &cfg)?;
    let diag = diagnostics(&samples)?;
    out.write("draws.csv", |w| write_draws_csv(&samples, w))?;
    out.write("summary.json", |w| write_summary_json(&samples, &diag, w))?;
    RunManifest::print("fit", &run.hash, cfg.seed, out.written(), started);
    let rhat = diag.max_rhat();
    if rhat > RHAT_LIMIT && !args.allow_unconverged {
        return Err(CliError::Unconverged(rhat));
    }
    Ok(())
}

pub fn simulate(run: &Loaded, args: &SimulateArgs, force: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let data = match dataset_path(&args.data, run) {
        Some(p) => read_dataset(&p)?.fully_revealed(),
        None => generate_synthetic(&run.config.synthetic)?.0,
    };
    let mut policies = args.policies.clone();
    policies.sort();
    policies.dedup();
    let file_of = |p: PolicyArg| match p {
        PolicyArg::Periodic => "periodic.json",
        PolicyArg::Risk => "risk_based.json",
    };
    let mut planned = vec!["dataset.csv", "gold_standard.json", "compare.csv", "replacements.csv"];
    planned.extend(policies.iter().map(|&p| file_of(p)));
    let mut out = Outputs::new(&args.out, &planned, force)?;

    let scenario = &run.config.scenario;
    let mut model = BayesRisk::new(scenario);
    let gold = gold_standard_replacements(&data, scenario, &mut model)?;
    let mut results = Vec::new();
    for &p in &policies {
        let r = match p {
            PolicyArg::Periodic => run_periodic(&data, scenario, &gold.steps, &mut model),
            PolicyArg::Risk => run_risk_based(&data, scenario, &gold.steps, &mut model),
        }?;
        results.push((p, r));
    }

    out.write("dataset.csv", |w| data.write_csv(w))?;
    out.write("gold_standard.json", |w| gold.result.write_json(w))?;
    for (p, r) in &results {
        out.write(file_of(*p), |w| r.write_json(w))?;
    }
    let mut all: Vec<SimulationResult> = results.into_iter().map(|(_, r)| r).collect();
    let rows = if all.is_empty() { Vec::new() } else { compare(&all)? };
    out.write("compare.csv", |w| write_compare_csv(&rows, w))?;
    all.push(gold.result);
    out.write("replacements.csv", |w| write_replacements_csv(&all, w))?;
    RunManifest::print("simulate", &run.hash, run.config.seed, out.written(), started);
    Ok(())
}

fn markdown(rows: &[PolicyComparison]) -> String {
    let with_reduction = rows.len() > 1;
    let mut s = String::from("| policy | inspections | inspection cost | wasted-life cost | damage cost | total |");
    s.push_str(if with_reduction { " reduction vs first (%) |\n" } else { "\n" });
    s.push_str("|---|---:|---:|---:|---:|---:|");
    s.push_str(if with_reduction { "---:|\n" } else { "\n" });
    for r in rows {
        let l = &r.ledger;
        let _ = write!(
            s,
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            r.policy.label(),
            r.inspections,
            l.inspection_cost,
            l.wasted_life_cost,
            l.damage_cost,
            l.total
        );
        if with_reduction {
            let _ = match r.reduction_percent {
                Some(p) => write!(s, " {p:.2} |"),
                None => write!(s, " |"),
            };
        }
        s.push('\n');
    }
    s
}

pub fn report(_run: &Loaded, args: &ReportArgs, force: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let mut results = Vec::new();
    for p in &args.results {
        let bytes = std::fs::read(p).map_err(|e| Error::from(e).context(p.display().to_string()))?;
        let r = SimulationResult::read_json(&bytes).map_err(|e| e.context(p.display().to_string()))?;
        let recount = r.recount_ledger()?;
        if (recount.total - r.ledger.total).abs() > 1e-12 || recount.inspections != r.ledger.inspections {
            return Err(Error::InvalidArgument(format!(
                "{}: ledger total {} does not match its timeline ({})",
                p.display(),
                r.ledger.total,
                recount.total
            ))
            .into());
        }
        results.push(r);
    }
    let rows = compare(&results)?;
    let table = markdown(&rows);
    print!("{table}");
    if let Some(dir) = &args.out {
        let mut out = Outputs::new(dir, &["report.md", "report.csv"], force)?;
        out.write("report.md", |w| Ok(w.write_all(table.as_bytes())?))?;
        out.write("report.csv", |w| write_compare_csv(&rows, w))?;
        eprintln!("wrote {} files in {:.2}s", out.written().len(), started.elapsed().as_secs_f64());
    }
    Ok(())
}

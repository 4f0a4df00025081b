use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::{Policy, RefitRecord, ScenarioConfig, SimulationResult, TimelineEvent, ToolOutcome, SCHEMA_VERSION};
use crate::data::{PopulationDataset, ToolId, ToolSeries};
use crate::decision::{choose_action, replacement_triggered, settle_ledger, ActionKind, PolicyEvent};
use crate::error::{Error, Result};
use crate::model::{build_model, Pooling};
use crate::predict::{exceedance_probability_with_rng, failure_time, prob_failure_before};
use crate::rng::{derive_seed, substream};
use crate::sampler::{diagnostics, sample, PosteriorSamples, SamplerConfig};

/// Risk of one tool at the next opportunity, given what is visible now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assessment {
    /// Probability the measurement at `x_next` exceeds the threshold.
    pub p_exceed: f64,
    /// Probability the tool has failed before `x_next`.
    pub p_fail_before: f64,
}

pub trait RiskModel {
    fn assess(&mut self, visible: &PopulationDataset, tool: ToolId, x_next: f64) -> Result<Assessment>;

    /// Fits performed so far.
    fn refits(&self) -> Vec<RefitRecord> {
        Vec::new()
    }
}

/// Fixed probabilities, for exercising the policy logic without inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRisk(pub Assessment);

impl RiskModel for ConstantRisk {
    fn assess(&mut self, _: &PopulationDataset, _: ToolId, _: f64) -> Result<Assessment> {
        Ok(self.0)
    }
}

/// Partial-pooling posterior of the visible data. Fits are keyed by the
/// revealed labels, which also seed the sampler, so identical evidence
/// always yields the identical posterior.
pub struct BayesRisk {
    scenario: ScenarioConfig,
    cache: HashMap<[u8; 32], Arc<PosteriorSamples>>,
    records: Vec<RefitRecord>,
}

impl BayesRisk {
    pub fn new(scenario: &ScenarioConfig) -> Self {
        BayesRisk {
            scenario: scenario.clone(),
            cache: HashMap::new(),
            records: Vec::new(),
        }
    }

    pub fn posterior(&mut self, visible: &PopulationDataset) -> Result<Arc<PosteriorSamples>> {
        let key = visible.revealed_hash();
        if let Some(s) = self.cache.get(&key) {
            return Ok(Arc::clone(s));
        }
        let seed = derive_seed(self.scenario.seed, "fit-partial", &key);
        let samples = fit_partial(visible, &self.scenario, seed)?;
        let mut record = RefitRecord {
            revealed_labels: visible.revealed_count(),
            seed,
            divergences: samples.divergences(),
            mean_accept: samples.accept_stat.iter().sum::<f64>() / samples.accept_stat.len().max(1) as f64,
            max_rhat: None,
            min_ess: None,
            mu_m_mean: samples.index_of("mu_m").map(|j| samples.mean(j)),
            mu_c_mean: samples.index_of("mu_c").map(|j| samples.mean(j)),
        };
        if let Ok(d) = diagnostics(&samples) {
            record.max_rhat = Some(d.max_rhat()).filter(|r| r.is_finite());
            record.min_ess = Some(d.min_ess()).filter(|r| r.is_finite());
        }
        self.records.push(record);
        let samples = Arc::new(samples);
        self.cache.insert(key, Arc::clone(&samples));
        Ok(samples)
    }
}

pub(super) fn fit_partial(visible: &PopulationDataset, scenario: &ScenarioConfig, seed: u64) -> Result<PosteriorSamples> {
    fit_pooling(visible, scenario, Pooling::Partial, seed)
}

pub(super) fn fit_pooling(
    visible: &PopulationDataset,
    scenario: &ScenarioConfig,
    pooling: Pooling,
    seed: u64,
) -> Result<PosteriorSamples> {
    let model = build_model(pooling, scenario.likelihood, scenario.priors.clone(), visible)?;
    let cfg = SamplerConfig {
        seed,
        ..scenario.sampler.clone()
    };
    sample(&model, &cfg)
}

impl RiskModel for BayesRisk {
    fn assess(&mut self, visible: &PopulationDataset, tool: ToolId, x_next: f64) -> Result<Assessment> {
        let samples = self.posterior(visible)?;
        let s_crit = self.scenario.decision.s_crit;
        let key = visible.revealed_hash();
        let mut rng = substream(derive_seed(self.scenario.seed, "exceedance", &key), "tool", tool as u64);
        let p_exceed =
            exceedance_probability_with_rng(&samples, tool, x_next, s_crit, self.scenario.exceedance_mode, &mut rng)?
                .probability;
        let p_fail_before = prob_failure_before(&failure_time(&samples, tool, s_crit)?, x_next);
        Ok(Assessment {
            p_exceed,
            p_fail_before,
        })
    }

    fn refits(&self) -> Vec<RefitRecord> {
        self.records.clone()
    }
}

/// Replacement steps chosen with every label revealed.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldStandard {
    pub steps: BTreeMap<ToolId, u32>,
    pub end_of_life: BTreeMap<ToolId, bool>,
    pub result: SimulationResult,
}

fn active_series<'a>(dataset: &'a PopulationDataset, scenario: &ScenarioConfig) -> Result<Vec<&'a ToolSeries>> {
    scenario
        .active_tools
        .iter()
        .map(|&id| dataset.tool(id).ok_or(Error::UnknownTool(id)))
        .collect()
}

/// Earliest step `T` whose failure probability before `x_T` reaches the
/// trigger, under a posterior fitted to all labels of the scenario's tools.
pub fn gold_standard_replacements<M: RiskModel>(
    dataset: &PopulationDataset,
    scenario: &ScenarioConfig,
    model: &mut M,
) -> Result<GoldStandard> {
    scenario.validate()?;
    let full = ScenarioConfig {
        reveal_all_labels: true,
        ..scenario.clone()
    }
    .initial_view(dataset)?;
    let mut steps = BTreeMap::new();
    let mut eol = BTreeMap::new();
    let mut tools = Vec::new();
    for series in active_series(dataset, scenario)? {
        let id = series.tool_id;
        let n = series.len() as u32;
        let mut chosen = None;
        for (i, o) in series.observations.iter().enumerate() {
            let a = model
                .assess(&full, id, o.x)
                .map_err(|e| e.context(format!("gold standard, tool {id}")))?;
            if replacement_triggered(a.p_fail_before, &scenario.decision) {
                chosen = Some((i as u32 + 1, a.p_fail_before));
                break;
            }
        }
        let (step, p) = chosen.map(|(s, p)| (s, Some(p))).unwrap_or((n, None));
        steps.insert(id, step);
        eol.insert(id, chosen.is_none());
        tools.push(ToolOutcome {
            tool_id: id,
            timeline: vec![TimelineEvent {
                step,
                action: ActionKind::Replace,
                p_exceed: None,
                cost_do_nothing: None,
                cost_inspect: None,
                p_fail_before: p,
            }],
            replacement_step: step,
            end_of_life: chosen.is_none(),
            optimal_step: step,
            labels_revealed: full.revealed_count(),
        });
    }
    let mut result = SimulationResult {
        schema_version: SCHEMA_VERSION,
        policy: Policy::GoldStandard,
        dataset_hash: dataset.content_hash(),
        exceedance_mode: scenario.exceedance_mode,
        decision: scenario.decision.clone(),
        tools,
        ledger: Default::default(),
        refits: model.refits(),
    };
    result.ledger = result.recount_ledger()?;
    Ok(GoldStandard {
        steps,
        end_of_life: eol,
        result,
    })
}

/// Online episode of one active tool. Steps `t = prefix .. n-1` are the
/// current positions; from `t > prefix` the label at `t` may be bought
/// before deciding whether to replace ahead of step `t + 1`.
#[allow(clippy::too_many_arguments)]
fn run_episode<M: RiskModel>(
    policy: Policy,
    base: &PopulationDataset,
    series: &ToolSeries,
    scenario: &ScenarioConfig,
    model: &mut M,
    optimal_step: u32,
    horizon: Option<u32>,
) -> Result<ToolOutcome> {
    let id = series.tool_id;
    let n = series.len();
    let prefix = scenario.prefix_len.min(n);
    let mut visible = base.clone();
    let mut timeline = Vec::new();
    let mut replaced = None;
    let ctx = |t: usize| format!("{} policy, tool {id}, step {t}", policy.label());

    for t in prefix.max(1)..n {
        if horizon.is_some_and(|h| t as u32 > h) {
            break;
        }
        let x_next = series.observations[t].x;
        if t > prefix {
            let idx = t - 1;
            let already = visible.tool(id).map(|s| s.revealed[idx]).unwrap_or(false);
            let a = model.assess(&visible, id, x_next).map_err(|e| e.context(ctx(t)))?;
            let action = match policy {
                Policy::RiskBased => choose_action(a.p_exceed, &scenario.decision),
                Policy::Periodic if (t - prefix).is_multiple_of(scenario.periodic_period) => ActionKind::Inspect,
                _ => ActionKind::DoNothing,
            };
            // A label that is already visible costs nothing to look at.
            let action = if already && action == ActionKind::Inspect {
                ActionKind::DoNothing
            } else {
                action
            };
            if action == ActionKind::Inspect {
                visible.tool_mut(id).ok_or(Error::UnknownTool(id))?.revealed[idx] = true;
            }
            timeline.push(TimelineEvent {
                step: t as u32,
                action,
                p_exceed: Some(a.p_exceed),
                cost_do_nothing: Some(a.p_exceed * scenario.decision.c_workpiece),
                cost_inspect: Some(scenario.decision.c_tool * a.p_exceed + scenario.decision.c_inspection),
                p_fail_before: None,
            });
        }
        let a = model.assess(&visible, id, x_next).map_err(|e| e.context(ctx(t)))?;
        if replacement_triggered(a.p_fail_before, &scenario.decision) {
            replaced = Some((t as u32 + 1, a.p_fail_before));
            break;
        }
    }

    let truncated = horizon.is_some_and(|h| (h as usize) < n - 1) && replaced.is_none();
    let (step, p) = replaced.map(|(s, p)| (s, Some(p))).unwrap_or((n as u32, None));
    if !truncated {
        timeline.push(TimelineEvent {
            step,
            action: ActionKind::Replace,
            p_exceed: None,
            cost_do_nothing: None,
            cost_inspect: None,
            p_fail_before: p,
        });
    }
    Ok(ToolOutcome {
        tool_id: id,
        timeline,
        replacement_step: step,
        end_of_life: replaced.is_none(),
        optimal_step,
        labels_revealed: visible.revealed_count(),
    })
}

fn run_policy<M: RiskModel>(
    policy: Policy,
    dataset: &PopulationDataset,
    scenario: &ScenarioConfig,
    oracle: &BTreeMap<ToolId, u32>,
    model: &mut M,
    horizon: Option<u32>,
) -> Result<SimulationResult> {
    scenario.validate()?;
    let base = scenario.initial_view(dataset)?;
    let mut tools = Vec::new();
    for series in active_series(dataset, scenario)? {
        let opt = *oracle.get(&series.tool_id).ok_or(Error::MissingReplacement(series.tool_id))?;
        tools.push(run_episode(policy, &base, series, scenario, model, opt, horizon)?);
    }
    let mut result = SimulationResult {
        schema_version: SCHEMA_VERSION,
        policy,
        dataset_hash: dataset.content_hash(),
        exceedance_mode: scenario.exceedance_mode,
        decision: scenario.decision.clone(),
        tools,
        ledger: Default::default(),
        refits: model.refits(),
    };
    if horizon.is_none() {
        let events: Vec<PolicyEvent> = result
            .tools
            .iter()
            .flat_map(|t| {
                t.timeline.iter().map(move |e| PolicyEvent {
                    tool_id: t.tool_id,
                    step: e.step,
                    action: e.action,
                })
            })
            .collect();
        result.ledger = settle_ledger(&events, oracle, &scenario.decision)?;
    }
    Ok(result)
}

/// Inspect only when inspecting is the cheaper expected action.
pub fn run_risk_based<M: RiskModel>(
    dataset: &PopulationDataset,
    scenario: &ScenarioConfig,
    oracle: &BTreeMap<ToolId, u32>,
    model: &mut M,
) -> Result<SimulationResult> {
    run_policy(Policy::RiskBased, dataset, scenario, oracle, model, None)
}

/// [`run_risk_based`] stopped after step `horizon`; the ledger is left
/// empty and unfinished episodes carry no replacement event.
pub fn run_risk_based_until<M: RiskModel>(
    dataset: &PopulationDataset,
    scenario: &ScenarioConfig,
    oracle: &BTreeMap<ToolId, u32>,
    model: &mut M,
    horizon: u32,
) -> Result<SimulationResult> {
    run_policy(Policy::RiskBased, dataset, scenario, oracle, model, Some(horizon))
}

/// Inspect every `periodic_period` steps regardless of risk.
pub fn run_periodic<M: RiskModel>(
    dataset: &PopulationDataset,
    scenario: &ScenarioConfig,
    oracle: &BTreeMap<ToolId, u32>,
    model: &mut M,
) -> Result<SimulationResult> {
    run_policy(Policy::Periodic, dataset, scenario, oracle, model, None)
}

pub fn run_periodic_until<M: RiskModel>(
    dataset: &PopulationDataset,
    scenario: &ScenarioConfig,
    oracle: &BTreeMap<ToolId, u32>,
    model: &mut M,
    horizon: u32,
) -> Result<SimulationResult> {
    run_policy(Policy::Periodic, dataset, scenario, oracle, model, Some(horizon))
}

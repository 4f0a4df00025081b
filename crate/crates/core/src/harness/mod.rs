//! End-to-end experiments: synthetic populations, the online inspection
//! policies, the full-information replacement oracle and cost comparison.

mod policy;
mod study;
mod synthetic;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{PopulationDataset, ToolId};
use crate::decision::{cost_reduction_percent, ActionKind, CostLedger, DecisionParams};
use crate::error::{Error, Result};
use crate::model::{Likelihood, PriorConfig};
use crate::predict::ExceedanceMode;
use crate::sampler::SamplerConfig;

pub use policy::{
    gold_standard_replacements, run_periodic, run_periodic_until, run_risk_based, run_risk_based_until,
    Assessment, BayesRisk, ConstantRisk, GoldStandard, RiskModel,
};
pub use study::{pooling_study, PoolingStudy, ToolShrinkage};
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticConfig, TrueLine};

pub const SCHEMA_VERSION: u32 = 1;

/// Which tools are observed, how much, and how decisions are priced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Tools whose whole history is known.
    pub historic_tools: Vec<ToolId>,
    /// Tools run online, each as its own episode.
    pub active_tools: Vec<ToolId>,
    /// Leading measurements of each active tool known before the episode.
    pub prefix_len: usize,
    /// Steps between inspections of the periodic baseline.
    pub periodic_period: usize,
    /// Reveal every label of the active tools up front (oracle checks).
    pub reveal_all_labels: bool,
    pub likelihood: Likelihood,
    pub priors: PriorConfig,
    pub sampler: SamplerConfig,
    pub decision: DecisionParams,
    pub exceedance_mode: ExceedanceMode,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            historic_tools: vec![1, 2, 3, 4],
            active_tools: vec![5, 6, 7],
            prefix_len: 2,
            periodic_period: 1,
            reveal_all_labels: false,
            likelihood: Likelihood::Cauchy,
            priors: PriorConfig::default_for(Likelihood::Cauchy),
            sampler: SamplerConfig::default(),
            decision: DecisionParams::default(),
            exceedance_mode: ExceedanceMode::LatentOnly,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.active_tools.is_empty() {
            return Err(Error::config("active_tools", "must name at least one tool"));
        }
        if let Some(t) = self.historic_tools.iter().find(|t| self.active_tools.contains(t)) {
            return Err(Error::config("active_tools", format!("tool {t} is also historic")));
        }
        let mut ids = self.historic_tools.clone();
        ids.extend(&self.active_tools);
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("historic_tools", "tool ids must be unique"));
        }
        if self.prefix_len == 0 {
            return Err(Error::config("prefix_len", "must be >= 1"));
        }
        if self.periodic_period == 0 {
            return Err(Error::config("periodic_period", "must be >= 1"));
        }
        self.sampler.validate().map_err(|e| e.context("sampler"))?;
        self.decision.validate().map_err(|e| e.context("decision"))?;
        self.priors.validate().map_err(|e| e.context("priors"))?;
        if self.historic_tools.len() < 4 {
            log::warn!(
                "only {} fully observed tools; population estimates may be unreliable",
                self.historic_tools.len()
            );
        }
        Ok(())
    }

    /// Data available before any episode: historic tools in full, active
    /// tools up to the prefix. Other tools are dropped.
    pub fn initial_view(&self, dataset: &PopulationDataset) -> Result<PopulationDataset> {
        let mut ids = self.historic_tools.clone();
        ids.extend(&self.active_tools);
        let mut view = dataset.subset(&ids)?;
        for t in &mut view.tools {
            let active = self.active_tools.contains(&t.tool_id);
            for (i, r) in t.revealed.iter_mut().enumerate() {
                *r = !active || self.reveal_all_labels || i < self.prefix_len;
            }
        }
        Ok(view)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    RiskBased,
    Periodic,
    GoldStandard,
}

impl Policy {
    pub fn label(self) -> &'static str {
        match self {
            Policy::RiskBased => "risk_based",
            Policy::Periodic => "periodic",
            Policy::GoldStandard => "gold_standard",
        }
    }
}

/// One entry of a tool's timeline. `step` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub step: u32,
    pub action: ActionKind,
    pub p_exceed: Option<f64>,
    pub cost_do_nothing: Option<f64>,
    pub cost_inspect: Option<f64>,
    pub p_fail_before: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutcome {
    pub tool_id: ToolId,
    pub timeline: Vec<TimelineEvent>,
    pub replacement_step: u32,
    /// The trigger never fired; the tool ran to its last measurement.
    pub end_of_life: bool,
    pub optimal_step: u32,
    /// Labels the model could see when the episode ended.
    pub labels_revealed: usize,
}

impl ToolOutcome {
    pub fn inspections(&self) -> u32 {
        self.timeline.iter().filter(|e| e.action == ActionKind::Inspect).count() as u32
    }

    /// Replacement minus optimal step; negative is early.
    pub fn discrepancy(&self) -> i64 {
        self.replacement_step as i64 - self.optimal_step as i64
    }
}

/// Health of one posterior fit made during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitRecord {
    pub revealed_labels: usize,
    pub seed: u64,
    pub divergences: usize,
    pub mean_accept: f64,
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
    pub mu_m_mean: Option<f64>,
    pub mu_c_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub schema_version: u32,
    pub policy: Policy,
    pub dataset_hash: String,
    pub exceedance_mode: ExceedanceMode,
    pub decision: DecisionParams,
    pub tools: Vec<ToolOutcome>,
    pub ledger: CostLedger,
    pub refits: Vec<RefitRecord>,
}

impl SimulationResult {
    pub fn inspections(&self) -> u32 {
        self.tools.iter().map(ToolOutcome::inspections).sum()
    }

    pub fn optimal_steps(&self) -> BTreeMap<ToolId, u32> {
        self.tools.iter().map(|t| (t.tool_id, t.optimal_step)).collect()
    }

    /// Recompute the ledger from the timelines.
    pub fn recount_ledger(&self) -> Result<CostLedger> {
        let events: Vec<_> = self
            .tools
            .iter()
            .flat_map(|t| {
                t.timeline.iter().map(move |e| crate::decision::PolicyEvent {
                    tool_id: t.tool_id,
                    step: e.step,
                    action: e.action,
                })
            })
            .collect();
        crate::decision::settle_ledger(&events, &self.optimal_steps(), &self.decision)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json(bytes: &[u8]) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_slice(bytes)?;
        let found = v.get("schema_version").and_then(|s| s.as_u64()).unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(v)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub policy: Policy,
    pub inspections: u32,
    /// `(tool, replacement − optimal)` in steps.
    pub discrepancies: Vec<(ToolId, i64)>,
    pub ledger: CostLedger,
    /// Cost reduction against the first listed policy; `None` for that one.
    pub reduction_percent: Option<f64>,
}

/// Tabulate policies run on the same dataset against the same oracle.
pub fn compare(results: &[SimulationResult]) -> Result<Vec<PolicyComparison>> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to compare".into()))?;
    let oracle = first.optimal_steps();
    for r in results {
        if r.dataset_hash != first.dataset_hash || r.optimal_steps() != oracle {
            return Err(Error::DatasetMismatch);
        }
    }
    Ok(results
        .iter()
        .enumerate()
        .map(|(i, r)| PolicyComparison {
            policy: r.policy,
            inspections: r.inspections(),
            discrepancies: r.tools.iter().map(|t| (t.tool_id, t.discrepancy())).collect(),
            ledger: r.ledger,
            reduction_percent: (i > 0).then(|| cost_reduction_percent(first.ledger.total, r.ledger.total)),
        })
        .collect())
}

/// Policy table: inspections, cost components, total and reduction.
pub fn write_compare_csv<W: Write>(rows: &[PolicyComparison], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "inspections",
        "inspection_cost",
        "wasted_life_cost",
        "damage_cost",
        "total",
        "reduction_percent",
    ])?;
    for r in rows {
        w.write_record([
            r.policy.label().to_string(),
            r.inspections.to_string(),
            r.ledger.inspection_cost.to_string(),
            r.ledger.wasted_life_cost.to_string(),
            r.ledger.damage_cost.to_string(),
            r.ledger.total.to_string(),
            r.reduction_percent.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-tool replacement table: optimal, actual and signed discrepancy.
pub fn write_replacements_csv<W: Write>(results: &[SimulationResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "tool_id",
        "inspections",
        "optimal_step",
        "replacement_step",
        "discrepancy",
        "end_of_life",
    ])?;
    for r in results {
        for t in &r.tools {
            w.write_record([
                r.policy.label().to_string(),
                t.tool_id.to_string(),
                t.inspections().to_string(),
                t.optimal_step.to_string(),
                t.replacement_step.to_string(),
                t.discrepancy().to_string(),
                t.end_of_life.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

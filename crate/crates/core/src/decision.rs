//! Expected-cost arithmetic for inspection and replacement, and settlement
//! of a policy's events into a cost ledger.
//!
//! Every quantity is a nonnegative cost and decisions minimise expected cost.

use std::collections::BTreeMap;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::data::ToolId;
use crate::error::{Error, Result};

/// How replacing before the optimal time is billed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WastedLifeRule {
    /// `c_tool × (t_opt − t_rep) / t_opt`: zero when on time.
    #[default]
    Discrepancy,
    /// `c_tool × t_rep / t_opt`, kept for sensitivity analysis.
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionParams {
    pub s_crit: f64,
    pub c_inspection: f64,
    pub c_tool: f64,
    /// Cost of a damaged workpiece.
    pub c_workpiece: f64,
    pub wasted_life_rule: WastedLifeRule,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            s_crit: 0.9,
            c_inspection: 0.05,
            c_tool: 0.25,
            c_workpiece: 1.0,
            wasted_life_rule: WastedLifeRule::Discrepancy,
        }
    }
}

impl DecisionParams {
    /// Replacement threshold on the failure probability.
    pub fn alpha(&self) -> f64 {
        self.c_tool / self.c_workpiece
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s_crit.is_finite() {
            return Err(Error::config("s_crit", "must be finite"));
        }
        for (name, v) in [("c_inspection", self.c_inspection), ("c_tool", self.c_tool)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.c_workpiece.is_finite() && self.c_workpiece > 0.0) {
            return Err(Error::config("c_workpiece", format!("must be > 0, got {}", self.c_workpiece)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    DoNothing,
    Inspect,
    Replace,
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")))
    }
}

/// Expected cost of continuing without looking.
pub fn eu_do_nothing(p_exceed_next: f64, params: &DecisionParams) -> Result<f64> {
    check_probability(p_exceed_next)?;
    Ok(p_exceed_next * params.c_workpiece)
}

/// Expected cost of inspecting: the inspection itself plus a replacement
/// if the tool turns out to need one.
pub fn eu_inspect(p_exceed_next: f64, params: &DecisionParams) -> Result<f64> {
    check_probability(p_exceed_next)?;
    Ok(params.c_tool * p_exceed_next + params.c_inspection)
}

/// Cheaper of doing nothing and inspecting; ties go to doing nothing.
pub fn choose_action(p_exceed_next: f64, params: &DecisionParams) -> ActionKind {
    let idle = p_exceed_next * params.c_workpiece;
    let inspect = params.c_tool * p_exceed_next + params.c_inspection;
    if inspect < idle {
        ActionKind::Inspect
    } else {
        ActionKind::DoNothing
    }
}

/// Probability at which inspecting and doing nothing cost the same, if the
/// workpiece costs more than a tool.
pub fn action_crossover(params: &DecisionParams) -> Option<f64> {
    let denom = params.c_workpiece - params.c_tool;
    (denom > 0.0).then(|| params.c_inspection / denom)
}

pub fn replacement_triggered(p_fail_before: f64, params: &DecisionParams) -> bool {
    p_fail_before >= params.alpha()
}

/// Cost of replacing at `t_replacement` when `t_optimal` was possible.
pub fn wasted_life_cost(t_replacement: f64, t_optimal: f64, params: &DecisionParams) -> Result<f64> {
    if !(t_optimal > 0.0 && t_replacement > 0.0 && t_replacement <= t_optimal) {
        return Err(Error::InvalidArgument(format!(
            "wasted life needs 0 < t_replacement <= t_optimal, got {t_replacement} and {t_optimal}"
        )));
    }
    Ok(match params.wasted_life_rule {
        WastedLifeRule::Discrepancy => params.c_tool * (t_optimal - t_replacement) / t_optimal,
        WastedLifeRule::Ratio => params.c_tool * t_replacement / t_optimal,
    })
}

/// A late replacement means the workpiece was damaged.
pub fn late_replacement_cost(t_replacement: f64, t_optimal: f64, params: &DecisionParams) -> f64 {
    if t_replacement > t_optimal {
        params.c_workpiece
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvent {
    pub tool_id: ToolId,
    pub step: u32,
    pub action: ActionKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub inspections: u32,
    pub inspection_cost: f64,
    pub wasted_life_cost: f64,
    pub damage_cost: f64,
    pub total: f64,
}

impl Add for CostLedger {
    type Output = CostLedger;

    fn add(self, o: CostLedger) -> CostLedger {
        CostLedger {
            inspections: self.inspections + o.inspections,
            inspection_cost: self.inspection_cost + o.inspection_cost,
            wasted_life_cost: self.wasted_life_cost + o.wasted_life_cost,
            damage_cost: self.damage_cost + o.damage_cost,
            total: self.total + o.total,
        }
    }
}

/// Bill inspections and replacement timing. Every tool in `t_optimal` must
/// have exactly one `Replace` event; events of other tools are rejected.
pub fn settle_ledger(
    events: &[PolicyEvent],
    t_optimal: &BTreeMap<ToolId, u32>,
    params: &DecisionParams,
) -> Result<CostLedger> {
    let mut replaced: BTreeMap<ToolId, u32> = BTreeMap::new();
    let mut ledger = CostLedger::default();
    for e in events {
        if !t_optimal.contains_key(&e.tool_id) {
            return Err(Error::UnknownTool(e.tool_id));
        }
        match e.action {
            ActionKind::Inspect => ledger.inspections += 1,
            ActionKind::Replace => {
                if replaced.insert(e.tool_id, e.step).is_some() {
                    return Err(Error::InvalidArgument(format!(
                        "tool {} replaced more than once",
                        e.tool_id
                    )));
                }
            }
            ActionKind::DoNothing => {}
        }
    }
    ledger.inspection_cost = ledger.inspections as f64 * params.c_inspection;
    for (&tool, &opt) in t_optimal {
        let rep = *replaced.get(&tool).ok_or(Error::MissingReplacement(tool))?;
        let (rep, opt) = (rep as f64, opt as f64);
        if rep < opt {
            ledger.wasted_life_cost += wasted_life_cost(rep, opt, params)?;
        }
        ledger.damage_cost += late_replacement_cost(rep, opt, params);
    }
    ledger.total = ledger.inspection_cost + ledger.wasted_life_cost + ledger.damage_cost;
    Ok(ledger)
}

/// Percentage by which `cost` undercuts `baseline`.
pub fn cost_reduction_percent(baseline: f64, cost: f64) -> f64 {
    if baseline == 0.0 {
        if cost == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        100.0 * (baseline - cost) / baseline
    }
}

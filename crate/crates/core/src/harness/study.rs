use serde::{Deserialize, Serialize};

use super::policy::fit_pooling;
use super::ScenarioConfig;
use crate::data::{PopulationDataset, ToolId};
use crate::error::Result;
use crate::model::Pooling;
use crate::predict::{forecast, total_mse};
use crate::rng::derive_seed;

/// Posterior sd of one data-poor tool's latent curve, averaged over its
/// hidden measurement positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolShrinkage {
    pub tool_id: ToolId,
    pub sd_partial: f64,
    pub sd_none: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingStudy {
    pub shrinkage: Vec<ToolShrinkage>,
    pub mse_partial: f64,
    pub mse_none: f64,
    pub mse_complete: f64,
}

/// Fit the three poolings to the scenario's initial view and score the
/// hidden labels of the active tools.
pub fn pooling_study(dataset: &PopulationDataset, scenario: &ScenarioConfig) -> Result<PoolingStudy> {
    scenario.validate()?;
    let view = scenario.initial_view(dataset)?;
    let key = view.revealed_hash();
    let fit = |pooling: Pooling, name: &str| fit_pooling(&view, scenario, pooling, derive_seed(scenario.seed, name, &key));
    let partial = fit(Pooling::Partial, "fit-partial")?;
    let none = fit(Pooling::None, "fit-none")?;
    let complete = fit(Pooling::Complete, "fit-complete")?;

    let mut shrinkage = Vec::new();
    for &id in &scenario.active_tools {
        let Some(t) = view.tool(id) else { continue };
        let grid: Vec<f64> = t
            .observations
            .iter()
            .zip(&t.revealed)
            .filter(|(_, r)| !**r)
            .map(|(o, _)| o.x)
            .collect();
        if grid.is_empty() {
            continue;
        }
        let mean_sd = |s| -> Result<f64> {
            let f = forecast(s, id, &grid, false, 0)?;
            let pts = f.summarize_latent();
            Ok(pts.iter().map(|p| p.sd).sum::<f64>() / pts.len() as f64)
        };
        shrinkage.push(ToolShrinkage {
            tool_id: id,
            sd_partial: mean_sd(&partial)?,
            sd_none: mean_sd(&none)?,
        });
    }
    Ok(PoolingStudy {
        shrinkage,
        mse_partial: total_mse(&partial, &view)?.total,
        mse_none: total_mse(&none, &view)?.total,
        mse_complete: total_mse(&complete, &view)?.total,
    })
}

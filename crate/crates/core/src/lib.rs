//! Hierarchical Bayesian degradation modelling and risk-based maintenance
//! planning for populations of cutting tools.

pub mod data;
pub mod decision;
pub mod error;
pub mod harness;
pub mod model;
pub mod predict;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use data::{Observation, PopulationDataset, ToolId, ToolSeries};
pub use decision::{ActionKind, CostLedger, DecisionParams};
pub use error::{Error, Result};
pub use harness::{Policy, ScenarioConfig, SimulationResult, SyntheticConfig};
pub use model::{build_model, Likelihood, ModelSpec, ParamVector, Pooling, PriorConfig};
pub use predict::ExceedanceMode;
pub use sampler::{sample, Diagnostics, LogDensity, PosteriorSamples, SamplerConfig};

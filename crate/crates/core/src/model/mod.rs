//! Linear degradation models over a population of tools.
//!
//! Each tool `k` follows `y = m_k x + c_k + noise`, with Gaussian or Cauchy
//! noise of scale `γ_k`. Three pooling structures are supported:
//!
//! * `Complete`: one `(m, c, γ)` shared by every tool;
//! * `None`: independent `(m_k, c_k, γ_k)` with fixed priors;
//! * `Partial`: per-tool parameters drawn from learned population
//!   distributions `m_k ~ N(μ_m, σ_m)`, `c_k ~ N(μ_c, σ_c)`.
//!
//! Models are exposed as log-posterior densities over an unconstrained
//! vector. Positive parameters are log-transformed and, under partial
//! pooling, slopes and intercepts are stored as standardised offsets
//! (`m_k = μ_m + σ_m·z_k`).

mod density;
mod posterior;

use serde::{Deserialize, Serialize};

use crate::data::{PopulationDataset, ToolId};
use crate::error::{Error, Result};

pub use density::{cauchy_lpdf, gamma_lpdf, half_cauchy_lpdf, inv_gamma_lpdf, normal_lpdf};
pub use posterior::LogPosteriorParts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Complete,
    None,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    Gaussian,
    Cauchy,
}

impl Likelihood {
    fn label(self) -> &'static str {
        match self {
            Likelihood::Gaussian => "gaussian",
            Likelihood::Cauchy => "cauchy",
        }
    }
}

/// Hyperpriors of the Cauchy-likelihood hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CauchyHierPriors {
    /// Shape of the Gamma prior on `μ_m`.
    pub gamma_shape: f64,
    /// Scale (not rate) of the Gamma prior on `μ_m`.
    pub gamma_scale: f64,
    pub s_sigma_m: f64,
    pub mu_c_mean: f64,
    pub mu_c_sd: f64,
    pub s_sigma_c: f64,
    /// Half-Cauchy scale on every per-tool noise scale `γ_k`.
    pub gamma_noise_scale: f64,
}

impl Default for CauchyHierPriors {
    fn default() -> Self {
        CauchyHierPriors {
            gamma_shape: 1.0,
            gamma_scale: 1.0,
            s_sigma_m: 25.0,
            mu_c_mean: 0.0,
            mu_c_sd: 1.0,
            s_sigma_c: 25.0,
            gamma_noise_scale: 25.0,
        }
    }
}

/// Normal / Inverse-Gamma hyperpriors over the weight vector
/// `α_k = (intercept, slope)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianHierPriors {
    /// Prior mean of `μ_α`, ordered `[intercept, slope]`.
    pub m_alpha: [f64; 2],
    /// Prior sd of `μ_α`, ordered `[intercept, slope]`.
    pub s_alpha: [f64; 2],
    /// Inverse-Gamma shape for each entry of `σ_α`.
    pub a: f64,
    /// Inverse-Gamma scale for each entry of `σ_α`.
    pub b: f64,
    /// Half-Cauchy scale on every per-tool noise sd `σ_k`.
    pub noise_scale: f64,
}

impl Default for GaussianHierPriors {
    fn default() -> Self {
        GaussianHierPriors {
            m_alpha: [0.0, 0.0],
            s_alpha: [1.0, 1.0],
            a: 2.0,
            b: 0.1,
            noise_scale: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorConfig {
    Cauchy(CauchyHierPriors),
    Gaussian(GaussianHierPriors),
}

impl PriorConfig {
    pub fn default_for(likelihood: Likelihood) -> Self {
        match likelihood {
            Likelihood::Cauchy => PriorConfig::Cauchy(CauchyHierPriors::default()),
            Likelihood::Gaussian => PriorConfig::Gaussian(GaussianHierPriors::default()),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            PriorConfig::Cauchy(_) => "cauchy",
            PriorConfig::Gaussian(_) => "gaussian",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be > 0, got {v}")))
            }
        };
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, "must be finite"))
            }
        };
        match self {
            PriorConfig::Cauchy(p) => {
                positive("gamma_shape", p.gamma_shape)?;
                positive("gamma_scale", p.gamma_scale)?;
                positive("s_sigma_m", p.s_sigma_m)?;
                finite("mu_c_mean", p.mu_c_mean)?;
                positive("mu_c_sd", p.mu_c_sd)?;
                positive("s_sigma_c", p.s_sigma_c)?;
                positive("gamma_noise_scale", p.gamma_noise_scale)
            }
            PriorConfig::Gaussian(p) => {
                finite("m_alpha", p.m_alpha[0])?;
                finite("m_alpha", p.m_alpha[1])?;
                positive("s_alpha", p.s_alpha[0])?;
                positive("s_alpha", p.s_alpha[1])?;
                positive("a", p.a)?;
                positive("b", p.b)?;
                positive("noise_scale", p.noise_scale)
            }
        }
    }

    /// Central values of the hyperpriors, used as the fixed population
    /// parameters of the complete- and no-pooling models. Means where they
    /// exist; the Half-Cauchy contributes its median (its scale) and an
    /// Inverse-Gamma without a mean contributes its mode.
    pub fn reference_hyper(&self) -> FixedHyper {
        match self {
            PriorConfig::Cauchy(p) => FixedHyper {
                mu_m: p.gamma_shape * p.gamma_scale,
                sigma_m: p.s_sigma_m,
                mu_c: p.mu_c_mean,
                sigma_c: p.s_sigma_c,
            },
            PriorConfig::Gaussian(p) => {
                let sd = if p.a > 1.0 { p.b / (p.a - 1.0) } else { p.b / (p.a + 1.0) };
                FixedHyper {
                    mu_m: p.m_alpha[1],
                    sigma_m: sd,
                    mu_c: p.m_alpha[0],
                    sigma_c: sd,
                }
            }
        }
    }

    fn noise_scale(&self) -> f64 {
        match self {
            PriorConfig::Cauchy(p) => p.gamma_noise_scale,
            PriorConfig::Gaussian(p) => p.noise_scale,
        }
    }
}

/// Population parameters held fixed by the non-hierarchical models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedHyper {
    pub mu_m: f64,
    pub sigma_m: f64,
    pub mu_c: f64,
    pub sigma_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Real,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Slope(usize),
    Intercept(usize),
    Noise(usize),
    MuM,
    SigmaM,
    MuC,
    SigmaC,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub constraint: Constraint,
    pub role: ParamRole,
}

/// Indices of one tool's line parameters within the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParams {
    pub tool_id: ToolId,
    pub slope: usize,
    pub intercept: usize,
    pub noise: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub params: Vec<ParamInfo>,
    /// One entry per tool of the dataset, in dataset order.
    pub tools: Vec<ToolParams>,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn tool(&self, id: ToolId) -> Option<ToolParams> {
        self.tools.iter().copied().find(|t| t.tool_id == id)
    }
}

/// Revealed observations of one parameter group, stored column-wise.
#[derive(Debug, Clone, Default)]
pub(crate) struct GroupData {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Flat parameter vector in unconstrained space, ordered by the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

/// A fully specified model bound to a dataset. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pooling: Pooling,
    likelihood: Likelihood,
    priors: PriorConfig,
    fixed: FixedHyper,
    layout: ParamLayout,
    groups: Vec<GroupData>,
}

pub fn build_model(
    pooling: Pooling,
    likelihood: Likelihood,
    priors: PriorConfig,
    data: &PopulationDataset,
) -> Result<ModelSpec> {
    if data.tools.is_empty() || data.total_observations() == 0 {
        return Err(Error::EmptyDataset);
    }
    match (&priors, likelihood) {
        (PriorConfig::Cauchy(_), Likelihood::Cauchy) | (PriorConfig::Gaussian(_), Likelihood::Gaussian) => {}
        _ => {
            return Err(Error::PriorMismatch {
                priors: priors.label(),
                likelihood: likelihood.label(),
            })
        }
    }
    priors.validate()?;

    let noise_name = match likelihood {
        Likelihood::Cauchy => "gamma",
        Likelihood::Gaussian => "sigma",
    };
    let mut params = Vec::new();
    let mut tools = Vec::new();
    let mut groups = Vec::new();

    match pooling {
        Pooling::Complete => {
            params.push(ParamInfo {
                name: "m".into(),
                constraint: Constraint::Real,
                role: ParamRole::Slope(0),
            });
            params.push(ParamInfo {
                name: "c".into(),
                constraint: Constraint::Real,
                role: ParamRole::Intercept(0),
            });
            params.push(ParamInfo {
                name: noise_name.into(),
                constraint: Constraint::Positive,
                role: ParamRole::Noise(0),
            });
            let mut g = GroupData::default();
            for t in &data.tools {
                for o in t.revealed_observations() {
                    g.xs.push(o.x);
                    g.ys.push(o.y);
                }
                tools.push(ToolParams {
                    tool_id: t.tool_id,
                    slope: 0,
                    intercept: 1,
                    noise: 2,
                });
            }
            groups.push(g);
        }
        Pooling::None | Pooling::Partial => {
            let k = data.tools.len();
            for (g, t) in data.tools.iter().enumerate() {
                params.push(ParamInfo {
                    name: format!("m[{}]", t.tool_id),
                    constraint: Constraint::Real,
                    role: ParamRole::Slope(g),
                });
            }
            for (g, t) in data.tools.iter().enumerate() {
                params.push(ParamInfo {
                    name: format!("c[{}]", t.tool_id),
                    constraint: Constraint::Real,
                    role: ParamRole::Intercept(g),
                });
            }
            for (g, t) in data.tools.iter().enumerate() {
                params.push(ParamInfo {
                    name: format!("{noise_name}[{}]", t.tool_id),
                    constraint: Constraint::Positive,
                    role: ParamRole::Noise(g),
                });
            }
            for (g, t) in data.tools.iter().enumerate() {
                tools.push(ToolParams {
                    tool_id: t.tool_id,
                    slope: g,
                    intercept: k + g,
                    noise: 2 * k + g,
                });
                let mut gd = GroupData::default();
                for o in t.revealed_observations() {
                    gd.xs.push(o.x);
                    gd.ys.push(o.y);
                }
                groups.push(gd);
            }
            if pooling == Pooling::Partial {
                let mu_m_constraint = match priors {
                    PriorConfig::Cauchy(_) => Constraint::Positive,
                    PriorConfig::Gaussian(_) => Constraint::Real,
                };
                params.push(ParamInfo {
                    name: "mu_m".into(),
                    constraint: mu_m_constraint,
                    role: ParamRole::MuM,
                });
                params.push(ParamInfo {
                    name: "sigma_m".into(),
                    constraint: Constraint::Positive,
                    role: ParamRole::SigmaM,
                });
                params.push(ParamInfo {
                    name: "mu_c".into(),
                    constraint: Constraint::Real,
                    role: ParamRole::MuC,
                });
                params.push(ParamInfo {
                    name: "sigma_c".into(),
                    constraint: Constraint::Positive,
                    role: ParamRole::SigmaC,
                });
            }
        }
    }

    let fixed = priors.reference_hyper();
    Ok(ModelSpec {
        pooling,
        likelihood,
        priors,
        fixed,
        layout: ParamLayout { params, tools },
        groups,
    })
}

impl ModelSpec {
    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    pub fn likelihood(&self) -> Likelihood {
        self.likelihood
    }

    pub fn priors(&self) -> &PriorConfig {
        &self.priors
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn fixed_hyper(&self) -> FixedHyper {
        self.fixed
    }

    /// Replace the population parameters used by the complete- and
    /// no-pooling models. Has no effect on the partial-pooling density.
    pub fn with_fixed_hyper(mut self, fixed: FixedHyper) -> Result<Self> {
        if !(fixed.sigma_m > 0.0 && fixed.sigma_c > 0.0) {
            return Err(Error::InvalidArgument("fixed sigmas must be > 0".into()));
        }
        self.fixed = fixed;
        Ok(self)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Map an unconstrained vector to constrained parameter values, in
    /// layout order.
    pub fn constrain(&self, u: &ParamVector) -> Result<Vec<f64>> {
        self.check_len(u.0.len())?;
        let mut out = vec![0.0; self.dim()];
        self.constrain_into(&u.0, &mut out);
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.layout.params[i].name.clone()));
        }
        Ok(out)
    }

    pub(crate) fn constrain_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, p) in self.layout.params.iter().enumerate() {
            out[i] = match p.constraint {
                Constraint::Real => u[i],
                Constraint::Positive => u[i].exp(),
            };
        }
        if self.pooling == Pooling::Partial {
            let k = self.groups.len();
            let (mu_m, sigma_m, mu_c, sigma_c) =
                (out[3 * k], out[3 * k + 1], out[3 * k + 2], out[3 * k + 3]);
            for g in 0..k {
                out[g] = mu_m + sigma_m * u[g];
                out[k + g] = mu_c + sigma_c * u[k + g];
            }
        }
    }

    /// Inverse of [`constrain`](Self::constrain).
    pub fn unconstrain(&self, values: &[f64]) -> Result<ParamVector> {
        self.check_len(values.len())?;
        let mut u = vec![0.0; self.dim()];
        for (i, p) in self.layout.params.iter().enumerate() {
            u[i] = match p.constraint {
                Constraint::Real => values[i],
                Constraint::Positive => {
                    if values[i] <= 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "{} must be > 0, got {}",
                            p.name, values[i]
                        )));
                    }
                    values[i].ln()
                }
            };
        }
        if self.pooling == Pooling::Partial {
            let k = self.groups.len();
            let (mu_m, sigma_m, mu_c, sigma_c) =
                (values[3 * k], values[3 * k + 1], values[3 * k + 2], values[3 * k + 3]);
            for g in 0..k {
                u[g] = (values[g] - mu_m) / sigma_m;
                u[k + g] = (values[k + g] - mu_c) / sigma_c;
            }
        }
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.layout.params[i].name.clone()));
        }
        Ok(ParamVector(u))
    }

    pub fn log_posterior(&self, u: &ParamVector) -> Result<f64> {
        self.check_len(u.0.len())?;
        let mut scratch = vec![0.0; self.dim()];
        let v = self.eval(&u.0, &mut scratch);
        if !v.is_finite() {
            return Err(Error::NonFinite("log posterior".into()));
        }
        Ok(v)
    }

    pub fn grad_log_posterior(&self, u: &ParamVector) -> Result<Vec<f64>> {
        self.check_len(u.0.len())?;
        let mut grad = vec![0.0; self.dim()];
        let v = self.eval(&u.0, &mut grad);
        if !v.is_finite() {
            return Err(Error::NonFinite("log posterior".into()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", self.layout.params[i].name)));
        }
        Ok(grad)
    }
}

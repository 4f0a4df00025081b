use super::density::{gamma_lpdf, half_cauchy_lpdf, inv_gamma_lpdf, normal_lpdf};
use super::{GroupData, Likelihood, ModelSpec, ParamVector, Pooling, PriorConfig};
use crate::error::Result;

const LN_PI: f64 = 1.144_729_885_849_400_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// The three additive pieces of the log-posterior at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPosteriorParts {
    pub likelihood: f64,
    pub prior: f64,
    pub jacobian: f64,
}

impl LogPosteriorParts {
    pub fn total(&self) -> f64 {
        self.likelihood + self.prior + self.jacobian
    }
}

/// Log-likelihood of one group's revealed points; accumulates derivatives
/// with respect to slope, intercept and log noise scale.
#[inline]
fn group_loglik(family: Likelihood, g: &GroupData, m: f64, c: f64, s: f64) -> (f64, f64, f64, f64) {
    let n = g.xs.len() as f64;
    let (mut val, mut dm, mut dc, mut dls) = (0.0, 0.0, 0.0, 0.0);
    match family {
        Likelihood::Cauchy => {
            let s2 = s * s;
            for (&x, &y) in g.xs.iter().zip(&g.ys) {
                let r = y - m * x - c;
                let d = s2 + r * r;
                val -= d.ln();
                let gr = 2.0 * r / d;
                dm += gr * x;
                dc += gr;
                dls -= s2 / d;
            }
            // -ln(pi) + ln(s) per point; d/d ln s of (ln s - ln d) = 1 - 2 s^2/d
            val += n * (s.ln() - LN_PI);
            dls = n + 2.0 * dls;
        }
        Likelihood::Gaussian => {
            let inv_s2 = 1.0 / (s * s);
            let mut ss = 0.0;
            for (&x, &y) in g.xs.iter().zip(&g.ys) {
                let r = y - m * x - c;
                ss += r * r;
                dm += r * x;
                dc += r;
            }
            val = -n * (HALF_LN_2PI + s.ln()) - 0.5 * ss * inv_s2;
            dm *= inv_s2;
            dc *= inv_s2;
            dls = -n + ss * inv_s2;
        }
    }
    (val, dm, dc, dls)
}

/// Hyperprior on `μ_m` evaluated at the unconstrained coordinate; returns
/// `(log prior, log jacobian, d/du of their sum, constrained value)`.
fn mu_m_prior(priors: &PriorConfig, u: f64) -> (f64, f64, f64, f64) {
    match priors {
        PriorConfig::Cauchy(p) => {
            let v = u.exp();
            let (lp, d) = gamma_lpdf(v, p.gamma_shape, p.gamma_scale);
            (lp, u, d + 1.0, v)
        }
        PriorConfig::Gaussian(p) => {
            let (m, s) = (p.m_alpha[1], p.s_alpha[1]);
            (normal_lpdf(u, m, s), 0.0, -(u - m) / (s * s), u)
        }
    }
}

/// Prior on a population sd (`σ_m` or `σ_c`) at log-coordinate `u`.
fn scale_prior(priors: &PriorConfig, which_m: bool, u: f64) -> (f64, f64, f64, f64) {
    let v = u.exp();
    let (lp, d) = match priors {
        PriorConfig::Cauchy(p) => half_cauchy_lpdf(v, if which_m { p.s_sigma_m } else { p.s_sigma_c }),
        PriorConfig::Gaussian(p) => inv_gamma_lpdf(v, p.a, p.b),
    };
    (lp, u, d + 1.0, v)
}

fn mu_c_prior(priors: &PriorConfig, u: f64) -> (f64, f64) {
    let (m, s) = match priors {
        PriorConfig::Cauchy(p) => (p.mu_c_mean, p.mu_c_sd),
        PriorConfig::Gaussian(p) => (p.m_alpha[0], p.s_alpha[0]),
    };
    (normal_lpdf(u, m, s), -(u - m) / (s * s))
}

impl ModelSpec {
    /// Log-posterior (including the log-Jacobian of the constraining map)
    /// and its gradient with respect to the unconstrained coordinates.
    pub(crate) fn eval(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let noise_scale = self.priors.noise_scale();
        let k = self.groups.len();
        let mut total = 0.0;
        match self.pooling {
            Pooling::Complete => {
                let f = self.fixed;
                let (m, c, ls) = (u[0], u[1], u[2]);
                let s = ls.exp();
                let (ll, dm, dc, dls) = group_loglik(self.likelihood, &self.groups[0], m, c, s);
                let (lps, dps) = half_cauchy_lpdf(s, noise_scale);
                total += ll
                    + normal_lpdf(m, f.mu_m, f.sigma_m)
                    + normal_lpdf(c, f.mu_c, f.sigma_c)
                    + lps
                    + ls;
                grad[0] = dm - (m - f.mu_m) / (f.sigma_m * f.sigma_m);
                grad[1] = dc - (c - f.mu_c) / (f.sigma_c * f.sigma_c);
                grad[2] = dls + dps + 1.0;
            }
            Pooling::None => {
                let f = self.fixed;
                for (g, data) in self.groups.iter().enumerate() {
                    let (m, c, ls) = (u[g], u[k + g], u[2 * k + g]);
                    let s = ls.exp();
                    let (ll, dm, dc, dls) = group_loglik(self.likelihood, data, m, c, s);
                    let (lps, dps) = half_cauchy_lpdf(s, noise_scale);
                    total += ll
                        + normal_lpdf(m, f.mu_m, f.sigma_m)
                        + normal_lpdf(c, f.mu_c, f.sigma_c)
                        + lps
                        + ls;
                    grad[g] = dm - (m - f.mu_m) / (f.sigma_m * f.sigma_m);
                    grad[k + g] = dc - (c - f.mu_c) / (f.sigma_c * f.sigma_c);
                    grad[2 * k + g] = dls + dps + 1.0;
                }
            }
            Pooling::Partial => {
                let h = 3 * k;
                let (lp_mu_m, lj_mu_m, d_mu_m, mu_m) = mu_m_prior(&self.priors, u[h]);
                let (lp_sm, lj_sm, d_sm, sigma_m) = scale_prior(&self.priors, true, u[h + 1]);
                let mu_c = u[h + 2];
                let (lp_mc, d_mc) = mu_c_prior(&self.priors, mu_c);
                let (lp_sc, lj_sc, d_sc, sigma_c) = scale_prior(&self.priors, false, u[h + 3]);
                total += lp_mu_m + lj_mu_m + lp_sm + lj_sm + lp_mc + lp_sc + lj_sc;
                let dmu_m_du = if matches!(self.priors, PriorConfig::Cauchy(_)) { mu_m } else { 1.0 };
                let (mut g_mu_m, mut g_sm, mut g_mc, mut g_sc) = (d_mu_m, d_sm, d_mc, d_sc);
                for (g, data) in self.groups.iter().enumerate() {
                    let (zm, zc, ls) = (u[g], u[k + g], u[2 * k + g]);
                    let m = mu_m + sigma_m * zm;
                    let c = mu_c + sigma_c * zc;
                    let s = ls.exp();
                    let (ll, dm, dc, dls) = group_loglik(self.likelihood, data, m, c, s);
                    let (lps, dps) = half_cauchy_lpdf(s, noise_scale);
                    // Standard-normal offsets: N(m; mu, sigma) + ln sigma == N(z; 0, 1).
                    total += ll - 0.5 * (zm * zm + zc * zc) - 2.0 * HALF_LN_2PI + lps + ls;
                    grad[g] = dm * sigma_m - zm;
                    grad[k + g] = dc * sigma_c - zc;
                    grad[2 * k + g] = dls + dps + 1.0;
                    g_mu_m += dm * dmu_m_du;
                    g_sm += dm * sigma_m * zm;
                    g_mc += dc;
                    g_sc += dc * sigma_c * zc;
                }
                grad[h] = g_mu_m;
                grad[h + 1] = g_sm;
                grad[h + 2] = g_mc;
                grad[h + 3] = g_sc;
            }
        }
        total
    }

    /// Log-likelihood, log-prior (in constrained terms) and log-Jacobian at
    /// `u`. Their sum equals [`log_posterior`](Self::log_posterior).
    pub fn log_posterior_parts(&self, u: &ParamVector) -> Result<LogPosteriorParts> {
        let v = self.constrain(u)?;
        let noise_scale = self.priors.noise_scale();
        let mut likelihood = 0.0;
        for (g, t) in self.groups.iter().zip(&self.layout.tools_by_group()) {
            likelihood += group_loglik(self.likelihood, g, v[t.0], v[t.1], v[t.2]).0;
        }
        let k = self.groups.len();
        let mut prior = 0.0;
        let mut jacobian = 0.0;
        for (i, p) in self.layout.params.iter().enumerate() {
            if p.constraint == super::Constraint::Positive {
                jacobian += u.0[i];
            }
        }
        for &(si, ci, ni) in &self.layout.tools_by_group() {
            prior += half_cauchy_lpdf(v[ni], noise_scale).0;
            let (mu_m, sigma_m, mu_c, sigma_c) = match self.pooling {
                Pooling::Partial => (v[3 * k], v[3 * k + 1], v[3 * k + 2], v[3 * k + 3]),
                _ => {
                    let f = self.fixed;
                    (f.mu_m, f.sigma_m, f.mu_c, f.sigma_c)
                }
            };
            prior += normal_lpdf(v[si], mu_m, sigma_m) + normal_lpdf(v[ci], mu_c, sigma_c);
            if self.pooling == Pooling::Partial {
                jacobian += sigma_m.ln() + sigma_c.ln();
            }
        }
        if self.pooling == Pooling::Partial {
            let h = 3 * k;
            prior += mu_m_prior(&self.priors, u.0[h]).0
                + scale_prior(&self.priors, true, u.0[h + 1]).0
                + mu_c_prior(&self.priors, v[h + 2]).0
                + scale_prior(&self.priors, false, u.0[h + 3]).0;
        }
        Ok(LogPosteriorParts {
            likelihood,
            prior,
            jacobian,
        })
    }
}

impl super::ParamLayout {
    /// `(slope, intercept, noise)` indices per parameter group.
    fn tools_by_group(&self) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        for t in &self.tools {
            let key = (t.slope, t.intercept, t.noise);
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }
}

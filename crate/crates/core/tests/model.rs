use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Cauchy, Continuous, Gamma, InverseGamma, Normal};

use rbal::model::{CauchyHierPriors, Constraint, GaussianHierPriors, ParamRole};
use rbal::{
    build_model, Likelihood, ModelSpec, Observation, ParamVector, PopulationDataset, Pooling, PriorConfig, ToolSeries,
};

fn series(id: u32, pts: &[(f64, f64)], revealed: &[bool]) -> ToolSeries {
    let obs = pts.iter().map(|&(x, y)| Observation { x, y }).collect();
    ToolSeries::new(id, obs, revealed.to_vec()).unwrap()
}

fn two_tools() -> PopulationDataset {
    PopulationDataset::new(
        vec![
            series(1, &[(6.0, 0.45), (12.0, 0.61)], &[true, true]),
            series(2, &[(6.0, 0.52), (12.0, 0.7)], &[true, false]),
        ],
        6.0,
    )
    .unwrap()
}

fn population() -> PopulationDataset {
    let mut tools = Vec::new();
    for id in 1..=5u32 {
        let pts: Vec<(f64, f64)> = (1..=6)
            .map(|s| {
                let x = s as f64 * 6.02;
                (x, 0.35 + 0.01 * id as f64 + 0.012 * x + 0.01 * ((s * id) as f64).sin())
            })
            .collect();
        let revealed: Vec<bool> = (0..6).map(|i| id <= 3 || i < 2).collect();
        tools.push(series(id, &pts, &revealed));
    }
    PopulationDataset::new(tools, 6.02).unwrap()
}

fn priors(l: Likelihood) -> PriorConfig {
    PriorConfig::default_for(l)
}

const VARIANTS: [(Pooling, Likelihood); 6] = [
    (Pooling::Partial, Likelihood::Cauchy),
    (Pooling::Partial, Likelihood::Gaussian),
    (Pooling::None, Likelihood::Cauchy),
    (Pooling::None, Likelihood::Gaussian),
    (Pooling::Complete, Likelihood::Cauchy),
    (Pooling::Complete, Likelihood::Gaussian),
];

fn half_cauchy(x: f64, s: f64) -> f64 {
    2f64.ln() + Cauchy::new(0.0, s).unwrap().ln_pdf(x)
}

fn normal(x: f64, m: f64, s: f64) -> f64 {
    Normal::new(m, s).unwrap().ln_pdf(x)
}

/// Straight-line density coded from scratch over constrained values.
fn oracle(spec: &ModelSpec, data: &PopulationDataset, u: &[f64]) -> f64 {
    let v = spec.constrain(&ParamVector(u.to_vec())).unwrap();
    let layout = spec.layout();
    let (noise_scale, lik): (f64, Box<dyn Fn(f64, f64) -> f64>) = match spec.priors() {
        PriorConfig::Cauchy(p) => (p.gamma_noise_scale, Box::new(|r, s| Cauchy::new(0.0, s).unwrap().ln_pdf(r))),
        PriorConfig::Gaussian(p) => (p.noise_scale, Box::new(|r, s| normal(r, 0.0, s))),
    };
    let (mu_m, sigma_m, mu_c, sigma_c) = match spec.pooling() {
        Pooling::Partial => {
            let h = layout.index_of("mu_m").unwrap();
            (v[h], v[h + 1], v[h + 2], v[h + 3])
        }
        _ => {
            let f = spec.fixed_hyper();
            (f.mu_m, f.sigma_m, f.mu_c, f.sigma_c)
        }
    };
    let mut total = 0.0;
    for t in &data.tools {
        let tp = layout.tool(t.tool_id).unwrap();
        for o in t.revealed_observations() {
            total += lik(o.y - v[tp.slope] * o.x - v[tp.intercept], v[tp.noise]);
        }
    }
    let mut groups: Vec<_> = layout.tools.iter().map(|t| (t.slope, t.intercept, t.noise)).collect();
    groups.dedup();
    for (si, ci, ni) in groups {
        total += half_cauchy(v[ni], noise_scale);
        total += normal(v[si], mu_m, sigma_m) + normal(v[ci], mu_c, sigma_c);
        total += u[ni];
        if spec.pooling() == Pooling::Partial {
            total += sigma_m.ln() + sigma_c.ln();
        }
    }
    if spec.pooling() == Pooling::Partial {
        let h = layout.index_of("mu_m").unwrap();
        total += u[h + 1] + u[h + 3];
        match spec.priors() {
            PriorConfig::Cauchy(p) => {
                total += Gamma::new(p.gamma_shape, 1.0 / p.gamma_scale).unwrap().ln_pdf(mu_m) + u[h];
                total += half_cauchy(sigma_m, p.s_sigma_m) + half_cauchy(sigma_c, p.s_sigma_c);
                total += normal(mu_c, p.mu_c_mean, p.mu_c_sd);
            }
            PriorConfig::Gaussian(p) => {
                let ig = InverseGamma::new(p.a, p.b).unwrap();
                total += normal(mu_m, p.m_alpha[1], p.s_alpha[1]) + normal(mu_c, p.m_alpha[0], p.s_alpha[0]);
                total += ig.ln_pdf(sigma_m) + ig.ln_pdf(sigma_c);
            }
        }
    }
    total
}

/// Unconstrained point on the scale of the data (slopes in μm/km,
/// roughness in μm).
fn random_point(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let partial = spec.pooling() == Pooling::Partial;
    spec.layout()
        .params
        .iter()
        .map(|p| match p.role {
            ParamRole::Slope(_) | ParamRole::Intercept(_) if partial => rng.random_range(-2.0..2.0),
            ParamRole::Slope(_) => rng.random_range(-0.05..0.05),
            ParamRole::Intercept(_) | ParamRole::MuC => rng.random_range(-1.0..1.0),
            ParamRole::Noise(_) => rng.random_range(-2.0..1.0),
            ParamRole::MuM if p.constraint == Constraint::Positive => rng.random_range(-6.0..-2.0),
            ParamRole::MuM => rng.random_range(-0.05..0.05),
            ParamRole::SigmaM => rng.random_range(-7.0..-2.0),
            ParamRole::SigmaC => rng.random_range(-4.0..0.0),
        })
        .collect()
}

#[test]
fn density_matches_independent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for data in [two_tools(), population()] {
        for (pooling, l) in VARIANTS {
            let spec = build_model(pooling, l, priors(l), &data).unwrap();
            for _ in 0..20 {
                let u = random_point(&spec, &mut rng);
                let got = spec.log_posterior(&ParamVector(u.clone())).unwrap();
                let want = oracle(&spec, &data, &u);
                assert!(
                    (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                    "{pooling:?}/{l:?}: {got} vs {want}"
                );
            }
        }
    }
}

/// Derivative at 0 by Richardson-extrapolated five-point central
/// differences, at the step whose two estimates agree best.
fn richardson(f: impl Fn(f64) -> f64) -> f64 {
    let d5 = |h: f64| (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
    let mut best = (f64::INFINITY, 0.0);
    for h in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5] {
        let (a, b) = (d5(h), d5(h / 2.0));
        let err = (a - b).abs();
        if err < best.0 {
            best = (err, (16.0 * b - a) / 15.0);
        }
    }
    best.1
}

#[test]
fn gradients_match_central_differences() {
    let data = population();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (pooling, l) in VARIANTS {
        let spec = build_model(pooling, l, priors(l), &data).unwrap();
        for _ in 0..100 {
            let u = random_point(&spec, &mut rng);
            let g = spec.grad_log_posterior(&ParamVector(u.clone())).unwrap();
            let f = |i: usize, d: f64| {
                let mut v = u.clone();
                v[i] += d;
                spec.log_posterior(&ParamVector(v)).unwrap()
            };
            for (i, &gi) in g.iter().enumerate() {
                let fd = richardson(|d| f(i, d));
                let err = (gi - fd).abs();
                assert!(
                    err <= 1e-8 + 1e-6 * gi.abs(),
                    "{pooling:?}/{l:?} coord {i}: {gi} vs {fd}"
                );
            }
        }
    }
}

#[test]
fn noise_jacobian_on_one_point() {
    // One Cauchy point at residual r: d/du [ln s - ln(s^2 + r^2)] + d/du ln HC(s) + 1.
    let data = PopulationDataset::new(vec![series(1, &[(1.0, 0.3)], &[true])], 1.0).unwrap();
    let spec = build_model(Pooling::Complete, Likelihood::Cauchy, priors(Likelihood::Cauchy), &data).unwrap();
    let (m, c, u_s) = (0.1, 0.0, 0.4f64);
    let s = u_s.exp();
    let r = 0.3 - m - c;
    let a = 25.0f64;
    let hand = 1.0 - 2.0 * s * s / (s * s + r * r) - 2.0 * s * s / (a * a + s * s) + 1.0;
    let g = spec.grad_log_posterior(&ParamVector(vec![m, c, u_s])).unwrap();
    assert!((g[2] - hand).abs() < 1e-12, "{} vs {hand}", g[2]);
}

#[test]
fn symmetric_residuals_cancel_in_slope() {
    // Residuals +r and -r at the same x, on two tools sharing one line.
    let (m, c, r) = (0.1, 0.2, 0.3);
    let d = PopulationDataset::new(
        vec![
            series(1, &[(2.0, m * 2.0 + c + r)], &[true]),
            series(2, &[(2.0, m * 2.0 + c - r)], &[true]),
        ],
        2.0,
    )
    .unwrap();
    let spec = build_model(Pooling::Complete, Likelihood::Cauchy, priors(Likelihood::Cauchy), &d).unwrap();
    let g = spec.grad_log_posterior(&ParamVector(vec![m, c, 0.0])).unwrap()[0];
    let f = spec.fixed_hyper();
    let prior_only = -(m - f.mu_m) / (f.sigma_m * f.sigma_m);
    assert!((g - prior_only).abs() < 1e-12, "{g} vs {prior_only}");
}

#[test]
fn partial_with_one_tool_reduces_to_independent() {
    let data = PopulationDataset::new(vec![series(4, &[(6.0, 0.5), (12.0, 0.55), (18.0, 0.7)], &[true; 3])], 6.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for l in [Likelihood::Cauchy, Likelihood::Gaussian] {
        let partial = build_model(Pooling::Partial, l, priors(l), &data).unwrap();
        for _ in 0..20 {
            let u = random_point(&partial, &mut rng);
            let v = partial.constrain(&ParamVector(u.clone())).unwrap();
            let (m, c, s) = (v[0], v[1], v[2]);
            let (mu_m, sigma_m, mu_c, sigma_c) = (v[3], v[4], v[5], v[6]);
            let none = build_model(Pooling::None, l, priors(l), &data)
                .unwrap()
                .with_fixed_hyper(rbal::model::FixedHyper {
                    mu_m,
                    sigma_m,
                    mu_c,
                    sigma_c,
                })
                .unwrap();
            let lp_none = none.log_posterior(&ParamVector(vec![m, c, s.ln()])).unwrap();
            let hyper = match priors(l) {
                PriorConfig::Cauchy(p) => {
                    Gamma::new(p.gamma_shape, 1.0 / p.gamma_scale).unwrap().ln_pdf(mu_m)
                        + u[3]
                        + half_cauchy(sigma_m, p.s_sigma_m)
                        + half_cauchy(sigma_c, p.s_sigma_c)
                        + normal(mu_c, p.mu_c_mean, p.mu_c_sd)
                }
                PriorConfig::Gaussian(p) => {
                    let ig = InverseGamma::new(p.a, p.b).unwrap();
                    normal(mu_m, p.m_alpha[1], p.s_alpha[1])
                        + normal(mu_c, p.m_alpha[0], p.s_alpha[0])
                        + ig.ln_pdf(sigma_m)
                        + ig.ln_pdf(sigma_c)
                }
            };
            // Non-centred coordinates add ln σ_m + ln σ_c; log scales add u.
            let jac = sigma_m.ln() + sigma_c.ln() + u[4] + u[6];
            let lp_partial = partial.log_posterior(&ParamVector(u)).unwrap();
            let want = lp_none + hyper + jac;
            assert!((lp_partial - want).abs() < 1e-10 * want.abs().max(1.0), "{lp_partial} vs {want}");
        }
    }
}

#[test]
fn likelihood_is_additive_over_disjoint_labels() {
    let pts = [(6.0, 0.5), (12.0, 0.58), (18.0, 0.71), (24.0, 0.8)];
    let build = |mask: [bool; 4]| {
        let d = PopulationDataset::new(vec![series(1, &pts, &mask)], 6.0).unwrap();
        build_model(Pooling::None, Likelihood::Cauchy, priors(Likelihood::Cauchy), &d).unwrap()
    };
    let u = ParamVector(vec![0.012, 0.4, -2.0]);
    let a = build([true, true, false, false]).log_posterior_parts(&u).unwrap();
    let b = build([false, false, true, true]).log_posterior_parts(&u).unwrap();
    let all = build([true; 4]).log_posterior_parts(&u).unwrap();
    assert!((all.likelihood - a.likelihood - b.likelihood).abs() < 1e-12);
    assert_eq!(all.prior, a.prior);
    assert_eq!(all.jacobian, a.jacobian);
}

#[test]
fn hidden_labels_do_not_enter_the_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (pooling, l) in VARIANTS {
        let base = population();
        let spec = build_model(pooling, l, priors(l), &base).unwrap();
        let mut changed = base.clone();
        for t in &mut changed.tools {
            for (o, r) in t.observations.iter_mut().zip(&t.revealed) {
                if !*r {
                    o.y += 100.0;
                }
            }
        }
        let spec2 = build_model(pooling, l, priors(l), &changed).unwrap();
        for _ in 0..10 {
            let u = ParamVector(random_point(&spec, &mut rng));
            assert_eq!(spec.log_posterior(&u).unwrap(), spec2.log_posterior(&u).unwrap());
            assert_eq!(spec.grad_log_posterior(&u).unwrap(), spec2.grad_log_posterior(&u).unwrap());
        }
    }
}

#[test]
fn mismatched_families_and_defaults() {
    let data = two_tools();
    assert!(build_model(
        Pooling::None,
        Likelihood::Gaussian,
        PriorConfig::Cauchy(CauchyHierPriors::default()),
        &data
    )
    .is_err());
    let spec = build_model(
        Pooling::None,
        Likelihood::Gaussian,
        PriorConfig::Gaussian(GaussianHierPriors::default()),
        &data,
    )
    .unwrap();
    assert_eq!(spec.dim(), 6);
}

proptest! {
    #[test]
    fn constrain_round_trips(seed in any::<u64>(), which in 0usize..6) {
        let (pooling, l) = VARIANTS[which];
        let spec = build_model(pooling, l, priors(l), &population()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = spec
            .layout()
            .params
            .iter()
            .map(|p| match p.constraint {
                Constraint::Positive => rng.random_range(1e-3..10.0),
                Constraint::Real => rng.random_range(-5.0..5.0),
            })
            .collect();
        let back = spec.constrain(&spec.unconstrain(&values).unwrap()).unwrap();
        for (a, b) in values.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}

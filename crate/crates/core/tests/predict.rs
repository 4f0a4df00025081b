use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbal::model::ToolParams;
use rbal::predict::{
    crossing_distance, exceedance_probability, failure_time, forecast, prob_failure_before, total_mse,
};
use rbal::sampler::{write_draws_csv, ModelInfo};
use rbal::stats::quantile_sorted;
use rbal::{ExceedanceMode, Likelihood, Observation, PopulationDataset, Pooling, PosteriorSamples, ToolSeries};

/// One-tool samples from explicit `(m, c, gamma)` draws.
fn lines(draws: &[(f64, f64, f64)]) -> PosteriorSamples {
    let n = draws.len();
    PosteriorSamples {
        names: vec!["m[1]".into(), "c[1]".into(), "gamma[1]".into()],
        positive: vec![false, false, true],
        n_chains: 1,
        n_draws: n,
        values: draws.iter().flat_map(|&(m, c, g)| [m, c, g]).collect(),
        accept_stat: vec![1.0; n],
        divergent: vec![false; n],
        treedepth_saturated: vec![false; n],
        step_size: vec![0.1],
        model: Some(ModelInfo {
            pooling: Pooling::None,
            likelihood: Likelihood::Cauchy,
            tools: vec![ToolParams {
                tool_id: 1,
                slope: 0,
                intercept: 1,
                noise: 2,
            }],
        }),
    }
}

fn random_lines(seed: u64, n: usize, positive_slopes: bool) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let m = if positive_slopes {
                rng.random_range(1e-4..0.05)
            } else {
                rng.random_range(-0.02..0.05)
            };
            (m, rng.random_range(0.0..1.2), rng.random_range(0.001..0.1))
        })
        .collect()
}

#[test]
fn failure_time_matches_exceedance_draw_by_draw() {
    let draws = random_lines(1, 500, false);
    let s = lines(&draws);
    let ftd = failure_time(&s, 1, 0.9).unwrap();
    for x in [0.0, 3.0, 6.02, 12.04, 30.1, 60.2, 1e4] {
        let mut n = 0;
        for (&(m, c, _), &t) in draws.iter().zip(&ftd.t_f) {
            let exceeds = m * x + c > 0.9;
            let failed = t < x;
            // Lines already past the threshold with non-positive slope are
            // failed from 0 but fall back below it later; at x = 0 nothing
            // has failed strictly before.
            if (m > 0.0 || c < 0.9) && x > 0.0 {
                assert_eq!(exceeds, failed, "m {m} c {c} x {x} t {t}");
            }
            n += failed as usize;
        }
        assert_eq!(prob_failure_before(&ftd, x), n as f64 / draws.len() as f64);
    }
}

#[test]
fn latent_probability_equals_recount_of_exported_draws() {
    let draws = random_lines(2, 400, true);
    let s = lines(&draws);
    let mut buf = Vec::new();
    write_draws_csv(&s, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let header = rdr.headers().unwrap().clone();
    let mi = header.iter().position(|h| h == "m[1]").unwrap();
    let ci = header.iter().position(|h| h == "c[1]").unwrap();
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[mi].parse().unwrap(), r[ci].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 400);
    for x in [6.02, 24.08, 48.16] {
        let brute = rows.iter().filter(|(m, c)| m * x + c > 0.9).count();
        let est = exceedance_probability(&s, 1, x, 0.9, ExceedanceMode::LatentOnly).unwrap();
        assert_eq!(est.n_exceed, brute);
        let failed = rows.iter().filter(|(m, c)| crossing_distance(*m, *c, 0.9) < x).count();
        assert_eq!(prob_failure_before(&failure_time(&s, 1, 0.9).unwrap(), x), failed as f64 / 400.0);
    }
}

#[test]
fn predictive_noise_is_centred() {
    let draws = vec![(0.01, 0.4, 0.05); 4000];
    let f = forecast(&lines(&draws), 1, &[10.0], true, 5).unwrap();
    let mut diff: Vec<f64> = {
        let pred = f.predictive.as_ref().unwrap();
        (0..4000).map(|d| pred[d] - f.latent_at(d, 0)).collect()
    };
    diff.sort_by(f64::total_cmp);
    let median = quantile_sorted(&diff, 0.5);
    // Sample median of Cauchy(0, g) has sd about g * pi / (2 sqrt(n)).
    let se = 0.05 * std::f64::consts::PI / (2.0 * 4000f64.sqrt());
    assert!(median.abs() < 3.0 * se, "{median}");
}

#[test]
fn mse_of_a_collapsed_posterior() {
    let obs = vec![Observation { x: 5.0, y: 0.5 }, Observation { x: 10.0, y: 0.8 }];
    let tool = ToolSeries::new(1, obs, vec![true, false]).unwrap();
    let data = PopulationDataset::new(vec![tool], 5.0).unwrap();
    let exact = lines(&[(0.06, 0.2, 0.01)]);
    assert_eq!(total_mse(&exact, &data).unwrap().total, 0.0);
    let off = lines(&[(0.06, 0.4, 0.01)]);
    assert!((total_mse(&off, &data).unwrap().total - 0.04).abs() < 1e-12);
}

proptest! {
    #[test]
    fn exceedance_grows_with_distance(seed in any::<u64>(), x1 in 0.0..100.0f64, x2 in 0.0..100.0f64) {
        let s = lines(&random_lines(seed, 200, true));
        let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        let p = |x| exceedance_probability(&s, 1, x, 0.9, ExceedanceMode::LatentOnly).unwrap().probability;
        prop_assert!(p(lo) <= p(hi));
    }

    #[test]
    fn exceedance_shrinks_with_threshold(seed in any::<u64>(), s1 in 0.0..2.0f64, s2 in 0.0..2.0f64, x in 0.0..100.0f64) {
        let s = lines(&random_lines(seed, 200, false));
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        for mode in [ExceedanceMode::LatentOnly, ExceedanceMode::WithNoise] {
            let p = |t| exceedance_probability(&s, 1, x, t, mode).unwrap().probability;
            prop_assert!(p(hi) <= p(lo));
        }
    }

    #[test]
    fn probabilities_are_fractions_of_draws(seed in any::<u64>(), x in 0.0..100.0f64) {
        let s = lines(&random_lines(seed, 137, false));
        let e = exceedance_probability(&s, 1, x, 0.9, ExceedanceMode::WithNoise).unwrap();
        prop_assert!((0.0..=1.0).contains(&e.probability));
        prop_assert_eq!(e.probability, e.n_exceed as f64 / 137.0);
    }
}

//! Warmup adaptation: dual-averaging step size and windowed estimation of
//! a diagonal inverse metric.

/// Nesterov dual averaging of the log step size toward a target mean
/// acceptance statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAveraging {
    pub target_accept: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
    log_step: f64,
}

impl DualAveraging {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        let mut da = DualAveraging {
            target_accept,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: 0.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            log_step: initial_step.ln(),
        };
        da.restart(initial_step);
        da
    }

    /// Restart the averaging around a new initial step size, shrinking
    /// toward `10 × step`.
    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
        self.log_step = step.ln();
    }

    /// Feed one acceptance statistic; returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let a = accept_stat.clamp(0.0, 1.0);
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target_accept - a);
        self.log_step = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let w = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - w) * self.x_bar + w * self.log_step;
        self.log_step.exp()
    }

    pub fn current_step(&self) -> f64 {
        self.log_step.exp()
    }

    /// Averaged step size used once warmup ends.
    pub fn final_step(&self) -> f64 {
        if self.counter == 0.0 {
            self.log_step.exp()
        } else {
            self.x_bar.exp()
        }
    }
}

/// Welford accumulator for per-coordinate variances.
#[derive(Debug, Clone)]
pub(crate) struct VarianceEstimator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        VarianceEstimator {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, q: &[f64]) {
        self.n += 1.0;
        for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
            let d = x - *m;
            *m += d / self.n;
            *s += d * (x - *m);
        }
    }

    /// Sample variances shrunk toward 1e-3, as in Stan's diagonal metric.
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn restart(&mut self) {
        self.n = 0.0;
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.m2.iter_mut().for_each(|m| *m = 0.0);
    }
}

/// Stan-style warmup windows: a fast initial buffer, doubling slow windows
/// that estimate the metric, and a fast terminal buffer.
#[derive(Debug, Clone)]
pub(crate) struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    enabled: bool,
}

impl WindowSchedule {
    pub fn new(warmup: usize, adapt_metric: bool) -> Self {
        let (mut init_buffer, mut term_buffer, mut base) = (75, 50, 25);
        let enabled = adapt_metric && warmup >= 20;
        if init_buffer + base + term_buffer > warmup {
            init_buffer = (0.15 * warmup as f64) as usize;
            term_buffer = (0.1 * warmup as f64) as usize;
            base = warmup.saturating_sub(init_buffer + term_buffer);
        }
        WindowSchedule {
            warmup,
            init_buffer,
            term_buffer,
            window_size: base,
            next_window: (init_buffer + base).saturating_sub(1),
            counter: 0,
            enabled,
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.warmup - self.term_buffer
            && self.counter != self.warmup
    }

    fn end_of_window(&self) -> bool {
        self.counter == self.next_window && self.counter != self.warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Record one warmup position. Returns the new inverse metric at the end
    /// of a slow window.
    pub fn observe(&mut self, est: &mut VarianceEstimator, q: &[f64]) -> Option<Vec<f64>> {
        if !self.enabled {
            return None;
        }
        if self.in_window() {
            est.add(q);
        }
        let out = if self.end_of_window() {
            self.compute_next_window();
            let var = est.regularized_variance();
            est.restart();
            Some(var)
        } else {
            None
        };
        self.counter += 1;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_at_target() {
        let mut da = DualAveraging::new(0.3, 0.8);
        let steps: Vec<f64> = (0..1000).map(|_| da.update(0.8)).collect();
        let tail = &steps[900..];
        let (lo, hi) = tail
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s.ln()), b.max(s.ln())));
        assert!((hi - lo).abs() / lo.abs().max(1e-12) < 1e-3);
        let x_bar_tail: Vec<f64> = {
            let mut da = DualAveraging::new(0.3, 0.8);
            (0..1000)
                .map(|_| {
                    da.update(0.8);
                    da.final_step().ln()
                })
                .collect()
        };
        let drift = (x_bar_tail[999] - x_bar_tail[899]).abs() / x_bar_tail[999].abs();
        assert!(drift < 1e-3, "drift {drift}");
    }

    #[test]
    fn rejections_shrink_and_acceptances_grow() {
        // The first update jumps toward the 10x shrinkage point; monotone after.
        let mut da = DualAveraging::new(0.5, 0.8);
        let mut prev = da.update(0.0);
        for _ in 0..200 {
            let s = da.update(0.0);
            assert!(s < prev);
            prev = s;
        }
        let mut da = DualAveraging::new(0.5, 0.8);
        let mut prev = da.update(1.0);
        for _ in 0..200 {
            let s = da.update(1.0);
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn windows_for_default_warmup() {
        let mut sched = WindowSchedule::new(1000, true);
        let mut est = VarianceEstimator::new(1);
        let ends: Vec<usize> = (0..1000)
            .filter(|&i| sched.observe(&mut est, &[i as f64]).is_some())
            .collect();
        // Stan's schedule: 75 + 25, 50, 100, 200, 500 (last window stretched).
        assert_eq!(ends, vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_uses_proportional_buffers() {
        let mut sched = WindowSchedule::new(100, true);
        let mut est = VarianceEstimator::new(1);
        let ends: Vec<usize> = (0..100)
            .filter(|&i| sched.observe(&mut est, &[i as f64]).is_some())
            .collect();
        assert_eq!(ends, vec![89]);
        let mut off = WindowSchedule::new(10, true);
        assert!((0..10).all(|i| off.observe(&mut est, &[i as f64]).is_none()));
        let _ = WindowSchedule::new(0, true);
    }
}

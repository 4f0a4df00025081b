use super::LogDensity;

/// Position, momentum and cached density/gradient at the position.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    /// Evaluate the target at `q`; momentum starts at zero.
    pub fn at<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density_grad(&q, &mut grad);
        let p = vec![0.0; q.len()];
        PhasePoint { q, p, grad, logp }
    }

    pub fn kinetic(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self
            .p
            .iter()
            .zip(inv_mass)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    /// Hamiltonian; non-finite states map to +∞.
    pub fn energy(&self, inv_mass: &[f64]) -> f64 {
        let h = -self.logp + self.kinetic(inv_mass);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    pub fn is_finite(&self) -> bool {
        self.logp.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }

    /// Velocity `M⁻¹ p`.
    pub fn velocity(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }
}

/// One velocity-Verlet step of size `step` (negative steps integrate
/// backwards) under a diagonal metric.
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, state: &PhasePoint, step: f64, inv_mass: &[f64]) -> PhasePoint {
    let mut next = state.clone();
    leapfrog_in_place(target, &mut next, step, inv_mass);
    next
}

pub(crate) fn leapfrog_in_place<T: LogDensity + ?Sized>(
    target: &T,
    z: &mut PhasePoint,
    step: f64,
    inv_mass: &[f64],
) {
    let half = 0.5 * step;
    for ((p, g), (q, m)) in z.p.iter_mut().zip(&z.grad).zip(z.q.iter_mut().zip(inv_mass)) {
        *p += half * g;
        *q += step * m * *p;
    }
    z.logp = target.log_density_grad(&z.q, &mut z.grad);
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
}

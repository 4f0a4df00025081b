//! Multinomial No-U-Turn transitions with the generalised U-turn criterion,
//! plus a fixed-length HMC fallback.

use rand::Rng;
use rand_distr::StandardNormal;

use super::integrator::{leapfrog_in_place, PhasePoint};
use super::LogDensity;

/// Energy error beyond which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub depth: usize,
    pub divergent: bool,
    pub saturated: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(v_minus: &[f64], v_plus: &[f64], rho: &[f64]) -> bool {
    dot(v_plus, rho) > 0.0 && dot(v_minus, rho) > 0.0
}

pub(crate) fn draw_momentum<R: Rng>(z: &mut PhasePoint, inv_mass: &[f64], rng: &mut R) {
    for (p, m) in z.p.iter_mut().zip(inv_mass) {
        let n: f64 = rng.sample(StandardNormal);
        *p = n / m.sqrt();
    }
}

struct Tree<'a, T: ?Sized> {
    target: &'a T,
    inv_mass: &'a [f64],
    step: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

/// Ends of one subtree: momenta and velocities at the first and last state
/// in the direction of integration.
struct Ends {
    p_beg: Vec<f64>,
    v_beg: Vec<f64>,
    p_end: Vec<f64>,
    v_end: Vec<f64>,
}

impl<T: LogDensity + ?Sized> Tree<'_, T> {
    /// Extend `z` by `2^depth` steps. Returns `None` when the subtree hits a
    /// divergence or violates the U-turn criterion, otherwise the sampled
    /// proposal, the subtree ends, its momentum sum and log weight.
    fn build<R: Rng>(
        &mut self,
        depth: usize,
        z: &mut PhasePoint,
        sign: f64,
        rng: &mut R,
    ) -> Option<(PhasePoint, Ends, Vec<f64>, f64)> {
        if depth == 0 {
            leapfrog_in_place(self.target, z, sign * self.step, self.inv_mass);
            self.n_leapfrog += 1;
            let h = z.energy(self.inv_mass);
            if h - self.h0 > MAX_DELTA_H || !z.is_finite() {
                self.divergent = true;
            }
            let log_w = self.h0 - h;
            self.sum_metro += if log_w > 0.0 { 1.0 } else { log_w.exp() };
            if self.divergent {
                return None;
            }
            let v = z.velocity(self.inv_mass);
            let ends = Ends {
                p_beg: z.p.clone(),
                v_beg: v.clone(),
                p_end: z.p.clone(),
                v_end: v,
            };
            return Some((z.clone(), ends, z.p.clone(), log_w));
        }

        let (prop_init, init, rho_init, w_init) = self.build(depth - 1, z, sign, rng)?;
        let (prop_final, fin, rho_final, w_final) = self.build(depth - 1, z, sign, rng)?;

        let w = log_sum_exp(w_init, w_final);
        let proposal = if w_final > w || rng.random::<f64>() < (w_final - w).exp() {
            prop_final
        } else {
            prop_init
        };
        let rho = add(&rho_init, &rho_final);

        let mut ok = no_u_turn(&init.v_beg, &fin.v_end, &rho);
        ok &= no_u_turn(&init.v_beg, &fin.v_beg, &add(&rho_init, &fin.p_beg));
        ok &= no_u_turn(&init.v_end, &fin.v_end, &add(&rho_final, &init.p_end));
        if !ok {
            return None;
        }
        let ends = Ends {
            p_beg: init.p_beg,
            v_beg: init.v_beg,
            p_end: fin.p_end,
            v_end: fin.v_end,
        };
        Some((proposal, ends, rho, w))
    }
}

/// One NUTS transition from `current` (whose momentum is ignored).
pub(crate) fn nuts_transition<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    current: &PhasePoint,
    inv_mass: &[f64],
    step: f64,
    max_depth: usize,
    rng: &mut R,
) -> (PhasePoint, TransitionStats) {
    let mut z0 = current.clone();
    draw_momentum(&mut z0, inv_mass, rng);
    let h0 = z0.energy(inv_mass);
    let v0 = z0.velocity(inv_mass);

    let mut tree = Tree {
        target,
        inv_mass,
        step,
        h0,
        n_leapfrog: 0,
        sum_metro: 0.0,
        divergent: false,
    };

    // Backward end ("bck") and forward end ("fwd") of the whole trajectory.
    let mut z_bck = z0.clone();
    let mut z_fwd = z0.clone();
    let mut bck = Ends {
        p_beg: z0.p.clone(),
        v_beg: v0.clone(),
        p_end: z0.p.clone(),
        v_end: v0.clone(),
    };
    let mut fwd = Ends {
        p_beg: z0.p.clone(),
        v_beg: v0.clone(),
        p_end: z0.p.clone(),
        v_end: v0,
    };
    let mut rho = z0.p.clone();
    let mut log_w = 0.0;
    let mut sample = z0;
    let mut depth = 0;

    while depth < max_depth {
        let forward = rng.random::<bool>();
        let built = if forward {
            tree.build(depth, &mut z_fwd, 1.0, rng)
        } else {
            tree.build(depth, &mut z_bck, -1.0, rng)
        };
        let Some((proposal, sub, rho_sub, w_sub)) = built else {
            break;
        };
        depth += 1;

        if w_sub > log_w || rng.random::<f64>() < (w_sub - log_w).exp() {
            sample = proposal;
        }
        log_w = log_sum_exp(log_w, w_sub);

        let (rho_old, rho_new) = (rho.clone(), rho_sub);
        rho = add(&rho_old, &rho_new);
        // Besides the whole trajectory, check the old part extended by the
        // adjacent new state and the new subtree extended by the adjacent
        // old state.
        let ok = if forward {
            let full = no_u_turn(&bck.v_end, &sub.v_end, &rho);
            let a = no_u_turn(&bck.v_end, &sub.v_beg, &add(&rho_old, &sub.p_beg));
            let b = no_u_turn(&fwd.v_end, &sub.v_end, &add(&rho_new, &fwd.p_end));
            fwd = sub;
            full && a && b
        } else {
            let full = no_u_turn(&sub.v_end, &fwd.v_end, &rho);
            let a = no_u_turn(&sub.v_beg, &fwd.v_end, &add(&rho_old, &sub.p_beg));
            let b = no_u_turn(&sub.v_end, &bck.v_end, &add(&rho_new, &bck.p_end));
            bck = sub;
            full && a && b
        };
        if !ok {
            break;
        }
    }

    let n = tree.n_leapfrog.max(1);
    let stats = TransitionStats {
        accept_stat: tree.sum_metro / n as f64,
        n_leapfrog: tree.n_leapfrog,
        depth,
        divergent: tree.divergent,
        saturated: depth >= max_depth,
    };
    (sample, stats)
}

/// Fixed-length HMC transition with a Metropolis correction.
pub(crate) fn static_hmc_transition<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    current: &PhasePoint,
    inv_mass: &[f64],
    step: f64,
    n_steps: usize,
    rng: &mut R,
) -> (PhasePoint, TransitionStats) {
    let mut z = current.clone();
    draw_momentum(&mut z, inv_mass, rng);
    let h0 = z.energy(inv_mass);
    let mut divergent = false;
    for _ in 0..n_steps {
        leapfrog_in_place(target, &mut z, step, inv_mass);
        if !z.is_finite() || z.energy(inv_mass) - h0 > MAX_DELTA_H {
            divergent = true;
            break;
        }
    }
    let h = z.energy(inv_mass);
    let accept = if divergent { 0.0 } else { (h0 - h).exp().min(1.0) };
    let next = if !divergent && rng.random::<f64>() < accept {
        z
    } else {
        current.clone()
    };
    let stats = TransitionStats {
        accept_stat: accept,
        n_leapfrog: n_steps,
        depth: 0,
        divergent,
        saturated: false,
    };
    (next, stats)
}

//! Normalised log-densities used by the regression models.
//!
//! Functions returning a tuple give the log-density together with its
//! derivative with respect to the log of the (positive) argument, which is
//! the form the unconstrained parameterisation needs.

use std::f64::consts::{LN_2, PI};

use statrs::function::gamma::ln_gamma;

const LN_PI: f64 = 1.144_729_885_849_400_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

pub fn cauchy_lpdf(x: f64, loc: f64, scale: f64) -> f64 {
    let r = (x - loc) / scale;
    -(PI * scale).ln() - r.ln_1p_sq()
}

/// Half-Cauchy with location zero; returns `(lpdf, d lpdf / d ln x)`.
pub fn half_cauchy_lpdf(x: f64, scale: f64) -> (f64, f64) {
    let r = x / scale;
    let val = LN_2 - LN_PI - scale.ln() - r.ln_1p_sq();
    let d = -2.0 * r * r / (1.0 + r * r);
    (val, d)
}

/// Gamma with shape/scale; returns `(lpdf, d lpdf / d ln x)`.
pub fn gamma_lpdf(x: f64, shape: f64, scale: f64) -> (f64, f64) {
    let val = -ln_gamma(shape) - shape * scale.ln() + (shape - 1.0) * x.ln() - x / scale;
    let d = (shape - 1.0) - x / scale;
    (val, d)
}

/// Inverse-Gamma with shape/scale; returns `(lpdf, d lpdf / d ln x)`.
pub fn inv_gamma_lpdf(x: f64, shape: f64, scale: f64) -> (f64, f64) {
    let val = shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x;
    let d = -(shape + 1.0) + scale / x;
    (val, d)
}

trait Ln1pSq {
    fn ln_1p_sq(self) -> f64;
}

impl Ln1pSq for f64 {
    #[inline]
    fn ln_1p_sq(self) -> f64 {
        (self * self).ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Cauchy, Continuous, Gamma, InverseGamma, Normal};

    #[test]
    fn cauchy_at_location_is_minus_ln_pi() {
        assert_abs_diff_eq!(cauchy_lpdf(0.7, 0.7, 1.0), -PI.ln(), epsilon = 1e-15);
    }

    #[test]
    fn exponential_prior_at_two() {
        assert_abs_diff_eq!(gamma_lpdf(2.0, 1.0, 1.0).0, -2.0, epsilon = 1e-15);
    }

    #[test]
    fn agrees_with_statrs() {
        let n = Normal::new(0.3, 1.7).unwrap();
        assert_abs_diff_eq!(normal_lpdf(1.1, 0.3, 1.7), n.ln_pdf(1.1), epsilon = 1e-12);
        let c = Cauchy::new(0.2, 0.05).unwrap();
        assert_abs_diff_eq!(cauchy_lpdf(0.31, 0.2, 0.05), c.ln_pdf(0.31), epsilon = 1e-12);
        let g = Gamma::new(2.5, 1.0 / 0.7).unwrap();
        assert_abs_diff_eq!(gamma_lpdf(1.3, 2.5, 0.7).0, g.ln_pdf(1.3), epsilon = 1e-12);
        let ig = InverseGamma::new(3.0, 0.4).unwrap();
        assert_abs_diff_eq!(inv_gamma_lpdf(0.2, 3.0, 0.4).0, ig.ln_pdf(0.2), epsilon = 1e-12);
        // Half-Cauchy is twice the Cauchy density on the positive axis.
        let c0 = Cauchy::new(0.0, 25.0).unwrap();
        assert_abs_diff_eq!(half_cauchy_lpdf(3.0, 25.0).0, LN_2 + c0.ln_pdf(3.0), epsilon = 1e-12);
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        let h = 1e-6;
        let check = |f: &dyn Fn(f64) -> (f64, f64), x: f64| {
            let fd = (f((x.ln() + h).exp()).0 - f((x.ln() - h).exp()).0) / (2.0 * h);
            assert_abs_diff_eq!(f(x).1, fd, epsilon = 1e-7);
        };
        check(&|x| half_cauchy_lpdf(x, 2.0), 0.7);
        check(&|x| gamma_lpdf(x, 1.5, 0.8), 1.9);
        check(&|x| inv_gamma_lpdf(x, 2.0, 0.3), 0.4);
    }
}

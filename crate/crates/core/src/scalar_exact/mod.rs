//! Exact offset bounds for the first-order plant `ẋ = ax + bu`.
//!
//! With `λ = e^{ah}` and `θ = e^{−aΔ} − 1` the sampled loop is the interval
//! plant
//!
//! ```text
//! P_θ(z) = (λ − 1)z/(1 − λz) − θ·λz(z − 1)/(1 − λz)
//! ```
//!
//! (taking `b/a = 1`, which does not affect stabilizability). Everything here
//! works in the `θ` coordinate and converts to offset lengths at the end.

mod bounds;
mod interpolation;
mod rational;

pub use bounds::{
    additive_decomposition, additive_uncertainty_scalar_bound, jury_static, kappa, lifted_matrix,
    small_gain_scalar_bound, static_bound, static_closed_loop_matrix, static_theta_range, two_periodic_bound,
    two_periodic_brute_force, two_periodic_gains, AdditiveDecomposition, PeriodicGains, ThetaInterval,
};
pub use interpolation::{
    conformal_inverse, conformal_map, construct_interpolant, pick_feasible, pick_matrix, scalar_controller,
    Interpolant, ScalarController, DEFAULT_POLE,
};
pub use rational::{Poly, RationalFn};

use num_complex::Complex64;

use crate::discretization::OffsetInterval;
use crate::error::{Error, Result};
use crate::numerics::{DiscreteSystem, Mat};

/// `θ = e^{−aΔ} − 1`.
pub fn theta_of_delta(a: f64, delta: f64) -> f64 {
    (-a * delta).exp_m1()
}

/// Inverse of [`theta_of_delta`] for `a > 0`.
pub fn delta_of_theta(a: f64, theta: f64) -> f64 {
    -theta.ln_1p() / a
}

/// `S_max = (e^{−ah} − 1, e^{ah} − 1)`, the θ-image of `|Δ| < h`.
pub fn theta_range(lambda: f64) -> (f64, f64) {
    (1.0 / lambda - 1.0, lambda - 1.0)
}

/// A first-order instance in θ coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProblem {
    pub a: f64,
    pub h: f64,
    pub lambda: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl ScalarProblem {
    pub fn new(a: f64, h: f64, theta_lo: f64, theta_hi: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("unstable pole a = {a} must be positive")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("period h = {h} must be positive")));
        }
        let lambda = (a * h).exp();
        check_theta_interval(lambda, theta_lo, theta_hi)?;
        Ok(Self {
            a,
            h,
            lambda,
            theta_lo,
            theta_hi,
        })
    }

    /// From an offset interval `[Δ̲, Δ̄]`, which maps to `[e^{−aΔ̄} − 1, e^{−aΔ̲} − 1]`.
    pub fn from_offsets(a: f64, h: f64, interval: OffsetInterval) -> Result<Self> {
        interval.check_period(h)?;
        let (lo, hi) = interval.theta_image(a);
        Self::new(a, h, lo, hi)
    }

    pub fn lti_feasible(&self) -> Result<bool> {
        lti_exact_condition(self.lambda, self.theta_lo, self.theta_hi)
    }

    /// Offset interval corresponding to the θ interval.
    pub fn offsets(&self) -> (f64, f64) {
        (delta_of_theta(self.a, self.theta_hi), delta_of_theta(self.a, self.theta_lo))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("λ = {lambda} must exceed 1")));
    }
    Ok(())
}

/// `θ̲ < 0 < θ̄` inside `S_max`.
fn check_theta_interval(lambda: f64, lo: f64, hi: f64) -> Result<()> {
    check_lambda(lambda)?;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("θ interval"));
    }
    if !(lo < 0.0 && 0.0 < hi) {
        return Err(Error::Unsupported(format!(
            "θ interval [{lo}, {hi}] must straddle 0; one-sided intervals have no exact bound here"
        )));
    }
    let (smin, smax) = theta_range(lambda);
    if lo <= smin || hi >= smax {
        return Err(Error::InvalidParameter(format!(
            "θ interval [{lo}, {hi}] leaves S_max = ({smin}, {smax})"
        )));
    }
    Ok(())
}

/// Exact LTI stabilizability: `(λ − 1)²θ̄ − (λ + 1)²θ̲ < 4λ`.
pub fn lti_exact_condition(lambda: f64, theta_lo: f64, theta_hi: f64) -> Result<bool> {
    check_theta_interval(lambda, theta_lo, theta_hi)?;
    Ok((lambda - 1.0).powi(2) * theta_hi - (lambda + 1.0).powi(2) * theta_lo < 4.0 * lambda)
}

/// Symmetric form of the exact condition: `θ̄ < 2λ/(λ² + 1)`.
pub fn lti_symmetric_radius(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(2.0 * lambda / (lambda * lambda + 1.0))
}

/// `2 ln((λ + 1)/(λ − 1))/a` without the sampling clip.
pub fn lti_length_unclipped(a: f64, h: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("a = {a}; use a_zero_case for a = 0")));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("period h = {h} must be positive")));
    }
    let lambda = (a * h).exp();
    Ok(2.0 * ((lambda + 1.0) / (lambda - 1.0)).ln() / a)
}

/// Supremum of `Δ̄ − Δ̲` over LTI-stabilizable intervals, clipped at `2h`.
pub fn max_offset_length_lti(a: f64, h: f64) -> Result<f64> {
    Ok(lti_length_unclipped(a, h)?.min(2.0 * h))
}

/// `h₀ = ln(1 + √2)/a`, where the sampling clip stops binding.
pub fn crossover_period(a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("a = {a} must be positive")));
    }
    Ok((1.0 + 2f64.sqrt()).ln() / a)
}

/// `a = 0`: every offset in `(−h, h)` is tolerable.
pub fn a_zero_case(h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("period h = {h} must be positive")));
    }
    Ok(2.0 * h)
}

/// `P_Δ(z) = hz/(1 − z) − Δz` for `a = 0`, `b = 1`.
pub fn a_zero_transfer(h: f64, delta: f64, z: Complex64) -> Complex64 {
    h * z / (1.0 - z) - delta * z
}

/// `P_θ(z)` with `b/a = 1`.
pub fn scalar_transfer(lambda: f64, theta: f64, z: Complex64) -> Complex64 {
    ((lambda - 1.0) * z - theta * lambda * z * (z - 1.0)) / (1.0 - lambda * z)
}

/// The sampled plant–estimator loop for `b/a = 1`, output the held estimate.
pub fn scalar_system(lambda: f64, theta: f64) -> DiscreteSystem {
    let l1 = lambda * (1.0 + theta);
    DiscreteSystem::new(
        Mat::from_row_slice(2, 2, &[-lambda * theta, -lambda * theta, l1, l1]),
        Mat::from_row_slice(2, 1, &[-lambda * theta, l1 - 1.0]),
        Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        Mat::zeros(1, 1),
    )
    .expect("fixed 2×2 shapes")
}

/// Offsets whose θ-image is the open symmetric interval `(−r, r)`, clipped
/// to `(−h, h)`.
pub fn symmetric_radius_to_offsets(a: f64, h: f64, r: f64) -> (f64, f64) {
    let lo = (-(r.ln_1p()) / a).max(-h);
    let hi = if r >= 1.0 { h } else { (-(-r).ln_1p() / a).min(h) };
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{discretize, ContinuousPlant};
    use crate::numerics::circle_points;
    use std::f64::consts::E;

    #[test]
    fn symmetric_examples() {
        let r = 2.0 * E / (E * E + 1.0);
        assert!((r - 0.648_054).abs() < 1e-6);
        assert!(lti_exact_condition(E, -0.5, 0.5).unwrap());
        assert!(!lti_exact_condition(E, -0.6, 1.0).unwrap());
        assert!(lti_exact_condition(E, -0.55, 0.9).unwrap());
        assert!(lti_exact_condition(E, -1e-12, 1e-12).unwrap());
        // symmetric form agrees away from the boundary
        let r4 = lti_symmetric_radius(4.0).unwrap();
        assert!((r4 - 8.0 / 17.0).abs() < 1e-15);
        for k in 1..100 {
            let t = k as f64 / 100.0 * 0.74;
            assert_eq!(lti_exact_condition(4.0, -t, t).unwrap(), t < r4);
        }
    }

    #[test]
    fn one_sided_and_out_of_range_rejected() {
        assert!(matches!(lti_exact_condition(E, 0.0, 0.3), Err(Error::Unsupported(_))));
        assert!(matches!(lti_exact_condition(E, -0.3, 0.0), Err(Error::Unsupported(_))));
        assert!(lti_exact_condition(E, -0.7, 0.3).is_err());
        assert!(lti_exact_condition(1.0, -0.1, 0.1).is_err());
    }

    #[test]
    fn corollary_length() {
        let l = max_offset_length_lti(1.0, 1.0).unwrap();
        assert!((l - 2.0 * ((E + 1.0) / (E - 1.0)).ln()).abs() < 1e-12);
        assert!((l - 1.5438).abs() < 1e-4);
        assert_eq!(max_offset_length_lti(1.0, 0.5).unwrap(), 1.0);
        assert!((crossover_period(1.0).unwrap() - 0.881_373_587).abs() < 1e-9);
        assert!(max_offset_length_lti(0.0, 1.0).is_err());
        // the clip and the formula meet at h₀
        let h0 = crossover_period(1.0).unwrap();
        assert!((lti_length_unclipped(1.0, h0).unwrap() - 2.0 * h0).abs() < 1e-12);
    }

    #[test]
    fn length_decays_beyond_crossover() {
        let a = 2.0;
        let h0 = crossover_period(a).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let h = h0 + 0.02 * k as f64;
            let l = max_offset_length_lti(a, h).unwrap();
            assert!(l < prev);
            prev = l;
        }
        let h = 8.0;
        let l = max_offset_length_lti(a, h).unwrap();
        let asym = 4.0 * (-a * h).exp() / a;
        assert!((l / asym - 1.0).abs() < 1e-6);
    }

    #[test]
    fn condition_depends_only_on_offset_length() {
        let (a, h) = (1.0, 1.0);
        let lmax = max_offset_length_lti(a, h).unwrap();
        for shift in [-0.2, 0.0, 0.15] {
            for (len, expect) in [(0.98 * lmax, true), (1.02 * lmax, false)] {
                let lo = -len / 2.0 + shift;
                let p = ScalarProblem::from_offsets(a, h, OffsetInterval::new(lo, lo + len).unwrap()).unwrap();
                assert_eq!(p.lti_feasible().unwrap(), expect, "shift {shift}, len {len}");
            }
        }
    }

    #[test]
    fn a_zero_limit_and_transfer() {
        assert_eq!(a_zero_case(1.0).unwrap(), 2.0);
        assert!((max_offset_length_lti(1e-6, 1.0).unwrap() - 2.0).abs() < 1e-4);
        let h = 0.7;
        let plant = ContinuousPlant::scalar(0.0, 1.0, h).unwrap();
        for delta in [-0.5, 0.0, 0.3] {
            let sys = discretize(&plant, delta).unwrap();
            for z in circle_points(24).into_iter().filter(|z| (z - 1.0).norm() > 1e-3) {
                let got = sys.eval(z)[(0, 0)];
                assert!((got - a_zero_transfer(h, delta, z)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn state_space_matches_interval_transfer() {
        let (a, h): (f64, f64) = (0.8, 1.3);
        let lambda = (a * h).exp();
        let plant = ContinuousPlant::scalar(a, a, h).unwrap();
        for delta in [-0.9, -0.1, 0.4, 1.2] {
            let theta = theta_of_delta(a, delta);
            let ours = scalar_system(lambda, theta);
            let model = discretize(&plant, delta).unwrap();
            for z in circle_points(16) {
                let want = scalar_transfer(lambda, theta, z);
                assert!((ours.eval(z)[(0, 0)] - want).norm() < 1e-10);
                assert!((model.eval(z)[(0, 0)] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn theta_delta_round_trip() {
        for &(a, d) in &[(1.0, 0.3), (2.5, -0.1), (0.1, 0.9)] {
            assert!((delta_of_theta(a, theta_of_delta(a, d)) - d).abs() < 1e-14);
        }
        let (lo, hi) = symmetric_radius_to_offsets(1.0, 1.0, 1.0 / E);
        assert!((hi - lo - ((E + 1.0) / (E - 1.0)).ln()).abs() < 1e-12);
        // symmetric exact radius maps to the Corollary length
        let r = lti_symmetric_radius(E * E).unwrap();
        let (lo, hi) = symmetric_radius_to_offsets(1.0, 2.0, r);
        assert!((hi - lo - max_offset_length_lti(1.0, 2.0).unwrap()).abs() < 1e-12);
    }
}

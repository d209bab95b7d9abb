//! Constructive LTI stabilizer via disc interpolation.

use num_complex::Complex64;

use super::rational::{Poly, RationalFn};
use super::{check_theta_interval, scalar_system};
use crate::error::{Error, Result};
use crate::numerics::{circle_points, spectral_radius, DiscreteSystem};
use crate::synthesis::closed_loop_matrix;

/// Default pole parameter `c` of the first-order coprime factors.
pub const DEFAULT_POLE: f64 = 2.0;

const SUP_GRID: usize = 4096;
const SWEEP_POINTS: usize = 200;
const CANCELLATION_TOL: f64 = 1e-8;

/// `φ(s) = (1 − √((1 − θ̄s)/(1 − θ̲s))) / (1 + √(…))`, mapping the slit plane
/// `ℂ ∖ ((−∞, 1/θ̲] ∪ [1/θ̄, ∞))` onto the unit disc.
pub fn conformal_map(s: Complex64, theta_lo: f64, theta_hi: f64) -> Result<Complex64> {
    if s.im == 0.0 && (s.re <= 1.0 / theta_lo || s.re >= 1.0 / theta_hi) {
        return Err(Error::InvalidParameter(format!("s = {s} lies on an excluded ray")));
    }
    let r = ((1.0 - theta_hi * s) / (1.0 - theta_lo * s)).sqrt();
    Ok((1.0 - r) / (1.0 + r))
}

/// `φ⁻¹(w) = 4w / (θ̄(w + 1)² − θ̲(w − 1)²)`.
pub fn conformal_inverse(w: Complex64, theta_lo: f64, theta_hi: f64) -> Complex64 {
    4.0 * w / (theta_hi * (w + 1.0).powi(2) - theta_lo * (w - 1.0).powi(2))
}

/// `[[1, 1], [1, (1 − |φ(−1)|²)/(1 − 1/λ²)]]`.
pub fn pick_matrix(lambda: f64, theta_lo: f64, theta_hi: f64) -> Result<[[f64; 2]; 2]> {
    check_theta_interval(lambda, theta_lo, theta_hi)?;
    let w = conformal_map(Complex64::new(-1.0, 0.0), theta_lo, theta_hi)?;
    let m22 = (1.0 - w.norm_sqr()) / (1.0 - 1.0 / (lambda * lambda));
    Ok([[1.0, 1.0], [1.0, m22]])
}

/// Positive definiteness of the Pick matrix.
pub fn pick_feasible(lambda: f64, theta_lo: f64, theta_hi: f64) -> Result<bool> {
    let m = pick_matrix(lambda, theta_lo, theta_hi)?;
    // leading minor is 1, so definiteness is the determinant sign
    Ok(m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0)
}

/// `g(z) = w′μ·z(z − 1)/(z − d)` with `g(0) = g(1) = 0`, `g(1/λ) = φ(−1)`.
#[derive(Debug, Clone)]
pub struct Interpolant {
    pub g: RationalFn,
    /// `φ(−1)`.
    pub w: f64,
    /// `λ·φ(−1)`.
    pub w_prime: f64,
    pub mu: f64,
    pub d: f64,
    /// Closed-form `sup_{|z|≤1} |g|`.
    pub sup_bound: f64,
    /// Largest `|g|` on the circle grid.
    pub sup_grid: f64,
}

impl Interpolant {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.g.eval(z)
    }
}

pub fn construct_interpolant(lambda: f64, theta_lo: f64, theta_hi: f64) -> Result<Interpolant> {
    if !super::lti_exact_condition(lambda, theta_lo, theta_hi)? {
        return Err(Error::Infeasible(format!(
            "(λ − 1)²θ̄ − (λ + 1)²θ̲ ≥ 4λ for λ = {lambda}, θ ∈ [{theta_lo}, {theta_hi}]"
        )));
    }
    let w = conformal_map(Complex64::new(-1.0, 0.0), theta_lo, theta_hi)?.re;
    let w_prime = lambda * w;
    assert!(w_prime.abs() < 1.0, "Pick condition holds but |λφ(−1)| = {}", w_prime.abs());
    let bound = |d: f64| w_prime.abs() * 2.0 * (lambda * d - 1.0) / ((lambda - 1.0) * (d + 1.0));
    let mut delta = 1.0;
    while bound(1.0 + delta) >= 1.0 {
        delta *= 0.5;
        if delta < 1e-15 {
            return Err(Error::Infeasible(format!("no admissible pole for |w′| = {}", w_prime.abs())));
        }
    }
    let d = 1.0 + delta;
    let mu = (1.0 - lambda * d) / (1.0 - lambda);
    let g = RationalFn::new(Poly::from_roots(&[0.0, 1.0]).scale(w_prime * mu), Poly::linear(d))?;
    let sup_grid = circle_points(SUP_GRID)
        .into_iter()
        .map(|z| g.eval(z).norm())
        .fold(0.0, f64::max);
    let sup_bound = bound(d);
    if sup_grid >= 1.0 || sup_grid > sup_bound * (1.0 + 1e-12) {
        return Err(Error::Verification(format!(
            "interpolant sup {sup_grid} vs closed-form bound {sup_bound}"
        )));
    }
    Ok(Interpolant {
        g,
        w,
        w_prime,
        mu,
        d,
        sup_bound,
        sup_grid,
    })
}

/// Constructed stabilizer with its intermediate rational functions.
#[derive(Debug, Clone)]
pub struct ScalarController {
    /// Pole parameter actually used.
    pub c: f64,
    pub interpolant: Interpolant,
    /// `f = φ⁻¹ ∘ g`.
    pub f: RationalFn,
    pub q: RationalFn,
    /// `C = (X₀ + D₀Q)/(Y₀ − N₀Q)`, acting as `u = −C y`.
    pub controller: RationalFn,
    pub realization: DiscreteSystem,
    /// Relative remainder when removing the factor `(z − 1/λ)`.
    pub cancellation_residual: f64,
    /// Worst closed-loop spectral radius over the θ sweep.
    pub max_spectral_radius: f64,
}

/// Builds and verifies the interpolation-based LTI controller, retrying other
/// pole parameters if the cancellation at `z = 1/λ` is ill-conditioned.
pub fn scalar_controller(lambda: f64, theta_lo: f64, theta_hi: f64, c: f64) -> Result<ScalarController> {
    if !(c.abs() > 1.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("pole parameter |c| = {} must exceed 1", c.abs())));
    }
    let interpolant = construct_interpolant(lambda, theta_lo, theta_hi)?;
    let mut last = None;
    for cand in [c, 1.5 * c, 3.0 * c] {
        match build(lambda, theta_lo, theta_hi, cand, &interpolant) {
            Ok(ctrl) => return Ok(ctrl),
            Err(e @ Error::Verification(_)) => {
                log::warn!("pole parameter c = {cand}: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn build(lambda: f64, theta_lo: f64, theta_hi: f64, c: f64, ip: &Interpolant) -> Result<ScalarController> {
    let gn = ip.g.num.clone();
    let gd = ip.g.den.clone();
    let den_f = gn.add(&gd).pow(2).scale(theta_hi).sub(&gn.sub(&gd).pow(2).scale(theta_lo));
    let f = RationalFn::new(gn.mul(&gd).scale(4.0), den_f.clone())?;
    let x0 = (1.0 - c * lambda) / (lambda - 1.0);
    // f − T₁ = z(z − 1)·E / (den_f·(z − c)), and E vanishes at 1/λ
    let e = Poly::from_roots(&[ip.d, c])
        .scale(4.0 * ip.w_prime * ip.mu)
        .sub(&den_f.scale(lambda * x0));
    let (e_red, residual) = e.deflate(1.0 / lambda);
    if residual > CANCELLATION_TOL {
        return Err(Error::Verification(format!("cancellation residual {residual:e} at z = 1/λ")));
    }
    let l2 = lambda * lambda;
    let q = RationalFn::new(e_red.mul(&Poly::linear(c)).scale(-1.0 / l2), den_f.clone())?;
    let one_minus_lz = Poly::new(vec![1.0, -lambda]);
    let num = den_f.scale(x0 * l2).sub(&one_minus_lz.mul(&e_red));
    let den = den_f
        .scale(-c * l2)
        .add(&Poly::new(vec![0.0, lambda - 1.0]).mul(&e_red));
    let controller = RationalFn::new(num, den)?;
    let realization = controller.realize()?;
    let mut worst: f64 = 0.0;
    for k in 0..SWEEP_POINTS {
        let theta = theta_lo + (theta_hi - theta_lo) * k as f64 / (SWEEP_POINTS - 1) as f64;
        let rho = spectral_radius(&closed_loop_matrix(&scalar_system(lambda, theta), &realization)?)?;
        worst = worst.max(rho);
    }
    if worst >= 1.0 {
        return Err(Error::Verification(format!(
            "closed-loop spectral radius {worst} on the θ sweep (c = {c})"
        )));
    }
    Ok(ScalarController {
        c,
        interpolant: ip.clone(),
        f,
        q,
        controller,
        realization,
        cancellation_residual: residual,
        max_spectral_radius: worst,
    })
}

//! Restricted-controller and conservative bounds for the scalar loop.

use std::fmt;

use num_complex::Complex64;

use super::rational::{Poly, RationalFn};
use super::{check_lambda, scalar_system, symmetric_radius_to_offsets};
use crate::error::{Error, Result};
use crate::numerics::{circle_points, Mat};

/// Open θ interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ThetaInterval {
    pub fn symmetric(r: f64) -> Self {
        Self { lo: -r, hi: r }
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.lo < theta && theta < self.hi
    }

    pub fn radius(&self) -> f64 {
        self.hi.min(-self.lo)
    }

    /// Offset interval for a symmetric θ interval, clipped to `(−h, h)`.
    pub fn to_offsets(&self, a: f64, h: f64) -> (f64, f64) {
        symmetric_radius_to_offsets(a, h, self.radius())
    }
}

impl fmt::Display for ThetaInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Static output feedback `u = −Ky`: the set of tolerable θ is exactly
/// `(−1/λ, 1/λ)` (union over `K > 1`).
pub fn static_bound(lambda: f64) -> Result<ThetaInterval> {
    check_lambda(lambda)?;
    Ok(ThetaInterval::symmetric(1.0 / lambda))
}

/// Closed loop of the scalar system under `u = −Ky`.
pub fn static_closed_loop_matrix(lambda: f64, theta: f64, k: f64) -> Mat {
    let l1 = lambda * (1.0 + theta);
    Mat::from_row_slice(
        2,
        2,
        &[-lambda * theta, -lambda * theta * (1.0 - k), l1, l1 * (1.0 - k) + k],
    )
}

/// Jury inequalities for the static loop.
pub fn jury_static(lambda: f64, theta: f64, k: f64) -> bool {
    (lambda - 1.0) * (k - 1.0) > 0.0
        && lambda * theta * k + 1.0 > 0.0
        && 2.0 * lambda * theta * k + (lambda - 1.0) * k - lambda - 1.0 < 0.0
}

/// θ range stabilized by a fixed gain `K`, if any.
pub fn static_theta_range(lambda: f64, k: f64) -> Option<ThetaInterval> {
    if !(lambda > 1.0 && k > 1.0) {
        return None;
    }
    let lo = -1.0 / (lambda * k);
    let hi = (lambda + 1.0) / (2.0 * lambda * k) - (lambda - 1.0) / (2.0 * lambda);
    (lo < hi).then_some(ThetaInterval { lo, hi })
}

/// `κ = (√(λ²+1)·√(λ²−4√2+5) − 2(√2−1)λ)/(λ²−1)`.
pub fn kappa(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let s2 = 2f64.sqrt();
    let l2 = lambda * lambda;
    Ok(((l2 + 1.0).sqrt() * (l2 - 4.0 * s2 + 5.0).sqrt() - 2.0 * (s2 - 1.0) * lambda) / (l2 - 1.0))
}

/// Sufficient bound `(−1/(λκ), 1/(λκ))` for 2-periodic static gains.
pub fn two_periodic_bound(lambda: f64) -> Result<ThetaInterval> {
    Ok(ThetaInterval::symmetric(1.0 / (lambda * kappa(lambda)?)))
}

/// A member of the certified 2-periodic family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGains {
    /// `K₁K₂`.
    pub zeta: f64,
    /// `K₁ + K₂`.
    pub eta: f64,
    pub k1: f64,
    pub k2: f64,
    pub lambda: f64,
}

impl PeriodicGains {
    /// The θ interval this member is certified for, `|θ| < 1/(√ζ λ)`.
    pub fn certified(&self) -> ThetaInterval {
        ThetaInterval::symmetric(1.0 / (self.zeta.sqrt() * self.lambda))
    }
}

/// Gains for `ζ ∈ (κ², 1)` with `η = √ζ((λ−1)ζ − 2√ζ + λ + 1)/(√ζλ − 1)`.
pub fn two_periodic_gains(lambda: f64, zeta: f64) -> Result<PeriodicGains> {
    let k = kappa(lambda)?;
    if !(zeta > k * k && zeta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ζ = {zeta} outside the certified range ({}, 1)",
            k * k
        )));
    }
    let r = zeta.sqrt();
    let eta = r * ((lambda - 1.0) * zeta - 2.0 * r + lambda + 1.0) / (r * lambda - 1.0);
    let disc = eta * eta - 4.0 * zeta;
    if disc < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "ζ = {zeta}, η = {eta} have no real gain split"
        )));
    }
    let s = disc.sqrt();
    Ok(PeriodicGains {
        zeta,
        eta,
        k1: 0.5 * (eta + s),
        k2: 0.5 * (eta - s),
        lambda,
    })
}

/// Two-step map `F² − [FG G]·[[1, 0], [−K₂HG, 1]]·diag(K₁, K₂)·[H; HF]`.
pub fn lifted_matrix(lambda: f64, theta: f64, k1: f64, k2: f64) -> Mat {
    let sys = scalar_system(lambda, theta);
    let (f, g, h) = (&sys.f, &sys.g, &sys.h);
    let fg = f * g;
    let mut left = Mat::zeros(2, 2);
    left.set_column(0, &fg.column(0));
    left.set_column(1, &g.column(0));
    let hg = (h * g)[(0, 0)];
    let mid = Mat::from_row_slice(2, 2, &[1.0, 0.0, -k2 * hg, 1.0]) * Mat::from_row_slice(2, 2, &[k1, 0.0, 0.0, k2]);
    let mut right = Mat::zeros(2, 2);
    right.set_row(0, &h.row(0));
    right.set_row(1, &(h * f).row(0));
    f * f - left * mid * right
}

fn schur_2x2(m: &Mat) -> bool {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m.determinant();
    det.abs() < 1.0 && 1.0 - tr + det > 0.0 && 1.0 + tr + det > 0.0
}

/// Largest symmetric θ radius found by a grid search over `(K₁, K₂)`.
/// No exactness claim: a lower estimate of the 2-periodic optimum.
pub fn two_periodic_brute_force(lambda: f64, gains: usize, thetas: usize) -> Result<(f64, f64, f64)> {
    check_lambda(lambda)?;
    let (kmin, kmax) = (-1.0, 1.0 + 2.0 * lambda / (lambda - 1.0));
    let rmax = lambda - 1.0;
    let step = rmax / thetas as f64;
    let mut best = (0.0, 0.0, 0.0);
    for i in 0..gains {
        let k1 = kmin + (kmax - kmin) * i as f64 / (gains - 1) as f64;
        for j in 0..gains {
            let k2 = kmin + (kmax - kmin) * j as f64 / (gains - 1) as f64;
            if !schur_2x2(&lifted_matrix(lambda, 0.0, k1, k2)) {
                continue;
            }
            let mut r = 0.0;
            for t in 1..=thetas {
                let th = step * t as f64;
                if !(schur_2x2(&lifted_matrix(lambda, th, k1, k2)) && schur_2x2(&lifted_matrix(lambda, -th, k1, k2))) {
                    break;
                }
                r = th;
            }
            if r > best.0 {
                best = (r, k1, k2);
            }
        }
    }
    Ok(best)
}

/// Small-gain route: `|θ|·min_Q ‖T₁ + T₂Q‖∞ < 1` with infimum `λ`, which
/// gives the same interval as static gains.
pub fn small_gain_scalar_bound(lambda: f64) -> Result<ThetaInterval> {
    check_lambda(lambda)?;
    Ok(ThetaInterval::symmetric(1.0 / lambda))
}

/// `P_θ − P₀ = −r_θ·m` with allpass `m` and first-order `r_θ`.
#[derive(Debug, Clone)]
pub struct AdditiveDecomposition {
    pub lambda: f64,
    /// `m(z) = z(λ − z)/(1 − λz)`.
    pub m: RationalFn,
    /// `max |1 − |m(e^{jω})||` on the check grid.
    pub allpass_error: f64,
    /// Feasible iff `θ̄ < theta_max = 1/λ`.
    pub theta_max: f64,
}

impl AdditiveDecomposition {
    /// `r_θ(z) = θλ(z − 1)/(λ − z)`.
    pub fn r(&self, theta: f64) -> RationalFn {
        RationalFn::new(
            Poly::new(vec![-theta * self.lambda, theta * self.lambda]),
            Poly::new(vec![self.lambda, -1.0]),
        )
        .expect("λ > 1")
    }
}

pub fn additive_decomposition(lambda: f64) -> Result<AdditiveDecomposition> {
    check_lambda(lambda)?;
    let m = RationalFn::new(Poly::new(vec![0.0, lambda, -1.0]), Poly::new(vec![1.0, -lambda]))?;
    let allpass_error = circle_points(512)
        .into_iter()
        .map(|z: Complex64| (m.eval(z).norm() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(AdditiveDecomposition {
        lambda,
        m,
        allpass_error,
        theta_max: 1.0 / lambda,
    })
}

/// Additive-uncertainty design succeeds iff `θ̄ < 1/λ`.
pub fn additive_uncertainty_scalar_bound(lambda: f64) -> Result<f64> {
    Ok(additive_decomposition(lambda)?.theta_max)
}

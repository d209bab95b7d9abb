//! Sampling the plant, the time-stamp aware estimator and the ZOH at the
//! update instants `t_k = k·h`.
//!
//! With `ξ_k = [x(t_k) − x̂(t_k); x̂(t_k)]` the loop seen by the controller is
//! `ξ_{k+1} = F_Δ ξ_k + G_Δ u_k`, `x̂_k = H_Δ ξ_k` where, writing
//! `Λ = e^{Ah}`, `Θ = e^{−AΔ} − I` and `E = e^{A(h−Δ)} = Λ(I + Θ)`,
//!
//! ```text
//! F_Δ = [ −ΛΘ   −ΛΘ ]    G_Δ = [ R(Δ)                 ]    H_Δ = [0  I]
//!       [  E     E  ]          [ ∫₀^{h−Δ} e^{Aτ}B dτ  ]
//! ```
//!
//! and `R(Δ) = ∫₀^Δ e^{A(h−τ)}B dτ`. Only the offset `Δ` enters; where the
//! true sampling instant sits inside `[t_k, t_{k+1})` does not matter.

mod disturbance;

pub use disturbance::{DisturbanceBounds, DisturbanceModel, DisturbanceStep, Signal, QUADRATURE_NODES};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::linalg::{ensure_finite, ensure_square, full_row_rank, to_complex};
use crate::numerics::{eigenvalues, exp_integral, expm, spectral_radius, DiscreteSystem, Mat};

/// Continuous-time plant `ẋ = Ax + Bu` behind a ZOH with period `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPlant {
    pub a: Mat,
    pub b: Mat,
    pub h: f64,
}

impl ContinuousPlant {
    pub fn new(a: Mat, b: Mat, h: f64) -> Result<Self> {
        let n = ensure_square(&a)?;
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "A is {n}x{n} but B has {} rows",
                b.nrows()
            )));
        }
        if n == 0 || b.ncols() == 0 {
            return Err(Error::Dimension("plant needs at least one state and one input".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter(format!("update period h = {h} must be > 0")));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        Ok(Self { a, b, h })
    }

    /// Scalar plant `ẋ = a x + b u`.
    pub fn scalar(a: f64, b: f64, h: f64) -> Result<Self> {
        Self::new(Mat::from_element(1, 1, a), Mat::from_element(1, 1, b), h)
    }

    /// The unstable batch reactor benchmark.
    pub fn batch_reactor(h: f64) -> Result<Self> {
        let a = Mat::from_row_slice(
            4,
            4,
            &[
                1.38, -0.2077, 6.715, -5.676, //
                -0.5814, -4.29, 0.0, 0.675, //
                1.067, 4.273, -6.654, 5.893, //
                0.048, 4.273, 1.343, -2.104,
            ],
        );
        let b = Mat::from_row_slice(4, 2, &[0.0, 0.0, 5.679, 0.0, 1.136, -3.146, 1.136, 0.0]);
        Self::new(a, b, h)
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn check_offset(&self, delta: f64) -> Result<()> {
        if !(delta.is_finite() && delta.abs() < self.h) {
            return Err(Error::OffsetOutOfRange { delta, h: self.h });
        }
        Ok(())
    }

    /// `Λ = e^{Ah}`.
    pub fn lambda(&self) -> Result<Mat> {
        expm(&self.a, self.h)
    }

    /// `∫₀^h e^{Aτ}B dτ`, the ZOH input matrix.
    pub fn gamma_h(&self) -> Result<Mat> {
        exp_integral(&self.a, &self.b, self.h)
    }
}

/// Offset interval `[lo, hi]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetInterval {
    pub lo: f64,
    pub hi: f64,
}

impl OffsetInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!("offset interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// Also enforces `−h < lo ≤ hi < h`.
    pub fn within(lo: f64, hi: f64, h: f64) -> Result<Self> {
        let iv = Self::new(lo, hi)?;
        iv.check_period(h)?;
        Ok(iv)
    }

    pub fn check_period(&self, h: f64) -> Result<()> {
        for delta in [self.lo, self.hi] {
            if delta.abs() >= h {
                return Err(Error::OffsetOutOfRange { delta, h });
            }
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_zero(&self) -> bool {
        self.lo == 0.0 && self.hi == 0.0
    }

    pub fn contains(&self, delta: f64) -> bool {
        self.lo <= delta && delta <= self.hi
    }

    /// Image under `θ = e^{−aΔ} − 1` (decreasing in `Δ` for `a > 0`).
    pub fn theta_image(&self, a: f64) -> (f64, f64) {
        let t1 = (-a * self.hi).exp_m1();
        let t2 = (-a * self.lo).exp_m1();
        (t1.min(t2), t1.max(t2))
    }

    /// `n ≥ 2` uniformly spaced offsets including both endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        if n <= 1 || self.lo == self.hi {
            return vec![self.lo];
        }
        (0..n)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Outcome of the continuous-time standing-assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub stabilizable: bool,
    pub pathological_update: bool,
    /// Eigenvalue pairs that come within 1e-6 of a pathological relation.
    pub near_pathological: bool,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.stabilizable && !self.pathological_update
    }
}

const PATHOLOGY_TOL: f64 = 1e-9;
const PATHOLOGY_WARN: f64 = 1e-6;
const RANK_TOL: f64 = 1e-10;

/// PBH stabilizability of `(A, B)` and the non-pathological update-period test.
pub fn check_assumptions(plant: &ContinuousPlant) -> Result<AssumptionReport> {
    let n = plant.states();
    let eig = eigenvalues(&plant.a)?;
    let stabilizable = eig
        .iter()
        .filter(|s| s.re >= -1e-12)
        .all(|&s| pbh_full_rank(&to_complex(&plant.a), &to_complex(&plant.b), s, n));

    let two_pi = 2.0 * std::f64::consts::PI;
    let mut pathological = false;
    let mut near = false;
    for (p, lp) in eig.iter().enumerate() {
        for lq in eig.iter().skip(p + 1) {
            let d = (lp - lq) * plant.h;
            let ell = (d.im / two_pi).round();
            if ell == 0.0 {
                continue;
            }
            let miss = Complex64::new(d.re, d.im - two_pi * ell).norm();
            let scale = d.norm().max(1.0);
            if miss <= PATHOLOGY_TOL * scale {
                pathological = true;
            } else if miss <= PATHOLOGY_WARN * scale {
                near = true;
            }
        }
    }
    if near && !pathological {
        log::warn!("update period h = {} is close to pathological", plant.h);
    }
    Ok(AssumptionReport {
        stabilizable,
        pathological_update: pathological,
        near_pathological: near,
    })
}

fn pbh_full_rank(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, s: Complex64, n: usize) -> bool {
    let mut m = DMatrix::from_element(n, n + b.ncols(), Complex64::new(0.0, 0.0));
    let mut si = DMatrix::identity(n, n) * s;
    si -= a;
    m.view_mut((0, 0), (n, n)).copy_from(&si);
    m.view_mut((0, n), (n, b.ncols())).copy_from(b);
    full_row_rank(&m, RANK_TOL)
}

/// `R(Δ) = ∫₀^Δ e^{A(h−τ)}B dτ = e^{A(h−Δ)}·∫₀^Δ e^{Aσ}B dσ`.
pub fn offset_residual_matrix(plant: &ContinuousPlant, delta: f64) -> Result<Mat> {
    plant.check_offset(delta)?;
    Ok(expm(&plant.a, plant.h - delta)? * exp_integral(&plant.a, &plant.b, delta)?)
}

/// The offset-parameterized discrete system `Σ_d` (state dimension `2n`).
pub fn discretize(plant: &ContinuousPlant, delta: f64) -> Result<DiscreteSystem> {
    plant.check_offset(delta)?;
    let n = plant.states();
    let m = plant.inputs();
    let lambda = plant.lambda()?;
    let e = expm(&plant.a, plant.h - delta)?;
    let top = &lambda - &e; // −ΛΘ
    let mut f = Mat::zeros(2 * n, 2 * n);
    f.view_mut((0, 0), (n, n)).copy_from(&top);
    f.view_mut((0, n), (n, n)).copy_from(&top);
    f.view_mut((n, 0), (n, n)).copy_from(&e);
    f.view_mut((n, n), (n, n)).copy_from(&e);

    let mut g = Mat::zeros(2 * n, m);
    g.view_mut((0, 0), (n, m))
        .copy_from(&offset_residual_matrix(plant, delta)?);
    g.view_mut((n, 0), (n, m))
        .copy_from(&exp_integral(&plant.a, &plant.b, plant.h - delta)?);

    let mut h = Mat::zeros(n, 2 * n);
    h.view_mut((0, n), (n, n)).copy_from(&Mat::identity(n, n));
    DiscreteSystem::new(f, g, h, Mat::zeros(n, m))
}

/// `Θ = e^{−AΔ} − I`.
pub fn theta_matrix(plant: &ContinuousPlant, delta: f64) -> Result<Mat> {
    Ok(expm(&plant.a, -delta)? - Mat::identity(plant.states(), plant.states()))
}

/// Similarity transform `T = [[−Θ, −I], [I+Θ, I]]` taking `Σ_d` to the
/// realization `(diag(Λ, 0), Ḡ_Δ, [I+Θ, I])`.
pub fn transform_matrix(plant: &ContinuousPlant, delta: f64) -> Result<Mat> {
    let n = plant.states();
    let theta = theta_matrix(plant, delta)?;
    let eye = Mat::identity(n, n);
    let mut t = Mat::zeros(2 * n, 2 * n);
    t.view_mut((0, 0), (n, n)).copy_from(&(-&theta));
    t.view_mut((0, n), (n, n)).copy_from(&(-&eye));
    t.view_mut((n, 0), (n, n)).copy_from(&(&eye + &theta));
    t.view_mut((n, n), (n, n)).copy_from(&eye);
    Ok(t)
}

/// Block-diagonal realization `(F̄_Δ, Ḡ_Δ, H̄_Δ)` of `Σ_d`.
pub fn discretize_transformed(plant: &ContinuousPlant, delta: f64) -> Result<DiscreteSystem> {
    plant.check_offset(delta)?;
    let n = plant.states();
    let m = plant.inputs();
    let lambda = plant.lambda()?;
    let e_plus = expm(&plant.a, -delta)?; // I + Θ
    let theta = &e_plus - Mat::identity(n, n);
    let r = offset_residual_matrix(plant, delta)?;
    let gamma_h = plant.gamma_h()?;

    let mut f = Mat::zeros(2 * n, 2 * n);
    f.view_mut((0, 0), (n, n)).copy_from(&lambda);
    let mut g = Mat::zeros(2 * n, m);
    g.view_mut((0, 0), (n, m)).copy_from(&gamma_h);
    g.view_mut((n, 0), (n, m)).copy_from(&(-&r - &theta * &gamma_h));
    let mut h = Mat::zeros(n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&e_plus);
    h.view_mut((0, n), (n, n)).copy_from(&Mat::identity(n, n));
    DiscreteSystem::new(f, g, h, Mat::zeros(n, m))
}

/// Output-injection gain `L_Δ = [Λ(I+Θ)⁻¹; 0] = [e^{A(h+Δ)}; 0]` that makes
/// `F̄_Δ − L_Δ H̄_Δ` nilpotent.
pub fn detectability_gain(plant: &ContinuousPlant, delta: f64) -> Result<Mat> {
    plant.check_offset(delta)?;
    let n = plant.states();
    let mut l = Mat::zeros(2 * n, n);
    l.view_mut((0, 0), (n, n))
        .copy_from(&expm(&plant.a, plant.h + delta)?);
    Ok(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteReport {
    pub detectable: bool,
    /// Spectral radius of `F̄_Δ − L_Δ H̄_Δ` (zero in exact arithmetic).
    pub observer_radius: f64,
    pub stabilizable: bool,
}

/// Detectability certified constructively through `L_Δ`; stabilizability by
/// PBH on `[zI − e^{Ah}, ∫₀^h e^{Aτ}B dτ]` for `|z| ≥ 1`.
pub fn check_discrete_stab_detect(plant: &ContinuousPlant, delta: f64) -> Result<DiscreteReport> {
    let sys = discretize_transformed(plant, delta)?;
    let l = detectability_gain(plant, delta)?;
    let observer_radius = spectral_radius(&(&sys.f - &l * &sys.h))?;
    let n = plant.states();
    let lambda = plant.lambda()?;
    let gamma_h = plant.gamma_h()?;
    let (lc, gc) = (to_complex(&lambda), to_complex(&gamma_h));
    let stabilizable = eigenvalues(&lambda)?
        .iter()
        .filter(|z| z.norm() >= 1.0 - 1e-12)
        .all(|&z| pbh_full_rank(&lc, &gc, z, n));
    Ok(DiscreteReport {
        detectable: observer_radius < 1.0,
        observer_radius,
        stabilizable,
    })
}

//! Doubly coprime factors of the sampled plant at zero offset and the
//! additive description of the offset as a perturbation of the left
//! numerator: `Ñ_Δ = Ñ₀ + W·R(Δ)` with `W(z) = z(z − 1)` and
//! `D̃_Δ = D̃₀ = I − z·e^{Ah}` for every `Δ`.

use num_complex::Complex64;

use crate::discretization::{
    detectability_gain, discretize_transformed, ContinuousPlant, OffsetInterval,
};
use crate::error::{Error, Result};
use crate::numerics::linalg::sigma_max;
use crate::numerics::{circle_points, dare, norm2, CMat, DiscreteSystem, Mat};

pub use crate::discretization::offset_residual_matrix as offset_residual;

const RICCATI_TOL: f64 = 1e-13;
const RICCATI_ITER: usize = 200_000;

/// Choice of the state-feedback gain `K₀` used to build the right factors.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FeedbackGain {
    /// Identity-weight discrete LQR on `(e^{Ah}, ∫₀^h e^{Aτ}B dτ)`, padded with zeros.
    #[default]
    Lqr,
    /// Any `m × 2n` gain with `F̄₀ − Ḡ₀K₀` Schur stable.
    Custom(Mat),
}

/// The eight factors with `P₀ = N D⁻¹ = D̃⁻¹ Ñ` and
/// `[Y X; −Ñ D̃]·[D −X̃; N Ỹ] = I`.
#[derive(Debug, Clone)]
pub struct CoprimeBundle {
    pub n: DiscreteSystem,
    pub d: DiscreteSystem,
    pub n_left: DiscreteSystem,
    pub d_left: DiscreteSystem,
    pub x: DiscreteSystem,
    pub y: DiscreteSystem,
    pub x_tilde: DiscreteSystem,
    pub y_tilde: DiscreteSystem,
    /// Nominal plant realization `(F̄₀, Ḡ₀, H̄₀)`.
    pub plant: DiscreteSystem,
    pub k0: Mat,
    pub l0: Mat,
}

impl CoprimeBundle {
    pub fn inputs(&self) -> usize {
        self.plant.inputs()
    }

    pub fn outputs(&self) -> usize {
        self.plant.outputs()
    }
}

/// Factors with the default LQR gain.
pub fn doubly_coprime(plant: &ContinuousPlant) -> Result<CoprimeBundle> {
    doubly_coprime_with(plant, &FeedbackGain::Lqr)
}

pub fn doubly_coprime_with(plant: &ContinuousPlant, gain: &FeedbackGain) -> Result<CoprimeBundle> {
    let sys = discretize_transformed(plant, 0.0)?;
    let l0 = detectability_gain(plant, 0.0)?;
    let n = plant.states();
    let m = plant.inputs();
    let k0 = match gain {
        FeedbackGain::Lqr => {
            let lambda = sys.f.view((0, 0), (n, n)).into_owned();
            let gamma = sys.g.rows(0, n).into_owned();
            let (_, k) = dare(
                &lambda,
                &gamma,
                &Mat::identity(n, n),
                &Mat::identity(m, m),
                RICCATI_TOL,
                RICCATI_ITER,
            )
            .map_err(|e| Error::NotStabilizable(format!("LQR for K₀ failed: {e}")))?;
            let mut k0 = Mat::zeros(m, 2 * n);
            k0.columns_mut(0, n).copy_from(&k);
            k0
        }
        FeedbackGain::Custom(k) => {
            if k.shape() != (m, 2 * n) {
                return Err(Error::Dimension(format!(
                    "K₀ must be {m}x{}, got {}x{}",
                    2 * n,
                    k.nrows(),
                    k.ncols()
                )));
            }
            k.clone()
        }
    };
    let phi = &sys.f - &sys.g * &k0;
    let rho = crate::numerics::spectral_radius(&phi)?;
    if rho >= 1.0 {
        return Err(Error::NotStabilizable(format!(
            "F̄₀ − Ḡ₀K₀ has spectral radius {rho}"
        )));
    }
    let a_l = &sys.f - &l0 * &sys.h;
    let (g, h) = (&sys.g, &sys.h);
    let im = Mat::identity(m, m);
    let ip = Mat::identity(n, n);

    Ok(CoprimeBundle {
        d: DiscreteSystem::new(phi.clone(), g.clone(), -&k0, im.clone())?,
        n: DiscreteSystem::new(phi.clone(), g.clone(), h.clone(), Mat::zeros(n, m))?,
        x_tilde: DiscreteSystem::new(phi.clone(), l0.clone(), k0.clone(), Mat::zeros(m, n))?,
        y_tilde: DiscreteSystem::new(phi, l0.clone(), h.clone(), ip.clone())?,
        d_left: DiscreteSystem::new(a_l.clone(), l0.clone(), -h, ip)?,
        n_left: DiscreteSystem::new(a_l.clone(), g.clone(), h.clone(), Mat::zeros(n, m))?,
        y: DiscreteSystem::new(a_l.clone(), g.clone(), k0.clone(), im)?,
        x: DiscreteSystem::new(a_l, l0.clone(), k0.clone(), Mat::zeros(m, n))?,
        plant: sys,
        k0,
        l0,
    })
}

fn block2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut out = CMat::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

/// `‖[Y X; −Ñ D̃][D −X̃; N Ỹ] − I‖` at one point.
pub fn bezout_residual_at(b: &CoprimeBundle, z: Complex64) -> f64 {
    let left = block2(&b.y.eval(z), &b.x.eval(z), &(-b.n_left.eval(z)), &b.d_left.eval(z));
    let right = block2(&b.d.eval(z), &(-b.x_tilde.eval(z)), &b.n.eval(z), &b.y_tilde.eval(z));
    let prod = left * right;
    let eye = CMat::identity(prod.nrows(), prod.ncols());
    sigma_max(&(prod - eye))
}

/// Worst Bezout residual over `points` equally spaced circle points.
pub fn bezout_residual(b: &CoprimeBundle, points: usize) -> f64 {
    circle_points(points)
        .into_iter()
        .map(|z| bezout_residual_at(b, z))
        .fold(0.0, f64::max)
}

/// Worst mismatch of `N D⁻¹` and `D̃⁻¹ Ñ` against the realization.
pub fn factorization_residual(b: &CoprimeBundle, points: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for z in circle_points(points) {
        let p = b.plant.eval(z);
        if let Some(dinv) = b.d.eval(z).try_inverse() {
            worst = worst.max(sigma_max(&(b.n.eval(z) * dinv - &p)));
        } else {
            return f64::INFINITY;
        }
        if let Some(dl) = b.d_left.eval(z).try_inverse() {
            worst = worst.max(sigma_max(&(dl * b.n_left.eval(z) - &p)));
        } else {
            return f64::INFINITY;
        }
    }
    worst
}

/// Left factors `(D̃_Δ, Ñ_Δ)` from the offset-specific nilpotent observer gain.
pub fn left_factors(plant: &ContinuousPlant, delta: f64) -> Result<(DiscreteSystem, DiscreteSystem)> {
    let sys = discretize_transformed(plant, delta)?;
    let l = detectability_gain(plant, delta)?;
    let a_l = &sys.f - &l * &sys.h;
    let n = plant.states();
    let d_left = DiscreteSystem::new(a_l.clone(), l, -&sys.h, Mat::identity(n, n))?;
    let n_left = DiscreteSystem::new(a_l, sys.g.clone(), sys.h.clone(), Mat::zeros(n, plant.inputs()))?;
    Ok((d_left, n_left))
}

/// `W(z) = z(z − 1)`, which vanishes at DC and peaks at 2 on `z = −1`.
pub fn offset_weight() -> DiscreteSystem {
    DiscreteSystem::new(
        Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        Mat::from_row_slice(2, 1, &[1.0, 0.0]),
        Mat::from_row_slice(1, 2, &[-1.0, 1.0]),
        Mat::zeros(1, 1),
    )
    .expect("static realization of z(z-1)")
}

pub fn offset_weight_at(z: Complex64) -> Complex64 {
    z * (z - 1.0)
}

/// Robustness level for an offset interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaLevel {
    /// `1 / max ‖R(Δ)‖`, infinite when the interval is `{0}`.
    pub gamma: f64,
    pub max_norm: f64,
    pub argmax: f64,
}

impl GammaLevel {
    /// No robustness constraint (zero-width interval at zero).
    pub fn is_unbounded(&self) -> bool {
        self.gamma.is_infinite()
    }
}

/// Offset uncertainty of a plant over an interval.
#[derive(Debug, Clone)]
pub struct UncertaintyModel {
    pub plant: ContinuousPlant,
    pub interval: OffsetInterval,
    pub level: GammaLevel,
}

impl UncertaintyModel {
    pub fn new(plant: &ContinuousPlant, interval: OffsetInterval) -> Result<Self> {
        let level = gamma_level(plant, interval)?;
        Ok(Self {
            plant: plant.clone(),
            interval,
            level,
        })
    }

    pub fn residual(&self, delta: f64) -> Result<Mat> {
        offset_residual(&self.plant, delta)
    }

    pub fn weight(&self) -> DiscreteSystem {
        offset_weight()
    }

    pub fn gamma(&self) -> f64 {
        self.level.gamma
    }
}

pub const GAMMA_GRID: usize = 1000;

/// `γ = 1 / max_{Δ ∈ interval} ‖R(Δ)‖₂`.
pub fn gamma_level(plant: &ContinuousPlant, interval: OffsetInterval) -> Result<GammaLevel> {
    gamma_level_grid(plant, interval, GAMMA_GRID)
}

pub fn gamma_level_grid(plant: &ContinuousPlant, interval: OffsetInterval, grid: usize) -> Result<GammaLevel> {
    interval.check_period(plant.h)?;
    if interval.is_zero() {
        return Ok(GammaLevel {
            gamma: f64::INFINITY,
            max_norm: 0.0,
            argmax: 0.0,
        });
    }
    let value = |d: f64| offset_residual(plant, d).map(|r| norm2(&r));
    let pts = interval.grid(grid.max(2));
    let mut best = (pts[0], value(pts[0])?);
    let mut best_idx = 0;
    for (i, &d) in pts.iter().enumerate().skip(1) {
        let v = value(d)?;
        if v > best.1 {
            best = (d, v);
            best_idx = i;
        }
    }
    if pts.len() > 2 {
        let lo = pts[best_idx.saturating_sub(1)];
        let hi = pts[(best_idx + 1).min(pts.len() - 1)];
        let (d, v) = golden_section_max(&value, lo, hi)?;
        if v > best.1 {
            best = (d, v);
        }
    }
    if best.1 == 0.0 {
        return Ok(GammaLevel {
            gamma: f64::INFINITY,
            max_norm: 0.0,
            argmax: best.0,
        });
    }
    Ok(GammaLevel {
        gamma: 1.0 / best.1,
        max_norm: best.1,
        argmax: best.0,
    })
}

fn golden_section_max<F>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..100 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}

/// `‖P_Δ − P₀ − W·D̃₀⁻¹·R(Δ)‖` over `points` circle points.
pub fn decomposition_residual(plant: &ContinuousPlant, delta: f64, points: usize) -> Result<f64> {
    let p_delta = discretize_transformed(plant, delta)?;
    let p_zero = discretize_transformed(plant, 0.0)?;
    let r = crate::numerics::linalg::to_complex(&offset_residual(plant, delta)?);
    let lambda = plant.lambda()?;
    let n = plant.states();
    let mut worst: f64 = 0.0;
    for z in circle_points(points) {
        let dl = CMat::identity(n, n) - crate::numerics::linalg::to_complex(&lambda) * z;
        let Some(dl_inv) = dl.try_inverse() else {
            return Err(Error::Verification(format!("I − zΛ singular at {z}")));
        };
        let diff = p_delta.eval(z) - p_zero.eval(z) - dl_inv * &r * offset_weight_at(z);
        worst = worst.max(sigma_max(&diff));
    }
    Ok(worst)
}

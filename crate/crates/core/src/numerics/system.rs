//! State-space systems in the delay-variable convention.
//!
//! A [`DiscreteSystem`] `(F, G, H, D)` has the transfer value
//!
//! ```text
//! T(z) = D + H (1/z · I − F)⁻¹ G = D + z·H (I − z·F)⁻¹ G
//! ```
//!
//! so `z` plays the role of the unit delay and the system is causal and
//! stable exactly when `T` is bounded and holomorphic in the open unit disc.
//! This is the usual Hardy-space convention for `RH∞`; it is **not** the
//! impulse-response `H (zI − F)⁻¹ G` convention. The unit circle is mapped
//! onto itself by `z ↦ 1/z`, so H∞ norms agree with the usual definition,
//! but pointwise values inside the disc do not.
//!
//! All state-space interconnection formulas are the textbook ones written in
//! the variable `s = 1/z`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::linalg::{ensure_finite, ensure_square, spectral_radius, to_complex, CMat, Mat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub f: Mat,
    pub g: Mat,
    pub h: Mat,
    pub d: Mat,
}

impl DiscreteSystem {
    pub fn new(f: Mat, g: Mat, h: Mat, d: Mat) -> Result<Self> {
        let n = ensure_square(&f)?;
        if g.nrows() != n || h.ncols() != n || d.nrows() != h.nrows() || d.ncols() != g.ncols() {
            return Err(Error::Dimension(format!(
                "realization F {:?}, G {:?}, H {:?}, D {:?}",
                f.shape(),
                g.shape(),
                h.shape(),
                d.shape()
            )));
        }
        for (m, what) in [(&f, "F"), (&g, "G"), (&h, "H"), (&d, "D")] {
            ensure_finite(m, what)?;
        }
        Ok(Self { f, g, h, d })
    }

    /// Memoryless system `T(z) ≡ D`.
    pub fn static_gain(d: Mat) -> Self {
        let (p, m) = d.shape();
        Self {
            f: Mat::zeros(0, 0),
            g: Mat::zeros(0, m),
            h: Mat::zeros(p, 0),
            d,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::static_gain(Mat::identity(n, n))
    }

    /// Scalar unit delay `T(z) = z`.
    pub fn delay() -> Self {
        Self {
            f: Mat::zeros(1, 1),
            g: Mat::from_element(1, 1, 1.0),
            h: Mat::from_element(1, 1, 1.0),
            d: Mat::zeros(1, 1),
        }
    }

    pub fn states(&self) -> usize {
        self.f.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.g.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.h.nrows()
    }

    /// Transfer value `D + z·H(I − zF)⁻¹G`.
    pub fn eval(&self, z: Complex64) -> CMat {
        let mut out = to_complex(&self.d);
        let n = self.states();
        if n == 0 || z == Complex64::new(0.0, 0.0) {
            return out;
        }
        let mut lhs = CMat::identity(n, n);
        lhs -= to_complex(&self.f) * z;
        let rhs = to_complex(&self.g);
        match lhs.lu().solve(&rhs) {
            Some(x) => out += to_complex(&self.h) * x * z,
            None => out.fill(Complex64::new(f64::INFINITY, 0.0)),
        }
        out
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.f)
    }

    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.spectral_radius()? < 1.0)
    }

    /// `self` followed by `next`, i.e. the transfer product `next · self`.
    pub fn series(&self, next: &Self) -> Result<Self> {
        if next.inputs() != self.outputs() {
            return Err(Error::Dimension(format!(
                "series: {} outputs feed {} inputs",
                self.outputs(),
                next.inputs()
            )));
        }
        let (n1, n2) = (self.states(), next.states());
        let mut f = Mat::zeros(n1 + n2, n1 + n2);
        f.view_mut((0, 0), (n1, n1)).copy_from(&self.f);
        f.view_mut((n1, n1), (n2, n2)).copy_from(&next.f);
        f.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.g * &self.h));
        let g = stack_rows(&self.g, &(&next.g * &self.d));
        let h = stack_cols(&(&next.d * &self.h), &next.h);
        let d = &next.d * &self.d;
        Self::new(f, g, h, d)
    }

    /// Transfer product `self · rhs`.
    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        rhs.series(self)
    }

    /// Transfer sum `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.inputs() != other.inputs() || self.outputs() != other.outputs() {
            return Err(Error::Dimension("parallel: shapes differ".into()));
        }
        let f = block_diag(&self.f, &other.f);
        let g = stack_rows(&self.g, &other.g);
        let h = stack_cols(&self.h, &other.h);
        Self::new(f, g, h, &self.d + &other.d)
    }

    pub fn neg(&self) -> Self {
        Self {
            f: self.f.clone(),
            g: self.g.clone(),
            h: -&self.h,
            d: -&self.d,
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            f: self.f.clone(),
            g: self.g.clone(),
            h: &self.h * k,
            d: &self.d * k,
        }
    }

    /// Pre-multiply the output by a constant matrix.
    pub fn left_gain(&self, k: &Mat) -> Result<Self> {
        Self::new(self.f.clone(), self.g.clone(), k * &self.h, k * &self.d)
    }

    /// Post-multiply the input by a constant matrix.
    pub fn right_gain(&self, k: &Mat) -> Result<Self> {
        Self::new(self.f.clone(), &self.g * k, self.h.clone(), &self.d * k)
    }

    /// Transfer inverse; requires an invertible feedthrough.
    pub fn inverse(&self) -> Result<Self> {
        if self.inputs() != self.outputs() {
            return Err(Error::Dimension("inverse of a non-square system".into()));
        }
        let dinv = self
            .d
            .clone()
            .try_inverse()
            .ok_or(Error::SingularFeedthrough)?;
        let cond = self.d.norm() * dinv.norm();
        if !cond.is_finite() || cond > 1e14 {
            return Err(Error::SingularFeedthrough);
        }
        let f = &self.f - &self.g * &dinv * &self.h;
        let g = &self.g * &dinv;
        let h = -&dinv * &self.h;
        Self::new(f, g, h, dinv)
    }

    /// Negative-feedback loop `(I + self·k)⁻¹ self` with `k` in the return path.
    pub fn feedback(&self, k: &Self) -> Result<Self> {
        let p = self.outputs();
        let loop_gain = self.mul(k)?;
        let sens = DiscreteSystem::identity(p).add(&loop_gain)?.inverse()?;
        sens.mul(self)
    }

    /// Block row `[self, other]` (shared output, concatenated inputs).
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.outputs() != other.outputs() {
            return Err(Error::Dimension("hstack: output counts differ".into()));
        }
        let f = block_diag(&self.f, &other.f);
        let g = block_diag(&self.g, &other.g);
        let h = stack_cols(&self.h, &other.h);
        let d = stack_cols(&self.d, &other.d);
        Self::new(f, g, h, d)
    }

    /// Block column `[self; other]` (shared input, stacked outputs).
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.inputs() != other.inputs() {
            return Err(Error::Dimension("vstack: input counts differ".into()));
        }
        let f = block_diag(&self.f, &other.f);
        let g = stack_rows(&self.g, &other.g);
        let h = block_diag(&self.h, &other.h);
        let d = stack_rows(&self.d, &other.d);
        Self::new(f, g, h, d)
    }

    /// Lower linear fractional transformation `G11 + G12 Q (I − G22 Q)⁻¹ G21`
    /// where `self` is partitioned with `q_out` trailing outputs (measurements
    /// fed to `q`) and `q_in` trailing inputs (driven by `q`).
    pub fn lft_lower(&self, q: &Self, q_out: usize, q_in: usize) -> Result<Self> {
        if q.inputs() != q_out || q.outputs() != q_in || q_out > self.outputs() || q_in > self.inputs() {
            return Err(Error::Dimension("lft_lower: partition does not match Q".into()));
        }
        let p1 = self.outputs() - q_out;
        let m1 = self.inputs() - q_in;
        let n = self.states();
        let nq = q.states();
        let g1 = self.g.columns(0, m1).into_owned();
        let g2 = self.g.columns(m1, q_in).into_owned();
        let h1 = self.h.rows(0, p1).into_owned();
        let h2 = self.h.rows(p1, q_out).into_owned();
        let d11 = self.d.view((0, 0), (p1, m1)).into_owned();
        let d12 = self.d.view((0, m1), (p1, q_in)).into_owned();
        let d21 = self.d.view((p1, 0), (q_out, m1)).into_owned();
        let d22 = self.d.view((p1, m1), (q_out, q_in)).into_owned();
        // v = Q y2, y2 = H2 x + D21 w + D22 v  ⇒  (I − Dq D22) v = Cq xq + Dq(H2 x + D21 w)
        let m = Mat::identity(q_in, q_in) - &q.d * &d22;
        let minv = m.try_inverse().ok_or(Error::SingularFeedthrough)?;
        // v = minv (Cq xq + Dq H2 x + Dq D21 w)
        let v_x = &minv * &q.d * &h2;
        let v_xq = &minv * &q.h;
        let v_w = &minv * &q.d * &d21;
        // y2 = H2 x + D21 w + D22 v
        let y2_x = &h2 + &d22 * &v_x;
        let y2_xq = &d22 * &v_xq;
        let y2_w = &d21 + &d22 * &v_w;
        let mut f = Mat::zeros(n + nq, n + nq);
        f.view_mut((0, 0), (n, n)).copy_from(&(&self.f + &g2 * &v_x));
        f.view_mut((0, n), (n, nq)).copy_from(&(&g2 * &v_xq));
        f.view_mut((n, 0), (nq, n)).copy_from(&(&q.g * &y2_x));
        f.view_mut((n, n), (nq, nq)).copy_from(&(&q.f + &q.g * &y2_xq));
        let g = stack_rows(&(&g1 + &g2 * &v_w), &(&q.g * &y2_w));
        let h = stack_cols(&(&h1 + &d12 * &v_x), &(&d12 * &v_xq));
        let d = &d11 + &d12 * &v_w;
        Self::new(f, g, h, d)
    }

    /// `k` decoupled copies, i.e. `T ⊗ I_k` for a scalar `T`.
    pub fn repeat_diag(&self, k: usize) -> Self {
        let mut out = Self::static_gain(Mat::zeros(0, 0));
        for _ in 0..k {
            out = Self {
                f: block_diag(&out.f, &self.f),
                g: block_diag(&out.g, &self.g),
                h: block_diag(&out.h, &self.h),
                d: block_diag(&out.d, &self.d),
            };
        }
        out
    }

    /// Similarity transform `(T⁻¹FT, T⁻¹G, HT, D)`.
    pub fn similarity(&self, t: &Mat) -> Result<Self> {
        let tinv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular similarity transform".into()))?;
        Self::new(&tinv * &self.f * t, &tinv * &self.g, &self.h * t, self.d.clone())
    }
}

pub(crate) fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

pub(crate) fn stack_rows(a: &Mat, b: &Mat) -> Mat {
    debug_assert_eq!(a.ncols(), b.ncols());
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

pub(crate) fn stack_cols(a: &Mat, b: &Mat) -> Mat {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

/// `n` points `e^{jω}` with `ω` uniform on `[0, 2π)`.
pub fn circle_points(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

/// Max-abs entry of a complex matrix difference.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

#[allow(dead_code)]
pub(crate) fn zeros_c(r: usize, c: usize) -> CMat {
    DMatrix::from_element(r, c, Complex64::new(0.0, 0.0))
}

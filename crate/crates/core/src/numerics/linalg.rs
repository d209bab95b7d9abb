//! Dense real/complex matrix helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub(crate) fn ensure_square(a: &Mat) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

pub(crate) fn ensure_finite(a: &Mat, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn to_complex(a: &Mat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

/// `e^{A t}` by scaling-and-squaring with a Padé approximant.
pub fn expm(a: &Mat, t: f64) -> Result<Mat> {
    ensure_square(a)?;
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite time {t}")));
    }
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    Ok((a * t).exp())
}

/// `∫₀ᵗ e^{Aτ} B dτ`, read off the upper-right block of the exponential of
/// `[[A, B], [0, 0]]·t`. Negative `t` keeps the orientation of the integral.
pub fn exp_integral(a: &Mat, b: &Mat, t: f64) -> Result<Mat> {
    let n = ensure_square(a)?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "exp_integral: A is {n}x{n} but B has {} rows",
            b.nrows()
        )));
    }
    let m = b.ncols();
    let mut block = Mat::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, m)).copy_from(b);
    let e = expm(&block, t)?;
    Ok(e.view((0, n), (n, m)).into_owned())
}

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    let n = ensure_square(a)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    ensure_finite(a, "eigenvalue input")?;
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Largest singular value of a complex matrix.
pub fn sigma_max(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc, &s| acc.max(s))
}

pub fn sigma_min(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s))
}

/// Induced 2-norm of a real matrix.
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc, &s| acc.max(s))
}

/// Numerical rank test: is the complex matrix of full row rank?
pub fn full_row_rank(m: &CMat, rel_tol: f64) -> bool {
    if m.nrows() > m.ncols() {
        return false;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    let smin = sv.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    smin > rel_tol * smax.max(1.0)
}

/// Stabilizing solution of the discrete algebraic Riccati equation
/// `P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q` by fixed-point iteration from
/// `P = Q`, finished with Newton (Hewer) steps once the iterate is close.
/// Returns `(P, K)` with `K = (R + BᵀPB)⁻¹BᵀPA`.
pub fn dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat, tol: f64, max_iter: usize) -> Result<(Mat, Mat)> {
    let n = ensure_square(a)?;
    if b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Dimension("dare: inconsistent A, B, Q, R".into()));
    }
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = riccati_map(a, b, q, r, &p)?;
        residual = (&next - &p).abs().max() / next.abs().max().max(1.0);
        p = next;
        if !residual.is_finite() || residual < NEWTON_SWITCH {
            break;
        }
    }
    if residual.is_finite() && residual < tol {
        let k = riccati_gain(a, b, r, &p)?;
        return Ok((p, k));
    }
    if residual < NEWTON_SWITCH {
        for _ in 0..NEWTON_STEPS {
            let k = riccati_gain(a, b, r, &p)?;
            let f = a - b * &k;
            if spectral_radius(&f)? >= 1.0 {
                break;
            }
            let next = stein(&f.transpose(), &(q + k.transpose() * r * &k))?;
            let next = (&next + next.transpose()) * 0.5;
            // relative to the largest term of the map, where rounding sits
            let scale = (a.transpose() * &next * a).abs().max().max(next.abs().max()).max(1.0);
            let res = (riccati_map(a, b, q, r, &next)? - &next).abs().max() / scale;
            p = next;
            if res < tol {
                let k = riccati_gain(a, b, r, &p)?;
                return Ok((p, k));
            }
            if res >= residual {
                residual = res;
                break;
            }
            residual = res;
        }
    }
    Err(Error::RiccatiDivergence {
        iterations: max_iter,
        residual,
    })
}

const NEWTON_SWITCH: f64 = 1e-6;
const NEWTON_STEPS: usize = 50;

/// One application of the Riccati map `f(P)`.
pub fn riccati_map(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let k = riccati_gain(a, b, r, p)?;
    let apa = a.transpose() * p * a;
    let cross = a.transpose() * p * b;
    let next = apa - cross * k + q;
    Ok((&next + next.transpose()) * 0.5)
}

fn riccati_gain(a: &Mat, b: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let s = r + b.transpose() * p * b;
    let rhs = b.transpose() * p * a;
    s.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotStabilizable("R + BᵀPB singular".into()))
}

/// Solution of the Stein equation `X = F X Fᵀ + W` for Schur-stable `F`
/// (Smith doubling iteration).
pub fn stein(f: &Mat, w: &Mat) -> Result<Mat> {
    let n = ensure_square(f)?;
    if w.shape() != (n, n) {
        return Err(Error::Dimension("stein: W must match F".into()));
    }
    let rho = spectral_radius(f)?;
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let mut x = w.clone();
    let mut ak = f.clone();
    for _ in 0..64 {
        let inc = &ak * &x * ak.transpose();
        let done = inc.abs().max() <= 1e-16 * x.abs().max().max(1e-300);
        x += inc;
        ak = &ak * &ak;
        if done {
            break;
        }
    }
    Ok((&x + x.transpose()) * 0.5)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule over `[lo, hi]` applied to a vector-valued
/// integrand. Zero-length intervals integrate to zero.
pub fn integrate_vec<F>(lo: f64, hi: f64, dim: usize, nodes: usize, mut integrand: F) -> DVector<f64>
where
    F: FnMut(f64) -> DVector<f64>,
{
    let mut acc = DVector::zeros(dim);
    if hi == lo {
        return acc;
    }
    let (x, w) = gauss_legendre(nodes);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    for (xi, wi) in x.iter().zip(&w) {
        acc += integrand(mid + half * xi) * (wi * half);
    }
    acc
}

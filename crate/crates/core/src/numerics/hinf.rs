//! H∞ norm on the unit circle by adaptive frequency gridding.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::linalg::{sigma_max, CMat};
use super::system::DiscreteSystem;
use crate::error::{Error, Result};

pub const DEFAULT_HINF_TOL: f64 = 1e-6;
const INITIAL_GRID: usize = 512;
const MAX_GRID: usize = 1 << 16;
const PEAKS_REFINED: usize = 24;

/// Where the supremum was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfEstimate {
    pub norm: f64,
    pub omega: f64,
}

/// `‖T‖∞` for a Schur-stable realization.
pub fn hinf_norm(sys: &DiscreteSystem, tol: f64) -> Result<f64> {
    Ok(hinf_norm_detail(sys, tol)?.norm)
}

pub fn hinf_norm_detail(sys: &DiscreteSystem, tol: f64) -> Result<HinfEstimate> {
    let rho = sys.spectral_radius()?;
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    // Real realizations are conjugate-symmetric, so [0, π] suffices.
    Ok(sup_on_circle(|z| sys.eval(z), tol, true))
}

/// Supremum over the unit circle of `σ_max(eval(e^{jω}))` for an arbitrary
/// evaluator. The caller is responsible for the evaluator being bounded and
/// holomorphic in the disc (so that the circle carries the supremum).
pub fn sup_on_circle<F>(eval: F, tol: f64, real_symmetric: bool) -> HinfEstimate
where
    F: Fn(Complex64) -> CMat,
{
    let span = if real_symmetric { PI } else { 2.0 * PI };
    let value = |w: f64| sigma_max(&eval(Complex64::from_polar(1.0, w)));
    let tol = tol.max(1e-14);

    let mut n = INITIAL_GRID;
    let mut previous: Option<HinfEstimate> = None;
    loop {
        let step = span / n as f64;
        let samples: Vec<f64> = (0..=n).map(|k| value(k as f64 * step)).collect();
        let mut peaks: Vec<usize> = (0..=n)
            .filter(|&k| {
                let left = if k == 0 { f64::NEG_INFINITY } else { samples[k - 1] };
                let right = if k == n { f64::NEG_INFINITY } else { samples[k + 1] };
                samples[k] >= left && samples[k] >= right
            })
            .collect();
        peaks.sort_by(|&a, &b| samples[b].total_cmp(&samples[a]));
        peaks.truncate(PEAKS_REFINED);

        let mut best = HinfEstimate {
            norm: 0.0,
            omega: 0.0,
        };
        for &k in &peaks {
            let lo = (k as f64 - 1.0).max(0.0) * step;
            let hi = ((k + 1).min(n)) as f64 * step;
            let (w, v) = golden_max(&value, lo, hi, samples[k], k as f64 * step, tol);
            if v > best.norm {
                best = HinfEstimate { norm: v, omega: w };
            }
        }
        if let Some(prev) = previous {
            if (best.norm - prev.norm).abs() <= tol * best.norm.max(f64::MIN_POSITIVE) || n >= MAX_GRID {
                return if best.norm >= prev.norm { best } else { prev };
            }
        }
        previous = Some(best);
        n *= 2;
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, f0: f64, w0: f64, tol: f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = (w0, f0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if fc > best.1 {
            best = (c, fc);
        }
        if fd > best.1 {
            best = (d, fd);
        }
        if (b - a) < 1e-12 || (fc - fd).abs() <= 0.01 * tol * best.1.abs() && (b - a) < 1e-7 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    best
}

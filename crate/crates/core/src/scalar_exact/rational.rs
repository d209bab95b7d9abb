//! Real polynomials and rational functions in the delay variable `z`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, DiscreteSystem, Mat};

/// Real polynomial, coefficients in ascending powers of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `z − r`.
    pub fn linear(r: f64) -> Self {
        Self::new(vec![-r, 1.0])
    }

    /// `Π (z − rᵢ)`.
    pub fn from_roots(roots: &[f64]) -> Self {
        roots.iter().fold(Self::constant(1.0), |p, &r| p.mul(&Self::linear(r)))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    pub fn eval_c(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + other.coeffs.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::constant(1.0), |p, _| p.mul(self))
    }

    /// Removes the factor `(z − r)` for a root known by construction, with
    /// the remainder relative to the coefficient scale.
    pub fn deflate(&self, r: f64) -> (Self, f64) {
        let n = self.degree();
        if n == 0 {
            return (self.clone(), self.coeffs[0].abs());
        }
        let mut q = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..=n).rev() {
            acc = acc * r + self.coeffs[i];
            if i > 0 {
                q[i - 1] = acc;
            }
        }
        let scale = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.abs() * r.abs().powi(i as i32))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        (Self::new(q), acc.abs() / scale)
    }

    /// Roots from the companion matrix eigenvalues.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let n = self.degree();
        if n == 0 {
            return Ok(Vec::new());
        }
        let lead = self.coeffs[n];
        let mut comp = Mat::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            comp[(i, n - 1)] = -self.coeffs[i] / lead;
        }
        eigenvalues(&comp)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| match i {
                0 => format!("{c}"),
                1 => format!("{c}·z"),
                _ => format!("{c}·z^{i}"),
            })
            .collect();
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

/// `num(z) / den(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFn {
    pub num: Poly,
    pub den: Poly,
}

impl RationalFn {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        Ok(Self { num, den })
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.num.eval_c(z) / self.den.eval_c(z)
    }

    pub fn eval_real(&self, z: f64) -> f64 {
        self.num.eval(z) / self.den.eval(z)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        self.num.roots()
    }

    /// In RH∞: every pole strictly outside the closed unit disc.
    pub fn is_stable(&self, margin: f64) -> Result<bool> {
        Ok(self.poles()?.iter().all(|p| p.norm() > 1.0 + margin))
    }

    /// Observable canonical realization with `T(z) = D + zH(I − zF)⁻¹G`.
    pub fn realize(&self) -> Result<DiscreteSystem> {
        let m0 = self.den.coeffs()[0];
        if m0 == 0.0 {
            return Err(Error::InvalidParameter(
                "denominator vanishes at z = 0; not realizable".into(),
            ));
        }
        let k = self.num.degree().max(self.den.degree());
        let n = |i: usize| self.num.coeffs().get(i).copied().unwrap_or(0.0) / m0;
        let m = |i: usize| self.den.coeffs().get(i).copied().unwrap_or(0.0) / m0;
        let d = n(0);
        let mut f = Mat::zeros(k, k);
        let mut g = Mat::zeros(k, 1);
        let mut h = Mat::zeros(1, k);
        if k > 0 {
            h[(0, 0)] = 1.0;
        }
        for i in 0..k {
            f[(i, 0)] = -m(i + 1);
            if i + 1 < k {
                f[(i, i + 1)] = 1.0;
            }
            g[(i, 0)] = n(i + 1) - d * m(i + 1);
        }
        DiscreteSystem::new(f, g, h, Mat::from_element(1, 1, d))
    }
}

impl fmt::Display for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

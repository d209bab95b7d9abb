//! Output feedback through a co-located observer, with process disturbance
//! `d(t)`, measurement noise `n(t)` and quantization noise `w_k` on the
//! transmitted estimate. The sampled loop keeps `(F_Δ, G_Δ, H_Δ)` and picks
//! up an additive state disturbance `d_k = [d₁; d₂]`.

use nalgebra::{DVector, SymmetricEigen};

use super::ContinuousPlant;
use crate::error::{Error, Result};
use crate::numerics::linalg::{ensure_finite, gauss_legendre};
use crate::numerics::{eigenvalues, expm, norm2, Mat};

/// Quadrature nodes per smooth sub-interval.
pub const QUADRATURE_NODES: usize = 32;

/// Continuous signal callback, `t ↦ value`.
pub type Signal<'a> = &'a dyn Fn(f64) -> DVector<f64>;

#[derive(Debug, Clone)]
pub struct DisturbanceModel {
    pub a: Mat,
    pub c: Mat,
    pub l: Mat,
    pub h: f64,
    pub delta: f64,
    a_obs: Mat,
}

/// Result of one update interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceStep {
    /// Additive disturbance entering `ξ_{k+1}`.
    pub d_k: DVector<f64>,
    /// Observer error `x − x̄` at `t_{k+1}`.
    pub e_next: DVector<f64>,
}

/// Magnitude bounds on the exogenous signals (Euclidean norms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceBounds {
    pub d: f64,
    pub n: f64,
    pub w: f64,
    pub e: f64,
}

impl DisturbanceModel {
    /// Builds `Σ_d′` for the plant at offset `Δ` with output matrix `C` and
    /// observer gain `L`; `A − LC` must be Hurwitz.
    pub fn new(plant: &ContinuousPlant, delta: f64, c: Mat, l: Mat) -> Result<Self> {
        plant.check_offset(delta)?;
        let n = plant.states();
        if c.ncols() != n || l.nrows() != n || l.ncols() != c.nrows() {
            return Err(Error::Dimension(format!(
                "C is {}x{}, L is {}x{} for {n} states",
                c.nrows(),
                c.ncols(),
                l.nrows(),
                l.ncols()
            )));
        }
        ensure_finite(&c, "C")?;
        ensure_finite(&l, "L")?;
        let a_obs = &plant.a - &l * &c;
        let abscissa = eigenvalues(&a_obs)?
            .iter()
            .map(|s| s.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if abscissa >= 0.0 {
            return Err(Error::NotHurwitz(abscissa));
        }
        Ok(Self {
            a: plant.a.clone(),
            c,
            l,
            h: plant.h,
            delta,
            a_obs,
        })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// `A − LC`.
    pub fn observer_matrix(&self) -> &Mat {
        &self.a_obs
    }

    /// Valid positions `σ = s_k − t_k` keep both `s_k` and `ŝ_k = s_k + Δ`
    /// inside `[t_k, t_{k+1})`.
    pub fn sampling_window(&self) -> (f64, f64) {
        ((-self.delta).max(0.0), (self.h - self.delta).min(self.h))
    }

    /// `d_k` and `e_{k+1}` over `[t_k, t_k + h)` with the sensor sampling at
    /// `t_k + sigma`.
    pub fn step(
        &self,
        t_k: f64,
        sigma: f64,
        e_k: &DVector<f64>,
        w_k: &DVector<f64>,
        d: Signal<'_>,
        noise: Signal<'_>,
    ) -> Result<DisturbanceStep> {
        let n = self.states();
        let (lo, hi) = self.sampling_window();
        if !(sigma >= lo && sigma < hi) {
            return Err(Error::InvalidParameter(format!(
                "sampling position {sigma} outside [{lo}, {hi})"
            )));
        }
        if e_k.len() != n || w_k.len() != n {
            return Err(Error::Dimension("e_k and w_k must have one entry per state".into()));
        }
        let h = self.h;
        let s_k = t_k + sigma;
        let t_next = t_k + h;
        let inj = |tau: f64| -> DVector<f64> { d(tau) - &self.l * noise(tau) };

        // ∫_{t_k}^{s_k} e^{(A−LC)(s_k−τ)}(d − Ln) − e^{A(s_k−τ)} d
        let inner = quad(t_k, s_k, n, |tau| {
            let dv = d(tau);
            exp_apply(&self.a_obs, s_k - tau, &(&dv - &self.l * noise(tau)))
                - exp_apply(&self.a, s_k - tau, &dv)
        })?;
        let e_at_s = exp_apply(&self.a_obs, sigma, e_k);
        let d2 = -exp_apply(&self.a, h - sigma - self.delta, &(e_at_s - w_k + inner));

        // The full-interval integrals are split at s_k, where callbacks may switch.
        let mut full = quad(t_k, s_k, n, |tau| exp_apply(&self.a, t_next - tau, &d(tau)))?;
        full += quad(s_k, t_next, n, |tau| exp_apply(&self.a, t_next - tau, &d(tau)))?;
        let d1 = full - &d2;

        let mut e_next = exp_apply(&self.a_obs, h, e_k);
        e_next += quad(t_k, s_k, n, |tau| exp_apply(&self.a_obs, t_next - tau, &inj(tau)))?;
        e_next += quad(s_k, t_next, n, |tau| exp_apply(&self.a_obs, t_next - tau, &inj(tau)))?;

        let mut d_k = DVector::zeros(2 * n);
        d_k.rows_mut(0, n).copy_from(&d1);
        d_k.rows_mut(n, n).copy_from(&d2);
        Ok(DisturbanceStep { d_k, e_next })
    }

    /// Upper bound on `‖d_k‖` valid for every sampling position, from the
    /// triangle inequality and `‖e^{Mt}‖ ≤ e^{μ(M)t}` with the logarithmic norm `μ`.
    pub fn bound(&self, b: &DisturbanceBounds) -> f64 {
        let h = self.h;
        let mu_a = log_norm(&self.a);
        let mu_o = log_norm(&self.a_obs);
        let growth = |mu: f64| (mu * h).exp().max(1.0);
        let integral = |mu: f64| {
            if mu.abs() < 1e-12 {
                h
            } else {
                ((mu * h).exp() - 1.0) / mu
            }
            .max(h)
        };
        let l_norm = norm2(&self.l);
        let inner = b.d * integral(mu_o) + l_norm * b.n * integral(mu_o) + b.d * integral(mu_a);
        let d2 = growth(mu_a) * (growth(mu_o) * b.e + b.w + inner);
        let d1 = b.d * integral(mu_a) + d2;
        (d1 * d1 + d2 * d2).sqrt()
    }
}

fn log_norm(m: &Mat) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn exp_apply(m: &Mat, t: f64, v: &DVector<f64>) -> DVector<f64> {
    expm(m, t).map(|e| e * v).unwrap_or_else(|_| v.clone())
}

fn quad<F>(lo: f64, hi: f64, dim: usize, mut f: F) -> Result<DVector<f64>>
where
    F: FnMut(f64) -> DVector<f64>,
{
    let mut acc = DVector::zeros(dim);
    if hi <= lo {
        return Ok(acc);
    }
    let (x, w) = gauss_legendre(QUADRATURE_NODES);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    for (xi, wi) in x.iter().zip(&w) {
        let v = f(mid + half * xi);
        if v.len() != dim {
            return Err(Error::Dimension(format!(
                "signal returned {} entries, expected {dim}",
                v.len()
            )));
        }
        acc += v * (wi * half);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::discretize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plant() -> ContinuousPlant {
        ContinuousPlant::new(
            Mat::from_row_slice(2, 2, &[0.4, 1.0, -0.3, -0.1]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            0.5,
        )
        .unwrap()
    }

    fn model(delta: f64) -> DisturbanceModel {
        let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let l = Mat::from_row_slice(2, 1, &[3.0, 2.0]);
        DisturbanceModel::new(&plant(), delta, c, l).unwrap()
    }

    fn zero(n: usize) -> impl Fn(f64) -> DVector<f64> {
        move |_| DVector::zeros(n)
    }

    #[test]
    fn rejects_non_hurwitz_observer() {
        let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let l = Mat::zeros(2, 1);
        assert!(matches!(
            DisturbanceModel::new(&plant(), 0.1, c, l),
            Err(Error::NotHurwitz(_))
        ));
    }

    #[test]
    fn silent_signals_give_zero_disturbance() {
        let m = model(0.1);
        let (dz, nz) = (zero(2), zero(1));
        let s = m
            .step(0.0, 0.2, &DVector::zeros(2), &DVector::zeros(2), &dz, &nz)
            .unwrap();
        assert_eq!(s.d_k.norm(), 0.0);
        assert_eq!(s.e_next.norm(), 0.0);
    }

    /// RK4 on plant and observer, then on the estimator from its reset at
    /// `ŝ_k` (which may precede `s_k` when the offset is negative).
    #[allow(clippy::too_many_arguments)]
    fn simulate_interval(
        m: &DisturbanceModel,
        b: &Mat,
        x0: &DVector<f64>,
        xbar0: &DVector<f64>,
        u: f64,
        sigma: f64,
        w: &DVector<f64>,
        d: &dyn Fn(f64) -> DVector<f64>,
        noise: &dyn Fn(f64) -> DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let steps = 20_000;
        let dt = m.h / steps as f64;
        let bu = b.column(0) * u;
        let (a, l, c) = (&m.a, &m.l, &m.c);
        let rhs = |t: f64, v: &DVector<f64>| {
            let (x, xb) = (v.rows(0, 2), v.rows(2, 2));
            let y = c * x + noise(t);
            let mut out = DVector::zeros(4);
            out.rows_mut(0, 2).copy_from(&(a * x + &bu + d(t)));
            out.rows_mut(2, 2).copy_from(&(a * xb + &bu + l * (y - c * xb)));
            out
        };
        let mut v = DVector::zeros(4);
        v.rows_mut(0, 2).copy_from(x0);
        v.rows_mut(2, 2).copy_from(xbar0);
        let mut sampled = None;
        for k in 0..steps {
            let t = k as f64 * dt;
            if sampled.is_none() && t >= sigma - 0.5 * dt {
                sampled = Some(v.rows(2, 2) + w);
            }
            v = rk4(&rhs, t, &v, dt);
        }
        let s_hat = sigma + m.delta;
        let est_steps = ((m.h - s_hat) / dt).round() as usize;
        let mut xh: DVector<f64> = sampled.expect("sampling instant inside interval");
        let est = |_t: f64, x: &DVector<f64>| a * x + &bu;
        for k in 0..est_steps {
            xh = rk4(&est, s_hat + k as f64 * dt, &xh, dt);
        }
        (v.rows(0, 2).into_owned(), v.rows(2, 2).into_owned(), xh)
    }

    fn rk4<F: Fn(f64, &DVector<f64>) -> DVector<f64>>(f: &F, t: f64, v: &DVector<f64>, dt: f64) -> DVector<f64> {
        let k1 = f(t, v);
        let k2 = f(t + 0.5 * dt, &(v + &k1 * (0.5 * dt)));
        let k3 = f(t + 0.5 * dt, &(v + &k2 * (0.5 * dt)));
        let k4 = f(t + dt, &(v + &k3 * dt));
        v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }

    #[test]
    fn one_step_matches_continuous_simulation() {
        // sampling instants on the RK4 grid so the reset is exact
        for (delta, sigma) in [(0.1, 0.2), (-0.15, 0.3)] {
            let m = model(delta);
            let p = plant();
            let sys = discretize(&p, delta).unwrap();
            let d = |t: f64| DVector::from_vec(vec![(3.0 * t).sin(), 0.5 * t.cos()]);
            let noise = |t: f64| DVector::from_vec(vec![0.2 * (5.0 * t).cos()]);
            let x0 = DVector::from_vec(vec![1.0, -0.5]);
            let xbar0 = DVector::from_vec(vec![0.8, -0.2]);
            let xhat0 = DVector::from_vec(vec![0.3, 0.1]);
            let w = DVector::from_vec(vec![0.05, -0.02]);
            let u = 0.7;
            let (x1, xb1, xh1) = simulate_interval(&m, &p.b, &x0, &xbar0, u, sigma, &w, &d, &noise);
            let e0 = &x0 - &xbar0;
            let st = m.step(0.0, sigma, &e0, &w, &d, &noise).unwrap();
            let mut xi0 = DVector::zeros(4);
            xi0.rows_mut(0, 2).copy_from(&(&x0 - &xhat0));
            xi0.rows_mut(2, 2).copy_from(&xhat0);
            let pred = &sys.f * &xi0 + &sys.g * u + &st.d_k;
            let mut truth = DVector::zeros(4);
            truth.rows_mut(0, 2).copy_from(&(&x1 - &xh1));
            truth.rows_mut(2, 2).copy_from(&xh1);
            assert!((&pred - &truth).norm() < 1e-6, "delta {delta}: {pred} vs {truth}");
            assert!((&st.e_next - (&x1 - &xb1)).norm() < 1e-8);
        }
    }

    #[test]
    fn disturbance_respects_bound() {
        let m = model(0.12);
        let bounds = DisturbanceBounds { d: 1.0, n: 1.0, w: 1.0, e: 1.0 };
        let cap = m.bound(&bounds);
        assert!(cap.is_finite());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (lo, hi) = m.sampling_window();
        for _ in 0..40 {
            let dir: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dn = DVector::from_vec(dir.clone()).normalize();
            let freq: f64 = rng.gen_range(0.0..10.0);
            let d = move |t: f64| &dn * (freq * t).cos();
            let nsign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let noise = move |_t: f64| DVector::from_vec(vec![nsign]);
            let e = DVector::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).normalize();
            let w = DVector::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).normalize();
            let sigma = rng.gen_range(lo..hi);
            let s = m.step(0.0, sigma, &e, &w, &d, &noise).unwrap();
            assert!(s.d_k.norm() <= cap, "{} > {cap}", s.d_k.norm());
        }
    }

    #[test]
    fn observer_error_decays_geometrically() {
        let m = model(0.0);
        let rho = crate::numerics::spectral_radius(&expm(m.observer_matrix(), m.h).unwrap()).unwrap();
        assert!(rho < 1.0);
        let (dz, nz) = (zero(2), zero(1));
        let mut e = DVector::from_vec(vec![1.0, 1.0]);
        let e0 = e.norm();
        for k in 1..=60 {
            e = m.step(0.0, 0.0, &e, &DVector::zeros(2), &dz, &nz).unwrap().e_next;
            assert!(e.norm() <= 10.0 * e0 * (rho + 0.02).powi(k));
        }
    }
}

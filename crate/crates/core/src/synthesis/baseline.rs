//! Offset-agnostic comparison designs: identity-weight LQR on the nominal
//! model, and the classical additive-uncertainty robust design with a
//! first-order frequency envelope `r`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{assemble_controller, solve, MatchOptions, MatchProblem, MatchTerms, QParameter, SynthesisReport};
use crate::discretization::{discretize_transformed, ContinuousPlant, OffsetInterval};
use crate::error::{Error, Result};
use crate::factorization::{doubly_coprime_with, CoprimeBundle, FeedbackGain};
use crate::numerics::{dare, sigma_max, CMat, DiscreteSystem, Mat};

/// Frequency samples on `(0, π)` used for the envelope.
pub const ENVELOPE_GRID: usize = 512;
/// Offsets sampled across the interval for the envelope.
pub const ENVELOPE_DELTAS: usize = 40;

/// Identity-weight discrete LQR gain on `(e^{Ah}, ∫₀^h e^{Aτ}B dτ)`.
pub fn lqr_gain(plant: &ContinuousPlant) -> Result<Mat> {
    let (n, m) = (plant.states(), plant.inputs());
    let (_, k) = dare(
        &plant.lambda()?,
        &plant.gamma_h()?,
        &Mat::identity(n, n),
        &Mat::identity(m, m),
        1e-13,
        500_000,
    )?;
    Ok(k)
}

/// Static controller `u = −K x̂`.
pub fn lqr_baseline(plant: &ContinuousPlant) -> Result<DiscreteSystem> {
    Ok(DiscreteSystem::static_gain(lqr_gain(plant)?))
}

/// `|r(e^{jω})| = k|e^{jω} − 1| / |e^{jω} − p|`, realized in the stable
/// form `k(z − 1)/(1 − p z)` which has the same modulus on the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub k: f64,
    pub p: f64,
    /// `(1/2π)∫(|r| − max_Δ ‖P_Δ − P₀‖) dω`.
    pub gap: f64,
    /// `min_ω (|r| − max_Δ ‖P_Δ − P₀‖)` on the grid (positive when strict).
    pub margin: f64,
}

impl Envelope {
    pub fn zero() -> Self {
        Self {
            k: 0.0,
            p: 0.0,
            gap: 0.0,
            margin: 0.0,
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.k * (z - 1.0) / (1.0 - self.p * z)
    }

    pub fn modulus(&self, w: f64) -> f64 {
        let z = Complex64::from_polar(1.0, w);
        self.k * (z - 1.0).norm() / (z - self.p).norm()
    }

    pub fn realize(&self) -> Result<DiscreteSystem> {
        // k(z − 1)/(1 − pz) = −k + k(1 − p)·z/(1 − pz)
        DiscreteSystem::new(
            Mat::from_element(1, 1, self.p),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, self.k * (1.0 - self.p)),
            Mat::from_element(1, 1, -self.k),
        )
    }
}

fn envelope_omegas(grid: usize) -> Vec<f64> {
    (0..grid).map(|j| PI * (j as f64 + 0.5) / grid as f64).collect()
}

/// `max_Δ ‖P_Δ(e^{jω}) − P₀(e^{jω})‖` on the midpoint grid.
pub fn deviation_profile(plant: &ContinuousPlant, interval: OffsetInterval, grid: usize, deltas: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let omegas = envelope_omegas(grid);
    let p0 = discretize_transformed(plant, 0.0)?;
    let nominal: Vec<CMat> = omegas.iter().map(|&w| p0.eval(Complex64::from_polar(1.0, w))).collect();
    let mut worst = vec![0.0f64; grid];
    for delta in interval.grid(deltas) {
        if delta == 0.0 {
            continue;
        }
        let pd = discretize_transformed(plant, delta)?;
        for (j, &w) in omegas.iter().enumerate() {
            let v = sigma_max(&(pd.eval(Complex64::from_polar(1.0, w)) - &nominal[j]));
            worst[j] = worst[j].max(v);
        }
    }
    Ok((omegas, worst))
}

/// Best first-order envelope over `p ∈ (0, 1)`: for fixed `p` the smallest
/// admissible `k` is explicit, leaving a one-dimensional search.
pub fn fit_envelope(omegas: &[f64], profile: &[f64]) -> Result<Envelope> {
    if profile.iter().all(|&v| v == 0.0) {
        return Ok(Envelope::zero());
    }
    let eval_p = |p: f64| -> Envelope {
        let mut k: f64 = 0.0;
        for (&w, &m) in omegas.iter().zip(profile) {
            let z = Complex64::from_polar(1.0, w);
            k = k.max(m * (z - p).norm() / (z - 1.0).norm());
        }
        k *= 1.0 + 1e-9;
        let mut env = Envelope { k, p, gap: 0.0, margin: f64::INFINITY };
        let mut gap = 0.0;
        for (&w, &m) in omegas.iter().zip(profile) {
            let d = env.modulus(w) - m;
            gap += d;
            env.margin = env.margin.min(d);
        }
        env.gap = gap / omegas.len() as f64;
        env
    };
    let mut best = eval_p(0.5);
    let coarse = 400;
    let mut best_i = 0;
    for i in 1..coarse {
        let p = i as f64 / coarse as f64;
        let e = eval_p(p);
        if e.gap < best.gap {
            best = e;
            best_i = i;
        }
    }
    let (mut a, mut b) = ((best_i.max(1) - 1) as f64 / coarse as f64, ((best_i + 1).min(coarse)) as f64 / coarse as f64);
    b = b.min(1.0 - 1e-9);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if eval_p(c).gap < eval_p(d).gap {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = eval_p(0.5 * (a + b));
    if refined.gap < best.gap {
        best = refined;
    }
    if !(best.margin > 0.0) {
        return Err(Error::Infeasible(format!(
            "first-order envelope cannot dominate the deviation (margin {})",
            best.margin
        )));
    }
    Ok(best)
}

/// `‖r (X̃ + D Q) D̃‖∞`, the weighted control sensitivity `r C(I + P₀C)⁻¹`.
pub fn additive_problem<'a>(bundle: &'a CoprimeBundle, r: Envelope) -> MatchProblem<'a> {
    let (m, n) = (bundle.inputs(), bundle.outputs());
    MatchProblem::new(m, n, move |z| {
        let rz = r.eval(z);
        let dl = bundle.d_left.eval(z);
        MatchTerms {
            a: bundle.x_tilde.eval(z) * &dl * rz,
            b: bundle.d.eval(z) * rz,
            c: dl,
        }
    })
}

#[derive(Debug, Clone)]
pub struct AdditiveReport {
    pub envelope: Envelope,
    pub report: SynthesisReport,
}

/// Envelope fit followed by `min_Q ‖r (X̃ + DQ) D̃‖∞ ≤ 1`.
pub fn additive_uncertainty_design(
    plant: &ContinuousPlant,
    interval: OffsetInterval,
    gain: &FeedbackGain,
    opts: &MatchOptions,
) -> Result<AdditiveReport> {
    interval.check_period(plant.h)?;
    let bundle = doubly_coprime_with(plant, gain)?;
    let envelope = if interval.is_zero() {
        Envelope::zero()
    } else {
        let (omegas, profile) = deviation_profile(plant, interval, ENVELOPE_GRID, ENVELOPE_DELTAS)?;
        fit_envelope(&omegas, &profile)?
    };
    let (achieved, grid_norm, q, iterations) = if envelope.k == 0.0 {
        (0.0, 0.0, QParameter::zero(bundle.inputs(), bundle.outputs(), 0), 0)
    } else {
        let problem = additive_problem(&bundle, envelope);
        let res = solve(&problem, opts)?;
        (res.certified, res.grid_norm, res.q, res.iterations)
    };
    let controller = assemble_controller(&bundle, &q).ok();
    let feasible = achieved <= 1.0 && controller.is_some();
    Ok(AdditiveReport {
        envelope,
        report: SynthesisReport {
            achieved,
            grid_norm,
            gamma: 1.0,
            feasible,
            q_order: q.order(),
            q,
            controller,
            iterations,
        },
    })
}

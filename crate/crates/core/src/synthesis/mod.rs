//! Controller synthesis on top of the doubly coprime factors.
//!
//! Every stabilizing controller of the nominal plant is
//! `C = (X̃ + D Q)(Ỹ − N Q)⁻¹` for stable `Q`, wired as `u = −C y`. The offset
//! interval is handled by the small-gain condition `‖W(X̃ + D Q)‖∞ < γ`.

mod baseline;
mod optimizer;
mod reduction;

pub use baseline::{
    additive_problem, additive_uncertainty_design, deviation_profile, fit_envelope, lqr_baseline,
    lqr_gain, AdditiveReport, Envelope, ENVELOPE_DELTAS, ENVELOPE_GRID,
};
pub use optimizer::{solve, MatchOptions, MatchProblem, MatchResult, MatchTerms};
pub use reduction::{balanced_truncate, ReductionReport};

use num_complex::Complex64;

use crate::discretization::{discretize, ContinuousPlant, OffsetInterval};
use crate::error::{Error, Result};
use crate::factorization::{doubly_coprime_with, gamma_level, offset_weight, CoprimeBundle, FeedbackGain};
use crate::numerics::{CMat, DiscreteSystem, Mat};

/// FIR Youla parameter `Q(z) = Σᵢ qᵢ zⁱ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QParameter {
    pub coeffs: Vec<Mat>,
}

impl QParameter {
    pub fn zero(rows: usize, cols: usize, order: usize) -> Self {
        Self {
            coeffs: vec![Mat::zeros(rows, cols); order + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn rows(&self) -> usize {
        self.coeffs.first().map_or(0, |q| q.nrows())
    }

    pub fn cols(&self) -> usize {
        self.coeffs.first().map_or(0, |q| q.ncols())
    }

    pub fn eval(&self, z: Complex64) -> CMat {
        let mut acc = CMat::zeros(self.rows(), self.cols());
        for q in self.coeffs.iter().rev() {
            acc = acc * z + q.map(|x| Complex64::new(x, 0.0));
        }
        acc
    }

    pub fn neg(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|q| -q).collect(),
        }
    }

    /// Same polynomial with zero coefficients appended up to `order`.
    pub fn padded(&self, order: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() < order + 1 {
            coeffs.push(Mat::zeros(self.rows(), self.cols()));
        }
        Self { coeffs }
    }

    /// Shift-register realization with `order × cols` states.
    pub fn realize(&self) -> Result<DiscreteSystem> {
        let (p, m) = (self.rows(), self.cols());
        let n = self.order();
        let s = n * m;
        let mut f = Mat::zeros(s, s);
        for i in 1..n {
            f.view_mut((i * m, (i - 1) * m), (m, m)).copy_from(&Mat::identity(m, m));
        }
        let mut g = Mat::zeros(s, m);
        if n > 0 {
            g.view_mut((0, 0), (m, m)).copy_from(&Mat::identity(m, m));
        }
        let mut h = Mat::zeros(p, s);
        for i in 0..n {
            h.view_mut((0, i * m), (p, m)).copy_from(&self.coeffs[i + 1]);
        }
        DiscreteSystem::new(f, g, h, self.coeffs[0].clone())
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|q| q.iter().all(|x| x.is_finite()))
    }
}

/// Outcome of one synthesis attempt.
#[derive(Debug, Clone)]
pub struct SynthesisReport {
    /// Certified `‖W(X̃₀ + D₀Q)‖∞` (or the baseline objective).
    pub achieved: f64,
    /// Best value on the optimization grid.
    pub grid_norm: f64,
    pub gamma: f64,
    pub feasible: bool,
    pub q: QParameter,
    pub q_order: usize,
    /// Controller `C` (wired as `u = −C y`); absent when assembly failed.
    pub controller: Option<DiscreteSystem>,
    pub iterations: usize,
}

/// The free-parameter problem `min_Q ‖W(X̃ + D Q)‖∞` for a scalar weight.
pub fn weighted_problem<'a>(bundle: &'a CoprimeBundle, w: &'a DiscreteSystem) -> Result<MatchProblem<'a>> {
    if w.inputs() != 1 || w.outputs() != 1 {
        return Err(Error::Dimension("weight must be scalar".into()));
    }
    let (m, n) = (bundle.inputs(), bundle.outputs());
    Ok(MatchProblem::new(m, n, move |z| {
        let wz = w.eval(z)[(0, 0)];
        MatchTerms {
            a: bundle.x_tilde.eval(z) * wz,
            b: bundle.d.eval(z) * wz,
            c: CMat::identity(n, n),
        }
    }))
}

/// Generalized plant `[[W X̃, W D], [−I, 0]]`, whose lower LFT with `Q` is
/// `W(X̃ − D Q)`.
pub fn generalized_plant(bundle: &CoprimeBundle, w: &DiscreteSystem) -> Result<DiscreteSystem> {
    let (m, n) = (bundle.inputs(), bundle.outputs());
    let wm = w.repeat_diag(m);
    let top = wm.mul(&bundle.x_tilde.hstack(&bundle.d)?)?;
    let mut low = Mat::zeros(n, n + m);
    low.view_mut((0, 0), (n, n)).copy_from(&(-Mat::identity(n, n)));
    top.vstack(&DiscreteSystem::static_gain(low))
}

/// Solves the weighted model-matching problem and assembles the controller.
pub fn model_match(
    bundle: &CoprimeBundle,
    w: &DiscreteSystem,
    gamma: f64,
    opts: &MatchOptions,
) -> Result<SynthesisReport> {
    let problem = weighted_problem(bundle, w)?;
    let res = solve(&problem, opts)?;
    let controller = assemble_controller(bundle, &res.q).ok();
    let feasible = res.certified < gamma && controller.is_some();
    Ok(SynthesisReport {
        achieved: res.certified,
        grid_norm: res.grid_norm,
        gamma,
        feasible,
        q_order: res.q.order(),
        q: res.q,
        controller,
        iterations: res.iterations,
    })
}

/// Factors at zero offset, `γ` from the interval, FIR search.
pub fn synthesize(
    plant: &ContinuousPlant,
    interval: OffsetInterval,
    gain: &FeedbackGain,
    opts: &MatchOptions,
) -> Result<(CoprimeBundle, SynthesisReport)> {
    let bundle = doubly_coprime_with(plant, gain)?;
    let level = gamma_level(plant, interval)?;
    let w = offset_weight();
    let report = model_match(&bundle, &w, level.gamma, opts)?;
    Ok((bundle, report))
}

/// Observer-based realization of `C = (X̃ + DQ)(Ỹ − NQ)⁻¹`.
///
/// Controller state `[x̂; s]` with `s` the FIR shift register of `Q`:
/// the innovation `e = y − H̄x̂` drives `v = −Q e`, and the control applied
/// is `u = −K₀x̂ + v = −C y`.
pub fn assemble_controller(bundle: &CoprimeBundle, q: &QParameter) -> Result<DiscreteSystem> {
    let (m, n) = (bundle.inputs(), bundle.outputs());
    if q.rows() != m || q.cols() != n {
        return Err(Error::Dimension(format!(
            "Q must be {m}x{n}, got {}x{}",
            q.rows(),
            q.cols()
        )));
    }
    let sys = &bundle.plant;
    let (f, g, h) = (&sys.f, &sys.g, &sys.h);
    let k = &bundle.k0;
    let l = &bundle.l0;
    let qo = q.neg().realize()?;
    let nx = f.nrows();
    let ns = qo.states();
    let lg = l + g * &qo.d;

    let mut a = Mat::zeros(nx + ns, nx + ns);
    a.view_mut((0, 0), (nx, nx)).copy_from(&(f - g * k - &lg * h));
    a.view_mut((0, nx), (nx, ns)).copy_from(&(g * &qo.h));
    a.view_mut((nx, 0), (ns, nx)).copy_from(&(-&qo.g * h));
    a.view_mut((nx, nx), (ns, ns)).copy_from(&qo.f);
    let mut b = Mat::zeros(nx + ns, n);
    b.view_mut((0, 0), (nx, n)).copy_from(&lg);
    b.view_mut((nx, 0), (ns, n)).copy_from(&qo.g);
    // u = (−K − Qo_d H) x̂ + Qo_h s + Qo_d y; C is its negative
    let mut c = Mat::zeros(m, nx + ns);
    c.view_mut((0, 0), (m, nx)).copy_from(&(k + &qo.d * h));
    c.view_mut((0, nx), (m, ns)).copy_from(&(-&qo.h));
    let d = -&qo.d;
    let controller = DiscreteSystem::new(a, b, c, d)?;

    let nominal = closed_loop_matrix(sys, &controller)?;
    let rho = crate::numerics::spectral_radius(&nominal)?;
    if rho < 1.0 {
        return Ok(controller);
    }
    let flipped = closed_loop_matrix(sys, &controller.neg())?;
    let rho_flip = crate::numerics::spectral_radius(&flipped)?;
    log::warn!("nominal loop radius {rho}, flipped-sign radius {rho_flip}");
    Err(Error::Verification(format!(
        "assembled controller does not stabilize the nominal loop (radius {rho})"
    )))
}

/// Direct composition of the Youla formula (for cross-checks).
pub fn youla_transfer(bundle: &CoprimeBundle, q: &QParameter) -> Result<DiscreteSystem> {
    let qs = q.realize()?;
    let num = bundle.x_tilde.add(&bundle.d.mul(&qs)?)?;
    let den = bundle.y_tilde.sub(&bundle.n.mul(&qs)?)?;
    num.mul(&den.inverse()?)
}

/// Closed-loop state matrix of `ξ⁺ = Fξ + Gu`, `y = Hξ`, `u = −C y`.
pub fn closed_loop_matrix(plant: &DiscreteSystem, controller: &DiscreteSystem) -> Result<Mat> {
    Ok(closed_loop_system(plant, controller)?.f)
}

/// Loop with an additive input `v` at the plant input (`u = −C y + v`),
/// output `y`.
pub fn closed_loop_system(plant: &DiscreteSystem, controller: &DiscreteSystem) -> Result<DiscreteSystem> {
    if controller.inputs() != plant.outputs() || controller.outputs() != plant.inputs() {
        return Err(Error::Dimension(format!(
            "controller is {}x{}, plant is {}x{}",
            controller.outputs(),
            controller.inputs(),
            plant.outputs(),
            plant.inputs()
        )));
    }
    if plant.d.iter().any(|x| *x != 0.0) {
        return Err(Error::InvalidParameter("plant must be strictly proper".into()));
    }
    let (np, nc) = (plant.states(), controller.states());
    let (f, g, h) = (&plant.f, &plant.g, &plant.h);
    let (ac, bc, cc, dc) = (&controller.f, &controller.g, &controller.h, &controller.d);
    let mut a = Mat::zeros(np + nc, np + nc);
    a.view_mut((0, 0), (np, np)).copy_from(&(f - g * dc * h));
    a.view_mut((0, np), (np, nc)).copy_from(&(-(g * cc)));
    a.view_mut((np, 0), (nc, np)).copy_from(&(bc * h));
    a.view_mut((np, np), (nc, nc)).copy_from(ac);
    let mut b = Mat::zeros(np + nc, plant.inputs());
    b.view_mut((0, 0), g.shape()).copy_from(g);
    let mut c = Mat::zeros(plant.outputs(), np + nc);
    c.view_mut((0, 0), h.shape()).copy_from(h);
    DiscreteSystem::new(a, b, c, Mat::zeros(plant.outputs(), plant.inputs()))
}

/// `Σ_d(Δ)` in feedback with `controller`.
pub fn closed_loop(plant: &ContinuousPlant, delta: f64, controller: &DiscreteSystem) -> Result<DiscreteSystem> {
    closed_loop_system(&discretize(plant, delta)?, controller)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::discretize_transformed;
    use crate::factorization::doubly_coprime;
    use crate::numerics::{circle_points, max_abs_diff, spectral_radius};
    use std::f64::consts::E;

    fn reactor() -> ContinuousPlant {
        ContinuousPlant::batch_reactor(1.0).unwrap()
    }

    fn sample_q(m: usize, n: usize, order: usize) -> QParameter {
        QParameter {
            coeffs: (0..=order)
                .map(|i| Mat::from_fn(m, n, |r, c| ((i * 7 + r * 3 + c) as f64).sin() * 0.05))
                .collect(),
        }
    }

    #[test]
    fn fir_realization_matches_polynomial() {
        let q = sample_q(2, 3, 4);
        let s = q.realize().unwrap();
        assert_eq!(s.states(), 12);
        for z in circle_points(16) {
            assert!(max_abs_diff(&s.eval(z), &q.eval(z)) < 1e-14);
        }
        let q0 = sample_q(2, 3, 0).realize().unwrap();
        assert_eq!(q0.states(), 0);
    }

    #[test]
    fn observer_form_equals_youla_formula() {
        let b = doubly_coprime(&reactor()).unwrap();
        for q in [QParameter::zero(2, 4, 0), sample_q(2, 4, 3)] {
            let c = assemble_controller(&b, &q).unwrap();
            let y = youla_transfer(&b, &q).unwrap();
            for z in circle_points(32) {
                let scale = y.eval(z).norm().max(1.0);
                assert!(max_abs_diff(&c.eval(z), &y.eval(z)) < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn generalized_plant_lft_identity() {
        let b = doubly_coprime(&reactor()).unwrap();
        let w = offset_weight();
        let phi = generalized_plant(&b, &w).unwrap();
        let q = sample_q(2, 4, 2);
        let fl = phi.lft_lower(&q.realize().unwrap(), 4, 2).unwrap();
        let plus = weighted_problem(&b, &w).unwrap();
        for z in circle_points(32) {
            // F_ℓ(Φ, Q) = W(X̃ − DQ) = W(X̃ + D(−Q))
            let expect = plus.value(&q.neg(), z);
            assert!(max_abs_diff(&fl.eval(z), &expect) < 1e-9 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn zero_controller_loops() {
        let stable = ContinuousPlant::scalar(-1.0, 1.0, 1.0).unwrap();
        let zero = DiscreteSystem::static_gain(Mat::zeros(1, 1));
        assert!(closed_loop(&stable, 0.2, &zero).unwrap().is_stable().unwrap());
        let unstable = ContinuousPlant::scalar(1.0, 1.0, 0.7).unwrap();
        let rho = closed_loop(&unstable, 0.0, &zero).unwrap().spectral_radius().unwrap();
        assert!((rho - 0.7f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn static_gain_loop_matches_closed_form() {
        let p = ContinuousPlant::scalar(1.0, 1.0, 1.0).unwrap();
        let k = 1.2;
        let lam = E;
        let a = closed_loop(&p, 0.0, &DiscreteSystem::static_gain(Mat::from_element(1, 1, k)))
            .unwrap()
            .f;
        let expect = Mat::from_row_slice(2, 2, &[0.0, 0.0, lam, lam * (1.0 - k) + k]);
        assert!((&a - &expect).abs().max() < 1e-12);
        let th: f64 = (-0.3f64).exp() - 1.0;
        let a = closed_loop(&p, 0.3, &DiscreteSystem::static_gain(Mat::from_element(1, 1, k)))
            .unwrap()
            .f;
        let expect = Mat::from_row_slice(
            2,
            2,
            &[-lam * th, -lam * th * (1.0 - k), lam * (1.0 + th), lam * (1.0 + th) * (1.0 - k) + k],
        );
        assert!((&a - &expect).abs().max() < 1e-12);
    }

    #[test]
    fn youla_controllers_stabilize_nominal_loop() {
        let p = reactor();
        let b = doubly_coprime(&p).unwrap();
        let c = assemble_controller(&b, &sample_q(2, 4, 5)).unwrap();
        let rho = spectral_radius(&closed_loop_matrix(&discretize_transformed(&p, 0.0).unwrap(), &c).unwrap()).unwrap();
        assert!(rho < 1.0);
        // the same controller on the original coordinates
        assert!(closed_loop(&p, 0.0, &c).unwrap().is_stable().unwrap());
    }

    #[test]
    fn zero_weight_is_trivially_feasible() {
        let b = doubly_coprime(&reactor()).unwrap();
        let w = DiscreteSystem::static_gain(Mat::zeros(1, 1));
        let opts = MatchOptions {
            order: 2,
            restarts: 2,
            max_iter: 50,
            ..Default::default()
        };
        let r = model_match(&b, &w, 1e-3, &opts).unwrap();
        assert_eq!(r.achieved, 0.0);
        assert!(r.feasible);
    }
}

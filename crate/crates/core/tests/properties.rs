use clockoff::analysis::{closed_loop_radius, simulate, sweep, SimulationConfig};
use clockoff::discretization::{discretize, ContinuousPlant};
use clockoff::factorization::{bezout_residual, doubly_coprime};
use clockoff::scalar_exact::{
    delta_of_theta, jury_static, lti_exact_condition, pick_feasible, static_closed_loop_matrix, theta_of_delta,
    theta_range,
};
use clockoff::synthesis::{closed_loop_matrix, lqr_baseline};
use clockoff::{DiscreteSystem, Mat};
use nalgebra::DVector;
use proptest::prelude::*;

fn radius(m: &Mat) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `(λ, θ̲, θ̄)` with the interval straddling 0 inside `S_max`.
fn straddling() -> impl Strategy<Value = (f64, f64, f64)> {
    (1.001f64..10.0, 0.001f64..0.999, 0.001f64..0.999).prop_map(|(lambda, u, v)| {
        let (smin, smax) = theta_range(lambda);
        (lambda, smin * u, smax * v)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn pick_agrees_with_exact((lambda, lo, hi) in straddling()) {
        let gap = (lambda - 1.0).powi(2) * hi - (lambda + 1.0).powi(2) * lo - 4.0 * lambda;
        prop_assume!(gap.abs() > 1e-9 * lambda);
        prop_assert_eq!(pick_feasible(lambda, lo, hi).unwrap(), lti_exact_condition(lambda, lo, hi).unwrap());
    }

    #[test]
    fn exact_condition_depends_on_length_only(a in 0.05f64..3.0, h in 0.1f64..3.0, frac in 0.01f64..0.99, s1 in 0.01f64..0.99, s2 in 0.01f64..0.99) {
        let len = frac * h;
        let lambda = (a * h).exp();
        // two placements of the same length, both straddling 0 inside (−h, h)
        let place = |s: f64| -> (f64, f64) {
            let lo = -len * s;
            (lo, lo + len)
        };
        let verdict = |(dlo, dhi): (f64, f64)| {
            lti_exact_condition(lambda, theta_of_delta(a, dhi), theta_of_delta(a, dlo)).unwrap()
        };
        let (p1, p2) = (place(s1), place(s2));
        // the boundary sits where e^{−aL} = ((λ−1)/(λ+1))²
        let boundary = -(2.0 * ((lambda - 1.0) / (lambda + 1.0)).ln()) / a;
        prop_assume!((len - boundary).abs() > 1e-9 * h);
        prop_assert_eq!(verdict(p1), verdict(p2));
        prop_assert_eq!(verdict(p1), len < boundary);
    }

    #[test]
    fn theta_delta_round_trip(a in 0.01f64..5.0, s in -1.0f64..1.0) {
        // beyond |aΔ| ≈ 6 the inverse map is ill-conditioned near θ = −1
        let delta = 6.0 * s / a;
        let back = delta_of_theta(a, theta_of_delta(a, delta));
        prop_assert!((back - delta).abs() <= 1e-12 * delta.abs().max(1.0));
    }

    #[test]
    fn jury_matches_eigenvalues(lambda in 1.001f64..20.0, t in 0.0f64..1.0, k in -2.0f64..6.0) {
        let (smin, smax) = theta_range(lambda);
        let theta = smin + (smax - smin) * t;
        let r = radius(&static_closed_loop_matrix(lambda, theta, k));
        prop_assume!((r - 1.0).abs() > 1e-7);
        prop_assert_eq!(r < 1.0, jury_static(lambda, theta, k));
    }

    #[test]
    fn zero_offset_has_no_estimation_error(a in -1.0f64..1.0, b in 0.2f64..2.0, h in 0.1f64..2.0) {
        // at zero offset the estimate tracks the plant exactly
        let p = ContinuousPlant::scalar(a, b, h).unwrap();
        let sys = discretize(&p, 0.0).unwrap();
        prop_assert!(sys.f[(0, 0)].abs() < 1e-12 && sys.f[(0, 1)].abs() < 1e-12 && sys.g[(0, 0)].abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bezout_holds_for_random_plants(seed in prop::collection::vec(-1.0f64..1.0, 12), h in 0.2f64..1.5) {
        let a = Mat::from_row_slice(3, 3, &seed[..9]);
        let b = Mat::from_row_slice(3, 1, &seed[9..]);
        prop_assume!(b.amax() > 0.1);
        let Ok(p) = ContinuousPlant::new(a, b, h) else { return Ok(()); };
        let Ok(bundle) = doubly_coprime(&p) else { return Ok(()); };
        prop_assert!(bezout_residual(&bundle, 64) < 1e-8);
    }

    #[test]
    fn sweep_reports_consistent_runs(k in 1.0f64..3.0, a in 0.2f64..1.5, lo in -0.95f64..0.0, hi in 0.0f64..0.95) {
        let p = ContinuousPlant::scalar(a, a, 1.0).unwrap();
        let c = DiscreteSystem::static_gain(Mat::from_element(1, 1, k));
        let rep = sweep(&p, &c, (lo, hi), 31).unwrap();
        prop_assert_eq!(rep.deltas.len(), 31);
        prop_assert_eq!(*rep.deltas.last().unwrap(), hi);
        for (d, r) in rep.deltas.iter().zip(&rep.radii) {
            prop_assert!((closed_loop_radius(&p, &c, *d).unwrap() - r).abs() < 1e-12);
        }
        let mut last = f64::NEG_INFINITY;
        for &(a0, b0) in &rep.stable_runs {
            prop_assert!(lo <= a0 && a0 <= b0 && b0 <= hi && a0 > last);
            last = b0;
        }
        for (d, r) in rep.deltas.iter().zip(&rep.radii) {
            let inside = rep.run_containing(*d).is_some();
            prop_assert_eq!(inside, clockoff::analysis::is_stable_radius(*r));
        }
    }

    #[test]
    fn simulation_samples_follow_closed_loop_powers(delta in -0.05f64..0.1, x0 in prop::collection::vec(-1.0f64..1.0, 4)) {
        let p = ContinuousPlant::batch_reactor(1.0).unwrap();
        let c = lqr_baseline(&p).unwrap();
        let mut cfg = SimulationConfig::new(delta, 8, DVector::from_vec(x0), DVector::zeros(4), DVector::zeros(c.states()));
        cfg.intersample = 3;
        let tr = simulate(&p, &c, &cfg, None).unwrap();
        let acl = closed_loop_matrix(&discretize(&p, delta).unwrap(), &c).unwrap();
        let mut state = cfg.xi0.clone();
        for xi in &tr.xi {
            let scale = state.amax().max(1.0);
            prop_assert!((xi - &state.rows(0, 8)).amax() <= 1e-9 * scale);
            state = &acl * DVector::from_iterator(acl.ncols(), state.iter().copied());
        }
        prop_assert_eq!(tr.samples.len(), tr.xi.len());
    }
}

//! Verification: offset sweeps of the closed-loop spectral radius, the
//! stabilized interval around zero offset, time-domain simulation and the
//! figure datasets.

mod figures;
mod simulate;

pub use figures::{
    fig3_point, fig4_row, fig6_row, lti_length_curve, Fig3Options, Fig3Point, Fig4Row, Fig6Row, FIG3_PERIODS,
};
pub use simulate::{
    decay_horizon, intersample_bound, iss_bound, simulate, Disturbances, SimulationConfig, Trajectory,
    DEFAULT_INTERSAMPLE,
};

use rayon::prelude::*;

use crate::discretization::ContinuousPlant;
use crate::error::{Error, Result};
use crate::numerics::DiscreteSystem;
use crate::synthesis::closed_loop;

/// A radius below `1 − STABILITY_MARGIN` counts as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Default endpoint resolution in seconds.
pub const BISECTION_TOL: f64 = 1e-6;
/// Outward scan steps per side before bisection.
const SCAN_STEPS: usize = 400;

pub fn is_stable_radius(r: f64) -> bool {
    r < 1.0 - STABILITY_MARGIN
}

/// Spectral radius of `Σ_d(Δ)` in feedback with `controller`.
pub fn closed_loop_radius(plant: &ContinuousPlant, controller: &DiscreteSystem, delta: f64) -> Result<f64> {
    closed_loop(plant, delta, controller)?.spectral_radius()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub deltas: Vec<f64>,
    pub radii: Vec<f64>,
    /// Maximal stable runs, endpoints refined by bisection.
    pub stable_runs: Vec<(f64, f64)>,
    /// Grid points with `|ρ − 1| ≤ STABILITY_MARGIN`.
    pub boundary: Vec<f64>,
    /// Indices `i` where `ρ` jumps between `i` and `i + 1` by more than the
    /// local Lipschitz estimate allows.
    pub jumps: Vec<usize>,
}

impl SweepReport {
    pub fn all_stable(&self) -> bool {
        self.radii.iter().all(|&r| is_stable_radius(r))
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }

    /// The stable run containing `delta`, if any.
    pub fn run_containing(&self, delta: f64) -> Option<(f64, f64)> {
        self.stable_runs.iter().copied().find(|&(lo, hi)| lo <= delta && delta <= hi)
    }
}

/// Spectral radius on `points` equally spaced offsets in `[lo, hi]`.
pub fn sweep(
    plant: &ContinuousPlant,
    controller: &DiscreteSystem,
    range: (f64, f64),
    points: usize,
) -> Result<SweepReport> {
    sweep_with_tol(plant, controller, range, points, BISECTION_TOL)
}

pub fn sweep_with_tol(
    plant: &ContinuousPlant,
    controller: &DiscreteSystem,
    (lo, hi): (f64, f64),
    points: usize,
    tol: f64,
) -> Result<SweepReport> {
    if points < 2 {
        return Err(Error::InvalidParameter(format!("sweep needs at least 2 points, got {points}")));
    }
    if !(lo <= hi) {
        return Err(Error::InvalidParameter(format!("sweep range [{lo}, {hi}] is empty")));
    }
    plant.check_offset(lo)?;
    plant.check_offset(hi)?;
    let deltas: Vec<f64> = (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 })
        .collect();
    let radii = deltas
        .par_iter()
        .map(|&d| closed_loop_radius(plant, controller, d))
        .collect::<Result<Vec<_>>>()?;
    if radii.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("closed-loop spectral radius"));
    }
    let radius = |d: f64| closed_loop_radius(plant, controller, d);

    let mut stable_runs = Vec::new();
    let mut i = 0;
    while i < points {
        if !is_stable_radius(radii[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < points && is_stable_radius(radii[i + 1]) {
            i += 1;
        }
        let run_lo = if start == 0 {
            deltas[0]
        } else {
            bisect_edge(&radius, deltas[start], deltas[start - 1], tol)?
        };
        let run_hi = if i == points - 1 {
            deltas[i]
        } else {
            bisect_edge(&radius, deltas[i], deltas[i + 1], tol)?
        };
        stable_runs.push((run_lo, run_hi));
        i += 1;
    }

    let boundary = deltas
        .iter()
        .zip(&radii)
        .filter(|(_, r)| (**r - 1.0).abs() <= STABILITY_MARGIN)
        .map(|(d, _)| *d)
        .collect();
    Ok(SweepReport {
        jumps: jump_indices(&radii),
        deltas,
        radii,
        stable_runs,
        boundary,
    })
}

fn jump_indices(radii: &[f64]) -> Vec<usize> {
    if radii.len() < 3 {
        return Vec::new();
    }
    let diffs: Vec<f64> = radii.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let limit = 10.0 * median + 1e-3;
    diffs
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > limit)
        .map(|(i, _)| i)
        .collect()
}

/// Last stable offset between a stable `inside` and an unstable `outside`.
fn bisect_edge<F>(radius: &F, mut inside: f64, mut outside: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    while (outside - inside).abs() > tol {
        let mid = 0.5 * (inside + outside);
        if is_stable_radius(radius(mid)?) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(inside)
}

/// Maximal stabilized interval containing `Δ = 0`: an outward scan on each
/// side to the first unstable offset, then bisection to `tol`. A side that
/// stays stable up to the sampling limit reports `±h`.
pub fn interval_search(plant: &ContinuousPlant, controller: &DiscreteSystem) -> Result<(f64, f64)> {
    interval_search_with_tol(plant, controller, BISECTION_TOL)
}

pub fn interval_search_with_tol(
    plant: &ContinuousPlant,
    controller: &DiscreteSystem,
    tol: f64,
) -> Result<(f64, f64)> {
    let radius = |d: f64| closed_loop_radius(plant, controller, d);
    let r0 = radius(0.0)?;
    if !is_stable_radius(r0) {
        return Err(Error::Unstable(r0));
    }
    let h = plant.h;
    let edge = h * (1.0 - 1e-9);
    let side = |sign: f64| -> Result<f64> {
        let mut inside = 0.0;
        for k in 1..=SCAN_STEPS {
            let d = sign * edge * k as f64 / SCAN_STEPS as f64;
            if is_stable_radius(radius(d)?) {
                inside = d;
            } else {
                return bisect_edge(&radius, inside, d, tol);
            }
        }
        Ok(sign * h)
    };
    Ok((side(-1.0)?, side(1.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Mat;
    use crate::scalar_exact::{delta_of_theta, scalar_controller, theta_of_delta, DEFAULT_POLE};
    use crate::synthesis::lqr_baseline;
    use std::f64::consts::E;

    fn zero_controller(m: usize, n: usize) -> DiscreteSystem {
        DiscreteSystem::static_gain(Mat::zeros(m, n))
    }

    #[test]
    fn stable_plant_zero_controller_is_stable_everywhere() {
        let p = ContinuousPlant::new(Mat::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]), Mat::identity(2, 2), 0.5).unwrap();
        let c = zero_controller(2, 2);
        let rep = sweep(&p, &c, (-0.49, 0.49), 41).unwrap();
        assert!(rep.all_stable());
        assert_eq!(rep.stable_runs, vec![(-0.49, 0.49)]);
        assert!(rep.boundary.is_empty() && rep.jumps.is_empty());
        assert_eq!(interval_search(&p, &c).unwrap(), (-0.5, 0.5));
    }

    #[test]
    fn static_gain_near_one_recovers_prop5_limit() {
        // u = −K x̂ with K slightly above 1 on the scalar plant (b/a = 1)
        let (a, h) = (1.0, 1.0);
        let p = ContinuousPlant::scalar(a, a, h).unwrap();
        let k = 1.0 + 1e-6;
        let c = DiscreteSystem::static_gain(Mat::from_element(1, 1, k));
        let (lo, hi) = interval_search(&p, &c).unwrap();
        // θ-image of (lo, hi) is (θ(hi), θ(lo))
        assert!((theta_of_delta(a, hi) + 1.0 / E).abs() < 1e-4);
        assert!((theta_of_delta(a, lo) - 1.0 / E).abs() < 1e-4);
    }

    #[test]
    fn scalar_design_interval_is_covered() {
        let (a, h) = (1.0, 1.0);
        let p = ContinuousPlant::scalar(a, a, h).unwrap();
        let (tlo, thi) = (-0.4, 0.55);
        let ctrl = scalar_controller(E, tlo, thi, DEFAULT_POLE).unwrap();
        let (dlo, dhi) = (delta_of_theta(a, thi), delta_of_theta(a, tlo));
        let rep = sweep(&p, &ctrl.realization, (dlo, dhi), 101).unwrap();
        assert!(rep.all_stable());
        let (lo, hi) = interval_search(&p, &ctrl.realization).unwrap();
        assert!(lo <= dlo && hi >= dhi);
    }

    #[test]
    fn lqr_interval_matches_example() {
        let p = ContinuousPlant::batch_reactor(1.0).unwrap();
        let (lo, hi) = interval_search(&p, &lqr_baseline(&p).unwrap()).unwrap();
        assert!((lo + 0.029).abs() < 3e-3, "lo = {lo}");
        assert!((hi - 0.062).abs() < 3e-3, "hi = {hi}");
        let rep = sweep(&p, &lqr_baseline(&p).unwrap(), (-0.2, 0.2), 81).unwrap();
        let run = rep.run_containing(0.0).unwrap();
        assert!((run.0 - lo).abs() < 1e-5 && (run.1 - hi).abs() < 1e-5);
    }

    #[test]
    fn unstable_at_zero_is_an_error() {
        let p = ContinuousPlant::scalar(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(interval_search(&p, &zero_controller(1, 1)), Err(Error::Unstable(_))));
        assert!(sweep(&p, &zero_controller(1, 1), (0.0, 0.1), 1).is_err());
    }

    #[test]
    fn jumps_are_flagged() {
        let mut r = vec![0.5; 20];
        for (i, v) in r.iter_mut().enumerate() {
            *v += 0.001 * i as f64;
        }
        r[12] = 0.9;
        assert_eq!(jump_indices(&r), vec![11, 12]);
    }
}

//! Data behind the offset-length figures: the batch-reactor comparison
//! against the additive-uncertainty design, the exact scalar length versus
//! the ZOH period, and the scalar controller-class comparison.

use crate::discretization::{ContinuousPlant, OffsetInterval};
use crate::error::{Error, Result};
use crate::factorization::{doubly_coprime, offset_residual, offset_weight, FeedbackGain};
use crate::numerics::norm2;
use crate::scalar_exact::{
    a_zero_case, lti_length_unclipped, max_offset_length_lti, static_bound, two_periodic_bound,
};
use crate::synthesis::{additive_uncertainty_design, solve, weighted_problem, MatchOptions};

/// `h ∈ {0.2, 0.4, …, 3.6}`.
pub const FIG3_PERIODS: [f64; 18] = [
    0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0, 3.2, 3.4, 3.6,
];

const EDGE_SCAN: usize = 400;

#[derive(Debug, Clone)]
pub struct Fig3Options {
    pub order: usize,
    pub grid: usize,
    pub seed: u64,
    /// Relative width at which the baseline bracket stops.
    pub rel_tol: f64,
    pub max_baseline_solves: usize,
}

impl Default for Fig3Options {
    fn default() -> Self {
        Self {
            order: 8,
            grid: 96,
            seed: 0,
            rel_tol: 2e-3,
            max_baseline_solves: 10,
        }
    }
}

impl Fig3Options {
    fn match_options(&self) -> MatchOptions {
        MatchOptions {
            order: self.order,
            grid: self.grid,
            seed: self.seed,
            restarts: 2,
            ..MatchOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Point {
    pub h: f64,
    /// `min_Q ‖W(X̃ − DQ)‖∞`, which does not depend on the interval.
    pub mu: f64,
    /// Component of `{Δ : ‖R(Δ)‖ < 1/μ}` around zero, clipped to `(−h, h)`.
    pub robust_interval: (f64, f64),
    pub robust_length: f64,
    /// Largest symmetric half-width found feasible for the baseline.
    pub baseline_delta: f64,
    pub baseline_length: f64,
    /// Baseline objective at `baseline_delta` (≤ 1 when feasible).
    pub baseline_norm: f64,
    pub baseline_solves: usize,
}

/// One period of the batch-reactor comparison.
pub fn fig3_point(h: f64, opts: &Fig3Options) -> Result<Fig3Point> {
    let plant = ContinuousPlant::batch_reactor(h)?;
    let bundle = doubly_coprime(&plant)?;
    let w = offset_weight();
    let mu = solve(&weighted_problem(&bundle, &w)?, &opts.match_options())?.certified;
    let level = 1.0 / mu;
    let norm = |d: f64| offset_residual(&plant, d).map(|r| norm2(&r));
    let lo = level_edge(&norm, level, -h)?;
    let hi = level_edge(&norm, level, h)?;

    let (delta, bnorm, solves) = baseline_half_width(&plant, opts)?;
    Ok(Fig3Point {
        h,
        mu,
        robust_interval: (lo, hi),
        robust_length: hi - lo,
        baseline_delta: delta,
        baseline_length: 2.0 * delta,
        baseline_norm: bnorm,
        baseline_solves: solves,
    })
}

/// First offset between 0 and `limit` where `norm` reaches `level`, or
/// `limit` when it never does.
fn level_edge<F>(norm: &F, level: f64, limit: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let edge = limit * (1.0 - 1e-9);
    let mut inside = 0.0;
    for k in 1..=EDGE_SCAN {
        let d = edge * k as f64 / EDGE_SCAN as f64;
        if norm(d)? < level {
            inside = d;
            continue;
        }
        let mut outside = d;
        while (outside - inside).abs() > 1e-10 {
            let mid = 0.5 * (inside + outside);
            if norm(mid)? < level {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        return Ok(inside);
    }
    Ok(limit)
}

fn baseline_norm(plant: &ContinuousPlant, delta: f64, opts: &Fig3Options) -> Result<f64> {
    let interval = OffsetInterval::new(-delta, delta)?;
    match additive_uncertainty_design(plant, interval, &FeedbackGain::Lqr, &opts.match_options()) {
        Ok(rep) => Ok(rep.report.achieved),
        Err(Error::Infeasible(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Bracketing search on the symmetric half-width `δ` for
/// `min_Q ‖r(X̃ + DQ)D̃‖∞ = 1`, interpolating `log μ` linearly in `log δ`.
fn baseline_half_width(plant: &ContinuousPlant, opts: &Fig3Options) -> Result<(f64, f64, usize)> {
    let edge = plant.h * (1.0 - 1e-6);
    let mut feas: Option<(f64, f64)> = None;
    let mut infeas: Option<(f64, f64)> = None;
    let mut delta = 0.02f64.min(0.5 * plant.h);
    let mut solves = 0;
    while solves < opts.max_baseline_solves {
        let mu = baseline_norm(plant, delta, opts)?;
        solves += 1;
        if mu <= 1.0 {
            feas = Some((delta, mu));
        } else {
            infeas = Some((delta, mu));
        }
        delta = match (feas, infeas) {
            (Some((df, mf)), Some((di, mi))) => {
                if (di - df) / df < opts.rel_tol {
                    break;
                }
                let guess = if mi.is_finite() && mf > 0.0 {
                    let slope = (mi.ln() - mf.ln()) / (di.ln() - df.ln());
                    (df.ln() - mf.ln() / slope).exp()
                } else {
                    0.5 * (df + di)
                };
                let (a, b) = (df + 0.05 * (di - df), di - 0.05 * (di - df));
                guess.clamp(a, b)
            }
            (Some((df, mf)), None) => {
                if df >= edge {
                    break;
                }
                let step = if mf > 0.0 { (1.0 / mf).min(4.0) } else { 4.0 };
                (df * step * 1.001).min(edge)
            }
            (None, Some((di, mi))) => {
                if di < 1e-6 {
                    break;
                }
                di * (1.0 / mi).max(0.25)
            }
            (None, None) => unreachable!(),
        };
    }
    Ok(match feas {
        Some((d, m)) => (d, m, solves),
        None => (0.0, infeas.map_or(f64::INFINITY, |x| x.1), solves),
    })
}

/// Exact LTI offset length for one `(a, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig4Row {
    pub h: f64,
    pub length: f64,
    pub unclipped: f64,
    /// The `2h` sampling clip is the binding term.
    pub clipped: bool,
}

pub fn fig4_row(a: f64, h: f64) -> Result<Fig4Row> {
    if a == 0.0 {
        let l = a_zero_case(h)?;
        return Ok(Fig4Row { h, length: l, unclipped: f64::INFINITY, clipped: true });
    }
    let unclipped = lti_length_unclipped(a, h)?;
    Ok(Fig4Row {
        h,
        length: max_offset_length_lti(a, h)?,
        unclipped,
        clipped: 2.0 * h <= unclipped,
    })
}

pub fn lti_length_curve(a: f64, periods: &[f64]) -> Result<Vec<Fig4Row>> {
    periods.iter().map(|&h| fig4_row(a, h)).collect()
}

/// Offset lengths of the three scalar controller classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig6Row {
    pub a: f64,
    pub lti: f64,
    pub static_length: f64,
    /// Sufficient (lower) bound for 2-periodic static gains.
    pub periodic: f64,
}

pub fn fig6_row(a: f64, h: f64) -> Result<Fig6Row> {
    if a == 0.0 {
        let l = a_zero_case(h)?;
        return Ok(Fig6Row { a, lti: l, static_length: l, periodic: l });
    }
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("a = {a} must be nonnegative")));
    }
    let lambda = (a * h).exp();
    let length = |(lo, hi): (f64, f64)| hi - lo;
    Ok(Fig6Row {
        a,
        lti: max_offset_length_lti(a, h)?,
        static_length: length(static_bound(lambda)?.to_offsets(a, h)),
        periodic: length(two_periodic_bound(lambda)?.to_offsets(a, h)),
    })
}

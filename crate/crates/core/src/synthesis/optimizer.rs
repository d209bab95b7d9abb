//! Convex FIR model matching
//!
//! ```text
//! minimize_Q  max_ω σ_max( A(e^{jω}) + B(e^{jω}) Q(e^{jω}) C(e^{jω}) )
//! ```
//!
//! over real FIR `Q(z) = Σ qᵢ zⁱ`. Each restart runs L-BFGS on a spectral
//! log-sum-exp smoothing with increasing sharpness, then a level-adjusted
//! Polyak subgradient polish on the exact gridded maximum. The returned `Q` is re-evaluated with the
//! adaptive circle supremum, so the certified value never relies on the grid.

use std::f64::consts::PI;
use std::sync::Mutex;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT, SupportedConeT::PSDTriangleConeT,
};
use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::QParameter;
use crate::error::{Error, Result};
use crate::numerics::{sup_on_circle, CMat, Mat};

/// Affine data `(A, B, C)` at one frequency.
#[derive(Debug, Clone)]
pub struct MatchTerms {
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
}

type Evaluator<'a> = Box<dyn Fn(Complex64) -> MatchTerms + Sync + Send + 'a>;

/// A model-matching objective `‖A + B Q C‖∞`.
pub struct MatchProblem<'a> {
    eval: Evaluator<'a>,
    pub q_rows: usize,
    pub q_cols: usize,
}

impl<'a> MatchProblem<'a> {
    pub fn new<F>(q_rows: usize, q_cols: usize, eval: F) -> Self
    where
        F: Fn(Complex64) -> MatchTerms + Sync + Send + 'a,
    {
        Self {
            eval: Box::new(eval),
            q_rows,
            q_cols,
        }
    }

    pub fn terms(&self, z: Complex64) -> MatchTerms {
        (self.eval)(z)
    }

    /// `A + B Q C` at `z`.
    pub fn value(&self, q: &QParameter, z: Complex64) -> CMat {
        let t = self.terms(z);
        &t.a + &t.b * q.eval(z) * &t.c
    }

    /// Adaptive supremum over the circle.
    pub fn certify(&self, q: &QParameter, tol: f64) -> (f64, f64) {
        let est = sup_on_circle(|z| self.value(q, z), tol, true);
        (est.norm, est.omega)
    }
}

#[derive(Debug, Clone)]
pub struct MatchOptions {
    pub order: usize,
    pub grid: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub tol: f64,
    pub warm_start: Option<QParameter>,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            order: 20,
            grid: 256,
            restarts: 20,
            max_iter: 3000,
            seed: 0,
            tol: 1e-6,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    pub q: QParameter,
    /// Best objective on the optimization grid.
    pub grid_norm: f64,
    /// Adaptive supremum of the returned `Q`.
    pub certified: f64,
    pub omega: f64,
    pub iterations: usize,
}

struct GridPoint {
    a: CMat,
    b: CMat,
    c: CMat,
    powers: Vec<Complex64>,
}

struct Gridded {
    points: Vec<GridPoint>,
    rows: usize,
    cols: usize,
    order: usize,
}

impl Gridded {
    fn new(problem: &MatchProblem<'_>, order: usize, grid: usize) -> Self {
        let mut out = Self {
            points: Vec::with_capacity(grid),
            rows: problem.q_rows,
            cols: problem.q_cols,
            order,
        };
        for k in 0..grid {
            out.push(problem, PI * k as f64 / (grid - 1) as f64);
        }
        out
    }

    fn push(&mut self, problem: &MatchProblem<'_>, w: f64) {
        let z = Complex64::from_polar(1.0, w);
        let t = problem.terms(z);
        let mut powers = Vec::with_capacity(self.order + 1);
        let mut zi = Complex64::new(1.0, 0.0);
        for _ in 0..=self.order {
            powers.push(zi);
            zi *= z;
        }
        self.points.push(GridPoint {
            a: t.a,
            b: t.b,
            c: t.c,
            powers,
        });
    }

    fn dim(&self) -> usize {
        (self.order + 1) * self.rows * self.cols
    }

    fn q_at(&self, x: &DVector<f64>, p: &GridPoint) -> CMat {
        let block = self.rows * self.cols;
        let mut q = CMat::zeros(self.rows, self.cols);
        for (i, zi) in p.powers.iter().enumerate() {
            let off = i * block;
            for c in 0..self.cols {
                for r in 0..self.rows {
                    q[(r, c)] += zi * x[off + c * self.rows + r];
                }
            }
        }
        q
    }

    /// Objective and one subgradient.
    fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut best = (f64::NEG_INFINITY, 0usize, None);
        for (k, p) in self.points.iter().enumerate() {
            let m = &p.a + &p.b * self.q_at(x, p) * &p.c;
            let (s, u, v) = top_singular(&m);
            if s > best.0 {
                best = (s, k, Some((u, v)));
            }
        }
        let (f, k, vecs) = best;
        let mut g = DVector::zeros(self.dim());
        if let Some((u, v)) = vecs {
            let p = &self.points[k];
            let bu = p.b.adjoint() * u;
            let cv = &p.c * v;
            let block = self.rows * self.cols;
            for (i, zi) in p.powers.iter().enumerate() {
                for c in 0..self.cols {
                    for r in 0..self.rows {
                        g[i * block + c * self.rows + r] = (zi * bu[r].conj() * cv[c]).re;
                    }
                }
            }
        }
        (f, g)
    }

    /// Spectral log-sum-exp of the Hermitian dilations `[0 M; Mᴴ 0]` over
    /// the grid, a smooth convex majorant within `ln(N)/β` of the max.
    fn smooth(&self, x: &DVector<f64>, beta: f64) -> (f64, DVector<f64>) {
        let triples: Vec<(usize, Vec<(f64, DVector<Complex64>, DVector<Complex64>)>, usize)> = self
            .points
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let m = &p.a + &p.b * self.q_at(x, p) * &p.c;
                let (r, c) = m.shape();
                let svd = m.svd(true, true);
                let u = svd.u.expect("left vectors");
                let vt = svd.v_t.expect("right vectors");
                let list = (0..svd.singular_values.len())
                    .map(|i| (svd.singular_values[i], u.column(i).into_owned(), vt.row(i).adjoint()))
                    .collect();
                (k, list, r + c - 2 * r.min(c))
            })
            .collect();
        let top = triples
            .iter()
            .flat_map(|(_, l, _)| l.iter().map(|t| t.0))
            .fold(0.0f64, f64::max);
        let mut total = 0.0;
        for (_, list, zeros) in &triples {
            total += *zeros as f64 * (-beta * top).exp();
            for (s, _, _) in list {
                total += (beta * (s - top)).exp() + (beta * (-s - top)).exp();
            }
        }
        let f = top + total.ln() / beta;
        let mut g = DVector::zeros(self.dim());
        let block = self.rows * self.cols;
        for (k, list, _) in &triples {
            let p = &self.points[*k];
            for (s, u, v) in list {
                let w = ((beta * (s - top)).exp() - (beta * (-s - top)).exp()) / total;
                if w < 1e-16 {
                    continue;
                }
                let bu = p.b.adjoint() * u;
                let cv = &p.c * v;
                for (i, zi) in p.powers.iter().enumerate() {
                    for c in 0..self.cols {
                        for r in 0..self.rows {
                            g[i * block + c * self.rows + r] += w * (zi * bu[r].conj() * cv[c]).re;
                        }
                    }
                }
            }
        }
        (f, g)
    }

    fn to_q(&self, x: &DVector<f64>) -> QParameter {
        let block = self.rows * self.cols;
        let coeffs = (0..=self.order)
            .map(|i| Mat::from_column_slice(self.rows, self.cols, &x.as_slice()[i * block..(i + 1) * block]))
            .collect();
        QParameter { coeffs }
    }

    fn from_q(&self, q: &QParameter) -> DVector<f64> {
        let block = self.rows * self.cols;
        let mut x = DVector::zeros(self.dim());
        for (i, qi) in q.coeffs.iter().enumerate().take(self.order + 1) {
            x.rows_mut(i * block, block).copy_from_slice(qi.as_slice());
        }
        x
    }

    fn typical_scale(&self) -> f64 {
        let mut ratios: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                let den = crate::numerics::sigma_max(&p.b) * crate::numerics::sigma_max(&p.c);
                if den > 0.0 {
                    crate::numerics::sigma_max(&p.a) / den
                } else {
                    0.0
                }
            })
            .collect();
        ratios.sort_by(f64::total_cmp);
        let med = ratios[ratios.len() / 2];
        if med > 0.0 && med.is_finite() {
            med
        } else {
            1.0
        }
    }
}

/// Largest singular value with its left/right singular vectors.
pub(crate) fn top_singular(m: &CMat) -> (f64, DVector<Complex64>, DVector<Complex64>) {
    let (r, c) = m.shape();
    let zero = Complex64::new(0.0, 0.0);
    if r == 0 || c == 0 {
        return (0.0, DVector::from_element(r, zero), DVector::from_element(c, zero));
    }
    let (s, u, v) = if r <= c {
        let u = top_eigvec(&(m * m.adjoint()));
        let mv = m.adjoint() * &u;
        let s = mv.norm();
        (s, u, if s > 0.0 { mv / Complex64::new(s, 0.0) } else { unit(c) })
    } else {
        let v = top_eigvec(&(m.adjoint() * m));
        let mu = m * &v;
        let s = mu.norm();
        (s, if s > 0.0 { mu / Complex64::new(s, 0.0) } else { unit(r) }, v)
    };
    (s, u, v)
}

fn unit(n: usize) -> DVector<Complex64> {
    let mut e = DVector::from_element(n, Complex64::new(0.0, 0.0));
    e[0] = Complex64::new(1.0, 0.0);
    e
}

fn top_eigvec(g: &CMat) -> DVector<Complex64> {
    match g.nrows() {
        1 => unit(1),
        2 => {
            // closed form for a 2×2 Hermitian matrix
            let a = g[(0, 0)].re;
            let d = g[(1, 1)].re;
            let b = g[(0, 1)];
            let half = 0.5 * (a - d);
            let lam = 0.5 * (a + d) + (half * half + b.norm_sqr()).sqrt();
            let v = if b.norm() > 1e-300 {
                let x = DVector::from_vec(vec![b, Complex64::new(lam - a, 0.0)]);
                let n = x.norm();
                x / Complex64::new(n, 0.0)
            } else if a >= d {
                unit(2)
            } else {
                DVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
            };
            v
        }
        _ => {
            let eig = SymmetricEigen::new(g.clone());
            let k = eig.eigenvalues.imax();
            eig.eigenvectors.column(k).into_owned()
        }
    }
}

/// `svec` of the real embedding of `[0 M; Mᴴ 0]` (plus `t·I`), upper
/// triangle column by column with off-diagonals scaled by √2.
fn embed_svec(m: &CMat, t: f64, out: &mut Vec<f64>) {
    let (p, q) = m.shape();
    let s = p + q;
    let herm = |i: usize, j: usize| -> Complex64 {
        match (i < p, j < p) {
            (true, false) => m[(i, j - p)],
            (false, true) => m[(j, i - p)].conj(),
            _ if i == j => Complex64::new(t, 0.0),
            _ => Complex64::new(0.0, 0.0),
        }
    };
    let real = |i: usize, j: usize| -> f64 {
        match (i < s, j < s) {
            (true, true) => herm(i, j).re,
            (true, false) => -herm(i, j - s).im,
            (false, true) => herm(i - s, j).im,
            (false, false) => herm(i - s, j - s).re,
        }
    };
    out.clear();
    for j in 0..2 * s {
        for i in 0..=j {
            let v = real(i, j);
            out.push(if i == j { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
}

/// Epigraph SDP `min t` subject to `‖A + BQC‖ ≤ t` at every grid point.
fn sdp(grid: &Gridded) -> Option<(DVector<f64>, usize)> {
    let first = grid.points.first()?;
    let (p, q) = first.a.shape();
    let dim = 2 * (p + q);
    let len = dim * (dim + 1) / 2;
    let ncones = grid.points.len();
    let nvar = 1 + grid.dim();
    let mut b = Vec::with_capacity(ncones * len);
    let mut buf = Vec::with_capacity(len);
    for pt in &grid.points {
        embed_svec(&pt.a, 0.0, &mut buf);
        b.extend_from_slice(&buf);
    }
    let mut colptr = vec![0usize];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    let push_col = |entries: &mut dyn FnMut(usize, &mut Vec<f64>), rowval: &mut Vec<usize>, nzval: &mut Vec<f64>| {
        let mut buf = Vec::with_capacity(len);
        for k in 0..ncones {
            entries(k, &mut buf);
            for (r, &v) in buf.iter().enumerate() {
                if v != 0.0 {
                    rowval.push(k * len + r);
                    nzval.push(-v);
                }
            }
        }
    };
    let zero = CMat::zeros(p, q);
    push_col(&mut |_, buf| embed_svec(&zero, 1.0, buf), &mut rowval, &mut nzval);
    colptr.push(rowval.len());
    let block = grid.rows * grid.cols;
    for j in 0..grid.dim() {
        let (i, rc) = (j / block, j % block);
        let (c, r) = (rc / grid.rows, rc % grid.rows);
        push_col(
            &mut |k, buf| {
                let pt = &grid.points[k];
                let dm = pt.b.column(r) * pt.c.row(c) * pt.powers[i];
                embed_svec(&dm, 0.0, buf)
            },
            &mut rowval,
            &mut nzval,
        );
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(ncones * len, nvar, colptr, rowval, nzval);
    let pmat = CscMatrix::zeros((nvar, nvar));
    let mut cost = vec![0.0; nvar];
    cost[0] = 1.0;
    let cones: Vec<SupportedConeT<f64>> = (0..ncones).map(|_| PSDTriangleConeT(dim)).collect();
    let settings = DefaultSettingsBuilder::default().verbose(log::log_enabled!(log::Level::Trace)).max_iter(200).build().ok()?;
    let mut solver = DefaultSolver::new(&pmat, &cost, &a, &b, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        other => {
            log::warn!("SDP model matching ended with {other:?}");
            return None;
        }
    }
    let x = DVector::from_column_slice(&solver.solution.x[1..]);
    x.iter().all(|v| v.is_finite()).then_some((x, solver.info.iterations as usize))
}

struct Run {
    x: DVector<f64>,
    f: f64,
    iterations: usize,
}

type Memo = Mutex<Option<(Vec<f64>, f64, Vec<f64>)>>;

struct Smoothed<'g> {
    grid: &'g Gridded,
    beta: f64,
    memo: Memo,
}

impl Smoothed<'_> {
    fn both(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut memo = self.memo.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((mx, f, g)) = memo.as_ref() {
            if mx.as_slice() == x {
                return (*f, g.clone());
            }
        }
        let (f, g) = self.grid.smooth(&DVector::from_column_slice(x), self.beta);
        let g: Vec<f64> = g.data.into();
        *memo = Some((x.to_vec(), f, g.clone()));
        (f, g)
    }
}

impl CostFunction for Smoothed<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.both(x).0)
    }
}

impl Gradient for Smoothed<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.both(x).1)
    }
}

/// Cutting-plane rounds that add the certified worst frequency to the grid.
const REFINEMENTS: usize = 4;

/// Sharpness levels `β·f` for the continuation.
const SHARPNESS: [f64; 8] = [30.0, 100.0, 300.0, 1e3, 3e3, 1e4, 3e4, 1e5];
const STAGE_ITERS: u64 = 150;

fn lbfgs_stage(grid: &Gridded, x0: &DVector<f64>, beta: f64) -> Option<(DVector<f64>, u64)> {
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 8)
        .with_tolerance_grad(1e-12)
        .ok()?
        .with_tolerance_cost(1e-14)
        .ok()?;
    let res = Executor::new(Smoothed { grid, beta, memo: Mutex::new(None) }, solver)
        .configure(|st| st.param(x0.as_slice().to_vec()).max_iters(STAGE_ITERS))
        .run()
        .ok()?;
    let iters = res.state.get_iter();
    let x = res.state.get_best_param()?.clone();
    Some((DVector::from_vec(x), iters))
}

/// Smoothed continuation followed by a Polyak polish on the exact max.
fn descend(grid: &Gridded, x0: DVector<f64>, max_iter: usize, rel_tol: f64) -> Run {
    let f0 = grid.evaluate(&x0).0;
    let mut best = Run { x: x0, f: f0, iterations: 0 };
    let mut x = best.x.clone();
    for level in SHARPNESS {
        let beta = level / best.f.abs().max(1e-12);
        let Some((next, iters)) = lbfgs_stage(grid, &x, beta) else {
            break;
        };
        best.iterations += iters as usize;
        let f = grid.evaluate(&next).0;
        if f.is_finite() && f < best.f {
            best.f = f;
            best.x.copy_from(&next);
        }
        x = next;
    }
    let polished = polyak(grid, best.x.clone(), max_iter, rel_tol, 0.01);
    if polished.f < best.f {
        best.f = polished.f;
        best.x = polished.x;
    }
    best.iterations += polished.iterations;
    best
}

fn polyak(grid: &Gridded, x0: DVector<f64>, max_iter: usize, rel_tol: f64, delta0: f64) -> Run {
    let mut x = x0;
    let (mut f, mut g) = grid.evaluate(&x);
    let mut best = Run {
        x: x.clone(),
        f,
        iterations: 0,
    };
    let mut delta = delta0 * f.abs().max(1e-12);
    let mut level_start = f;
    let mut stall = 0usize;
    let patience = 40 + grid.dim() / 4;
    for it in 1..=max_iter {
        let gn = g.norm_squared();
        if gn == 0.0 || !f.is_finite() {
            break;
        }
        let target = best.f - delta;
        let step = (f - target) / gn;
        x.axpy(-step, &g, 1.0);
        let (nf, ng) = grid.evaluate(&x);
        f = nf;
        g = ng;
        best.iterations = it;
        if f < best.f {
            best.f = f;
            best.x.copy_from(&x);
        }
        if best.f <= level_start - 0.5 * delta {
            level_start = best.f;
            stall = 0;
        } else {
            stall += 1;
            if stall > patience {
                delta *= 0.5;
                stall = 0;
                level_start = best.f;
                x.copy_from(&best.x);
                let (bf, bg) = grid.evaluate(&x);
                f = bf;
                g = bg;
            }
        }
        if delta <= rel_tol * best.f.abs().max(1e-300) {
            break;
        }
    }
    best
}

/// Minimizes the gridded objective and certifies the minimizer.
pub fn solve(problem: &MatchProblem<'_>, opts: &MatchOptions) -> Result<MatchResult> {
    if opts.grid < 2 {
        return Err(Error::InvalidParameter("frequency grid needs at least 2 points".into()));
    }
    let mut grid = Gridded::new(problem, opts.order, opts.grid);
    let mut best: Option<(QParameter, f64, f64, f64, usize)> = None;
    let mut sdp_iters = 0;
    for _ in 0..REFINEMENTS {
        let Some((x, iters)) = sdp(&grid) else {
            break;
        };
        sdp_iters += iters;
        let f = grid.evaluate(&x).0;
        let q = grid.to_q(&x);
        let (cert, omega) = problem.certify(&q, opts.tol);
        if best.as_ref().map_or(true, |b| cert < b.2) {
            best = Some((q, f, cert, omega, sdp_iters));
        }
        if cert <= f * (1.0 + 1e-3) {
            break;
        }
        // cut at the frequency the grid missed
        grid.push(problem, omega.rem_euclid(2.0 * PI).min(2.0 * PI - omega.rem_euclid(2.0 * PI)));
    }
    if let Some((q, grid_norm, certified, omega, iterations)) = best {
        return Ok(guard_warm_start(problem, opts, &grid, MatchResult { q, grid_norm, certified, omega, iterations }));
    }
    let scale = 0.5 * grid.typical_scale() / ((opts.order + 1) as f64).sqrt();
    let warm = opts.warm_start.as_ref().map(|q| {
        let mut q = q.clone();
        q.coeffs.truncate(opts.order + 1);
        grid.from_q(&q.padded(opts.order))
    });
    let starts: Vec<DVector<f64>> = (0..opts.restarts.max(1))
        .map(|r| {
            if r == 0 {
                return warm.clone().unwrap_or_else(|| DVector::zeros(grid.dim()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
            let base = warm.clone().unwrap_or_else(|| DVector::zeros(grid.dim()));
            base + DVector::from_fn(grid.dim(), |_, _| scale * rng.gen_range(-1.0..1.0))
        })
        .collect();
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|x0| descend(&grid, x0, opts.max_iter, 1e-7))
        .collect();
    // deterministic tie-break by restart index
    let mut best_idx = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.f < runs[best_idx].f {
            best_idx = i;
        }
    }
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let winner = &runs[best_idx];
    let q = grid.to_q(&winner.x);
    let (certified, omega) = problem.certify(&q, opts.tol);
    let res = MatchResult {
        q,
        grid_norm: winner.f,
        certified,
        omega,
        iterations,
    };
    Ok(guard_warm_start(problem, opts, &grid, res))
}

/// A warm start that certifies lower than the new solution is kept.
fn guard_warm_start(problem: &MatchProblem<'_>, opts: &MatchOptions, grid: &Gridded, mut res: MatchResult) -> MatchResult {
    if let Some(w) = &opts.warm_start {
        let w = w.padded(opts.order);
        let (wc, wo) = problem.certify(&w, opts.tol);
        if wc < res.certified {
            res.grid_norm = grid.evaluate(&grid.from_q(&w)).0;
            res.certified = wc;
            res.omega = wo;
            res.q = w;
        }
    }
    res
}

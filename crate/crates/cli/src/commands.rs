//! Command implementations. Each returns structured data; [`run`] renders
//! it and writes artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clockoff::analysis::{
    fig3_point, fig4_row, fig6_row, interval_search, simulate as simulate_loop, sweep_with_tol, Disturbances,
    Fig3Options, SimulationConfig, SweepReport, Trajectory, FIG3_PERIODS,
};
use clockoff::discretization::{check_assumptions, discretize as discretize_plant, OffsetInterval};
use clockoff::factorization::{doubly_coprime, offset_weight, FeedbackGain};
use clockoff::scalar_exact::{
    additive_uncertainty_scalar_bound, lti_length_unclipped, max_offset_length_lti, small_gain_scalar_bound,
    static_bound, theta_of_delta, theta_range, two_periodic_bound, ThetaInterval,
};
use clockoff::synthesis::{
    assemble_controller, synthesize as synthesize_plant, weighted_problem, MatchOptions, QParameter,
};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use crate::io::{json_num, num, rows_of, write_csv, write_json, ControllerFile, ControllerMeta, PlantFile};
use crate::{
    Cli, CliError, Command, DiscretizeArgs, Figure, FigureArgs, ScalarBoundsArgs, SimulateArgs, SweepArgs,
    SynthesizeArgs,
};

fn config<T: Serialize>(command: &str, args: &T) -> Value {
    let mut v = serde_json::to_value(args).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut v {
        map.insert("command".into(), Value::String(command.into()));
    }
    v
}

fn open(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Discretize(a) => {
            let out = discretize(a)?;
            emit_json(a.out.as_deref(), &out, stdout)
        }
        Command::Synthesize(a) => {
            let out = synthesize(a)?;
            if let (Some(path), Some(ctrl)) = (&a.out, &out.controller) {
                ctrl.save(path)?;
            }
            emit_json(None, &out.report, stdout)?;
            if out.report.feasible {
                Ok(())
            } else if out.report.synthesis_feasible {
                Err(CliError::Runtime("certificate passed but the offset sweep found instability".into()))
            } else {
                Err(CliError::Infeasible(format!(
                    "achieved {} ≥ γ = {}",
                    out.report.achieved_norm.map_or("∞".into(), num),
                    out.report.gamma.map_or("∞".into(), num)
                )))
            }
        }
        Command::ScalarBounds(a) => {
            let table = scalar_bounds(a)?;
            if let Some(path) = &a.out {
                let (h, rows) = table.csv_rows();
                write_csv(open(path)?, &config("scalar-bounds", a), &h, rows)?;
            }
            write!(stdout, "{table}").map_err(io_err)
        }
        Command::Sweep(a) => {
            let rep = sweep(a)?;
            for (lo, hi) in &rep.stable_runs {
                log::info!("stable run [{}, {}]", num(*lo), num(*hi));
            }
            let header = ["delta", "spectral_radius", "stable"].map(String::from);
            let rows = rep
                .deltas
                .iter()
                .zip(&rep.radii)
                .map(|(d, r)| vec![num(*d), num(*r), clockoff::analysis::is_stable_radius(*r).to_string()]);
            emit_csv(a.out.as_deref(), &config("sweep", a), &header, rows, stdout)
        }
        Command::Simulate(a) => {
            let tr = simulate(a)?;
            let (header, rows) = trajectory_rows(&tr);
            emit_csv(a.out.as_deref(), &config("simulate", a), &header, rows, stdout)
        }
        Command::Figure(a) => {
            let data = figure(a)?;
            let rows = data.rows.iter().map(|r| r.iter().map(|x| num(*x)).collect());
            emit_csv(a.out.as_deref(), &data.config, &data.header, rows, stdout)
        }
    }
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(stdout, "{text}").map_err(io_err)
        }
    }
}

fn emit_csv(
    path: Option<&Path>,
    config: &Value,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    match path {
        Some(p) => write_csv(open(p)?, config, header, rows),
        None => write_csv(stdout, config, header, rows),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscretizeOutput {
    pub config: Value,
    pub label: Option<String>,
    pub h: f64,
    pub delta: f64,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h_out: Vec<Vec<f64>>,
}

pub fn discretize(args: &DiscretizeArgs) -> Result<DiscretizeOutput, CliError> {
    let file = PlantFile::load(&args.plant)?;
    let plant = file.plant()?;
    let sys = discretize_plant(&plant, args.delta)?;
    Ok(DiscretizeOutput {
        config: config("discretize", args),
        label: file.label,
        h: plant.h,
        delta: args.delta,
        f: rows_of(&sys.f),
        g: rows_of(&sys.g),
        h_out: rows_of(&sys.h),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub points: usize,
    pub all_stable: bool,
    pub max_radius: f64,
    pub stable_runs: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisSummary {
    pub config: Value,
    pub label: Option<String>,
    pub h: f64,
    pub interval: [f64; 2],
    /// `1/max‖R(Δ)‖`; null when unbounded.
    pub gamma: Option<f64>,
    pub achieved_norm: Option<f64>,
    pub grid_norm: Option<f64>,
    pub q_order: usize,
    pub iterations: usize,
    pub controller_states: Option<usize>,
    /// Certified norm below γ.
    pub synthesis_feasible: bool,
    pub sweep: Option<SweepSummary>,
    /// Maximal stabilized interval around zero found by outward search.
    pub verified_interval: Option<[f64; 2]>,
    /// Certificate and sweep both pass.
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub report: SynthesisSummary,
    pub controller: Option<ControllerFile>,
}

pub fn synthesize(args: &SynthesizeArgs) -> Result<SynthesisOutcome, CliError> {
    let file = PlantFile::load(&args.plant)?;
    let plant = file.plant()?;
    let assumptions = check_assumptions(&plant)?;
    if !assumptions.holds() {
        return Err(CliError::Input(format!("standing assumptions fail: {assumptions:?}")));
    }
    let (lo, hi) = args.interval;
    let interval = OffsetInterval::within(lo, hi, plant.h)?;
    let opts = MatchOptions {
        order: args.q_order,
        grid: args.grid,
        tol: args.tol,
        seed: args.seed,
        ..MatchOptions::default()
    };
    log::info!("synthesize {:?} with {opts:?}", args.interval);

    let (gamma, achieved, grid_norm, q_order, iterations, controller, certified) = if interval.is_zero() {
        let bundle = doubly_coprime(&plant)?;
        let q = QParameter::zero(bundle.inputs(), bundle.outputs(), 0);
        let w = offset_weight();
        let (norm, _) = weighted_problem(&bundle, &w)?.certify(&q, args.tol);
        let ctrl = assemble_controller(&bundle, &q)?;
        (f64::INFINITY, norm, norm, 0, 0, Some(ctrl), true)
    } else {
        let (_, rep) = synthesize_plant(&plant, interval, &FeedbackGain::Lqr, &opts)?;
        (
            rep.gamma,
            rep.achieved,
            rep.grid_norm,
            rep.q_order,
            rep.iterations,
            rep.controller,
            rep.feasible,
        )
    };

    let (sweep, verified) = match (&controller, certified) {
        (Some(c), true) => {
            let rep = sweep_with_tol(&plant, c, (lo, hi), args.sweep_points.max(2), 1e-6)?;
            let verified = interval_search(&plant, c).ok().map(|(a, b)| [a, b]);
            (Some(summary(&rep)), verified)
        }
        _ => (None, None),
    };
    let feasible = certified && sweep.as_ref().is_some_and(|s| s.all_stable);
    let cfg = config("synthesize", args);
    let report = SynthesisSummary {
        config: cfg.clone(),
        label: file.label.clone(),
        h: plant.h,
        interval: [lo, hi],
        gamma: json_num(gamma),
        achieved_norm: json_num(achieved),
        grid_norm: json_num(grid_norm),
        q_order,
        iterations,
        controller_states: controller.as_ref().map(|c| c.states()),
        synthesis_feasible: certified,
        sweep,
        verified_interval: verified,
        feasible,
    };
    let controller = controller.map(|c| {
        ControllerFile::new(
            &c,
            ControllerMeta {
                gamma: json_num(gamma),
                norm: json_num(achieved),
                interval: [lo, hi],
                seed: args.seed,
                config: Some(cfg),
            },
        )
    });
    Ok(SynthesisOutcome { report, controller })
}

fn summary(rep: &SweepReport) -> SweepSummary {
    SweepSummary {
        points: rep.deltas.len(),
        all_stable: rep.all_stable(),
        max_radius: rep.max_radius(),
        stable_runs: rep.stable_runs.iter().map(|&(a, b)| [a, b]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub name: &'static str,
    pub exact: bool,
    pub theta: Option<[f64; 2]>,
    pub delta: [f64; 2],
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsTable {
    pub a: f64,
    pub h: f64,
    pub lambda: f64,
    pub rows: Vec<BoundRow>,
}

impl BoundsTable {
    pub fn row(&self, name: &str) -> Option<&BoundRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    fn csv_rows(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = ["bound", "exact", "theta_lo", "theta_hi", "delta_lo", "delta_hi", "length"]
            .map(String::from)
            .to_vec();
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.name.to_string(),
                    r.exact.to_string(),
                    opt(r.theta.map(|t| t[0])),
                    opt(r.theta.map(|t| t[1])),
                    num(r.delta[0]),
                    num(r.delta[1]),
                    num(r.length),
                ]
            })
            .collect();
        (header, rows)
    }
}

impl std::fmt::Display for BoundsTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "first-order plant a = {}, h = {}, λ = e^(ah) = {}; all intervals open",
            num(self.a),
            num(self.h),
            num(self.lambda)
        )?;
        writeln!(f, "{:<22} {:<36} {:<36} {}", "bound", "θ interval", "Δ interval", "Δ length")?;
        for r in &self.rows {
            let theta = r
                .theta
                .map_or("-".into(), |t| format!("({}, {})", num(t[0]), num(t[1])));
            let name = format!("{}{}", r.name, if r.exact { " (exact)" } else { "" });
            writeln!(
                f,
                "{:<22} {:<36} {:<36} {}",
                name,
                theta,
                format!("({}, {})", num(r.delta[0]), num(r.delta[1])),
                num(r.length)
            )?;
        }
        Ok(())
    }
}

pub fn scalar_bounds(args: &ScalarBoundsArgs) -> Result<BoundsTable, CliError> {
    let (a, h) = (args.a, args.h);
    if !(h > 0.0 && h.is_finite()) {
        return Err(CliError::Input(format!("h = {h} must be positive")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(CliError::Input(format!("a = {a} must be nonnegative")));
    }
    let names = [("lti", true), ("static", true), ("two-periodic", false), ("small-gain", false), ("additive", false)];
    if a == 0.0 {
        let rows = names
            .iter()
            .map(|&(name, exact)| BoundRow { name, exact, theta: None, delta: [-h, h], length: 2.0 * h })
            .collect();
        return Ok(BoundsTable { a, h, lambda: 1.0, rows });
    }
    let lambda = (a * h).exp();
    let from_theta = |name: &'static str, exact: bool, t: ThetaInterval| {
        let (lo, hi) = t.to_offsets(a, h);
        BoundRow { name, exact, theta: Some([t.lo, t.hi]), delta: [lo, hi], length: hi - lo }
    };
    let lti = if 2.0 * h <= lti_length_unclipped(a, h)? {
        let (lo, hi) = theta_range(lambda);
        BoundRow { name: "lti", exact: true, theta: Some([lo, hi]), delta: [-h, h], length: 2.0 * h }
    } else {
        // the exact condition depends only on the offset length, so any
        // placement works; report the centred one
        let half = 0.5 * max_offset_length_lti(a, h)?;
        let theta = [theta_of_delta(a, half), theta_of_delta(a, -half)];
        BoundRow { name: "lti", exact: true, theta: Some(theta), delta: [-half, half], length: 2.0 * half }
    };
    Ok(BoundsTable {
        a,
        h,
        lambda,
        rows: vec![
            lti,
            from_theta("static", true, static_bound(lambda)?),
            from_theta("two-periodic", false, two_periodic_bound(lambda)?),
            from_theta("small-gain", false, small_gain_scalar_bound(lambda)?),
            from_theta("additive", false, ThetaInterval::symmetric(additive_uncertainty_scalar_bound(lambda)?)),
        ],
    })
}

pub fn sweep(args: &SweepArgs) -> Result<SweepReport, CliError> {
    let plant = PlantFile::load(&args.plant)?.plant()?;
    let ctrl = ControllerFile::load(&args.controller)?.system()?;
    if ctrl.inputs() != plant.states() || ctrl.outputs() != plant.inputs() {
        return Err(CliError::Input(format!(
            "controller is {}x{}, plant needs {}x{}",
            ctrl.outputs(),
            ctrl.inputs(),
            plant.inputs(),
            plant.states()
        )));
    }
    let edge = plant.h * (1.0 - 1e-6);
    let range = args.interval.unwrap_or((-edge, edge));
    Ok(sweep_with_tol(&plant, &ctrl, range, args.grid, args.tol)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<Trajectory, CliError> {
    let file = PlantFile::load(&args.plant)?;
    let plant = file.plant()?;
    let ctrl = ControllerFile::load(&args.controller)?.system()?;
    let n = plant.states();
    let vec_or = |v: &Option<Vec<f64>>, fill: f64, name: &str| -> Result<DVector<f64>, CliError> {
        match v {
            Some(v) if v.len() == n => Ok(DVector::from_vec(v.clone())),
            Some(v) => Err(CliError::Input(format!("{name} has {} entries, plant has {n} states", v.len()))),
            None => Ok(DVector::from_element(n, fill)),
        }
    };
    let x0 = vec_or(&args.x0, 1.0, "x0")?;
    let xhat0 = vec_or(&args.xhat0, 0.0, "xhat0")?;
    let mut cfg = SimulationConfig::new(args.delta, args.steps, x0, xhat0, DVector::zeros(ctrl.states()));
    cfg.sigma = args.sigma;
    cfg.intersample = args.grid;
    match args.disturbance {
        None => Ok(simulate_loop(&plant, &ctrl, &cfg, None)?),
        Some(amp) => {
            let (c, l) = file
                .observer()?
                .ok_or_else(|| CliError::Input("--disturbance needs C and L in the plant file".into()))?;
            let p = c.nrows();
            let d = move |t: f64| DVector::from_element(n, amp * t.sin());
            let noise = move |t: f64| DVector::from_element(p, amp * t.cos());
            let w = move |k: usize| DVector::from_element(n, if k % 2 == 0 { amp } else { -amp });
            let sig = Disturbances { c, l, d: &d, noise: &noise, w: &w, e0: DVector::zeros(n) };
            Ok(simulate_loop(&plant, &ctrl, &cfg, Some(&sig))?)
        }
    }
}

pub fn trajectory_rows(tr: &Trajectory) -> (Vec<String>, Vec<Vec<String>>) {
    let width = |v: &[DVector<f64>]| v.first().map_or(0, |x| x.len());
    let (n, nc, m) = (width(&tr.x), width(&tr.zeta), width(&tr.u));
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("xhat_{i}")));
    header.extend((1..=nc).map(|i| format!("zeta_{i}")));
    header.extend((1..=m).map(|i| format!("u_{i}")));
    let rows = (0..tr.len())
        .map(|r| {
            std::iter::once(tr.times[r])
                .chain(tr.x[r].iter().copied())
                .chain(tr.xhat[r].iter().copied())
                .chain(tr.zeta[r].iter().copied())
                .chain(tr.u[r].iter().copied())
                .map(num)
                .collect()
        })
        .collect();
    (header, rows)
}

#[derive(Debug, Clone)]
pub struct FigureData {
    pub config: Value,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FigureData {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub const FIG4_POINTS: usize = 3000;
pub const FIG4_MAX_PERIOD: f64 = 3.0;
pub const FIG6_POINTS: usize = 101;
pub const FIG6_MAX_POLE: f64 = 5.0;

pub fn figure(args: &FigureArgs) -> Result<FigureData, CliError> {
    let header = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    match args.figure {
        Figure::Fig4 => {
            let points = args.grid.unwrap_or(FIG4_POINTS).max(2);
            let rows = (1..=points)
                .map(|k| {
                    let h = FIG4_MAX_PERIOD * k as f64 / points as f64;
                    let r = fig4_row(1.0, h)?;
                    Ok(vec![h, r.length, r.unclipped, if r.clipped { 1.0 } else { 0.0 }])
                })
                .collect::<Result<_, clockoff::Error>>()?;
            Ok(FigureData {
                config: json!({"command": "figure", "figure": "fig4", "a": 1.0, "grid": points,
                               "h_max": FIG4_MAX_PERIOD, "out": args.out}),
                header: header(&["h", "lti_length", "unclipped_length", "clip_binds"]),
                rows,
            })
        }
        Figure::Fig6 => {
            let points = args.grid.unwrap_or(FIG6_POINTS).max(2);
            let rows = (0..points)
                .map(|k| {
                    let a = FIG6_MAX_POLE * k as f64 / (points - 1) as f64;
                    let r = fig6_row(a, 1.0)?;
                    Ok(vec![a, r.lti, r.static_length, r.periodic])
                })
                .collect::<Result<_, clockoff::Error>>()?;
            Ok(FigureData {
                config: json!({"command": "figure", "figure": "fig6", "h": 1.0, "grid": points,
                               "a_max": FIG6_MAX_POLE, "out": args.out}),
                header: header(&["a", "lti", "static", "two_periodic"]),
                rows,
            })
        }
        Figure::Fig3 => {
            let defaults = Fig3Options::default();
            let opts = Fig3Options {
                order: args.q_order.unwrap_or(defaults.order),
                grid: args.grid.unwrap_or(defaults.grid),
                seed: args.seed,
                rel_tol: args.tol.unwrap_or(defaults.rel_tol),
                ..defaults
            };
            let mut rows = Vec::with_capacity(FIG3_PERIODS.len());
            for &h in &FIG3_PERIODS {
                let p = fig3_point(h, &opts)?;
                log::info!("fig3 h = {h}: robust {} baseline {}", p.robust_length, p.baseline_length);
                rows.push(vec![
                    h,
                    p.mu,
                    p.robust_interval.0,
                    p.robust_interval.1,
                    p.robust_length,
                    p.baseline_delta,
                    p.baseline_length,
                    p.baseline_norm,
                ]);
            }
            Ok(FigureData {
                config: json!({"command": "figure", "figure": "fig3", "plant": "batch_reactor",
                               "q_order": opts.order, "grid": opts.grid, "seed": opts.seed,
                               "tol": opts.rel_tol, "max_baseline_solves": opts.max_baseline_solves,
                               "out": args.out}),
                header: header(&[
                    "h",
                    "mu",
                    "robust_lo",
                    "robust_hi",
                    "robust_length",
                    "baseline_half_width",
                    "baseline_length",
                    "baseline_norm",
                ]),
                rows,
            })
        }
    }
}

/// Batch reactor plant file at period `h`.
pub fn batch_reactor_file(h: f64) -> Result<PlantFile, CliError> {
    let plant = clockoff::discretization::ContinuousPlant::batch_reactor(h)?;
    Ok(PlantFile::from_plant(&plant, Some("batch reactor")))
}

/// Identity-weight LQR static controller, as a controller file.
pub fn lqr_controller_file(plant: &clockoff::discretization::ContinuousPlant) -> Result<ControllerFile, CliError> {
    let k = clockoff::synthesis::lqr_baseline(plant)?;
    Ok(ControllerFile::new(
        &k,
        ControllerMeta { gamma: None, norm: None, interval: [0.0, 0.0], seed: 0, config: None },
    ))
}

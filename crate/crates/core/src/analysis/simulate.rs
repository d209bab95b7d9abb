//! Exact sampled propagation of the plant–estimator–controller loop with
//! intersample reconstruction.

use nalgebra::DVector;

use crate::discretization::{discretize, ContinuousPlant, DisturbanceModel, Signal, QUADRATURE_NODES};
use crate::error::{Error, Result};
use crate::numerics::linalg::integrate_vec;
use crate::numerics::{exp_integral, expm, norm2, DiscreteSystem, Mat};

/// Sub-points per ZOH interval.
pub const DEFAULT_INTERSAMPLE: usize = 20;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub delta: f64,
    pub steps: usize,
    /// Initial `ξ₀ = [x₀ − x̂₀; x̂₀]`.
    pub xi0: DVector<f64>,
    pub zeta0: DVector<f64>,
    /// True sampling position `s_k − t_k`; the middle of the admissible
    /// window when absent.
    pub sigma: Option<f64>,
    pub intersample: usize,
}

impl SimulationConfig {
    pub fn new(delta: f64, steps: usize, x0: DVector<f64>, xhat0: DVector<f64>, zeta0: DVector<f64>) -> Self {
        let mut xi0 = DVector::zeros(2 * x0.len());
        xi0.rows_mut(0, x0.len()).copy_from(&(&x0 - &xhat0));
        xi0.rows_mut(x0.len(), x0.len()).copy_from(&xhat0);
        Self {
            delta,
            steps,
            xi0,
            zeta0,
            sigma: None,
            intersample: DEFAULT_INTERSAMPLE,
        }
    }
}

/// Exogenous signals for output feedback through an observer with gain `L`.
pub struct Disturbances<'a> {
    pub c: Mat,
    pub l: Mat,
    /// Process disturbance `d(t)`.
    pub d: Signal<'a>,
    /// Measurement noise `n(t)`.
    pub noise: Signal<'a>,
    /// Quantization noise on the transmitted estimate at step `k`.
    pub w: &'a dyn Fn(usize) -> DVector<f64>,
    /// Initial observer error.
    pub e0: DVector<f64>,
}

/// Rows at `t_k + jh/intersample`; `zeta` and `u` hold the values applied
/// over the current interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub xhat: Vec<DVector<f64>>,
    pub zeta: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// Row index of each update instant `t_k`.
    pub samples: Vec<usize>,
    /// `ξ_k` at the update instants.
    pub xi: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_signal(v: &DVector<f64>, dim: usize, what: &'static str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::Dimension(format!("{what} returned {} entries, expected {dim}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Runs `steps` update intervals. Samples at `t_k` follow `Σ_d` (or `Σ_d′`
/// with disturbances) exactly; between them `x` follows the continuous
/// dynamics and `x̂` the estimator, which resets at `ŝ_k = s_k + Δ`.
pub fn simulate(
    plant: &ContinuousPlant,
    controller: &DiscreteSystem,
    cfg: &SimulationConfig,
    signals: Option<&Disturbances<'_>>,
) -> Result<Trajectory> {
    let (n, m) = (plant.states(), plant.inputs());
    let h = plant.h;
    plant.check_offset(cfg.delta)?;
    if controller.inputs() != n || controller.outputs() != m {
        return Err(Error::Dimension(format!(
            "controller is {}x{}, plant needs {m}x{n}",
            controller.outputs(),
            controller.inputs()
        )));
    }
    if cfg.xi0.len() != 2 * n || cfg.zeta0.len() != controller.states() {
        return Err(Error::Dimension("initial state sizes do not match plant/controller".into()));
    }
    if cfg.intersample == 0 {
        return Err(Error::InvalidParameter("intersample resolution must be positive".into()));
    }
    let sd = discretize(plant, cfg.delta)?;
    let window = ((-cfg.delta).max(0.0), (h - cfg.delta).min(h));
    let sigma = cfg.sigma.unwrap_or(0.5 * (window.0 + window.1));
    if !(sigma >= window.0 && sigma < window.1) {
        return Err(Error::InvalidParameter(format!(
            "sampling position {sigma} outside [{}, {})",
            window.0, window.1
        )));
    }
    let reset = sigma + cfg.delta;
    let model = match signals {
        Some(s) => Some(DisturbanceModel::new(plant, cfg.delta, s.c.clone(), s.l.clone())?),
        None => None,
    };

    let taus: Vec<f64> = (0..cfg.intersample).map(|j| h * j as f64 / cfg.intersample as f64).collect();
    let forward: Vec<(Mat, Mat)> = taus
        .iter()
        .map(|&t| Ok((expm(&plant.a, t)?, exp_integral(&plant.a, &plant.b, t)?)))
        .collect::<Result<_>>()?;
    let backward: Vec<(Mat, Mat)> = taus
        .iter()
        .map(|&t| Ok((expm(&plant.a, -(h - t))?, exp_integral(&plant.a, &plant.b, h - t)?)))
        .collect::<Result<_>>()?;

    let mut traj = Trajectory {
        times: Vec::new(),
        x: Vec::new(),
        xhat: Vec::new(),
        zeta: Vec::new(),
        u: Vec::new(),
        samples: Vec::new(),
        xi: Vec::new(),
    };
    let mut xi = cfg.xi0.clone();
    let mut zeta = cfg.zeta0.clone();
    let mut e = signals.map(|s| s.e0.clone());
    let control = |xi: &DVector<f64>, zeta: &DVector<f64>| -> DVector<f64> {
        let y = xi.rows(n, n).into_owned();
        -(&controller.h * zeta + &controller.d * &y)
    };

    for k in 0..cfg.steps {
        let t_k = k as f64 * h;
        let xhat_k = xi.rows(n, n).into_owned();
        let x_k = xi.rows(0, n) + &xhat_k;
        let u_k = control(&xi, &zeta);
        let zeta_next = &controller.f * &zeta + &controller.g * &xhat_k;
        let mut xi_next = &sd.f * &xi + &sd.g * &u_k;
        if let (Some(s), Some(model), Some(e_k)) = (signals, model.as_ref(), e.as_mut()) {
            check_signal(&(s.d)(t_k), n, "d")?;
            check_signal(&(s.noise)(t_k), s.c.nrows(), "n")?;
            let w_k = (s.w)(k);
            check_signal(&w_k, n, "w")?;
            let step = model.step(t_k, sigma, e_k, &w_k, s.d, s.noise)?;
            xi_next += &step.d_k;
            *e_k = step.e_next;
        }
        let xhat_next = xi_next.rows(n, n).into_owned();

        traj.samples.push(traj.times.len());
        traj.xi.push(xi.clone());
        for (j, &tau) in taus.iter().enumerate() {
            let mut x = &forward[j].0 * &x_k + &forward[j].1 * &u_k;
            if let Some(s) = signals {
                if tau > 0.0 {
                    x += integrate_vec(0.0, tau, n, QUADRATURE_NODES, |r| {
                        expm(&plant.a, tau - r).map(|e| e * (s.d)(t_k + r)).unwrap_or_else(|_| DVector::zeros(n))
                    });
                }
            }
            let xhat = if tau < reset {
                &forward[j].0 * &xhat_k + &forward[j].1 * &u_k
            } else {
                &backward[j].0 * (&xhat_next - &backward[j].1 * &u_k)
            };
            if x.iter().chain(xhat.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("trajectory"));
            }
            traj.times.push(t_k + tau);
            traj.x.push(x);
            traj.xhat.push(xhat);
            traj.zeta.push(zeta.clone());
            traj.u.push(u_k.clone());
        }
        xi = xi_next;
        zeta = zeta_next;
    }
    let t_n = cfg.steps as f64 * h;
    let xhat = xi.rows(n, n).into_owned();
    traj.samples.push(traj.times.len());
    traj.times.push(t_n);
    traj.x.push(xi.rows(0, n) + &xhat);
    traj.xhat.push(xhat);
    traj.u.push(control(&xi, &zeta));
    traj.zeta.push(zeta);
    traj.xi.push(xi);
    Ok(traj)
}

/// First update index after which `‖ξ_k‖ ≤ ratio·‖ξ₀‖` for the rest of the run.
pub fn decay_horizon(traj: &Trajectory, ratio: f64) -> Option<usize> {
    let x0 = traj.xi.first()?.norm();
    let limit = ratio * x0;
    let last_bad = traj.xi.iter().rposition(|xi| xi.norm() > limit);
    match last_bad {
        None => Some(0),
        Some(i) if i + 1 < traj.xi.len() => Some(i + 1),
        _ => None,
    }
}

/// `sup_k ‖x_k‖ ≤ sup_j ‖A_cl^j‖·‖x₀‖ + Σ_j ‖A_cl^j‖·D` for `‖d_k‖ ≤ D`.
pub fn iss_bound(acl: &Mat, x0_norm: f64, d_bound: f64) -> Result<f64> {
    let n = acl.nrows();
    let mut power = Mat::identity(n, n);
    let (mut peak, mut sum) = (0.0f64, 0.0f64);
    for _ in 0..1_000_000 {
        let s = norm2(&power);
        if !s.is_finite() {
            break;
        }
        peak = peak.max(s);
        sum += s;
        if s < 1e-15 * peak {
            return Ok(peak * x0_norm + sum * d_bound);
        }
        power = acl * power;
    }
    Err(Error::Unstable(crate::numerics::spectral_radius(acl)?))
}

/// Bound on `max_{t ∈ [t_k, t_{k+1}]} ‖x(t)‖` from `x(t_k)` and `u_k`:
/// `e^{‖A‖h}‖x_k‖ + (∫₀^h e^{‖A‖t} dt)‖B‖‖u_k‖`.
pub fn intersample_bound(plant: &ContinuousPlant, x_norm: f64, u_norm: f64) -> f64 {
    let a = norm2(&plant.a);
    let h = plant.h;
    let integral = if a < 1e-12 { h } else { (a * h).exp_m1() / a };
    (a * h).exp() * x_norm + integral * norm2(&plant.b) * u_norm
}

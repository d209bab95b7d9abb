//! Square-root balanced truncation. Unstable controllers are first split
//! into stable and antistable parts; only the stable part is truncated.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::numerics::system::stack_cols;
use crate::numerics::{spectral_radius, stein, sup_on_circle, DiscreteSystem, Mat};

#[derive(Debug, Clone)]
pub struct ReductionReport {
    pub reduced: DiscreteSystem,
    /// Hankel singular values of the stable part, non-increasing.
    pub hankel: Vec<f64>,
    /// `sup_ω ‖C_r − C‖ / sup_ω ‖C‖` on the unit circle.
    pub relative_error: f64,
    /// Whether a stable/antistable split was needed.
    pub split: bool,
    pub unstable_states: usize,
}

/// Reduces `sys` to `order` states.
pub fn balanced_truncate(sys: &DiscreteSystem, order: usize) -> Result<ReductionReport> {
    let n = sys.states();
    if order >= n {
        log::warn!("requested order {order} is not below the current order {n}");
        return Ok(ReductionReport {
            reduced: sys.clone(),
            hankel: Vec::new(),
            relative_error: 0.0,
            split: false,
            unstable_states: 0,
        });
    }
    let rho = spectral_radius(&sys.f)?;
    let (stable, unstable, split) = if rho < 1.0 {
        (sys.clone(), None, false)
    } else {
        let (s, u) = stable_split(sys)?;
        (s, Some(u), true)
    };
    let nu = unstable.as_ref().map_or(0, |u| u.states());
    if order < nu {
        return Err(Error::InvalidParameter(format!(
            "order {order} is below the {nu} unstable states"
        )));
    }
    let (reduced_stable, hankel) = truncate_stable(&stable, order - nu)?;
    let reduced = match &unstable {
        Some(u) => reduced_stable.add(u)?,
        None => reduced_stable,
    };
    let err = sup_on_circle(|z| reduced.eval(z) - sys.eval(z), 1e-6, true).norm;
    let base = sup_on_circle(|z| sys.eval(z), 1e-6, true).norm;
    Ok(ReductionReport {
        reduced,
        hankel,
        relative_error: if base > 0.0 { err / base } else { err },
        split,
        unstable_states: nu,
    })
}

fn psd_factor(p: &Mat) -> Mat {
    let eig = SymmetricEigen::new((p + p.transpose()) * 0.5);
    let mut l = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

fn truncate_stable(sys: &DiscreteSystem, order: usize) -> Result<(DiscreteSystem, Vec<f64>)> {
    if sys.states() == 0 {
        return Ok((sys.clone(), Vec::new()));
    }
    let wc = stein(&sys.f, &(&sys.g * sys.g.transpose()))?;
    let wo = stein(&sys.f.transpose(), &(sys.h.transpose() * &sys.h))?;
    let lp = psd_factor(&wc);
    let lq = psd_factor(&wo);
    let svd = (lq.transpose() * &lp).svd(true, true);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let hankel: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let top = hankel.first().copied().unwrap_or(0.0);
    let keep = order.min(hankel.iter().filter(|&&s| s > 1e-14 * top.max(1e-300)).count());
    let u = svd.u.as_ref().expect("left vectors");
    let vt = svd.v_t.as_ref().expect("right vectors");
    let n = sys.states();
    let mut t = Mat::zeros(n, keep);
    let mut ti = Mat::zeros(keep, n);
    for (j, &i) in idx.iter().take(keep).enumerate() {
        let s = hankel[j].sqrt();
        t.set_column(j, &(&lp * vt.row(i).transpose() / s));
        ti.set_row(j, &((lq.clone() * u.column(i)).transpose() / s));
    }
    let reduced = DiscreteSystem::new(&ti * &sys.f * &t, &ti * &sys.g, &sys.h * &t, sys.d.clone())?;
    Ok((reduced, hankel))
}

/// `(stable, antistable)` parts with the feedthrough kept on the stable side.
pub fn stable_split(sys: &DiscreteSystem) -> Result<(DiscreteSystem, DiscreteSystem)> {
    let n = sys.states();
    let eye = Mat::identity(n, n);
    let plus = (&sys.f + &eye)
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("controller has an eigenvalue at −1".into()))?;
    // Cayley map: |λ| < 1 ↦ Re < 0
    let mut s = &plus * (&sys.f - &eye);
    for _ in 0..100 {
        let inv = s.clone().try_inverse().ok_or_else(|| {
            Error::InvalidParameter("controller has an eigenvalue on the unit circle".into())
        })?;
        let det = s.determinant().abs();
        let c = if det.is_finite() && det > 0.0 { det.powf(-1.0 / n as f64) } else { 1.0 };
        let next = (&s * c + inv / c) * 0.5;
        let diff = (&next - &s).norm();
        s = next;
        if diff <= 1e-13 * s.norm() {
            break;
        }
    }
    let p_stable = (&eye - &s) * 0.5;
    let p_unstable = (&eye + &s) * 0.5;
    let ns = p_stable.trace().round().max(0.0) as usize;
    let nu = n - ns;
    let basis = |p: &Mat, k: usize| -> Mat {
        let svd = p.clone().svd(true, false);
        let u = svd.u.expect("left vectors");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut out = Mat::zeros(n, k);
        for (j, &i) in order.iter().take(k).enumerate() {
            out.set_column(j, &u.column(i));
        }
        out
    };
    let t = stack_cols(&basis(&p_stable, ns), &basis(&p_unstable, nu));
    let tinv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Verification("stable/antistable bases are dependent".into()))?;
    let a = &tinv * &sys.f * &t;
    let b = &tinv * &sys.g;
    let c = &sys.h * &t;
    let coupling = a.view((0, ns), (ns, nu)).abs().max().max(a.view((ns, 0), (nu, ns)).abs().max());
    if coupling > 1e-8 * a.abs().max().max(1.0) {
        log::warn!("stable/antistable split leaves coupling {coupling:e}");
    }
    let stable = DiscreteSystem::new(
        a.view((0, 0), (ns, ns)).into_owned(),
        b.rows(0, ns).into_owned(),
        c.columns(0, ns).into_owned(),
        sys.d.clone(),
    )?;
    let unstable = DiscreteSystem::new(
        a.view((ns, ns), (nu, nu)).into_owned(),
        b.rows(ns, nu).into_owned(),
        c.columns(ns, nu).into_owned(),
        Mat::zeros(sys.outputs(), sys.inputs()),
    )?;
    Ok((stable, unstable))
}

//! Finite-difference reference solver for the canonical problem.
//!
//! Space uses the fourth-order compact (Numerov) stencil, time uses
//! Crank-Nicolson with two implicit-Euler half steps at the start. The
//! unknown is `W_t`, i.e. the ground-state decay is factored out, so the
//! integrated field varies slowly and the time error stays small; the
//! returned field is multiplied back to the true scale.

use crate::error::{Error, Result};
use crate::field::ScalarField1D;
use crate::tridiag;

use super::CanonicalProblem;

/// Solves from `initial` (grid starting at `x = 0`, absorbing at both ends)
/// up to `t_end` with time step `dt`.
pub fn fd_oracle(problem: &CanonicalProblem, initial: &ScalarField1D, t_end: f64, dt: f64) -> Result<ScalarField1D> {
    fd_oracle_observed(problem, initial, t_end, dt, |_, _| {})
}

/// As [`fd_oracle`], reporting `(t, ||w_t||_2)` after every step.
pub fn fd_oracle_observed(
    problem: &CanonicalProblem,
    initial: &ScalarField1D,
    t_end: f64,
    dt: f64,
    mut observer: impl FnMut(f64, f64),
) -> Result<ScalarField1D> {
    let eps = problem.epsilon();
    let dx = initial.dx;
    if initial.x0 != 0.0 {
        return Err(Error::Config("oracle grid must start at x = 0".into()));
    }
    if !(dx > 0.0 && dx <= eps.sqrt() / 20.0) {
        return Err(Error::Config(format!(
            "spatial step {dx} does not resolve eps = {eps} (need dx <= {})",
            eps.sqrt() / 20.0
        )));
    }
    if !(dt > 0.0) || !(t_end >= initial.time) {
        return Err(Error::Config(format!("invalid time stepping dt = {dt}, t_end = {t_end}")));
    }
    if initial.len() < 4 {
        return Err(Error::Config("oracle grid needs at least 4 nodes".into()));
    }
    let n = initial.len();
    let m = n - 2;
    let alpha1 = problem.basis().alpha(1);
    let xs: Vec<f64> = (1..=m).map(|i| i as f64 * dx).collect();
    let mut w: Vec<f64> = initial.values[1..=m].to_vec();
    let (mut sub, mut diag, mut sup) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut rhs = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut v = vec![0.0; m];
    let inv_dx2 = 1.0 / (dx * dx);

    let mut t = initial.time;
    let mut exponent = 0.0;
    let steps = ((t_end - t) / dt).ceil() as u64;
    let q23 = |s: f64| problem.q(s).powf(2.0 / 3.0);

    // Each CN step solves (M - a K) W+ = (M + b K) W with
    // K = D2 - M diag(V), V = q x - alpha_1 q^{2/3}, M = [1, 10, 1]/12.
    let mut advance = |w: &mut Vec<f64>, t0: f64, h: f64, implicit: f64, explicit: f64| {
        let tm = t0 + 0.5 * h;
        let q = problem.q(tm);
        let shift = alpha1 * q.powf(2.0 / 3.0);
        for i in 0..m {
            v[i] = q * xs[i] - shift;
        }
        let (a, b) = (implicit * h / eps, explicit * h / eps);
        for i in 0..m {
            let vl = if i > 0 { v[i - 1] } else { 0.0 };
            let vr = if i + 1 < m { v[i + 1] } else { 0.0 };
            let k_sub = inv_dx2 - vl / 12.0;
            let k_diag = -2.0 * inv_dx2 - 10.0 * v[i] / 12.0;
            let k_sup = inv_dx2 - vr / 12.0;
            sub[i] = 1.0 / 12.0 - a * k_sub;
            diag[i] = 10.0 / 12.0 - a * k_diag;
            sup[i] = 1.0 / 12.0 - a * k_sup;
            let wl = if i > 0 { w[i - 1] } else { 0.0 };
            let wr = if i + 1 < m { w[i + 1] } else { 0.0 };
            rhs[i] = (wl + 10.0 * w[i] + wr) / 12.0 + b * (k_sub * wl + k_diag * w[i] + k_sup * wr);
        }
        tridiag::solve(&sub, &diag, &sup, &mut rhs, &mut scratch);
        w.copy_from_slice(&rhs);
    };

    let norm = |w: &[f64], scale: f64| (w.iter().map(|x| x * x).sum::<f64>() * dx).sqrt() * scale;
    for step in 0..steps {
        let h = dt.min(t_end - t);
        if h <= 0.0 {
            break;
        }
        if step == 0 {
            advance(&mut w, t, 0.5 * h, 1.0, 0.0);
            advance(&mut w, t + 0.5 * h, 0.5 * h, 1.0, 0.0);
        } else {
            advance(&mut w, t, h, 0.5, 0.5);
        }
        exponent += h / 6.0 * (q23(t) + 4.0 * q23(t + 0.5 * h) + q23(t + h));
        t = if step + 1 == steps { t_end } else { t + h };
        observer(t, norm(&w, (-alpha1 * exponent / eps).exp()));
    }

    let scale = (-alpha1 * exponent / eps).exp();
    let mut values = Vec::with_capacity(n);
    values.push(0.0);
    values.extend(w.iter().map(|x| x * scale));
    values.push(0.0);
    Ok(ScalarField1D::new(0.0, dx, values, t, 0.0, 0.0))
}

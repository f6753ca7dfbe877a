//! Finite-difference solver for
//! `F_t = sigma^2(1 - t/T)/2 F_xx + beta0 (E[F^L] - F)`, `F(x, 0) = 1{x >= 0}`,
//! whose solution at time `T` is the distribution function of the maximum.
//!
//! The solver works with `u = 1 - F`, which keeps full relative precision in
//! the leading edge where `F` rounds to one. Time stepping is Strang
//! splitting: half a reaction step, a Crank-Nicolson diffusion step (the
//! first two replaced by implicit Euler half steps to damp the initial
//! discontinuity), and another half reaction step. The grid is a window that
//! follows the front in whole-cell shifts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField1D;
use crate::law::OffspringLaw;
use crate::parallel;
use crate::sigma::SigmaProfile;
use crate::stats;
use crate::tridiag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FkppGrid {
    pub dx: f64,
    pub dt: f64,
    /// Width kept behind the front.
    pub left_pad: f64,
    /// Width kept ahead of the front; `None` picks `max(200, 12 sigma_max T^{1/3})`.
    pub right_pad: Option<f64>,
    /// Translate the window with the front. Without it the run fails once the
    /// front comes within 5 units of the right edge.
    pub moving: bool,
    /// Spacing in time of the recorded front trajectory.
    pub record_every: f64,
}

impl Default for FkppGrid {
    fn default() -> Self {
        Self {
            dx: 0.05,
            dt: 0.02,
            left_pad: 50.0,
            right_pad: None,
            moving: true,
            record_every: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FkppSolution {
    pub horizon: f64,
    /// `(t, median of F(., t))` every `record_every` time units and at `T`.
    pub fronts: Vec<(f64, f64)>,
    /// Distribution function at the requested snapshot times.
    pub snapshots: Vec<ScalarField1D>,
    /// Distribution function at `T`.
    pub final_field: ScalarField1D,
    pub median: f64,
}

fn sigma_max(profile: &SigmaProfile) -> f64 {
    (0..=100).map(|i| profile.sigma(i as f64 / 100.0)).fold(0.0, f64::max)
}

struct Window {
    x0: f64,
    dx: f64,
    u: Vec<f64>,
}

impl Window {
    fn x_end(&self) -> f64 {
        self.x0 + (self.u.len() - 1) as f64 * self.dx
    }

    /// Position where `u` crosses `level` going right.
    fn crossing(&self, level: f64) -> Option<f64> {
        let i = self.u.iter().position(|&v| v < level)?;
        if i == 0 {
            return None;
        }
        let (a, b) = (self.u[i - 1], self.u[i]);
        Some(self.x0 + self.dx * ((i - 1) as f64 + (a - level) / (a - b)))
    }

    /// Drops `k` cells on the left and extends geometrically on the right.
    fn shift(&mut self, k: usize) {
        let n = self.u.len();
        self.u.drain(..k);
        let last = self.u[n - k - 1];
        let prev = self.u[n - k - 2];
        let ratio = if prev > 0.0 { (last / prev).clamp(0.0, 1.0) } else { 0.0 };
        let mut v = last;
        for _ in 0..k {
            v *= ratio;
            self.u.push(v);
        }
        self.x0 += k as f64 * self.dx;
    }

    fn to_field(&self, time: f64) -> ScalarField1D {
        let values = self.u.iter().map(|u| 1.0 - u).collect();
        ScalarField1D::new(self.x0, self.dx, values, time, 0.0, 1.0)
    }
}

struct Reaction<'a> {
    law: &'a OffspringLaw,
    beta0: f64,
}

impl Reaction<'_> {
    fn rate(&self, u: f64) -> f64 {
        self.beta0 * (self.law.one_minus_pgf_complement(u) - u)
    }

    fn apply(&self, u: &mut [f64], h: f64) {
        if self.law.is_binary() {
            // u' = beta0 u (1 - u) in closed form
            let e = (self.beta0 * h).exp();
            for v in u.iter_mut() {
                *v = *v * e / (1.0 + *v * (e - 1.0));
            }
            return;
        }
        for v in u.iter_mut() {
            let y = *v;
            let k1 = self.rate(y);
            let k2 = self.rate((y + 0.5 * h * k1).clamp(0.0, 1.0));
            let k3 = self.rate((y + 0.5 * h * k2).clamp(0.0, 1.0));
            let k4 = self.rate((y + h * k3).clamp(0.0, 1.0));
            *v = (y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(0.0, 1.0);
        }
    }
}

struct Diffusion {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Diffusion {
    fn new(n: usize) -> Self {
        Self {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
            rhs: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// One theta-scheme step of `u_t = D u_xx` with ghost values 1 (left) and
    /// 0 (right); `theta = 1` is implicit Euler, `theta = 1/2` is CN.
    fn step(&mut self, u: &mut [f64], lambda: f64, theta: f64) {
        let n = u.len();
        let (a, b) = (theta * lambda, (1.0 - theta) * lambda);
        for i in 0..n {
            let left = if i > 0 { u[i - 1] } else { 1.0 };
            let right = if i + 1 < n { u[i + 1] } else { 0.0 };
            self.sub[i] = -a;
            self.sup[i] = -a;
            self.diag[i] = 1.0 + 2.0 * a;
            self.rhs[i] = u[i] + b * (left - 2.0 * u[i] + right);
        }
        self.rhs[0] += a;
        tridiag::solve(&self.sub, &self.diag, &self.sup, &mut self.rhs, &mut self.scratch);
        for (v, r) in u.iter_mut().zip(&self.rhs) {
            *v = r.clamp(0.0, 1.0);
        }
    }
}

/// Solves the front equation up to `T`, recording snapshots of `F` at the
/// times in `snapshot_times`.
pub fn solve_fkpp(
    profile: &SigmaProfile,
    law: &OffspringLaw,
    horizon: f64,
    grid: &FkppGrid,
    snapshot_times: &[f64],
) -> Result<FkppSolution> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon {horizon} must be positive")));
    }
    if !(grid.dx > 0.0 && grid.dx <= 0.05 && grid.dt > 0.0) {
        return Err(Error::Config(format!(
            "grid needs 0 < dx <= 0.05 and dt > 0 (dx = {}, dt = {})",
            grid.dx, grid.dt
        )));
    }
    let smax = sigma_max(profile);
    let right_pad = grid.right_pad.unwrap_or((12.0 * smax * horizon.cbrt()).max(200.0));
    if !(grid.left_pad > 0.0 && right_pad > 5.0) {
        return Err(Error::Config("pads must be positive".into()));
    }
    let cells = ((grid.left_pad + right_pad) / grid.dx).round() as usize + 1;
    let x0 = -((grid.left_pad / grid.dx).round()) * grid.dx;
    let mut w = Window {
        x0,
        dx: grid.dx,
        u: (0..cells).map(|i| if x0 + i as f64 * grid.dx < -1e-12 { 1.0 } else { 0.0 }).collect(),
    };
    let reaction = Reaction {
        law,
        beta0: law.beta0(),
    };
    let mut diffusion = Diffusion::new(cells);
    let steps = (horizon / grid.dt).ceil() as u64;
    let dt = horizon / steps as f64;
    let mut snaps: Vec<f64> = snapshot_times.iter().copied().filter(|s| (0.0..=horizon).contains(s)).collect();
    snaps.sort_by(f64::total_cmp);
    let mut snapshots = Vec::with_capacity(snaps.len());
    let mut next_snap = 0;
    while next_snap < snaps.len() && snaps[next_snap] <= 0.0 {
        snapshots.push(w.to_field(0.0));
        next_snap += 1;
    }
    let mut fronts = vec![(0.0, 0.0)];
    let mut next_record = grid.record_every;

    for step in 0..steps {
        let t = step as f64 * dt;
        let tm = t + 0.5 * dt;
        let sigma = profile.sigma(1.0 - tm / horizon);
        let lambda = 0.5 * sigma * sigma * dt / (grid.dx * grid.dx);
        reaction.apply(&mut w.u, 0.5 * dt);
        if step < 2 {
            diffusion.step(&mut w.u, 0.5 * lambda, 1.0);
            diffusion.step(&mut w.u, 0.5 * lambda, 1.0);
        } else {
            diffusion.step(&mut w.u, lambda, 0.5);
        }
        reaction.apply(&mut w.u, 0.5 * dt);

        let t_new = if step + 1 == steps { horizon } else { (step + 1) as f64 * dt };
        let front = w.crossing(0.5).ok_or(Error::FrontNotInDomain { level: 0.5 })?;
        if front > w.x_end() - 5.0 {
            return Err(Error::DomainExhausted {
                front,
                edge: w.x_end(),
            });
        }
        if grid.moving {
            let ahead = front - w.x0 - grid.left_pad;
            if ahead > 1.0 {
                w.shift((ahead / grid.dx).floor() as usize);
            }
        }
        if t_new + 1e-9 >= next_record || step + 1 == steps {
            fronts.push((t_new, front));
            while next_record <= t_new + 1e-9 {
                next_record += grid.record_every;
            }
        }
        while next_snap < snaps.len() && snaps[next_snap] <= t_new + 1e-9 {
            snapshots.push(w.to_field(t_new));
            next_snap += 1;
        }
    }
    let final_field = w.to_field(horizon);
    let median = w.crossing(0.5).ok_or(Error::FrontNotInDomain { level: 0.5 })?;
    Ok(FkppSolution {
        horizon,
        fronts,
        snapshots,
        final_field,
        median,
    })
}

/// Solves several horizons on the worker pool; results are in input order.
pub fn solve_fkpp_sweep(
    profile: &SigmaProfile,
    law: &OffspringLaw,
    horizons: &[f64],
    grid: &FkppGrid,
) -> Vec<Result<FkppSolution>> {
    parallel::map_indexed(horizons.len(), |i| solve_fkpp(profile, law, horizons[i], grid, &[]))
}

/// Position where a non-decreasing field crosses `level`, by linear
/// interpolation between the straddling nodes.
pub fn front_position(field: &ScalarField1D, level: f64) -> Result<f64> {
    let v = &field.values;
    let i = v.iter().position(|&f| f >= level).ok_or(Error::FrontNotInDomain { level })?;
    if i == 0 {
        if v[0] == level && field.left < level {
            return Ok(field.x0);
        }
        return Err(Error::FrontNotInDomain { level });
    }
    let (a, b) = (v[i - 1], v[i]);
    Ok(field.x(i - 1) + field.dx * (level - a) / (b - a))
}

/// Least-squares fit of front positions against `(T, T^{1/3}, log T, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionFit {
    /// Raw coefficients of `T`, `T^{1/3}`, `log T` and `1`.
    pub coefficients: [f64; 4],
    pub std_errors: [f64; 4],
    pub residuals: Vec<f64>,
}

impl ExpansionFit {
    pub fn v1(&self) -> f64 {
        self.coefficients[0]
    }

    /// Minus the `T^{1/3}` coefficient.
    pub fn w1(&self) -> f64 {
        -self.coefficients[1]
    }

    /// The `log T` coefficient.
    pub fn log_coefficient(&self) -> f64 {
        self.coefficients[2]
    }

    pub fn constant(&self) -> f64 {
        self.coefficients[3]
    }

    pub fn predict(&self, horizon: f64) -> f64 {
        let c = &self.coefficients;
        c[0] * horizon + c[1] * horizon.cbrt() + c[2] * horizon.ln() + c[3]
    }
}

pub fn fit_expansion(fronts: &[(f64, f64)]) -> Result<ExpansionFit> {
    let mut horizons: Vec<f64> = fronts.iter().map(|f| f.0).collect();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    if horizons.len() < 6 {
        return Err(Error::InsufficientHorizonSpread(format!(
            "{} distinct horizons, need at least 6",
            horizons.len()
        )));
    }
    if horizons[0] <= 1.0 || horizons[horizons.len() - 1] < 10.0 * horizons[0] {
        return Err(Error::InsufficientHorizonSpread("horizons must span at least one decade above T = 1".into()));
    }
    let rows: Vec<Vec<f64>> = fronts.iter().map(|&(t, _)| vec![t, t.cbrt(), t.ln(), 1.0]).collect();
    let y: Vec<f64> = fronts.iter().map(|f| f.1).collect();
    let ls = stats::least_squares(&rows, &y, 1e8)?;
    let arr = |v: &[f64]| [v[0], v[1], v[2], v[3]];
    Ok(ExpansionFit {
        coefficients: arr(&ls.coefficients),
        std_errors: arr(&ls.std_errors),
        residuals: ls.residuals,
    })
}

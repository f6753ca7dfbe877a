//! Truncated eigen-expansion of `w_t = eps^{-1} (w_xx - q(t) x w)` on the
//! half line with a Dirichlet condition at the origin.
//!
//! The solution is carried as `W_t = exp(eps^{-1} alpha_1 int_0^t q^{2/3}) w_t`
//! expanded in the moving basis `psi_n^{q(t)}`; its coefficients solve
//! `c' = D(t) c + (log q)'(t) A c` with `D = -eps^{-1} q^{2/3} diag(alpha_n - alpha_1)`.

mod fd;
mod kernel;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::airy::{coupling_matrix, AiryBasis, CouplingMatrix, DEFAULT_TRUNCATION};
use crate::error::{domain, Error, Result};
use crate::predictor::{Curves, QTag};
use crate::quad;
use crate::sigma::{SigmaProfile, VALIDATION_GRID};
use crate::stats;

pub use fd::{fd_oracle, fd_oracle_observed};
pub use kernel::{fundamental_g, transport_kernel, FundamentalSolution, KernelTransport};

/// Largest number of integration steps a single solve may take.
pub const MAX_STEPS: u64 = 20_000_000;

/// Coefficient magnitude below which a mode counts as lost to underflow.
pub const MODE_FLOOR: f64 = 1e-290;

/// A positive potential coefficient `q(t)` on `[0, 1]`.
pub trait QFunction: Send + Sync + fmt::Debug {
    fn q(&self, t: f64) -> f64;
    /// `d/dt log q(t)`.
    fn log_derivative(&self, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantQ(pub f64);

impl QFunction for ConstantQ {
    fn q(&self, _t: f64) -> f64 {
        self.0
    }
    fn log_derivative(&self, _t: f64) -> f64 {
        0.0
    }
}

/// `q(t) = a + b t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineQ {
    pub a: f64,
    pub b: f64,
}

impl QFunction for AffineQ {
    fn q(&self, t: f64) -> f64 {
        self.a + self.b * t
    }
    fn log_derivative(&self, t: f64) -> f64 {
        self.b / self.q(t)
    }
}

/// The potential obtained from a variance profile by the time change
/// `tau = J(s)/J(1)`: `q(tau) = 2 Q(s) / sigma(s)^2`.
#[derive(Debug, Clone)]
pub struct CanonicalQ {
    curves: Arc<Curves>,
    horizon: f64,
    tag: QTag,
}

impl CanonicalQ {
    pub fn new(curves: Arc<Curves>, horizon: f64, tag: QTag) -> Result<Self> {
        if tag == QTag::QT {
            curves.q_t_check(horizon)?;
        }
        let me = Self { curves, horizon, tag };
        for i in 0..VALIDATION_GRID {
            let s = i as f64 / (VALIDATION_GRID - 1) as f64;
            let v = me.q_of_s(s);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositivePotential { at: s, value: v });
            }
        }
        Ok(me)
    }

    pub fn curves(&self) -> &Arc<Curves> {
        &self.curves
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn q_of_s(&self, s: f64) -> f64 {
        let p = self.curves.profile();
        let big_q = match self.tag {
            QTag::QT => self.curves.q_t_raw(self.horizon, s),
            QTag::Leading => p.dsigma(s).abs() / p.sigma(s).powi(2),
        };
        2.0 * big_q / p.sigma(s).powi(2)
    }

    fn s_of_tau(&self, tau: f64) -> f64 {
        let y = tau.clamp(0.0, 1.0) * self.curves.j1();
        self.curves.j_inverse(y).unwrap_or(if tau <= 0.0 { 0.0 } else { 1.0 })
    }
}

impl QFunction for CanonicalQ {
    fn q(&self, tau: f64) -> f64 {
        self.q_of_s(self.s_of_tau(tau))
    }

    fn log_derivative(&self, tau: f64) -> f64 {
        let s = self.s_of_tau(tau);
        let h = 1e-5;
        let (a, b) = ((s - h).max(0.0), (s + h).min(1.0));
        let dlog_ds = (self.q_of_s(b).ln() - self.q_of_s(a).ln()) / (b - a);
        let sigma = self.curves.profile().sigma(s);
        dlog_ds * self.curves.j1() / (0.5 * sigma * sigma)
    }
}

/// Parses `const:c`, `affine:a,b` or `canonical:T:qt|leading:<sigma spec>`.
pub fn parse_q(spec: &str) -> Result<Arc<dyn QFunction>> {
    let bad = || Error::Config(format!("cannot parse q specification '{spec}'"));
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    let nums = |s: &str| -> Result<Vec<f64>> {
        s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
    };
    match kind {
        "const" => {
            let v = nums(rest)?;
            if v.len() != 1 || !(v[0] > 0.0) {
                return Err(bad());
            }
            Ok(Arc::new(ConstantQ(v[0])))
        }
        "affine" => {
            let v = nums(rest)?;
            if v.len() != 2 {
                return Err(bad());
            }
            Ok(Arc::new(AffineQ { a: v[0], b: v[1] }))
        }
        "canonical" => {
            let mut parts = rest.splitn(3, ':');
            let horizon: f64 = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let tag = match parts.next() {
                Some("qt") => QTag::QT,
                Some("leading") => QTag::Leading,
                _ => return Err(bad()),
            };
            let profile = SigmaProfile::parse(parts.next().ok_or_else(bad)?)?;
            Ok(Arc::new(CanonicalQ::new(Arc::new(Curves::new(profile)), horizon, tag)?))
        }
        _ => Err(bad()),
    }
}

/// `q`, `eps` and the truncated basis.
#[derive(Debug, Clone)]
pub struct CanonicalProblem {
    q: Arc<dyn QFunction>,
    epsilon: f64,
    basis: Arc<AiryBasis>,
    coupling: CouplingMatrix,
    step_fraction: f64,
}

impl CanonicalProblem {
    pub fn new(q: Arc<dyn QFunction>, epsilon: f64, truncation: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return domain(format!("epsilon = {epsilon} must be positive"));
        }
        for i in 0..VALIDATION_GRID {
            let t = i as f64 / (VALIDATION_GRID - 1) as f64;
            let v = q.q(t);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositivePotential { at: t, value: v });
            }
        }
        Ok(Self {
            q,
            epsilon,
            basis: Arc::new(AiryBasis::new(truncation)?),
            coupling: coupling_matrix(truncation)?,
            step_fraction: 0.1,
        })
    }

    pub fn with_default_truncation(q: Arc<dyn QFunction>, epsilon: f64) -> Result<Self> {
        Self::new(q, epsilon, DEFAULT_TRUNCATION)
    }

    /// Sets the step as a fraction of `eps`; at most `0.1`.
    pub fn with_step_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 0.1) {
            return Err(Error::Config(format!("step fraction {fraction} must lie in (0, 0.1]")));
        }
        self.step_fraction = fraction;
        Ok(self)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn truncation(&self) -> usize {
        self.basis.truncation()
    }

    pub fn basis(&self) -> &AiryBasis {
        &self.basis
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn q(&self, t: f64) -> f64 {
        self.q.q(t)
    }

    pub fn q_function(&self) -> &Arc<dyn QFunction> {
        &self.q
    }

    /// `Q_1 = inf q^{2/3}` on the validation grid.
    pub fn q1(&self) -> f64 {
        (0..VALIDATION_GRID)
            .map(|i| self.q.q(i as f64 / (VALIDATION_GRID - 1) as f64).powf(2.0 / 3.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// `Q_2 = sup |(log q)'|` on the validation grid.
    pub fn q2(&self) -> f64 {
        (0..VALIDATION_GRID)
            .map(|i| self.q.log_derivative(i as f64 / (VALIDATION_GRID - 1) as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Three-point Simpson value of `int_a^b q^{2/3}`.
    fn q23_integral(&self, a: f64, b: f64) -> f64 {
        let f = |t: f64| self.q.q(t).powf(2.0 / 3.0);
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }

    /// `exp(-eps^{-1} (alpha_n - alpha_1) I)` for each mode.
    fn decay_factors(&self, integral: f64, out: &mut [f64]) {
        let a1 = self.basis.alpha(1);
        for (n, o) in out.iter_mut().enumerate() {
            *o = (-(self.basis.alpha(n + 1) - a1) * integral / self.epsilon).exp();
        }
    }
}

/// Smallest truncation for which the highest kept mode has decayed below
/// machine precision by `t = 4 eps` when `inf q^{2/3} = q1`.
pub fn min_truncation(q1: f64) -> usize {
    let target = -f64::EPSILON.ln();
    let a1 = crate::airy::airy_zero(1).expect("first zero");
    (1..=crate::airy::MAX_ZERO_INDEX)
        .find(|&n| (crate::airy::airy_zero(n).expect("in table") - a1) * q1 * 4.0 > target)
        .unwrap_or(crate::airy::MAX_ZERO_INDEX)
}

/// Coefficients of `W_t` in the basis `psi_n^{q(t)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralState {
    pub coeffs: Vec<f64>,
    pub time: f64,
    pub epsilon: f64,
    pub q_at_t: f64,
    /// `int_0^t q^{2/3}`, so that `w_t = exp(-alpha_1 ground_exponent / eps) W_t`.
    pub ground_exponent: f64,
}

impl SpectralState {
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `(sum_{n >= 2} c_n^2)^{1/2}`.
    pub fn tail_norm(&self) -> f64 {
        self.coeffs[1..].iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `W_t(y) = sum_n c_n psi_n^{q(t)}(y)`.
    pub fn reconstruct(&self, basis: &AiryBasis, y: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| c * basis.psi_scaled_unchecked(n + 1, self.q_at_t, y))
            .sum()
    }
}

/// Spectral coefficients of a unit mass at `x0`: `c_n = psi_n^{q(0)}(x0)`.
pub fn project_initial(x0: f64, problem: &CanonicalProblem) -> Result<SpectralState> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return domain(format!("initial point x0 = {x0} must be positive"));
    }
    let q0 = problem.q(0.0);
    let coeffs = (1..=problem.truncation())
        .map(|n| problem.basis.psi_scaled_unchecked(n, q0, x0))
        .collect();
    Ok(SpectralState {
        coeffs,
        time: 0.0,
        epsilon: problem.epsilon,
        q_at_t: q0,
        ground_exponent: 0.0,
    })
}

/// Spectral coefficients of a function supported in `[0, x_max]`.
pub fn project_function(f: impl Fn(f64) -> f64, x_max: f64, problem: &CanonicalProblem) -> SpectralState {
    let q0 = problem.q(0.0);
    let basis = &problem.basis;
    let coeffs = (1..=problem.truncation())
        .map(|n| quad::simpson(|x| f(x) * basis.psi_scaled_unchecked(n, q0, x), 0.0, x_max, 1e-13))
        .collect();
    SpectralState {
        coeffs,
        time: 0.0,
        epsilon: problem.epsilon,
        q_at_t: q0,
        ground_exponent: 0.0,
    }
}

/// Advances `state` to `t_end`.
pub fn evolve(state: &SpectralState, problem: &CanonicalProblem, t_end: f64) -> Result<SpectralState> {
    evolve_observed(state, problem, t_end, |_| {})
}

/// As [`evolve`], calling `observer` after every accepted step.
///
/// Each step applies the exact diagonal decay through an integrating factor
/// and the coupling term with the explicit midpoint rule. A step whose
/// result has larger norm than its input (beyond `1e-9` relative) is
/// retried with half the step.
pub fn evolve_observed(
    state: &SpectralState,
    problem: &CanonicalProblem,
    t_end: f64,
    mut observer: impl FnMut(&SpectralState),
) -> Result<SpectralState> {
    if !(t_end >= state.time) || t_end > 1.0 + 1e-12 {
        return domain(format!("cannot evolve from t = {} to t = {t_end}", state.time));
    }
    let n = problem.truncation();
    if state.coeffs.len() != n {
        return domain(format!("state has {} modes, problem has {n}", state.coeffs.len()));
    }
    let h_nominal = problem.epsilon * problem.step_fraction;
    let planned = ((t_end - state.time) / h_nominal).ceil();
    if !(planned <= MAX_STEPS as f64) {
        return Err(Error::StepBudget { steps: planned as u64 });
    }
    let h_min = h_nominal * 1e-6;

    let mut cur = state.clone();
    let mut e0m = vec![0.0; n];
    let mut em1 = vec![0.0; n];
    let mut k = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut h = h_nominal;
    let mut taken: u64 = 0;
    while cur.time < t_end {
        let t0 = cur.time;
        let step = h.min(t_end - t0);
        let t1 = if step == t_end - t0 { t_end } else { t0 + step };
        let tm = 0.5 * (t0 + t1);
        let i0m = problem.q23_integral(t0, tm);
        let im1 = problem.q23_integral(tm, t1);
        problem.decay_factors(i0m, &mut e0m);
        problem.decay_factors(im1, &mut em1);

        let g0 = problem.q.log_derivative(t0);
        problem.coupling.apply(&cur.coeffs, &mut k);
        for i in 0..n {
            mid[i] = e0m[i] * (cur.coeffs[i] + 0.5 * step * g0 * k[i]);
        }
        let gm = problem.q.log_derivative(tm);
        problem.coupling.apply(&mid, &mut k);
        for i in 0..n {
            next[i] = em1[i] * (e0m[i] * cur.coeffs[i] + step * gm * k[i]);
        }

        let before = cur.norm();
        let after = next.iter().map(|c| c * c).sum::<f64>().sqrt();
        if after > before * (1.0 + 1e-9) {
            h = 0.5 * step;
            if h < h_min {
                return Err(Error::StepBudget { steps: taken });
            }
            continue;
        }
        cur.coeffs.copy_from_slice(&next);
        cur.time = t1;
        cur.q_at_t = problem.q(t1);
        cur.ground_exponent += i0m + im1;
        taken += 1;
        if taken > MAX_STEPS {
            return Err(Error::StepBudget { steps: taken });
        }
        observer(&cur);
        h = (2.0 * h).min(h_nominal);
    }
    Ok(cur)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeDecayReport {
    /// Fitted slope of `log |c_n(t)|` (upper envelope) against `n^{2/3}`.
    pub slope: f64,
    /// `-slope * eps / (t min delta)`; positive when the decay holds.
    pub c2: f64,
    pub modes_used: usize,
    pub holds: bool,
}

/// `q` held at its value at `t_freeze` from then on.
#[derive(Debug)]
struct FrozenQ {
    base: Arc<dyn QFunction>,
    t_freeze: f64,
}

impl QFunction for FrozenQ {
    fn q(&self, t: f64) -> f64 {
        self.base.q(t.min(self.t_freeze))
    }
    fn log_derivative(&self, t: f64) -> f64 {
        if t < self.t_freeze {
            self.base.log_derivative(t)
        } else {
            0.0
        }
    }
}

/// Fits the decay of `|c_n(t)|` in `n^{2/3}` for the solution started from a
/// unit mass at `x0`, with `q` frozen over the final window of length
/// `t min delta` so that mode coupling is switched off there. Mode 1 is
/// excluded; the fit uses the running maximum of `|c_m|` over `m >= n` so
/// that isolated near-zero coefficients do not distort it.
pub fn check_mode_decay(problem: &CanonicalProblem, t: f64, delta: f64, x0: f64) -> Result<ModeDecayReport> {
    let eps = problem.epsilon;
    if !(t >= 4.0 * eps - 1e-12 && t <= 1.0) {
        return domain(format!("t = {t} outside [4 eps, 1]"));
    }
    if !(delta > 0.0) {
        return domain(format!("delta = {delta} must be positive"));
    }
    let frozen = CanonicalProblem {
        q: Arc::new(FrozenQ {
            base: problem.q.clone(),
            t_freeze: t - t.min(delta),
        }),
        ..problem.clone()
    };
    let state = evolve(&project_initial(x0, &frozen)?, &frozen, t)?;
    let mags: Vec<f64> = state.coeffs.iter().map(|c| c.abs()).collect();
    let mut envelope = mags.clone();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, &e) in envelope.iter().enumerate().skip(1) {
        if e > MODE_FLOOR {
            xs.push(((i + 1) as f64).powf(2.0 / 3.0));
            ys.push(e.ln());
        }
    }
    if xs.len() < 5 {
        return Err(Error::InsufficientModes { found: xs.len() });
    }
    let slope = stats::ols(&xs, &ys).slope;
    let c2 = -slope * eps / t.min(delta);
    Ok(ModeDecayReport {
        slope,
        c2,
        modes_used: xs.len(),
        holds: c2 > 0.0,
    })
}

/// Constants of the envelope `kappa1 eps (kappa1 eps + |c_1(0)|) + exp(-kappa2 Q_1 t / eps)`
/// fitted to the tail norm of a unit-norm trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailBoundFit {
    pub epsilon: f64,
    pub kappa1: f64,
    /// Largest rate for which the envelope dominates every sample.
    pub kappa2: f64,
    pub plateau: f64,
    pub samples: usize,
}

/// Evolves `initial` (rescaled to unit norm) to `t = 1` and fits the
/// tail-norm envelope. The plateau is the largest tail norm over `[1/2, 1]`.
pub fn fit_tail_bound(initial: &SpectralState, problem: &CanonicalProblem) -> Result<TailBoundFit> {
    let norm = initial.norm();
    if !(norm > 0.0) || initial.time != 0.0 {
        return domain("tail fit needs a nonzero state at t = 0");
    }
    let mut start = initial.clone();
    start.coeffs.iter_mut().for_each(|c| *c /= norm);
    let mut trace = vec![(0.0, start.tail_norm())];
    evolve_observed(&start, problem, 1.0, |s| trace.push((s.time, s.tail_norm())))?;
    let plateau = trace.iter().filter(|(t, _)| *t >= 0.5).map(|&(_, r)| r).fold(0.0, f64::max);
    let c1 = start.coeffs[0].abs();
    let eps = problem.epsilon;
    let kappa1 = 0.5 * ((c1 * c1 + 4.0 * plateau).sqrt() - c1) / eps;
    let rate = problem.q1() / eps;
    let kappa2 = trace
        .iter()
        .filter(|&&(t, r)| t > 0.0 && r > plateau)
        .map(|&(t, r)| -(r - plateau).ln() / (rate * t))
        .fold(f64::INFINITY, f64::min);
    Ok(TailBoundFit {
        epsilon: eps,
        kappa1,
        kappa2,
        plateau,
        samples: trace.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(eps: f64) -> CanonicalProblem {
        CanonicalProblem::new(Arc::new(AffineQ { a: 1.0, b: 0.5 }), eps, 20).unwrap()
    }

    #[test]
    fn constant_q_is_exact() {
        let p = CanonicalProblem::new(Arc::new(ConstantQ(1.7)), 0.05, 12).unwrap();
        let s0 = project_initial(0.8, &p).unwrap();
        let s1 = evolve(&s0, &p, 0.6).unwrap();
        let q23 = 1.7f64.powf(2.0 / 3.0);
        for n in 1..=12 {
            let exact = s0.coeffs[n - 1] * (-(p.basis().alpha(n) - p.basis().alpha(1)) * q23 * 0.6 / 0.05).exp();
            assert!((s1.coeffs[n - 1] - exact).abs() <= 1e-10 * exact.abs().max(1e-300));
        }
        assert!((s1.ground_exponent - q23 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = affine(0.05);
        assert!(project_initial(0.0, &p).is_err());
        assert!(project_initial(-1.0, &p).is_err());
        let s = project_initial(1.0, &p).unwrap();
        let later = evolve(&s, &p, 0.5).unwrap();
        assert!(evolve(&later, &p, 0.2).is_err());
        assert!(CanonicalProblem::new(Arc::new(AffineQ { a: 1.0, b: -2.0 }), 0.1, 5).is_err());
    }

    #[test]
    fn step_budget_guard() {
        let p = CanonicalProblem::new(Arc::new(ConstantQ(1.0)), 1e-9, 4).unwrap();
        let s = project_initial(1.0, &p).unwrap();
        let err = evolve(&s, &p, 1.0).unwrap_err();
        assert!(err.to_string().contains("epsilon too small"));
    }

    #[test]
    fn norm_never_grows() {
        let p = affine(0.02);
        let s0 = project_function(|x| x * (-4.0 * (x - 1.0) * (x - 1.0)).exp(), 8.0, &p);
        let mut last = s0.norm();
        evolve_observed(&s0, &p, 1.0, |s| {
            assert!(s.norm() <= last * (1.0 + 1e-9));
            last = s.norm();
        })
        .unwrap();
    }

    #[test]
    fn tail_envelope_for_constant_q() {
        // no coupling: the plateau is the tail at t = 1/2 and the rate is at least alpha_2 - alpha_1
        let p = CanonicalProblem::new(Arc::new(ConstantQ(1.0)), 0.05, 20).unwrap();
        let s0 = project_initial(0.7, &p).unwrap();
        let fit = fit_tail_bound(&s0, &p).unwrap();
        assert!(fit.plateau < 1e-6);
        assert!(fit.kappa2 > 0.9 * (p.basis().alpha(2) - p.basis().alpha(1)), "{fit:?}");
    }

    #[test]
    fn parses_q_specs() {
        assert!((parse_q("const:2").unwrap().q(0.3) - 2.0).abs() < 1e-15);
        assert!((parse_q("affine:1,0.5").unwrap().q(1.0) - 1.5).abs() < 1e-15);
        let c = parse_q("canonical:1000:leading:linear2").unwrap();
        // tau = 0 maps to s = 0: q = 2 |sigma'| / sigma^4 = 2/16
        assert!((c.q(0.0) - 0.125).abs() < 1e-9);
        assert!(parse_q("const:-1").is_err());
        assert!(parse_q("bogus").is_err());
    }

    #[test]
    fn canonical_log_derivative_matches_fd() {
        let c = parse_q("canonical:1000:qt:linear2").unwrap();
        for &tau in &[0.2, 0.5, 0.8] {
            let h = 1e-4;
            let fd = ((c.q(tau + h)).ln() - (c.q(tau - h)).ln()) / (2.0 * h);
            assert!((fd - c.log_derivative(tau)).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn truncation_rule() {
        let n = min_truncation(1.0);
        assert!(n >= 5 && n <= DEFAULT_TRUNCATION);
    }
}

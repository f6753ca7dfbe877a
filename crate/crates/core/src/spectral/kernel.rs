use std::sync::Arc;

use crate::error::Result;
use crate::predictor::{Curves, QTag};

use super::{evolve, project_initial, CanonicalProblem, CanonicalQ, SpectralState};

/// The fundamental solution `g(x, . ; t)` started from a unit mass at `x`.
#[derive(Debug, Clone)]
pub struct FundamentalSolution {
    pub state: SpectralState,
    alpha1: f64,
}

impl FundamentalSolution {
    pub fn new(x: f64, t: f64, problem: &CanonicalProblem) -> Result<Self> {
        if t < 4.0 * problem.epsilon() {
            log::warn!(
                "time below proposition regime: t = {t} < 4 eps = {}",
                4.0 * problem.epsilon()
            );
        }
        let state = evolve(&project_initial(x, problem)?, problem, t)?;
        Ok(Self {
            state,
            alpha1: problem.basis().alpha(1),
        })
    }

    /// `exp(-eps^{-1} alpha_1 int_0^t q^{2/3})`.
    pub fn ground_decay(&self) -> f64 {
        (-self.alpha1 * self.state.ground_exponent / self.state.epsilon).exp()
    }

    /// `g(x, y; t)`.
    pub fn eval(&self, problem: &CanonicalProblem, y: f64) -> f64 {
        self.ground_decay() * self.eval_rescaled(problem, y)
    }

    /// `exp(eps^{-1} alpha_1 int_0^t q^{2/3}) g(x, y; t)`.
    pub fn eval_rescaled(&self, problem: &CanonicalProblem, y: f64) -> f64 {
        self.state.reconstruct(problem.basis(), y)
    }
}

/// `g(x, y; t)` by truncated eigen-expansion.
pub fn fundamental_g(x: f64, y: f64, t: f64, problem: &CanonicalProblem) -> Result<f64> {
    Ok(FundamentalSolution::new(x, t, problem)?.eval(problem, y))
}

/// Fundamental solution of
/// `u_t = sigma^2(t/T)/2 u_xx + (-Q(t) x / T + T^{-2/3} alpha_1 Q^{2/3} (sigma^2/2)^{1/3}) u`
/// on `[0, T]`, obtained from the canonical problem by the change of
/// variables `tau = J(t/T)/J(1)`, `y = T^{-1/3} x`, with
/// `eps = 1 / (J(1) T^{1/3})`.
#[derive(Debug, Clone)]
pub struct KernelTransport {
    problem: CanonicalProblem,
    curves: Arc<Curves>,
    horizon: f64,
    tag: QTag,
}

impl KernelTransport {
    pub fn new(curves: Arc<Curves>, horizon: f64, tag: QTag, truncation: usize) -> Result<Self> {
        let q = CanonicalQ::new(curves.clone(), horizon, tag)?;
        let epsilon = 1.0 / (curves.j1() * horizon.cbrt());
        let problem = CanonicalProblem::new(Arc::new(q), epsilon, truncation)?;
        Ok(Self {
            problem,
            curves,
            horizon,
            tag,
        })
    }

    pub fn problem(&self) -> &CanonicalProblem {
        &self.problem
    }

    pub fn tag(&self) -> QTag {
        self.tag
    }

    /// `Q(t)` in the original time variable.
    pub fn big_q(&self, t: f64) -> f64 {
        let s = t / self.horizon;
        match self.tag {
            QTag::QT => self.curves.q_t_raw(self.horizon, s),
            QTag::Leading => {
                let p = self.curves.profile();
                p.dsigma(s).abs() / p.sigma(s).powi(2)
            }
        }
    }

    /// Canonical time `J(t/T)/J(1)`.
    pub fn tau(&self, t: f64) -> f64 {
        self.curves.j(t / self.horizon) / self.curves.j1()
    }

    /// `G(x, . ; t)` as a closure-ready evaluator.
    pub fn kernel_from(&self, x: f64, t: f64) -> Result<TransportedKernel<'_>> {
        let scale = self.horizon.cbrt().recip();
        let fundamental = FundamentalSolution::new(scale * x, self.tau(t), &self.problem)?;
        Ok(TransportedKernel {
            owner: self,
            fundamental,
            scale,
        })
    }

    /// `G(x, y; t)`.
    pub fn kernel(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        Ok(self.kernel_from(x, t)?.eval(y))
    }
}

pub struct TransportedKernel<'a> {
    owner: &'a KernelTransport,
    fundamental: FundamentalSolution,
    scale: f64,
}

impl TransportedKernel<'_> {
    /// The exponential weight of the change of variables equals the inverse
    /// of the canonical ground decay, so the two are cancelled analytically.
    pub fn eval(&self, y: f64) -> f64 {
        self.scale * self.fundamental.eval_rescaled(&self.owner.problem, self.scale * y)
    }
}

/// `G(x, y; t)` for the profile behind `curves` at horizon `T`.
pub fn transport_kernel(
    x: f64,
    y: f64,
    t: f64,
    curves: Arc<Curves>,
    tag: QTag,
    horizon: f64,
    truncation: usize,
) -> Result<f64> {
    KernelTransport::new(curves, horizon, tag, truncation)?.kernel(x, y, t)
}

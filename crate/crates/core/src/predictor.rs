//! Deterministic curves attached to a variance profile: `v`, `w`, `J`, the
//! predicted maximum `m'_T`, the barriers `gamma_T` and `zeta_T`, the glue
//! function `phi_T` and the potentials `q_T`.

use std::sync::Arc;

use serde::Serialize;

use crate::airy;
use crate::error::{domain, Error, Result};
use crate::quad;
use crate::sigma::{SigmaProfile, VALIDATION_GRID};

const QUAD_TOL: f64 = 1e-12;
const TABLE_KNOTS: usize = 4097;

/// `2^{-1/3} alpha_1`.
pub fn w_constant() -> f64 {
    2f64.powf(-1.0 / 3.0) * airy::airy_zero(1).expect("first zero")
}

fn check_unit(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return domain(format!("t = {t} outside [0, 1]"));
    }
    Ok(())
}

fn w_density(p: &SigmaProfile, s: f64, c: f64) -> f64 {
    c * p.sigma(s).cbrt() * p.dsigma(s).abs().powf(2.0 / 3.0)
}

/// `v(t) = int_0^t sigma`.
pub fn v_of(p: &SigmaProfile, t: f64) -> Result<f64> {
    check_unit(t)?;
    Ok(quad::simpson(|s| p.sigma(s), 0.0, t, QUAD_TOL))
}

/// `w(t) = 2^{-1/3} alpha_1 int_0^t sigma^{1/3} |sigma'|^{2/3}`.
pub fn w_of(p: &SigmaProfile, t: f64) -> Result<f64> {
    check_unit(t)?;
    let c = w_constant();
    Ok(quad::simpson(|s| w_density(p, s, c), 0.0, t, QUAD_TOL))
}

/// `J(t) = int_0^t sigma^2 / 2`.
pub fn j_of(p: &SigmaProfile, t: f64) -> Result<f64> {
    check_unit(t)?;
    Ok(quad::simpson(|s| 0.5 * p.sigma(s).powi(2), 0.0, t, QUAD_TOL))
}

/// Cubic Hermite tables of `v`, `w` and `J` built once per profile, for
/// callers that evaluate the curves millions of times.
#[derive(Debug, Clone)]
pub struct Curves {
    profile: SigmaProfile,
    c: f64,
    v: Vec<f64>,
    w: Vec<f64>,
    j: Vec<f64>,
}

impl Curves {
    pub fn new(profile: SigmaProfile) -> Self {
        let c = w_constant();
        let n = TABLE_KNOTS;
        let h = 1.0 / (n - 1) as f64;
        let (mut v, mut w, mut j) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 1..n {
            let (a, b) = ((i - 1) as f64 * h, i as f64 * h);
            v[i] = v[i - 1] + quad::simpson(|s| profile.sigma(s), a, b, 1e-15);
            w[i] = w[i - 1] + quad::simpson(|s| w_density(&profile, s, c), a, b, 1e-15);
            j[i] = j[i - 1] + quad::simpson(|s| 0.5 * profile.sigma(s).powi(2), a, b, 1e-15);
        }
        Self { profile, c, v, w, j }
    }

    pub fn profile(&self) -> &SigmaProfile {
        &self.profile
    }

    fn hermite(&self, table: &[f64], s: f64, deriv: impl Fn(f64) -> f64) -> f64 {
        let n = table.len();
        let h = 1.0 / (n - 1) as f64;
        let s = s.clamp(0.0, 1.0);
        let i = ((s / h) as usize).min(n - 2);
        let (s0, s1) = (i as f64 * h, (i + 1) as f64 * h);
        let t = (s - s0) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * table[i]
            + (t3 - 2.0 * t2 + t) * h * deriv(s0)
            + (-2.0 * t3 + 3.0 * t2) * table[i + 1]
            + (t3 - t2) * h * deriv(s1)
    }

    pub fn v(&self, s: f64) -> f64 {
        self.hermite(&self.v, s, |x| self.profile.sigma(x))
    }

    pub fn w(&self, s: f64) -> f64 {
        self.hermite(&self.w, s, |x| w_density(&self.profile, x, self.c))
    }

    pub fn j(&self, s: f64) -> f64 {
        self.hermite(&self.j, s, |x| 0.5 * self.profile.sigma(x).powi(2))
    }

    pub fn v1(&self) -> f64 {
        self.v[self.v.len() - 1]
    }

    pub fn w1(&self) -> f64 {
        self.w[self.w.len() - 1]
    }

    pub fn j1(&self) -> f64 {
        self.j[self.j.len() - 1]
    }

    /// Inverse of `J` by bisection to `1e-12`.
    pub fn j_inverse(&self, y: f64) -> Result<f64> {
        if !(0.0..=self.j1() * (1.0 + 1e-14)).contains(&y) {
            return domain(format!("J^-1 argument {y} outside [0, J(1)]"));
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.j(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `gamma_T(t) = T v(t/T) - T^{1/3} w(t/T)`.
    pub fn gamma(&self, horizon: f64, t: f64) -> Result<f64> {
        if !(0.0..=horizon).contains(&t) {
            return domain(format!("t = {t} outside [0, {horizon}]"));
        }
        Ok(self.gamma_unchecked(horizon, t))
    }

    pub(crate) fn gamma_unchecked(&self, horizon: f64, t: f64) -> f64 {
        let s = t / horizon;
        horizon * self.v(s) - horizon.cbrt() * self.w(s)
    }

    /// `w'(s) / sigma(s)`.
    pub fn w_prime_over_sigma(&self, s: f64) -> f64 {
        w_density(&self.profile, s, self.c) / self.profile.sigma(s)
    }

    /// `(w'/sigma^2)'` from the analytic derivatives of `sigma`.
    fn correction(&self, s: f64) -> f64 {
        let p = &self.profile;
        let (sg, d1, d2) = (p.sigma(s), p.dsigma(s).abs(), p.d2sigma(s));
        if d1 == 0.0 {
            return 0.0;
        }
        self.c
            * (5.0 / 3.0 * sg.powf(-8.0 / 3.0) * d1.powf(5.0 / 3.0)
                - 2.0 / 3.0 * sg.powf(-5.0 / 3.0) * d1.powf(-1.0 / 3.0) * d2)
    }

    fn leading_q(&self, s: f64) -> f64 {
        self.profile.dsigma(s).abs() / self.profile.sigma(s).powi(2)
    }

    /// `q_T(t) = |sigma'|/sigma^2 + T^{-2/3} (w'/sigma^2)'` without the sign check.
    pub fn q_t_raw(&self, horizon: f64, t: f64) -> f64 {
        self.leading_q(t) + horizon.powf(-2.0 / 3.0) * self.correction(t)
    }

    /// `q_T(t)`; errors if it is not positive at `t`.
    pub fn q_t(&self, horizon: f64, t: f64) -> Result<f64> {
        check_unit(t)?;
        let q = self.q_t_raw(horizon, t);
        if !(q > 0.0) {
            return Err(Error::NonPositivePotential { at: t, value: q });
        }
        Ok(q)
    }

    /// Checks positivity of `q_T` on the validation grid.
    pub fn q_t_check(&self, horizon: f64) -> Result<()> {
        for i in 0..VALIDATION_GRID {
            self.q_t(horizon, i as f64 / (VALIDATION_GRID - 1) as f64)?;
        }
        Ok(())
    }

    /// Smallest horizon above which `q_T > 0` on the validation grid.
    pub fn q_t_threshold(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..VALIDATION_GRID {
            let s = i as f64 / (VALIDATION_GRID - 1) as f64;
            let (a, b) = (self.leading_q(s), self.correction(s));
            if b < 0.0 {
                worst = worst.max(if a > 0.0 { -b / a } else { f64::INFINITY });
            }
        }
        worst.powf(1.5)
    }

    /// The canonical potential at `tau in [0, 1]`:
    /// `q(tau) = 2 Q(s) / sigma(s)^2` with `J(s) = tau J(1)`.
    pub fn q_canonical(&self, horizon: f64, tag: QTag, tau: f64) -> Result<f64> {
        check_unit(tau)?;
        let s = self.j_inverse(tau * self.j1())?;
        let big_q = match tag {
            QTag::QT => self.q_t(horizon, s)?,
            QTag::Leading => self.leading_q(s),
        };
        Ok(2.0 * big_q / self.profile.sigma(s).powi(2))
    }

    /// `s_0 = J^{-1}(4 T^{-1/3}) T`.
    pub fn s0(&self, horizon: f64) -> Result<f64> {
        Ok(self.j_inverse(4.0 * horizon.powf(-1.0 / 3.0))? * horizon)
    }
}

/// Which `Q` enters the canonical potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QTag {
    /// `Q(t) = q_T(t/T)`
    QT,
    /// `Q(t) = |sigma'(t/T)| / sigma(t/T)^2`
    Leading,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionBundle {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub v1: f64,
    pub w1: f64,
    pub m_prime: f64,
    pub sigma0: f64,
    pub sigma1: f64,
}

/// `m'_T = v(1) T - w(1) T^{1/3} - sigma(1) log T`.
pub fn m_prime(curves: &Curves, horizon: f64) -> Result<PredictionBundle> {
    if !(horizon >= 3.0) {
        return Err(Error::HorizonTooSmall(horizon));
    }
    let p = curves.profile();
    let (v1, w1) = (curves.v1(), curves.w1());
    let sigma1 = p.sigma(1.0);
    Ok(PredictionBundle {
        horizon,
        v1,
        w1,
        m_prime: v1 * horizon - w1 * horizon.cbrt() - sigma1 * horizon.ln(),
        sigma0: p.sigma(0.0),
        sigma1,
    })
}

/// Parabola-line glue that bends the barrier down by `sigma(1) log T` over
/// the last `T^{2/3}` time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiParams {
    pub horizon: f64,
    /// Window length `T^{2/3}`.
    pub h: f64,
    /// Total drop `sigma(1) log T`.
    pub drop: f64,
    /// Parabola coefficient `4 S / (3 h^2)`.
    pub a: f64,
}

pub fn build_phi(profile: &SigmaProfile, horizon: f64) -> Result<PhiParams> {
    let h = horizon.powf(2.0 / 3.0);
    let drop = profile.sigma(1.0) * horizon.ln();
    if !(drop > 0.0 && h >= 8.0) {
        return Err(Error::HorizonTooSmallForGlue(horizon));
    }
    Ok(PhiParams {
        horizon,
        h,
        drop,
        a: 4.0 * drop / (3.0 * h * h),
    })
}

impl PhiParams {
    /// Start of the bending window, `T - T^{2/3}`.
    pub fn glue_start(&self) -> f64 {
        self.horizon - self.h
    }

    pub fn value(&self, t: f64) -> f64 {
        let u = t - self.glue_start();
        if u <= 0.0 {
            0.0
        } else if u <= 0.5 * self.h {
            self.a * u * u
        } else {
            self.a * self.h * (u - 0.25 * self.h)
        }
    }

    pub fn slope(&self, t: f64) -> f64 {
        let u = t - self.glue_start();
        if u <= 0.0 {
            0.0
        } else if u <= 0.5 * self.h {
            2.0 * self.a * u
        } else {
            self.a * self.h
        }
    }

    pub fn curvature(&self, t: f64) -> f64 {
        let u = t - self.glue_start();
        if u > 0.0 && u <= 0.5 * self.h {
            2.0 * self.a
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BarrierVariant {
    GammaPlusK,
    Zeta,
}

/// A barrier curve `gamma_T + K` or `zeta_T = gamma_T + K - phi_T`.
#[derive(Debug, Clone)]
pub struct BarrierSpec {
    pub horizon: f64,
    pub k: f64,
    pub variant: BarrierVariant,
    pub phi: PhiParams,
    curves: Arc<Curves>,
}

impl BarrierSpec {
    pub fn new(curves: Arc<Curves>, horizon: f64, k: f64, variant: BarrierVariant) -> Result<Self> {
        if !(k >= 1.0) {
            return Err(Error::KOutOfRegime(k));
        }
        if k > horizon.cbrt() {
            log::warn!("K = {k} exceeds T^(1/3) = {:.3}", horizon.cbrt());
        }
        let phi = build_phi(curves.profile(), horizon)?;
        Ok(Self {
            horizon,
            k,
            variant,
            phi,
            curves,
        })
    }

    pub fn curves(&self) -> &Curves {
        &self.curves
    }

    pub fn gamma(&self, t: f64) -> Result<f64> {
        self.curves.gamma(self.horizon, t)
    }

    /// The barrier at `t`.
    pub fn zeta(&self, t: f64) -> Result<f64> {
        let g = self.gamma(t)?;
        Ok(match self.variant {
            BarrierVariant::GammaPlusK => g + self.k,
            BarrierVariant::Zeta => g + self.k - self.phi.value(t),
        })
    }

    pub(crate) fn zeta_unchecked(&self, t: f64) -> f64 {
        let g = self.curves.gamma_unchecked(self.horizon, t);
        match self.variant {
            BarrierVariant::GammaPlusK => g + self.k,
            BarrierVariant::Zeta => g + self.k - self.phi.value(t),
        }
    }
}

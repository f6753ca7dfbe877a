//! Airy function of the first kind, its zeros, and the Dirichlet eigenbasis
//! of `u'' - x u` on the half line.
//!
//! `Ai` is evaluated by Taylor continuation of the Airy ODE from a cached
//! table of `(Ai, Ai')` pairs. The table is seeded with the exact values at
//! the origin for `x <= 0` and with the decaying asymptotic expansion at
//! `x = 12` for `x > 0`; continuation toward smaller `x` is stable on both
//! sides because `Ai` is the recessive solution. Outside the table the
//! asymptotic expansions are used directly.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quad;

/// `Ai(0) = 3^{-2/3} / Gamma(2/3)`.
pub const AI_ZERO: f64 = 0.355_028_053_887_817_239;
/// `Ai'(0) = -3^{-1/3} / Gamma(1/3)`.
pub const AI_PRIME_ZERO: f64 = -0.258_819_403_792_806_798;

/// Largest zero index served by [`airy_zero`].
pub const MAX_ZERO_INDEX: usize = 200;

/// Default number of eigenmodes kept in spectral expansions.
pub const DEFAULT_TRUNCATION: usize = 40;

const TABLE_MIN: f64 = -128.0;
const TABLE_MAX: f64 = 12.0;
const TABLE_STEP: f64 = 0.125;

struct AiryTable {
    values: Vec<(f64, f64)>,
    seam_mismatch: f64,
}

fn table() -> &'static AiryTable {
    static TABLE: OnceLock<AiryTable> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

fn build_table() -> AiryTable {
    let n_neg = (-TABLE_MIN / TABLE_STEP).round() as usize;
    let n_pos = (TABLE_MAX / TABLE_STEP).round() as usize;
    let mut values = vec![(0.0, 0.0); n_neg + n_pos + 1];

    // x > 0: integrate down from the asymptotic anchor.
    let (mut y, mut yp) = asymptotic_positive(TABLE_MAX);
    values[n_neg + n_pos] = (y, yp);
    for k in (0..n_pos).rev() {
        let x0 = (k + 1) as f64 * TABLE_STEP;
        (y, yp) = taylor(x0, y, yp, -TABLE_STEP);
        values[n_neg + k] = (y, yp);
    }
    let seam_mismatch = (y - AI_ZERO).abs().max((yp - AI_PRIME_ZERO).abs());

    // x <= 0: integrate down from the exact values at the origin.
    let (mut y, mut yp) = (AI_ZERO, AI_PRIME_ZERO);
    values[n_neg] = (y, yp);
    for k in (0..n_neg).rev() {
        let x0 = -((n_neg - k - 1) as f64) * TABLE_STEP;
        (y, yp) = taylor(x0, y, yp, -TABLE_STEP);
        values[k] = (y, yp);
    }
    AiryTable { values, seam_mismatch }
}

/// Discrepancy at `x = 0` between the continuation coming down from the
/// asymptotic anchor and the exact values `Ai(0)`, `Ai'(0)`.
pub fn seam_mismatch() -> f64 {
    table().seam_mismatch
}

/// Taylor step of `y'' = x y` from `x0` by `h`.
fn taylor(x0: f64, y0: f64, yp0: f64, h: f64) -> (f64, f64) {
    // a_{n+2} = (x0 a_n + a_{n-1}) / ((n+1)(n+2))
    let scale = y0.abs() + yp0.abs() + f64::MIN_POSITIVE;
    let (mut am1, mut a0, mut a1) = (0.0, y0, yp0);
    let mut y = y0 + yp0 * h;
    let mut yp = yp0;
    let mut hp = h; // h^n for the coefficient a_{n+1}
    let mut quiet = 0;
    for n in 0..120usize {
        let a2 = (x0 * a0 + am1) / ((n + 1) as f64 * (n + 2) as f64);
        let dy = a2 * hp * h;
        let dyp = (n + 2) as f64 * a2 * hp;
        y += dy;
        yp += dyp;
        hp *= h;
        am1 = a0;
        a0 = a1;
        a1 = a2;
        if dy.abs() + dyp.abs() < 1e-18 * scale {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    (y, yp)
}

/// Coefficients `u_k` and `v_k` of the Airy asymptotic expansions.
fn asymptotic_coefficients(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    u.push(1.0);
    v.push(1.0);
    for k in 1..count {
        let kf = k as f64;
        let uk = u[k - 1] * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / ((2.0 * kf - 1.0) * 216.0 * kf);
        u.push(uk);
        v.push(-(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * uk);
    }
    (u, v)
}

fn asymptotic_positive(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let (u, v) = asymptotic_coefficients(40);
    let (mut su, mut sv) = (0.0, 0.0);
    let mut zk = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..u.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let tu = sign * u[k] * zk;
        if tu.abs() > last {
            break;
        }
        last = tu.abs();
        su += tu;
        sv += sign * v[k] * zk;
        if tu.abs() < 1e-18 {
            break;
        }
        zk /= zeta;
    }
    let pref = (-zeta).exp() / (2.0 * PI.sqrt());
    let x4 = x.powf(0.25);
    (pref / x4 * su, -pref * x4 * sv)
}

fn asymptotic_negative(z: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let (u, v) = asymptotic_coefficients(40);
    // even/odd partial sums with alternating signs
    let (mut ue, mut uo, mut ve, mut vo) = (0.0, 0.0, 0.0, 0.0);
    let mut zk = 1.0;
    for k in 0..u.len() {
        let term = u[k] * zk;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            ue += sign * term;
            ve += sign * v[k] * zk;
        } else {
            uo += sign * term;
            vo += sign * v[k] * zk;
        }
        if term.abs() < 1e-18 {
            break;
        }
        zk /= zeta;
    }
    let phase = zeta - PI / 4.0;
    let (s, c) = phase.sin_cos();
    let z4 = z.powf(0.25);
    let ai = (c * ue + s * uo) / (PI.sqrt() * z4);
    let aip = z4 * (s * ve - c * vo) / PI.sqrt();
    (ai, aip)
}

/// `(Ai(x), Ai'(x))`.
pub fn airy_pair(x: f64) -> (f64, f64) {
    if x > TABLE_MAX {
        return asymptotic_positive(x);
    }
    if x < TABLE_MIN {
        return asymptotic_negative(-x);
    }
    let t = table();
    let k = ((x - TABLE_MIN) / TABLE_STEP).round() as usize;
    let k = k.min(t.values.len() - 1);
    let x0 = TABLE_MIN + k as f64 * TABLE_STEP;
    let (y0, yp0) = t.values[k];
    if x == x0 {
        return (y0, yp0);
    }
    taylor(x0, y0, yp0, x - x0)
}

/// Airy function of the first kind.
pub fn ai(x: f64) -> f64 {
    airy_pair(x).0
}

/// Derivative of [`ai`].
pub fn ai_prime(x: f64) -> f64 {
    airy_pair(x).1
}

fn zero_seed(n: usize) -> f64 {
    let t = 3.0 * PI * (4.0 * n as f64 - 1.0) / 8.0;
    let t2 = t.powi(-2);
    t.powf(2.0 / 3.0) * (1.0 + 5.0 / 48.0 * t2 - 5.0 / 36.0 * t2 * t2 + 77125.0 / 82944.0 * t2.powi(3))
}

/// Refines the `n`-th zero (as a positive number) inside a sign-change bracket.
fn refine_zero(n: usize) -> f64 {
    let seed = zero_seed(n);
    let f = |a: f64| ai(-a);
    let mut half = 0.1;
    let (mut lo, mut hi) = (seed - half, seed + half);
    while f(lo).signum() == f(hi).signum() {
        half *= 1.5;
        lo = seed - half;
        hi = seed + half;
        assert!(half < 2.0, "no Airy zero bracket near {seed}");
    }
    let mut flo = f(lo);
    let mut a = seed.clamp(lo, hi);
    for _ in 0..200 {
        let (y, yp) = airy_pair(-a);
        // d/da Ai(-a) = -Ai'(-a)
        let step = if yp != 0.0 { y / yp } else { f64::NAN };
        let mut next = a + step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let fn_ = f(next);
        if fn_.signum() == flo.signum() {
            lo = next;
            flo = fn_;
        } else {
            hi = next;
        }
        let done = (next - a).abs() < 1e-15 * next.max(1.0) || hi - lo < 1e-14;
        a = next;
        if done || fn_ == 0.0 {
            break;
        }
    }
    a
}

fn zero_table() -> &'static [f64] {
    static ZEROS: OnceLock<Vec<f64>> = OnceLock::new();
    ZEROS.get_or_init(|| (1..=MAX_ZERO_INDEX).map(refine_zero).collect())
}

/// `alpha_n`: the `n`-th zero of `Ai` on the negative axis, returned positive.
pub fn airy_zero(n: usize) -> Result<f64> {
    if n == 0 || n > MAX_ZERO_INDEX {
        return Err(Error::ZeroIndexExceedsTable {
            requested: n,
            max: MAX_ZERO_INDEX,
        });
    }
    Ok(zero_table()[n - 1])
}

/// Cached zeros, normalizers and eigenfunction evaluators for the first `N`
/// Dirichlet Airy modes.
///
/// Modes are signed so that `psi_n'(0) = 1`; the normalizer is
/// `|Ai'(-alpha_n)|`, which equals `||Ai(. - alpha_n)||_2`.
#[derive(Debug, Clone)]
pub struct AiryBasis {
    zeros: Vec<f64>,
    normalizers: Vec<f64>,
    slopes: Vec<f64>,
}

impl AiryBasis {
    pub fn new(truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::Domain("truncation must be positive".into()));
        }
        let zeros = (1..=truncation).map(airy_zero).collect::<Result<Vec<_>>>()?;
        let slopes: Vec<f64> = zeros.iter().map(|&a| ai_prime(-a)).collect();
        let normalizers = slopes.iter().map(|s| s.abs()).collect();
        Ok(Self {
            zeros,
            normalizers,
            slopes,
        })
    }

    pub fn truncation(&self) -> usize {
        self.zeros.len()
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    /// `alpha_n` for `1 <= n <= N`.
    pub fn alpha(&self, n: usize) -> f64 {
        self.zeros[n - 1]
    }

    /// `psi_n(x) = Ai(x - alpha_n) / Ai'(-alpha_n)`.
    pub fn psi(&self, n: usize, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        ai(x - self.zeros[n - 1]) / self.slopes[n - 1]
    }

    pub fn psi_prime(&self, n: usize, x: f64) -> f64 {
        ai_prime(x - self.zeros[n - 1]) / self.slopes[n - 1]
    }

    /// `psi_n^q(x) = q^{1/6} psi_n(q^{1/3} x)`, eigenfunction of
    /// `u'' - q x u` with eigenvalue `-alpha_n q^{2/3}`.
    pub fn psi_scaled(&self, n: usize, q: f64, x: f64) -> Result<f64> {
        if q <= 0.0 || !q.is_finite() {
            return Err(Error::Domain(format!("scaling q = {q} must be positive")));
        }
        Ok(self.psi_scaled_unchecked(n, q, x))
    }

    pub(crate) fn psi_scaled_unchecked(&self, n: usize, q: f64, x: f64) -> f64 {
        q.powf(1.0 / 6.0) * self.psi(n, q.cbrt() * x)
    }

    pub fn psi_scaled_prime(&self, n: usize, q: f64, x: f64) -> Result<f64> {
        if q <= 0.0 || !q.is_finite() {
            return Err(Error::Domain(format!("scaling q = {q} must be positive")));
        }
        Ok(q.sqrt() * self.psi_prime(n, q.cbrt() * x))
    }

    /// Right end of the support used for quadrature of mode `n`.
    pub fn support_end(&self, n: usize) -> f64 {
        self.zeros[n - 1] + 15.0
    }

    /// `<|psi_n|, x>` by adaptive quadrature, split at the nodes of `psi_n`.
    pub fn inner_weighted_x(&self, n: usize) -> f64 {
        let alpha_n = self.zeros[n - 1];
        let mut breaks: Vec<f64> = (1..n).rev().map(|k| alpha_n - airy_zero(k).unwrap_or(0.0)).collect();
        breaks.insert(0, 0.0);
        breaks.push(alpha_n + 15.0);
        let f = |x: f64| self.psi(n, x).abs() * x;
        let mut total: f64 = breaks.windows(2).map(|w| quad::simpson(f, w[0], w[1], 1e-11)).sum();
        total += quad::simpson_to_decay(f, alpha_n + 15.0, 5.0, 1e-12);
        total
    }

    /// `max_m |<psi_n, psi_m> - delta_nm|` over the basis, integrated on
    /// `[0, alpha_N + 15]`.
    pub fn gram_error(&self, n: usize) -> f64 {
        let end = self.support_end(self.truncation());
        (1..=self.truncation())
            .map(|m| {
                let ip = quad::simpson(|x| self.psi(n, x) * self.psi(m, x), 0.0, end, 1e-12);
                (ip - if m == n { 1.0 } else { 0.0 }).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|psi_n'' - x psi_n + alpha_n psi_n|` with a central second
    /// difference of width `1e-3`, sampled over `(0, alpha_n + 10)`.
    pub fn eigen_residual(&self, n: usize) -> f64 {
        let h = 1e-3;
        let alpha = self.alpha(n);
        let samples = ((alpha + 10.0) / 0.01) as usize;
        (1..samples)
            .map(|i| {
                let x = 0.01 * i as f64;
                let d2 = (self.psi(n, x + h) - 2.0 * self.psi(n, x) + self.psi(n, x - h)) / (h * h);
                (d2 - (x - alpha) * self.psi(n, x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// The antisymmetric mode-coupling matrix generated by `d/dq` of the scaled
/// basis: `A_ij = (1/6)[(x psi_i', psi_j) - (x psi_j', psi_i)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CouplingMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)`, 1-based.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i - 1) * self.n + (j - 1)]
    }

    pub fn as_rows(&self) -> &[f64] {
        &self.entries
    }

    /// `out = A c`.
    pub fn apply(&self, c: &[f64], out: &mut [f64]) {
        for (row, o) in self.entries.chunks_exact(self.n).zip(out.iter_mut()) {
            *o = row.iter().zip(c).map(|(a, b)| a * b).sum();
        }
    }
}

/// Closed form of the coupling matrix for the `psi_n'(0) = 1` convention:
/// `A_ij = 2 / (alpha_j - alpha_i)^3` off the diagonal.
pub fn coupling_matrix(n: usize) -> Result<CouplingMatrix> {
    if n < 2 {
        return Err(Error::Domain(format!("coupling matrix needs N >= 2, got {n}")));
    }
    let zeros = (1..=n).map(airy_zero).collect::<Result<Vec<_>>>()?;
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                entries[i * n + j] = 2.0 / (zeros[j] - zeros[i]).powi(3);
            }
        }
    }
    Ok(CouplingMatrix { n, entries })
}

//! Quadrature helpers.
//!
//! Everything integrates with adaptive Simpson. Semi-infinite integrals are
//! cut where the integrand has decayed below [`DECAY_FLOOR`].

/// Integrand magnitude below which a tail is treated as zero.
pub const DECAY_FLOOR: f64 = 1e-14;

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // A coarse first split keeps oscillatory integrands from fooling the
    // initial error estimate.
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for i in 0..pieces {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == pieces { b } else { lo + h };
        let flo = f(lo);
        let fhi = f(hi);
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let s = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += recurse(&f, lo, hi, flo, fmid, fhi, s, tol / pieces as f64, MAX_DEPTH);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates `f` over `[a, inf)` in chunks of width `chunk`, stopping once
/// a whole chunk and its right endpoint are below [`DECAY_FLOOR`].
pub fn simpson_to_decay<F: Fn(f64) -> f64>(f: F, a: f64, chunk: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let mut lo = a;
    for _ in 0..10_000 {
        let hi = lo + chunk;
        let part = simpson(&f, lo, hi, tol);
        total += part;
        if part.abs() < DECAY_FLOOR && f(hi).abs() < DECAY_FLOOR {
            break;
        }
        lo = hi;
    }
    total
}

/// Composite trapezoid rule for samples on a uniform grid.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dx * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_tail() {
        let v = simpson_to_decay(|x: f64| (-x * x).exp(), 0.0, 2.0, 1e-12);
        assert!((v - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn oscillatory() {
        let v = simpson(|x: f64| (20.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!(v.abs() < 1e-10);
    }
}

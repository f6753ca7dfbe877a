//! Small statistics toolkit: moments, binomial intervals, least squares,
//! Kolmogorov-Smirnov distances and quantiles.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LineFit {
        slope,
        intercept,
        slope_se,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Ratio of largest to smallest `|R_ii|` after column scaling.
    pub condition: f64,
}

/// Least squares `min |X b - y|` by Householder QR. Columns are scaled to
/// unit norm before factorisation; `max_condition` bounds the ratio of the
/// extreme diagonal entries of `R`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64], max_condition: f64) -> Result<LeastSquares> {
    let m = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if m < p || p == 0 {
        return Err(Error::InsufficientHorizonSpread(format!(
            "{m} observations for {p} coefficients"
        )));
    }
    let scale: Vec<f64> = (0..p)
        .map(|j| rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt().max(f64::MIN_POSITIVE))
        .collect();
    let mut a: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&scale).map(|(v, s)| v / s).collect()).collect();
    let mut b = y.to_vec();
    for k in 0..p {
        let norm = (k..m).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InsufficientHorizonSpread("rank-deficient design".into()));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..p {
            let dot: f64 = (k..m).map(|i| v[i - k] * a[i][j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                a[i][j] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i - k] * b[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..m {
            b[i] -= f * v[i - k];
        }
    }
    let diag: Vec<f64> = (0..p).map(|k| a[k][k].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = dmax / dmin;
    if !(condition <= max_condition) {
        return Err(Error::InsufficientHorizonSpread(format!(
            "design condition {condition:.3e} exceeds {max_condition:.1e}"
        )));
    }
    // back substitution for the scaled coefficients and R^{-1}
    let mut coef = vec![0.0; p];
    for k in (0..p).rev() {
        let s: f64 = (k + 1..p).map(|j| a[k][j] * coef[j]).sum();
        coef[k] = (b[k] - s) / a[k][k];
    }
    let mut rinv = vec![vec![0.0; p]; p];
    for c in 0..p {
        for k in (0..=c).rev() {
            let rhs = if k == c { 1.0 } else { 0.0 };
            let s: f64 = (k + 1..=c).map(|j| a[k][j] * rinv[j][c]).sum();
            rinv[k][c] = (rhs - s) / a[k][k];
        }
    }
    let coefficients: Vec<f64> = coef.iter().zip(&scale).map(|(c, s)| c / s).collect();
    let residuals: Vec<f64> = rows
        .iter()
        .zip(y)
        .map(|(r, yi)| yi - r.iter().zip(&coefficients).map(|(x, c)| x * c).sum::<f64>())
        .collect();
    let dof = m.saturating_sub(p);
    let sigma2 = if dof > 0 {
        residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64
    } else {
        f64::NAN
    };
    let std_errors = (0..p)
        .map(|k| (sigma2 * (k..p).map(|j| rinv[k][j].powi(2)).sum::<f64>()).sqrt() / scale[k])
        .collect();
    Ok(LeastSquares {
        coefficients,
        std_errors,
        residuals,
        condition,
    })
}

/// Kolmogorov-Smirnov distance between a weighted empirical distribution and
/// a continuous CDF. Weights may be negative; they are normalised by their sum.
pub fn ks_weighted(atoms: &[(f64, f64)], cdf: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let mut sorted: Vec<(f64, f64)> = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].0;
        let before = acc;
        while i < sorted.len() && sorted[i].0 == x {
            acc += sorted[i].1 / total;
            i += 1;
        }
        let f = cdf(x);
        worst = worst.max((f - before).abs()).max((acc - f).abs());
    }
    worst
}

/// Asymptotic Kolmogorov p-value for a one-sample statistic `d` on `n` points.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k as i32 - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Quantile of an already sorted sample with linear interpolation.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
    }

    #[test]
    fn qr_recovers_polynomial() {
        let xs: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![x * x, *x, 1.0]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 3.0 * x * x - 2.0 * x + 0.5).collect();
        let fit = least_squares(&rows, &y, 1e12).unwrap();
        for (c, e) in fit.coefficients.iter().zip([3.0, -2.0, 0.5]) {
            assert!((c - e).abs() < 1e-10);
        }
    }

    #[test]
    fn qr_rejects_rank_deficiency() {
        let rows = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        assert!(least_squares(&rows, &[1.0, 2.0, 3.0], 1e12).is_err());
    }

    #[test]
    fn ks_uniform_grid() {
        let n = 1000;
        let atoms: Vec<(f64, f64)> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64, 1.0)).collect();
        let d = ks_weighted(&atoms, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn pvalue_limits() {
        assert!(kolmogorov_pvalue(0.001, 100) > 0.99);
        assert!(kolmogorov_pvalue(0.5, 100) < 1e-10);
    }

    #[test]
    fn ols_exact_line() {
        let f = ols(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 5.0, 7.0]);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-14);
    }
}

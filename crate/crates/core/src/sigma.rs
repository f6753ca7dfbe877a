//! Variance profiles `sigma: [0, 1] -> (0, inf)` with exact first and second
//! derivatives.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Number of points used by grid-based checks on `[0, 1]`.
pub const VALIDATION_GRID: usize = 1001;

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// `a - b s`
    Linear { a: f64, b: f64 },
    /// `a - b s^p`
    Power { a: f64, b: f64, p: f64 },
    /// `a + b exp(-k s)`
    Exp { a: f64, b: f64, k: f64 },
    Const { c: f64 },
    Tabulated(Table),
}

/// Knot table for a piecewise quintic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    s: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
    d2f: Vec<f64>,
}

impl Table {
    fn locate(&self, s: f64) -> (usize, f64, f64) {
        let n = self.s.len();
        let s = s.clamp(self.s[0], self.s[n - 1]);
        let i = match self.s.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => (i - 1).min(n - 2),
        };
        let h = self.s[i + 1] - self.s[i];
        (i, (s - self.s[i]) / h, h)
    }

    /// Value and first two derivatives at `s`.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let (i, t, h) = self.locate(s);
        let c0 = self.f[i];
        let c1 = h * self.df[i];
        let c2 = 0.5 * h * h * self.d2f[i];
        let a = self.f[i + 1] - c0 - c1 - c2;
        let b = h * self.df[i + 1] - c1 - 2.0 * c2;
        let c = h * h * self.d2f[i + 1] - 2.0 * c2;
        let c3 = 10.0 * a - 4.0 * b + 0.5 * c;
        let c4 = -15.0 * a + 7.0 * b - c;
        let c5 = 6.0 * a - 3.0 * b + 0.5 * c;
        let v = c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
        let d = c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * (4.0 * c4 + t * 5.0 * c5)));
        let dd = 2.0 * c2 + t * (6.0 * c3 + t * (12.0 * c4 + t * 20.0 * c5));
        (v, d / h, dd / (h * h))
    }

    fn check_consistency(&self) -> Result<()> {
        for i in 0..self.s.len() - 1 {
            let h = self.s[i + 1] - self.s[i];
            // corrected trapezoid for f from f', plain trapezoid for f' from f''
            let mean_d1 = 0.5 * (self.df[i] + self.df[i + 1]) + h * (self.d2f[i] - self.d2f[i + 1]) / 12.0;
            let r1 = ((self.f[i + 1] - self.f[i]) / h - mean_d1).abs() / mean_d1.abs().max(1.0);
            let mean_d2 = 0.5 * (self.d2f[i] + self.d2f[i + 1]);
            let r2 = ((self.df[i + 1] - self.df[i]) / h - mean_d2).abs() / mean_d2.abs().max(1.0);
            let residual = r1.max(r2);
            if residual > 1e-4 {
                return Err(Error::InconsistentTable { at: self.s[i], residual });
            }
        }
        Ok(())
    }
}

/// A variance profile together with its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaProfile {
    name: String,
    repr: Repr,
}

impl fmt::Display for SigmaProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn parse_params(spec: &str, rest: &str, count: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> = rest.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == count && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(Error::Config(format!("profile '{spec}' expects {count} numeric parameters"))),
    }
}

impl SigmaProfile {
    /// `sigma(s) = a - b s`.
    pub fn linear(a: f64, b: f64) -> Self {
        Self {
            name: format!("linear:{a},{b}"),
            repr: Repr::Linear { a, b },
        }
    }

    /// `sigma(s) = 2 - s`.
    pub fn linear2() -> Self {
        Self {
            name: "linear2".into(),
            repr: Repr::Linear { a: 2.0, b: 1.0 },
        }
    }

    /// `sigma(s) = a - b s^p`.
    pub fn power(a: f64, b: f64, p: f64) -> Self {
        Self {
            name: format!("power:{a},{b},{p}"),
            repr: Repr::Power { a, b, p },
        }
    }

    /// `sigma(s) = a + b exp(-k s)`.
    pub fn exponential(a: f64, b: f64, k: f64) -> Self {
        Self {
            name: format!("exp:{a},{b},{k}"),
            repr: Repr::Exp { a, b, k },
        }
    }

    pub fn constant(c: f64) -> Self {
        let name = if c == 1.0 { "constant1".to_string() } else { format!("const:{c}") };
        Self {
            name,
            repr: Repr::Const { c },
        }
    }

    /// Builds a tabulated profile from knots `(s, sigma, sigma', sigma'')`.
    ///
    /// Knots must be strictly increasing and cover `[0, 1]`; derivative
    /// columns are cross-checked against finite differences of the values.
    pub fn tabulated(name: &str, rows: &[[f64; 4]]) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::Config("tabulated profile needs at least 3 rows".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("tabulated profile contains non-finite values".into()));
        }
        if rows.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return Err(Error::Config("tabulated knots must be strictly increasing".into()));
        }
        if rows[0][0] > 0.0 || rows[rows.len() - 1][0] < 1.0 {
            return Err(Error::Config("tabulated knots must cover [0, 1]".into()));
        }
        let table = Table {
            s: rows.iter().map(|r| r[0]).collect(),
            f: rows.iter().map(|r| r[1]).collect(),
            df: rows.iter().map(|r| r[2]).collect(),
            d2f: rows.iter().map(|r| r[3]).collect(),
        };
        table.check_consistency()?;
        Ok(Self {
            name: name.to_string(),
            repr: Repr::Tabulated(table),
        })
    }

    /// Reads a whitespace-separated table with columns `s sigma dsigma d2sigma`.
    /// Lines starting with `#` are ignored.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read table {}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            match vals {
                Ok(v) if v.len() == 4 => rows.push([v[0], v[1], v[2], v[3]]),
                _ => {
                    return Err(Error::Config(format!(
                        "{}:{}: expected four numbers",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Self::tabulated(&path.display().to_string(), &rows)
    }

    /// Resolves a registry name (`linear2`, `constant1`, `linear:a,b`,
    /// `power:a,b,p`, `exp:a,b,k`, `const:c`) or a path to a table file.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "linear2" => return Ok(Self::linear2()),
            "constant1" => return Ok(Self::constant(1.0)),
            _ => {}
        }
        if let Some((kind, rest)) = spec.split_once(':') {
            let profile = match kind {
                "linear" => {
                    let p = parse_params(spec, rest, 2)?;
                    Some(Self::linear(p[0], p[1]))
                }
                "power" => {
                    let p = parse_params(spec, rest, 3)?;
                    Some(Self::power(p[0], p[1], p[2]))
                }
                "exp" => {
                    let p = parse_params(spec, rest, 3)?;
                    Some(Self::exponential(p[0], p[1], p[2]))
                }
                "const" => {
                    let p = parse_params(spec, rest, 1)?;
                    Some(Self::constant(p[0]))
                }
                _ => None,
            };
            if let Some(p) = profile {
                return p.check_positive().map(|_| p);
            }
        }
        let path = Path::new(spec);
        if path.is_file() {
            let p = Self::from_table_file(path)?;
            return p.check_positive().map(|_| p);
        }
        Err(Error::Config(format!("unknown sigma profile '{spec}'")))
    }

    fn check_positive(&self) -> Result<()> {
        for i in 0..VALIDATION_GRID {
            let s = i as f64 / (VALIDATION_GRID - 1) as f64;
            let v = self.sigma(s);
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("sigma({s}) = {v} is not positive"));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.repr, Repr::Tabulated(_))
    }

    pub fn sigma(&self, s: f64) -> f64 {
        match &self.repr {
            Repr::Linear { a, b } => a - b * s,
            Repr::Power { a, b, p } => a - b * s.max(0.0).powf(*p),
            Repr::Exp { a, b, k } => a + b * (-k * s).exp(),
            Repr::Const { c } => *c,
            Repr::Tabulated(t) => t.eval(s).0,
        }
    }

    pub fn dsigma(&self, s: f64) -> f64 {
        match &self.repr {
            Repr::Linear { b, .. } => -b,
            Repr::Power { b, p, .. } => {
                if s <= 0.0 {
                    if *p == 1.0 {
                        -b
                    } else {
                        0.0
                    }
                } else {
                    -b * p * s.powf(p - 1.0)
                }
            }
            Repr::Exp { b, k, .. } => -b * k * (-k * s).exp(),
            Repr::Const { .. } => 0.0,
            Repr::Tabulated(t) => t.eval(s).1,
        }
    }

    pub fn d2sigma(&self, s: f64) -> f64 {
        match &self.repr {
            Repr::Linear { .. } | Repr::Const { .. } => 0.0,
            Repr::Power { b, p, .. } => {
                if *p == 1.0 {
                    0.0
                } else if s <= 0.0 {
                    if *p == 2.0 {
                        -2.0 * b
                    } else {
                        0.0
                    }
                } else {
                    -b * p * (p - 1.0) * s.powf(p - 2.0)
                }
            }
            Repr::Exp { b, k, .. } => b * k * k * (-k * s).exp(),
            Repr::Tabulated(t) => t.eval(s).2,
        }
    }
}

/// Margins of the three class conditions; positive means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub member: bool,
    /// `c0 - (sigma(0) + 1/sigma(1))`
    pub endpoint_margin: f64,
    /// `c0 - sup |sigma''|`
    pub curvature_margin: f64,
    /// `inf |sigma'| - 1/c0`
    pub slope_margin: f64,
}

/// Checks `sigma(0) + 1/sigma(1) < c0`, `sup |sigma''| < c0` and
/// `inf |sigma'| > 1/c0` on a uniform grid.
pub fn validate_sigma(profile: &SigmaProfile, c0: f64) -> Result<Membership> {
    if !(c0 > 0.0) {
        return domain(format!("c0 = {c0} must be positive"));
    }
    let mut sup_d2: f64 = 0.0;
    let mut inf_d1 = f64::INFINITY;
    for i in 0..VALIDATION_GRID {
        let s = i as f64 / (VALIDATION_GRID - 1) as f64;
        let d1 = profile.dsigma(s);
        if !(d1 < 0.0) {
            return Err(Error::SigmaNotDecreasing { at: s, slope: d1 });
        }
        inf_d1 = inf_d1.min(d1.abs());
        sup_d2 = sup_d2.max(profile.d2sigma(s).abs());
    }
    let s1 = profile.sigma(1.0);
    if !(s1 > 0.0) {
        return domain(format!("sigma(1) = {s1} must be positive"));
    }
    let endpoint_margin = c0 - (profile.sigma(0.0) + 1.0 / s1);
    let curvature_margin = c0 - sup_d2;
    let slope_margin = inf_d1 - 1.0 / c0;
    Ok(Membership {
        member: endpoint_margin > 0.0 && curvature_margin > 0.0 && slope_margin > 0.0,
        endpoint_margin,
        curvature_margin,
        slope_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names() {
        assert_eq!(SigmaProfile::parse("linear2").unwrap(), SigmaProfile::linear2());
        assert_eq!(SigmaProfile::parse("constant1").unwrap().sigma(0.3), 1.0);
        let p = SigmaProfile::parse("exp:1,1,2").unwrap();
        assert!((p.sigma(0.0) - 2.0).abs() < 1e-15);
        assert!(SigmaProfile::parse("linear:1,2").is_err());
        assert!(SigmaProfile::parse("nope").is_err());
        assert!(SigmaProfile::parse("power:2,1").is_err());
    }

    #[test]
    fn linear_membership() {
        let m = validate_sigma(&SigmaProfile::linear2(), 4.0).unwrap();
        assert!(m.member);
        assert!((m.endpoint_margin - 1.0).abs() < 1e-12);
        assert!((m.slope_margin - 0.75).abs() < 1e-12);
        assert!(!validate_sigma(&SigmaProfile::linear2(), 2.5).unwrap().member);
    }

    #[test]
    fn constant_rejected() {
        let err = validate_sigma(&SigmaProfile::constant(1.0), 4.0).unwrap_err();
        assert!(err.to_string().contains("sigma not strictly decreasing"));
    }

    #[test]
    fn quintic_table_reproduces_exponential() {
        let exact = SigmaProfile::exponential(1.0, 1.0, 1.5);
        let rows: Vec<[f64; 4]> = (0..=100)
            .map(|i| {
                let s = i as f64 / 100.0;
                [s, exact.sigma(s), exact.dsigma(s), exact.d2sigma(s)]
            })
            .collect();
        let tab = SigmaProfile::tabulated("tab", &rows).unwrap();
        for i in 0..=333 {
            let s = i as f64 / 333.0;
            assert!((tab.sigma(s) - exact.sigma(s)).abs() < 1e-9);
            assert!((tab.dsigma(s) - exact.dsigma(s)).abs() < 1e-7);
            assert!((tab.d2sigma(s) - exact.d2sigma(s)).abs() < 1e-4);
        }
    }

    #[test]
    fn inconsistent_table_rejected() {
        let rows: Vec<[f64; 4]> = (0..=20)
            .map(|i| {
                let s = i as f64 / 20.0;
                [s, 2.0 - s, -3.0, 0.0]
            })
            .collect();
        assert!(matches!(
            SigmaProfile::tabulated("bad", &rows),
            Err(Error::InconsistentTable { .. })
        ));
    }
}

//! Offspring laws supported on `{2, 3, ...}` with finite support.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringLaw {
    /// `(k, P(L = k))`, sorted by `k`.
    pmf: Vec<(u32, f64)>,
    mean: f64,
    factorial2: f64,
    beta0: f64,
}

impl OffspringLaw {
    pub fn new(mut pmf: Vec<(u32, f64)>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidLaw("empty pmf".into()));
        }
        pmf.sort_by_key(|p| p.0);
        if pmf.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidLaw("repeated offspring count".into()));
        }
        if let Some(&(k, _)) = pmf.iter().find(|p| p.0 < 2) {
            return Err(Error::InvalidLaw(format!("offspring count {k} < 2")));
        }
        if pmf.iter().any(|p| !(p.1 >= 0.0 && p.1.is_finite())) {
            return Err(Error::InvalidLaw("probabilities must be non-negative".into()));
        }
        let total: f64 = pmf.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}")));
        }
        pmf.retain(|p| p.1 > 0.0);
        let mean: f64 = pmf.iter().map(|&(k, p)| k as f64 * p).sum();
        let factorial2 = pmf.iter().map(|&(k, p)| (k as f64) * (k as f64 - 1.0) * p).sum();
        Ok(Self {
            pmf,
            mean,
            factorial2,
            beta0: 0.5 / (mean - 1.0),
        })
    }

    /// `L = 2` almost surely.
    pub fn binary() -> Self {
        Self::new(vec![(2, 1.0)]).expect("valid law")
    }

    /// Parses `"2"` (deterministic) or `"2:0.5,3:0.5"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Ok(k) = spec.parse::<u32>() {
            return Self::new(vec![(k, 1.0)]);
        }
        let mut pmf = Vec::new();
        for part in spec.split(',') {
            let (k, p) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidLaw(format!("cannot parse '{part}' as k:p")))?;
            let k = k.trim().parse::<u32>().map_err(|_| Error::InvalidLaw(format!("bad count '{k}'")))?;
            let p = p.trim().parse::<f64>().map_err(|_| Error::InvalidLaw(format!("bad probability '{p}'")))?;
            pmf.push((k, p));
        }
        Self::new(pmf)
    }

    pub fn pmf(&self) -> &[(u32, f64)] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E[L^2 - L]`.
    pub fn second_factorial_moment(&self) -> f64 {
        self.factorial2
    }

    /// Branching rate `(2 (E[L] - 1))^{-1}`, so that `E[N(t)] = e^{t/2}`.
    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn is_binary(&self) -> bool {
        self.pmf.len() == 1 && self.pmf[0].0 == 2
    }

    /// `E[F^L]`.
    pub fn pgf(&self, f: f64) -> f64 {
        self.pmf.iter().map(|&(k, p)| p * f.powi(k as i32)).sum()
    }

    /// `1 - E[(1-u)^L]`, accurate for small `u`.
    pub fn one_minus_pgf_complement(&self, u: f64) -> f64 {
        let l = (-u).ln_1p();
        self.pmf.iter().map(|&(k, p)| -p * (k as f64 * l).exp_m1()).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.pmf.len() == 1 {
            return self.pmf[0].0;
        }
        let mut u: f64 = rng.random();
        for &(k, p) in &self.pmf {
            if u < p {
                return k;
            }
            u -= p;
        }
        self.pmf[self.pmf.len() - 1].0
    }
}

//! Branching Brownian motion with unit variance and drift `+1`, its
//! derivative martingale `D_t = sum X e^{-X}` and the derivative Gibbs
//! measure `mu_t = sum X e^{-X} delta_{X / sqrt t}`.
//!
//! Particles move by exact Gaussian segments between branch times. Removal
//! below a floor (pruning, or killing at 0) is decided per segment with the
//! Brownian-bridge crossing probability, so it is exact for the continuous
//! path.

use std::f64::consts::{FRAC_2_PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::law::OffspringLaw;
use crate::parallel;
use crate::rng::replica_rng;
use crate::stats;

pub const DEFAULT_FLOOR: f64 = -5.0;
pub const MAX_TIME: f64 = 25.0;
pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;

/// Weighted atoms on the line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<(f64, f64)>,
    pub total: f64,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Self {
        let total = compensated_sum(atoms.iter().map(|a| a.1));
        Self { atoms, total }
    }

    /// The measure `mu_t` of particle positions at time `t`.
    pub fn gibbs(positions: &[f64], t: f64) -> Self {
        let scale = 1.0 / t.sqrt();
        Self::new(positions.iter().map(|&x| (x * scale, x * (-x).exp())).collect())
    }

    /// Concatenation; each part keeps its own total weight.
    pub fn pool<'a>(parts: impl IntoIterator<Item = &'a EmpiricalMeasure>) -> Self {
        Self::new(parts.into_iter().flat_map(|m| m.atoms.iter().copied()).collect())
    }

    /// Share of the absolute mass carried by negative weights.
    pub fn negative_fraction(&self) -> f64 {
        let neg: f64 = self.atoms.iter().filter(|a| a.1 < 0.0).map(|a| -a.1).sum();
        let abs: f64 = self.atoms.iter().map(|a| a.1.abs()).sum();
        if abs > 0.0 {
            neg / abs
        } else {
            0.0
        }
    }

    /// Normalised mass per bin over `[lo, hi)`.
    pub fn histogram(&self, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; bins];
        let width = (hi - lo) / bins as f64;
        for &(x, w) in &self.atoms {
            if x >= lo && x < hi {
                out[((x - lo) / width) as usize] += w / self.total;
            }
        }
        out
    }
}

fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0, 0.0);
    for x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Law of a three-dimensional Bessel process at time 1 started at 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BesselReference;

impl BesselReference {
    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        FRAC_2_PI.sqrt() * x * x * (-0.5 * x * x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        libm::erf(x / SQRT_2) - FRAC_2_PI.sqrt() * x * (-0.5 * x * x).exp()
    }
}

/// KS distance between the normalised measure and `reference`.
pub fn normalized_distance(measure: &EmpiricalMeasure, reference: &BesselReference) -> Result<f64> {
    if !(measure.total > 0.0) {
        return Err(Error::DegenerateReplica(measure.total));
    }
    Ok(stats::ks_weighted(&measure.atoms, |x| reference.cdf(x)))
}

struct Segment {
    x: f64,
    t: f64,
    next_branch: f64,
}

/// Positions at time `t` of drifted BBM started from one particle at `x0`.
/// Paths that go below `floor` are removed; `None` keeps everything.
pub fn simulate_positions<R: Rng + ?Sized>(
    x0: f64,
    t: f64,
    law: &OffspringLaw,
    floor: Option<f64>,
    population_cap: u64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..=MAX_TIME).contains(&t) {
        return Err(Error::GibbsPopulationCap { cap: population_cap });
    }
    let beta0 = law.beta0();
    let clock = |rng: &mut R| -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / beta0
    };
    if floor.is_some_and(|f| x0 <= f) {
        return Ok(Vec::new());
    }
    let first = clock(rng);
    let mut stack = vec![Segment {
        x: x0,
        t: 0.0,
        next_branch: first,
    }];
    let mut out = Vec::new();
    let mut created: u64 = 1;
    while let Some(mut p) = stack.pop() {
        loop {
            let end = p.next_branch.min(t);
            let h = end - p.t;
            let z: f64 = StandardNormal.sample(rng);
            let x = p.x + h + h.sqrt() * z;
            if let Some(f) = floor {
                if x <= f {
                    break;
                }
                let cross = (-2.0 * (p.x - f) * (x - f) / h).exp();
                if h > 0.0 && rng.random::<f64>() < cross {
                    break;
                }
            }
            p.x = x;
            p.t = end;
            if end >= t {
                out.push(x);
                break;
            }
            let children = law.sample(rng);
            for _ in 1..children {
                let c = clock(rng);
                stack.push(Segment {
                    x,
                    t: end,
                    next_branch: end + c,
                });
            }
            created += u64::from(children - 1);
            if created > population_cap {
                return Err(Error::GibbsPopulationCap { cap: population_cap });
            }
            p.next_branch = end + clock(rng);
        }
    }
    Ok(out)
}

/// `mu_t` for one replica started at the origin.
pub fn simulate_homog<R: Rng + ?Sized>(t: f64, law: &OffspringLaw, floor: Option<f64>, rng: &mut R) -> Result<EmpiricalMeasure> {
    let positions = simulate_positions(0.0, t, law, floor, DEFAULT_POPULATION_CAP, rng)?;
    Ok(EmpiricalMeasure::gibbs(&positions, t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSummary {
    pub d: f64,
    pub w: f64,
    pub population: u64,
    /// KS distance of this replica's normalised measure; `None` if degenerate.
    pub ks: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsRun {
    pub t: f64,
    pub floor: Option<f64>,
    pub master_seed: u64,
    pub replicas: Vec<ReplicaSummary>,
    /// `None` when the pooled total weight is not positive.
    pub pooled_ks: Option<f64>,
    pub pooled_negative_fraction: f64,
    pub degenerate: usize,
    pub mean_d: f64,
    pub se_d: f64,
    pub mean_w: f64,
    pub se_w: f64,
    /// Normalised pooled mass on `HISTOGRAM_BINS` bins over `[0, HISTOGRAM_MAX)`.
    pub histogram: Vec<f64>,
}

pub const HISTOGRAM_BINS: usize = 40;
pub const HISTOGRAM_MAX: f64 = 4.0;

/// Replicas of `simulate_homog` on the worker pool, pooled in replica order.
pub fn run_gibbs(t: f64, law: &OffspringLaw, floor: Option<f64>, replicas: usize, master: u64) -> Result<GibbsRun> {
    let measures = parallel::map_indexed(replicas, |i| {
        let mut rng = replica_rng(master, i as u64);
        simulate_homog(t, law, floor, &mut rng)
    });
    let measures: Vec<EmpiricalMeasure> = measures.into_iter().collect::<Result<_>>()?;
    let reference = BesselReference;
    let summaries: Vec<ReplicaSummary> = measures
        .iter()
        .map(|m| ReplicaSummary {
            d: m.total,
            w: m.atoms.iter().map(|a| (-a.0 * t.sqrt()).exp()).sum(),
            population: m.atoms.len() as u64,
            ks: normalized_distance(m, &reference).ok(),
        })
        .collect();
    let pooled = EmpiricalMeasure::pool(&measures);
    let pooled_ks = normalized_distance(&pooled, &reference).ok();
    let ds: Vec<f64> = summaries.iter().map(|s| s.d).collect();
    let ws: Vec<f64> = summaries.iter().map(|s| s.w).collect();
    let (mean_d, se_d) = stats::mean_se(&ds);
    let (mean_w, se_w) = stats::mean_se(&ws);
    Ok(GibbsRun {
        t,
        floor,
        master_seed: master,
        degenerate: summaries.iter().filter(|s| s.ks.is_none()).count(),
        replicas: summaries,
        pooled_ks,
        pooled_negative_fraction: pooled.negative_fraction(),
        mean_d,
        se_d,
        mean_w,
        se_w,
        histogram: pooled.histogram(0.0, HISTOGRAM_MAX, HISTOGRAM_BINS),
    })
}

/// `E[D_t]` under pruning at `floor < 0` for a start at the origin, which is
/// `-2 floor P(N(0, 1) > -floor / sqrt t)` instead of 0.
pub fn pruned_mean_d(t: f64, floor: f64) -> f64 {
    -floor * libm::erfc(-floor / (2.0 * t).sqrt())
}

/// `E[W_t]` under pruning at `floor < 0` for a start at the origin.
pub fn pruned_mean_w(t: f64, floor: f64) -> f64 {
    libm::erf(-floor / (2.0 * t).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMoment {
    pub x: f64,
    pub t: f64,
    pub replicas: usize,
    /// Estimate of `E_x[D_t^2]` for BBM killed at 0.
    pub mean: f64,
    pub std_error: f64,
    /// `mean * e^x` and its standard error.
    pub scaled: f64,
    pub scaled_se: f64,
    /// Estimate of `E_x[D_t]`, equal to `x e^{-x}` in expectation.
    pub first_moment: f64,
    pub first_moment_se: f64,
}

/// Second moment of the killed derivative martingale started at `x > 0`.
pub fn second_moment_killed(x: f64, t: f64, law: &OffspringLaw, replicas: usize, master: u64) -> Result<SecondMoment> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("start {x} must be positive")));
    }
    let ds = parallel::map_indexed(replicas, |i| {
        let mut rng = replica_rng(master, i as u64);
        let positions = simulate_positions(x, t, law, Some(0.0), DEFAULT_POPULATION_CAP, &mut rng)?;
        Ok(positions.iter().map(|&y| y * (-y).exp()).sum::<f64>())
    });
    let ds: Vec<f64> = ds.into_iter().collect::<Result<_>>()?;
    let squares: Vec<f64> = ds.iter().map(|d| d * d).collect();
    let (mean, std_error) = stats::mean_se(&squares);
    let (first_moment, first_moment_se) = stats::mean_se(&ds);
    Ok(SecondMoment {
        x,
        t,
        replicas,
        mean,
        std_error,
        scaled: mean * x.exp(),
        scaled_se: std_error * x.exp(),
        first_moment,
        first_moment_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_normalised_with_mode_at_root_two() {
        let r = BesselReference;
        let mass = crate::quad::simpson(|x| r.density(x), 0.0, 40.0, 1e-13);
        assert!((mass - 1.0).abs() < 1e-10);
        let h = 1e-5;
        let slope = (r.density(SQRT_2 + h) - r.density(SQRT_2 - h)) / (2.0 * h);
        assert!(slope.abs() < 1e-8);
        assert!((r.cdf(30.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cdf_matches_density_integral() {
        let r = BesselReference;
        for x in [0.3, 1.0, 2.5] {
            let int = crate::quad::simpson(|y| r.density(y), 0.0, x, 1e-13);
            assert!((int - r.cdf(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn point_mass_distance() {
        let m = EmpiricalMeasure::new(vec![(1.0, 2.0)]);
        let d = normalized_distance(&m, &BesselReference).unwrap();
        let f1 = BesselReference.cdf(1.0);
        assert!((d - f1.max(1.0 - f1)).abs() < 1e-15);
        assert!((d - 0.8013).abs() < 1e-4);
    }

    #[test]
    fn zero_weight_is_degenerate() {
        let m = EmpiricalMeasure::gibbs(&[0.0], 1.0);
        assert_eq!(m.total, 0.0);
        assert!(matches!(
            normalized_distance(&m, &BesselReference),
            Err(Error::DegenerateReplica(_))
        ));
    }

    #[test]
    fn total_is_sum_of_weights() {
        let atoms: Vec<(f64, f64)> = (0..1000).map(|i| (i as f64, 0.1 + 1e-9 * i as f64)).collect();
        let naive: f64 = atoms.iter().map(|a| a.1).sum();
        assert!((EmpiricalMeasure::new(atoms).total - naive).abs() < 1e-12);
    }

    #[test]
    fn time_guard() {
        let mut rng = replica_rng(1, 1);
        assert!(matches!(
            simulate_homog(30.0, &OffspringLaw::binary(), Some(-5.0), &mut rng),
            Err(Error::GibbsPopulationCap { .. })
        ));
        let err = simulate_positions(0.0, 20.0, &OffspringLaw::binary(), None, 10, &mut rng).unwrap_err();
        assert!(err.to_string().contains("reduce t or raise floor"));
    }
}

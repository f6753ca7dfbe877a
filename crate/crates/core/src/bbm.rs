//! Pruned Monte Carlo for branching Brownian motion whose diffusion
//! coefficient at time `t` is `sigma^2(t/T)`.
//!
//! A replica advances in epochs. Within an epoch it is simulated depth
//! first: a particle is moved to the epoch end, and offspring born on the way
//! are pushed on a stack. Positions are observed on the `dt` grid (and at
//! branch times).
//! Far from every barrier that still matters, a particle skips grid points:
//! a jump of `h` is only taken when the barrier cannot be reached within it
//! except with probability below `2 Phi(-6)`, so the observed crossings are
//! those of a path checked at every grid point.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::law::OffspringLaw;
use crate::parallel;
use crate::predictor::{BarrierSpec, BarrierVariant, Curves};
use crate::rng::replica_rng;
use crate::sigma::SigmaProfile;
use crate::stats::{self, LineFit};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;
pub const DEFAULT_HORIZON_CAP: f64 = 60.0;
/// Standard deviations of headroom required before skipping grid points.
const MARGIN_SDS: f64 = 6.0;

/// Gaussian increment over `[t, t + dt]` with variance `int sigma^2(s/T) ds`.
pub fn step_increment<R: Rng + ?Sized>(t: f64, dt: f64, curves: &Curves, horizon: f64, rng: &mut R) -> Result<f64> {
    if !(dt > 0.0 && t >= 0.0 && t + dt <= horizon * (1.0 + 1e-12)) {
        return domain(format!("increment [{t}, {}] outside [0, {horizon}]", t + dt));
    }
    let var = 2.0 * horizon * (curves.j(((t + dt) / horizon).min(1.0)) - curves.j(t / horizon));
    let z: f64 = StandardNormal.sample(rng);
    Ok(var.max(0.0).sqrt() * z)
}

/// Reference curve for pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PruneReference {
    /// Remove particles below `gamma_T(t) - depth` at every observation.
    Gamma,
    /// At the end of every epoch remove particles more than `depth` behind
    /// the replica's leading particle.
    Leader,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BbmConfig {
    pub horizon: f64,
    /// Particles below `gamma_T(t) - depth` are removed; `None` disables pruning.
    pub prune_depth: Option<f64>,
    pub prune_reference: PruneReference,
    /// Spacing of the synchronisation times at which leader pruning acts.
    pub epoch: f64,
    /// Offsets `K` of the crossing levels `gamma_T + K`, ascending.
    pub k_list: Vec<f64>,
    /// `K` of the glued barrier `zeta_T` used by the `N_T` count.
    pub zeta_k: Option<f64>,
    pub dt: f64,
    /// Longest jump between observations.
    pub max_step: f64,
    pub population_cap: u64,
    /// Largest horizon accepted with pruning enabled.
    pub horizon_cap: f64,
}

impl BbmConfig {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            prune_depth: Some(10.0),
            prune_reference: PruneReference::Leader,
            epoch: 1.0,
            k_list: Vec::new(),
            zeta_k: None,
            dt: DEFAULT_DT,
            max_step: 1.0,
            population_cap: DEFAULT_POPULATION_CAP,
            horizon_cap: DEFAULT_HORIZON_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Particle {
    x: f64,
    t: f64,
    /// Accumulated variance `V(t)`.
    var: f64,
    next_branch: f64,
    above_zeta: bool,
    spine: bool,
}

/// Outcome of one replica.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaOutcome {
    /// Maximum at `T`, `-inf` if every particle was pruned.
    pub max: f64,
    /// Number of leading entries of `k_list` whose level was crossed.
    pub crossed: u32,
    pub n_t: u64,
    pub population: u64,
    pub pruned: u64,
    /// Branch clock draws along the line of the initial particle.
    #[serde(skip)]
    pub spine_gaps: Vec<f64>,
}

/// Barrier values on the observation grid.
#[derive(Debug)]
struct GridCurve {
    dt: f64,
    values: Vec<f64>,
}

impl GridCurve {
    fn new(horizon: f64, dt: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = (horizon / dt).ceil() as usize;
        let values = (0..=n).map(|k| f((k as f64 * dt).min(horizon))).collect();
        Self { dt, values }
    }

    fn at(&self, t: f64) -> f64 {
        let u = t / self.dt;
        let k = (u.floor() as usize).min(self.values.len() - 1);
        let frac = u - k as f64;
        if frac <= 1e-9 || k + 1 == self.values.len() {
            return self.values[k];
        }
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }
}

#[derive(Debug)]
pub struct Simulator {
    curves: Arc<Curves>,
    law: OffspringLaw,
    config: BbmConfig,
    gamma: GridCurve,
    zeta: Option<GridCurve>,
    sigma_max: f64,
    beta0: f64,
}

impl Simulator {
    pub fn new(curves: Arc<Curves>, law: OffspringLaw, config: BbmConfig) -> Result<Self> {
        let horizon = config.horizon;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon {horizon} must be positive")));
        }
        if !(config.dt > 0.0 && config.dt <= 0.01) {
            return Err(Error::Config(format!("observation step {} must lie in (0, 0.01]", config.dt)));
        }
        if !(config.epoch >= config.dt) {
            return Err(Error::Config("epoch must be at least dt".into()));
        }
        if config.max_step < config.dt {
            return Err(Error::Config("max_step must be at least dt".into()));
        }
        if config.prune_depth.is_some() && horizon > config.horizon_cap {
            return Err(Error::PopulationCap {
                cap: config.population_cap,
            });
        }
        if config.k_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("K list must be strictly increasing".into()));
        }
        for &k in &config.k_list {
            if !(k >= 1.0) {
                return Err(Error::KOutOfRegime(k));
            }
            if k > horizon.cbrt() {
                log::warn!("K = {k} exceeds T^(1/3) = {:.3}", horizon.cbrt());
            }
        }
        let zeta = match config.zeta_k {
            Some(k) => {
                let spec = BarrierSpec::new(curves.clone(), horizon, k, BarrierVariant::Zeta)?;
                Some(GridCurve::new(horizon, config.dt, |t| spec.zeta_unchecked(t)))
            }
            None => None,
        };
        let gamma = GridCurve::new(horizon, config.dt, |t| curves.gamma_unchecked(horizon, t));
        let sigma_max = (0..=200)
            .map(|i| curves.profile().sigma(i as f64 / 200.0))
            .fold(0.0, f64::max);
        Ok(Self {
            beta0: law.beta0(),
            curves,
            law,
            config,
            gamma,
            zeta,
            sigma_max,
        })
    }

    pub fn config(&self) -> &BbmConfig {
        &self.config
    }

    pub fn curves(&self) -> &Curves {
        &self.curves
    }

    fn variance(&self, t: f64) -> f64 {
        let horizon = self.config.horizon;
        2.0 * horizon * self.curves.j((t / horizon).min(1.0))
    }

    fn clock<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / self.beta0
    }

    /// Longest jump keeping a barrier `d` above out of reach.
    fn safe_step(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        let (s, c) = (self.sigma_max, MARGIN_SDS * self.sigma_max);
        let root = (-c + (c * c + 4.0 * s * d).sqrt()) / (2.0 * s);
        root * root
    }

    /// Runs one replica from a single particle at the origin.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ReplicaOutcome> {
        let cfg = &self.config;
        let horizon = cfg.horizon;
        let mut out = ReplicaOutcome {
            max: f64::NEG_INFINITY,
            crossed: 0,
            n_t: 0,
            population: 0,
            pruned: 0,
            spine_gaps: Vec::new(),
        };
        let first = self.clock(rng);
        out.spine_gaps.push(first);
        let mut current = vec![Particle {
            x: 0.0,
            t: 0.0,
            var: 0.0,
            next_branch: first,
            above_zeta: false,
            spine: true,
        }];
        let mut start = 0.0;
        while start < horizon && !current.is_empty() {
            let end = if cfg.epoch >= horizon - start { horizon } else { start + cfg.epoch };
            let mut next = Vec::with_capacity(current.len());
            let mut stack = current;
            while let Some(p) = stack.pop() {
                if let Some(p) = self.advance(p, end, &mut stack, &mut out, rng)? {
                    next.push(p);
                }
                if (next.len() + stack.len()) as u64 > cfg.population_cap {
                    return Err(Error::PopulationCap {
                        cap: cfg.population_cap,
                    });
                }
            }
            if let (Some(depth), PruneReference::Leader) = (cfg.prune_depth, cfg.prune_reference) {
                let lead = next.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
                let before = next.len();
                next.retain(|p| p.x >= lead - depth);
                out.pruned += (before - next.len()) as u64;
            }
            current = next;
            start = end;
        }
        let zeta_end = self.zeta.as_ref().map(|z| z.at(horizon));
        for p in &current {
            out.max = out.max.max(p.x);
            if let (Some(ze), false) = (zeta_end, p.above_zeta) {
                if p.x >= ze - 2.0 && p.x <= ze - 1.0 {
                    out.n_t += 1;
                }
            }
        }
        out.population = current.len() as u64;
        Ok(out)
    }

    /// Moves `p` up to time `end`, pushing offspring born on the way onto
    /// `stack`. Returns the particle unless it was pruned.
    fn advance<R: Rng + ?Sized>(
        &self,
        mut p: Particle,
        end: f64,
        stack: &mut Vec<Particle>,
        out: &mut ReplicaOutcome,
        rng: &mut R,
    ) -> Result<Option<Particle>> {
        let cfg = &self.config;
        let dt = cfg.dt;
        let ks = &cfg.k_list;
        while p.t < end {
            let open = out.crossed as usize;
            let mut upper = f64::INFINITY;
            if open < ks.len() {
                upper = self.gamma.at(p.t) + ks[open];
            }
            if let (Some(z), false) = (&self.zeta, p.above_zeta) {
                upper = upper.min(z.at(p.t));
            }
            let h = self.safe_step(upper - p.x).min(cfg.max_step);
            let k_now = (p.t / dt + 1e-9).floor();
            let k_land = ((p.t + h) / dt + 1e-9).floor().max(k_now + 1.0);
            let landing = (k_land * dt).min(p.next_branch).min(end);
            let var = self.variance(landing);
            let z: f64 = StandardNormal.sample(rng);
            p.x += (var - p.var).max(0.0).sqrt() * z;
            p.t = landing;
            p.var = var;

            let g = self.gamma.at(p.t);
            while (out.crossed as usize) < ks.len() && p.x > g + ks[out.crossed as usize] {
                out.crossed += 1;
            }
            if let (Some(zc), false) = (&self.zeta, p.above_zeta) {
                if p.x > zc.at(p.t) {
                    p.above_zeta = true;
                }
            }
            if let (Some(depth), PruneReference::Gamma) = (cfg.prune_depth, cfg.prune_reference) {
                if p.x < g - depth {
                    out.pruned += 1;
                    return Ok(None);
                }
            }
            if p.t >= p.next_branch && p.t < cfg.horizon {
                let children = self.law.sample(rng);
                for _ in 1..children {
                    let clock = self.clock(rng);
                    stack.push(Particle {
                        next_branch: p.t + clock,
                        spine: false,
                        ..p
                    });
                }
                let clock = self.clock(rng);
                if p.spine {
                    out.spine_gaps.push(clock);
                }
                p.next_branch = p.t + clock;
            }
        }
        Ok(Some(p))
    }
}

/// Replica `index` of the family seeded by `master`.
pub fn simulate_replica(sim: &Simulator, master: u64, index: u64) -> Result<ReplicaOutcome> {
    sim.simulate(&mut replica_rng(master, index))
}

/// Merged statistics of a replica family, in replica order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStatistics {
    pub horizon: f64,
    pub master_seed: u64,
    pub prune_depth: Option<f64>,
    pub k_list: Vec<f64>,
    pub maxima: Vec<f64>,
    /// Per replica, the number of leading `k_list` levels crossed.
    pub crossed: Vec<u32>,
    pub n_t: Vec<u64>,
    pub populations: Vec<u64>,
    pub pruned: u64,
}

impl RunStatistics {
    pub fn replicas(&self) -> usize {
        self.maxima.len()
    }

    /// Whether replica `r` crossed level `k_list[j]`.
    pub fn crossed_level(&self, j: usize, r: usize) -> bool {
        (self.crossed[r] as usize) > j
    }
}

/// Runs `replicas` replicas on the worker pool; replica `i` uses stream `i`
/// of `master`, so the result does not depend on the schedule.
pub fn run_replicas(sim: &Simulator, replicas: usize, master: u64) -> Result<RunStatistics> {
    let outcomes = parallel::map_indexed(replicas, |i| simulate_replica(sim, master, i as u64));
    let mut stats = RunStatistics {
        horizon: sim.config.horizon,
        master_seed: master,
        prune_depth: sim.config.prune_depth,
        k_list: sim.config.k_list.clone(),
        maxima: Vec::with_capacity(replicas),
        crossed: Vec::with_capacity(replicas),
        n_t: Vec::with_capacity(replicas),
        populations: Vec::with_capacity(replicas),
        pruned: 0,
    };
    for o in outcomes {
        let o = o?;
        stats.maxima.push(o.max);
        stats.crossed.push(o.crossed);
        stats.n_t.push(o.n_t);
        stats.populations.push(o.population);
        stats.pruned += o.pruned;
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KEstimate {
    pub k: f64,
    pub hits: u64,
    pub n: u64,
    pub p: f64,
    /// 95% Wilson interval; the lower end is 0 when nothing was observed.
    pub lo: f64,
    pub hi: f64,
}

fn k_estimate(k: f64, hits: u64, n: u64) -> KEstimate {
    let (lo, hi) = stats::wilson(hits, n, 1.96);
    KEstimate {
        k,
        hits,
        n,
        p: hits as f64 / n as f64,
        lo,
        hi,
    }
}

/// Regression of `log p - weight * log K` on `K` over levels with at least one hit.
fn k_slope(rows: &[KEstimate], weight: f64) -> Option<LineFit> {
    let used: Vec<&KEstimate> = rows.iter().filter(|r| r.hits > 0).collect();
    if used.len() < 2 {
        return None;
    }
    let x: Vec<f64> = used.iter().map(|r| r.k).collect();
    let y: Vec<f64> = used.iter().map(|r| r.p.ln() - weight * r.k.ln()).collect();
    Some(stats::ols(&x, &y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingTable {
    pub rows: Vec<KEstimate>,
    /// `log p` against `K`.
    pub fit: Option<LineFit>,
    /// `log p - log K` against `K`.
    pub fit_over_k: Option<LineFit>,
    /// Point estimates strictly decrease in `K`.
    pub decreasing: bool,
}

/// Probability that some particle exceeds `gamma_T + K` at an observation.
pub fn crossing_probability(run: &RunStatistics) -> Result<CrossingTable> {
    let n = run.replicas() as u64;
    if n == 0 {
        return Err(Error::Config("no replicas".into()));
    }
    let rows: Vec<KEstimate> = run
        .k_list
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let hits = (0..run.replicas()).filter(|&r| run.crossed_level(j, r)).count() as u64;
            k_estimate(k, hits, n)
        })
        .collect();
    let decreasing = rows.windows(2).all(|w| w[1].p < w[0].p);
    Ok(CrossingTable {
        fit: k_slope(&rows, 0.0),
        fit_over_k: k_slope(&rows, 1.0),
        rows,
        decreasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailTable {
    /// Empirical median of the maximum.
    pub median: f64,
    pub rows: Vec<KEstimate>,
    /// `log p` against `K`.
    pub fit: Option<LineFit>,
    /// `log p - log K` against `K`.
    pub fit_over_k: Option<LineFit>,
    /// `p(K) / (K exp(-K / sigma(0)))` per row.
    pub ratios: Vec<f64>,
    /// Largest over smallest positive ratio.
    pub band: f64,
}

/// `P(M_T >= median + K)` for each `K`, with the median taken from the same run.
pub fn tail_estimate(run: &RunStatistics, k_list: &[f64], sigma0: f64) -> Result<TailTable> {
    if k_list.iter().any(|&k| !(k >= 1.0)) {
        return Err(Error::KOutOfRegime(k_list.iter().cloned().fold(f64::INFINITY, f64::min)));
    }
    let n = run.replicas() as u64;
    if n == 0 {
        return Err(Error::Config("no replicas".into()));
    }
    let median = stats::median(&run.maxima);
    let rows: Vec<KEstimate> = k_list
        .iter()
        .map(|&k| {
            let hits = run.maxima.iter().filter(|&&m| m >= median + k).count() as u64;
            k_estimate(k, hits, n)
        })
        .collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.p / (r.k * (-r.k / sigma0).exp())).collect();
    let positive: Vec<f64> = ratios.iter().cloned().filter(|&r| r > 0.0).collect();
    let band = if positive.is_empty() {
        f64::INFINITY
    } else {
        positive.iter().cloned().fold(0.0, f64::max) / positive.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(TailTable {
        median,
        fit: k_slope(&rows, 0.0),
        fit_over_k: k_slope(&rows, 1.0),
        rows,
        ratios,
        band,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationCheck {
    pub time: f64,
    pub mean: f64,
    pub std_error: f64,
    pub expected: f64,
}

impl PopulationCheck {
    pub fn z_score(&self) -> f64 {
        (self.mean - self.expected) / self.std_error
    }
}

/// Mean population at time `t` without pruning against `exp(beta0 (E[L] - 1) t)`.
pub fn population_check(law: &OffspringLaw, t: f64, replicas: usize, master: u64) -> Result<PopulationCheck> {
    let curves = Arc::new(Curves::new(SigmaProfile::constant(1.0)));
    let mut cfg = BbmConfig::new(t);
    cfg.prune_depth = None;
    cfg.max_step = t.max(cfg.dt);
    let sim = Simulator::new(curves, law.clone(), cfg)?;
    let run = run_replicas(&sim, replicas, master)?;
    let pops: Vec<f64> = run.populations.iter().map(|&p| p as f64).collect();
    let (mean, std_error) = stats::mean_se(&pops);
    Ok(PopulationCheck {
        time: t,
        mean,
        std_error,
        expected: (law.beta0() * (law.mean() - 1.0) * t).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(cfg: BbmConfig) -> Simulator {
        Simulator::new(Arc::new(Curves::new(SigmaProfile::linear2())), OffspringLaw::binary(), cfg).unwrap()
    }

    #[test]
    fn safe_step_keeps_margin() {
        let s = sim(BbmConfig::new(10.0));
        for d in [0.1, 1.0, 5.0, 20.0] {
            let h = s.safe_step(d);
            assert!((s.sigma_max * h + MARGIN_SDS * s.sigma_max * h.sqrt() - d).abs() < 1e-9);
        }
        assert_eq!(s.safe_step(-1.0), 0.0);
    }

    #[test]
    fn grid_curve_interpolates() {
        let g = GridCurve::new(1.0, 0.25, |t| t * t);
        assert_eq!(g.at(0.5), 0.25);
        assert!((g.at(0.375) - 0.5 * (0.0625 + 0.25)).abs() < 1e-12);
        assert_eq!(g.at(1.0), 1.0);
    }

    #[test]
    fn config_guards() {
        let curves = Arc::new(Curves::new(SigmaProfile::linear2()));
        let law = OffspringLaw::binary();
        let mut cfg = BbmConfig::new(100.0);
        assert!(matches!(
            Simulator::new(curves.clone(), law.clone(), cfg.clone()),
            Err(Error::PopulationCap { .. })
        ));
        cfg.horizon = 20.0;
        cfg.dt = 0.02;
        assert!(Simulator::new(curves.clone(), law.clone(), cfg.clone()).is_err());
        cfg.dt = 0.01;
        cfg.k_list = vec![0.5];
        assert!(matches!(Simulator::new(curves, law, cfg), Err(Error::KOutOfRegime(_))));
    }

    #[test]
    fn zero_depth_keeps_population_small() {
        let mut cfg = BbmConfig::new(20.0);
        cfg.prune_depth = Some(0.0);
        let s = sim(cfg);
        let run = run_replicas(&s, 50, 3).unwrap();
        assert!(run.populations.iter().all(|&p| p < 50));
    }
}

use std::sync::Arc;

use bbm_lab::bbm::{
    crossing_probability, population_check, run_replicas, simulate_replica, step_increment, tail_estimate, BbmConfig,
    PruneReference, Simulator,
};
use bbm_lab::fkpp::{front_position, solve_fkpp, FkppGrid};
use bbm_lab::law::OffspringLaw;
use bbm_lab::predictor::Curves;
use bbm_lab::rng::replica_rng;
use bbm_lab::sigma::SigmaProfile;
use bbm_lab::stats;

fn linear() -> Arc<Curves> {
    Arc::new(Curves::new(SigmaProfile::linear2()))
}

fn simulator(cfg: BbmConfig) -> Simulator {
    Simulator::new(linear(), OffspringLaw::binary(), cfg).unwrap()
}

#[test]
fn increment_variances() {
    let flat = Curves::new(SigmaProfile::constant(1.5));
    let mut rng = replica_rng(1, 0);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| step_increment(2.0, 0.5, &flat, 10.0, &mut rng).unwrap())
        .collect();
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let (var, se) = stats::mean_se(&sq);
    assert!((var - 2.25 * 0.5).abs() < 3.0 * se, "{var} +- {se}");

    let lin = linear();
    let horizon = 30.0;
    let sq: Vec<f64> = (0..100_000)
        .map(|_| step_increment(0.0, horizon, &lin, horizon, &mut rng).unwrap().powi(2))
        .collect();
    let (var, se) = stats::mean_se(&sq);
    assert!((var - 7.0 / 3.0 * horizon).abs() < 3.0 * se, "{var} +- {se}");
    assert!(step_increment(29.0, 2.0, &lin, horizon, &mut rng).is_err());
}

#[test]
fn replicas_are_reproducible() {
    let mut cfg = BbmConfig::new(15.0);
    cfg.k_list = vec![1.0, 2.0];
    let sim = simulator(cfg);
    let a = simulate_replica(&sim, 42, 7).unwrap();
    let b = simulate_replica(&sim, 42, 7).unwrap();
    let c = simulate_replica(&sim, 42, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.max, c.max);
    let r1 = run_replicas(&sim, 20, 9).unwrap();
    let r2 = run_replicas(&sim, 20, 9).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.maxima[7], simulate_replica(&sim, 9, 7).unwrap().max);
}

#[test]
fn mean_population_grows_like_exp_half_t() {
    let check = population_check(&OffspringLaw::binary(), 8.0, 4000, 11).unwrap();
    println!("{check:?}");
    assert!(check.z_score().abs() < 3.0);
}

#[test]
fn branch_gaps_are_exponential() {
    let mut cfg = BbmConfig::new(60.0);
    cfg.prune_depth = Some(0.0);
    let sim = simulator(cfg);
    let mut gaps = Vec::new();
    let mut i = 0;
    while gaps.len() < 10_000 {
        gaps.extend(simulate_replica(&sim, 5, i).unwrap().spine_gaps);
        i += 1;
    }
    gaps.truncate(10_000);
    let atoms: Vec<(f64, f64)> = gaps.iter().map(|&g| (g, 1.0)).collect();
    let d = stats::ks_weighted(&atoms, |x| 1.0 - (-0.5 * x).exp());
    let p = stats::kolmogorov_pvalue(d, gaps.len());
    assert!(p > 0.01, "KS {d}, p {p}");
}

#[test]
fn maximum_law_matches_pde() {
    let horizon = 20.0;
    let n = 4000;
    let mut cfg = BbmConfig::new(horizon);
    cfg.k_list = vec![1.0, 2.0];
    let run = run_replicas(&simulator(cfg), n, 3).unwrap();
    let pde = solve_fkpp(&SigmaProfile::linear2(), &OffspringLaw::binary(), horizon, &FkppGrid::default(), &[])
        .unwrap()
        .final_field;
    for level in [0.25, 0.5, 0.75] {
        let x = front_position(&pde, level).unwrap();
        let below = run.maxima.iter().filter(|&&m| m < x).count() as u64;
        let (lo, hi) = stats::wilson(below, n as u64, 3.0);
        assert!(lo <= level && level <= hi, "level {level}: {}", below as f64 / n as f64);
    }
}

#[test]
fn adaptive_jumps_do_not_change_crossings() {
    let mut cfg = BbmConfig::new(8.0);
    cfg.k_list = vec![1.0, 2.0];
    cfg.prune_depth = Some(6.0);
    let fine = {
        let mut c = cfg.clone();
        c.max_step = c.dt;
        run_replicas(&simulator(c), 3000, 4).unwrap()
    };
    let coarse = run_replicas(&simulator(cfg), 3000, 5).unwrap();
    let (a, b) = (crossing_probability(&fine).unwrap(), crossing_probability(&coarse).unwrap());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        let se = (x.p * (1.0 - x.p) / 3000.0 + y.p * (1.0 - y.p) / 3000.0).sqrt();
        assert!((x.p - y.p).abs() < 3.5 * se, "K={}: {} vs {}", x.k, x.p, y.p);
    }
}

#[test]
fn pruning_depth_consistency() {
    let horizon = 30.0;
    let run = |depth: f64| {
        let mut cfg = BbmConfig::new(horizon);
        cfg.prune_depth = Some(depth);
        run_replicas(&simulator(cfg), 2000, 6).unwrap()
    };
    let (a, b) = (run(8.0), run(10.0));
    let (ma, mb) = (stats::median(&a.maxima), stats::median(&b.maxima));
    println!("medians {ma:.3} {mb:.3}");
    assert!((ma - mb).abs() < 0.3);
    assert!(b.populations.iter().sum::<u64>() > a.populations.iter().sum::<u64>());
}

#[test]
fn gamma_pruning_discards_whole_replicas() {
    let mut cfg = BbmConfig::new(30.0);
    cfg.prune_reference = PruneReference::Gamma;
    let run = run_replicas(&simulator(cfg), 300, 2).unwrap();
    let dead = run.maxima.iter().filter(|m| !m.is_finite()).count();
    assert!(dead > 0);
    assert!(run.pruned > 0);
}

#[test]
fn zero_depth_is_degenerate() {
    let mut cfg = BbmConfig::new(30.0);
    cfg.prune_depth = Some(0.0);
    let run = run_replicas(&simulator(cfg), 200, 1).unwrap();
    assert!(run.populations.iter().all(|&p| p <= 2));
    let full = run_replicas(&simulator(BbmConfig::new(30.0)), 200, 1).unwrap();
    assert!(stats::median(&run.maxima) < stats::median(&full.maxima));
}

#[test]
fn wilson_width_scales_as_root_n() {
    let mut cfg = BbmConfig::new(10.0);
    cfg.prune_depth = Some(6.0);
    cfg.k_list = vec![1.0];
    let sim = simulator(cfg);
    let width = |n: usize| {
        let row = &crossing_probability(&run_replicas(&sim, n, 8).unwrap()).unwrap().rows[0];
        row.hi - row.lo
    };
    let ratio = width(1000) / width(4000);
    assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
}

#[test]
fn tables_and_counts() {
    let mut cfg = BbmConfig::new(30.0);
    cfg.k_list = vec![1.0, 2.0, 3.0];
    cfg.zeta_k = Some(1.0);
    let run = run_replicas(&simulator(cfg), 400, 12).unwrap();
    let cross = crossing_probability(&run).unwrap();
    assert!(cross.rows.windows(2).all(|w| w[1].hits <= w[0].hits));
    assert!(cross.fit.unwrap().slope < 0.0);
    let tail = tail_estimate(&run, &[1.0, 2.0, 3.0], 2.0).unwrap();
    assert!(tail.rows.iter().all(|r| r.lo <= r.p && r.p <= r.hi));
    assert!(tail.band >= 1.0);
    assert!(tail_estimate(&run, &[0.5], 2.0).is_err());
    assert!(run.n_t.iter().zip(&run.populations).all(|(n, p)| n <= p));
    assert!(run.n_t.iter().sum::<u64>() > 0);
}

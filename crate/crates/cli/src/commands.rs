use std::sync::Arc;

use serde::Serialize;

use bbm_lab::airy::AiryBasis;
use bbm_lab::bbm::{crossing_probability, run_replicas, tail_estimate, BbmConfig, CrossingTable, PruneReference, Simulator, TailTable};
use bbm_lab::fkpp::{fit_expansion, solve_fkpp_sweep, ExpansionFit, FkppGrid};
use bbm_lab::field::ScalarField1D;
use bbm_lab::gibbs::{pruned_mean_d, pruned_mean_w, run_gibbs, second_moment_killed, BesselReference, SecondMoment, HISTOGRAM_BINS, HISTOGRAM_MAX};
use bbm_lab::law::OffspringLaw;
use bbm_lab::predictor::{m_prime, BarrierSpec, BarrierVariant, Curves};
use bbm_lab::sigma::{validate_sigma, SigmaProfile};
use bbm_lab::spectral::{evolve, fd_oracle, parse_q, project_function, project_initial, CanonicalProblem, SpectralState};
use bbm_lab::{parallel, stats};

use crate::config::{AiryArgs, BbmArgs, Command, FkppArgs, GibbsArgs, InitialData, PredictArgs, PruneRef, RunConfig, SolveAiryArgs};
use crate::emit::{num, Emitter, RunOutput};
use crate::CliError;

/// Runs the configured command and returns the files it wrote.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let mut out = Emitter::new(cfg)?;
    match &cfg.command {
        Command::ValidateAiry(a) => validate_airy(cfg, a, &mut out)?,
        Command::Predict(a) => predict(cfg, a, &mut out)?,
        Command::SolveAiry(a) => solve_airy(cfg, a, &mut out)?,
        Command::SolveFkpp(a) => solve_fkpp(cfg, a, &mut out)?,
        Command::SimulateBbm(a) => simulate_bbm(cfg, a, &mut out)?,
        Command::Gibbs(a) => gibbs(cfg, a, &mut out)?,
    }
    out.config(cfg)?;
    Ok(out.finish())
}

fn get<T: Clone>(v: &Option<T>) -> T {
    v.clone().expect("filled in by parse_config")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Serialize)]
struct AiryRow {
    n: usize,
    alpha: f64,
    ai_prime_abs: f64,
    ortho_error: f64,
    eigen_residual: f64,
}

#[derive(Serialize)]
struct AiryReport {
    modes: usize,
    max_ortho_error: f64,
    max_eigen_residual: f64,
    rows: Vec<AiryRow>,
}

fn validate_airy(cfg: &RunConfig, a: &AiryArgs, out: &mut Emitter) -> Result<(), CliError> {
    let modes = get(&a.modes);
    let basis = AiryBasis::new(modes)?;
    let rows: Vec<AiryRow> = parallel::map_indexed(modes, |i| AiryRow {
        n: i + 1,
        alpha: basis.alpha(i + 1),
        ai_prime_abs: basis.normalizers()[i],
        ortho_error: basis.gram_error(i + 1),
        eigen_residual: basis.eigen_residual(i + 1),
    });
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n.to_string(), num(r.alpha), num(r.ai_prime_abs), num(r.ortho_error), num(r.eigen_residual)])
        .collect();
    out.csv(
        ".csv",
        &[
            ("n", "mode index"),
            ("alpha_n", "n-th zero of Ai(-x)"),
            ("ai_prime_abs", "|Ai'(-alpha_n)|"),
            ("ortho_error", "max over m of |<psi_n, psi_m> - delta_nm|"),
            ("eigen_residual", "max |psi_n'' - x psi_n + alpha_n psi_n| on a grid"),
        ],
        &table,
    )?;
    for r in &table {
        out.note(r.join(","));
    }
    let report = AiryReport {
        modes,
        max_ortho_error: rows.iter().map(|r| r.ortho_error).fold(0.0, f64::max),
        max_eigen_residual: rows.iter().map(|r| r.eigen_residual).fold(0.0, f64::max),
        rows,
    };
    out.json(cfg, &report)
}

#[derive(Serialize)]
struct Prediction {
    sigma: String,
    #[serde(rename = "T")]
    horizon: f64,
    v1: f64,
    w1: f64,
    m_prime: f64,
    sigma0: f64,
    sigma1: f64,
    #[serde(rename = "K")]
    k: Option<f64>,
    gamma_samples: Vec<[f64; 2]>,
    zeta_samples: Vec<[f64; 2]>,
}

fn predict(cfg: &RunConfig, a: &PredictArgs, out: &mut Emitter) -> Result<(), CliError> {
    let profile = SigmaProfile::parse(&get(&a.sigma))?;
    // only the monotonicity part of the check matters here
    validate_sigma(&profile, 1.0)?;
    let horizon = get(&a.horizon);
    let samples = get(&a.samples).max(2);
    let curves = Arc::new(Curves::new(profile));
    let bundle = m_prime(&curves, horizon)?;
    let times: Vec<f64> = (0..samples).map(|i| horizon * i as f64 / (samples - 1) as f64).collect();
    let gamma_samples = times
        .iter()
        .map(|&t| Ok([t, curves.gamma(horizon, t)?]))
        .collect::<bbm_lab::Result<Vec<_>>>()?;
    let zeta_samples = match a.k {
        Some(k) => {
            let barrier = BarrierSpec::new(curves.clone(), horizon, k, BarrierVariant::Zeta)?;
            times.iter().map(|&t| Ok([t, barrier.zeta(t)?])).collect::<bbm_lab::Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    let p = Prediction {
        sigma: curves.profile().name().to_string(),
        horizon,
        v1: bundle.v1,
        w1: bundle.w1,
        m_prime: bundle.m_prime,
        sigma0: bundle.sigma0,
        sigma1: bundle.sigma1,
        k: a.k,
        gamma_samples,
        zeta_samples,
    };
    out.note(format!("v1 {} w1 {} m_prime {}", num(p.v1), num(p.w1), num(p.m_prime)));
    let mut columns = vec![("t", "time"), ("gamma", "predictor curve gamma_T(t)")];
    let rows: Vec<Vec<f64>> = if p.zeta_samples.is_empty() {
        p.gamma_samples.iter().map(|g| g.to_vec()).collect()
    } else {
        columns.push(("zeta", "glued barrier gamma_T(t) + K - phi_T(t)"));
        p.gamma_samples.iter().zip(&p.zeta_samples).map(|(g, z)| vec![g[0], g[1], z[1]]).collect()
    };
    out.dat(".dat", &[], &columns, &[rows])?;
    out.json(cfg, &p)
}

fn bump(x: f64) -> f64 {
    x * (-4.0 * (x - 1.0) * (x - 1.0)).exp()
}

const FIELD_MAX: f64 = 12.0;
const FIELD_STEP: f64 = 0.02;

#[derive(Serialize)]
struct OracleReport {
    dx: f64,
    dt: f64,
    /// Relative L2 distance between the two solutions at the final time.
    relative_l2_gap: f64,
}

#[derive(Serialize)]
struct SpectralReport {
    epsilon: f64,
    t: f64,
    truncation: usize,
    q0: f64,
    q_t: f64,
    norm_initial: f64,
    norm: f64,
    tail_norm: f64,
    ground_drift: f64,
    ground_exponent: f64,
    snapshots: Vec<f64>,
    oracle: Option<OracleReport>,
}

fn interpolate(field: &ScalarField1D, x: f64) -> f64 {
    let pos = (x - field.x0) / field.dx;
    let i = (pos.floor().max(0.0) as usize).min(field.len() - 2);
    let f = pos - i as f64;
    field.values[i] * (1.0 - f) + field.values[i + 1] * f
}

fn solve_airy(cfg: &RunConfig, a: &SolveAiryArgs, out: &mut Emitter) -> Result<(), CliError> {
    let eps = get(&a.epsilon);
    let t_end = get(&a.t);
    let problem = CanonicalProblem::new(parse_q(&get(&a.q))?, eps, get(&a.truncation))?;
    let initial = get(&a.initial);
    let s0 = match initial {
        InitialData::Delta => project_initial(get(&a.x0), &problem)?,
        InitialData::Bump => project_function(bump, FIELD_MAX, &problem),
    };
    let mut times = get(&a.snapshots);
    if times.iter().any(|&s| !(s >= 0.0 && s <= t_end)) {
        return Err(CliError::Usage(format!("snapshot times must lie in [0, {t_end}]")));
    }
    times.push(t_end);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let oracle = get(&a.oracle);
    let dx = a.dx.unwrap_or((eps.sqrt() / 20.0).min(0.0025));
    let dt = a.dt.unwrap_or(eps / 50.0);
    let mut fd = oracle.then(|| {
        let nodes = (FIELD_MAX / dx).round() as usize + 1;
        ScalarField1D::from_fn(0.0, dx, nodes, bump)
    });

    let ys: Vec<f64> = (0..=(FIELD_MAX / FIELD_STEP).round() as usize).map(|i| FIELD_STEP * i as f64).collect();
    let mut state = s0.clone();
    let mut blocks = Vec::new();
    let mut gap = None;
    for &time in &times {
        state = evolve(&state, &problem, time)?;
        let spectral: Vec<f64> = ys.iter().map(|&y| state.reconstruct(problem.basis(), y)).collect();
        let fd_values = match fd.take() {
            Some(field) => {
                let field = fd_oracle(&problem, &field, time, dt)?;
                let decay = ground_decay(&state, &problem);
                let values: Vec<f64> = ys.iter().map(|&y| interpolate(&field, y) / decay).collect();
                let (num2, den2) = values.iter().zip(&spectral).fold((0.0, 0.0), |(n, d), (f, s)| {
                    (n + (f - s) * (f - s), d + s * s)
                });
                gap = Some((num2 / den2).sqrt());
                fd = Some(field);
                Some(values)
            }
            None => None,
        };
        let block: Vec<Vec<f64>> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let mut row = vec![time, y, spectral[i]];
                if let Some(v) = &fd_values {
                    row.push(v[i]);
                }
                row
            })
            .collect();
        blocks.push(block);
    }

    let coeffs: Vec<Vec<String>> = state
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| vec![(i + 1).to_string(), num(*c)])
        .collect();
    out.csv(
        "-coeffs.csv",
        &[("n", "mode index"), ("c_n", "coefficient of psi_n^{q(t)} in the ground-rescaled solution at t")],
        &coeffs,
    )?;
    let mut columns = vec![
        ("t", "time of the block"),
        ("y", "position"),
        ("W_spectral", "ground-rescaled solution from the eigen-expansion"),
    ];
    if oracle {
        columns.push(("W_fd", "ground-rescaled finite-difference solution"));
    }
    out.dat("-field.dat", &["one block per snapshot time".into()], &columns, &blocks)?;

    let report = SpectralReport {
        epsilon: eps,
        t: t_end,
        truncation: problem.truncation(),
        q0: problem.q(0.0),
        q_t: problem.q(t_end),
        norm_initial: s0.norm(),
        norm: state.norm(),
        tail_norm: state.tail_norm(),
        ground_drift: (state.coeffs[0] - s0.coeffs[0]).abs(),
        ground_exponent: state.ground_exponent,
        snapshots: times,
        oracle: gap.map(|g| OracleReport { dx, dt, relative_l2_gap: g }),
    };
    out.note(format!("norm {} -> {}", num(report.norm_initial), num(report.norm)));
    if let Some(o) = &report.oracle {
        out.note(format!("oracle relative L2 gap {}", num(o.relative_l2_gap)));
    }
    out.json(cfg, &report)
}

fn ground_decay(state: &SpectralState, problem: &CanonicalProblem) -> f64 {
    (-problem.basis().alpha(1) * state.ground_exponent / state.epsilon).exp()
}

#[derive(Serialize)]
struct FrontRow {
    #[serde(rename = "T")]
    horizon: f64,
    front_median: f64,
    m_prime: Option<f64>,
    gap: Option<f64>,
}

#[derive(Serialize)]
struct FitReport {
    v1: f64,
    w1: f64,
    log_coefficient: f64,
    constant: f64,
    coefficients: [f64; 4],
    std_errors: [f64; 4],
}

#[derive(Serialize)]
struct FkppReport {
    sigma: String,
    law: Vec<(u32, f64)>,
    grid: FkppGrid,
    fronts: Vec<FrontRow>,
    fit: Option<FitReport>,
    fit_error: Option<String>,
}

fn solve_fkpp(cfg: &RunConfig, a: &FkppArgs, out: &mut Emitter) -> Result<(), CliError> {
    let profile = SigmaProfile::parse(&get(&a.sigma))?;
    let law = OffspringLaw::parse(&get(&a.law))?;
    let horizons = get(&a.horizons);
    let grid = FkppGrid {
        dx: get(&a.dx),
        dt: get(&a.dt),
        left_pad: get(&a.left_pad),
        right_pad: a.right_pad,
        moving: !get(&a.fixed_window),
        ..FkppGrid::default()
    };
    let solutions = solve_fkpp_sweep(&profile, &law, &horizons, &grid)
        .into_iter()
        .collect::<bbm_lab::Result<Vec<_>>>()?;
    let curves = Curves::new(profile.clone());
    let fronts: Vec<FrontRow> = solutions
        .iter()
        .map(|s| {
            let mp = m_prime(&curves, s.horizon).ok().map(|b| b.m_prime);
            FrontRow {
                horizon: s.horizon,
                front_median: s.median,
                m_prime: mp,
                gap: mp.map(|m| s.median - m),
            }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = fronts.iter().map(|f| (f.horizon, f.front_median)).collect();
    let fit = fit_expansion(&pairs);

    let rows: Vec<Vec<String>> = fronts
        .iter()
        .map(|f| vec![num(f.horizon), num(f.front_median), opt(f.m_prime), opt(f.gap)])
        .collect();
    out.csv(
        ".csv",
        &[
            ("T", "horizon"),
            ("front_median", "x with F(x, T) = 1/2"),
            ("m_prime", "v(1) T - w(1) T^{1/3} - sigma(1) log T; empty when undefined"),
            ("gap", "front_median - m_prime"),
        ],
        &rows,
    )?;
    for r in &rows {
        out.note(r.join(","));
    }
    if let Ok(f) = &fit {
        write_expansion(out, f, &pairs)?;
    }

    let report = FkppReport {
        sigma: profile.name().to_string(),
        law: law.pmf().to_vec(),
        grid,
        fronts,
        fit_error: fit.as_ref().err().map(|e| e.to_string()),
        fit: fit.ok().map(|f| FitReport {
            v1: f.v1(),
            w1: f.w1(),
            log_coefficient: f.log_coefficient(),
            constant: f.constant(),
            coefficients: f.coefficients,
            std_errors: f.std_errors,
        }),
    };
    out.json(cfg, &report)
}

fn write_expansion(out: &mut Emitter, fit: &ExpansionFit, pairs: &[(f64, f64)]) -> Result<(), CliError> {
    let c = fit.coefficients;
    let notes = [
        "front(T) ~ a T + b T^(1/3) + c log T + d".to_string(),
        format!("a = {} b = {} c = {} d = {}", num(c[0]), num(c[1]), num(c[2]), num(c[3])),
        "index 0: fitted horizons; index 1: fit on a log-spaced grid (measured column is NaN)".to_string(),
    ];
    let data: Vec<Vec<f64>> = pairs
        .iter()
        .zip(&fit.residuals)
        .map(|(&(t, m), &r)| vec![t, m, fit.predict(t), r])
        .collect();
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).ln();
    let hi = pairs.iter().map(|p| p.0).fold(0.0, f64::max).ln();
    let curve: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let t = (lo + (hi - lo) * i as f64 / 199.0).exp();
            vec![t, f64::NAN, fit.predict(t), f64::NAN]
        })
        .collect();
    out.dat(
        "-expansion.dat",
        &notes,
        &[
            ("T", "horizon"),
            ("front_median", "measured median"),
            ("fit", "fitted expansion"),
            ("residual", "measured minus fitted"),
        ],
        &[data, curve],
    )
}

#[derive(Serialize)]
struct BbmReport {
    sigma: String,
    #[serde(rename = "T")]
    horizon: f64,
    replicas: usize,
    surviving: usize,
    median: f64,
    quantiles: Vec<[f64; 2]>,
    m_prime: Option<f64>,
    pruned: u64,
    mean_population: f64,
    mean_n_t: Option<f64>,
    crossing: CrossingTable,
    tail: TailTable,
}

fn simulate_bbm(cfg: &RunConfig, a: &BbmArgs, out: &mut Emitter) -> Result<(), CliError> {
    let profile = SigmaProfile::parse(&get(&a.sigma))?;
    let law = OffspringLaw::parse(&get(&a.law))?;
    let horizon = get(&a.horizon);
    let k_list = get(&a.k_list);
    let mut bc = BbmConfig::new(horizon);
    bc.prune_depth = get(&a.prune_depth).0;
    bc.prune_reference = match get(&a.prune_reference) {
        PruneRef::Leader => PruneReference::Leader,
        PruneRef::Gamma => PruneReference::Gamma,
    };
    bc.k_list = k_list.clone();
    bc.zeta_k = a.zeta_k;
    bc.dt = get(&a.dt);
    let sigma0 = profile.sigma(0.0);
    let curves = Arc::new(Curves::new(profile));
    let sim = Simulator::new(curves.clone(), law, bc)?;
    let replicas = get(&a.replicas);
    if replicas == 0 {
        return Err(CliError::Usage("--replicas must be positive".into()));
    }
    let run = run_replicas(&sim, replicas, get(&a.seed))?;
    let crossing = crossing_probability(&run)?;
    let tail = tail_estimate(&run, &k_list, sigma0)?;

    let mut sorted = run.maxima.clone();
    sorted.sort_by(f64::total_cmp);
    let pops: Vec<f64> = run.populations.iter().map(|&p| p as f64).collect();
    let report = BbmReport {
        sigma: curves.profile().name().to_string(),
        horizon,
        replicas,
        surviving: run.maxima.iter().filter(|m| m.is_finite()).count(),
        median: stats::median(&run.maxima),
        quantiles: [0.05, 0.25, 0.5, 0.75, 0.95]
            .iter()
            .map(|&p| [p, stats::quantile_sorted(&sorted, p)])
            .collect(),
        m_prime: m_prime(&curves, horizon).ok().map(|b| b.m_prime),
        pruned: run.pruned,
        mean_population: stats::mean_se(&pops).0,
        mean_n_t: a.zeta_k.map(|_| run.n_t.iter().sum::<u64>() as f64 / replicas as f64),
        crossing,
        tail,
    };

    let rows: Vec<Vec<String>> = (0..replicas)
        .map(|r| {
            vec![
                r.to_string(),
                num(run.maxima[r]),
                run.crossed[r].to_string(),
                run.populations[r].to_string(),
                run.n_t[r].to_string(),
            ]
        })
        .collect();
    out.csv(
        "-maxima.csv",
        &[
            ("replica", "replica index, also its random stream"),
            ("M_T", "maximum at T; -inf when every particle was pruned"),
            ("crossed", "number of leading K-list levels gamma_T + K crossed"),
            ("population", "particles alive at T"),
            ("N_T", "particles above the glued barrier at T; 0 without --zeta-K"),
        ],
        &rows,
    )?;
    out.note(format!(
        "median M_T {} over {} replicas ({} survived)",
        num(report.median),
        replicas,
        report.surviving
    ));
    for row in &report.crossing.rows {
        out.note(format!("K {} crossing p {} [{}, {}]", num(row.k), num(row.p), num(row.lo), num(row.hi)));
    }
    out.json(cfg, &report)
}

#[derive(Serialize)]
struct GibbsReport {
    t: f64,
    floor: Option<f64>,
    replicas: usize,
    pooled_ks: Option<f64>,
    pooled_negative_fraction: f64,
    median_replica_ks: Option<f64>,
    degenerate: usize,
    mean_d: f64,
    se_d: f64,
    mean_w: f64,
    se_w: f64,
    /// `E[D_t]` and `E[W_t]` for a start at the origin under the same floor.
    expected_d: f64,
    expected_w: f64,
}

#[derive(Serialize)]
struct KilledReport {
    second_moment: SecondMoment,
    expected_first_moment: f64,
}

fn gibbs(cfg: &RunConfig, a: &GibbsArgs, out: &mut Emitter) -> Result<(), CliError> {
    let t = get(&a.t);
    let law = OffspringLaw::parse(&get(&a.law))?;
    let replicas = get(&a.replicas);
    let seed = get(&a.seed);
    if replicas == 0 {
        return Err(CliError::Usage("--replicas must be positive".into()));
    }
    if get(&a.killed) {
        let x = get(&a.x);
        let sm = second_moment_killed(x, t, &law, replicas, seed)?;
        out.note(format!("E[D_t^2] e^x = {} +- {}", num(sm.scaled), num(sm.scaled_se)));
        let report = KilledReport {
            second_moment: sm,
            expected_first_moment: x * (-x).exp(),
        };
        return out.json(cfg, &report);
    }

    let floor = get(&a.floor).0;
    let run = run_gibbs(t, &law, floor, replicas, seed)?;
    let rows: Vec<Vec<String>> = run
        .replicas
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), num(r.d), num(r.w), r.population.to_string(), opt(r.ks)])
        .collect();
    out.csv(
        "-replicas.csv",
        &[
            ("replica", "replica index, also its random stream"),
            ("D_t", "derivative martingale sum of X e^{-X} over positions X of the drifted process"),
            ("W_t", "additive martingale sum of e^{-X}"),
            ("population", "particles alive at t"),
            ("KS_contrib", "KS distance of this replica's normalised measure of X / sqrt(t) to rho; empty when D_t <= 0"),
        ],
        &rows,
    )?;

    let reference = BesselReference;
    let width = HISTOGRAM_MAX / HISTOGRAM_BINS as f64;
    let pooled_ok = run.pooled_ks.is_some();
    let hist: Vec<Vec<f64>> = run
        .histogram
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let x = width * (i as f64 + 0.5);
            vec![x, if pooled_ok { m / width } else { f64::NAN }, reference.density(x)]
        })
        .collect();
    out.dat(
        "-histogram.dat",
        &["pooled density is NaN when the pooled weight is not positive".into()],
        &[
            ("x", "bin centre in X / sqrt(t)"),
            ("pooled", "D-weighted pooled density"),
            ("rho", "sqrt(2/pi) x^2 exp(-x^2/2)"),
        ],
        &[hist],
    )?;

    let ks: Vec<f64> = run.replicas.iter().filter_map(|r| r.ks).collect();
    let report = GibbsReport {
        t,
        floor,
        replicas,
        pooled_ks: run.pooled_ks,
        pooled_negative_fraction: run.pooled_negative_fraction,
        median_replica_ks: (!ks.is_empty()).then(|| stats::median(&ks)),
        degenerate: run.degenerate,
        mean_d: run.mean_d,
        se_d: run.se_d,
        mean_w: run.mean_w,
        se_w: run.se_w,
        expected_d: floor.map_or(0.0, |f| pruned_mean_d(t, f)),
        expected_w: floor.map_or(1.0, |f| pruned_mean_w(t, f)),
    };
    out.note(format!(
        "E[D_t] {} +- {}, pooled KS {}",
        num(report.mean_d),
        num(report.se_d),
        report.pooled_ks.map_or("undefined".into(), num)
    ));
    out.json(cfg, &report)
}

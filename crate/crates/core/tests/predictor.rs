use std::sync::Arc;

use bbm_lab::predictor::{self, build_phi, m_prime, BarrierSpec, BarrierVariant, Curves, QTag};
use bbm_lab::sigma::{validate_sigma, SigmaProfile};
use bbm_lab::Error;

fn linear() -> Arc<Curves> {
    Arc::new(Curves::new(SigmaProfile::linear2()))
}

#[test]
fn gamma_endpoints() {
    let c = linear();
    let t = 500.0;
    assert_eq!(c.gamma(t, 0.0).unwrap(), 0.0);
    let end = c.v1() * t - c.w1() * t.cbrt();
    assert!((c.gamma(t, t).unwrap() - end).abs() < 1e-9);
    assert!(c.gamma(t, t + 1.0).is_err());
    assert!(c.gamma(t, -0.1).is_err());
    let b = m_prime(&c, t).unwrap();
    // gamma_T(T) - m'_T = sigma(1) log T
    assert!((c.gamma(t, t).unwrap() - b.m_prime - b.sigma1 * t.ln()).abs() < 1e-9);
}

#[test]
fn prediction_grows_with_horizon() {
    let c = linear();
    let mut last = f64::NEG_INFINITY;
    for t in [100.0, 200.0, 400.0, 800.0, 1600.0] {
        let m = m_prime(&c, t).unwrap().m_prime;
        assert!(m > last);
        last = m;
    }
    let b = m_prime(&c, 1000.0).unwrap();
    let shifted = b.m_prime - b.w1 * 10.0;
    let doubled = b.v1 * 1000.0 - 2.0 * b.w1 * 10.0 - b.sigma1 * 1000f64.ln();
    assert!((shifted - doubled).abs() < 1e-9);
}

#[test]
fn w_is_grid_invariant() {
    let p = SigmaProfile::exponential(0.5, 1.5, 1.0);
    let direct = predictor::w_of(&p, 1.0).unwrap();
    let tabled = Curves::new(p).w1();
    assert!((direct - tabled).abs() < 1e-9);
}

#[test]
fn curves_increase_from_zero() {
    let p = SigmaProfile::power(2.0, 1.0, 2.0);
    let mut prev = (0.0, 0.0, 0.0);
    for i in 1..=20 {
        let t = i as f64 / 20.0;
        let cur = (
            predictor::v_of(&p, t).unwrap(),
            predictor::w_of(&p, t).unwrap(),
            predictor::j_of(&p, t).unwrap(),
        );
        assert!(cur.0 > prev.0 && cur.1 > prev.1 && cur.2 > prev.2);
        prev = cur;
    }
}

#[test]
fn zeta_glue_constraints() {
    let p = SigmaProfile::linear2();
    for t in [1e3, 1e4, 1e5] {
        let phi = build_phi(&p, t).unwrap();
        let s = phi.drop;
        let h = phi.h;
        assert!((phi.value(t) - p.sigma(1.0) * t.ln()).abs() < 1e-9);
        for i in 0..=10_000 {
            let u = t * i as f64 / 10_000.0;
            if u <= t - h {
                assert_eq!(phi.value(u), 0.0);
            }
            assert!(phi.slope(u) <= 2.0 * s / h + 1e-12);
            assert!(phi.curvature(u) <= 4.0 * s / (h * h) + 1e-15);
        }
    }
}

#[test]
fn zeta_is_c1_at_glue_points() {
    let c = linear();
    let t = 1000.0;
    let b = BarrierSpec::new(c, t, 2.0, BarrierVariant::Zeta).unwrap();
    assert!((b.zeta(t).unwrap() - (b.gamma(t).unwrap() + 2.0 - t.ln())).abs() < 1e-9);
    let h = 1e-4;
    for knot in [b.phi.glue_start(), b.phi.glue_start() + 0.5 * b.phi.h] {
        let left = (b.zeta(knot).unwrap() - b.zeta(knot - h).unwrap()) / h;
        let right = (b.zeta(knot + h).unwrap() - b.zeta(knot).unwrap()) / h;
        assert!((left - right).abs() < 1e-3, "{left} vs {right}");
        let jump = (b.zeta(knot + 1e-9).unwrap() - b.zeta(knot - 1e-9).unwrap()).abs();
        assert!(jump < 1e-6);
    }
}

#[test]
fn q_t_limits() {
    let c = linear();
    for &t in &[0.0, 0.3, 0.9] {
        let limit = 1.0 / (2.0 - t) / (2.0 - t);
        assert!((c.q_t(1e12, t).unwrap() - limit).abs() < 1e-6);
    }
    let gap = |horizon: f64| {
        (0..=100)
            .map(|i| {
                let s = i as f64 / 100.0;
                let q = c.q_t(horizon, s).unwrap();
                let sig = c.profile().sigma(s);
                let alpha1 = bbm_lab::airy::airy_zero(1).unwrap();
                (alpha1 * q.powf(2.0 / 3.0) * (0.5 * sig * sig).cbrt() - c.w_prime_over_sigma(s)).abs()
            })
            .fold(0.0, f64::max)
    };
    let (g1, g2) = (gap(1e3), gap(8e3));
    // gap ~ C T^{-2/3}: eightfold horizon cuts it by ~4
    assert!(g1 * 1e3f64.powf(2.0 / 3.0) < 10.0);
    assert!((g1 / g2 - 4.0).abs() < 0.4, "{g1} {g2}");
}

#[test]
fn q_t_threshold_separates_signs() {
    // sigma = 1 + exp(-3 s): curvature makes the correction negative
    let c = Curves::new(SigmaProfile::exponential(1.0, 1.0, 3.0));
    let threshold = c.q_t_threshold();
    assert!(threshold > 0.0);
    assert!(c.q_t_check(threshold * 1.5).is_ok());
    let err = c.q_t_check(threshold * 0.5).unwrap_err();
    assert!(err.to_string().contains("horizon too small for positive potential"));
    assert!(matches!(err, Error::NonPositivePotential { .. }));
}

#[test]
fn canonical_potential_at_endpoints() {
    let c = linear();
    // tau = 1 maps to s = 1: 2 |sigma'| / sigma^4 = 2
    let q = c.q_canonical(1e3, QTag::Leading, 1.0).unwrap();
    assert!((q - 2.0).abs() < 1e-8);
    assert!(c.q_canonical(1e3, QTag::QT, 0.5).unwrap() > 0.0);
    assert!(c.q_canonical(1e3, QTag::QT, 1.5).is_err());
}

#[test]
fn s0_scales_like_t_two_thirds() {
    let c = linear();
    for t in [1e3, 1e4, 1e5, 1e6] {
        let r = c.s0(t).unwrap() / t.powf(2.0 / 3.0);
        assert!((1.5..2.5).contains(&r), "T={t}: {r}");
    }
}

#[test]
fn membership_examples() {
    let m = validate_sigma(&SigmaProfile::linear2(), 4.0).unwrap();
    assert!(m.member && m.curvature_margin == 4.0);
    assert!(!validate_sigma(&SigmaProfile::linear2(), 2.5).unwrap().member);
    assert!(matches!(
        validate_sigma(&SigmaProfile::constant(1.0), 4.0),
        Err(Error::SigmaNotDecreasing { .. })
    ));
}

#[test]
fn table_file_round_trip() {
    let exact = SigmaProfile::linear2();
    let mut text = String::from("# s sigma dsigma d2sigma\n");
    for i in 0..=10 {
        let s = i as f64 / 10.0;
        text.push_str(&format!("{s} {} {} {}\n", exact.sigma(s), exact.dsigma(s), exact.d2sigma(s)));
    }
    let dir = std::env::temp_dir().join(format!("bbm-lab-sigma-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("linear.dat");
    std::fs::write(&path, text).unwrap();
    let tab = SigmaProfile::parse(path.to_str().unwrap()).unwrap();
    assert!(tab.is_tabulated());
    let (a, b) = (Curves::new(tab).w1(), Curves::new(exact).w1());
    assert!((a - b).abs() < 1e-9);
    std::fs::remove_dir_all(dir).ok();
}

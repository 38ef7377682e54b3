use std::f64::consts::PI;

use exitlab_core::conditions::*;
use exitlab_core::exit::*;
use exitlab_core::geometry::*;
use exitlab_core::kernel::KernelSpec;
use exitlab_core::quadrature::{integrate_to_infinity, Tolerance};
use exitlab_core::scaling::ScalingProfile;
use exitlab_core::simulate::*;

fn cauchy() -> KernelSpec {
    KernelSpec::new(Dim::One, ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap(), 1.1, 5.0).unwrap()
}

fn unit_ball() -> Ball {
    Ball::new(Point::ORIGIN, 1.0).unwrap()
}

fn right_of(r: f64) -> SectorUnion {
    SectorUnion(vec![AnnularSector::new(Point::ORIGIN, r, f64::INFINITY, DirectionCap::positive()).unwrap()])
}

/// Exit density of the Cauchy process from (-1, 1).
fn density(x: f64, y: f64) -> f64 {
    ((1.0 - x * x) / (y * y - 1.0)).sqrt() / (PI * (y - x).abs())
}

/// `P_x(X_τ ≥ 1)`, the harmonic function of the right-hand indicator.
fn h_right(x: f64) -> f64 {
    0.5 + x.asin() / PI
}

#[test]
fn arcsin_formula_matches_density_quadrature() {
    for x in [-0.7, 0.0, 0.3, 0.9] {
        // y = 1 + t² removes the inverse square-root singularity at y = 1
        let q = integrate_to_infinity(|t: f64| 2.0 * t * density(x, 1.0 + t * t), 0.0, Tolerance::relative(1e-11))
            .unwrap()
            .value;
        assert!((q - h_right(x)).abs() < 1e-8, "x = {x}: {q} vs {}", h_right(x));
    }
}

#[test]
fn cauchy_exit_measure_oracles() {
    let spec = cauchy();
    let cfg = SimConfig::default().with_paths(40_000).with_seed(21);
    for x in [0.0, 0.5] {
        let mu = estimate_exit_measure(&spec, &Point::on_axis(x), &unit_ball(), &cfg, HistogramSpec::default()).unwrap();
        assert!(mu.valid);
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        let right = mu.mass_of(&right_of(1.0));
        assert!((right.estimate - h_right(x)).abs() <= 3.0 * right.std_error + 2e-3, "x = {x}: {right:?}");
    }
    let mu = estimate_exit_measure(&spec, &Point::ORIGIN, &unit_ball(), &cfg, HistogramSpec::default()).unwrap();
    for big_r in [1.5, 3.0, 10.0] {
        let p = mu.mass_beyond(&Point::ORIGIN, big_r);
        let exact = 2.0 / PI * (1.0 / big_r).asin();
        assert!((p.estimate - exact).abs() <= 3.0 * p.std_error + 2e-3, "R = {big_r}: {p:?} vs {exact}");
    }
}

#[test]
fn empirical_measures_are_normalized_and_outside() {
    let spec = KernelSpec::new(Dim::Two, ScalingProfile::stable(1.5, f64::INFINITY, 2.0).unwrap(), 1.1, 50.0).unwrap();
    let ball = Ball::new(Point([0.1, -0.2, 0.0]), 0.8).unwrap();
    let cfg = SimConfig::default().with_paths(3000).with_seed(22);
    let mu = estimate_exit_measure(&spec, &Point([0.3, 0.0, 0.0]), &ball, &cfg, HistogramSpec::default()).unwrap();
    assert!((mu.total_mass() - 1.0).abs() < 1e-12);
    assert!(mu.positions.iter().all(|p| !ball.contains(p)));
    assert_eq!(mu.proportion(|p| ball.contains(p)).successes, 0);
    let few = SimConfig::default().with_paths(999);
    assert!(estimate_exit_measure(&spec, &Point::ORIGIN, &ball, &few, HistogramSpec::default()).is_err());
}

#[test]
fn payoff_integration_is_linear() {
    let spec = cauchy();
    let cfg = SimConfig::default().with_paths(5000).with_seed(23);
    let mu = estimate_exit_measure(&spec, &Point::on_axis(0.2), &unit_ball(), &cfg, HistogramSpec::default()).unwrap();
    let f = Payoff::indicator(right_of(2.0));
    let g = Payoff::RadialStep {
        center: Point::ORIGIN,
        edges: vec![1.0, 1.5, 4.0],
        values: vec![0.3, 1.0],
    };
    let (a, b) = (0.7, -2.5);
    let combo = Payoff::Combination {
        terms: vec![(a, f.clone()), (b, g.clone())],
    };
    let lhs = mu.integrate(&combo).value;
    let rhs = a * mu.integrate(&f).value + b * mu.integrate(&g).value;
    assert!((lhs - rhs).abs() < 1e-12);
    let one = mu.integrate(&Payoff::Constant { value: 1.0 });
    assert!((one.value - 1.0).abs() < 1e-12);
}

#[test]
fn mean_value_property() {
    let spec = cauchy();
    let f = Payoff::indicator(right_of(1.0));
    let x = Point::on_axis(0.2);
    let cfg = SimConfig::default().with_paths(20_000).with_seed(24);
    let direct = harmonic_eval(&spec, &f, &unit_ball(), &x, &cfg).unwrap();
    let inner = Ball::new(Point::ORIGIN, 0.5).unwrap();
    let mu_v = estimate_exit_measure(&spec, &x, &inner, &cfg.with_seed(25), HistogramSpec::default()).unwrap();
    let vals: Vec<f64> = mu_v
        .positions
        .iter()
        .map(|y| if y.norm() < 1.0 { h_right(y.0[0]) } else { f.eval(y) })
        .collect();
    let resampled = exitlab_core::stats::MeanEstimate::from_values(&vals);
    let se = (direct.std_error.powi(2) + resampled.std_error.powi(2)).sqrt();
    assert!((direct.value - resampled.mean).abs() <= 3.0 * se + 2e-3, "{direct:?} {resampled:?}");
}

#[test]
fn composition_within_allowance() {
    let spec = cauchy();
    let inner = Ball::new(Point::ORIGIN, 0.5).unwrap();
    let cfg = SimConfig::default().with_paths(20_000).with_seed(26);
    let rep = check_composition(&spec, &inner, &unit_ball(), &Point::ORIGIN, &cfg).unwrap();
    assert!(rep.ks_pass && rep.tv_pass, "{rep:?}");
    let outside = check_composition(&spec, &inner, &unit_ball(), &Point::on_axis(0.7), &cfg).unwrap();
    assert!(outside.first_stage_trivial && outside.ks_pass);
}

#[test]
fn tail_mass_decreases_with_outer_radius() {
    let spec = cauchy();
    let cfg = SimConfig::default().with_paths(5000).with_seed(27);
    let near = tail_mass(&spec, &Point::ORIGIN, &Point::ORIGIN, 0.25, 0.5, &cfg).unwrap();
    let far = tail_mass(&spec, &Point::ORIGIN, &Point::ORIGIN, 0.25, 1.0, &cfg).unwrap();
    assert!(far.successes <= near.successes);
    assert!((near.estimate - 2.0 / PI * 0.5f64.asin()).abs() < 3.0 * near.std_error + 2e-3);
}

#[test]
fn j0_is_the_complement_of_the_tail_mass() {
    let spec = cauchy();
    let cfg = SimConfig::default().with_paths(4000).with_seed(28);
    let rep = check_j0(&spec, &Point::ORIGIN, 1.0, 0.5, None, &cfg).unwrap();
    let ConditionDetails::Hitting { estimate, tail_mass, .. } = rep.details else {
        panic!("wrong details")
    };
    assert_eq!(estimate + tail_mass, 1.0);
    // same run as the tail-mass estimator when both use one stream family
    let ball = Ball::new(Point::ORIGIN, 0.5).unwrap();
    let (pos, _) = exit_positions(&spec, &Point::ORIGIN, &ball, &cfg, &cfg.stream().child("J0"), 4000).unwrap();
    let beyond = pos.iter().filter(|p| p.norm() >= 1.0).count() as f64 / pos.len() as f64;
    assert_eq!(1.0 - beyond, estimate);
    assert!(check_j0(&spec, &Point::ORIGIN, 1.0, 1.5, None, &cfg).is_err());
}

#[test]
fn boundary_supported_exits_make_j0_one_and_j2_zero() {
    let spec = cauchy();
    let cfg = SimConfig::default()
        .with_paths(2000)
        .with_seed(29)
        .with_exit_rule(ExitRule::ProjectToBoundary);
    let j0 = check_j0(&spec, &Point::ORIGIN, 1.0, 0.5, None, &cfg).unwrap();
    assert_eq!(j0.estimate, 1.0);
    let j2 = check_j2(&spec, &Point::ORIGIN, 1.0, 0.5, 3, None, &cfg).unwrap();
    let ConditionDetails::Overshoot { levels, fitted_c0, fitted_a0, .. } = &j2.details else {
        panic!("wrong details")
    };
    assert!(levels.iter().all(|l| l.m_n == 0.0));
    assert_eq!((*fitted_c0, *fitted_a0), (1.0, 0.0));
    assert!(j2.verdict);
}

#[test]
fn j1_is_invariant_under_complements() {
    let spec = cauchy();
    let cfg = SimConfig::default().with_paths(2000).with_seed(30);
    let alpha = 0.25;
    let fam = SetFamily::adversarial(&spec, 1.0, alpha, 4, 3, 100, 5).unwrap();
    assert_eq!(fam.members.len(), 92 + 1 + 100);
    let grid = default_grid(&spec, &Point::ORIGIN, 1.0, alpha * alpha).unwrap();
    let a = check_j1(&spec, &Point::ORIGIN, 1.0, alpha, &fam, &grid, None, &cfg).unwrap();
    let b = check_j1(&spec, &Point::ORIGIN, 1.0, alpha, &fam.complemented(), &grid, None, &cfg).unwrap();
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.ci, b.ci);
    // A = U_r alone reproduces the hitting probability at the worst grid point
    let full = SetFamily {
        members: vec![fam.full_mask()],
        ..fam.clone()
    };
    let only = check_j1(&spec, &Point::ORIGIN, 1.0, alpha, &full, &grid[..1], None, &cfg).unwrap();
    let ball = Ball::new(Point::ORIGIN, spec.profile.intrinsic_radius(1.0, alpha).unwrap()).unwrap();
    let (pos, _) = exit_positions(&spec, &Point::ORIGIN, &ball, &cfg, &cfg.stream().child("J1"), 2000).unwrap();
    let hit = pos.iter().filter(|p| p.norm() < 1.0).count() as f64 / pos.len() as f64;
    assert_eq!(only.estimate, hit);
    let empty = SetFamily {
        members: vec![],
        ..fam
    };
    assert!(check_j1(&spec, &Point::ORIGIN, 1.0, alpha, &empty, &grid, None, &cfg).is_err());
}

#[test]
fn harnack_ratio_properties() {
    let spec = cauchy();
    let cfg = SimConfig::default().with_paths(4000).with_seed(31);
    let grid = default_grid(&spec, &Point::ORIGIN, 1.0, 0.5).unwrap();
    let f = Payoff::indicator(right_of(1.0));
    let fam = vec![
        ("one".to_string(), Payoff::Constant { value: 1.0 }),
        ("f".to_string(), f.clone()),
        ("2f".to_string(), f.scaled(2.0)),
    ];
    let rep = check_hi(&spec, &Point::ORIGIN, 1.0, 0.5, &fam, &grid, None, &cfg).unwrap();
    assert!(rep.estimate >= 1.0);
    let ConditionDetails::Harnack { per_payoff, .. } = &rep.details else {
        panic!("wrong details")
    };
    assert_eq!(per_payoff[0].k, 1.0);
    assert!((per_payoff[1].k - per_payoff[2].k).abs() < 1e-12);
    let signed = vec![("neg".to_string(), Payoff::Constant { value: -1.0 })];
    assert!(check_hi(&spec, &Point::ORIGIN, 1.0, 0.5, &signed, &grid, None, &cfg).is_err());
}

#[test]
fn overshoot_masses_decay() {
    let spec = cauchy();
    let cfg = SimConfig::default().with_paths(10_000).with_seed(32);
    let rep = check_j2(&spec, &Point::ORIGIN, 1.0, 0.25, 3, None, &cfg).unwrap();
    let ConditionDetails::Overshoot { levels, monotone_within_3sigma, .. } = &rep.details else {
        panic!("wrong details")
    };
    assert!(*monotone_within_3sigma);
    assert!(levels[0].m_n > levels[2].m_n);
    assert!(rep.verdict && rep.estimate < 1.0);
}

#[test]
fn harnack_constants_feed_the_dichotomy_and_overshoot_checks() {
    let spec = cauchy();
    let cfg = SimConfig::default().with_paths(4000).with_seed(33);
    let x0 = Point::ORIGIN;
    let alpha = 0.5;
    let hi_grid = default_grid(&spec, &x0, 1.0, alpha).unwrap();
    let payoffs = default_payoff_family(&x0, 1.0).unwrap();
    let hi = check_hi(&spec, &x0, 1.0, alpha, &payoffs, &hi_grid, None, &cfg).unwrap();
    let j0 = check_j0(&spec, &x0, 1.0, alpha, None, &cfg).unwrap();
    let (j1c, j2c) = derive_j_from_hi(hi.ci.1, j0.ci.0, alpha).unwrap();
    let fam = SetFamily::adversarial(&spec, 1.0, j1c.alpha, 4, 3, 100, 6).unwrap();
    let grid = default_grid(&spec, &x0, 1.0, j1c.alpha * j1c.alpha).unwrap();
    let j1 = check_j1(&spec, &x0, 1.0, j1c.alpha, &fam, &grid, Some(j1c.delta0), &cfg).unwrap();
    assert!(j1.verdict, "{j1:?}");
    let j2 = check_j2(&spec, &x0, 1.0, j2c.alpha0, 3, Some((j2c.c0, j2c.a0)), &cfg).unwrap();
    assert!(j2.verdict, "{j2:?}");
}

use exitlab_core::geometry::*;
use exitlab_core::kernel::KernelSpec;
use exitlab_core::pipeline::{ConstantLedger, LedgerInputs};
use exitlab_core::scaling::ScalingProfile;
use exitlab_core::simulate::*;

fn cauchy() -> KernelSpec {
    KernelSpec::new(Dim::One, ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap(), 1.1, 5.0).unwrap()
}

fn unit() -> Ball {
    Ball::new(Point::ORIGIN, 1.0).unwrap()
}

fn shell(lo: f64, hi: f64) -> AnnularSector {
    AnnularSector::new(Point::ORIGIN, lo, hi, DirectionCap::positive()).unwrap()
}

#[test]
fn dynkin_psi_composite_within_noise() {
    let cfg = SimConfig::default().with_paths(10_000).with_seed(101);
    let f = TestFunction::PsiComposite { center: Point::ORIGIN, radius: 1.0 };
    let r = check_dynkin(&cauchy(), &f, &unit(), &Point::ORIGIN, 0.1, &cfg).unwrap();
    assert!(r.within_3sigma, "{r:?}");
    assert_eq!(r.censored, 0);
    assert!(r.lhs.mean > 0.0);
}

#[test]
fn levy_system_within_noise_and_additive() {
    let cfg = SimConfig::default().with_paths(10_000).with_seed(102);
    let k = cauchy();
    let a = check_levy_system(&k, &unit(), &shell(2.0, 3.0), &Point::ORIGIN, 0.2, &cfg).unwrap();
    assert!(a.within_3sigma, "{a:?}");
    let b = check_levy_system(&k, &unit(), &shell(3.0, 5.0), &Point::ORIGIN, 0.2, &cfg).unwrap();
    let ab = check_levy_system(&k, &unit(), &shell(2.0, 5.0), &Point::ORIGIN, 0.2, &cfg).unwrap();
    for side in [|r: &ResidualReport| r.lhs, |r: &ResidualReport| r.rhs] {
        let (sa, sb, sab) = (side(&a), side(&b), side(&ab));
        let se = (sa.std_error.powi(2) + sb.std_error.powi(2) + sab.std_error.powi(2)).sqrt();
        assert!((sab.mean - sa.mean - sb.mean).abs() <= 3.0 * se, "{sa:?} {sb:?} {sab:?}");
    }
    assert!(ab.within_3sigma);
}

#[test]
fn levy_system_rejects_sets_meeting_the_ball() {
    let cfg = SimConfig::default().with_paths(10);
    assert!(check_levy_system(&cauchy(), &unit(), &shell(0.5, 2.0), &Point::ORIGIN, 0.2, &cfg).is_err());
}

#[test]
fn cutoff_bias_trends_down_with_eps() {
    let k = cauchy();
    let f = TestFunction::PsiComposite { center: Point::ORIGIN, radius: 1.0 };
    let mut dynkin = Vec::new();
    let mut levy = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let cfg = SimConfig::default()
            .with_paths(10_000)
            .with_seed(103)
            .with_cutoff(Cutoff::Relative(eps));
        dynkin.push(check_dynkin(&k, &f, &unit(), &Point::ORIGIN, 0.1, &cfg).unwrap());
        levy.push(check_levy_system(&k, &unit(), &shell(2.0, 3.0), &Point::ORIGIN, 0.2, &cfg).unwrap());
    }
    for w in dynkin.windows(2) {
        assert!(w[1].bias_term.abs() < w[0].bias_term.abs(), "{:?}", dynkin);
    }
    for w in levy.windows(2) {
        assert!(w[1].bias_term.abs() <= w[0].bias_term.abs());
    }
    assert!(dynkin.iter().chain(&levy).all(|r| r.within_3sigma));
}

#[test]
fn exit_time_scales_like_one_over_l() {
    let k = cauchy();
    let ledger = ConstantLedger::derive(LedgerInputs::new(Dim::One, 1.1, 2.0, 1.1, 12.5, 5.0).unwrap()).unwrap();
    let (c1, c3) = (ledger.stage1.big_c1, ledger.stage1.big_c3);
    let cfg = SimConfig::default().with_paths(20_000).with_seed(104);
    let bounds = ExitTimeBounds { c1, c3, slack: 0.0 };
    let full = estimate_exit_time_mean(&k, &Point::ORIGIN, &unit(), &cfg, Some(bounds)).unwrap();
    let half_ball = Ball::new(Point::ORIGIN, 0.5).unwrap();
    let half = estimate_exit_time_mean(&k, &Point::ORIGIN, &half_ball, &cfg, Some(bounds)).unwrap();
    assert_eq!(full.bounds_check, Some(true));
    assert_eq!(half.bounds_check, Some(true));
    // L(1)/L(1/2) = 1/2 for the Cauchy profile
    let ratio = half.estimate.mean / full.estimate.mean;
    assert!(ratio >= 0.5 / (c1 * c3) && ratio <= 0.5 * c1 * c3);
    // self-similarity makes the ratio exactly 1/2 in law
    let se = ratio * (full.estimate.std_error / full.estimate.mean + half.estimate.std_error / half.estimate.mean);
    assert!((ratio - 0.5).abs() < 3.0 * se, "{ratio} ± {se}");
}

#[test]
fn mean_exit_time_is_stable_under_eps_refinement() {
    let k = cauchy();
    let coarse = SimConfig::default().with_paths(20_000).with_seed(105);
    let fine = coarse.with_cutoff(Cutoff::Relative(1e-5)).with_seed(106);
    let a = estimate_exit_time_mean(&k, &Point::ORIGIN, &unit(), &coarse, None).unwrap();
    let b = estimate_exit_time_mean(&k, &Point::ORIGIN, &unit(), &fine, None).unwrap();
    let se = (a.estimate.std_error.powi(2) + b.estimate.std_error.powi(2)).sqrt();
    assert!((a.estimate.mean - b.estimate.mean).abs() < 3.0 * se, "{a:?} {b:?}");
}

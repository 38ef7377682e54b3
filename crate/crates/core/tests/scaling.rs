use exitlab_core::geometry::{AnnulusSpec, Dim, Point};
use exitlab_core::kernel::KernelSpec;
use exitlab_core::scaling::*;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn presets() -> Vec<(&'static str, ScalingProfile)> {
    vec![
        ("stable", ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap()),
        (
            "geometric-like",
            ScalingProfile::regularly_varying(1.0, 1.0, 0.5, 0.25).unwrap(),
        ),
        (
            "log-counterexample",
            ScalingProfile::log_counterexample(0.5, 0.25).unwrap(),
        ),
    ]
}

#[test]
fn stable_closed_forms_on_fifty_radii() {
    for alpha in [0.5, 1.0, 1.5] {
        let p = ScalingProfile::stable(alpha, f64::INFINITY, 2.0).unwrap();
        for r in log_grid(1e-6, 1.9, 50) {
            let l = r.powf(-alpha) / alpha;
            assert!(rel(p.big_l(r).unwrap(), l) <= 1e-10);
            assert!(rel(p.big_l_by_quadrature(r).unwrap(), l) <= 1e-10, "α={alpha} r={r}");
            let lt = r.powf(-alpha) / (2.0 - alpha);
            assert!(rel(p.l_tilde(r).unwrap(), lt) <= 1e-10, "α={alpha} r={r}");
        }
    }
}

#[test]
fn invert_examples() {
    let p = ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap();
    assert!(rel(p.invert_big_l(2.0).unwrap(), 0.5) < 1e-12);
    let p = ScalingProfile::stable(0.5, f64::INFINITY, 2.0).unwrap();
    assert!(rel(p.invert_big_l(4.0).unwrap(), 0.25) < 1e-12);
    let p = ScalingProfile::log_counterexample(0.5, 0.25).unwrap();
    let t = p.big_l(0.01).unwrap();
    assert!(rel(p.invert_big_l(t).unwrap(), 0.01) < 1e-9);
}

#[test]
fn annulus_identity_all_presets() {
    for (name, p) in presets() {
        for d in [Dim::One, Dim::Two] {
            let spec = KernelSpec::new(d, p.clone(), 1.1, 1e6).unwrap();
            for (r, s) in [(1e-4, 1e-3), (1e-3, 0.2), (0.05, 0.24)] {
                let ann = AnnulusSpec::new(Point::ORIGIN, r, s).unwrap();
                let m = spec.annulus_mu_mass(&ann).unwrap();
                assert!(rel(m.direct, m.closed_form) <= 1e-8, "{name} {d:?} ({r},{s}): {m:?}");
            }
        }
    }
}

#[test]
fn counterexample_ratio_grows() {
    let p = ScalingProfile::log_counterexample(0.5, 0.25).unwrap();
    let ratios: Vec<f64> = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|&r| p.l_tilde(r).unwrap() / p.big_l(r).unwrap())
        .collect();
    assert!(ratios[0] < ratios[1] && ratios[1] < ratios[2], "{ratios:?}");
    assert!(ratios[2] > 5.0);
    for c2 in [1.5, 3.0, 5.0] {
        let w = LConditionWitness::new(10.0, c2, 100.0, 5.0, LConditionWitness::default_grid(&p, 50));
        let w = check_l_conditions(&p, Dim::One, w);
        assert_eq!(w.verdict_l2, Some(false), "c2 = {c2}");
    }
}

#[test]
fn stable_preset_passes_l_conditions() {
    let p = ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap();
    let grid = LConditionWitness::default_grid(&p, 50);
    let w = check_l_conditions(&p, Dim::One, LConditionWitness::new(2.0, 1.1, 12.5, 5.0, grid.clone()));
    assert!(w.all_pass(), "{w:?}");
    let worst = worst_doubling_ratio(&p, &grid).unwrap();
    assert!(worst <= doubling_constant(2.0, 12.5));
}

#[test]
fn lower_scaling_gives_second_moment_bound() {
    let cases = [
        ScalingProfile::stable(0.5, f64::INFINITY, 2.0).unwrap(),
        ScalingProfile::stable(1.5, 4.0, 2.0).unwrap(),
    ];
    for p in cases {
        let c = derive_c2_from_l2(p.c_l.unwrap(), p.gamma.unwrap(), p.r, p.r0).unwrap();
        for r in log_grid(1e-6, p.r, 50) {
            let lhs = p.second_moment_integral(r).unwrap();
            assert!(lhs <= c * r * r * p.big_l(r).unwrap() * (1.0 + 1e-12));
        }
    }
}

proptest! {
    #[test]
    fn big_l_strictly_decreasing(lr in -12.0f64..-1.6, gap in 0.01f64..2.0, which in 0usize..3) {
        let (_, p) = presets().swap_remove(which);
        let r = lr.exp();
        let s = (lr + gap).exp().min(0.49);
        prop_assume!(s > r);
        prop_assert!(p.big_l(r).unwrap() > p.big_l(s).unwrap());
    }

    #[test]
    fn invert_round_trip(lr in -14.0f64..-1.0, which in 0usize..3) {
        let (_, p) = presets().swap_remove(which);
        let r = lr.exp().min(0.45);
        let back = p.invert_big_l(p.big_l(r).unwrap()).unwrap();
        prop_assert!(rel(back, r) <= 1e-9, "r = {}, back = {}", r, back);
    }

    #[test]
    fn intrinsic_radius_shrinks(lr in -6.0f64..0.5, s in 0.01f64..1.0) {
        let p = ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap();
        let r = lr.exp().min(1.9);
        let inner = p.intrinsic_radius(r, s).unwrap();
        prop_assert!(inner <= r);
        prop_assert!(rel(p.big_l(inner).unwrap(), p.big_l(r).unwrap() / s) < 1e-9);
    }
}

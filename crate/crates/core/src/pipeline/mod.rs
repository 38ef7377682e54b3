//! The deterministic constant chain
//!
//! ```text
//! (d, c0, c1, c2, c3, K0) → (C1, C2, C3, C4) → (α, δ0, α0, a0, C0)
//!                          → (δ, a, b, α_final, β, C)
//! ```
//!
//! and the Hölder/oscillation checks that consume it.

pub mod holder;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::Dim;

/// Structural constants of the kernel and scaling function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerInputs {
    pub d: Dim,
    pub kappa_d: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
}

impl LedgerInputs {
    pub fn new(d: Dim, c0: f64, c1: f64, c2: f64, c3: f64, k0: f64) -> Result<Self> {
        for (name, v) in [("c0", c0), ("c1", c1), ("c2", c2), ("c3", c3), ("K0", k0)] {
            if !(v > 1.0) || !v.is_finite() {
                return domain(format!("{name} must lie in (1, ∞), got {v}"));
            }
        }
        Ok(Self {
            d,
            kappa_d: d.kappa(),
            c0,
            c1,
            c2,
            c3,
            k0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1 {
    #[serde(rename = "C1")]
    pub big_c1: f64,
    #[serde(rename = "C2")]
    pub big_c2: f64,
    #[serde(rename = "C3")]
    pub big_c3: f64,
    #[serde(rename = "C4")]
    pub big_c4: f64,
}

/// `C4 = 1 + c1 + c3`, `C1 = 2^d κ_d^{-1} c0 c1²`, `C2 = κ_d c0 C4² + c3`,
/// `C3 = 10 κ_d c0 (1 + c2) + c3`.
pub fn derive_stage1(inputs: &LedgerInputs) -> Stage1 {
    let LedgerInputs {
        d,
        kappa_d,
        c0,
        c1,
        c2,
        c3,
        ..
    } = *inputs;
    let big_c4 = 1.0 + c1 + c3;
    let big_c1 = 2f64.powi(d.get() as i32) / kappa_d * c0 * c1 * c1;
    let big_c2 = kappa_d * c0 * big_c4 * big_c4 + c3;
    let big_c3 = 10.0 * kappa_d * c0 * (1.0 + c2) + c3;
    Stage1 {
        big_c1,
        big_c2,
        big_c3,
        big_c4,
    }
}

/// Constants of the two exit-measure conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2 {
    /// Scale factor in the set-dichotomy condition.
    pub alpha_j1: f64,
    pub delta0: f64,
    /// Scale factor and decay rate in the overshoot condition.
    pub alpha0_j2: f64,
    pub a0_j2: f64,
    #[serde(rename = "C0_j2")]
    pub c0_j2: f64,
}

/// `α = a0 = 1/C4`, `δ0 = 1/(3 C1 C3 C4)`, `C0 = C1 C2`.
pub fn derive_stage2(s: &Stage1) -> Stage2 {
    let alpha = 1.0 / s.big_c4;
    Stage2 {
        alpha_j1: alpha,
        delta0: 1.0 / (3.0 * s.big_c1 * s.big_c3 * s.big_c4),
        alpha0_j2: alpha,
        a0_j2: alpha,
        c0_j2: s.big_c1 * s.big_c2,
    }
}

/// Which constraint fixes the supremum of admissible `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BindingConstraint {
    /// `b³(1 - 3δ) ≤ 1 - 2δ`
    Cubic,
    /// `a b⁴ < (1 - a b) δ`
    Quartic,
    /// `b < √(3/2)`
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BChoice {
    pub delta: f64,
    pub a: f64,
    pub b_star: f64,
    pub b: f64,
    pub binding: BindingConstraint,
}

impl BChoice {
    pub fn cubic_holds(&self) -> bool {
        self.b.powi(3) * (1.0 - 3.0 * self.delta) <= 1.0 - 2.0 * self.delta
    }

    pub fn quartic_holds(&self) -> bool {
        self.a * self.b.powi(4) < (1.0 - self.a * self.b) * self.delta
    }

    pub fn in_range(&self) -> bool {
        self.b > 1.0 && self.b < 1.5f64.sqrt()
    }
}

/// `δ = δ0/6`, `a = δ/2`, and `b = 1 + 0.999 (b* - 1)` where `b*` is the
/// supremum of `b > 1` satisfying both constraints and `b < √(3/2)`.
pub fn select_b(delta0: f64) -> Result<BChoice> {
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return domain(format!("δ0 must lie in (0, 1), got {delta0}"));
    }
    let delta = delta0 / 6.0;
    let a = delta / 2.0;
    let cubic = ((1.0 - 2.0 * delta) / (1.0 - 3.0 * delta)).cbrt();
    // g(b) = a b⁴ + a δ b - δ is increasing, g(1) = δ(δ - 1)/2 < 0
    let g = |b: f64| a * b.powi(4) + a * delta * b - delta;
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let quartic = lo;
    let sqrt = 1.5f64.sqrt();
    let (b_star, binding) = if cubic <= quartic && cubic <= sqrt {
        (cubic, BindingConstraint::Cubic)
    } else if quartic <= sqrt {
        (quartic, BindingConstraint::Quartic)
    } else {
        (sqrt, BindingConstraint::Sqrt)
    };
    let choice = BChoice {
        delta,
        a,
        b_star,
        b: 1.0 + 0.999 * (b_star - 1.0),
        binding,
    };
    debug_assert!(choice.cubic_holds() && choice.quartic_holds() && choice.in_range());
    if !(choice.cubic_holds() && choice.quartic_holds() && choice.in_range()) {
        return Err(crate::error::LabError::Numerical(format!(
            "selected b = {} violates its constraints",
            choice.b
        )));
    }
    Ok(choice)
}

/// Smallest `k ≥ 1` with `a0^k < target_a / C0`, and `α0^k`.
pub fn strengthen_j2(alpha0: f64, a0: f64, c0: f64, target_a: f64) -> Result<(f64, u32)> {
    for (name, v) in [("α0", alpha0), ("a0", a0), ("target a", target_a)] {
        if !(v > 0.0 && v < 1.0) {
            return domain(format!("{name} must lie in (0, 1), got {v}"));
        }
    }
    if !(c0 >= 1.0) {
        return domain(format!("C0 must be at least 1, got {c0}"));
    }
    let goal = target_a / c0;
    let mut k: u32 = 1;
    while a0.powi(k as i32) >= goal {
        k += 1;
        if k > 100_000 {
            return domain("no admissible power found below 10^5");
        }
    }
    Ok((alpha0.powi(k as i32), k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage3 {
    pub delta: f64,
    pub a: f64,
    pub b_star: f64,
    pub b: f64,
    pub binding: BindingConstraint,
    pub k_strengthen: u32,
    pub alpha_strengthened: f64,
    pub alpha_final: f64,
    pub beta: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
}

/// From `(α1, δ0)` and `(α0, a0, C0)` to the Hölder exponent
/// `β = ln b / ln(1/α_final)` and `C = 3 α_final^{-β}`.
pub fn run_holder_pipeline(alpha1: f64, delta0: f64, alpha0: f64, a0: f64, c0: f64) -> Result<Stage3> {
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return domain(format!("α must lie in (0, 1), got {alpha1}"));
    }
    let bc = select_b(delta0)?;
    let (alpha_strengthened, k) = strengthen_j2(alpha0, a0, c0, bc.a)?;
    let alpha_final = alpha1.min(alpha_strengthened);
    stage3_from(bc, k, alpha_strengthened, alpha_final)
}

fn stage3_from(bc: BChoice, k: u32, alpha_strengthened: f64, alpha_final: f64) -> Result<Stage3> {
    let beta = bc.b.ln() / (1.0 / alpha_final).ln();
    if !(beta > 0.0 && beta < 1.0) {
        return domain(format!("β = {beta} outside (0, 1)"));
    }
    Ok(Stage3 {
        delta: bc.delta,
        a: bc.a,
        b_star: bc.b_star,
        b: bc.b,
        binding: bc.binding,
        k_strengthen: k,
        alpha_strengthened,
        alpha_final,
        beta,
        big_c: 3.0 * alpha_final.powf(-beta),
    })
}

impl Stage3 {
    /// Same `b`, smaller `α_final`; still a valid exponent since the
    /// conditions hold for every smaller scale factor.
    pub fn with_smaller_alpha(&self, alpha: f64) -> Result<Stage3> {
        if !(alpha > 0.0 && alpha <= self.alpha_final) {
            return domain(format!("α = {alpha} is not below α_final = {}", self.alpha_final));
        }
        stage3_from(
            BChoice {
                delta: self.delta,
                a: self.a,
                b_star: self.b_star,
                b: self.b,
                binding: self.binding,
            },
            self.k_strengthen,
            self.alpha_strengthened,
            alpha,
        )
    }
}

/// The whole chain with every intermediate value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub inputs: LedgerInputs,
    pub stage1: Stage1,
    pub stage2: Stage2,
    pub stage3: Stage3,
}

impl ConstantLedger {
    pub fn derive(inputs: LedgerInputs) -> Result<Self> {
        let stage1 = derive_stage1(&inputs);
        let stage2 = derive_stage2(&stage1);
        let stage3 = run_holder_pipeline(
            stage2.alpha_j1,
            stage2.delta0,
            stage2.alpha0_j2,
            stage2.a0_j2,
            stage2.c0_j2,
        )?;
        Ok(Self {
            inputs,
            stage1,
            stage2,
            stage3,
        })
    }

    /// `(name, value)` rows in derivation order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let i = &self.inputs;
        let s1 = &self.stage1;
        let s2 = &self.stage2;
        let s3 = &self.stage3;
        vec![
            ("d", i.d.get() as f64),
            ("kappa_d", i.kappa_d),
            ("c0", i.c0),
            ("c1", i.c1),
            ("c2", i.c2),
            ("c3", i.c3),
            ("K0", i.k0),
            ("C1", s1.big_c1),
            ("C2", s1.big_c2),
            ("C3", s1.big_c3),
            ("C4", s1.big_c4),
            ("alpha_j1", s2.alpha_j1),
            ("delta0", s2.delta0),
            ("alpha0_j2", s2.alpha0_j2),
            ("a0_j2", s2.a0_j2),
            ("C0_j2", s2.c0_j2),
            ("delta", s3.delta),
            ("a", s3.a),
            ("b_star", s3.b_star),
            ("b", s3.b),
            ("k_strengthen", s3.k_strengthen as f64),
            ("alpha_strengthened", s3.alpha_strengthened),
            ("alpha_final", s3.alpha_final),
            ("beta", s3.beta),
            ("C", s3.big_c),
        ]
    }

    pub fn table(&self) -> String {
        self.rows()
            .iter()
            .map(|(k, v)| format!("{k:<20} {v:.12e}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> LedgerInputs {
        LedgerInputs::new(Dim::One, 1.1, 1.1, 1.1, 1.1, 5.0).unwrap()
    }

    #[test]
    fn stage1_examples() {
        let s = derive_stage1(&inputs());
        assert!((s.big_c1 - 1.331).abs() < 1e-12);
        assert!((s.big_c4 - 3.2).abs() < 1e-12);
        assert!((s.big_c3 - 47.3).abs() < 1e-12);
        assert!((s.big_c2 - 23.628).abs() < 1e-12);
        let s = derive_stage1(&LedgerInputs::new(Dim::One, 1.1, 2.0, 1.1, 2.0, 5.0).unwrap());
        assert_eq!(s.big_c4, 5.0);
    }

    #[test]
    fn stage2_examples() {
        let s2 = derive_stage2(&derive_stage1(&inputs()));
        assert!((s2.delta0 - 1.0 / (3.0 * 1.331 * 47.3 * 3.2)).abs() < 1e-15);
        assert!((s2.delta0 - 1.655e-3).abs() < 1e-6);
        assert!((s2.c0_j2 - 31.448868).abs() < 1e-6);
        let s2 = derive_stage2(&Stage1 {
            big_c1: 1.0,
            big_c2: 1.0,
            big_c3: 1.0,
            big_c4: 4.0,
        });
        assert_eq!(s2.alpha_j1, 0.25);
    }

    #[test]
    fn select_b_follows_the_rule() {
        let bc = select_b(0.6).unwrap();
        assert!((bc.delta - 0.1).abs() < 1e-16);
        assert!((bc.a - 0.05).abs() < 1e-17);
        // the cubic bound (0.8/0.7)^{1/3} binds; the quartic root is ≈ 1.1714
        assert!((bc.b_star - (0.8f64 / 0.7).cbrt()).abs() < 1e-15);
        assert_eq!(bc.binding, BindingConstraint::Cubic);
        assert!((bc.b_star - 1.045516).abs() < 1e-6);
        assert!((bc.b - 1.045470).abs() < 1e-6);
        assert!(bc.cubic_holds() && bc.quartic_holds() && bc.in_range());
        assert!(bc.a < (1.0 - bc.a) * bc.delta);
        let tiny = select_b(1e-9).unwrap();
        assert!(tiny.b > 1.0 && tiny.b - 1.0 < 1e-9);
        assert!(select_b(1.0).is_err());
    }

    #[test]
    fn strengthen_examples() {
        assert_eq!(strengthen_j2(0.5, 0.5, 4.0, 0.25).unwrap(), (1.0 / 32.0, 5));
        assert_eq!(strengthen_j2(0.3, 0.4, 1.0, 0.5).unwrap(), (0.3, 1));
        let (_, k) = strengthen_j2(0.5, 0.9, 10.0, 0.05).unwrap();
        assert_eq!(k, 51);
        assert!(0.9f64.powi(51) < 0.005 && 0.9f64.powi(50) >= 0.005);
    }

    #[test]
    fn holder_pipeline_example() {
        let s3 = run_holder_pipeline(0.25, 0.6, 0.25, 0.25, 1.0).unwrap();
        assert_eq!(s3.k_strengthen, 3);
        assert_eq!(s3.alpha_final, 1.0 / 64.0);
        assert!((s3.beta - 0.010692).abs() < 1e-6, "{}", s3.beta);
        assert!((s3.big_c - 3.0 * 64f64.powf(s3.beta)).abs() < 1e-12);
        let smaller = s3.with_smaller_alpha(1.0 / 128.0).unwrap();
        assert!(smaller.beta < s3.beta);
    }

    #[test]
    fn inputs_outside_range_rejected() {
        assert!(LedgerInputs::new(Dim::One, 1.0, 1.1, 1.1, 1.1, 5.0).is_err());
        assert!(LedgerInputs::new(Dim::Two, 1.1, 1.1, 0.5, 1.1, 5.0).is_err());
    }
}

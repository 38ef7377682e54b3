//! The jump kernel `K(x, h)`, its isotropic reference `k(u) = u^{-d} l(u)`,
//! radial integral functionals and the jump sampler.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::{AnnulusSpec, Dim, Point};
use crate::quadrature::{integrate, Tolerance};
use crate::scaling::{integrate_span, InverseTable, ScalingProfile};

/// How `K(x, h)` depends on the base point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelMode {
    /// `K(x, h) = k(|h|)`.
    Levy,
    /// `K(x, h) = κ(x) k(|h|)` with `κ(x) = c0^{sin(ω x_1)}`; experimental,
    /// simulated by thinning.
    Perturbed { omega: f64 },
}

/// Jumps of length `≥ R0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TailPolicy {
    /// No jumps of length `≥ R0`.
    Truncate,
    /// Radial density `κ_d l(R0)/R0 · e^{-λ(u - R0)}` on `u ≥ R0`, which
    /// continues the radial density `κ_d u^{-1} l(u)` at `R0`.
    ExponentialTail { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dim: Dim,
    pub profile: ScalingProfile,
    pub c0: f64,
    pub k0: f64,
    pub mode: KernelMode,
    pub tail: TailPolicy,
}

/// Result of the `(K)` integrability check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K0Check {
    pub value: f64,
    pub verdict: bool,
    pub diagnostics: Option<String>,
}

/// `κ_d ln(L(r)/L(s))` next to the direct quadrature of
/// `κ_d ∫_r^s l(u)/(u L(u)) du`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusMass {
    pub closed_form: f64,
    pub direct: f64,
}

impl KernelSpec {
    pub fn new(dim: Dim, profile: ScalingProfile, c0: f64, k0: f64) -> Result<Self> {
        if !(c0 > 1.0) || !(k0 > 1.0) {
            return domain(format!("c0 and K0 must exceed 1, got c0 = {c0}, K0 = {k0}"));
        }
        Ok(Self {
            dim,
            profile,
            c0,
            k0,
            mode: KernelMode::Levy,
            tail: TailPolicy::Truncate,
        })
    }

    pub fn with_tail(mut self, tail: TailPolicy) -> Result<Self> {
        if let TailPolicy::ExponentialTail { lambda } = tail {
            if !(lambda > 0.0) {
                return domain(format!("tail rate must be positive, got {lambda}"));
            }
        }
        self.tail = tail;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: KernelMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn kappa_d(&self) -> f64 {
        self.dim.kappa()
    }

    fn r0(&self) -> f64 {
        self.profile.r0
    }

    /// `k(u) = u^{-d} l(u)`.
    pub fn eval_k(&self, u: f64) -> Result<f64> {
        Ok(u.powi(-(self.dim.get() as i32)) * self.profile.l(u)?)
    }

    /// Density of the radial jump measure divided by `κ_d`: `u^{-1} l(u)`
    /// below `R0`, the tail density above it.
    pub fn radial_density(&self, u: f64) -> f64 {
        let r0 = self.r0();
        if u <= 0.0 {
            return 0.0;
        }
        if u < r0 {
            return self.profile.l_raw(u) / u;
        }
        match self.tail {
            TailPolicy::ExponentialTail { lambda } if r0.is_finite() => {
                self.profile.l_raw(r0) / r0 * (-lambda * (u - r0)).exp()
            }
            _ => 0.0,
        }
    }

    /// `k(v)` extended by the tail policy, zero where no jumps occur.
    pub fn kernel_density(&self, v: f64) -> f64 {
        self.radial_density(v) / v.powi(self.dim.get() as i32 - 1)
    }

    /// State factor of the perturbed mode; `1` for Lévy kernels.
    pub fn state_factor(&self, x: &Point) -> f64 {
        match self.mode {
            KernelMode::Levy => 1.0,
            KernelMode::Perturbed { omega } => self.c0.powf((omega * x.0[0]).sin()),
        }
    }

    fn tail_rate(&self) -> f64 {
        match self.tail {
            TailPolicy::ExponentialTail { lambda } if self.r0().is_finite() => {
                self.kappa_d() * self.profile.l_raw(self.r0()) / (self.r0() * lambda)
            }
            _ => 0.0,
        }
    }

    /// Mass of `{h : |h| > u}` under `k(|h|) dh`, tail included.
    pub fn radial_tail_mass(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return domain(format!("radial tail mass needs u > 0, got {u}"));
        }
        let r0 = self.r0();
        if u < r0 {
            return Ok(self.kappa_d() * self.profile.big_l(u)? + self.tail_rate());
        }
        Ok(match self.tail {
            TailPolicy::ExponentialTail { lambda } if r0.is_finite() => {
                self.tail_rate() * (-lambda * (u - r0)).exp()
            }
            _ => 0.0,
        })
    }

    /// Total intensity of jumps longer than `ε`; `κ_d L(ε)` plus the tail.
    /// In perturbed mode this is the dominating rate `c0 κ_d L(ε)` used for
    /// thinning.
    pub fn jump_rate_above(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < self.r0()) {
            return domain(format!("jump rate needs 0 < ε < R0, got {eps}"));
        }
        let base = self.radial_tail_mass(eps)?;
        Ok(match self.mode {
            KernelMode::Levy => base,
            KernelMode::Perturbed { .. } => self.c0 * base,
        })
    }

    /// Mass of large jumps beyond `u`; alias used by generator tables.
    pub fn large_jump_mass(&self, u: f64) -> Result<f64> {
        self.radial_tail_mass(u)
    }

    /// `∫_{|h|<ε} |h|² k(|h|) dh = κ_d ∫_0^ε u l(u) du`.
    pub fn small_jump_variance(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < self.profile.r) {
            return domain(format!("small-jump variance needs 0 < ε < R, got {eps}"));
        }
        Ok(self.kappa_d() * self.profile.second_moment_integral(eps)?)
    }

    /// `sup_x ∫ (1 ∧ |h|²) K(x, h) dh` against `K0`.
    pub fn check_k0(&self) -> K0Check {
        match self.k0_value() {
            Ok(value) => K0Check {
                value,
                verdict: value <= self.k0,
                diagnostics: None,
            },
            Err(e) => K0Check {
                value: f64::INFINITY,
                verdict: false,
                diagnostics: Some(format!("small-jump integral diverges or fails: {e}")),
            },
        }
    }

    fn k0_value(&self) -> Result<f64> {
        let kappa = self.kappa_d();
        let r0 = self.r0();
        let split = r0.min(1.0);
        let mut value = kappa * self.profile.second_moment_integral(split)?;
        if r0 > 1.0 {
            value += kappa * self.profile.big_l(1.0)?;
        }
        if let TailPolicy::ExponentialTail { lambda } = self.tail {
            if r0.is_finite() {
                let dens = kappa * self.profile.l_raw(r0) / r0;
                if r0 >= 1.0 {
                    value += dens / lambda;
                } else {
                    let near = integrate(
                        |u: f64| u * u * (-lambda * (u - r0)).exp(),
                        r0,
                        1.0,
                        &[],
                        Tolerance::relative(1e-12),
                    )?
                    .value;
                    value += dens * (near + (-lambda * (1.0 - r0)).exp() / lambda);
                }
            }
        }
        if let KernelMode::Perturbed { .. } = self.mode {
            value *= self.c0;
        }
        Ok(value)
    }

    /// `μ(S)` for `S = {r ≤ |z - x0| < s}`, both by the closed form and by
    /// direct quadrature.
    pub fn annulus_mu_mass(&self, ann: &AnnulusSpec) -> Result<AnnulusMass> {
        let (r, s) = (ann.r_inner, ann.r_outer);
        if !(r > 0.0 && s > r && s < self.r0()) {
            return domain(format!("annulus needs 0 < r < s < R0, got ({r}, {s})"));
        }
        let kappa = self.kappa_d();
        let closed_form = kappa * (self.profile.big_l(r)? / self.profile.big_l(s)?).ln();
        let p = &self.profile;
        let g = |v: f64| {
            let u = v.exp();
            match p.big_l(u) {
                Ok(l) => p.l_raw(u) / l,
                Err(_) => f64::NAN,
            }
        };
        let direct = kappa * integrate_span(&g, r.ln(), s.ln(), &[], Tolerance::relative(1e-11))?;
        Ok(AnnulusMass { closed_form, direct })
    }

    /// Worst `μ({|h| > 1 ∧ R}) / L(r)` over the grid, against `c3`.
    pub fn check_large_jump_bound(&self, c3: f64, grid: &[f64]) -> Result<(f64, bool)> {
        let lhs = self.radial_tail_mass(self.profile.r.min(1.0))?;
        let mut worst: f64 = 0.0;
        for &r in grid.iter().filter(|r| **r > 0.0 && **r < self.profile.r) {
            worst = worst.max(lhs / self.profile.big_l(r)?);
        }
        Ok((worst, worst <= c3))
    }

    /// Builds a sampler for jumps longer than `ε`.
    pub fn sampler(&self, eps: f64) -> Result<JumpSampler> {
        JumpSampler::new(self.clone(), eps)
    }
}

/// Draws jumps `h` with `|h| > ε` from the normalized kernel. Immutable after
/// construction; randomness comes from the caller.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    spec: KernelSpec,
    eps: f64,
    l_eps: f64,
    body_rate: f64,
    tail_rate: f64,
    table: Option<InverseTable>,
}

impl JumpSampler {
    pub fn new(spec: KernelSpec, eps: f64) -> Result<Self> {
        let r0 = spec.profile.r0;
        if !(eps > 0.0 && eps < r0) {
            return domain(format!("sampler needs 0 < ε < R0, got {eps}"));
        }
        let l_eps = spec.profile.big_l(eps)?;
        let body_rate = spec.kappa_d() * l_eps;
        let tail_rate = spec.tail_rate();
        let table = if spec.profile.closed_form_l().is_some() {
            None
        } else {
            let hi = if r0.is_finite() {
                r0
            } else {
                // far enough that the remaining mass is below 1e-9 of the total
                let mut h = eps * 2.0;
                while spec.profile.big_l(h)? > 1e-9 * l_eps {
                    h *= 4.0;
                }
                h
            };
            Some(InverseTable::build(
                &spec.profile,
                eps,
                hi,
                InverseTable::DEFAULT_KNOTS,
            )?)
        };
        Ok(Self {
            spec,
            eps,
            l_eps,
            body_rate,
            tail_rate,
            table,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Intensity of all jumps the sampler produces.
    pub fn rate(&self) -> f64 {
        self.body_rate + self.tail_rate
    }

    /// Radius with CDF `1 - L(u)/L(ε)` on `(ε, R0)` (plus the tail, if any).
    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = self.rate();
        if self.tail_rate > 0.0 && rng.random::<f64>() * total >= self.body_rate {
            if let TailPolicy::ExponentialTail { lambda } = self.spec.tail {
                let e: f64 = Exp::new(lambda).expect("positive tail rate").sample(rng);
                return self.spec.profile.r0 + e;
            }
        }
        // V in (0, 1]
        let v = 1.0 - rng.random::<f64>();
        self.radius_for_level(self.l_eps * v)
    }

    /// `L^{-1}(t)` for `t ∈ (0, L(ε)]`.
    pub fn radius_for_level(&self, t: f64) -> f64 {
        let p = &self.spec.profile;
        let u = match &self.table {
            None => p.invert_big_l(t).unwrap_or(self.eps),
            Some(tab) => match tab.invert(p, t) {
                Some(u) => u,
                None => p.invert_big_l(t).unwrap_or(p.r0.min(f64::MAX)),
            },
        };
        // rounding may put u a hair below ε
        u.max(self.eps)
    }

    pub fn sample_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        unit_direction(self.spec.dim, rng)
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let u = self.sample_radius(rng);
        self.sample_direction(rng).scale(u)
    }
}

/// Uniform direction on the unit sphere of `R^d`.
pub fn unit_direction<R: Rng + ?Sized>(dim: Dim, rng: &mut R) -> Point {
    match dim {
        Dim::One => {
            if rng.random::<bool>() {
                Point::on_axis(1.0)
            } else {
                Point::on_axis(-1.0)
            }
        }
        Dim::Two => {
            let th = 2.0 * PI * rng.random::<f64>();
            Point([th.cos(), th.sin(), 0.0])
        }
        Dim::Three => {
            let z = 2.0 * rng.random::<f64>() - 1.0;
            let th = 2.0 * PI * rng.random::<f64>();
            let rho = (1.0 - z * z).max(0.0).sqrt();
            Point([rho * th.cos(), rho * th.sin(), z])
        }
    }
}

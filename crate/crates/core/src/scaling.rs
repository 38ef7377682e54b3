//! The radial scaling function `l`, its upper logarithmic integral
//!
//! ```text
//! L(r)  = ∫_r^{R0} u^{-1} l(u) du
//! L̃(r) = r^{-2} ∫_0^r u l(u) du
//! ```
//!
//! and the (L1)–(L3) checks built from them. All quadratures run in the
//! logarithmic variable `u = e^v`, where the integrands of the supported
//! families are smooth and decay exponentially or algebraically at the ends.

use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::geometry::Dim;
use crate::quadrature::{
    integrate, integrate_from_neg_infinity, integrate_to_infinity, tanh_sinh, GaussLegendre,
    Tolerance,
};

/// Relative tolerance requested for `L`.
pub const L_REL_TOL: f64 = 1e-10;
/// Relative tolerance requested for `L̃`.
pub const L_TILDE_REL_TOL: f64 = 1e-8;

/// Piecewise log-linear profile given by knots `(u, l(u))`. Beyond the end
/// knots the first/last log-log slope is extended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLinearTable {
    knots: Vec<(f64, f64)>,
}

impl LogLinearTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return domain("a profile table needs at least two knots");
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return domain(format!(
                    "table knots must be strictly increasing, got {} then {}",
                    w[0].0, w[1].0
                ));
            }
        }
        if knots.iter().any(|(u, l)| !(*u > 0.0) || !(*l > 0.0) || !u.is_finite() || !l.is_finite()) {
            return domain("table knots and values must be finite and positive");
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn eval(&self, u: f64) -> f64 {
        self.log_eval(u.ln()).exp()
    }

    /// `ln l(e^v)`.
    fn log_eval(&self, v: f64) -> f64 {
        let k = &self.knots;
        let u = v.exp();
        let i = match k.iter().position(|(x, _)| *x > u) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => k.len() - 2,
        };
        let (u0, l0) = k[i];
        let (u1, l1) = k[i + 1];
        let slope = (l1.ln() - l0.ln()) / (u1.ln() - u0.ln());
        l0.ln() + slope * (v - u0.ln())
    }

    fn last_slope(&self) -> f64 {
        let n = self.knots.len();
        let (u0, l0) = self.knots[n - 2];
        let (u1, l1) = self.knots[n - 1];
        (l1.ln() - l0.ln()) / (u1.ln() - u0.ln())
    }
}

/// Family of the scaling function `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileFamily {
    /// `l(u) = u^{-α}`, `α ∈ (0, 2)`.
    Stable { alpha: f64 },
    /// `l(u) = u^{-α} (ln 1/u)^p`, regularly varying at zero with a
    /// logarithmic slowly varying factor; requires `R0 ≤ 1`.
    RegularlyVarying { alpha: f64, log_power: f64 },
    /// `l(u) = u^{-2} (ln 1/u)^{-2}`, for which (L2) fails.
    LogCounterexample,
    Table(LogLinearTable),
}

/// Identifier of an analytic formula for `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedFormL {
    /// `(r^{-α} - R0^{-α}) / α`
    StablePower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingProfile {
    pub family: ProfileFamily,
    /// Upper end of the domain of `l`; `f64::INFINITY` for an unbounded one.
    pub r0: f64,
    /// Working scale `R`, `0 < R < R0`.
    pub r: f64,
    /// Lower scaling constant of `l(v)/l(u) ≥ c_L (v/u)^{-γ}`, when declared.
    pub c_l: Option<f64>,
    /// Index bound `γ ∈ (0, 2)` of the same inequality, when declared.
    pub gamma: Option<f64>,
    /// Smallest radius at which `L` is inverted numerically.
    pub r_min: f64,
}

impl ScalingProfile {
    pub fn new(family: ProfileFamily, r0: f64, r: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return domain(format!("R0 must be positive, got {r0}"));
        }
        if !(r > 0.0 && r < r0) {
            return domain(format!("need 0 < R < R0, got R = {r}, R0 = {r0}"));
        }
        match &family {
            ProfileFamily::Stable { alpha } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return domain(format!("stable index must lie in (0, 2), got {alpha}"));
                }
            }
            ProfileFamily::RegularlyVarying { alpha, log_power } => {
                if !(*alpha >= 0.0 && *alpha <= 2.0) || !log_power.is_finite() {
                    return domain(format!(
                        "regularly varying profile needs α ∈ [0, 2], got α = {alpha}, p = {log_power}"
                    ));
                }
                if r0 > 1.0 || (r0 == 1.0 && *log_power < 0.0) {
                    return domain("the (ln 1/u)^p factor requires R0 ≤ 1 (strictly when p < 0)");
                }
            }
            ProfileFamily::LogCounterexample => {
                if r0 >= 1.0 {
                    return domain("log counterexample needs R0 < 1");
                }
            }
            ProfileFamily::Table(t) => {
                let last = t.knots().last().map(|k| k.0).unwrap_or(0.0);
                if last >= r0 {
                    return domain("table knots must lie inside (0, R0)");
                }
                if r0.is_infinite() && t.last_slope() >= 0.0 {
                    return domain("unbounded R0 needs a decreasing tail in the table");
                }
            }
        }
        Ok(Self {
            family,
            r0,
            r,
            c_l: None,
            gamma: None,
            r_min: 1e-100,
        })
    }

    pub fn stable(alpha: f64, r0: f64, r: f64) -> Result<Self> {
        let mut p = Self::new(ProfileFamily::Stable { alpha }, r0, r)?;
        // l(v)/l(u) = (v/u)^{-α} exactly
        p.c_l = Some(1.0);
        p.gamma = Some(alpha);
        Ok(p)
    }

    pub fn regularly_varying(alpha: f64, log_power: f64, r0: f64, r: f64) -> Result<Self> {
        Self::new(ProfileFamily::RegularlyVarying { alpha, log_power }, r0, r)
    }

    pub fn log_counterexample(r0: f64, r: f64) -> Result<Self> {
        Self::new(ProfileFamily::LogCounterexample, r0, r)
    }

    pub fn table(knots: Vec<(f64, f64)>, r0: f64, r: f64) -> Result<Self> {
        Self::new(ProfileFamily::Table(LogLinearTable::new(knots)?), r0, r)
    }

    pub fn with_lower_scaling(mut self, c_l: f64, gamma: f64) -> Self {
        self.c_l = Some(c_l);
        self.gamma = Some(gamma);
        self
    }

    pub fn closed_form_l(&self) -> Option<ClosedFormL> {
        match self.family {
            ProfileFamily::Stable { .. } => Some(ClosedFormL::StablePower),
            _ => None,
        }
    }

    // l without domain checks
    pub(crate) fn l_raw(&self, u: f64) -> f64 {
        match &self.family {
            ProfileFamily::Stable { alpha } => u.powf(-alpha),
            ProfileFamily::RegularlyVarying { alpha, log_power } => {
                u.powf(-alpha) * (-u.ln()).powf(*log_power)
            }
            ProfileFamily::LogCounterexample => {
                let lg = -u.ln();
                1.0 / (u * u * lg * lg)
            }
            ProfileFamily::Table(t) => t.eval(u),
        }
    }

    /// `u^k l(u)` at `u = e^v`, evaluated without forming `u^k` and `l(u)`
    /// separately so that neither underflows nor overflows on its own.
    pub(crate) fn weighted_l(&self, v: f64, k: f64) -> f64 {
        if v == f64::NEG_INFINITY {
            return 0.0;
        }
        match &self.family {
            ProfileFamily::Stable { alpha } => ((k - alpha) * v).exp(),
            ProfileFamily::RegularlyVarying { alpha, log_power } => {
                ((k - alpha) * v + log_power * (-v).ln()).exp()
            }
            ProfileFamily::LogCounterexample => ((k - 2.0) * v - 2.0 * (-v).ln()).exp(),
            ProfileFamily::Table(t) => (k * v + t.log_eval(v)).exp(),
        }
    }

    /// `l(u)` for `0 < u < R0`.
    pub fn l(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < self.r0) {
            return domain(format!("l(u) needs 0 < u < R0 = {}, got {u}", self.r0));
        }
        Ok(self.l_raw(u))
    }

    fn log_breakpoints(&self) -> Vec<f64> {
        match &self.family {
            ProfileFamily::Table(t) => t.knots().iter().map(|(u, _)| u.ln()).collect(),
            _ => Vec::new(),
        }
    }

    /// `L(r)` for `0 < r ≤ R0`.
    pub fn big_l(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r <= self.r0) {
            return domain(format!("L(r) needs 0 < r <= R0 = {}, got {r}", self.r0));
        }
        if r == self.r0 {
            return Ok(0.0);
        }
        match self.family {
            ProfileFamily::Stable { alpha } => {
                let top = if self.r0.is_infinite() { 0.0 } else { self.r0.powf(-alpha) };
                Ok((r.powf(-alpha) - top) / alpha)
            }
            _ => self.big_l_by_quadrature(r),
        }
    }

    /// `L(r)` by adaptive Gauss–Kronrod, ignoring any closed form.
    pub fn big_l_by_quadrature(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r < self.r0) {
            return domain(format!("L(r) needs 0 < r < R0 = {}, got {r}", self.r0));
        }
        let g = |v: f64| self.weighted_l(v, 0.0);
        integrate_span(
            &g,
            r.ln(),
            self.r0.ln(),
            &self.log_breakpoints(),
            Tolerance::relative(L_REL_TOL),
        )
    }

    /// `L(r)` by tanh–sinh; an independent rule for cross-checks. Requires a
    /// finite `R0`.
    pub fn big_l_by_tanh_sinh(&self, r: f64) -> Result<f64> {
        if self.r0.is_infinite() {
            return domain("tanh-sinh cross-check needs a finite R0");
        }
        let g = |v: f64| self.weighted_l(v, 0.0);
        let mut edges = vec![r.ln()];
        edges.extend(self.log_breakpoints().into_iter().filter(|b| *b > r.ln() && *b < self.r0.ln()));
        edges.push(self.r0.ln());
        edges
            .windows(2)
            .map(|w| tanh_sinh(g, w[0], w[1], 1e-13).map(|q| q.value))
            .sum()
    }

    /// `∫_0^r u l(u) du`; errors when the integral diverges.
    pub fn second_moment_integral(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r <= self.r0) || r.is_infinite() {
            return domain(format!("∫_0^r u l(u) du needs 0 < r <= R0, got {r}"));
        }
        match self.family {
            ProfileFamily::Stable { alpha } => Ok(r.powf(2.0 - alpha) / (2.0 - alpha)),
            ProfileFamily::LogCounterexample => Ok(1.0 / (-r.ln())),
            _ => self.second_moment_by_quadrature(r),
        }
    }

    pub fn second_moment_by_quadrature(&self, r: f64) -> Result<f64> {
        let g = |v: f64| self.weighted_l(v, 2.0);
        let breaks = self.log_breakpoints();
        integrate_span(&g, f64::NEG_INFINITY, r.ln(), &breaks, Tolerance::relative(L_TILDE_REL_TOL * 1e-2))
    }

    /// `L̃(r) = r^{-2} ∫_0^r u l(u) du` for `0 < r < R`.
    pub fn l_tilde(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r < self.r) {
            return domain(format!("L̃(r) needs 0 < r < R = {}, got {r}", self.r));
        }
        Ok(self.second_moment_integral(r)? / (r * r))
    }

    /// Radius `r` with `L(r) = t`, for `t ∈ (L(R0), L(r_min))`.
    pub fn invert_big_l(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return domain(format!("L^{{-1}}(t) needs a finite t > L(R0) = 0, got {t}"));
        }
        if let ProfileFamily::Stable { alpha } = self.family {
            let top = if self.r0.is_infinite() { 0.0 } else { self.r0.powf(-alpha) };
            return Ok((alpha * t + top).powf(-1.0 / alpha));
        }
        let l_min = self.big_l(self.r_min)?;
        if t >= l_min {
            return domain(format!("t = {t} exceeds L(r_min) = {l_min}"));
        }
        let mut lo = self.r_min.ln();
        let mut hi = if self.r0.is_finite() {
            self.r0.ln()
        } else {
            let mut h = self.r.ln().max(0.0);
            while self.big_l(h.exp())? > t {
                lo = h;
                h = 2.0 * h + 1.0;
            }
            h
        };
        // L is decreasing: L(e^lo) > t >= L(e^hi)
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let val = self.big_l(mid.exp())?;
            if (val - t).abs() <= 1e-12 * t {
                return Ok(mid.exp());
            }
            if val > t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }
}

impl ScalingProfile {
    /// Euclidean radius of the intrinsic ball `U_{s/L(r)}`, i.e.
    /// `L^{-1}(L(r)/s)`; equals `r` at `s = 1`.
    pub fn intrinsic_radius(&self, r: f64, s: f64) -> Result<f64> {
        if !(s > 0.0 && s <= 1.0) {
            return domain(format!("intrinsic scale factor must lie in (0, 1], got {s}"));
        }
        if s == 1.0 {
            return Ok(r);
        }
        self.invert_big_l(self.big_l(r)? / s)
    }
}

/// `∫_lo^hi g(v) dv` where either end may be infinite.
pub(crate) fn integrate_span<G: Fn(f64) -> f64>(
    g: &G,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    if lo >= hi {
        return Ok(0.0);
    }
    let inner: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    let left = if lo.is_finite() {
        lo
    } else if let Some(b) = inner.first() {
        *b
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    };
    let right = if hi.is_finite() {
        hi
    } else if let Some(b) = inner.last() {
        b.max(left)
    } else {
        left
    };
    let mut total = integrate(g, left, right, &inner, tol)?.value;
    if lo.is_infinite() {
        total += integrate_from_neg_infinity(g, left, tol)?.value;
    }
    if hi.is_infinite() {
        total += integrate_to_infinity(g, right, tol)?.value;
    }
    if !total.is_finite() {
        return Err(LabError::Numerical(format!(
            "integral over [{lo}, {hi}] is not finite"
        )));
    }
    Ok(total)
}

/// Monotone table of `(ln u, L(u))` used to invert `L` quickly when no
/// closed form exists. Between knots `L` is recovered exactly by a short
/// Gauss–Legendre integral and refined by safeguarded Newton steps.
#[derive(Debug, Clone)]
pub struct InverseTable {
    log_u: Vec<f64>,
    big_l: Vec<f64>,
    gl: GaussLegendre,
}

impl InverseTable {
    pub const DEFAULT_KNOTS: usize = 4096;

    pub fn build(profile: &ScalingProfile, u_lo: f64, u_hi: f64, knots: usize) -> Result<Self> {
        if !(u_lo > 0.0 && u_hi > u_lo && u_hi <= profile.r0) || knots < 2 {
            return domain(format!("bad inverse-table range [{u_lo}, {u_hi}]"));
        }
        let (a, b) = (u_lo.ln(), u_hi.ln());
        let log_u: Vec<f64> = (0..knots)
            .map(|i| a + (b - a) * i as f64 / (knots - 1) as f64)
            .collect();
        let gl = GaussLegendre::new(16);
        let mut big_l = vec![0.0; knots];
        big_l[knots - 1] = profile.big_l(u_hi)?;
        for i in (0..knots - 1).rev() {
            let seg = gl.integrate(|v| profile.l_raw(v.exp()), log_u[i], log_u[i + 1]);
            big_l[i] = big_l[i + 1] + seg;
        }
        Ok(Self { log_u, big_l, gl })
    }

    pub fn range(&self) -> (f64, f64) {
        (*self.big_l.last().unwrap(), self.big_l[0])
    }

    /// `L^{-1}(t)` when `t` lies in the tabulated range.
    pub fn invert(&self, profile: &ScalingProfile, t: f64) -> Option<f64> {
        let (lo, hi) = self.range();
        if !(t >= lo && t <= hi) {
            return None;
        }
        // first index whose L value is <= t (values decrease)
        let j = self.big_l.partition_point(|v| *v > t);
        if j == 0 {
            return Some(self.log_u[0].exp());
        }
        let i = j - 1;
        let (v0, v1) = (self.log_u[i], self.log_u[i + 1]);
        let (l0, l1) = (self.big_l[i], self.big_l[i + 1]);
        let phi = |v: f64| l1 + self.gl.integrate(|w| profile.l_raw(w.exp()), v, v1) - t;
        let (mut a, mut b) = (v0, v1);
        let mut v = if l0 > l1 { v0 + (v1 - v0) * (l0 - t) / (l0 - l1) } else { v0 };
        for _ in 0..30 {
            let f = phi(v);
            if f > 0.0 {
                a = v;
            } else {
                b = v;
            }
            let d = -profile.l_raw(v.exp());
            let mut next = v - f / d;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - v).abs() <= 1e-15 * (1.0 + v.abs()) {
                v = next;
                break;
            }
            v = next;
        }
        Some(v.exp())
    }
}

/// Thresholds `c1, c2, c3, K0` and the outcome of checking (L1)–(L3) on a
/// grid of radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LConditionWitness {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub k0: f64,
    pub grid: Vec<f64>,
    pub worst_l1: Option<f64>,
    pub worst_l2: Option<f64>,
    pub worst_l3: Option<f64>,
    pub verdict_l1: Option<bool>,
    pub verdict_l2: Option<bool>,
    pub verdict_l3: Option<bool>,
    /// Numerical evidence for `L(0+) = ∞`.
    pub l_diverges_at_zero: Option<bool>,
    pub notes: Vec<String>,
}

impl LConditionWitness {
    pub fn new(c1: f64, c2: f64, c3: f64, k0: f64, grid: Vec<f64>) -> Self {
        Self {
            c1,
            c2,
            c3,
            k0,
            grid,
            worst_l1: None,
            worst_l2: None,
            worst_l3: None,
            verdict_l1: None,
            verdict_l2: None,
            verdict_l3: None,
            l_diverges_at_zero: None,
            notes: Vec::new(),
        }
    }

    /// Default grid: `n` log-spaced radii in `[max(1e-8, r_min), R)`.
    pub fn default_grid(profile: &ScalingProfile, n: usize) -> Vec<f64> {
        let mut lo = profile.r_min.max(1e-8);
        if lo >= profile.r {
            lo = profile.r * 1e-8;
        }
        log_grid(lo, profile.r, n)
    }

    pub fn all_pass(&self) -> bool {
        self.verdict_l1 == Some(true) && self.verdict_l2 == Some(true) && self.verdict_l3 == Some(true)
    }
}

/// `n` points `lo·q^i`, `i = 0..n`, with `q = (hi/lo)^{1/n}`; `hi` itself is
/// excluded.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let q = (hi / lo).ln() / n as f64;
    (0..n).map(|i| lo * (q * i as f64).exp()).collect()
}

/// Evaluate (L1), (L2) (including the `L(0) = ∞` trend test) and (L3) on
/// the witness grid. Failures are verdicts, never errors.
pub fn check_l_conditions(
    profile: &ScalingProfile,
    dim: Dim,
    mut witness: LConditionWitness,
) -> LConditionWitness {
    let d = dim.get() as i32;
    let grid: Vec<f64> = witness
        .grid
        .iter()
        .copied()
        .filter(|r| *r > 0.0 && *r < profile.r)
        .collect();
    if grid.len() < 50 {
        witness
            .notes
            .push(format!("grid has {} admissible radii (< 50)", grid.len()));
    }

    // (L1): l(r/2) <= c1 l(r) and s^{-d} l(s) <= c1 r^{-d} l(r) for r <= s
    let mut worst1: f64 = 0.0;
    let mut min_k = f64::INFINITY;
    for &r in &grid {
        worst1 = worst1.max(profile.l_raw(0.5 * r) / profile.l_raw(r));
        let k = r.powi(-d) * profile.l_raw(r);
        min_k = min_k.min(k);
        worst1 = worst1.max(k / min_k);
    }
    witness.worst_l1 = Some(worst1);
    witness.verdict_l1 = Some(worst1 <= witness.c1);

    // (L2): sup L̃/L over the grid, and L(0) = ∞
    let mut worst2: f64 = 0.0;
    let mut l2_ok = true;
    for &r in &grid {
        match (profile.l_tilde(r), profile.big_l(r)) {
            (Ok(lt), Ok(l)) => worst2 = worst2.max(lt / l),
            (Err(e), _) | (_, Err(e)) => {
                witness.notes.push(format!("(L2) evaluation failed at r = {r}: {e}"));
                worst2 = f64::INFINITY;
                l2_ok = false;
                break;
            }
        }
    }
    let diverges = l_diverges_at_zero(profile);
    witness.l_diverges_at_zero = Some(diverges);
    if !diverges {
        witness.notes.push("L(0+) = ∞ trend test failed".into());
    }
    witness.worst_l2 = Some(worst2);
    witness.verdict_l2 = Some(l2_ok && diverges && worst2 <= witness.c2);

    // (L3): L(R/2) + (1 ∨ R^{-2}) K0 <= c3 L(R)
    let big_r = profile.r;
    let worst3 = match (profile.big_l(0.5 * big_r), profile.big_l(big_r)) {
        (Ok(half), Ok(full)) if full > 0.0 => (half + (1f64).max(big_r.powi(-2)) * witness.k0) / full,
        _ => f64::INFINITY,
    };
    witness.worst_l3 = Some(worst3);
    witness.verdict_l3 = Some(worst3 <= witness.c3);
    witness
}

/// `L(10^{-8} R) > 10^3 L(R)` and `k ↦ L(10^{-k} R)` increasing on `1..=8`.
pub fn l_diverges_at_zero(profile: &ScalingProfile) -> bool {
    let big_r = profile.r;
    let base = match profile.big_l(big_r) {
        Ok(v) => v,
        Err(_) => return false,
    };
    let mut prev = base;
    for k in 1..=8 {
        match profile.big_l(big_r * 10f64.powi(-k)) {
            Ok(v) if v > prev && v.is_finite() => prev = v,
            _ => return false,
        }
    }
    prev > 1e3 * base
}

/// `C4 = 1 + c1 + c3`, the doubling constant of `L`.
pub fn doubling_constant(c1: f64, c3: f64) -> f64 {
    1.0 + c1 + c3
}

/// Largest `L(r/2)/L(r)` over the grid.
pub fn worst_doubling_ratio(profile: &ScalingProfile, grid: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &r in grid {
        worst = worst.max(profile.big_l(0.5 * r)? / profile.big_l(r)?);
    }
    Ok(worst)
}

/// Constant `c = a^{-1} c_L^{-2} γ/(2-γ)`, `a = 1 - (R/R0)^γ`, for which
/// `∫_0^r u l(u) du ≤ c r² L(r)` holds under the lower scaling assumption.
pub fn derive_c2_from_l2(c_l: f64, gamma: f64, big_r: f64, r0: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 2.0) {
        return domain(format!("γ must lie in (0, 2), got {gamma}"));
    }
    if !(c_l > 0.0) {
        return domain(format!("c_L must be positive, got {c_l}"));
    }
    if !(big_r > 0.0 && big_r < r0) {
        return domain(format!("need 0 < R < R0, got R = {big_r}, R0 = {r0}"));
    }
    let a = if r0.is_infinite() { 1.0 } else { 1.0 - (big_r / r0).powf(gamma) };
    Ok(gamma / (a * c_l * c_l * (2.0 - gamma)))
}

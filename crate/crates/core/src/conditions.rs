//! Monte Carlo evidence for the exit-measure conditions and the
//! deterministic derivations between them.
//!
//! Balls are intrinsic: for a Euclidean outer radius `r`, the ball "`U_{s r}`"
//! is the Euclidean ball of radius `L^{-1}(L(r)/s)` about the same centre.
//! All grid points of one check share their random streams, so infima and
//! suprema over the grid compare like with like.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::exit::{exit_positions, Payoff, SeedLineage};
use crate::geometry::{ring_grid, AnnularSector, Ball, Dim, DirectionCap, Point, SectorUnion};
use crate::kernel::KernelSpec;
use crate::simulate::SimConfig;
use crate::stats::{least_squares, MeanEstimate, Proportion, Z99_ONE_SIDED};
use crate::stream::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionId {
    J0,
    J1,
    J2,
    HI,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionGeometry {
    pub x0: Point,
    pub r: f64,
    pub alpha: f64,
    pub inner_radius: f64,
    pub n_max: Option<u32>,
}

/// One level of the overshoot check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootLevel {
    pub n: u32,
    pub ball_radius: f64,
    /// Largest mass beyond `r` over the grid.
    pub m_n: f64,
    pub std_error: f64,
    /// Ledger bound `C0 a0^n`, when supplied.
    pub bound: Option<f64>,
    pub bound_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConditionDetails {
    Hitting {
        estimate: f64,
        lower: f64,
        tail_mass: f64,
    },
    Dichotomy {
        family_size: usize,
        worst_set: Vec<usize>,
        atoms: usize,
    },
    Overshoot {
        levels: Vec<OvershootLevel>,
        fitted_c0: f64,
        fitted_a0: f64,
        fitted_a0_std_error: Option<f64>,
        monotone_within_3sigma: bool,
    },
    Harnack {
        per_payoff: Vec<HarnackEntry>,
        excluded: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackEntry {
    pub label: String,
    pub max_h: f64,
    pub min_h: f64,
    pub k: f64,
    pub k_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub geometry: ConditionGeometry,
    pub family: String,
    /// Point estimate of the condition's constant (δ0, K or a0).
    pub estimate: f64,
    /// 99% interval; for lower-bound constants the one-sided lower bound is
    /// `ci.0`.
    pub ci: (f64, f64),
    pub threshold: Option<f64>,
    pub verdict: bool,
    pub valid: bool,
    pub n_per_point: usize,
    pub grid_points: usize,
    pub seeds: SeedLineage,
    pub details: ConditionDetails,
    pub notes: Vec<String>,
}

fn intrinsic_ball(spec: &KernelSpec, x0: &Point, r: f64, s: f64) -> Result<Ball> {
    Ball::new(*x0, spec.profile.intrinsic_radius(r, s)?)
}

/// Default evaluation grid in `U_{s r}`: centre plus a ring at half radius.
pub fn default_grid(spec: &KernelSpec, x0: &Point, r: f64, s: f64) -> Result<Vec<Point>> {
    let rad = spec.profile.intrinsic_radius(r, s)?;
    let n = if spec.dim == Dim::One { 15 } else { 16 };
    Ok(ring_grid(*x0, rad, spec.dim, n))
}

fn run(
    spec: &KernelSpec,
    x: &Point,
    ball: &Ball,
    config: &SimConfig,
    key: &StreamKey,
) -> Result<(Vec<Point>, usize)> {
    exit_positions(spec, x, ball, config, key, config.n_paths)
}

fn censor_ok(censored: usize, n: usize) -> bool {
    censored as f64 <= 0.01 * n as f64
}

/// Hitting condition: mass of `U_r \ U_{αr}` under `μ_{x0}^{U_{αr}}`; the
/// reported constant is the one-sided 99% lower bound.
pub fn check_j0(
    spec: &KernelSpec,
    x0: &Point,
    r: f64,
    alpha: f64,
    threshold: Option<f64>,
    config: &SimConfig,
) -> Result<ConditionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("α must lie in (0, 1), got {alpha}"));
    }
    let inner = intrinsic_ball(spec, x0, r, alpha)?;
    let key = config.stream().child("J0");
    let (pos, censored) = run(spec, x0, &inner, config, &key)?;
    let hits = pos.iter().filter(|p| p.dist(x0) < r).count();
    let prop = Proportion::new(hits, pos.len());
    let thr = threshold.unwrap_or(0.0);
    Ok(ConditionReport {
        condition: ConditionId::J0,
        geometry: ConditionGeometry {
            x0: *x0,
            r,
            alpha,
            inner_radius: inner.radius,
            n_max: None,
        },
        family: "single set U_r".into(),
        estimate: prop.estimate,
        ci: (prop.lower, prop.upper),
        threshold,
        verdict: prop.lower > thr,
        valid: censor_ok(censored, config.n_paths),
        n_per_point: config.n_paths,
        grid_points: 1,
        seeds: (&key).into(),
        details: ConditionDetails::Hitting {
            estimate: prop.estimate,
            lower: prop.lower,
            tail_mass: 1.0 - prop.estimate,
        },
        notes: vec![],
    })
}

/// Partition of `S = U_r \ U_{αr}` into intrinsic sub-annuli times two
/// half-spaces; family members are unions of atoms (bit masks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFamily {
    pub radii: Vec<f64>,
    pub caps: Vec<DirectionCap>,
    pub members: Vec<u64>,
    pub description: String,
}

impl SetFamily {
    pub fn n_atoms(&self) -> usize {
        (self.radii.len() - 1) * self.caps.len()
    }

    pub fn full_mask(&self) -> u64 {
        (1u64 << self.n_atoms()) - 1
    }

    /// Atom index of `z`, or `None` outside `S`.
    pub fn atom_of(&self, x0: &Point, z: &Point) -> Option<usize> {
        let v = z.sub(x0);
        let rho = v.norm();
        let ring = self.radii.windows(2).position(|w| rho >= w[0] && rho < w[1])?;
        let cap = self.caps.iter().position(|c| c.contains_direction(&v))?;
        Some(ring * self.caps.len() + cap)
    }

    /// Every union of at most `max_union` atoms, the whole of `S`, and
    /// `n_random` random unions drawn from `seed`.
    pub fn adversarial(
        spec: &KernelSpec,
        r: f64,
        alpha: f64,
        sub_annuli: usize,
        max_union: usize,
        n_random: usize,
        seed: u64,
    ) -> Result<Self> {
        let radii = (0..=sub_annuli)
            .map(|j| {
                let s = alpha.powf((sub_annuli - j) as f64 / sub_annuli as f64);
                spec.profile.intrinsic_radius(r, s)
            })
            .collect::<Result<Vec<f64>>>()?;
        let caps = vec![DirectionCap::positive(), DirectionCap::negative()];
        let n_atoms = sub_annuli * caps.len();
        if n_atoms > 63 {
            return domain("too many atoms for a bit-mask family");
        }
        let mut members: Vec<u64> = (1u64..(1u64 << n_atoms))
            .filter(|m| (m.count_ones() as usize) <= max_union)
            .collect();
        let full = (1u64 << n_atoms) - 1;
        members.push(full);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_random {
            let m = rng.random_range(1..=full);
            members.push(m);
        }
        Ok(Self {
            radii,
            caps,
            description: format!(
                "{sub_annuli} intrinsic sub-annuli x 2 half-spaces; unions of <= {max_union} atoms, all of S, {n_random} random unions"
            ),
            members,
        })
    }

    /// Same family with every member replaced by its complement in `S`.
    pub fn complemented(&self) -> Self {
        let full = self.full_mask();
        let mut c = self.clone();
        c.members = self.members.iter().map(|m| !m & full).collect();
        c.description = format!("complements of: {}", self.description);
        c
    }
}

/// Set-dichotomy condition over a finite family. For each `A`:
/// `δ(A) = max(min_x μ_x(A), min_x μ_x(U_r \ A))` with `μ_x = μ_x^{U_{αr}}`,
/// `x` over a grid in `U_{α²r}`; the report gives the minimum over `A` (the
/// constant is an upper estimate of the true infimum over all sets).
#[allow(clippy::too_many_arguments)]
pub fn check_j1(
    spec: &KernelSpec,
    x0: &Point,
    r: f64,
    alpha: f64,
    family: &SetFamily,
    x_grid: &[Point],
    threshold: Option<f64>,
    config: &SimConfig,
) -> Result<ConditionReport> {
    if family.members.is_empty() {
        return domain("empty set family");
    }
    if x_grid.is_empty() {
        return domain("empty evaluation grid");
    }
    let inner = intrinsic_ball(spec, x0, r, alpha)?;
    let key = config.stream().child("J1");
    let n_atoms = family.n_atoms();
    let mut counts: Vec<Vec<usize>> = Vec::with_capacity(x_grid.len());
    let mut totals = Vec::with_capacity(x_grid.len());
    let mut censored_total = 0;
    for x in x_grid {
        let (pos, censored) = run(spec, x, &inner, config, &key)?;
        censored_total += censored;
        let mut c = vec![0usize; n_atoms];
        for p in &pos {
            if let Some(a) = family.atom_of(x0, p) {
                c[a] += 1;
            }
        }
        counts.push(c);
        totals.push(pos.len());
    }
    let full = family.full_mask();
    let mass = |mask: u64, xi: usize| -> Proportion {
        let k: usize = (0..n_atoms)
            .filter(|a| mask >> a & 1 == 1)
            .map(|a| counts[xi][a])
            .sum();
        Proportion::new(k, totals[xi])
    };
    let mut best: Option<(f64, f64, u64)> = None;
    for &m in &family.members {
        let comp = !m & full;
        let (mut est_a, mut low_a, mut est_c, mut low_c) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for xi in 0..x_grid.len() {
            let pa = mass(m, xi);
            let pc = mass(comp, xi);
            est_a = est_a.min(pa.estimate);
            low_a = low_a.min(pa.lower);
            est_c = est_c.min(pc.estimate);
            low_c = low_c.min(pc.lower);
        }
        let est = est_a.max(est_c);
        let low = low_a.max(low_c);
        if best.is_none_or(|b| est < b.0 || (est == b.0 && low < b.1)) {
            best = Some((est, low, m));
        }
    }
    let (est, low, worst) = best.expect("nonempty family");
    let lower_all = family
        .members
        .iter()
        .map(|&m| {
            let comp = !m & full;
            let la = (0..x_grid.len()).map(|xi| mass(m, xi).lower).fold(f64::INFINITY, f64::min);
            let lc = (0..x_grid.len()).map(|xi| mass(comp, xi).lower).fold(f64::INFINITY, f64::min);
            la.max(lc)
        })
        .fold(f64::INFINITY, f64::min);
    let thr = threshold.unwrap_or(0.0);
    let worst_atoms: Vec<usize> = (0..n_atoms).filter(|a| worst >> a & 1 == 1).collect();
    Ok(ConditionReport {
        condition: ConditionId::J1,
        geometry: ConditionGeometry {
            x0: *x0,
            r,
            alpha,
            inner_radius: inner.radius,
            n_max: None,
        },
        family: family.description.clone(),
        estimate: est,
        ci: (lower_all, est),
        threshold,
        verdict: lower_all > thr,
        valid: censor_ok(censored_total, config.n_paths * x_grid.len()),
        n_per_point: config.n_paths,
        grid_points: x_grid.len(),
        seeds: (&key).into(),
        details: ConditionDetails::Dichotomy {
            family_size: family.members.len(),
            worst_set: worst_atoms,
            atoms: n_atoms,
        },
        notes: vec![format!(
            "lower bound of the worst set by estimate: {low:.6e}; family coverage is finite"
        )],
    })
}

/// Overshoot decay: `m_n = max_x μ_x^{U_{α0^n r}}(U_r^c)`, `x` in
/// `U_{α0^{n+1} r}`, for `n = 1..=n_max`; `(C0, a0)` fitted to `ln m_n`.
/// `ledger_bound = (C0, a0)` adds the check `m_n ≤ C0 a0^n + 3σ`.
pub fn check_j2(
    spec: &KernelSpec,
    x0: &Point,
    r: f64,
    alpha0: f64,
    n_max: u32,
    ledger_bound: Option<(f64, f64)>,
    config: &SimConfig,
) -> Result<ConditionReport> {
    if n_max < 3 {
        return domain(format!("need n_max >= 3, got {n_max}"));
    }
    if !(alpha0 > 0.0 && alpha0 < 1.0) {
        return domain(format!("α0 must lie in (0, 1), got {alpha0}"));
    }
    let key = config.stream().child("J2");
    let mut levels = Vec::new();
    let mut censored_total = 0;
    let mut grid_points = 0;
    for n in 1..=n_max {
        let ball = intrinsic_ball(spec, x0, r, alpha0.powi(n as i32))?;
        let grid = default_grid(spec, x0, r, alpha0.powi(n as i32 + 1))?;
        grid_points = grid.len();
        let lk = key.index(n as u64);
        let mut worst = Proportion::new(0, 1);
        for x in &grid {
            let (pos, censored) = run(spec, x, &ball, config, &lk)?;
            censored_total += censored;
            let p = Proportion::new(pos.iter().filter(|z| z.dist(x0) >= r).count(), pos.len());
            if p.estimate > worst.estimate || worst.n == 1 {
                worst = p;
            }
        }
        let se = (worst.estimate.max(1.0 / worst.n as f64) * (1.0 - worst.estimate) / worst.n as f64).sqrt();
        let bound = ledger_bound.map(|(c0, a0)| c0 * a0.powi(n as i32));
        levels.push(OvershootLevel {
            n,
            ball_radius: ball.radius,
            m_n: worst.estimate,
            std_error: se,
            bound,
            bound_ok: bound.map(|b| worst.estimate <= b + 3.0 * se),
        });
    }
    let positive: Vec<&OvershootLevel> = levels.iter().filter(|l| l.m_n > 0.0).collect();
    let mut notes = vec![];
    let (c0, a0, a0_se) = if positive.len() >= 2 {
        let xs: Vec<f64> = positive.iter().map(|l| l.n as f64).collect();
        let ys: Vec<f64> = positive.iter().map(|l| l.m_n.ln()).collect();
        let fit = least_squares(&xs, &ys).expect("distinct levels");
        (fit.intercept.exp(), fit.slope.exp(), Some(fit.slope_std_error * fit.slope.exp()))
    } else {
        notes.push(format!(
            "{} positive level masses; reporting C0 = 1, a0 = 0",
            positive.len()
        ));
        (1.0, 0.0, None)
    };
    let monotone = levels
        .windows(2)
        .all(|w| w[1].m_n <= w[0].m_n + 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt());
    let bounds_ok = levels.iter().all(|l| l.bound_ok.unwrap_or(true));
    Ok(ConditionReport {
        condition: ConditionId::J2,
        geometry: ConditionGeometry {
            x0: *x0,
            r,
            alpha: alpha0,
            inner_radius: levels[0].ball_radius,
            n_max: Some(n_max),
        },
        family: "complement of U_r".into(),
        estimate: a0,
        ci: match a0_se {
            Some(se) => (a0 - Z99_ONE_SIDED * se, a0 + Z99_ONE_SIDED * se),
            None => (0.0, 0.0),
        },
        threshold: ledger_bound.map(|b| b.1),
        verdict: a0 < 1.0 && bounds_ok,
        valid: censor_ok(censored_total, config.n_paths * grid_points * n_max as usize),
        n_per_point: config.n_paths,
        grid_points,
        seeds: (&key).into(),
        details: ConditionDetails::Overshoot {
            levels,
            fitted_c0: c0,
            fitted_a0: a0,
            fitted_a0_std_error: a0_se,
            monotone_within_3sigma: monotone,
        },
        notes,
    })
}

/// Harnack ratio `K(f) = max_x h_f / min_x h_f` over a grid in `U_{αr}`,
/// `h_f(x) = ∫ f dμ_x^{U_r}`, maximized over nonnegative payoffs. Payoffs
/// whose minimum is within noise of zero are excluded.
#[allow(clippy::too_many_arguments)]
pub fn check_hi(
    spec: &KernelSpec,
    x0: &Point,
    r: f64,
    alpha: f64,
    payoffs: &[(String, Payoff)],
    x_grid: &[Point],
    threshold: Option<f64>,
    config: &SimConfig,
) -> Result<ConditionReport> {
    if payoffs.is_empty() || x_grid.is_empty() {
        return domain("payoff family and grid must be nonempty");
    }
    for (label, f) in payoffs {
        f.validate()?;
        if !f.is_nonnegative() {
            return domain(format!("payoff {label} is not nonnegative"));
        }
    }
    let ball = Ball::new(*x0, r)?;
    let key = config.stream().child("HI");
    let mut samples = Vec::with_capacity(x_grid.len());
    let mut censored_total = 0;
    for x in x_grid {
        let (pos, censored) = run(spec, x, &ball, config, &key)?;
        censored_total += censored;
        samples.push(pos);
    }
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (label, f) in payoffs {
        let est: Vec<MeanEstimate> = samples
            .iter()
            .map(|pos| MeanEstimate::from_values(&pos.iter().map(|z| f.eval(z)).collect::<Vec<_>>()))
            .collect();
        let max = est.iter().max_by(|a, b| a.mean.total_cmp(&b.mean)).unwrap();
        let min = est.iter().min_by(|a, b| a.mean.total_cmp(&b.mean)).unwrap();
        if min.mean <= 3.0 * min.std_error || min.mean <= 0.0 {
            excluded.push(label.clone());
            continue;
        }
        let low = (min.mean - Z99_ONE_SIDED * min.std_error).max(f64::MIN_POSITIVE);
        entries.push(HarnackEntry {
            label: label.clone(),
            max_h: max.mean,
            min_h: min.mean,
            k: max.mean / min.mean,
            k_upper: (max.mean + Z99_ONE_SIDED * max.std_error) / low,
        });
    }
    let k = entries.iter().map(|e| e.k).fold(1.0, f64::max);
    let k_upper = entries.iter().map(|e| e.k_upper).fold(1.0, f64::max);
    let verdict = !entries.is_empty() && threshold.is_none_or(|t| k_upper <= t);
    Ok(ConditionReport {
        condition: ConditionId::HI,
        geometry: ConditionGeometry {
            x0: *x0,
            r,
            alpha,
            inner_radius: x_grid.iter().map(|x| x.dist(x0)).fold(0.0, f64::max),
            n_max: None,
        },
        family: format!("{} nonnegative payoffs", payoffs.len()),
        estimate: k,
        ci: (k, k_upper),
        threshold,
        verdict,
        valid: censor_ok(censored_total, config.n_paths * x_grid.len()),
        n_per_point: config.n_paths,
        grid_points: x_grid.len(),
        seeds: (&key).into(),
        details: ConditionDetails::Harnack {
            per_payoff: entries,
            excluded,
        },
        notes: vec![],
    })
}

/// Nonnegative payoffs supported outside `V_r(center)`: the constant 1,
/// shell indicators on `[r,2r)`, `[2r,4r)`, `[4r,∞)` split by half-space,
/// and one decreasing radial step.
pub fn default_payoff_family(center: &Point, r: f64) -> Result<Vec<(String, Payoff)>> {
    let mut out = vec![("one".to_string(), Payoff::Constant { value: 1.0 })];
    let shells = [(1.0, 2.0), (2.0, 4.0), (4.0, f64::INFINITY)];
    for (lo, hi) in shells {
        for (side, cap) in [("+", DirectionCap::positive()), ("-", DirectionCap::negative())] {
            let set = SectorUnion(vec![AnnularSector::new(*center, lo * r, hi * r, cap)?]);
            out.push((format!("shell[{lo},{hi})r{side}"), Payoff::indicator(set)));
        }
    }
    out.push((
        "radial-step".to_string(),
        Payoff::RadialStep {
            center: *center,
            edges: vec![r, 2.0 * r, 4.0 * r, f64::INFINITY],
            values: vec![1.0, 0.5, 0.25],
        },
    ));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct J1Constants {
    pub alpha: f64,
    pub delta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct J2Constants {
    pub alpha0: f64,
    pub a0: f64,
    pub c0: f64,
}

/// From a Harnack constant `K` and a hitting constant `δ0`:
/// `(α, δ0/(2K))` for the dichotomy and `(α², 1 - δ0/K², 1)` for the
/// overshoot condition.
pub fn derive_j_from_hi(k: f64, delta0: f64, alpha: f64) -> Result<(J1Constants, J2Constants)> {
    if !(k >= 1.0) || !(delta0 > 0.0 && delta0 < 1.0) {
        return domain(format!("need K >= 1 and δ0 in (0, 1), got K = {k}, δ0 = {delta0}"));
    }
    Ok((
        J1Constants {
            alpha,
            delta0: delta0 / (2.0 * k),
        },
        J2Constants {
            alpha0: alpha * alpha,
            a0: 1.0 - delta0 / (k * k),
            c0: 1.0,
        },
    ))
}

/// `α = min(α0/2, (δ0/(8C))^{1/β})`, so that `C α^β < δ0/4`.
pub fn derive_alpha_from_hc(c: f64, beta: f64, delta0: f64, alpha0: f64) -> Result<f64> {
    if !(c > 0.0) || !(beta > 0.0 && beta < 1.0) || !(delta0 > 0.0 && delta0 < 1.0) {
        return domain(format!(
            "need C > 0, β in (0, 1), δ0 in (0, 1); got C = {c}, β = {beta}, δ0 = {delta0}"
        ));
    }
    let alpha = (0.5 * alpha0).min((delta0 / (8.0 * c)).powf(1.0 / beta));
    if !(alpha > 0.0) {
        return domain(format!("α = (δ0/(8C))^(1/β) underflows for C = {c}, β = {beta}, δ0 = {delta0}"));
    }
    Ok(alpha)
}

//! Empirical exit measures `μ_x^U`, harmonic functions `x ↦ ∫ f dμ_x^U`,
//! and the composition check `μ_x^U = ∫ μ_y^U dμ_x^V(y)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::geometry::{AnnularSector, Ball, Dim, DirectionCap, Point, SectorUnion};
use crate::kernel::KernelSpec;
use crate::simulate::{Cutoff, SimConfig, Simulator};
use crate::stats::{ks_two_sample, ks_allowance, MeanEstimate, Proportion, Z99_TWO_SIDED};
use crate::stream::StreamKey;

/// Smallest sample size accepted by the exit-measure estimators.
pub const MIN_SAMPLES: usize = 1000;

/// Radial cells `[r q^i, r q^{i+1})` of the complement up to `r_report`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub ratio: f64,
    pub n_cells: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self { ratio: 2.0, n_cells: 8 }
    }
}

impl HistogramSpec {
    /// Cells aligned with a ledger scale factor `α`, i.e. ratio `1/α`.
    pub fn aligned(alpha: f64, n_cells: usize) -> Self {
        Self {
            ratio: 1.0 / alpha,
            n_cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitCell {
    pub r_lo: f64,
    pub r_hi: f64,
    pub sector: String,
    pub mass: f64,
    pub ci: (f64, f64),
}

/// Provenance of a Monte Carlo result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub domain: u64,
}

impl From<&StreamKey> for SeedLineage {
    fn from(k: &StreamKey) -> Self {
        Self {
            master_seed: k.master_seed,
            domain: k.domain,
        }
    }
}

/// Normalized empirical exit measure. `positions` holds the uncensored exit
/// points; the histogram summarizes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitEmpirical {
    pub ball: Ball,
    pub x: Point,
    pub n: usize,
    pub censored: usize,
    pub valid: bool,
    pub cells: Vec<ExitCell>,
    pub tail_mass: f64,
    pub r_report: f64,
    pub seed: SeedLineage,
    #[serde(skip)]
    pub positions: Vec<Point>,
}

fn sectors(dim: Dim) -> Vec<(&'static str, DirectionCap)> {
    match dim {
        Dim::One => vec![("+", DirectionCap::positive()), ("-", DirectionCap::negative())],
        _ => vec![("all", DirectionCap::FULL)],
    }
}

impl ExitEmpirical {
    pub fn from_positions(
        ball: Ball,
        x: Point,
        dim: Dim,
        positions: Vec<Point>,
        censored: usize,
        hist: HistogramSpec,
        seed: SeedLineage,
    ) -> Self {
        let n = positions.len();
        let total = n + censored;
        let mut cells = Vec::new();
        let mut r_lo = ball.radius;
        for _ in 0..hist.n_cells {
            let r_hi = r_lo * hist.ratio;
            for (name, cap) in sectors(dim) {
                let s = AnnularSector {
                    center: ball.center,
                    r_lo,
                    r_hi,
                    cap,
                };
                let k = positions.iter().filter(|p| s.contains(p)).count();
                let prop = Proportion::new(k, n);
                cells.push(ExitCell {
                    r_lo,
                    r_hi,
                    sector: name.to_string(),
                    mass: prop.estimate,
                    ci: prop.ci,
                });
            }
            r_lo = r_hi;
        }
        let far = positions.iter().filter(|p| p.dist(&ball.center) >= r_lo).count();
        Self {
            ball,
            x,
            n,
            censored,
            valid: total > 0 && censored as f64 <= 0.01 * total as f64,
            cells,
            tail_mass: if n > 0 { far as f64 / n as f64 } else { f64::NAN },
            r_report: r_lo,
            seed,
            positions,
        }
    }

    /// Total mass of the empirical measure (1 by construction).
    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.mass).sum::<f64>()
            + self.tail_mass
            + self.proportion(|p| self.ball.contains(p)).estimate
    }

    pub fn proportion<F: Fn(&Point) -> bool>(&self, pred: F) -> Proportion {
        Proportion::new(self.positions.iter().filter(|p| pred(p)).count(), self.n)
    }

    pub fn mass_of(&self, set: &SectorUnion) -> Proportion {
        self.proportion(|p| set.contains(p))
    }

    /// `μ({|z - center| ≥ radius})`.
    pub fn mass_beyond(&self, center: &Point, radius: f64) -> Proportion {
        self.proportion(|p| p.dist(center) >= radius)
    }

    pub fn exit_radii(&self) -> Vec<f64> {
        self.positions.iter().map(|p| p.dist(&self.ball.center)).collect()
    }

    /// `∫ f dμ` with a 99% interval clipped to `[-M, M]`.
    pub fn integrate(&self, f: &Payoff) -> HarmonicValue {
        let vals: Vec<f64> = self.positions.iter().map(|p| f.eval(p)).collect();
        let m = f.sup_norm();
        let est = MeanEstimate::from_values(&vals);
        HarmonicValue {
            value: est.mean,
            std_error: est.std_error,
            ci: (est.ci.0.max(-m), est.ci.1.min(m)),
            n: est.n,
        }
    }
}

/// Simulates exits from `ball` started at `x` with stream family `key`.
pub fn exit_positions(
    spec: &KernelSpec,
    x: &Point,
    ball: &Ball,
    config: &SimConfig,
    key: &StreamKey,
    n: usize,
) -> Result<(Vec<Point>, usize)> {
    let sim = Simulator::new(spec, *ball, config)?;
    Ok(positions_from(&sim, x, key, n))
}

fn positions_from(sim: &Simulator, x: &Point, key: &StreamKey, n: usize) -> (Vec<Point>, usize) {
    let samples = sim.exit_samples(x, key, n);
    let censored = samples.iter().filter(|s| s.censored).count();
    let positions = samples
        .into_iter()
        .filter(|s| !s.censored)
        .map(|s| s.exit_position)
        .collect();
    (positions, censored)
}

pub fn estimate_exit_measure(
    spec: &KernelSpec,
    x: &Point,
    ball: &Ball,
    config: &SimConfig,
    hist: HistogramSpec,
) -> Result<ExitEmpirical> {
    if config.n_paths < MIN_SAMPLES {
        return Err(LabError::Precondition(format!(
            "exit measures need at least {MIN_SAMPLES} paths, got {}",
            config.n_paths
        )));
    }
    let key = config.stream().child("exit-measure");
    let (positions, censored) = exit_positions(spec, x, ball, config, &key, config.n_paths)?;
    Ok(ExitEmpirical::from_positions(
        *ball,
        *x,
        spec.dim,
        positions,
        censored,
        hist,
        (&key).into(),
    ))
}

/// Bounded payoff `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payoff {
    Constant { value: f64 },
    Indicator { set: SectorUnion },
    /// `values[i]` on `edges[i] ≤ |z - center| < edges[i+1]`, zero elsewhere.
    RadialStep {
        center: Point,
        edges: Vec<f64>,
        values: Vec<f64>,
    },
    /// Piecewise linear in `|z - center|` through `knots`, constant beyond.
    RadialLipschitz { center: Point, knots: Vec<(f64, f64)> },
    /// `Σ c_i f_i`.
    Combination { terms: Vec<(f64, Payoff)> },
}

impl Payoff {
    pub fn indicator(set: SectorUnion) -> Self {
        Payoff::Indicator { set }
    }

    /// `1 - f`.
    pub fn complement(self) -> Self {
        Payoff::Combination {
            terms: vec![(1.0, Payoff::Constant { value: 1.0 }), (-1.0, self)],
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        Payoff::Combination {
            terms: vec![(c, self)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Payoff::RadialStep { edges, values, .. } => {
                if edges.len() != values.len() + 1 || edges.windows(2).any(|w| !(w[1] > w[0])) {
                    return domain("radial step needs increasing edges, one more than values");
                }
            }
            Payoff::RadialLipschitz { knots, .. } => {
                if knots.is_empty() || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return domain("radial Lipschitz payoff needs increasing knots");
                }
            }
            Payoff::Combination { terms } => {
                for (_, t) in terms {
                    t.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn eval(&self, z: &Point) -> f64 {
        match self {
            Payoff::Constant { value } => *value,
            Payoff::Indicator { set } => {
                if set.contains(z) {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::RadialStep {
                center,
                edges,
                values,
            } => {
                let r = z.dist(center);
                edges
                    .windows(2)
                    .zip(values)
                    .find(|(w, _)| r >= w[0] && r < w[1])
                    .map(|(_, v)| *v)
                    .unwrap_or(0.0)
            }
            Payoff::RadialLipschitz { center, knots } => {
                let r = z.dist(center);
                if r <= knots[0].0 {
                    return knots[0].1;
                }
                for w in knots.windows(2) {
                    if r < w[1].0 {
                        let t = (r - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + t * (w[1].1 - w[0].1);
                    }
                }
                knots[knots.len() - 1].1
            }
            Payoff::Combination { terms } => terms.iter().map(|(c, f)| c * f.eval(z)).sum(),
        }
    }

    /// Declared bound `M ≥ sup |f|`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Payoff::Constant { value } => value.abs(),
            Payoff::Indicator { .. } => 1.0,
            Payoff::RadialStep { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Payoff::RadialLipschitz { knots, .. } => knots.iter().fold(0.0, |m, k| m.max(k.1.abs())),
            Payoff::Combination { terms } => terms.iter().map(|(c, f)| c.abs() * f.sup_norm()).sum(),
        }
    }

    /// Whether `f ≥ 0` everywhere.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            Payoff::Constant { value } => *value >= 0.0,
            Payoff::Indicator { .. } => true,
            Payoff::RadialStep { values, .. } => values.iter().all(|v| *v >= 0.0),
            Payoff::RadialLipschitz { knots, .. } => knots.iter().all(|k| k.1 >= 0.0),
            Payoff::Combination { terms } => {
                terms.iter().all(|(c, f)| *c >= 0.0 && f.is_nonnegative())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicValue {
    pub value: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
    pub n: usize,
}

pub fn harmonic_eval(
    spec: &KernelSpec,
    f: &Payoff,
    ball: &Ball,
    x: &Point,
    config: &SimConfig,
) -> Result<HarmonicValue> {
    f.validate()?;
    let mu = estimate_exit_measure(spec, x, ball, config, HistogramSpec::default())?;
    if !mu.valid {
        return Err(LabError::Numerical(format!(
            "{} of {} paths censored",
            mu.censored,
            mu.n + mu.censored
        )));
    }
    Ok(mu.integrate(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub n_direct: usize,
    pub n_two_stage: usize,
    pub ks: f64,
    pub ks_allowance: f64,
    pub ks_pass: bool,
    pub tv: f64,
    pub tv_allowance: f64,
    pub tv_pass: bool,
    /// `x ∉ V`, so the first stage is the point mass at `x`.
    pub first_stage_trivial: bool,
    /// Fraction of first-stage exits that already left `U`.
    pub first_stage_exits_outer: f64,
    pub eps: f64,
}

/// Cells used for the total-variation comparison: geometric radial shells
/// of ratio 2 (times the sectors) and a far tail.
fn partition_counts(positions: &[Point], ball: &Ball, dim: Dim) -> Vec<usize> {
    let secs = sectors(dim);
    let n_shells = 10;
    let mut counts = vec![0usize; n_shells * secs.len() + 1];
    for p in positions {
        let v = p.sub(&ball.center);
        let r = v.norm();
        let shell = (r / ball.radius).log2().floor();
        if !(shell >= 0.0) {
            // inside the ball: never happens for valid exits, kept in tail
            *counts.last_mut().unwrap() += 1;
            continue;
        }
        let s = shell as usize;
        if s >= n_shells {
            *counts.last_mut().unwrap() += 1;
            continue;
        }
        let j = secs.iter().position(|(_, c)| c.contains_direction(&v)).unwrap_or(0);
        counts[s * secs.len() + j] += 1;
    }
    counts
}

/// Total-variation distance over the partition with a 3σ allowance.
pub fn tv_distance(a: &[usize], b: &[usize]) -> (f64, f64) {
    let (n, m) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    let mut tv = 0.0;
    let mut allow = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (p, q) = (*x as f64 / n, *y as f64 / m);
        tv += (p - q).abs();
        let pooled = (*x + *y) as f64 / (n + m);
        allow += 3.0 * (pooled * (1.0 - pooled) * (1.0 / n + 1.0 / m)).sqrt();
    }
    (0.5 * tv, 0.5 * allow)
}

/// Compares the direct estimate of `μ_x^U` with the two-stage estimate
/// "exit `V`, then restart and exit `U`". Both use the same cutoff, set by
/// the outer ball.
pub fn check_composition(
    spec: &KernelSpec,
    inner: &Ball,
    outer: &Ball,
    x: &Point,
    config: &SimConfig,
) -> Result<CompositionReport> {
    if inner.center.dist(&outer.center) + inner.radius > outer.radius * (1.0 + 1e-12) {
        return domain("the inner ball must lie inside the outer ball");
    }
    if !outer.contains(x) {
        return domain("x must lie in the outer ball");
    }
    let eps = config.cutoff.resolve(outer.radius);
    let cfg = config.with_cutoff(Cutoff::Absolute(eps));
    let n = config.n_paths;
    let root = config.stream().child("composition");
    let direct_sim = Simulator::new(spec, *outer, &cfg)?;
    let (direct, _) = positions_from(&direct_sim, x, &root.child("direct"), n);

    let first_stage_trivial = !inner.contains(x);
    let stage1_sim = Simulator::new(spec, *inner, &cfg)?;
    let (stage1, _) = positions_from(&stage1_sim, x, &root.child("stage-1"), n);
    let k2 = root.child("stage-2");
    let two_stage: Vec<Option<Point>> = stage1
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            if !outer.contains(y) {
                return Some(*y);
            }
            let s = direct_sim.exit_sample(y, &k2, i as u64);
            (!s.censored).then_some(s.exit_position)
        })
        .collect();
    let two_stage: Vec<Point> = two_stage.into_iter().flatten().collect();
    let exits_outer = stage1.iter().filter(|y| !outer.contains(y)).count() as f64 / stage1.len().max(1) as f64;

    let ra: Vec<f64> = direct.iter().map(|p| p.dist(&outer.center)).collect();
    let rb: Vec<f64> = two_stage.iter().map(|p| p.dist(&outer.center)).collect();
    let ks = ks_two_sample(&ra, &rb);
    let ks_allow = ks_allowance(ra.len(), rb.len());
    let (tv, tv_allow) = tv_distance(
        &partition_counts(&direct, outer, spec.dim),
        &partition_counts(&two_stage, outer, spec.dim),
    );
    Ok(CompositionReport {
        n_direct: ra.len(),
        n_two_stage: rb.len(),
        ks,
        ks_allowance: ks_allow,
        ks_pass: ks <= ks_allow,
        tv,
        tv_allowance: tv_allow,
        tv_pass: tv <= tv_allow,
        first_stage_trivial,
        first_stage_exits_outer: exits_outer,
        eps,
    })
}

/// `μ_x^{B(c, r_inner)}({|z - c| ≥ r_outer})` with its Wilson interval.
pub fn tail_mass(
    spec: &KernelSpec,
    center: &Point,
    x: &Point,
    r_inner: f64,
    r_outer: f64,
    config: &SimConfig,
) -> Result<Proportion> {
    if !(r_inner <= r_outer) {
        return domain(format!("tail mass needs r_inner <= r_outer, got {r_inner} > {r_outer}"));
    }
    let ball = Ball::new(*center, r_inner)?;
    let key = config.stream().child("tail-mass");
    let (pos, censored) = exit_positions(spec, x, &ball, config, &key, config.n_paths)?;
    if censored as f64 > 0.01 * config.n_paths as f64 {
        return Err(LabError::Numerical(format!("{censored} paths censored")));
    }
    Ok(Proportion::new(
        pos.iter().filter(|p| p.dist(center) >= r_outer).count(),
        pos.len(),
    ))
}

/// Half-width of the two-sided 99% interval of a proportion estimate.
pub fn binomial_half_width(p: f64, n: usize) -> f64 {
    Z99_TWO_SIDED * (p * (1.0 - p) / n.max(1) as f64).sqrt()
}

/// Single annular sector about `center` covering all directions.
pub fn shell(center: Point, r_lo: f64, r_hi: f64) -> Result<AnnularSector> {
    AnnularSector::new(center, r_lo, r_hi, DirectionCap::FULL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::ScalingProfile;

    fn cauchy() -> KernelSpec {
        let p = ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap();
        KernelSpec::new(Dim::One, p, 1.1, 5.0).unwrap()
    }

    fn unit_ball() -> Ball {
        Ball::new(Point::ORIGIN, 1.0).unwrap()
    }

    #[test]
    fn outside_start_is_a_point_mass() {
        let cfg = SimConfig::default().with_paths(1000);
        let x = Point::on_axis(1.5);
        let mu = estimate_exit_measure(&cauchy(), &x, &unit_ball(), &cfg, HistogramSpec::default()).unwrap();
        assert!(mu.positions.iter().all(|p| *p == x));
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_samples_rejected() {
        let cfg = SimConfig::default().with_paths(10);
        assert!(estimate_exit_measure(&cauchy(), &Point::ORIGIN, &unit_ball(), &cfg, HistogramSpec::default()).is_err());
    }

    #[test]
    fn payoff_algebra() {
        let set = SectorUnion(vec![AnnularSector::new(Point::ORIGIN, 1.0, f64::INFINITY, DirectionCap::positive()).unwrap()]);
        let f = Payoff::indicator(set);
        let g = f.clone().complement();
        let z = Point::on_axis(2.0);
        assert_eq!(f.eval(&z) + g.eval(&z), 1.0);
        assert_eq!(g.sup_norm(), 2.0);
        assert!(f.is_nonnegative() && !g.is_nonnegative());
        let step = Payoff::RadialStep {
            center: Point::ORIGIN,
            edges: vec![1.0, 2.0, 4.0],
            values: vec![0.5, 1.0],
        };
        assert_eq!(step.eval(&Point::on_axis(-3.0)), 1.0);
        assert_eq!(step.eval(&Point::on_axis(5.0)), 0.0);
        let lip = Payoff::RadialLipschitz {
            center: Point::ORIGIN,
            knots: vec![(1.0, 0.0), (2.0, 1.0)],
        };
        assert_eq!(lip.eval(&Point::on_axis(1.5)), 0.5);
        assert_eq!(lip.eval(&Point::on_axis(9.0)), 1.0);
    }

    #[test]
    fn tv_of_identical_counts_is_zero() {
        let (tv, allow) = tv_distance(&[10, 20, 30], &[10, 20, 30]);
        assert_eq!(tv, 0.0);
        assert!(allow > 0.0);
    }

    #[test]
    fn tail_mass_at_equal_radii_is_one() {
        let cfg = SimConfig::default().with_paths(500);
        let p = tail_mass(&cauchy(), &Point::ORIGIN, &Point::ORIGIN, 0.5, 0.5, &cfg).unwrap();
        assert_eq!(p.estimate, 1.0);
    }
}

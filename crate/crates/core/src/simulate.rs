//! Event-driven compound-Poisson simulation of the jump process up to the
//! first exit from a ball, and Monte Carlo checks of the Dynkin and Lévy
//! system formulas.
//!
//! Only jumps longer than a cutoff `ε` are simulated. Between jumps the
//! path rests (or, in the Gaussian-substitute mode, diffuses with the
//! variance of the discarded small jumps).

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::geometry::{AnnularSector, Ball, Dim, Point};
use crate::kernel::{JumpSampler, KernelMode, KernelSpec};
use crate::quadrature::{integrate, GaussLegendre, Tolerance};
use crate::stats::MeanEstimate;
use crate::stream::{PathRng, StreamKey};

/// Jump-length cutoff below which jumps are not simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Cutoff {
    Absolute(f64),
    /// Fraction of the ball radius.
    Relative(f64),
}

impl Cutoff {
    pub fn resolve(&self, radius: f64) -> f64 {
        match *self {
            Cutoff::Absolute(e) => e,
            Cutoff::Relative(f) => f * radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmallJumpMode {
    Drop,
    /// Brownian increments carrying the variance rate of the dropped jumps.
    GaussianSubstitute,
}

/// What to record as the exit position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitRule {
    /// The post-jump state, overshoot included.
    KeepOvershoot,
    /// Radial projection onto the sphere; makes every exit measure
    /// boundary-supported, as for a diffusion. Test toggle only.
    ProjectToBoundary,
}

/// Safety cap on simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum TimeCap {
    Absolute(f64),
    /// `factor / L(radius)`, the natural exit-time scale.
    ExitScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cutoff: Cutoff,
    pub small_jump_mode: SmallJumpMode,
    pub t_max: TimeCap,
    pub master_seed: u64,
    pub n_paths: usize,
    pub exit_rule: ExitRule,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cutoff: Cutoff::Relative(1e-3),
            small_jump_mode: SmallJumpMode::Drop,
            t_max: TimeCap::ExitScale(1e4),
            master_seed: 0,
            n_paths: 10_000,
            exit_rule: ExitRule::KeepOvershoot,
        }
    }
}

impl SimConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_cutoff(mut self, cutoff: Cutoff) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_exit_rule(mut self, rule: ExitRule) -> Self {
        self.exit_rule = rule;
        self
    }

    /// Root stream family of this configuration.
    pub fn stream(&self) -> StreamKey {
        StreamKey::new(self.master_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub path_index: u64,
    pub start: Point,
    pub ball: Ball,
    pub exit_position: Point,
    pub exit_time: f64,
    pub n_jumps: u64,
    pub censored: bool,
}

impl ExitSample {
    pub fn exit_radius(&self) -> f64 {
        self.exit_position.dist(&self.ball.center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStatus {
    Exited,
    /// Stopped by the caller's horizon while still inside.
    Horizon,
    /// Stopped by the safety cap while still inside.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnd {
    pub position: Point,
    pub time: f64,
    pub n_jumps: u64,
    pub status: PathStatus,
}

/// Receives the piecewise-constant path as `(position, holding time)`
/// pieces, in order.
pub trait Observer {
    fn hold(&mut self, position: &Point, duration: f64);
}

impl Observer for () {
    fn hold(&mut self, _: &Point, _: f64) {}
}

/// Exit simulator for one kernel, one ball and one cutoff.
#[derive(Debug, Clone)]
pub struct Simulator {
    sampler: JumpSampler,
    ball: Ball,
    t_max: f64,
    small_jump_mode: SmallJumpMode,
    exit_rule: ExitRule,
    /// Per-coordinate variance rate of the Gaussian substitute.
    gauss_var_rate: f64,
    gauss_dt: f64,
    thinning: bool,
}

impl Simulator {
    pub fn new(spec: &KernelSpec, ball: Ball, config: &SimConfig) -> Result<Self> {
        let eps = config.cutoff.resolve(ball.radius);
        if !(eps > 0.0) {
            return domain(format!("cutoff must be positive, got {eps}"));
        }
        if ball.radius <= eps {
            return Err(LabError::Precondition(format!(
                "ball radius {} does not exceed the cutoff {eps}",
                ball.radius
            )));
        }
        if eps > ball.radius / 100.0 {
            log::warn!(
                "cutoff {eps} exceeds 1% of the ball radius {}; expect visible bias",
                ball.radius
            );
        }
        let sampler = spec.sampler(eps)?;
        let t_max = match config.t_max {
            TimeCap::Absolute(t) => t,
            TimeCap::ExitScale(f) => f / spec.profile.big_l(ball.radius.min(spec.profile.r0))?,
        };
        if !(t_max > 0.0) {
            return domain(format!("time cap must be positive, got {t_max}"));
        }
        let (gauss_var_rate, gauss_dt) = match config.small_jump_mode {
            SmallJumpMode::Drop => (0.0, f64::INFINITY),
            SmallJumpMode::GaussianSubstitute => {
                let v = spec.small_jump_variance(eps)? / spec.dim.get() as f64;
                let step = 0.01 * ball.radius;
                (v, if v > 0.0 { step * step / v } else { f64::INFINITY })
            }
        };
        Ok(Self {
            sampler,
            ball,
            t_max,
            small_jump_mode: config.small_jump_mode,
            exit_rule: config.exit_rule,
            gauss_var_rate,
            gauss_dt,
            thinning: matches!(spec.mode, KernelMode::Perturbed { .. }),
        })
    }

    pub fn ball(&self) -> &Ball {
        &self.ball
    }

    pub fn eps(&self) -> f64 {
        self.sampler.eps()
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn spec(&self) -> &KernelSpec {
        self.sampler.spec()
    }

    fn finish_position(&self, y: Point) -> Point {
        match self.exit_rule {
            ExitRule::KeepOvershoot => y,
            ExitRule::ProjectToBoundary => {
                let v = y.sub(&self.ball.center);
                self.ball.center.add(&v.scale(self.ball.radius / v.norm()))
            }
        }
    }

    /// Runs one path from `start` until it leaves the ball, reaches
    /// `horizon`, or hits the safety cap.
    pub fn run_path<O: Observer>(
        &self,
        start: &Point,
        horizon: f64,
        rng: &mut PathRng,
        obs: &mut O,
    ) -> PathEnd {
        if !self.ball.contains(start) {
            return PathEnd {
                position: *start,
                time: 0.0,
                n_jumps: 0,
                status: PathStatus::Exited,
            };
        }
        let stop = horizon.min(self.t_max);
        let stop_status = if horizon < self.t_max {
            PathStatus::Horizon
        } else {
            PathStatus::Censored
        };
        let rate = self.sampler.rate();
        let dim = self.spec().dim;
        let mut x = *start;
        let mut t = 0.0;
        let mut n_jumps = 0u64;
        loop {
            let e: f64 = Exp1.sample(rng);
            let wait = e / rate;
            let (hold_for, reaches_stop) = if t + wait >= stop {
                (stop - t, true)
            } else {
                (wait, false)
            };
            if self.small_jump_mode == SmallJumpMode::GaussianSubstitute {
                if let Some(end) = self.diffuse(&mut x, &mut t, hold_for, dim, rng, obs, n_jumps) {
                    return end;
                }
            } else {
                obs.hold(&x, hold_for);
                t += hold_for;
            }
            if reaches_stop {
                return PathEnd {
                    position: x,
                    time: stop,
                    n_jumps,
                    status: stop_status,
                };
            }
            if self.thinning {
                let accept = self.spec().state_factor(&x) / self.spec().c0;
                if rng.random::<f64>() >= accept {
                    continue;
                }
            }
            let h = self.sampler.sample_jump(rng);
            n_jumps += 1;
            x = x.add(&h);
            if !self.ball.contains(&x) {
                return PathEnd {
                    position: self.finish_position(x),
                    time: t,
                    n_jumps,
                    status: PathStatus::Exited,
                };
            }
        }
    }

    // Gaussian motion over `duration`, split into short steps; returns an
    // end state if the path leaves the ball on the way.
    #[allow(clippy::too_many_arguments)]
    fn diffuse<O: Observer>(
        &self,
        x: &mut Point,
        t: &mut f64,
        duration: f64,
        dim: Dim,
        rng: &mut PathRng,
        obs: &mut O,
        n_jumps: u64,
    ) -> Option<PathEnd> {
        let steps = (duration / self.gauss_dt).ceil().clamp(1.0, 1e6) as usize;
        let dt = duration / steps as f64;
        let sd = (self.gauss_var_rate * dt).sqrt();
        for _ in 0..steps {
            obs.hold(x, dt);
            *t += dt;
            let mut inc = [0.0; 3];
            for c in inc.iter_mut().take(dim.get()) {
                let z: f64 = StandardNormal.sample(rng);
                *c = sd * z;
            }
            *x = x.add(&Point(inc));
            if !self.ball.contains(x) {
                return Some(PathEnd {
                    position: self.finish_position(*x),
                    time: *t,
                    n_jumps,
                    status: PathStatus::Exited,
                });
            }
        }
        None
    }

    pub fn exit_sample(&self, start: &Point, key: &StreamKey, path_index: u64) -> ExitSample {
        let mut rng = key.path_rng(path_index);
        let end = self.run_path(start, f64::INFINITY, &mut rng, &mut ());
        ExitSample {
            path_index,
            start: *start,
            ball: self.ball,
            exit_position: end.position,
            exit_time: end.time,
            n_jumps: end.n_jumps,
            censored: end.status != PathStatus::Exited,
        }
    }

    /// `n` independent exit samples; path `i` uses stream `i` of `key`, so
    /// the output does not depend on the thread count.
    pub fn exit_samples(&self, start: &Point, key: &StreamKey, n: usize) -> Vec<ExitSample> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.exit_sample(start, key, i))
            .collect()
    }
}

/// One exit sample with the stream family `exit` of the configuration.
pub fn simulate_exit(
    spec: &KernelSpec,
    start: &Point,
    ball: &Ball,
    config: &SimConfig,
    path_index: u64,
) -> Result<ExitSample> {
    let sim = Simulator::new(spec, *ball, config)?;
    Ok(sim.exit_sample(start, &config.stream().child("exit"), path_index))
}

pub fn simulate_batch(
    spec: &KernelSpec,
    start: &Point,
    ball: &Ball,
    config: &SimConfig,
) -> Result<Vec<ExitSample>> {
    let sim = Simulator::new(spec, *ball, config)?;
    Ok(sim.exit_samples(start, &config.stream().child("exit"), config.n_paths))
}

/// Constants bracketing the mean exit time: `[1/(C3 L(r)), C1/L(r)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeBounds {
    pub c1: f64,
    pub c3: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeReport {
    pub estimate: MeanEstimate,
    pub censored_fraction: f64,
    pub valid: bool,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    /// Whether the 99% interval lies inside the bounds.
    pub bounds_check: Option<bool>,
    pub eps: f64,
}

pub fn estimate_exit_time_mean(
    spec: &KernelSpec,
    start: &Point,
    ball: &Ball,
    config: &SimConfig,
    bounds: Option<ExitTimeBounds>,
) -> Result<ExitTimeReport> {
    let sim = Simulator::new(spec, *ball, config)?;
    let samples = sim.exit_samples(start, &config.stream().child("exit-time"), config.n_paths);
    let times: Vec<f64> = samples.iter().map(|s| s.exit_time).collect();
    let censored = samples.iter().filter(|s| s.censored).count() as f64 / samples.len().max(1) as f64;
    let estimate = MeanEstimate::from_values(&times);
    let (lower_bound, upper_bound, bounds_check) = match bounds {
        Some(b) => {
            let l = spec.profile.big_l(ball.radius)?;
            let lo = 1.0 / (b.c3 * l) - b.slack;
            let hi = b.c1 / l + b.slack;
            (Some(lo), Some(hi), Some(estimate.ci.0 >= lo && estimate.ci.1 <= hi))
        }
        None => (None, None, None),
    };
    Ok(ExitTimeReport {
        estimate,
        censored_fraction: censored,
        valid: censored <= 0.01,
        lower_bound,
        upper_bound,
        bounds_check,
        eps: sim.eps(),
    })
}

/// `e^{-1/t}/(e^{-1/t} + e^{-1/(1-t)})`, a `C^∞` step from 0 to 1 on `[0, 1]`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// `ψ(v) = v² - 2` on `[0, 1]`, smoothly flattened to `-0.04` on
/// `[1, 1.4]` and cut off to `0` on `[1.4, 2]`; values stay in `[-2, 0]`.
pub fn psi(v: f64) -> f64 {
    let v = v.abs();
    if v >= 2.0 {
        return 0.0;
    }
    let s = smooth_step((v - 1.0) / 0.4);
    let q = v * v * (1.0 - s) + 1.96 * s;
    let chi = 1.0 - smooth_step((v - 1.4) / 0.6);
    (q - 2.0) * chi
}

/// Radial test functions `f(y) = φ(|y - center| / radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    Constant { value: f64 },
    /// `ψ(|y - center| / radius)`.
    PsiComposite { center: Point, radius: f64 },
    /// `exp(1 - 1/(1 - v²))` for `v < 1`, else 0.
    SmoothBump { center: Point, radius: f64 },
}

impl TestFunction {
    pub fn center(&self) -> Point {
        match *self {
            TestFunction::Constant { .. } => Point::ORIGIN,
            TestFunction::PsiComposite { center, .. } | TestFunction::SmoothBump { center, .. } => {
                center
            }
        }
    }

    /// `φ(ρ)` as a function of the distance to the centre.
    pub fn radial(&self, rho: f64) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::PsiComposite { radius, .. } => psi(rho / radius),
            TestFunction::SmoothBump { radius, .. } => {
                let v = rho / radius;
                if v >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - v * v)).exp()
                }
            }
        }
    }

    pub fn eval(&self, y: &Point) -> f64 {
        self.radial(y.dist(&self.center()))
    }

    /// Radius beyond which `f` vanishes, and the length scale of `f`.
    fn support_and_scale(&self) -> Option<(f64, f64)> {
        match *self {
            TestFunction::Constant { .. } => None,
            TestFunction::PsiComposite { radius, .. } => Some((2.0 * radius, radius)),
            TestFunction::SmoothBump { radius, .. } => Some((radius, radius)),
        }
    }

    /// Radii where `φ` changes regime, used as quadrature breakpoints.
    fn kinks(&self) -> Vec<f64> {
        match *self {
            TestFunction::Constant { .. } => vec![],
            TestFunction::PsiComposite { radius, .. } => vec![radius, 1.4 * radius, 2.0 * radius],
            TestFunction::SmoothBump { radius, .. } => vec![radius],
        }
    }
}

/// Values on a uniform grid with linear interpolation, clamped at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl GridTable {
    pub fn tabulate<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let values = (0..n)
            .map(|i| f(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lo, hi, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = ((x - self.lo) / (self.hi - self.lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
        let i = (s as usize).min(n - 2);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// `A(u) = ∫_{S^{d-1}} (φ(|y + uω|) - φ(|y|)) dω` at `|y| = ρ`.
fn angular_increment(dim: Dim, f: &TestFunction, rho: f64, u: f64) -> Result<f64> {
    let base = f.radial(rho);
    match dim {
        Dim::One => Ok(f.radial((rho + u).abs()) + f.radial((rho - u).abs()) - 2.0 * base),
        Dim::Two | Dim::Three => {
            let g = |c: f64| f.radial((rho * rho + u * u + 2.0 * rho * u * c).max(0.0).sqrt()) - base;
            // breakpoints in c = cos θ where |y + uω| crosses a kink
            let mut breaks: Vec<f64> = f
                .kinks()
                .iter()
                .filter(|_| rho > 0.0)
                .map(|s| (s * s - rho * rho - u * u) / (2.0 * rho * u))
                .filter(|c| *c > -1.0 && *c < 1.0)
                .collect();
            breaks.sort_by(f64::total_cmp);
            let tol = Tolerance::relative(1e-10).with_abs(1e-14);
            if dim == Dim::Three {
                // dω = 2π dc
                Ok(2.0 * std::f64::consts::PI * integrate(g, -1.0, 1.0, &breaks, tol)?.value)
            } else {
                // dω = dθ, two symmetric halves; c = cos θ
                let h = |th: f64| g(th.cos());
                let tb: Vec<f64> = breaks.iter().rev().map(|c| c.acos()).collect();
                Ok(2.0 * integrate(h, 0.0, std::f64::consts::PI, &tb, tol)?.value)
            }
        }
    }
}

/// `Gf(ρ)` and its small-jump part `∫_{|h|<ε} (f(y+h) - f(y)) k(|h|) dh` at
/// `|y - center| = ρ`.
pub fn generator_at(spec: &KernelSpec, f: &TestFunction, rho: f64, eps: f64) -> Result<(f64, f64)> {
    let (support, scale) = match f.support_and_scale() {
        None => return Ok((0.0, 0.0)),
        Some(s) => s,
    };
    let dim = spec.dim;
    let p = &spec.profile;
    // below u0 the increment is quadratic: A(u) ≈ c u²
    let u0 = (1e-3 * scale).min(eps);
    let c = angular_increment(dim, f, rho, u0)? / (u0 * u0);
    let near = c * p.second_moment_integral(u0.min(p.r0))?;
    let upper = rho + support;
    let mut breaks: Vec<f64> = f
        .kinks()
        .iter()
        .flat_map(|s| [(s - rho).abs(), s + rho])
        .chain([eps, p.r0])
        .filter(|b| *b > u0 && *b < upper)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integrand = |u: f64| -> f64 {
        match angular_increment(dim, f, rho, u) {
            Ok(a) => a * spec.radial_density(u),
            Err(_) => f64::NAN,
        }
    };
    let tol = Tolerance::relative(1e-10).with_abs(1e-13);
    let small = near + integrate(integrand, u0, eps, &breaks, tol)?.value;
    let mid = integrate(integrand, eps, upper, &breaks, tol)?.value;
    // beyond `upper` every f(y + h) vanishes
    let far = -f.radial(rho) * spec.radial_tail_mass(upper)?;
    Ok((small + mid + far, small))
}

/// Outcome of a Monte Carlo check of an identity `LHS = RHS`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub lhs: MeanEstimate,
    pub rhs: MeanEstimate,
    /// `mean(LHS - RHS)` over paths.
    pub residual: f64,
    pub std_error: f64,
    pub within_3sigma: bool,
    /// Contribution of jumps shorter than ε to the right side, which the
    /// simulated process does not make; the cutoff bias of the residual.
    pub bias_term: f64,
    pub bias_std_error: f64,
    pub eps: f64,
    pub n: usize,
    pub censored: usize,
}

fn residual_report(diffs: &[(f64, f64, f64)], eps: f64, censored: usize) -> ResidualReport {
    let lhs: Vec<f64> = diffs.iter().map(|d| d.0).collect();
    let rhs: Vec<f64> = diffs.iter().map(|d| d.1).collect();
    let res: Vec<f64> = diffs.iter().map(|d| d.0 - d.1).collect();
    let bias: Vec<f64> = diffs.iter().map(|d| d.2).collect();
    let r = MeanEstimate::from_values(&res);
    let b = MeanEstimate::from_values(&bias);
    ResidualReport {
        lhs: MeanEstimate::from_values(&lhs),
        rhs: MeanEstimate::from_values(&rhs),
        residual: r.mean,
        std_error: r.std_error,
        within_3sigma: r.mean.abs() <= 3.0 * r.std_error || (r.mean == 0.0 && r.std_error == 0.0),
        bias_term: b.mean,
        bias_std_error: b.std_error,
        eps,
        n: diffs.len(),
        censored,
    }
}

struct TableIntegral<'a, F: Fn(&Point) -> (f64, f64)> {
    eval: &'a F,
    main: f64,
    small: f64,
}

impl<F: Fn(&Point) -> (f64, f64)> Observer for TableIntegral<'_, F> {
    fn hold(&mut self, position: &Point, duration: f64) {
        let (m, s) = (self.eval)(position);
        self.main += m * duration;
        self.small += s * duration;
    }
}

const TABLE_POINTS: usize = 1025;

/// Checks `E^x f(X_{τ∧t}) - f(x) = E^x ∫_0^{τ∧t} Gf(X_u) du` where `G` is the
/// full generator (all jump sizes).
pub fn check_dynkin(
    spec: &KernelSpec,
    f: &TestFunction,
    ball: &Ball,
    start: &Point,
    t: f64,
    config: &SimConfig,
) -> Result<ResidualReport> {
    let sim = Simulator::new(spec, *ball, config)?;
    let eps = sim.eps();
    let center = f.center();
    let reach = ball.center.dist(&center) + ball.radius;
    let table = GridTable::tabulate(|rho| Ok(generator_at(spec, f, rho, eps)?.0), 0.0, reach, TABLE_POINTS)?;
    let small = GridTable::tabulate(|rho| Ok(generator_at(spec, f, rho, eps)?.1), 0.0, reach, TABLE_POINTS)?;
    let eval = |y: &Point| {
        let rho = y.dist(&center);
        (table.eval(rho), small.eval(rho))
    };
    let key = config.stream().child("dynkin");
    let f0 = f.eval(start);
    let rows: Vec<(f64, f64, f64, bool)> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.path_rng(i);
            let mut obs = TableIntegral { eval: &eval, main: 0.0, small: 0.0 };
            let end = sim.run_path(start, t, &mut rng, &mut obs);
            (
                f.eval(&end.position) - f0,
                obs.main,
                obs.small,
                end.status == PathStatus::Censored,
            )
        })
        .collect();
    let censored = rows.iter().filter(|r| r.3).count();
    let diffs: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.0, r.1, r.2)).collect();
    Ok(residual_report(&diffs, eps, censored))
}

/// `∫_A k(|z - y|) dz` and its part from `|z - y| ≤ ε`, for `y` inside the ball.
/// In `d = 1` the result depends on the signed coordinate; in `d ≥ 2` only
/// full-sphere annuli are supported and the result depends on `|y - center|`.
fn levy_system_density(spec: &KernelSpec, a: &AnnularSector, y: f64, eps: f64) -> Result<(f64, f64)> {
    let kappa = spec.kappa_d();
    let seg = |lo: f64, hi: f64| -> Result<(f64, f64)> {
        // ∫_lo^hi k(u) du in d = 1, with lo > 0
        if hi <= lo {
            return Ok((0.0, 0.0));
        }
        let full = (spec.radial_tail_mass(lo)? - spec.radial_tail_mass(hi)?) / kappa;
        let small = if lo < eps {
            (spec.radial_tail_mass(lo)? - spec.radial_tail_mass(hi.min(eps))?) / kappa
        } else {
            0.0
        };
        Ok((full, small))
    };
    match spec.dim {
        Dim::One => {
            let mut total = (0.0, 0.0);
            if a.cap.is_full() || a.cap.axis.0[0] > 0.0 {
                let p = seg(a.r_lo - y, a.r_hi - y)?;
                total = (total.0 + p.0, total.1 + p.1);
            }
            if a.cap.is_full() || a.cap.axis.0[0] < 0.0 {
                let p = seg(a.r_lo + y, a.r_hi + y)?;
                total = (total.0 + p.0, total.1 + p.1);
            }
            Ok(total)
        }
        Dim::Two | Dim::Three => {
            if a.r_hi <= a.r_lo {
                return Ok((0.0, 0.0));
            }
            let rho = y;
            let gl = GaussLegendre::new(48);
            let shell = |s: f64| -> f64 {
                // ∫_{S} k(|sω - y|) dω
                let dist = |c: f64| (s * s + rho * rho - 2.0 * s * rho * c).max(0.0).sqrt();
                let ang = if spec.dim == Dim::Three {
                    2.0 * std::f64::consts::PI * gl.integrate(|c| spec.kernel_density(dist(c)), -1.0, 1.0)
                } else {
                    2.0 * gl.integrate(|th: f64| spec.kernel_density(dist(th.cos())), 0.0, std::f64::consts::PI)
                };
                s.powi(spec.dim.get() as i32 - 1) * ang
            };
            let mut breaks = vec![];
            if spec.profile.r0.is_finite() {
                breaks.push(spec.profile.r0 + rho);
            }
            let v = integrate(shell, a.r_lo, a.r_hi, &breaks, Tolerance::relative(1e-9))?.value;
            Ok((v, 0.0))
        }
    }
}

/// Checks `P^x[X_{τ∧t} ∈ A] = E^x ∫_0^{τ∧t} ∫_A k(|z - X_u|) dz du` for an
/// annular sector `A` about the ball's centre lying outside the ball.
pub fn check_levy_system(
    spec: &KernelSpec,
    ball: &Ball,
    a: &AnnularSector,
    start: &Point,
    t: f64,
    config: &SimConfig,
) -> Result<ResidualReport> {
    if a.center != ball.center || a.r_lo < ball.radius {
        return domain("the set A must be an annular sector about the ball's centre outside the ball");
    }
    let sim = Simulator::new(spec, *ball, config)?;
    let eps = sim.eps();
    let r = ball.radius;
    let (lo, hi) = match spec.dim {
        Dim::One => (-r, r),
        _ => {
            if !a.cap.is_full() {
                return domain("in d ≥ 2 only full-sphere annuli are supported");
            }
            if a.r_lo - r <= eps {
                return domain("in d ≥ 2 the set A must keep a distance greater than ε from the ball");
            }
            (0.0, r)
        }
    };
    let main = GridTable::tabulate(|y| Ok(levy_system_density(spec, a, y, eps)?.0), lo, hi, TABLE_POINTS)?;
    let small = GridTable::tabulate(|y| Ok(levy_system_density(spec, a, y, eps)?.1), lo, hi, TABLE_POINTS)?;
    let dim = spec.dim;
    let eval = |y: &Point| {
        let v = y.sub(&ball.center);
        let s = if dim == Dim::One { v.0[0] } else { v.norm() };
        (main.eval(s), small.eval(s))
    };
    let key = config.stream().child("levy-system");
    let rows: Vec<(f64, f64, f64, bool)> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.path_rng(i);
            let mut obs = TableIntegral { eval: &eval, main: 0.0, small: 0.0 };
            let end = sim.run_path(start, t, &mut rng, &mut obs);
            let hit = end.status == PathStatus::Exited && a.contains(&end.position);
            (
                if hit { 1.0 } else { 0.0 },
                obs.main,
                obs.small,
                end.status == PathStatus::Censored,
            )
        })
        .collect();
    let censored = rows.iter().filter(|r| r.3).count();
    let diffs: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.0, r.1, r.2)).collect();
    Ok(residual_report(&diffs, eps, censored))
}

//! Hölder bounds in the intrinsic metric `ρ0(x) = 1/L(|x - x0|)`, the
//! oscillation decay `osc_n ≤ 3 b^{-n}`, and an empirical exponent fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ConstantLedger;
use crate::error::{domain, Result};
use crate::exit::Payoff;
use crate::geometry::{ring_grid, Ball, Point};
use crate::kernel::KernelSpec;
use crate::scaling::ScalingProfile;
use crate::simulate::{SimConfig, Simulator};
use crate::stats::{least_squares, MeanEstimate};
use crate::stream::StreamKey;

/// `C M (L(|x - x0|)/L(r))^{-β}`, zero at `x = x0`.
pub fn theoretical_bound(
    profile: &ScalingProfile,
    ledger: &ConstantLedger,
    x: &Point,
    x0: &Point,
    r: f64,
    m: f64,
) -> Result<f64> {
    let dist = x.dist(x0);
    if !(r > 0.0 && r < profile.r) || dist >= r {
        return domain(format!("need |x - x0| < r < R, got |x - x0| = {dist}, r = {r}"));
    }
    if dist == 0.0 {
        return Ok(0.0);
    }
    let s3 = &ledger.stage3;
    Ok(s3.big_c * m * (profile.big_l(dist)? / profile.big_l(r)?).powf(-s3.beta))
}

/// `c1 C M L(r)^β L(|x - y|)^{-β}` for `x, y ∈ B(x0, r/3)`.
#[allow(clippy::too_many_arguments)]
pub fn two_point_bound(
    profile: &ScalingProfile,
    ledger: &ConstantLedger,
    c1: f64,
    x0: &Point,
    x: &Point,
    y: &Point,
    r: f64,
    m: f64,
) -> Result<f64> {
    if x.dist(x0) >= r / 3.0 || y.dist(x0) >= r / 3.0 {
        return domain("both points must lie in B(x0, r/3)");
    }
    if !(r > 0.0 && r < profile.r) {
        return domain(format!("need 0 < r < R, got {r}"));
    }
    let dist = x.dist(y);
    if dist == 0.0 {
        return Ok(0.0);
    }
    let s3 = &ledger.stage3;
    Ok(c1 * s3.big_c * m * profile.big_l(r)?.powf(s3.beta) * profile.big_l(dist)?.powf(-s3.beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelVerdict {
    Pass,
    Fail,
    /// Monte Carlo noise exceeds the bound itself.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationLevel {
    pub n: u32,
    pub radius: f64,
    pub sup: f64,
    pub inf: f64,
    #[serde(rename = "M_n")]
    pub m_n: f64,
    pub osc: f64,
    pub bound: f64,
    /// Three combined standard errors of `sup - inf`.
    pub noise: f64,
    pub verdict: LevelVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationTrace {
    pub center: Point,
    pub r: f64,
    pub b: f64,
    pub alpha: f64,
    pub sup_norm: f64,
    pub n_samples: usize,
    pub levels: Vec<OscillationLevel>,
}

impl OscillationTrace {
    /// No level fails (inconclusive levels are allowed).
    pub fn passed(&self) -> bool {
        self.levels.iter().all(|l| l.verdict != LevelVerdict::Fail)
    }
}

/// `f(X_τ)` per path, `None` for censored paths.
fn payoff_samples(sim: &Simulator, x: &Point, key: &StreamKey, n: usize, f: &Payoff) -> Vec<Option<f64>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = sim.exit_sample(x, key, i);
            (!s.censored).then(|| f.eval(&s.exit_position))
        })
        .collect()
}

fn mean_of(v: &[Option<f64>]) -> MeanEstimate {
    let vals: Vec<f64> = v.iter().flatten().copied().collect();
    MeanEstimate::from_values(&vals)
}

/// Number of grid points per level: 15 in `d = 1`, 16 otherwise.
pub fn grid_size(spec: &KernelSpec) -> usize {
    if spec.dim.get() == 1 {
        15
    } else {
        16
    }
}

/// Estimates `sup - inf` of `h(x) = ∫ f dμ_x^{B(center, r)}` over grids in
/// the nested balls `B_n = U_{α^n r}`, `n = 0..=n_max`, with common random
/// numbers across grid points.
pub fn verify_oscillation(
    spec: &KernelSpec,
    f: &Payoff,
    center: &Point,
    r: f64,
    ledger: &ConstantLedger,
    n_max: u32,
    config: &SimConfig,
) -> Result<OscillationTrace> {
    if n_max > 8 {
        return domain(format!("oscillation levels are capped at 8, got {n_max}"));
    }
    f.validate()?;
    let m = f.sup_norm();
    if !(m > 0.0) {
        return domain("payoff must have a positive sup-norm bound");
    }
    let ball = Ball::new(*center, r)?;
    let sim = Simulator::new(spec, ball, config)?;
    let key = config.stream().child("oscillation");
    let alpha = ledger.stage3.alpha_final;
    let b = ledger.stage3.b;
    let mut levels = Vec::new();
    for n in 0..=n_max {
        let bound = 3.0 * b.powi(-(n as i32));
        let radius = match spec.profile.intrinsic_radius(r, alpha.powi(n as i32)) {
            Ok(rad) if rad > 0.0 => rad,
            _ => {
                levels.push(OscillationLevel {
                    n,
                    radius: 0.0,
                    sup: f64::NAN,
                    inf: f64::NAN,
                    m_n: f64::NAN,
                    osc: f64::NAN,
                    bound,
                    noise: f64::NAN,
                    verdict: LevelVerdict::Inconclusive,
                });
                continue;
            }
        };
        let grid = ring_grid(*center, radius, spec.dim, grid_size(spec));
        let est: Vec<MeanEstimate> = grid
            .iter()
            .map(|x| mean_of(&payoff_samples(&sim, x, &key, config.n_paths, f)))
            .collect();
        let (mut hi, mut lo) = (0usize, 0usize);
        for (i, e) in est.iter().enumerate() {
            if e.mean > est[hi].mean {
                hi = i;
            }
            if e.mean < est[lo].mean {
                lo = i;
            }
        }
        let sup = est[hi].mean / m;
        let inf = est[lo].mean / m;
        let noise = 3.0 * (est[hi].std_error.powi(2) + est[lo].std_error.powi(2)).sqrt() / m;
        let osc = sup - inf;
        let verdict = if noise >= bound {
            LevelVerdict::Inconclusive
        } else if osc <= bound + noise {
            LevelVerdict::Pass
        } else {
            LevelVerdict::Fail
        };
        levels.push(OscillationLevel {
            n,
            radius,
            sup,
            inf,
            m_n: 0.5 * (sup + inf),
            osc,
            bound,
            noise,
            verdict,
        });
    }
    Ok(OscillationTrace {
        center: *center,
        r,
        b,
        alpha,
        sup_norm: m,
        n_samples: config.n_paths,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub available: bool,
    pub beta: f64,
    pub beta_std_error: f64,
    pub intercept: f64,
    pub n_used: usize,
    pub reason: Option<String>,
}

/// Least-squares slope of `ln|Δh|` against `ln ρ0` over the points with
/// `|Δh| > floor`; needs at least five such points.
pub fn fit_empirical_beta(points: &[(f64, f64)], floor: f64) -> BetaFit {
    let used: Vec<&(f64, f64)> = points
        .iter()
        .filter(|(rho, d)| *d > floor && *d > 0.0 && *rho > 0.0)
        .collect();
    let unavailable = |reason: String| BetaFit {
        available: false,
        beta: f64::NAN,
        beta_std_error: f64::NAN,
        intercept: f64::NAN,
        n_used: used.len(),
        reason: Some(reason),
    };
    if used.len() < 5 {
        return unavailable(format!("only {} points above the noise floor", used.len()));
    }
    let xs: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    match least_squares(&xs, &ys) {
        Some(fit) => BetaFit {
            available: true,
            beta: fit.slope,
            beta_std_error: fit.slope_std_error,
            intercept: fit.intercept,
            n_used: used.len(),
            reason: None,
        },
        None => unavailable("degenerate abscissae".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderPoint {
    pub x: Point,
    pub distance: f64,
    /// `1/L(|x - x0|)`.
    pub rho0: f64,
    pub h_x: f64,
    pub h_x0: f64,
    /// `|h(x) - h(x0)|` from paired paths.
    pub delta: f64,
    pub std_error: f64,
    pub bound: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub x0: Point,
    pub r: f64,
    pub beta_ledger: f64,
    pub points: Vec<HolderPoint>,
    pub fit: BetaFit,
    pub all_within: bool,
    /// `β̂ ≥ β - 2·stderr`; `None` when no fit is available.
    pub beta_check: Option<bool>,
}

/// Measures `|h(x) - h(x0)|` at `x0 ± distance·e1` with paired (common
/// random number) paths and compares with the theoretical bound.
pub fn measure_holder(
    spec: &KernelSpec,
    f: &Payoff,
    x0: &Point,
    r: f64,
    ledger: &ConstantLedger,
    distances: &[f64],
    config: &SimConfig,
) -> Result<HolderReport> {
    f.validate()?;
    let m = f.sup_norm();
    let ball = Ball::new(*x0, r)?;
    let sim = Simulator::new(spec, ball, config)?;
    let key = config.stream().child("holder");
    let base = payoff_samples(&sim, x0, &key, config.n_paths, f);
    let h_x0 = mean_of(&base).mean;
    let mut points = Vec::new();
    for &dist in distances {
        for sign in [1.0, -1.0] {
            let x = x0.add(&Point::on_axis(sign * dist));
            let vals = payoff_samples(&sim, &x, &key, config.n_paths, f);
            let diffs: Vec<f64> = vals
                .iter()
                .zip(&base)
                .filter_map(|(a, b)| Some(a.as_ref()? - b.as_ref()?))
                .collect();
            let d = MeanEstimate::from_values(&diffs);
            let bound = theoretical_bound(&spec.profile, ledger, &x, x0, r, m)?;
            points.push(HolderPoint {
                x,
                distance: dist,
                rho0: 1.0 / spec.profile.big_l(dist)?,
                h_x: mean_of(&vals).mean,
                h_x0,
                delta: d.mean.abs(),
                std_error: d.std_error,
                bound,
                within: d.mean.abs() <= bound + 3.0 * d.std_error,
            });
        }
    }
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.delta > 3.0 * p.std_error)
        .map(|p| (p.rho0, p.delta))
        .collect();
    let fit = fit_empirical_beta(&fit_points, 0.0);
    let beta_ledger = ledger.stage3.beta;
    let beta_check = fit
        .available
        .then_some(fit.beta >= beta_ledger - 2.0 * fit.beta_std_error);
    Ok(HolderReport {
        x0: *x0,
        r,
        beta_ledger,
        all_within: points.iter().all(|p| p.within),
        points,
        fit,
        beta_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dim;
    use crate::pipeline::LedgerInputs;

    fn ledger() -> ConstantLedger {
        ConstantLedger::derive(LedgerInputs::new(Dim::One, 1.1, 2.0, 1.1, 12.5, 5.0).unwrap()).unwrap()
    }

    #[test]
    fn bound_examples() {
        let p = ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap();
        let l = ledger();
        let x0 = Point::ORIGIN;
        assert_eq!(theoretical_bound(&p, &l, &x0, &x0, 1.0, 1.0).unwrap(), 0.0);
        let x = Point::on_axis(0.1);
        let b = theoretical_bound(&p, &l, &x, &x0, 1.0, 1.0).unwrap();
        let expect = l.stage3.big_c * 0.1f64.powf(l.stage3.beta);
        assert!((b - expect).abs() < 1e-12 * expect);
        assert!(theoretical_bound(&p, &l, &Point::on_axis(1.0), &x0, 1.0, 1.0).is_err());
    }

    #[test]
    fn two_point_examples() {
        let p = ScalingProfile::stable(1.0, f64::INFINITY, 2.0).unwrap();
        let l = ledger();
        let (x, y) = (Point::on_axis(0.05), Point::on_axis(-0.05));
        let a = two_point_bound(&p, &l, 2.0, &Point::ORIGIN, &x, &y, 1.0, 1.0).unwrap();
        let b = two_point_bound(&p, &l, 2.0, &Point::ORIGIN, &y, &x, 1.0, 1.0).unwrap();
        assert_eq!(a, b);
        let expect = 2.0 * l.stage3.big_c * 0.1f64.powf(l.stage3.beta);
        assert!((a - expect).abs() < 1e-12 * expect);
        assert_eq!(two_point_bound(&p, &l, 2.0, &Point::ORIGIN, &x, &x, 1.0, 1.0).unwrap(), 0.0);
        assert!(two_point_bound(&p, &l, 2.0, &Point::ORIGIN, &Point::on_axis(0.5), &x, 1.0, 1.0).is_err());
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let pts: Vec<(f64, f64)> = (1..10).map(|i| {
            let r = 2f64.powi(-i);
            (r, 3.0 * r.powf(0.5))
        }).collect();
        let f = fit_empirical_beta(&pts, 0.0);
        assert!(f.available);
        assert!((f.beta - 0.5).abs() < 1e-12);
        let none = fit_empirical_beta(&pts, 10.0);
        assert!(!none.available);
    }
}

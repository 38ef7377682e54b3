//! Small statistical helpers: confidence intervals, two-sample KS and
//! ordinary least squares.

use serde::{Deserialize, Serialize};

/// Two-sided 99% normal quantile.
pub const Z99_TWO_SIDED: f64 = 2.575_829_303_548_901;
/// One-sided 99% normal quantile.
pub const Z99_ONE_SIDED: f64 = 2.326_347_874_040_841;

/// Sample mean with its standard error and a two-sided 99% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
    pub n: usize,
}

impl MeanEstimate {
    /// Summation runs in slice order, so results do not depend on how the
    /// values were produced.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                ci: (f64::NAN, f64::NAN),
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std_error = (var / n as f64).sqrt();
        Self {
            mean,
            std_error,
            ci: (mean - Z99_TWO_SIDED * std_error, mean + Z99_TWO_SIDED * std_error),
            n,
        }
    }
}

/// Binomial proportion with Wilson score bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub estimate: f64,
    pub std_error: f64,
    /// Two-sided 99% Wilson interval.
    pub ci: (f64, f64),
    /// One-sided 99% Wilson lower bound.
    pub lower: f64,
    /// One-sided 99% Wilson upper bound.
    pub upper: f64,
    pub successes: usize,
    pub n: usize,
}

fn wilson(p: f64, n: f64, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

impl Proportion {
    pub fn new(successes: usize, n: usize) -> Self {
        if n == 0 {
            return Self {
                estimate: f64::NAN,
                std_error: f64::NAN,
                ci: (0.0, 1.0),
                lower: 0.0,
                upper: 1.0,
                successes,
                n,
            };
        }
        let nf = n as f64;
        let p = successes as f64 / nf;
        let (lower, upper) = wilson(p, nf, Z99_ONE_SIDED);
        Self {
            estimate: p,
            std_error: (p * (1.0 - p) / nf).sqrt(),
            ci: wilson(p, nf, Z99_TWO_SIDED),
            lower,
            upper,
            successes,
            n,
        }
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Limiting Kolmogorov distribution `P[sup|B| ≤ x]`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 0.3 {
        // alternative series converges faster for small x
        let c = (2.0 * std::f64::consts::PI).sqrt() / x;
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        let mut s = 0.0;
        for k in 0..20 {
            s += q.powi((2 * k + 1) * (2 * k + 1));
        }
        return c * s;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    1.0 - 2.0 * s
}

/// Quantile of the limiting Kolmogorov distribution.
pub fn kolmogorov_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Coverage of a two-sided 3σ normal band.
pub const THREE_SIGMA_COVERAGE: f64 = 0.997_300_203_936_739_8;

/// Two-sample KS allowance at the 3σ-equivalent level.
pub fn ks_allowance(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    kolmogorov_quantile(THREE_SIGMA_COVERAGE) * ((n + m) / (n * m)).sqrt()
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub intercept_std_error: f64,
    pub n: usize,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_std_error, intercept_std_error) = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let e = y - intercept - slope * x;
                e * e
            })
            .sum();
        let s2 = rss / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Some(LineFit {
        slope,
        intercept,
        slope_std_error,
        intercept_std_error,
        n,
    })
}

//! Points, balls and the annular-sector sets that measures are evaluated on.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Ambient dimension. Only `d ∈ {1, 2, 3}` is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dim {
    One,
    Two,
    Three,
}

impl Dim {
    pub fn new(d: u8) -> Result<Self> {
        match d {
            1 => Ok(Dim::One),
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            _ => domain(format!("dimension {d} unsupported (1, 2 or 3)")),
        }
    }

    pub fn get(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Surface measure of the unit sphere `∂B_1` (counting measure when `d = 1`).
    pub fn kappa(self) -> f64 {
        match self {
            Dim::One => 2.0,
            Dim::Two => 2.0 * PI,
            Dim::Three => 4.0 * PI,
        }
    }
}

impl TryFrom<u8> for Dim {
    type Error = String;
    fn try_from(d: u8) -> std::result::Result<Self, Self::Error> {
        Dim::new(d).map_err(|e| e.to_string())
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.get() as u8
    }
}

/// A point of `R^d`, `d ≤ 3`; unused coordinates are kept at zero so norms
/// are dimension-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub const ORIGIN: Point = Point([0.0; 3]);

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > 3 {
            return domain(format!("point needs 1..=3 coordinates, got {}", coords.len()));
        }
        let mut p = [0.0; 3];
        p[..coords.len()].copy_from_slice(coords);
        Ok(Point(p))
    }

    pub fn on_axis(x: f64) -> Self {
        Point([x, 0.0, 0.0])
    }

    pub fn norm(&self) -> f64 {
        let [a, b, c] = self.0;
        (a * a + b * b + c * c).sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.sub(other).norm()
    }

    pub fn add(&self, other: &Point) -> Point {
        Point([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
        ])
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
        ])
    }

    pub fn scale(&self, s: f64) -> Point {
        Point([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn coords(&self, dim: Dim) -> &[f64] {
        &self.0[..dim.get()]
    }
}

/// Open Euclidean ball `B(center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return domain(format!("ball radius must be finite and positive, got {radius}"));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.center.dist(x) < self.radius
    }

    /// Concentric ball with another radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Ball::new(self.center, radius)
    }
}

/// Set of directions `{ω : ω·axis ≥ cos(half_angle)}`; the full sphere when
/// `half_angle ≥ π`. In `d = 1` a cap is one of the two signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionCap {
    pub axis: Point,
    pub half_angle: f64,
}

impl DirectionCap {
    pub const FULL: DirectionCap = DirectionCap {
        axis: Point([1.0, 0.0, 0.0]),
        half_angle: PI,
    };

    pub fn positive() -> Self {
        DirectionCap {
            axis: Point([1.0, 0.0, 0.0]),
            half_angle: 0.5 * PI,
        }
    }

    pub fn negative() -> Self {
        DirectionCap {
            axis: Point([-1.0, 0.0, 0.0]),
            half_angle: 0.5 * PI,
        }
    }

    pub fn is_full(&self) -> bool {
        self.half_angle >= PI
    }

    /// Whether the direction of `v` (nonzero) lies in the cap.
    pub fn contains_direction(&self, v: &Point) -> bool {
        if self.is_full() {
            return true;
        }
        let n = v.norm();
        if n == 0.0 {
            return false;
        }
        let a = self.axis.norm();
        v.dot(&self.axis) / (n * a) >= self.half_angle.cos() - 1e-15
    }
}

/// `{z : r_lo ≤ |z - center| < r_hi, (z - center) ∈ cap}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnularSector {
    pub center: Point,
    pub r_lo: f64,
    pub r_hi: f64,
    pub cap: DirectionCap,
}

impl AnnularSector {
    pub fn new(center: Point, r_lo: f64, r_hi: f64, cap: DirectionCap) -> Result<Self> {
        if !(r_lo >= 0.0) || !(r_hi >= r_lo) {
            return domain(format!("annular sector needs 0 <= r_lo <= r_hi, got [{r_lo}, {r_hi})"));
        }
        Ok(Self {
            center,
            r_lo,
            r_hi,
            cap,
        })
    }

    pub fn contains(&self, z: &Point) -> bool {
        let v = z.sub(&self.center);
        let r = v.norm();
        r >= self.r_lo && r < self.r_hi && self.cap.contains_direction(&v)
    }
}

/// Finite union of annular sectors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SectorUnion(pub Vec<AnnularSector>);

impl SectorUnion {
    pub fn contains(&self, z: &Point) -> bool {
        self.0.iter().any(|s| s.contains(z))
    }
}

/// Annulus `S = V_s \ V_r` about a centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub center: Point,
    pub r_inner: f64,
    pub r_outer: f64,
}

impl AnnulusSpec {
    pub fn new(center: Point, r_inner: f64, r_outer: f64) -> Result<Self> {
        if !(r_inner > 0.0 && r_outer > r_inner) {
            return domain(format!("annulus needs 0 < r_inner < r_outer, got ({r_inner}, {r_outer})"));
        }
        Ok(Self {
            center,
            r_inner,
            r_outer,
        })
    }
}

/// Evaluation points inside a ball: the centre plus a ring at half the
/// radius. In `d = 1` the "ring" is replaced by symmetric pairs spread over
/// `[-radius/2, radius/2]`.
pub fn ring_grid(center: Point, radius: f64, dim: Dim, n_points: usize) -> Vec<Point> {
    let mut pts = vec![center];
    if n_points <= 1 {
        return pts;
    }
    let half = 0.5 * radius;
    match dim {
        Dim::One => {
            let pairs = (n_points - 1) / 2;
            for j in 1..=pairs {
                let x = half * j as f64 / pairs as f64;
                pts.push(center.add(&Point::on_axis(x)));
                pts.push(center.add(&Point::on_axis(-x)));
            }
        }
        Dim::Two => {
            let m = n_points - 1;
            for j in 0..m {
                let th = 2.0 * PI * j as f64 / m as f64;
                pts.push(center.add(&Point([half * th.cos(), half * th.sin(), 0.0])));
            }
        }
        Dim::Three => {
            // Fibonacci sphere
            let m = n_points - 1;
            let golden = PI * (3.0 - 5f64.sqrt());
            for j in 0..m {
                let z = 1.0 - 2.0 * (j as f64 + 0.5) / m as f64;
                let rho = (1.0 - z * z).sqrt();
                let th = golden * j as f64;
                pts.push(center.add(&Point([
                    half * rho * th.cos(),
                    half * rho * th.sin(),
                    half * z,
                ])));
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_values() {
        assert_eq!(Dim::One.kappa(), 2.0);
        assert_eq!(Dim::Two.kappa(), 2.0 * PI);
        assert_eq!(Dim::Three.kappa(), 4.0 * PI);
        assert!(Dim::new(4).is_err());
    }

    #[test]
    fn ball_is_open() {
        let b = Ball::new(Point::ORIGIN, 1.0).unwrap();
        assert!(b.contains(&Point::on_axis(0.999)));
        assert!(!b.contains(&Point::on_axis(1.0)));
        assert!(!b.contains(&Point::on_axis(-1.0)));
        assert!(Ball::new(Point::ORIGIN, 0.0).is_err());
    }

    #[test]
    fn sectors_in_one_dimension() {
        let s = AnnularSector::new(Point::ORIGIN, 1.0, 2.0, DirectionCap::positive()).unwrap();
        assert!(s.contains(&Point::on_axis(1.5)));
        assert!(!s.contains(&Point::on_axis(-1.5)));
        assert!(!s.contains(&Point::on_axis(2.0)));
        let full = AnnularSector::new(Point::ORIGIN, 1.0, 2.0, DirectionCap::FULL).unwrap();
        assert!(full.contains(&Point::on_axis(-1.0)));
    }

    #[test]
    fn grids_stay_inside() {
        for dim in [Dim::One, Dim::Two, Dim::Three] {
            let g = ring_grid(Point::ORIGIN, 1.0, dim, 16);
            assert!(g.len() >= 15);
            assert!(g.iter().all(|p| p.norm() <= 0.5 + 1e-12));
            assert_eq!(g[0], Point::ORIGIN);
        }
    }
}

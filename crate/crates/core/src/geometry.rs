use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of R^n for n ∈ {1, 2}; one-dimensional points keep the second
/// coordinate at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 2]);

impl Point {
    pub const ORIGIN: Point = Point([0.0, 0.0]);

    pub const fn d1(x: f64) -> Self {
        Point([x, 0.0])
    }

    pub const fn d2(x: f64, y: f64) -> Self {
        Point([x, y])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn add(self, o: Point) -> Point {
        Point([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }

    pub fn sub(self, o: Point) -> Point {
        Point([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }

    pub fn scale(self, s: f64) -> Point {
        Point([self.0[0] * s, self.0[1] * s])
    }

    pub fn dot(self, o: Point) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1]
    }

    pub fn norm(self) -> f64 {
        self.0[0].hypot(self.0[1])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

/// Lebesgue volume of the unit ball, γₙ.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => f64::NAN,
    }
}

/// Volume of `Δ(x, r)` in dimension `n`.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    unit_ball_volume(n) * r.powi(n as i32)
}

/// The ball `Δ(x, r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallQuery {
    pub center: Point,
    pub radius: f64,
}

impl BallQuery {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::arg("radius", format!("must be positive and finite, got {radius}")));
        }
        if !center.is_finite() {
            return Err(Error::arg("center", "must be finite"));
        }
        Ok(Self { center, radius })
    }

    pub fn d1(x: f64, r: f64) -> Result<Self> {
        Self::new(Point::d1(x), r)
    }

    pub fn dilate(&self, factor: f64) -> Self {
        Self {
            center: self.center,
            radius: self.radius * factor,
        }
    }
}

/// Axis-aligned box of centres; in one dimension only the first
/// coordinate is used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Region {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            lo: [lo, 0.0],
            hi: [hi, 0.0],
        }
    }

    pub fn square(lo: f64, hi: f64) -> Self {
        Self {
            lo: [lo, lo],
            hi: [hi, hi],
        }
    }

    /// Lattice of `count` centres (`count` per axis in one dimension; the
    /// nearest square lattice in two).
    pub fn lattice(&self, n: usize, count: usize) -> Vec<Point> {
        let count = count.max(1);
        let axis = |lo: f64, hi: f64, m: usize| -> Vec<f64> {
            if m == 1 || lo == hi {
                vec![0.5 * (lo + hi)]
            } else {
                (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
            }
        };
        match n {
            1 => axis(self.lo[0], self.hi[0], count).into_iter().map(Point::d1).collect(),
            _ => {
                let m = (count as f64).sqrt().ceil() as usize;
                let xs = axis(self.lo[0], self.hi[0], m);
                let ys = axis(self.lo[1], self.hi[1], m);
                ys.iter()
                    .flat_map(|&y| xs.iter().map(move |&x| Point::d2(x, y)))
                    .collect()
            }
        }
    }
}

/// Closed range of radii sampled log-uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRange {
    pub min: f64,
    pub max: f64,
}

impl ScaleRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && max >= min && max.is_finite()) {
            return Err(Error::arg("scale_range", format!("need 0 < min <= max, got ({min}, {max})")));
        }
        Ok(Self { min, max })
    }

    pub fn log_spaced(&self, count: usize) -> Vec<f64> {
        let count = count.max(1);
        if count == 1 || self.min == self.max {
            return vec![(self.min * self.max).sqrt()];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        (0..count)
            .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
            .collect()
    }
}

/// Counts for sup-estimates over lattice centres × log-spaced radii.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub centers: usize,
    pub radii: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            centers: 64,
            radii: 32,
        }
    }
}

impl Sampling {
    pub fn new(centers: usize, radii: usize) -> Self {
        Self { centers, radii }
    }

    pub fn balls(&self, n: usize, region: &Region, scales: &ScaleRange) -> Vec<BallQuery> {
        let centres = region.lattice(n, self.centers);
        let radii = scales.log_spaced(self.radii);
        centres
            .iter()
            .flat_map(|&c| radii.iter().map(move |&r| BallQuery { center: c, radius: r }))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_requires_positive_radius() {
        assert!(BallQuery::d1(0.0, 0.0).is_err());
        assert!(BallQuery::d1(0.0, -1.0).is_err());
        assert!(BallQuery::d1(0.0, f64::NAN).is_err());
        assert!(BallQuery::d1(0.0, 1.0).is_ok());
    }

    #[test]
    fn log_spacing_hits_endpoints() {
        let r = ScaleRange::new(0.5, 8.0).unwrap().log_spaced(5);
        assert_eq!(r.len(), 5);
        assert!((r[0] - 0.5).abs() < 1e-15);
        assert!((r[4] - 8.0).abs() < 1e-12);
        assert!((r[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_sizes() {
        assert_eq!(Region::interval(-1.0, 1.0).lattice(1, 7).len(), 7);
        assert_eq!(Region::square(-1.0, 1.0).lattice(2, 9).len(), 9);
        assert_eq!(Region::square(-1.0, 1.0).lattice(2, 10).len(), 16);
    }
}

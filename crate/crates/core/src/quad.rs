//! Adaptive Gauss–Kronrod quadrature for vector-valued integrands.
//!
//! Every integral in the crate funnels through [`integrate`]: a global
//! adaptive bisection driven by the 7/15-point Gauss–Kronrod pair, with
//! caller-supplied breakpoints at known kinks or singularities. Integrands
//! return a fixed-size array so that a heat value and its gradient are
//! produced by one pass over the same nodes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::Point;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5 and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Stopping rule: the summed error estimate must fall below
/// `max(abs, rel * |value|_inf)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_intervals: 4000,
        }
    }

    pub const fn with_max_intervals(mut self, max_intervals: usize) -> Self {
        self.max_intervals = max_intervals;
        self
    }

    /// Tolerance for an integral nested inside another one.
    pub fn inner(self) -> Self {
        Self {
            abs: self.abs * 1e-2,
            rel: self.rel * 1e-2,
            max_intervals: self.max_intervals,
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value)
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-13, 1e-10)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<const K: usize> {
    pub value: [f64; K],
    pub error: f64,
    pub evaluations: usize,
}

impl<const K: usize> Estimate<K> {
    fn zero() -> Self {
        Self {
            value: [0.0; K],
            error: 0.0,
            evaluations: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Panel<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: f64,
}

impl<const K: usize> PartialEq for Panel<K> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl<const K: usize> Eq for Panel<K> {}

impl<const K: usize> PartialOrd for Panel<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const K: usize> Ord for Panel<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<const K: usize, F>(f: &F, a: f64, b: f64) -> Result<Panel<K>>
where
    F: Fn(f64) -> Result<[f64; K]>,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut gauss = [0.0; K];
    let mut kron = [0.0; K];
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        if x == 0.0 {
            let fc = f(centre)?;
            for k in 0..K {
                kron[k] += wk * fc[k];
                gauss[k] += WG[3] * fc[k];
            }
            continue;
        }
        let dx = half * x;
        let f1 = f(centre - dx)?;
        let f2 = f(centre + dx)?;
        for k in 0..K {
            let s = f1[k] + f2[k];
            kron[k] += wk * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut error = 0.0_f64;
    let mut value = [0.0; K];
    for k in 0..K {
        value[k] = kron[k] * half;
        let e = ((kron[k] - gauss[k]) * half).abs();
        error = error.max(e);
    }
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadrature panel"));
    }
    Ok(Panel { a, b, value, error })
}

fn sup_norm<const K: usize>(v: &[f64; K]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Integrates `f` over `[a, b]`, splitting first at every breakpoint strictly
/// inside the interval.
pub fn integrate<const K: usize, F>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate<K>>
where
    F: Fn(f64) -> Result<[f64; K]>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::arg("bounds", "integration bounds must be finite"));
    }
    if a == b {
        return Ok(Estimate::zero());
    }
    if a > b {
        let mut est = integrate(f, b, a, breaks, tol)?;
        for v in est.value.iter_mut() {
            *v = -*v;
        }
        return Ok(est);
    }

    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b && x.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel<K>> = Vec::new();
    let mut lo = a;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        heap.push(kronrod(&f, lo, hi)?);
        lo = hi;
    }
    let mut evaluations = 15 * heap.len();

    loop {
        let mut value = [0.0; K];
        let mut error = 0.0;
        for p in heap.iter().chain(frozen.iter()) {
            for k in 0..K {
                value[k] += p.value[k];
            }
            error += p.error;
        }
        let target = tol.target(sup_norm(&value));
        if error <= target {
            return Ok(Estimate {
                value,
                error,
                evaluations,
            });
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => {
                return Err(Error::ToleranceNotMet {
                    estimate: value[0],
                    error,
                    requested: target,
                })
            }
        };
        if heap.len() + frozen.len() >= tol.max_intervals {
            heap.push(worst);
            return Err(Error::ToleranceNotMet {
                estimate: value[0],
                error,
                requested: target,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval is at floating-point resolution; keep its estimate.
            frozen.push(worst);
            continue;
        }
        heap.push(kronrod(&f, worst.a, mid)?);
        heap.push(kronrod(&f, mid, worst.b)?);
        evaluations += 30;
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(f: F, a: f64, b: f64, breaks: &[f64], tol: Tolerance) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let est = integrate(|x| Ok([f(x)?]), a, b, breaks, tol)?;
    Ok((est.value[0], est.error))
}

/// Integrates `f(y)` over the disc of `radius` about `centre` in polar
/// coordinates. Radial breakpoints are given relative to the centre;
/// `singular` points get both a radial and an angular breakpoint.
pub fn disc_integral<const K: usize, F>(
    centre: Point,
    radius: f64,
    singular: &[Point],
    radial_breaks: &[f64],
    f: F,
    tol: Tolerance,
) -> Result<Estimate<K>>
where
    F: Fn(Point) -> Result<[f64; K]>,
{
    use std::f64::consts::PI;
    let mut rbreaks: Vec<f64> = radial_breaks.to_vec();
    let mut angles: Vec<f64> = Vec::new();
    for p in singular {
        let d = p.sub(centre);
        let rho = d.norm();
        if rho < radius {
            rbreaks.push(rho);
            if rho > 0.0 {
                angles.push(d.0[1].atan2(d.0[0]));
            }
        }
    }
    // Start the angular sweep at the first singular direction so it sits at
    // an endpoint.
    let theta0 = angles.first().copied().unwrap_or(0.0);
    let abreaks: Vec<f64> = angles
        .iter()
        .map(|t| theta0 + (t - theta0).rem_euclid(2.0 * PI))
        .collect();
    let inner_tol = tol.inner();
    let est = integrate(
        |rho| {
            if rho == 0.0 {
                return Ok([0.0; K]);
            }
            let ring = integrate(
                |theta| {
                    let y = Point([
                        centre.0[0] + rho * theta.cos(),
                        centre.0[1] + rho * theta.sin(),
                    ]);
                    let mut v = f(y)?;
                    for x in v.iter_mut() {
                        *x *= rho;
                    }
                    Ok(v)
                },
                theta0,
                theta0 + 2.0 * PI,
                &abreaks,
                inner_tol,
            )?;
            Ok(ring.value)
        },
        0.0,
        radius,
        &rbreaks,
        tol,
    )?;
    Ok(est)
}

/// Integral over the ball `Δ(centre, radius)` in dimension `n ∈ {1, 2}`.
pub fn ball_integral<const K: usize, F>(
    n: usize,
    centre: Point,
    radius: f64,
    singular: &[Point],
    radial_breaks: &[f64],
    f: F,
    tol: Tolerance,
) -> Result<Estimate<K>>
where
    F: Fn(Point) -> Result<[f64; K]>,
{
    match n {
        1 => {
            let c = centre.0[0];
            let mut breaks: Vec<f64> = singular.iter().map(|p| p.0[0]).collect();
            for &rho in radial_breaks {
                breaks.push(c - rho);
                breaks.push(c + rho);
            }
            integrate(|x| f(Point::d1(x)), c - radius, c + radius, &breaks, tol)
        }
        2 => disc_integral(centre, radius, singular, radial_breaks, f, tol),
        _ => Err(Error::arg("n", format!("dimension {n} is not supported"))),
    }
}

/// Integral over the sphere `{|y - centre| = radius}` against surface
/// measure; in one dimension this is the two-point sum.
pub fn sphere_integral<const K: usize, F>(
    n: usize,
    centre: Point,
    radius: f64,
    singular: &[Point],
    f: F,
    tol: Tolerance,
) -> Result<Estimate<K>>
where
    F: Fn(Point, Point) -> Result<[f64; K]>,
{
    match n {
        1 => {
            let c = centre.0[0];
            let right = f(Point::d1(c + radius), Point::d1(1.0))?;
            let left = f(Point::d1(c - radius), Point::d1(-1.0))?;
            let mut value = [0.0; K];
            for k in 0..K {
                value[k] = right[k] + left[k];
            }
            Ok(Estimate {
                value,
                error: 0.0,
                evaluations: 2,
            })
        }
        2 => {
            use std::f64::consts::PI;
            let breaks: Vec<f64> = singular
                .iter()
                .map(|p| {
                    let d = p.sub(centre);
                    d.0[1].atan2(d.0[0]).rem_euclid(2.0 * PI)
                })
                .collect();
            integrate(
                |theta| {
                    let normal = Point([theta.cos(), theta.sin()]);
                    let y = Point([
                        centre.0[0] + radius * normal.0[0],
                        centre.0[1] + radius * normal.0[1],
                    ]);
                    let mut v = f(y, normal)?;
                    for x in v.iter_mut() {
                        *x *= radius;
                    }
                    Ok(v)
                },
                0.0,
                2.0 * PI,
                &breaks,
                tol,
            )
        }
        _ => Err(Error::arg("n", format!("dimension {n} is not supported"))),
    }
}

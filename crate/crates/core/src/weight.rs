//! Weights on R^n (n ∈ {1, 2}), their ball masses, and the doubling-type
//! diagnostics built from ball masses.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{ball_volume, BallQuery, Point, Region, Sampling, ScaleRange};
use crate::quad::{self, Tolerance};

/// Sampled grids with more nodes than this in an integration window are not
/// split at their nodes when the integrand is a smoothed quantity.
const MAX_GRID_BREAKS: usize = 16;

/// Lower clamp applied to densities before taking logarithms.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-300;

/// Behaviour of a sampled weight outside the convex hull of its grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Outside {
    #[default]
    Error,
    /// Constant extension by the nearest edge value.
    Clamp,
}

/// Density sampled on a tensor grid with multilinear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWeight {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major in y: `density[j * xs.len() + i]`.
    density: Vec<f64>,
    outside: Outside,
}

impl GridWeight {
    pub fn new_1d(xs: Vec<f64>, density: Vec<f64>, outside: Outside) -> Result<Self> {
        let g = Self {
            xs,
            ys: Vec::new(),
            density,
            outside,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn new_2d(xs: Vec<f64>, ys: Vec<f64>, density: Vec<f64>, outside: Outside) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::InvalidSpec("two-dimensional grid needs y nodes".into()));
        }
        let g = Self {
            xs,
            ys,
            density,
            outside,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite());
        if self.xs.len() < 2 || !increasing(&self.xs) {
            return Err(Error::InvalidSpec(
                "grid x nodes must be at least two finite, strictly increasing values".into(),
            ));
        }
        if !self.ys.is_empty() && (self.ys.len() < 2 || !increasing(&self.ys)) {
            return Err(Error::InvalidSpec(
                "grid y nodes must be at least two finite, strictly increasing values".into(),
            ));
        }
        let expected = self.xs.len() * self.ys.len().max(1);
        if self.density.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "grid density has {} values, expected {expected}",
                self.density.len()
            )));
        }
        if let Some(bad) = self.density.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidSpec(format!(
                "grid densities must be strictly positive and finite, found {bad}"
            )));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        if self.ys.is_empty() {
            1
        } else {
            2
        }
    }

    pub fn nodes_x(&self) -> &[f64] {
        &self.xs
    }

    pub fn nodes_y(&self) -> &[f64] {
        &self.ys
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub fn outside(&self) -> Outside {
        self.outside
    }

    pub fn with_outside(mut self, outside: Outside) -> Self {
        self.outside = outside;
        self
    }

    fn hull(&self) -> ([f64; 2], [f64; 2]) {
        let lo = [self.xs[0], self.ys.first().copied().unwrap_or(0.0)];
        let hi = [*self.xs.last().unwrap(), self.ys.last().copied().unwrap_or(0.0)];
        (lo, hi)
    }

    fn contains(&self, p: Point) -> bool {
        let (lo, hi) = self.hull();
        let inx = p.0[0] >= lo[0] && p.0[0] <= hi[0];
        if self.ys.is_empty() {
            inx
        } else {
            inx && p.0[1] >= lo[1] && p.0[1] <= hi[1]
        }
    }

    fn locate(nodes: &[f64], t: f64) -> (usize, f64) {
        let last = nodes.len() - 1;
        if t <= nodes[0] {
            return (0, 0.0);
        }
        if t >= nodes[last] {
            return (last - 1, 1.0);
        }
        let k = nodes.partition_point(|&x| x <= t).saturating_sub(1).min(last - 1);
        let frac = (t - nodes[k]) / (nodes[k + 1] - nodes[k]);
        (k, frac)
    }

    pub fn eval(&self, p: Point) -> Result<f64> {
        if !self.contains(p) && self.outside == Outside::Error {
            let (lo, hi) = self.hull();
            return Err(Error::OutOfDomain {
                point: p.0,
                lo: lo[0],
                hi: hi[0],
            });
        }
        let (i, fx) = Self::locate(&self.xs, p.0[0]);
        if self.ys.is_empty() {
            return Ok(self.density[i] * (1.0 - fx) + self.density[i + 1] * fx);
        }
        let nx = self.xs.len();
        let (j, fy) = Self::locate(&self.ys, p.0[1]);
        let d = |ii: usize, jj: usize| self.density[jj * nx + ii];
        Ok(d(i, j) * (1.0 - fx) * (1.0 - fy)
            + d(i + 1, j) * fx * (1.0 - fy)
            + d(i, j + 1) * (1.0 - fx) * fy
            + d(i + 1, j + 1) * fx * fy)
    }

    /// Exact integral of the piecewise-linear density over `[a, b]`.
    fn integral_1d(&self, a: f64, b: f64) -> Result<f64> {
        if self.outside == Outside::Error && (!self.contains(Point::d1(a)) || !self.contains(Point::d1(b))) {
            let (lo, hi) = self.hull();
            let p = if self.contains(Point::d1(a)) { b } else { a };
            return Err(Error::OutOfDomain {
                point: [p, 0.0],
                lo: lo[0],
                hi: hi[0],
            });
        }
        let mut pts = vec![a];
        pts.extend(self.xs.iter().copied().filter(|&x| x > a && x < b));
        pts.push(b);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let fa = self.eval(Point::d1(w[0]))?;
            let fb = self.eval(Point::d1(w[1]))?;
            total += 0.5 * (fa + fb) * (w[1] - w[0]);
        }
        Ok(total)
    }

    fn density_bounds(&self) -> (f64, f64) {
        self.density
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d), hi.max(d)))
    }

    /// Parses rows of `x,density` (one dimension) or `x,y,density` (two
    /// dimensions, tensor grid, any row order). A header line is optional.
    pub fn from_csv_str(text: &str, outside: Outside) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(false)
            .from_reader(text.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("grid csv: {e}")))?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if line == 0 => continue, // header
                Err(e) => return Err(Error::Parse(format!("grid csv row {}: {e}", line + 1))),
            }
        }
        let width = rows.first().map(|r| r.len()).ok_or_else(|| Error::Parse("grid csv is empty".into()))?;
        match width {
            2 => {
                let mut pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let (xs, ds) = pairs.into_iter().unzip();
                Self::new_1d(xs, ds, outside)
            }
            3 => {
                let mut xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                let mut ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
                for v in [&mut xs, &mut ys] {
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                }
                if xs.len() * ys.len() != rows.len() {
                    return Err(Error::Parse(format!(
                        "grid csv: {} rows do not form a {}x{} tensor grid",
                        rows.len(),
                        xs.len(),
                        ys.len()
                    )));
                }
                let mut density = vec![f64::NAN; rows.len()];
                for r in &rows {
                    let i = xs.partition_point(|&x| x < r[0]);
                    let j = ys.partition_point(|&y| y < r[1]);
                    let slot = &mut density[j * xs.len() + i];
                    if !slot.is_nan() {
                        return Err(Error::Parse(format!("grid csv: duplicate node ({}, {})", r[0], r[1])));
                    }
                    *slot = r[2];
                }
                Self::new_2d(xs, ys, density, outside)
            }
            w => Err(Error::Parse(format!("grid csv: expected 2 or 3 columns, found {w}"))),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        if self.ys.is_empty() {
            out.push_str("x,density\n");
            for (x, d) in self.xs.iter().zip(&self.density) {
                out.push_str(&format!("{x},{d}\n"));
            }
        } else {
            out.push_str("x,y,density\n");
            for (j, y) in self.ys.iter().enumerate() {
                for (i, x) in self.xs.iter().enumerate() {
                    out.push_str(&format!("{x},{y},{}\n", self.density[j * self.xs.len() + i]));
                }
            }
        }
        out
    }
}

/// Weight families with closed-form hooks where available.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `w ≡ c`.
    Constant { c: f64 },
    /// `w(x) = |x|^a`, `a > -n`.
    Power { a: f64 },
    /// `w(x) = |x|^a (1 + |x|^2)^b`.
    PolyPower { a: f64, b: f64 },
    /// `w(x) = 1 + eps * g((x - center) / width)` with `g` the standard
    /// smooth bump `exp(1 - 1/(1 - |z|^2))` on the unit ball (`g(0) = 1`).
    Plateau { eps: f64, center: Point, width: f64 },
    Grid(GridWeight),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Constant { .. } => "constant",
            Family::Power { .. } => "power",
            Family::PolyPower { .. } => "polynomial-power",
            Family::Plateau { .. } => "plateau",
            Family::Grid(_) => "grid",
        }
    }
}

/// The smooth bump `exp(1 - 1/(1 - q))` for `q = |z|^2 < 1`.
pub fn smooth_bump(q: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - q)).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    n: usize,
    family: Family,
    floor: f64,
}

impl WeightSpec {
    pub fn new(n: usize, family: Family) -> Result<Self> {
        let spec = Self {
            n,
            family,
            floor: DEFAULT_DENSITY_FLOOR,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(n, Family::Constant { c })
    }

    pub fn power(n: usize, a: f64) -> Result<Self> {
        Self::new(n, Family::Power { a })
    }

    pub fn poly_power(n: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(n, Family::PolyPower { a, b })
    }

    /// `1 + eps * g` with `g` the unit bump at the origin.
    pub fn plateau(n: usize, eps: f64) -> Result<Self> {
        Self::new(
            n,
            Family::Plateau {
                eps,
                center: Point::ORIGIN,
                width: 1.0,
            },
        )
    }

    pub fn grid(grid: GridWeight) -> Result<Self> {
        let n = grid.dimension();
        Self::new(n, Family::Grid(grid))
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidSpec(format!("density floor must be positive, got {floor}")));
        }
        self.floor = floor;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.n == 1 || self.n == 2) {
            return Err(Error::InvalidSpec(format!("dimension n must be 1 or 2, got {}", self.n)));
        }
        let finite = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("parameter `{name}` must be finite")))
            }
        };
        match &self.family {
            Family::Constant { c } => {
                finite("c", *c)?;
                if *c <= 0.0 {
                    return Err(Error::InvalidSpec(format!("constant weight must be positive, got {c}")));
                }
            }
            Family::Power { a } => {
                finite("a", *a)?;
                if *a <= -(self.n as f64) {
                    return Err(Error::InvalidSpec(format!(
                        "power exponent a = {a} is not locally integrable in dimension {}",
                        self.n
                    )));
                }
            }
            Family::PolyPower { a, b } => {
                finite("a", *a)?;
                finite("b", *b)?;
                if *a <= -(self.n as f64) {
                    return Err(Error::InvalidSpec(format!(
                        "power exponent a = {a} is not locally integrable in dimension {}",
                        self.n
                    )));
                }
            }
            Family::Plateau { eps, center, width } => {
                finite("eps", *eps)?;
                if !(*eps > -1.0 && *eps < 1.0) {
                    return Err(Error::InvalidSpec(format!("plateau amplitude eps must lie in (-1, 1), got {eps}")));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::InvalidSpec(format!("plateau width must be positive, got {width}")));
                }
                if !center.is_finite() {
                    return Err(Error::InvalidSpec("plateau center must be finite".into()));
                }
            }
            Family::Grid(g) => {
                if g.dimension() != self.n {
                    return Err(Error::InvalidSpec(format!(
                        "grid is {}-dimensional but n = {}",
                        g.dimension(),
                        self.n
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn is_constant(&self) -> bool {
        match self.family {
            Family::Constant { .. } => true,
            Family::Power { a } => a == 0.0,
            Family::PolyPower { a, b } => a == 0.0 && b == 0.0,
            Family::Plateau { eps, .. } => eps == 0.0,
            Family::Grid(ref g) => {
                let (lo, hi) = g.density_bounds();
                lo == hi
            }
        }
    }

    /// `w(x)`; exact for closed-form families.
    pub fn eval(&self, x: Point) -> Result<f64> {
        let r = if self.n == 1 { x.0[0].abs() } else { x.norm() };
        Ok(match &self.family {
            Family::Constant { c } => *c,
            Family::Power { a } => pow_radial(r, *a),
            Family::PolyPower { a, b } => pow_radial(r, *a) * (1.0 + r * r).powf(*b),
            Family::Plateau { eps, center, width } => {
                let d = x.sub(*center);
                let d = if self.n == 1 { d.0[0].abs() } else { d.norm() };
                let q = (d / width).powi(2);
                1.0 + eps * smooth_bump(q)
            }
            Family::Grid(g) => g.eval(x)?,
        })
    }

    /// `max(w(x), floor)`, the value used under logarithms.
    pub fn eval_floored(&self, x: Point) -> Result<f64> {
        Ok(self.eval(x)?.max(self.floor))
    }

    /// Points where the density is singular or non-smooth; integrators split
    /// there.
    pub fn singular_points(&self, lo: Point, hi: Point) -> Vec<Point> {
        let inside = |p: Point| {
            (0..self.n).all(|k| p.0[k] >= lo.0[k].min(hi.0[k]) && p.0[k] <= lo.0[k].max(hi.0[k]))
        };
        match &self.family {
            Family::Power { a } if *a != 0.0 => vec![Point::ORIGIN].into_iter().filter(|p| inside(*p)).collect(),
            Family::PolyPower { a, .. } if *a != 0.0 => {
                vec![Point::ORIGIN].into_iter().filter(|p| inside(*p)).collect()
            }
            Family::Grid(g) if self.n == 1 => {
                let (a, b) = (lo.0[0].min(hi.0[0]), lo.0[0].max(hi.0[0]));
                g.xs.iter().copied().filter(|&x| x > a && x < b).map(Point::d1).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Singular points relevant to integration over the ball `Δ(c, r)`.
    pub fn singular_points_in_ball(&self, c: Point, r: f64) -> Vec<Point> {
        let lo = Point([c.0[0] - r, c.0[1] - r]);
        let hi = Point([c.0[0] + r, c.0[1] + r]);
        self.singular_points(lo, hi)
    }

    /// Break points for integrands that smooth the weight (convolutions and
    /// their derivatives). Dense sampled grids are left to the adaptive rule:
    /// their kinks are small and splitting at every node costs far more than
    /// it gains.
    pub fn smoothing_breaks(&self, c: Point, r: f64) -> Vec<Point> {
        let pts = self.singular_points_in_ball(c, r);
        match self.family {
            Family::Grid(_) if pts.len() > MAX_GRID_BREAKS => Vec::new(),
            _ => pts,
        }
    }

    /// A priori upper bound for the doubling constant, used only for the
    /// truncation tail estimate of kernel convolutions.
    pub fn doubling_bound(&self) -> f64 {
        let base = 2f64.powi(self.n as i32);
        match &self.family {
            Family::Constant { .. } => base,
            Family::Power { a } => base * 2f64.powf(a.abs()) * 2.0,
            Family::PolyPower { a, b } => base * 2f64.powf(a.abs() + 4.0 * b.abs()) * 2.0,
            Family::Plateau { eps, .. } => base * (1.0 + eps.abs()) / (1.0 - eps.abs()),
            Family::Grid(g) => {
                let (lo, hi) = g.density_bounds();
                base * hi / lo
            }
        }
    }

    /// Integrates `f(y, w(y))` over `Δ(c, r)`.
    pub fn integrate_ball<const K: usize, F>(&self, c: Point, r: f64, f: F, tol: Tolerance) -> Result<quad::Estimate<K>>
    where
        F: Fn(Point, f64) -> Result<[f64; K]>,
    {
        let singular = self.singular_points_in_ball(c, r);
        quad::ball_integral(
            self.n,
            c,
            r,
            &singular,
            &[],
            |y| {
                let w = self.eval(y)?;
                f(y, w)
            },
            tol,
        )
    }

    /// `w(Δ(x, r))` with a quadrature error bound (zero for closed forms).
    pub fn ball_measure(&self, q: &BallQuery, tol: Tolerance) -> Result<(f64, f64)> {
        let (c, r) = (q.center, q.radius);
        match &self.family {
            Family::Constant { c: k } => Ok((k * ball_volume(self.n, r), 0.0)),
            Family::Power { a } if self.n == 1 => {
                let anti = |t: f64| t.signum() * pow_radial(t.abs(), a + 1.0) / (a + 1.0);
                Ok((anti(c.0[0] + r) - anti(c.0[0] - r), 0.0))
            }
            Family::Power { a } if c.norm() == 0.0 => Ok((2.0 * PI * r.powf(a + 2.0) / (a + 2.0), 0.0)),
            Family::Grid(g) if self.n == 1 => Ok((g.integral_1d(c.0[0] - r, c.0[0] + r)?, 0.0)),
            Family::Plateau { eps, center, width } => {
                // Integrate only the bump over the part of the ball meeting its support.
                let base = ball_volume(self.n, r);
                if c.sub(*center).norm() >= r + width {
                    return Ok((base, 0.0));
                }
                let bump = |y: Point| -> Result<[f64; 1]> {
                    let d = y.sub(*center);
                    let d = if self.n == 1 { d.0[0].abs() } else { d.norm() };
                    Ok([smooth_bump((d / width).powi(2))])
                };
                let est = if self.n == 1 {
                    let lo = (c.0[0] - r).max(center.0[0] - width);
                    let hi = (c.0[0] + r).min(center.0[0] + width);
                    quad::integrate(|x| bump(Point::d1(x)), lo, hi, &[], tol)?
                } else {
                    quad::ball_integral(self.n, c, r, &[], &[], bump, tol)?
                };
                Ok((base + eps * est.value[0], eps.abs() * est.error))
            }
            _ => {
                if let Family::Grid(g) = &self.family {
                    if g.outside == Outside::Error {
                        for corner in [Point([c.0[0] - r, c.0[1] - r]), Point([c.0[0] + r, c.0[1] + r])] {
                            if !g.contains(corner) {
                                let (lo, hi) = g.hull();
                                return Err(Error::OutOfDomain {
                                    point: corner.0,
                                    lo: lo[0],
                                    hi: hi[0],
                                });
                            }
                        }
                    }
                }
                let est = self.integrate_ball(c, r, |_, w| Ok([w]), tol)?;
                Ok((est.value[0], est.error))
            }
        }
    }

    /// Mean of `log w` over the ball, with error bound. Exact for constant
    /// and one-dimensional power-type families.
    pub fn mean_log(&self, q: &BallQuery, tol: Tolerance) -> Result<(f64, f64)> {
        let (c, r) = (q.center, q.radius);
        let vol = ball_volume(self.n, r);
        // ∫ log|t| dt = t log|t| - t
        let log_anti = |t: f64| if t == 0.0 { 0.0 } else { t * t.abs().ln() - t };
        // ∫ log(1 + t^2) dt = t log(1 + t^2) - 2t + 2 atan t
        let log1p_anti = |t: f64| t * (t * t).ln_1p() - 2.0 * t + 2.0 * t.atan();
        match &self.family {
            Family::Constant { c: k } => Ok((k.ln(), 0.0)),
            Family::Power { a } if self.n == 1 => {
                let x = c.0[0];
                Ok((a * (log_anti(x + r) - log_anti(x - r)) / (2.0 * r), 0.0))
            }
            Family::PolyPower { a, b } if self.n == 1 => {
                let x = c.0[0];
                let l = a * (log_anti(x + r) - log_anti(x - r)) + b * (log1p_anti(x + r) - log1p_anti(x - r));
                Ok((l / (2.0 * r), 0.0))
            }
            Family::Power { a } if c.norm() == 0.0 => Ok((a * (r.ln() - 0.5), 0.0)),
            _ => {
                let floor = self.floor;
                let est = self.integrate_ball(c, r, |_, w| Ok([w.max(floor).ln()]), tol)?;
                Ok((est.value[0] / vol, est.error / vol))
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let params = match &self.family {
            Family::Constant { c } => json!({ "c": c }),
            Family::Power { a } => json!({ "a": a }),
            Family::PolyPower { a, b } => json!({ "a": a, "b": b }),
            Family::Plateau { eps, center, width } => {
                let center: Vec<f64> = center.0[..self.n].to_vec();
                json!({ "eps": eps, "center": center, "width": width })
            }
            Family::Grid(g) => {
                let mut m = Map::new();
                m.insert("x".into(), json!(g.xs));
                if !g.ys.is_empty() {
                    m.insert("y".into(), json!(g.ys));
                }
                m.insert("density".into(), json!(g.density));
                m.insert("outside".into(), json!(g.outside));
                Value::Object(m)
            }
        };
        let mut obj = json!({ "n": self.n, "family": self.family.name(), "params": params });
        if self.floor != DEFAULT_DENSITY_FLOOR {
            obj["floor"] = json!(self.floor);
        }
        obj
    }

    /// Parses `{"n": int, "family": string, "params": {...}}`. Grid weights
    /// must carry their samples inline; see [`WeightSpec::from_json_file`]
    /// for CSV sidecars.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("weight spec: {e}")))?;
        Self::from_json_value(&v, None)
    }

    /// Like [`WeightSpec::from_json_str`] but resolves `params.path` of grid
    /// weights relative to the JSON file.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json_value(&v, path.parent())
    }

    pub fn from_json_value(v: &Value, base: Option<&Path>) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parse("weight spec must be a JSON object".into()))?;
        let n = obj
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse("field `n` missing or not an integer".into()))? as usize;
        let family = obj
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Parse("field `family` missing or not a string".into()))?;
        let empty = Map::new();
        let params = match obj.get("params") {
            None => &empty,
            Some(p) => p
                .as_object()
                .ok_or_else(|| Error::Parse("field `params` must be an object".into()))?,
        };
        let num = |name: &str| -> Result<f64> {
            params
                .get(name)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Parse(format!("field `params.{name}` missing or not a number")))
        };
        let num_or = |name: &str, default: f64| -> Result<f64> {
            match params.get(name) {
                None => Ok(default),
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| Error::Parse(format!("field `params.{name}` is not a number"))),
            }
        };
        let family = match family {
            "constant" => Family::Constant { c: num_or("c", 1.0)? },
            "power" => Family::Power { a: num("a")? },
            "polynomial-power" | "poly-power" => Family::PolyPower {
                a: num("a")?,
                b: num("b")?,
            },
            "plateau" => {
                let center = match params.get("center") {
                    None => Point::ORIGIN,
                    Some(c) => parse_point(c, n).map_err(|e| Error::Parse(format!("field `params.center`: {e}")))?,
                };
                Family::Plateau {
                    eps: num("eps")?,
                    center,
                    width: num_or("width", 1.0)?,
                }
            }
            "grid" => {
                let outside = match params.get("outside") {
                    None => Outside::Error,
                    Some(o) => serde_json::from_value(o.clone())
                        .map_err(|_| Error::Parse("field `params.outside` must be \"error\" or \"clamp\"".into()))?,
                };
                if let Some(path) = params.get("path") {
                    let path = path
                        .as_str()
                        .ok_or_else(|| Error::Parse("field `params.path` must be a string".into()))?;
                    let base = base.ok_or_else(|| {
                        Error::Parse("field `params.path` requires loading the spec from a file".into())
                    })?;
                    let full = base.join(path);
                    let text = std::fs::read_to_string(&full)
                        .map_err(|e| Error::Parse(format!("cannot read grid {}: {e}", full.display())))?;
                    Family::Grid(GridWeight::from_csv_str(&text, outside)?)
                } else {
                    let arr = |name: &str| -> Result<Vec<f64>> {
                        let a = params
                            .get(name)
                            .and_then(Value::as_array)
                            .ok_or_else(|| Error::Parse(format!("field `params.{name}` missing or not an array")))?;
                        a.iter()
                            .map(|x| {
                                x.as_f64()
                                    .ok_or_else(|| Error::Parse(format!("field `params.{name}` has a non-number")))
                            })
                            .collect()
                    };
                    let xs = arr("x")?;
                    let density = arr("density")?;
                    if n == 2 {
                        Family::Grid(GridWeight::new_2d(xs, arr("y")?, density, outside)?)
                    } else {
                        Family::Grid(GridWeight::new_1d(xs, density, outside)?)
                    }
                }
            }
            other => return Err(Error::Parse(format!("field `family`: unknown family `{other}`"))),
        };
        let mut spec = Self::new(n, family)?;
        if let Some(f) = obj.get("floor") {
            let f = f
                .as_f64()
                .ok_or_else(|| Error::Parse("field `floor` is not a number".into()))?;
            spec = spec.with_floor(f)?;
        }
        Ok(spec)
    }
}

fn parse_point(v: &Value, n: usize) -> std::result::Result<Point, String> {
    if let Some(x) = v.as_f64() {
        return Ok(Point::d1(x));
    }
    let arr = v.as_array().ok_or("expected a number or an array")?;
    if arr.len() != n {
        return Err(format!("expected {n} coordinates"));
    }
    let mut p = [0.0; 2];
    for (k, c) in arr.iter().enumerate() {
        p[k] = c.as_f64().ok_or("coordinate is not a number")?;
    }
    Ok(Point(p))
}

fn pow_radial(r: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else if r == 0.0 {
        if a > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        r.powf(a)
    }
}

// ---------------------------------------------------------------------------
// Doubling diagnostics

/// Ratios `a` at which the thin-annulus modulus is tabulated.
pub const MODULUS_RATIOS: [f64; 7] = [1.01, 1.05, 1.1, 1.25, 1.5, 1.75, 2.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingProfile {
    pub doubling_constant: f64,
    pub witness: BallQuery,
    /// `(a, F(a))` on the same sampling family.
    pub modulus_samples: Vec<(f64, f64)>,
    /// Base balls `Δ(x, r)`; each is compared against `Δ(x, 2r)`.
    pub sampling_family: Vec<BallQuery>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub ratio: f64,
    pub value: f64,
    pub witness: BallQuery,
}

fn ratio_sup(spec: &WeightSpec, family: &[BallQuery], a: f64, tol: Tolerance) -> Result<ModulusEstimate> {
    let ratios: Vec<Result<f64>> = family
        .par_iter()
        .map(|q| {
            let (inner, _) = spec.ball_measure(q, tol)?;
            let (outer, _) = spec.ball_measure(&q.dilate(a), tol)?;
            if inner <= 0.0 {
                return Err(Error::Positivity(format!("zero mass on ball {q:?}")));
            }
            Ok(outer / inner)
        })
        .collect();
    let mut best = ModulusEstimate {
        ratio: a,
        value: f64::NEG_INFINITY,
        witness: family[0],
    };
    for (q, r) in family.iter().zip(ratios) {
        let r = r?;
        if r > best.value {
            best.value = r;
            best.witness = *q;
        }
    }
    Ok(best)
}

fn check_family(family: &[BallQuery]) -> Result<()> {
    if family.is_empty() {
        return Err(Error::arg("family", "sampling family is empty"));
    }
    Ok(())
}

/// Lower estimate of the doubling constant: the sup of
/// `w(Δ(x,2r)) / w(Δ(x,r))` over the family.
pub fn doubling_constant(spec: &WeightSpec, family: &[BallQuery], tol: Tolerance) -> Result<DoublingProfile> {
    check_family(family)?;
    let doubling = ratio_sup(spec, family, 2.0, tol)?;
    let mut modulus_samples = Vec::with_capacity(MODULUS_RATIOS.len());
    let mut running = 1.0_f64;
    for &a in &MODULUS_RATIOS {
        let m = if a == 2.0 {
            doubling.value
        } else {
            ratio_sup(spec, family, a, tol)?.value
        };
        // Rounding can break monotonicity at the last bit; F is a sup over
        // nested annuli so clamp to the running max.
        running = running.max(m).min(doubling.value);
        modulus_samples.push((a, running));
    }
    Ok(DoublingProfile {
        doubling_constant: doubling.value.max(1.0),
        witness: doubling.witness,
        modulus_samples,
        sampling_family: family.to_vec(),
    })
}

/// Convenience: the family of lattice centres × log-spaced radii.
pub fn doubling_constant_on(
    spec: &WeightSpec,
    region: &Region,
    scales: &ScaleRange,
    sampling: Sampling,
    tol: Tolerance,
) -> Result<DoublingProfile> {
    doubling_constant(spec, &sampling.balls(spec.dimension(), region, scales), tol)
}

/// Empirical thin-annulus modulus `F(a) = sup w(Δ(x, a s)) / w(Δ(x, s))`.
pub fn annulus_modulus(spec: &WeightSpec, a: f64, family: &[BallQuery], tol: Tolerance) -> Result<ModulusEstimate> {
    if !(a > 1.0 && a <= 2.0) {
        return Err(Error::arg("a", format!("annulus ratio must lie in (1, 2], got {a}")));
    }
    check_family(family)?;
    let mut est = ratio_sup(spec, family, a, tol)?;
    est.value = est.value.max(1.0);
    Ok(est)
}

/// Sample counts for the M-good doubling sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodDoublingSampling {
    /// Offsets `y - x` per axis inside `Δ(x, R)`.
    pub offsets: usize,
    /// Radii `r, s` log-spaced in `[R/M, MR]`.
    pub radii: usize,
}

impl Default for GoodDoublingSampling {
    fn default() -> Self {
        Self { offsets: 5, radii: 5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodDoublingWitness {
    pub x: Point,
    pub big_r: f64,
    pub y: Point,
    pub s: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodDoublingReport {
    pub m: f64,
    /// `max |log( w(Δ(x,r)) sⁿ / (w(Δ(y,s)) rⁿ) )|` over the sample.
    pub deficit: f64,
    /// `log(1 + 1/M)`.
    pub threshold: f64,
    pub certified: bool,
    pub witness: GoodDoublingWitness,
    pub samples: usize,
}

/// Maximal log-deviation of normalized ball masses over sampled
/// `(x, R, y ∈ Δ(x,R), s, r ∈ [R/M, MR])`.
pub fn good_doubling_deficit(
    spec: &WeightSpec,
    m: f64,
    centers: &[Point],
    big_radii: &[f64],
    sampling: GoodDoublingSampling,
    tol: Tolerance,
) -> Result<GoodDoublingReport> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::arg("M", format!("must exceed 1, got {m}")));
    }
    if centers.is_empty() || big_radii.is_empty() {
        return Err(Error::arg("family", "sampling family is empty"));
    }
    let n = spec.dimension();
    let k = sampling.offsets.max(1);
    // Offsets strictly inside the unit ball.
    let unit_offsets: Vec<Point> = {
        let axis: Vec<f64> = if k == 1 {
            vec![0.0]
        } else {
            (0..k).map(|i| -0.9 + 1.8 * i as f64 / (k - 1) as f64).collect()
        };
        let mut v: Vec<Point> = match n {
            1 => axis.iter().map(|&t| Point::d1(t)).collect(),
            _ => axis
                .iter()
                .flat_map(|&a| axis.iter().map(move |&b| Point::d2(a, b)))
                .filter(|p| p.norm() < 1.0)
                .collect(),
        };
        if !v.iter().any(|p| p.norm() == 0.0) {
            v.push(Point::ORIGIN);
        }
        v
    };
    let tasks: Vec<(Point, f64)> = centers
        .iter()
        .flat_map(|&x| big_radii.iter().map(move |&r| (x, r)))
        .collect();
    let per_task: Vec<Result<(f64, GoodDoublingWitness, usize)>> = tasks
        .par_iter()
        .map(|&(x, big_r)| {
            let radii = ScaleRange::new(big_r / m, big_r * m)?.log_spaced(sampling.radii);
            let log_avg = |c: Point, rho: f64| -> Result<f64> {
                let (mass, _) = spec.ball_measure(&BallQuery::new(c, rho)?, tol)?;
                if mass <= 0.0 {
                    return Err(Error::Positivity(format!("zero mass on Δ({c:?}, {rho})")));
                }
                Ok(mass.ln() - (n as f64) * rho.ln())
            };
            // Side at x: (max, argmax), (min, argmin) over r.
            let mut at_x = Vec::with_capacity(radii.len());
            for &r in &radii {
                at_x.push((log_avg(x, r)?, r));
            }
            let mut at_y = Vec::with_capacity(radii.len() * unit_offsets.len());
            for off in &unit_offsets {
                let y = x.add(off.scale(big_r));
                for &s in &radii {
                    at_y.push((log_avg(y, s)?, y, s));
                }
            }
            let (xmax, rmax) = at_x.iter().copied().fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
            let (xmin, rmin) = at_x.iter().copied().fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
            let ymax = at_y.iter().copied().fold((f64::NEG_INFINITY, x, 0.0), |a, b| if b.0 > a.0 { b } else { a });
            let ymin = at_y.iter().copied().fold((f64::INFINITY, x, 0.0), |a, b| if b.0 < a.0 { b } else { a });
            let up = xmax - ymin.0;
            let down = ymax.0 - xmin;
            let (dev, wit) = if up >= down {
                (up, GoodDoublingWitness { x, big_r, y: ymin.1, s: ymin.2, r: rmax })
            } else {
                (down, GoodDoublingWitness { x, big_r, y: ymax.1, s: ymax.2, r: rmin })
            };
            Ok((dev, wit, at_x.len() * at_y.len()))
        })
        .collect();
    let threshold = (1.0 / m).ln_1p();
    let mut report = GoodDoublingReport {
        m,
        deficit: 0.0,
        threshold,
        certified: true,
        witness: GoodDoublingWitness {
            x: centers[0],
            big_r: big_radii[0],
            y: centers[0],
            s: big_radii[0],
            r: big_radii[0],
        },
        samples: 0,
    };
    for res in per_task {
        let (dev, wit, count) = res?;
        report.samples += count;
        if dev > report.deficit {
            report.deficit = dev;
            report.witness = wit;
        }
    }
    report.certified = report.deficit <= threshold;
    Ok(report)
}

/// Largest `M` among `candidates` certified on the sample, if any.
pub fn certified_good_doubling(
    spec: &WeightSpec,
    candidates: &[f64],
    centers: &[Point],
    big_radii: &[f64],
    sampling: GoodDoublingSampling,
    tol: Tolerance,
) -> Result<Option<GoodDoublingReport>> {
    let mut best: Option<GoodDoublingReport> = None;
    for &m in candidates {
        let rep = good_doubling_deficit(spec, m, centers, big_radii, sampling, tol)?;
        if rep.certified && best.as_ref().is_none_or(|b| rep.m > b.m) {
            best = Some(rep);
        }
    }
    Ok(best)
}

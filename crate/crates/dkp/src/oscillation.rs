//! `α₂(x, r)`: the L² distance on a Whitney region from `A` to the set of
//! constant Λ-elliptic matrices, and the Carleson norm of
//! `dν = α₂(x, r)² dx dr / r`.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DkpError, Result};
use crate::field::{BoxGrid, CoefficientField};
use fkplab::{CarlesonBox, CarlesonEstimate};

/// `W(x, r) = Δ(x, r) × (lower·r, upper·r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Whitney {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Whitney {
    fn default() -> Self {
        Self { lower: 0.5, upper: 1.0 }
    }
}

impl Whitney {
    fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.upper > self.lower && self.upper.is_finite()) {
            return Err(DkpError::InvalidField(format!(
                "whitney heights need 0 < lower < upper, got ({}, {})",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// Exact integrals of the (cellwise constant) coefficient entries and of
/// `|A|²_F` over axis-aligned rectangles, via bilinear interpolation of
/// cumulative sums on cell corners. Entries are stored relative to the
/// grid-wide mean so that small oscillations do not cancel catastrophically.
#[derive(Clone, Debug)]
pub struct CellIntegrals {
    grid: BoxGrid,
    reference: [f64; 4],
    /// `(ny+1)·(ns+1)` corners, five channels each.
    cumulative: Vec<[f64; 5]>,
}

impl CellIntegrals {
    pub fn new(field: &CoefficientField) -> Self {
        let grid = *field.grid();
        let (ny, ns) = (grid.ny, grid.ns);
        let area = grid.hy() * grid.hs();
        let mut reference = [0.0; 4];
        for m in field.samples() {
            for k in 0..4 {
                reference[k] += m[k] / grid.cells() as f64;
            }
        }
        let mut cumulative = vec![[0.0; 5]; (ny + 1) * (ns + 1)];
        for j in 0..ns {
            for i in 0..ny {
                let a = field.at(i, j);
                let m: [f64; 4] = std::array::from_fn(|k| a[k] - reference[k]);
                let frob = m.iter().map(|v| v * v).sum::<f64>();
                let cell = [m[0], m[1], m[2], m[3], frob];
                let below = cumulative[j * (ny + 1) + i + 1];
                let left = cumulative[(j + 1) * (ny + 1) + i];
                let diag = cumulative[j * (ny + 1) + i];
                let here = &mut cumulative[(j + 1) * (ny + 1) + i + 1];
                for k in 0..5 {
                    here[k] = below[k] + left[k] - diag[k] + cell[k] * area;
                }
            }
        }
        Self { grid, reference, cumulative }
    }

    fn corner(&self, i: usize, j: usize) -> [f64; 5] {
        self.cumulative[j * (self.grid.ny + 1) + i]
    }

    /// Cumulative integral over `[-L, y] × [0, s]`.
    fn at(&self, y: f64, s: f64) -> [f64; 5] {
        let g = &self.grid;
        let ty = ((y + g.half_width) / g.hy()).clamp(0.0, g.ny as f64);
        let ts = (s / g.hs()).clamp(0.0, g.ns as f64);
        let i = (ty.floor() as usize).min(g.ny - 1);
        let j = (ts.floor() as usize).min(g.ns - 1);
        let (fy, fs) = (ty - i as f64, ts - j as f64);
        let (c00, c10, c01, c11) = (self.corner(i, j), self.corner(i + 1, j), self.corner(i, j + 1), self.corner(i + 1, j + 1));
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = (1.0 - fy) * (1.0 - fs) * c00[k] + fy * (1.0 - fs) * c10[k] + (1.0 - fy) * fs * c01[k] + fy * fs * c11[k];
        }
        out
    }

    /// Means of the four entries of `A - reference` and of `|A - reference|²_F`
    /// over `[y0, y1] × [s0, s1]`.
    fn centred_means(&self, y0: f64, y1: f64, s0: f64, s1: f64) -> [f64; 5] {
        let (a, b, c, d) = (self.at(y1, s1), self.at(y0, s1), self.at(y1, s0), self.at(y0, s0));
        let area = (y1 - y0) * (s1 - s0);
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = (a[k] - b[k] - c[k] + d[k]) / area;
        }
        out
    }
}

fn to_matrix(m: [f64; 4]) -> Matrix2<f64> {
    Matrix2::new(m[0], m[1], m[2], m[3])
}

fn project_coercive(m: Matrix2<f64>, floor: f64) -> Matrix2<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let skew = m - sym;
    let eig = sym.symmetric_eigen();
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    eig.eigenvectors * Matrix2::from_diagonal(&clamped) * eig.eigenvectors.transpose() + skew
}

fn project_bounded(m: Matrix2<f64>, cap: f64) -> Matrix2<f64> {
    let svd = m.svd(true, true);
    let s = svd.singular_values.map(|v| v.min(cap));
    svd.u.unwrap() * Matrix2::from_diagonal(&s) * svd.v_t.unwrap()
}

/// Frobenius-nearest Λ-elliptic matrix: `⟨Aξ,ξ⟩ ≥ Λ⁻¹|ξ|²` and `‖A‖ ≤ Λ`.
/// Both constraint sets are convex, so Dykstra's alternating projections
/// converge to the projection onto their intersection.
pub fn nearest_elliptic(m: [f64; 4], lambda: f64) -> [f64; 4] {
    let (lo, _) = crate::field::ellipticity(m);
    if lo >= 1.0 / lambda && to_matrix(m).norm() <= lambda {
        // Frobenius norm bounds the spectral norm.
        return m;
    }
    let target = to_matrix(m);
    let (mut x, mut p, mut q) = (target, Matrix2::zeros(), Matrix2::zeros());
    for _ in 0..500 {
        let y = project_coercive(x + p, 1.0 / lambda);
        p = x + p - y;
        let next = project_bounded(y + q, lambda);
        q = y + q - next;
        let moved = (next - x).norm();
        x = next;
        if moved < 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    [x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]]
}

/// `α₂` over the rectangle `[y0, y1] × [s0, s1]`.
pub fn alpha2_on(cells: &CellIntegrals, lambda: f64, y0: f64, y1: f64, s0: f64, s1: f64) -> f64 {
    let m = cells.centred_means(y0, y1, s0, s1);
    let mean_sq: f64 = m[..4].iter().map(|v| v * v).sum();
    let mean: [f64; 4] = std::array::from_fn(|k| m[k] + cells.reference[k]);
    let p = nearest_elliptic(mean, lambda);
    let gap: f64 = mean.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
    (m[4] - mean_sq + gap).max(0.0).sqrt()
}

/// `α₂(x, r)` on the Whitney region `W(x, r)`.
pub fn alpha2(field: &CoefficientField, cells: &CellIntegrals, whitney: Whitney, x: f64, r: f64) -> Result<f64> {
    whitney.validate()?;
    let g = field.grid();
    if !(r > 0.0) || x - r < -g.half_width || x + r > g.half_width || whitney.upper * r > g.height {
        return Err(DkpError::InvalidField(format!(
            "whitney region of ({x}, {r}) leaves the grid"
        )));
    }
    Ok(alpha2_on(cells, field.lambda(), x - r, x + r, whitney.lower * r, whitney.upper * r))
}

/// `α₂` sampled on a tensor grid of `(x, r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationField {
    pub whitney: Whitney,
    pub xs: Vec<f64>,
    pub rs: Vec<f64>,
    /// Row-major in r: `values[k * xs.len() + i]`.
    pub values: Vec<f64>,
}

impl OscillationField {
    pub fn sample(field: &CoefficientField, whitney: Whitney, xs: &[f64], rs: &[f64]) -> Result<Self> {
        let cells = CellIntegrals::new(field);
        let values = rs
            .iter()
            .flat_map(|&r| xs.iter().map(move |&x| (x, r)))
            .map(|(x, r)| alpha2(field, &cells, whitney, x, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            whitney,
            xs: xs.to_vec(),
            rs: rs.to_vec(),
            values,
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillationConfig {
    pub whitney: Whitney,
    /// Radii below `r_min_cells · max(hy, hs)` are not resolved by the grid;
    /// their contribution is extrapolated from `α₂² ∝ r²`.
    pub r_min_cells: f64,
    pub nodes_per_octave: usize,
    /// Horizontal nodes per cell width.
    pub nodes_per_cell: usize,
}

impl Default for OscillationConfig {
    fn default() -> Self {
        Self {
            whitney: Whitney::default(),
            r_min_cells: 2.0,
            nodes_per_octave: 16,
            nodes_per_cell: 2,
        }
    }
}

struct NuMass {
    normalized: f64,
    tail: f64,
}

fn nu_mass(field: &CoefficientField, cells: &CellIntegrals, cbox: &CarlesonBox, cfg: &OscillationConfig) -> Result<NuMass> {
    let g = field.grid();
    let (c, big_r) = (cbox.base.center.x(), cbox.base.radius);
    let r_min = cfg.r_min_cells * g.hy().max(g.hs());
    if big_r <= r_min {
        return Err(DkpError::InvalidField(format!(
            "box radius {big_r} is below the resolved scale {r_min}"
        )));
    }
    // Every Whitney region of the box must sit inside the grid.
    alpha2(field, cells, cfg.whitney, c - big_r + big_r * 1e-12, big_r * (1.0 - 1e-12))
        .and(alpha2(field, cells, cfg.whitney, c + big_r - big_r * 1e-12, big_r * (1.0 - 1e-12)))
        .map_err(|_| DkpError::InvalidField(format!("box ({c}, {big_r}) is too large for the grid")))?;

    let nx = ((2.0 * big_r / g.hy()) * cfg.nodes_per_cell as f64).ceil().max(1.0) as usize;
    let dx = 2.0 * big_r / nx as f64;
    let octaves = (big_r / r_min).log2();
    let nr = ((octaves * cfg.nodes_per_octave as f64).ceil() as usize).max(1);
    let dlog = (big_r / r_min).ln() / nr as f64;
    let (mut resolved, mut tail) = (0.0, 0.0);
    let lambda = field.lambda();
    let wh = cfg.whitney;
    for ix in 0..nx {
        let x = c - big_r + (ix as f64 + 0.5) * dx;
        let mut column = 0.0;
        for k in 0..nr {
            let r = r_min * ((k as f64 + 0.5) * dlog).exp();
            // Whitney regions of points near the box edge may poke out of
            // the base; they are still inside the grid by the check above.
            let a = alpha2_on(cells, lambda, x - r, x + r, wh.lower * r, wh.upper * r);
            column += a * a * dlog;
        }
        let a = alpha2_on(cells, lambda, x - r_min, x + r_min, wh.lower * r_min, wh.upper * r_min);
        resolved += column * dx;
        tail += 0.5 * a * a * dx;
    }
    let area = 2.0 * big_r;
    Ok(NuMass {
        normalized: (resolved + tail) / area,
        tail: tail / area,
    })
}

/// `sup |Δ|⁻¹ ν(T_Δ)` over the family. The reported `quad_error` is the
/// extrapolated sub-resolution share of the witness box.
pub fn weak_dkp_norm(field: &CoefficientField, family: &[CarlesonBox], cfg: &OscillationConfig) -> Result<CarlesonEstimate> {
    cfg.whitney.validate()?;
    let first = *family
        .first()
        .ok_or_else(|| DkpError::InvalidField("box family is empty".into()))?;
    if family.iter().any(|b| b.base.center.0[1] != 0.0) {
        return Err(DkpError::InvalidField("boxes must sit on a one-dimensional boundary".into()));
    }
    let cells = CellIntegrals::new(field);
    let masses: Vec<Result<NuMass>> = family.par_iter().map(|b| nu_mass(field, &cells, b, cfg)).collect();
    let mut est = CarlesonEstimate {
        value: 0.0,
        witness: first,
        family: family.to_vec(),
        r_floor_fraction: 0.0,
        quad_error: 0.0,
        plateau_boxes: 0,
        unbounded_boxes: 0,
    };
    let mut best = f64::NEG_INFINITY;
    for (m, b) in masses.into_iter().zip(family) {
        let m = m?;
        if m.normalized > best {
            best = m.normalized;
            est.witness = *b;
            est.quad_error = m.tail;
        }
    }
    est.value = best.max(0.0);
    Ok(est)
}

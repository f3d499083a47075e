//! The Green function with pole at infinity `U` (`LᵀU = 0`, `U = 0` on the
//! boundary, `U(0,1) = 1`) and the elliptic measure at infinity, whose
//! density is the conormal derivative `(AᵀU)·e_s` on the boundary row.
//!
//! Because `A = I` outside a compact set, the side and top walls of the box
//! carry the exact Laplacian profiles: `s` for `U`, and the half-plane
//! Laplacian Green function for the finite-pole iterates `u_k`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{DkpError, Result};
use crate::field::CoefficientField;
use crate::solve::{GridFunction, Operator};
use fkplab::weight::smooth_bump;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenConfig {
    /// Pole heights of the finite-pole iterates (`2^k`).
    pub poles: Vec<f64>,
    /// Observation window `|y| ≤ window[0]`, `s ≤ window[1]`.
    pub window: [f64; 2],
    /// Relative gap tolerated between the two Riesz pairing routes.
    pub riesz_tol: f64,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self {
            poles: vec![2.0, 4.0, 8.0],
            window: [1.0, 1.0],
            riesz_tol: 0.02,
        }
    }
}

/// Half-plane Laplacian Green function `G((0,t), (y,s))`.
pub fn laplace_green(t: f64, y: f64, s: f64) -> f64 {
    let near = y * y + (s - t) * (s - t);
    let far = y * y + (s + t) * (s + t);
    (far / near).ln() / (4.0 * PI)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenAtInfinity {
    /// `U`, normalized so that `U(0,1) = 1`.
    pub u: GridFunction,
    /// Interpolated value at `(0,1)` before normalization.
    pub raw_normalization: f64,
    /// `max |u_{k+1} - u_k|` on the window, one entry per consecutive pair.
    pub sequence_gaps: Vec<f64>,
    /// `max |u_last - U|` on the window.
    pub limit_gap: f64,
    /// Smallest interior value of `U`.
    pub min_value: f64,
}

impl GreenAtInfinity {
    pub fn is_positive(&self) -> bool {
        self.min_value > 0.0
    }

    pub fn sequence_is_cauchy(&self) -> bool {
        self.sequence_gaps.windows(2).all(|w| w[1] <= w[0])
    }
}

pub fn green_at_infinity(field: &CoefficientField, cfg: &GreenConfig) -> Result<GreenAtInfinity> {
    let op = Operator::assemble(field, true)?;
    green_with(&op, cfg)
}

fn green_with(op: &Operator, cfg: &GreenConfig) -> Result<GreenAtInfinity> {
    let grid = *op.grid();
    for &t in &cfg.poles {
        if !(t > 0.0 && t < grid.height) {
            return Err(DkpError::InvalidField(format!("pole height {t} must lie inside (0, {})", grid.height)));
        }
    }
    let height = |_: f64, s: f64| s;
    let greens: Vec<Box<dyn Fn(f64, f64) -> f64>> = cfg
        .poles
        .iter()
        .map(|&t| Box::new(move |y: f64, s: f64| laplace_green(t, y, s)) as Box<dyn Fn(f64, f64) -> f64>)
        .collect();
    let sources: Vec<Vec<f64>> = cfg
        .poles
        .iter()
        .map(|&t| {
            let mut f = vec![0.0; grid.cells()];
            let (i, j) = grid.cell_of(0.0, t);
            f[grid.index(i, j)] = 1.0 / (grid.hy() * grid.hs());
            f
        })
        .collect();
    let mut problems: Vec<(Option<&[f64]>, &dyn Fn(f64, f64) -> f64)> = vec![(None, &height)];
    for (f, g) in sources.iter().zip(&greens) {
        problems.push((Some(f.as_slice()), g.as_ref()));
    }
    let mut sols = op.solve_many(&problems)?;

    let mut u = sols.remove(0);
    let raw = u.interpolate(0.0, 1.0);
    if !(raw > 0.0) {
        return Err(DkpError::Solver(format!("U(0,1) = {raw} is not positive")));
    }
    u.scale(1.0 / raw);
    for s in &mut sols {
        let c = s.interpolate(0.0, 1.0);
        s.scale(1.0 / c);
    }
    let [wy, ws] = cfg.window;
    let sequence_gaps = sols.windows(2).map(|p| p[1].max_gap_on(&p[0], wy, ws)).collect();
    let limit_gap = sols.last().map_or(0.0, |last| last.max_gap_on(&u, wy, ws));
    let min_value = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GreenAtInfinity {
        u,
        raw_normalization: raw,
        sequence_gaps,
        limit_gap,
        min_value,
    })
}

/// One Riesz cross-check: `∫ f dω` from the density against
/// `-∬ Aᵀ∇U·∇F` with `F(y,s) = f(y) χ(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszCheck {
    pub center: f64,
    pub radius: f64,
    pub conormal: f64,
    pub pairing: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryDensity {
    /// Boundary cell centres.
    pub ys: Vec<f64>,
    pub density: Vec<f64>,
    pub riesz: Vec<RieszCheck>,
    /// Some pairing check exceeded the tolerance.
    pub flagged: bool,
}

impl BoundaryDensity {
    /// Nodes and values with `|y| ≤ half_width`.
    pub fn window(&self, half_width: f64) -> (Vec<f64>, Vec<f64>) {
        self.ys
            .iter()
            .zip(&self.density)
            .filter(|(y, _)| y.abs() <= half_width)
            .map(|(y, d)| (*y, *d))
            .unzip()
    }

    /// `(max - min)/mean` on `|y| ≤ half_width`.
    pub fn spread(&self, half_width: f64) -> f64 {
        let (_, d) = self.window(half_width);
        let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        (hi - lo) / mean
    }

    /// `y,density` rows.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("y,density\n");
        for (y, d) in self.ys.iter().zip(&self.density) {
            out.push_str(&format!("{y},{d}\n"));
        }
        out
    }
}

/// Test functions of the Riesz battery: bumps `(center, radius)`.
pub const RIESZ_BATTERY: [(f64, f64); 6] = [(0.0, 1.0), (0.0, 2.0), (-1.0, 1.5), (1.0, 1.5), (0.5, 1.0), (-2.0, 2.0)];

/// Height of the cutoff `χ` in the extensions `F = f χ`.
const RIESZ_CUTOFF: f64 = 2.0;

fn bump_and_slope(t: f64, radius: f64) -> (f64, f64) {
    let q = t * t / (radius * radius);
    if q >= 1.0 {
        return (0.0, 0.0);
    }
    let g = smooth_bump(q);
    // d/dq exp(1 - 1/(1-q)) = -g/(1-q)², dq/dt = 2t/ρ².
    (g, -g / ((1.0 - q) * (1.0 - q)) * 2.0 * t / (radius * radius))
}

/// Density of `ω^∞` from the conormal derivative at the boundary row, with
/// the one-sided quadratic `∂ₛU(y,0) ≈ (9U(y,h/2) - U(y,3h/2))/(3h)`.
pub fn elliptic_measure_infinity(field: &CoefficientField, green: &GreenAtInfinity, cfg: &GreenConfig) -> Result<BoundaryDensity> {
    let grid = *field.grid();
    let u = &green.u;
    let hs = grid.hs();
    let ys: Vec<f64> = (0..grid.ny).map(|i| grid.y(i)).collect();
    let density: Vec<f64> = (0..grid.ny)
        .map(|i| {
            // Aᵀ∇U·e_s = a12 ∂y U + a22 ∂s U, and ∂y U = 0 on the boundary.
            let m = field.at(i, 0);
            m[3] * (9.0 * u.at(i, 0) - u.at(i, 1)) / (3.0 * hs)
        })
        .collect();
    if density.iter().any(|d| !(*d >= 0.0)) {
        return Err(DkpError::Solver("negative elliptic-measure density".into()));
    }

    let hy = grid.hy();
    let value = |i: isize, j: isize| -> f64 {
        // Ghosts: U = 0 below the boundary row and U = s on the walls.
        let (ny, ns) = (grid.ny as isize, grid.ns as isize);
        if j < 0 {
            -u.at(i.clamp(0, ny - 1) as usize, 0)
        } else if i < 0 || i >= ny || j >= ns {
            let mi = i.clamp(0, ny - 1) as usize;
            let mj = j.clamp(0, ns - 1) as usize;
            2.0 * u.interpolate(grid.y(mi), grid.s(mj)) - u.at(mi, mj)
        } else {
            u.at(i as usize, j as usize)
        }
    };
    let mut riesz = Vec::new();
    for &(c, rho) in RIESZ_BATTERY.iter() {
        let conormal: f64 = ys
            .iter()
            .zip(&density)
            .map(|(y, d)| bump_and_slope(y - c, rho).0 * d * hy)
            .sum();
        let mut pairing = 0.0;
        for j in 0..grid.ns {
            let s = grid.s(j);
            let (chi, dchi) = bump_and_slope(s, RIESZ_CUTOFF);
            if chi == 0.0 && dchi == 0.0 {
                break;
            }
            for i in 0..grid.ny {
                let (f, df) = bump_and_slope(grid.y(i) - c, rho);
                if f == 0.0 && df == 0.0 {
                    continue;
                }
                let (ii, jj) = (i as isize, j as isize);
                let du_y = (value(ii + 1, jj) - value(ii - 1, jj)) / (2.0 * hy);
                let du_s = (value(ii, jj + 1) - value(ii, jj - 1)) / (2.0 * hs);
                let m = field.at(i, j);
                // Aᵀ∇U = (a11 Uy + a21 Us, a12 Uy + a22 Us).
                let flux = [m[0] * du_y + m[2] * du_s, m[1] * du_y + m[3] * du_s];
                pairing -= (flux[0] * df * chi + flux[1] * f * dchi) * hy * hs;
            }
        }
        let relative_gap = (conormal - pairing).abs() / conormal.abs().max(f64::MIN_POSITIVE);
        riesz.push(RieszCheck {
            center: c,
            radius: rho,
            conormal,
            pairing,
            relative_gap,
        });
    }
    let flagged = riesz.iter().any(|r| !(r.relative_gap <= cfg.riesz_tol));
    Ok(BoundaryDensity {
        ys,
        density,
        riesz,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Analytic, BoxGrid, Bump};

    fn grid() -> BoxGrid {
        BoxGrid::new(8.0, 16.0, 128, 128).unwrap()
    }

    #[test]
    fn laplacian_green_at_infinity_is_height() {
        let field = CoefficientField::identity(grid()).unwrap();
        let g = green_at_infinity(&field, &GreenConfig::default()).unwrap();
        for j in 0..20 {
            for i in 40..88 {
                assert!((g.u.at(i, j) - grid().s(j)).abs() < 1e-10);
            }
        }
        assert!(g.is_positive());
        assert!((g.u.interpolate(0.0, 1.0) - 1.0).abs() < 1e-14);
        // The finite-pole iterates approach U as the pole recedes.
        assert!(g.sequence_gaps[1] < g.sequence_gaps[0], "{:?}", g.sequence_gaps);
        assert!(g.limit_gap < 0.1, "{}", g.limit_gap);

        let d = elliptic_measure_infinity(&field, &g, &GreenConfig::default()).unwrap();
        assert!(d.spread(5.0) < 1e-10);
        assert!(!d.flagged, "{:?}", d.riesz);
    }

    #[test]
    fn bump_perturbs_u_by_order_eps_away_from_support() {
        let bump = |eps: f64| Analytic::Bumps {
            bumps: vec![Bump {
                eps,
                center: [0.0, 1.0],
                radius: 0.75,
            }],
        };
        let mut gaps = Vec::new();
        for eps in [0.2, 0.1] {
            let f = CoefficientField::analytic(grid(), 2.0, &bump(eps)).unwrap();
            let g = green_at_infinity(&f, &GreenConfig::default()).unwrap();
            // Away from the bump support (|y| ≥ 2).
            let mut gap: f64 = 0.0;
            for j in 0..32 {
                for i in 0..grid().ny {
                    if grid().y(i).abs() >= 2.0 {
                        gap = gap.max((g.u.at(i, j) - grid().s(j)).abs() / grid().s(j));
                    }
                }
            }
            gaps.push(gap);
            let d = elliptic_measure_infinity(&f, &g, &GreenConfig::default()).unwrap();
            assert!(!d.flagged, "{:?}", d.riesz);
        }
        assert!(gaps[0] < 0.2 && gaps[1] < gaps[0], "{gaps:?}");
        assert!((gaps[1] / gaps[0] - 0.5).abs() < 0.1, "{gaps:?}");
    }

    #[test]
    fn density_csv_header() {
        let field = CoefficientField::identity(BoxGrid::new(2.0, 4.0, 8, 16).unwrap()).unwrap();
        let cfg = GreenConfig {
            poles: vec![1.5, 3.0],
            ..GreenConfig::default()
        };
        let g = green_at_infinity(&field, &cfg).unwrap();
        let d = elliptic_measure_infinity(&field, &g, &cfg).unwrap();
        let text = d.to_csv_string();
        assert!(text.starts_with("y,density\n"));
        assert_eq!(text.lines().count(), 9);
    }
}

//! Cell-centred finite volumes for `-div(B ∇u) = f` with Dirichlet data.
//!
//! Normal face fluxes use the two adjacent cells with harmonic averaging of
//! the diagonal coefficient; the tangential part of the flux uses the
//! four-cell average of central differences, so full (non-symmetric)
//! matrices are handled by a nine-point stencil. Boundary data enter through
//! ghost cells `u_ghost = 2 g(p) - u_mirror`, where `p` is the boundary point
//! between ghost and mirror; discrete affine functions are reproduced exactly.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{DkpError, Result};
use crate::field::{BoxGrid, CoefficientField};

/// Values at the cell centres of a [`BoxGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: BoxGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Bilinear interpolation between cell centres (clamped at the edges).
    pub fn interpolate(&self, y: f64, s: f64) -> f64 {
        let g = &self.grid;
        let ty = ((y + g.half_width) / g.hy() - 0.5).clamp(0.0, (g.ny - 1) as f64);
        let ts = (s / g.hs() - 0.5).clamp(0.0, (g.ns - 1) as f64);
        let (i, j) = ((ty.floor() as usize).min(g.ny - 2), (ts.floor() as usize).min(g.ns - 2));
        let (fy, fs) = (ty - i as f64, ts - j as f64);
        self.at(i, j) * (1.0 - fy) * (1.0 - fs)
            + self.at(i + 1, j) * fy * (1.0 - fs)
            + self.at(i, j + 1) * (1.0 - fy) * fs
            + self.at(i + 1, j + 1) * fy * fs
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Max of `|self - other|` over cells with `|y| ≤ half_width`, `s ≤ height`.
    pub fn max_gap_on(&self, other: &GridFunction, half_width: f64, height: f64) -> f64 {
        let g = &self.grid;
        let mut gap: f64 = 0.0;
        for j in 0..g.ns {
            for i in 0..g.ny {
                if g.y(i).abs() <= half_width && g.s(j) <= height {
                    gap = gap.max((self.at(i, j) - other.at(i, j)).abs());
                }
            }
        }
        gap
    }
}

/// A factorized discrete operator.
pub struct Operator {
    grid: BoxGrid,
    matrix: SparseColMat<usize, f64>,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    /// `(row, coefficient, boundary point)`: the row's right-hand side
    /// receives `-coefficient · g(point)`.
    ghosts: Vec<(usize, f64, [f64; 2])>,
}

/// Tolerated relative residual `‖Mu - b‖ / ‖b‖` of a direct solve.
const RESIDUAL_LIMIT: f64 = 1e-9;

impl Operator {
    /// Discretizes `-div(A ∇u)`, or `-div(Aᵀ ∇u)` when `transpose` is set.
    pub fn assemble(field: &CoefficientField, transpose: bool) -> Result<Self> {
        let grid = *field.grid();
        let (ny, ns) = (grid.ny as isize, grid.ns as isize);
        let (hy, hs) = (grid.hy(), grid.hs());
        let coef = |i: isize, j: isize| -> [f64; 4] {
            let m = field.at(i.clamp(0, ny - 1) as usize, j.clamp(0, ns - 1) as usize);
            if transpose {
                [m[0], m[2], m[1], m[3]]
            } else {
                m
            }
        };
        let harmonic = |a: f64, b: f64| 2.0 * a * b / (a + b);

        let mut triplets = Vec::with_capacity(9 * grid.cells());
        let mut ghosts = Vec::new();
        for j in 0..ns {
            for i in 0..ny {
                let row = grid.index(i as usize, j as usize);
                let mut add = |ii: isize, jj: isize, c: f64| {
                    if (0..ny).contains(&ii) && (0..ns).contains(&jj) {
                        triplets.push(Triplet::new(row, grid.index(ii as usize, jj as usize), c));
                    } else {
                        let (mi, mj) = (ii.clamp(0, ny - 1), jj.clamp(0, ns - 1));
                        triplets.push(Triplet::new(row, grid.index(mi as usize, mj as usize), -c));
                        let gy = -grid.half_width + (0.5 * (ii + mi) as f64 + 0.5) * hy;
                        let gs = (0.5 * (jj + mj) as f64 + 0.5) * hs;
                        ghosts.push((row, 2.0 * c, [gy, gs]));
                    }
                };
                // East and west faces: flux b11 ∂y u + b12 ∂s u, weighted by hs.
                for (side, nb) in [(1.0, i + 1), (-1.0, i - 1)] {
                    let (m0, m1) = (coef(i, j), coef(nb, j));
                    let b11 = harmonic(m0[0], m1[0]);
                    let b12 = 0.5 * (m0[1] + m1[1]);
                    // -side · flux · hs, with flux oriented along +y.
                    let w = -side * hs;
                    add(nb, j, w * side * b11 / hy);
                    add(i, j, -w * side * b11 / hy);
                    let t = w * b12 / (4.0 * hs);
                    for c in [i, nb] {
                        add(c, j + 1, t);
                        add(c, j - 1, -t);
                    }
                }
                // North and south faces: flux b21 ∂y u + b22 ∂s u, weighted by hy.
                for (side, nb) in [(1.0, j + 1), (-1.0, j - 1)] {
                    let (m0, m1) = (coef(i, j), coef(i, nb));
                    let b22 = harmonic(m0[3], m1[3]);
                    let b21 = 0.5 * (m0[2] + m1[2]);
                    let w = -side * hy;
                    add(i, nb, w * side * b22 / hs);
                    add(i, j, -w * side * b22 / hs);
                    let t = w * b21 / (4.0 * hy);
                    for c in [j, nb] {
                        add(i + 1, c, t);
                        add(i - 1, c, -t);
                    }
                }
            }
        }
        let n = grid.cells();
        let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| DkpError::Solver(format!("assembly: {e:?}")))?;
        let lu = matrix.sp_lu().map_err(|e| DkpError::Solver(format!("factorization: {e:?}")))?;
        Ok(Self {
            grid,
            matrix,
            lu,
            ghosts,
        })
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    /// Solves one problem per `(source, boundary data)` pair, reusing the
    /// factorization. `source` is a cell density (integrated over each cell).
    pub fn solve_many(&self, problems: &[(Option<&[f64]>, &dyn Fn(f64, f64) -> f64)]) -> Result<Vec<GridFunction>> {
        let n = self.grid.cells();
        let area = self.grid.hy() * self.grid.hs();
        let mut rhs = Mat::<f64>::zeros(n, problems.len());
        for (k, (source, g)) in problems.iter().enumerate() {
            if let Some(f) = source {
                if f.len() != n {
                    return Err(DkpError::Solver(format!("source has {} cells, grid has {n}", f.len())));
                }
                for (r, v) in f.iter().enumerate() {
                    rhs[(r, k)] = v * area;
                }
            }
            for &(row, c, p) in &self.ghosts {
                rhs[(row, k)] -= c * g(p[0], p[1]);
            }
        }
        let sol = self.lu.solve(&rhs);
        let residual = &self.matrix * &sol - &rhs;
        let mut out = Vec::with_capacity(problems.len());
        for k in 0..problems.len() {
            let rn = residual.col(k).norm_l2();
            let bn = rhs.col(k).norm_l2().max(f64::MIN_POSITIVE);
            if !(rn <= RESIDUAL_LIMIT * bn) {
                return Err(DkpError::Residual {
                    residual: rn / bn,
                    limit: RESIDUAL_LIMIT,
                });
            }
            out.push(GridFunction {
                grid: self.grid,
                values: (0..n).map(|r| sol[(r, k)]).collect(),
            });
        }
        Ok(out)
    }

    pub fn solve(&self, source: Option<&[f64]>, g: &dyn Fn(f64, f64) -> f64) -> Result<GridFunction> {
        Ok(self.solve_many(&[(source, g)])?.remove(0))
    }
}

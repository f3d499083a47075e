//! Coefficient matrices sampled at the cell centres of a box
//! `[-L, L] × (0, H]` in the upper half-plane.

use serde::{Deserialize, Serialize};

use crate::error::{DkpError, Result};
use fkplab::weight::smooth_bump;

/// Uniform cell-centred grid on `[-half_width, half_width] × (0, height]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub half_width: f64,
    pub height: f64,
    pub ny: usize,
    pub ns: usize,
}

/// Largest grid accepted from files (cells per side).
pub const MAX_CELLS_PER_SIDE: usize = 2048;

impl BoxGrid {
    pub fn new(half_width: f64, height: f64, ny: usize, ns: usize) -> Result<Self> {
        let g = Self {
            half_width,
            height,
            ny,
            ns,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite() && self.height > 0.0 && self.height.is_finite()) {
            return Err(DkpError::InvalidField(format!(
                "grid extents must be positive, got half_width {} and height {}",
                self.half_width, self.height
            )));
        }
        for (name, n) in [("ny", self.ny), ("ns", self.ns)] {
            if !(2..=MAX_CELLS_PER_SIDE).contains(&n) {
                return Err(DkpError::InvalidField(format!(
                    "grid.{name} must lie in [2, {MAX_CELLS_PER_SIDE}], got {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn hy(&self) -> f64 {
        2.0 * self.half_width / self.ny as f64
    }

    pub fn hs(&self) -> f64 {
        self.height / self.ns as f64
    }

    pub fn y(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.hy()
    }

    pub fn s(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hs()
    }

    pub fn cells(&self) -> usize {
        self.ny * self.ns
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.ny + i
    }

    /// Cell containing `(y, s)`, clamped to the grid.
    pub fn cell_of(&self, y: f64, s: f64) -> (usize, usize) {
        let i = ((y + self.half_width) / self.hy()).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        let j = (s / self.hs()).floor().clamp(0.0, (self.ns - 1) as f64) as usize;
        (i, j)
    }
}

/// `A(y,s) = (1 + eps·g(|X - c|²/ρ²)) I` with the smooth bump `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub eps: f64,
    pub center: [f64; 2],
    pub radius: f64,
}

impl Bump {
    pub fn profile(&self, y: f64, s: f64) -> f64 {
        let d2 = (y - self.center[0]).powi(2) + (s - self.center[1]).powi(2);
        self.eps * smooth_bump(d2 / (self.radius * self.radius))
    }
}

/// Closed-form coefficient families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum Analytic {
    Identity,
    Constant { matrix: [[f64; 2]; 2] },
    /// Sum of isotropic bumps added to the identity.
    Bumps { bumps: Vec<Bump> },
    /// `a(s) I` with `a` piecewise constant: `values[k]` between
    /// `breaks[k-1]` and `breaks[k]`.
    Layers { breaks: Vec<f64>, values: Vec<f64> },
}

impl Analytic {
    pub fn eval(&self, y: f64, s: f64) -> [f64; 4] {
        match self {
            Analytic::Identity => [1.0, 0.0, 0.0, 1.0],
            Analytic::Constant { matrix } => [matrix[0][0], matrix[0][1], matrix[1][0], matrix[1][1]],
            Analytic::Bumps { bumps } => {
                let a = 1.0 + bumps.iter().map(|b| b.profile(y, s)).sum::<f64>();
                [a, 0.0, 0.0, a]
            }
            Analytic::Layers { breaks, values } => {
                let k = breaks.partition_point(|&b| b <= s);
                let a = values[k.min(values.len() - 1)];
                [a, 0.0, 0.0, a]
            }
        }
    }

    /// `(L₀, H₀)` with `A = I` for `|y| > L₀` or `s > H₀`, when known.
    pub fn identity_outside(&self) -> Option<[f64; 2]> {
        match self {
            Analytic::Identity => Some([0.0, 0.0]),
            Analytic::Bumps { bumps } => Some(bumps.iter().fold([0.0, 0.0], |acc, b| {
                [
                    acc[0].max(b.center[0].abs() + b.radius),
                    acc[1].max(b.center[1] + b.radius),
                ]
            })),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Analytic::Constant { matrix } if !matrix.iter().flatten().all(|v| v.is_finite()) => {
                Err(DkpError::InvalidField("params.matrix must be finite".into()))
            }
            Analytic::Bumps { bumps } => {
                for (k, b) in bumps.iter().enumerate() {
                    if !(b.eps.is_finite() && b.center.iter().all(|c| c.is_finite()) && b.radius > 0.0 && b.radius.is_finite()) {
                        return Err(DkpError::InvalidField(format!(
                            "params.bumps[{k}] needs finite eps and center and a positive radius"
                        )));
                    }
                }
                Ok(())
            }
            Analytic::Layers { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(DkpError::InvalidField(format!(
                        "params.values must have one more entry than params.breaks ({} vs {})",
                        values.len(),
                        breaks.len()
                    )));
                }
                if !breaks.windows(2).all(|w| w[0] < w[1]) || !breaks.iter().chain(values).all(|v| v.is_finite()) {
                    return Err(DkpError::InvalidField("params.breaks must be finite and increasing".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// A coefficient field as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub grid: BoxGrid,
    pub lambda: f64,
    #[serde(flatten)]
    pub family: Analytic,
}

impl FieldSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: FieldSpec = serde_json::from_str(text).map_err(|e| DkpError::Parse(e.to_string()))?;
        spec.grid.validate()?;
        spec.family.validate()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("field spec serializes")
    }

    pub fn build(&self) -> Result<CoefficientField> {
        CoefficientField::analytic(self.grid, self.lambda, &self.family)
    }
}

/// Matrix samples `A(y_i, s_j)` stored row-major as `[a11, a12, a21, a22]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    grid: BoxGrid,
    lambda: f64,
    identity_outside: Option<[f64; 2]>,
    a: Vec<[f64; 4]>,
}

const MAGIC: &[u8; 8] = b"FKPCOEF\x01";
const HEADER_LEN: usize = 8 + 4 + 4 + 8 * 3 + 1 + 8 * 2;

impl CoefficientField {
    pub fn from_fn(
        grid: BoxGrid,
        lambda: f64,
        identity_outside: Option<[f64; 2]>,
        f: impl Fn(f64, f64) -> [f64; 4],
    ) -> Result<Self> {
        grid.validate()?;
        let mut a = Vec::with_capacity(grid.cells());
        for j in 0..grid.ns {
            for i in 0..grid.ny {
                a.push(f(grid.y(i), grid.s(j)));
            }
        }
        Self::from_samples(grid, lambda, identity_outside, a)
    }

    pub fn from_samples(grid: BoxGrid, lambda: f64, identity_outside: Option<[f64; 2]>, a: Vec<[f64; 4]>) -> Result<Self> {
        grid.validate()?;
        if a.len() != grid.cells() {
            return Err(DkpError::InvalidField(format!(
                "expected {} matrix samples, got {}",
                grid.cells(),
                a.len()
            )));
        }
        let field = Self {
            grid,
            lambda,
            identity_outside,
            a,
        };
        field.check()?;
        Ok(field)
    }

    pub fn analytic(grid: BoxGrid, lambda: f64, family: &Analytic) -> Result<Self> {
        family.validate()?;
        Self::from_fn(grid, lambda, family.identity_outside(), |y, s| family.eval(y, s))
    }

    pub fn identity(grid: BoxGrid) -> Result<Self> {
        Self::analytic(grid, 1.0, &Analytic::Identity)
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn identity_outside(&self) -> Option<[f64; 2]> {
        self.identity_outside
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 4] {
        self.a[self.grid.index(i, j)]
    }

    pub fn samples(&self) -> &[[f64; 4]] {
        &self.a
    }

    pub fn transpose(&self) -> Self {
        Self {
            a: self.a.iter().map(|m| [m[0], m[2], m[1], m[3]]).collect(),
            ..self.clone()
        }
    }

    pub fn is_constant(&self) -> bool {
        self.a.iter().all(|m| m == &self.a[0])
    }

    /// `‖A‖ ≤ Λ` (spectral norm) and `⟨Aξ,ξ⟩ ≥ Λ⁻¹|ξ|²` at every sample,
    /// and `A = I` outside the declared compact set.
    fn check(&self) -> Result<()> {
        let lam = self.lambda;
        if !(lam >= 1.0 && lam.is_finite()) {
            return Err(DkpError::InvalidField(format!("lambda must be finite and at least 1, got {lam}")));
        }
        let slack = 1e-12;
        for j in 0..self.grid.ns {
            for i in 0..self.grid.ny {
                let m = self.at(i, j);
                if !m.iter().all(|v| v.is_finite()) {
                    return Err(DkpError::NotElliptic {
                        i,
                        j,
                        reason: "non-finite entry".into(),
                    });
                }
                let (lo, hi) = ellipticity(m);
                if lo < 1.0 / lam - slack {
                    return Err(DkpError::NotElliptic {
                        i,
                        j,
                        reason: format!("smallest eigenvalue of the symmetric part {lo} < 1/Λ = {}", 1.0 / lam),
                    });
                }
                if hi > lam + slack {
                    return Err(DkpError::NotElliptic {
                        i,
                        j,
                        reason: format!("norm {hi} > Λ = {lam}"),
                    });
                }
                if let Some([l0, h0]) = self.identity_outside {
                    let (y, s) = (self.grid.y(i), self.grid.s(j));
                    if (y.abs() > l0 || s > h0) && m != [1.0, 0.0, 0.0, 1.0] {
                        return Err(DkpError::InvalidField(format!(
                            "A differs from the identity at ({y}, {s}) outside the declared compact set"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Little-endian dump: magic, `ny`, `ns` (u32), half width, height,
    /// Λ (f64), identity flag (u8), `L₀`, `H₀` (f64), then the samples.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 32 * self.a.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.grid.ny as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.ns as u32).to_le_bytes());
        for v in [self.grid.half_width, self.grid.height, self.lambda] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let (flag, [l0, h0]) = match self.identity_outside {
            Some(b) => (1u8, b),
            None => (0u8, [0.0, 0.0]),
        };
        out.push(flag);
        out.extend_from_slice(&l0.to_le_bytes());
        out.extend_from_slice(&h0.to_le_bytes());
        for m in &self.a {
            for v in m {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(DkpError::Parse("not a coefficient dump (bad magic or short header)".into()));
        }
        let u32_at = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap()) as usize;
        let f64_at = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
        let (ny, ns) = (u32_at(8), u32_at(12));
        let grid = BoxGrid {
            half_width: f64_at(16),
            height: f64_at(24),
            ny,
            ns,
        };
        grid.validate()?;
        let lambda = f64_at(32);
        let identity_outside = match bytes[40] {
            0 => None,
            1 => Some([f64_at(41), f64_at(49)]),
            other => return Err(DkpError::Parse(format!("identity flag must be 0 or 1, got {other}"))),
        };
        let body = &bytes[HEADER_LEN..];
        if body.len() != 32 * grid.cells() {
            return Err(DkpError::Parse(format!(
                "expected {} bytes of samples for a {ny}×{ns} grid, got {}",
                32 * grid.cells(),
                body.len()
            )));
        }
        let a = body
            .chunks_exact(32)
            .map(|c| {
                let v = |k: usize| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap());
                [v(0), v(1), v(2), v(3)]
            })
            .collect();
        Self::from_samples(grid, lambda, identity_outside, a)
    }
}

/// `(λ_min of the symmetric part, spectral norm)` of a 2×2 matrix.
pub fn ellipticity(m: [f64; 4]) -> (f64, f64) {
    let [a, b, c, d] = m;
    let off = 0.5 * (b + c);
    let lo = 0.5 * (a + d) - (0.25 * (a - d) * (a - d) + off * off).sqrt();
    let fro2 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let hi = (0.5 * (fro2 + (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt())).sqrt();
    (lo, hi)
}

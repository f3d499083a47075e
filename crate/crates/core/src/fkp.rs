//! The pieces of the Fefferman–Kenig–Pipher decomposition of a normalized
//! box mass.
//!
//! With `u(y, s) = (w ∗ φ_{√s})(y)` solving `∂ₛu = Δu/4`, and `Δ = Δ(x, r)`:
//!
//! * `h1 = ⨍_Δ log(u(y, r²) / w(y)) dy`,
//! * `h2 = -(γₙrⁿ)⁻¹ ∫₀^{r²} ∫_{∂Δ} ∇u(y, s)/u(y, s) · ν dy ds`,
//! * `h̃1 = log ⨍_Δ w - ⨍_Δ log u(y, r²) dy`, so `h1 + h̃1` is the log of the
//!   A∞ ratio of the ball.
//!
//! Integrating `(∂ₛ - Δ/4) log u = |∇log u|²/4` over `Δ × (0, r²)` and
//! substituting `s = σ²` gives
//! `γₙ⁻¹r⁻ⁿ μ(T_Δ) = 2·h1 + h2/2`. The report also carries the gap to the
//! unweighted sum `h1 + h2` so the two normalizations can be compared.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleson::{box_mass, BoxConfig, CarlesonBox, Smoothing, TailKind};
use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, BallQuery, Point, Region, Sampling, ScaleRange};
use crate::heat::{heat_sample, heat_value, HeatConfig};
use crate::quad::{self, Tolerance};
use crate::weight::WeightSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkpConfig {
    pub heat: HeatConfig,
    pub boxes: BoxConfig,
    /// Tolerance of the ball means of `log u` and `log w`.
    pub mean_tol: Tolerance,
    /// Tolerance of the flux integral, in the scale-free variables
    /// `σ = rτ` and arc length divided by `r^{n-1}`.
    pub flux_tol: Tolerance,
    /// The identity passes when the residual is within
    /// `max(rel_budget · lhs, abs_budget)`.
    pub rel_budget: f64,
    pub abs_budget: f64,
}

impl Default for FkpConfig {
    fn default() -> Self {
        Self {
            heat: HeatConfig::default(),
            boxes: BoxConfig::default(),
            mean_tol: Tolerance::new(1e-12, 1e-10),
            flux_tol: Tolerance::new(1e-12, 1e-9),
            rel_budget: 1e-2,
            abs_budget: 1e-4,
        }
    }
}

/// `⨍_Δ log u(y, r²) dy` with its error bound.
pub fn mean_log_heat(spec: &WeightSpec, q: &BallQuery, cfg: &FkpConfig) -> Result<(f64, f64)> {
    if spec.is_constant() {
        return Ok((spec.eval(q.center)?.ln(), 0.0));
    }
    let n = spec.dimension();
    let vol = unit_ball_volume(n) * q.radius.powi(n as i32);
    let est = quad::ball_integral(
        n,
        q.center,
        q.radius,
        &[],
        &[],
        |y| Ok([heat_value(spec, y, q.radius, &cfg.heat)?.ln()]),
        cfg.mean_tol,
    )?;
    Ok((est.value[0] / vol, est.error / vol))
}

pub fn h1(spec: &WeightSpec, q: &BallQuery, cfg: &FkpConfig) -> Result<(f64, f64)> {
    let (lu, eu) = mean_log_heat(spec, q, cfg)?;
    let (lw, ew) = spec.mean_log(q, cfg.mean_tol)?;
    Ok((lu - lw, eu + ew))
}

pub fn h1_tilde(spec: &WeightSpec, q: &BallQuery, cfg: &FkpConfig) -> Result<(f64, f64)> {
    let (lu, eu) = mean_log_heat(spec, q, cfg)?;
    let (m, em) = spec.ball_measure(q, cfg.mean_tol)?;
    let n = spec.dimension();
    let avg = m / (unit_ball_volume(n) * q.radius.powi(n as i32));
    Ok((avg.ln() - lu, eu + em / m))
}

/// The flux term, computed as
/// `-(2/γₙ) ∫₀¹ r^{1-n} ∫_{∂Δ} (w ∗ ψ_{rτ})/(w ∗ φ_{rτ}) · ν dτ`.
/// The integrand stays bounded as `τ → 0`.
pub fn h2(spec: &WeightSpec, q: &BallQuery, cfg: &FkpConfig) -> Result<(f64, f64)> {
    if spec.is_constant() {
        return Ok((0.0, 0.0));
    }
    let n = spec.dimension();
    let (x, r) = (q.center, q.radius);
    let singular = spec.singular_points_in_ball(x, 2.0 * r);
    // Heights at which the heat scale reaches a singular point from the sphere.
    let mut breaks: Vec<f64> = singular
        .iter()
        .map(|p| (p.sub(x).norm() - r).abs() / r)
        .filter(|&t| t > 0.0 && t < 1.0)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let inner = cfg.flux_tol.inner();
    let shell = r.powi(1 - n as i32);
    let est = quad::integrate(
        |tau| {
            let sigma = r * tau;
            let flux = quad::sphere_integral(
                n,
                x,
                r,
                &singular,
                |y, normal| {
                    let h = heat_sample(spec, y, sigma, &cfg.heat)?;
                    Ok([(h.grad[0] * normal.0[0] + h.grad[1] * normal.0[1]) / h.u])
                },
                inner,
            )?;
            Ok([flux.value[0] * shell])
        },
        0.0,
        1.0,
        &breaks,
        cfg.flux_tol,
    )?;
    let c = 2.0 / unit_ball_volume(n);
    Ok((-c * est.value[0], c * est.error))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub x: Point,
    pub r: f64,
    /// `γₙ⁻¹ r⁻ⁿ μ(T_Δ(x,r))`.
    pub lhs: f64,
    pub h1: f64,
    pub h2: f64,
    pub h1_tilde: f64,
    /// `|lhs - 2 h1 - h2/2|`.
    pub residual: f64,
    /// `|lhs - h1 - h2|`.
    pub verbatim_residual: f64,
    /// Largest residual accepted.
    pub budget: f64,
    /// Sum of the quadrature error bounds of all four terms.
    pub quad_error: f64,
    pub passed: bool,
    /// Set when the box mass could not be extrapolated to height zero.
    pub flag: Option<String>,
}

impl IdentityReport {
    /// `h1 + h̃1`, the log of the A∞ ratio of the ball.
    pub fn log_ball_ratio(&self) -> f64 {
        self.h1 + self.h1_tilde
    }
}

pub fn identity_residual(spec: &WeightSpec, q: &BallQuery, cfg: &FkpConfig) -> Result<IdentityReport> {
    let n = spec.dimension();
    let mass = box_mass(spec, Smoothing::Gauss, CarlesonBox::new(*q), &cfg.boxes)?;
    let vol = unit_ball_volume(n) * q.radius.powi(n as i32);
    let lhs = mass.normalized(n);
    let (a, ea) = h1(spec, q, cfg)?;
    let (b, eb) = h2(spec, q, cfg)?;
    let (c, ec) = h1_tilde(spec, q, cfg)?;
    let flag = match mass.tail_kind {
        TailKind::Unbounded => Some("box mass does not converge as the height tends to zero".to_string()),
        TailKind::Plateau => Some("slice mass plateaus near height zero; tail extrapolated".to_string()),
        TailKind::Decaying => None,
    };
    let residual = (lhs - 2.0 * a - 0.5 * b).abs();
    let budget = (cfg.rel_budget * lhs).max(cfg.abs_budget);
    Ok(IdentityReport {
        x: q.center,
        r: q.radius,
        lhs,
        h1: a,
        h2: b,
        h1_tilde: c,
        residual,
        verbatim_residual: (lhs - a - b).abs(),
        budget,
        quad_error: mass.error() / vol + ea + eb + ec,
        passed: residual.is_finite() && residual <= budget,
        flag,
    })
}

pub fn identity_reports(spec: &WeightSpec, family: &[BallQuery], cfg: &FkpConfig) -> Result<Vec<IdentityReport>> {
    family.par_iter().map(|q| identity_residual(spec, q, cfg)).collect()
}

/// Batch reports as CSV, one row per ball.
pub fn reports_csv(reports: &[IdentityReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "x0", "x1", "r", "lhs", "h1", "h2", "h1_tilde", "residual", "verbatim_residual", "budget", "quad_error", "passed",
    ])
    .map_err(|e| Error::Parse(e.to_string()))?;
    for rep in reports {
        w.write_record([
            rep.x.0[0].to_string(),
            rep.x.0[1].to_string(),
            rep.r.to_string(),
            rep.lhs.to_string(),
            rep.h1.to_string(),
            rep.h2.to_string(),
            rep.h1_tilde.to_string(),
            rep.residual.to_string(),
            rep.verbatim_residual.to_string(),
            rep.budget.to_string(),
            rep.quad_error.to_string(),
            rep.passed.to_string(),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerm {
    /// `sup |h̃1| + |h2|` over the family.
    pub value: f64,
    pub witness: BallQuery,
    pub samples: usize,
    /// Quadrature error at the witness.
    pub quad_error: f64,
}

pub fn error_term(spec: &WeightSpec, family: &[BallQuery], cfg: &FkpConfig) -> Result<ErrorTerm> {
    let first = *family
        .first()
        .ok_or_else(|| Error::arg("family", "sampling family is empty"))?;
    let terms: Vec<Result<(f64, f64)>> = family
        .par_iter()
        .map(|q| {
            let (a, ea) = h1_tilde(spec, q, cfg)?;
            let (b, eb) = h2(spec, q, cfg)?;
            Ok((a.abs() + b.abs(), ea + eb))
        })
        .collect();
    let mut best = ErrorTerm {
        value: f64::NEG_INFINITY,
        witness: first,
        samples: family.len(),
        quad_error: 0.0,
    };
    for (q, t) in family.iter().zip(terms) {
        let (v, e) = t?;
        if v > best.value {
            best.value = v;
            best.witness = *q;
            best.quad_error = e;
        }
    }
    Ok(best)
}

pub fn error_term_on(
    spec: &WeightSpec,
    region: &Region,
    scales: &ScaleRange,
    sampling: Sampling,
    cfg: &FkpConfig,
) -> Result<ErrorTerm> {
    error_term(spec, &sampling.balls(spec.dimension(), region, scales), cfg)
}

//! Heat extensions `u(x, r²) = (w ∗ φ_r)(x)`, their spatial gradients, and
//! averages of a weight against the other radial kernels.
//!
//! Gradients are returned in the form `(w ∗ ψ_r)(x)` with `ψ = ∇φ`, so that
//! `∇ₓu(x, r²) = r⁻¹ (w ∗ ψ_r)(x)`.

use std::f64::consts::{E, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ball_volume, BallQuery, Point};
use crate::kernel::{KernelDescriptor, KernelKind, DEFAULT_KAPPA};
use crate::quad::{self, Tolerance};
use crate::special;
use crate::weight::{Family, WeightSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatConfig {
    /// Gaussian convolutions are truncated to `|y - x| ≤ κ r`.
    pub kappa: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            abs_tol: 1e-15,
            rel_tol: 1e-11,
            max_intervals: 4000,
        }
    }
}

impl HeatConfig {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance::new(self.abs_tol, self.rel_tol).with_max_intervals(self.max_intervals)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatSample {
    pub x: Point,
    pub r: f64,
    /// `(w ∗ φ_r)(x)`.
    pub u: f64,
    /// `(w ∗ ψ_r)(x)`; second entry is zero in one dimension.
    pub grad: [f64; 2],
    /// Bound on the mass dropped by truncating at `κ r`.
    pub tail_error: f64,
    pub quad_error: f64,
}

impl HeatSample {
    /// `|(w ∗ ψ_r)(x)| / (w ∗ φ_r)(x)`, equal to `r |∇ₓu| / u`.
    pub fn log_gradient_norm(&self) -> f64 {
        self.grad[0].hypot(self.grad[1]) / self.u
    }
}

/// `∫ w(y) K_r(x - y) dy` and `∫ w(y) (∇K)_r(x - y) dy` over `|y - x| < reach·r`.
pub fn convolve(
    spec: &WeightSpec,
    kernel: &KernelDescriptor,
    x: Point,
    r: f64,
    reach: f64,
    tol: Tolerance,
) -> Result<quad::Estimate<3>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::arg("r", format!("must be positive, got {r}")));
    }
    let n = spec.dimension();
    if kernel.dimension() != n {
        return Err(Error::arg("kernel", "kernel and weight dimensions differ"));
    }
    let window = reach * r;
    if let Family::Plateau { eps, center, width } = spec.family() {
        return plateau_convolve(spec, kernel, x, r, window, (*eps, *center, *width), tol);
    }
    let singular = spec.smoothing_breaks(x, window);
    let radial: Vec<f64> = kernel
        .breaks()
        .into_iter()
        .filter(|&b| b < reach)
        .map(|b| b * r)
        .collect();
    let scale = r.powi(-(n as i32));
    let mut est = quad::ball_integral(
        n,
        x,
        window,
        &singular,
        &radial,
        |y| {
            let w = spec.eval(y)?;
            let d = x.sub(y);
            let dist = if n == 1 { d.0[0].abs() } else { d.norm() };
            let (p, dp) = kernel.profile(dist / r);
            let (g0, g1) = if dist > 0.0 {
                (dp * d.0[0] / dist, dp * d.0[1] / dist)
            } else {
                (0.0, 0.0)
            };
            Ok([w * p, w * g0, w * g1])
        },
        tol,
    )?;
    for v in est.value.iter_mut() {
        *v *= scale;
    }
    est.error *= scale;
    if !est.value.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kernel convolution"));
    }
    Ok(est)
}

/// Plateau weights are `1 + ε·bump`: the constant part contributes the kernel
/// mass, so only the bump support needs quadrature.
fn plateau_convolve(
    spec: &WeightSpec,
    kernel: &KernelDescriptor,
    x: Point,
    r: f64,
    window: f64,
    (eps, center, width): (f64, Point, f64),
    tol: Tolerance,
) -> Result<quad::Estimate<3>> {
    let n = spec.dimension();
    let mass = kernel.moments()?[0];
    let mut est = quad::Estimate {
        value: [mass, 0.0, 0.0],
        error: 0.0,
        evaluations: 0,
    };
    if eps == 0.0 || x.sub(center).norm() >= window + width {
        return Ok(est);
    }
    let scale = r.powi(-(n as i32));
    // Errors are measured against the total, which is at least (1 - |ε|)·mass.
    let bump_tol = Tolerance {
        abs: tol.abs.max(tol.rel * mass * (1.0 - eps.abs()).max(0.0)) / (eps.abs() * scale),
        ..tol
    };
    let tol = bump_tol;
    let integrand = |y: Point| -> Result<[f64; 3]> {
        let b = y.sub(center);
        let b = if n == 1 { b.0[0].abs() } else { b.norm() };
        let g = crate::weight::smooth_bump((b / width).powi(2));
        let d = x.sub(y);
        let dist = if n == 1 { d.0[0].abs() } else { d.norm() };
        if g == 0.0 || dist >= window {
            return Ok([0.0; 3]);
        }
        let (p, dp) = kernel.profile(dist / r);
        let (g0, g1) = if dist > 0.0 {
            (dp * d.0[0] / dist, dp * d.0[1] / dist)
        } else {
            (0.0, 0.0)
        };
        Ok([g * p, g * g0, g * g1])
    };
    let bump = if n == 1 {
        let lo = (x.0[0] - window).max(center.0[0] - width);
        let hi = (x.0[0] + window).min(center.0[0] + width);
        let mut breaks: Vec<f64> = kernel
            .breaks()
            .into_iter()
            .flat_map(|b| [x.0[0] - b * r, x.0[0] + b * r])
            .chain(std::iter::once(x.0[0]))
            .filter(|&t| t > lo && t < hi)
            .collect();
        breaks.sort_by(f64::total_cmp);
        quad::integrate(|t| integrand(Point::d1(t)), lo, hi, &breaks, tol)?
    } else if width <= window {
        let singular: Vec<Point> = if x.sub(center).norm() < width { vec![x] } else { Vec::new() };
        quad::ball_integral(n, center, width, &singular, &[], integrand, tol)?
    } else {
        let radial: Vec<f64> = kernel.breaks().into_iter().map(|b| b * r).filter(|&b| b < window).collect();
        quad::ball_integral(n, x, window, &[], &radial, integrand, tol)?
    };
    for (v, b) in est.value.iter_mut().zip(bump.value) {
        *v += eps * scale * b;
    }
    est.error = eps.abs() * scale * bump.error;
    est.evaluations = bump.evaluations;
    if !est.value.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kernel convolution"));
    }
    Ok(est)
}

/// Relative bounds `(value, gradient)` for the Gaussian mass beyond `κ r`,
/// as multiples of `u`, from the a-priori doubling bound of the weight.
fn gauss_tail_factors(spec: &WeightSpec, kappa: f64) -> (f64, f64) {
    let c = spec.doubling_bound().max(1.0);
    let k0 = kappa.log2().ceil().max(0.0);
    let (mut tv, mut tg) = (0.0, 0.0);
    for k in 0..16 {
        let k = k as f64;
        let reach = 2f64.powf(k) * kappa;
        let log_term = 1.0 - reach * reach + (k + 1.0 + k0) * c.ln();
        let term = log_term.exp();
        tv += term;
        tg += term * 4.0 * reach;
    }
    (tv, tg)
}

/// Heat extension and gradient at `(x, r²)`.
pub fn heat_sample(spec: &WeightSpec, x: Point, r: f64, cfg: &HeatConfig) -> Result<HeatSample> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::arg("r", format!("must be positive, got {r}")));
    }
    let n = spec.dimension() as f64;
    match spec.family() {
        Family::Constant { c } => {
            return Ok(HeatSample {
                x,
                r,
                u: *c,
                grad: [0.0; 2],
                tail_error: 0.0,
                quad_error: 0.0,
            })
        }
        Family::Power { a } if *a == 2.0 => {
            let u = x.dot(x) + 0.5 * n * r * r;
            let g = x.scale(2.0 * r);
            return Ok(HeatSample {
                x,
                r,
                u,
                grad: g.0,
                tail_error: 0.0,
                quad_error: 0.0,
            });
        }
        Family::Power { a } => {
            let (u, grad) = special::power_heat(spec.dimension(), *a, x.0, r);
            return Ok(HeatSample {
                x,
                r,
                u,
                grad,
                tail_error: 0.0,
                quad_error: u * 1e-13,
            });
        }
        _ => {}
    }
    let kernel = KernelDescriptor::gauss(spec.dimension())?;
    let est = convolve(spec, &kernel, x, r, cfg.kappa, cfg.tolerance())?;
    let u = est.value[0];
    if !(u > 0.0) {
        return Err(Error::Positivity(format!("heat extension vanished at {x:?}, r = {r}")));
    }
    let (tv, tg) = gauss_tail_factors(spec, cfg.kappa);
    let tail_error = u * tv.max(tg);
    let target = cfg.abs_tol.max(cfg.rel_tol * u);
    if tail_error > target {
        return Err(Error::ToleranceNotMet {
            estimate: u,
            error: tail_error,
            requested: target,
        });
    }
    Ok(HeatSample {
        x,
        r,
        u,
        grad: [est.value[1], est.value[2]],
        tail_error,
        quad_error: est.error,
    })
}

/// `u(x, r²)`.
pub fn heat_value(spec: &WeightSpec, x: Point, r: f64, cfg: &HeatConfig) -> Result<f64> {
    Ok(heat_sample(spec, x, r, cfg)?.u)
}

/// `(w ∗ ψ_r)(x)`.
pub fn heat_gradient(spec: &WeightSpec, x: Point, r: f64, cfg: &HeatConfig) -> Result<[f64; 2]> {
    Ok(heat_sample(spec, x, r, cfg)?.grad)
}

/// `(K_r ∗ w)(x)` for a non-gradient kernel.
pub fn kernel_average(spec: &WeightSpec, kernel: &KernelDescriptor, x: Point, r: f64, cfg: &HeatConfig) -> Result<f64> {
    let n = spec.dimension();
    match kernel.kind() {
        KernelKind::GaussGradient => Err(Error::arg("kernel", "use heat_gradient for the Gaussian gradient")),
        KernelKind::Gauss => heat_value(spec, x, r, cfg),
        KernelKind::NormalizedIndicator => {
            let (m, _) = spec.ball_measure(&BallQuery::new(x, r)?, cfg.tolerance())?;
            Ok(m / ball_volume(n, r))
        }
        KernelKind::Indicator => {
            let (m, _) = spec.ball_measure(&BallQuery::new(x, r)?, cfg.tolerance())?;
            Ok(m / r.powi(n as i32))
        }
        _ => {
            let reach = kernel.support().unwrap_or(cfg.kappa);
            Ok(convolve(spec, kernel, x, r, reach, cfg.tolerance())?.value[0])
        }
    }
}

/// Value and gradient of `(K_r ∗ w)(x)` for a compactly supported kernel.
pub fn kernel_sample(spec: &WeightSpec, kernel: &KernelDescriptor, x: Point, r: f64, cfg: &HeatConfig) -> Result<HeatSample> {
    match kernel.kind() {
        KernelKind::Gauss | KernelKind::GaussGradient => heat_sample(spec, x, r, cfg),
        _ => {
            let reach = kernel
                .support()
                .ok_or_else(|| Error::arg("kernel", "kernel has no compact support"))?;
            let closed = match spec.family() {
                Family::Constant { c } => Some((c * kernel.moments()?[0], [0.0; 2])),
                Family::Power { a } if *a == 2.0 => {
                    let [m0, m2] = kernel.moments()?;
                    Some((m0 * x.dot(x) + m2 * r * r, x.scale(2.0 * r * m0).0))
                }
                _ => None,
            };
            if let Some((u, grad)) = closed {
                return Ok(HeatSample {
                    x,
                    r,
                    u,
                    grad,
                    tail_error: 0.0,
                    quad_error: 0.0,
                });
            }
            let est = convolve(spec, kernel, x, r, reach, cfg.tolerance())?;
            if !(est.value[0] > 0.0) {
                return Err(Error::Positivity(format!("kernel average vanished at {x:?}, r = {r}")));
            }
            Ok(HeatSample {
                x,
                r,
                u: est.value[0],
                grad: [est.value[1], est.value[2]],
                tail_error: 0.0,
                quad_error: est.error,
            })
        }
    }
}

/// Supremum over a sampled family together with where it was attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub value: f64,
    pub witness: BallQuery,
    pub samples: usize,
}

fn sup_over<F>(family: &[BallQuery], f: F) -> Result<SupEstimate>
where
    F: Fn(&BallQuery) -> Result<f64> + Sync,
{
    let first = *family
        .first()
        .ok_or_else(|| Error::arg("family", "sampling family is empty"))?;
    let values: Vec<Result<f64>> = family.par_iter().map(&f).collect();
    let mut best = SupEstimate {
        value: f64::NEG_INFINITY,
        witness: first,
        samples: family.len(),
    };
    for (q, v) in family.iter().zip(values) {
        let v = v?;
        if v > best.value {
            best.value = v;
            best.witness = *q;
        }
    }
    Ok(best)
}

/// `sup |(w ∗ ψ_R)(x)| / (w ∗ φ_R)(x)` over the family `(x, R)`.
pub fn psi_over_u_sup(spec: &WeightSpec, family: &[BallQuery], cfg: &HeatConfig) -> Result<SupEstimate> {
    sup_over(family, |q| Ok(heat_sample(spec, q.center, q.radius, cfg)?.log_gradient_norm()))
}

/// Offsets `(y - x)/s` used by [`good_doubling_heat_check`].
pub fn heat_check_offsets(n: usize) -> Vec<Point> {
    let ts = [-0.9, -0.5, 0.0, 0.5, 0.9];
    match n {
        1 => ts.iter().map(|&t| Point::d1(t)).collect(),
        _ => ts
            .iter()
            .flat_map(|&a| ts.iter().map(move |&b| Point::d2(a, b)))
            .filter(|p| p.norm() < 1.0)
            .collect(),
    }
}

/// `max |log((φ_s ∗ w)(y) / (χ̃_s ∗ w)(x))|` over `(x, s)` in the family and
/// `y = x + s·t` for the offsets `t`.
pub fn good_doubling_heat_check(spec: &WeightSpec, family: &[BallQuery], cfg: &HeatConfig) -> Result<SupEstimate> {
    let n = spec.dimension();
    let offsets = heat_check_offsets(n);
    let avg = KernelDescriptor::new(KernelKind::NormalizedIndicator, n)?;
    sup_over(family, |q| {
        let base = kernel_average(spec, &avg, q.center, q.radius, cfg)?;
        let mut worst: f64 = 0.0;
        for t in &offsets {
            let y = q.center.add(t.scale(q.radius));
            let u = heat_value(spec, y, q.radius, cfg)?;
            worst = worst.max((u / base).ln().abs());
        }
        Ok(worst)
    })
}

/// Range `[min, max]` of a ratio over a family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRange {
    pub min: f64,
    pub max: f64,
    pub argmin: BallQuery,
    pub argmax: BallQuery,
}

fn range_over<F>(family: &[BallQuery], f: F) -> Result<RatioRange>
where
    F: Fn(&BallQuery) -> Result<f64> + Sync,
{
    let first = *family
        .first()
        .ok_or_else(|| Error::arg("family", "sampling family is empty"))?;
    let values: Vec<Result<f64>> = family.par_iter().map(&f).collect();
    let mut out = RatioRange {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        argmin: first,
        argmax: first,
    };
    for (q, v) in family.iter().zip(values) {
        let v = v?;
        if v < out.min {
            out.min = v;
            out.argmin = *q;
        }
        if v > out.max {
            out.max = v;
            out.argmax = *q;
        }
    }
    Ok(out)
}

/// Range of `u(x, s²) / (χ̃_s ∗ w)(x)`: the heat extension compared with the
/// ball average at the same scale. Identically 1 for constants.
pub fn heat_vs_ball_average(spec: &WeightSpec, family: &[BallQuery], cfg: &HeatConfig) -> Result<RatioRange> {
    let avg = KernelDescriptor::new(KernelKind::NormalizedIndicator, spec.dimension())?;
    range_over(family, |q| {
        let u = heat_value(spec, q.center, q.radius, cfg)?;
        Ok(u / kernel_average(spec, &avg, q.center, q.radius, cfg)?)
    })
}

/// Range of `(φ̃^η_r ∗ w)(x) / (χ_r ∗ w)(x)`; always at least 1 and at most
/// the annulus modulus at `1 + η`.
pub fn thin_approx_ratio(spec: &WeightSpec, eta: f64, family: &[BallQuery], cfg: &HeatConfig) -> Result<RatioRange> {
    let n = spec.dimension();
    let bump = KernelDescriptor::new(KernelKind::EtaBump { eta }, n)?;
    let ind = KernelDescriptor::new(KernelKind::Indicator, n)?;
    range_over(family, |q| {
        let top = kernel_average(spec, &bump, q.center, q.radius, cfg)?;
        let bottom = kernel_average(spec, &ind, q.center, q.radius, cfg)?;
        Ok(top / bottom)
    })
}

/// `|(ψ_r ∗ w)(x) - (ψ_s ∗ w)(y)| / w(Δ(x,r))` along
/// `(y, s) = (x + 2^{-k} r·dir, r(1 + 2^{-k}·dr))`, `k = 1..=steps`.
pub fn gradient_continuity(
    spec: &WeightSpec,
    x: Point,
    r: f64,
    dir: Point,
    dr: f64,
    steps: usize,
    cfg: &HeatConfig,
) -> Result<Vec<f64>> {
    let base = heat_sample(spec, x, r, cfg)?;
    let (mass, _) = spec.ball_measure(&BallQuery::new(x, r)?, cfg.tolerance())?;
    (1..=steps)
        .map(|k| {
            let h = 0.5f64.powi(k as i32);
            let y = x.add(dir.scale(h * r));
            let s = r * (1.0 + h * dr);
            let other = heat_sample(spec, y, s, cfg)?;
            let d = Point(base.grad).sub(Point(other.grad));
            Ok(d.norm() / mass)
        })
        .collect()
}

/// The weight `w(λ·)` for families closed under dilation. Its heat
/// extension satisfies `u_λ(x, r²) = u(λx, (λr)²)`.
pub fn dilated(spec: &WeightSpec, lambda: f64) -> Result<WeightSpec> {
    let n = spec.dimension();
    match spec.family() {
        Family::Constant { c } => WeightSpec::constant(n, *c),
        Family::Plateau { eps, center, width } => WeightSpec::new(
            n,
            Family::Plateau {
                eps: *eps,
                center: center.scale(1.0 / lambda),
                width: width / lambda,
            },
        ),
        _ => Err(Error::arg("spec", "dilation is only provided for closed-form families")),
    }
}

/// `π^{-n/2} e^{-1}`: lower bound of `φ` on the unit ball, used in the
/// doubling comparison `u(x, r²) ≥ π^{-n/2} e^{-1} r^{-n} w(Δ(x,r))`.
pub fn gauss_floor_on_unit_ball(n: usize) -> f64 {
    PI.powf(-(n as f64) / 2.0) / E
}

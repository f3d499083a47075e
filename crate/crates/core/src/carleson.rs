//! The measure `dμ_w = |(w ∗ ψ_s)(x)|² / (w ∗ φ_s)(x)² · dx ds / s` on the
//! upper half-space, its masses on Carleson boxes `T_Δ = Δ × (0, r(Δ))`
//! and sampled Carleson norms. The same machinery with the reference bump in
//! place of the Gaussian gives `μ̃_w`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ball_volume, BallQuery, Point, Region, Sampling, ScaleRange};
use crate::heat::{heat_sample, kernel_sample, HeatConfig, HeatSample};
use crate::kernel::KernelDescriptor;
use crate::quad::{self, Tolerance};
use crate::weight::WeightSpec;

/// Which kernel the logarithmic gradient is taken against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    #[default]
    Gauss,
    ReferenceBump,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonBox {
    pub base: BallQuery,
}

impl CarlesonBox {
    pub fn new(base: BallQuery) -> Self {
        Self { base }
    }

    pub fn height(&self) -> f64 {
        self.base.radius
    }

    /// Boxes over lattice centres × log-spaced radii.
    pub fn family(n: usize, region: &Region, scales: &ScaleRange, sampling: Sampling) -> Vec<CarlesonBox> {
        sampling.balls(n, region, scales).into_iter().map(CarlesonBox::new).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    /// Heights below `r_floor_fraction · r(Δ)` are extrapolated.
    pub r_floor_fraction: f64,
    /// Relative tolerance of the height integral.
    pub s_rel_tol: f64,
    /// Relative tolerance of each horizontal slice integral.
    pub x_rel_tol: f64,
    /// Absolute tolerance on the normalized box mass `|Δ|⁻¹ μ(T_Δ)`; keeps
    /// noise-level weights from chasing relative accuracy on zero.
    pub abs_tol: f64,
    pub max_intervals: usize,
    pub heat: HeatConfig,
}

impl Default for BoxConfig {
    fn default() -> Self {
        Self {
            r_floor_fraction: 2f64.powi(-10),
            s_rel_tol: 1e-7,
            x_rel_tol: 1e-8,
            abs_tol: 1e-300,
            max_intervals: 2000,
            heat: HeatConfig {
                rel_tol: 1e-10,
                ..HeatConfig::default()
            },
        }
    }
}

/// How the slice mass `F(s) = ∫_Δ dμ/ds` behaves as `s → 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    /// `F(s) → 0`; the tail below the floor is quadratically small.
    Decaying,
    /// `F(s)` tends to a non-zero limit (a zero or singularity of the weight
    /// inside Δ). The box mass is finite and the tail is extrapolated, but
    /// the box is flagged.
    Plateau,
    /// `F(s)` grows as `s → 0`; no finite extrapolation is offered.
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxMass {
    pub cbox: CarlesonBox,
    /// `μ(Δ × [r_floor, r(Δ)])`.
    pub resolved: f64,
    /// Extrapolated `μ(Δ × (0, r_floor))`.
    pub tail: f64,
    pub tail_error: f64,
    pub quad_error: f64,
    pub r_floor: f64,
    pub tail_kind: TailKind,
}

impl BoxMass {
    pub fn total(&self) -> f64 {
        self.resolved + self.tail
    }

    /// `|Δ|⁻¹ μ(T_Δ)`.
    pub fn normalized(&self, n: usize) -> f64 {
        self.total() / ball_volume(n, self.cbox.base.radius)
    }

    pub fn error(&self) -> f64 {
        self.quad_error + self.tail_error
    }
}

fn smoothed_sample(
    spec: &WeightSpec,
    smoothing: Smoothing,
    bump: Option<&KernelDescriptor>,
    x: Point,
    s: f64,
    cfg: &HeatConfig,
) -> Result<HeatSample> {
    match smoothing {
        Smoothing::Gauss => heat_sample(spec, x, s, cfg),
        Smoothing::ReferenceBump => kernel_sample(spec, bump.expect("bump kernel"), x, s, cfg),
    }
}

fn bump_for(spec: &WeightSpec, smoothing: Smoothing) -> Result<Option<KernelDescriptor>> {
    Ok(match smoothing {
        Smoothing::Gauss => None,
        Smoothing::ReferenceBump => Some(KernelDescriptor::reference_bump(spec.dimension())?),
    })
}

/// Density of `μ_w` (or `μ̃_w`) with respect to `dx ds` at `(x, s)`.
pub fn mu_density(spec: &WeightSpec, smoothing: Smoothing, x: Point, s: f64, cfg: &HeatConfig) -> Result<f64> {
    let bump = bump_for(spec, smoothing)?;
    let h = smoothed_sample(spec, smoothing, bump.as_ref(), x, s, cfg)?;
    Ok(density_of(&h))
}

fn density_of(h: &HeatSample) -> f64 {
    let g = h.log_gradient_norm();
    g * g / h.r
}

fn slice_mass(
    spec: &WeightSpec,
    smoothing: Smoothing,
    bump: Option<&KernelDescriptor>,
    base: &BallQuery,
    s: f64,
    cfg: &BoxConfig,
) -> Result<(f64, f64)> {
    let singular = spec.smoothing_breaks(base.center, base.radius);
    let abs = cfg.abs_tol * ball_volume(spec.dimension(), base.radius) / base.radius;
    let tol = Tolerance::new(abs.max(1e-300), cfg.x_rel_tol).with_max_intervals(cfg.max_intervals);
    let est = quad::ball_integral(
        spec.dimension(),
        base.center,
        base.radius,
        &singular,
        &[],
        |y| Ok([density_of(&smoothed_sample(spec, smoothing, bump, y, s, &cfg.heat)?)]),
        tol,
    )?;
    Ok((est.value[0], est.error))
}

/// `μ(T_Δ)` with the heights below the floor extrapolated from the slices
/// at `r_floor`, `r_floor/2` and `r_floor/4`.
pub fn box_mass(spec: &WeightSpec, smoothing: Smoothing, cbox: CarlesonBox, cfg: &BoxConfig) -> Result<BoxMass> {
    if !(cfg.r_floor_fraction > 0.0 && cfg.r_floor_fraction < 1.0) {
        return Err(Error::arg("r_floor", "floor fraction must lie in (0, 1)"));
    }
    let r = cbox.height();
    let r_floor = r * cfg.r_floor_fraction;
    if spec.is_constant() {
        return Ok(BoxMass {
            cbox,
            resolved: 0.0,
            tail: 0.0,
            tail_error: 0.0,
            quad_error: 0.0,
            r_floor,
            tail_kind: TailKind::Decaying,
        });
    }
    let bump = bump_for(spec, smoothing)?;
    let base = cbox.base;

    // Height integral in log s: ∫ F(s) ds = ∫ F(e^τ) e^τ dτ.
    let abs = cfg.abs_tol * ball_volume(spec.dimension(), r);
    let s_tol = Tolerance::new(abs.max(1e-300), cfg.s_rel_tol).with_max_intervals(cfg.max_intervals);
    let est = quad::integrate(
        |tau: f64| {
            let s = tau.exp();
            Ok([slice_mass(spec, smoothing, bump.as_ref(), &base, s, cfg)?.0 * s])
        },
        r_floor.ln(),
        r.ln(),
        &[],
        s_tol,
    )?;
    let resolved = est.value[0];

    let f0 = slice_mass(spec, smoothing, bump.as_ref(), &base, r_floor, cfg)?.0;
    let f1 = slice_mass(spec, smoothing, bump.as_ref(), &base, r_floor / 2.0, cfg)?.0;
    let f2 = slice_mass(spec, smoothing, bump.as_ref(), &base, r_floor / 4.0, cfg)?.0;
    let floor = cfg.abs_tol * ball_volume(spec.dimension(), r);
    let (tail, tail_error, tail_kind) = extrapolate_tail(r_floor, f0, f1, f2, resolved, floor);

    Ok(BoxMass {
        cbox,
        resolved,
        tail,
        tail_error,
        quad_error: est.error,
        r_floor,
        tail_kind,
    })
}

/// `∫_0^h F` from `F(h)`, `F(h/2)`, `F(h/4)`: quadratic fit, with the gap to
/// the linear fit through the first two values as the error.
fn extrapolate_tail(h: f64, f0: f64, f1: f64, f2: f64, scale: f64, floor: f64) -> (f64, f64, TailKind) {
    if f0.abs() <= 1e-300 || f0.abs() * h <= (1e-16 * scale.abs()).max(floor) {
        return (0.0, f0.abs() * h, TailKind::Decaying);
    }
    let q = f2 / f0;
    if q > 2.0 {
        return (f64::INFINITY, f64::INFINITY, TailKind::Unbounded);
    }
    // Nodes t = s/h ∈ {1, 1/2, 1/4}; F = a + b t + c t².
    let c = (f0 - 3.0 * f1 + 2.0 * f2) / (3.0 / 8.0);
    let b = (f0 - f1) / 0.5 - c * 1.5;
    let a = f0 - b - c;
    let quadratic = h * (a + b / 2.0 + c / 3.0);
    let b_lin = 2.0 * (f0 - f1);
    let a_lin = f0 - b_lin;
    let linear = h * (a_lin + b_lin / 2.0);
    let kind = if q < 0.5 { TailKind::Decaying } else { TailKind::Plateau };
    (quadratic.max(0.0), (quadratic - linear).abs(), kind)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonEstimate {
    /// `sup |Δ|⁻¹ μ(T_Δ)` over the family (infinite if any box is unbounded).
    pub value: f64,
    pub witness: CarlesonBox,
    pub family: Vec<CarlesonBox>,
    pub r_floor_fraction: f64,
    /// Error bound of the witness box, normalized.
    pub quad_error: f64,
    /// Boxes whose small-height tail plateaued.
    pub plateau_boxes: usize,
    pub unbounded_boxes: usize,
}

impl CarlesonEstimate {
    pub fn is_flagged(&self) -> bool {
        self.unbounded_boxes > 0
    }
}

pub fn carleson_norm(
    spec: &WeightSpec,
    smoothing: Smoothing,
    family: &[CarlesonBox],
    cfg: &BoxConfig,
) -> Result<CarlesonEstimate> {
    let first = *family
        .first()
        .ok_or_else(|| Error::arg("family", "sampling family is empty"))?;
    let n = spec.dimension();
    let masses: Vec<Result<BoxMass>> = family.par_iter().map(|b| box_mass(spec, smoothing, *b, cfg)).collect();
    let mut est = CarlesonEstimate {
        value: 0.0,
        witness: first,
        family: family.to_vec(),
        r_floor_fraction: cfg.r_floor_fraction,
        quad_error: 0.0,
        plateau_boxes: 0,
        unbounded_boxes: 0,
    };
    let mut best = f64::NEG_INFINITY;
    for m in masses {
        let m = m?;
        match m.tail_kind {
            TailKind::Plateau => est.plateau_boxes += 1,
            TailKind::Unbounded => est.unbounded_boxes += 1,
            TailKind::Decaying => {}
        }
        let v = m.normalized(n);
        if v > best {
            best = v;
            est.witness = m.cbox;
            est.quad_error = m.error() / ball_volume(n, m.cbox.base.radius);
        }
    }
    est.value = best.max(0.0);
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> BoxConfig {
        BoxConfig::default()
    }

    #[test]
    fn constant_weight_has_no_mass() {
        let one = WeightSpec::constant(1, 2.0).unwrap();
        let b = CarlesonBox::new(BallQuery::d1(0.3, 0.7).unwrap());
        assert_eq!(box_mass(&one, Smoothing::Gauss, b, &cfg()).unwrap().total(), 0.0);
        assert_eq!(mu_density(&one, Smoothing::Gauss, Point::d1(0.1), 0.2, &HeatConfig::default()).unwrap(), 0.0);
        assert_eq!(
            mu_density(&one, Smoothing::ReferenceBump, Point::d1(0.1), 0.2, &HeatConfig::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn square_weight_density_closed_form_and_log_gradient() {
        let w = WeightSpec::power(1, 2.0).unwrap();
        let hc = HeatConfig::default();
        for (x, r) in [(0.5, 0.3), (1.0, 1.0), (-2.0, 0.1)] {
            let got = mu_density(&w, Smoothing::Gauss, Point::d1(x), r, &hc).unwrap();
            let want = 4.0 * x * x * r / (x * x + r * r / 2.0).powi(2);
            assert_relative_eq!(got, want, max_relative = 1e-14);
            // |∇ log u|² r by central differences of log u.
            let h = 1e-5;
            let lu = |y: f64| crate::heat::heat_value(&w, Point::d1(y), r, &hc).unwrap().ln();
            let grad = (lu(x + h) - lu(x - h)) / (2.0 * h);
            assert_relative_eq!(grad * grad * r, got, max_relative = 1e-7);
        }
        assert_eq!(mu_density(&w, Smoothing::Gauss, Point::ORIGIN, 0.5, &hc).unwrap(), 0.0);
    }

    #[test]
    fn square_weight_box_mass_matches_tensor_riemann_sum() {
        // Oracle: midpoint rule on the closed-form density over
        // [0.5, 1.5] × (0, 0.5), 4000 × 4000 cells.
        let w = WeightSpec::power(1, 2.0).unwrap();
        let m = box_mass(&w, Smoothing::Gauss, CarlesonBox::new(BallQuery::d1(1.0, 0.5).unwrap()), &cfg()).unwrap();
        assert_eq!(m.tail_kind, TailKind::Decaying);
        let k = 4000;
        let (hx, hs) = (1.0 / k as f64, 0.5 / k as f64);
        let mut sum = 0.0;
        for i in 0..k {
            let x = 0.5 + (i as f64 + 0.5) * hx;
            for j in 0..k {
                let s = (j as f64 + 0.5) * hs;
                sum += 4.0 * x * x * s / (x * x + s * s / 2.0).powi(2);
            }
        }
        sum *= hx * hs;
        assert_relative_eq!(m.total(), sum, max_relative = 1e-6);
    }

    #[test]
    fn power_weight_box_is_self_similar() {
        let w = WeightSpec::power(1, 0.1).unwrap();
        let at = |r: f64| {
            let m = box_mass(&w, Smoothing::Gauss, CarlesonBox::new(BallQuery::d1(0.0, r).unwrap()), &cfg()).unwrap();
            assert_eq!(m.tail_kind, TailKind::Plateau);
            m.normalized(1)
        };
        let base = at(1.0);
        assert!(base.is_finite() && base > 0.0);
        for lambda in [2.0, 4.0] {
            assert_relative_eq!(at(lambda), base, max_relative = 1e-6);
        }
    }

    #[test]
    fn centred_power_box_matches_scaling_oracle() {
        // For |x|^a and Δ = Δ(0,1), the slice mass F(s) = ∫_{-1}^{1} d(x,s) dx
        // with d(x,s) = s⁻¹ G(x/s), so ∫_0^1 F(s) ds = ∫_0^1 ∫_{-1/s}^{1/s} G.
        // Compute G once on a line and integrate the self-similar form.
        let a = 0.1;
        let w = WeightSpec::power(1, a).unwrap();
        let hc = HeatConfig::default();
        let g = |t: f64| -> f64 {
            let h = crate::heat::heat_sample(&w, Point::d1(t), 1.0, &hc).unwrap();
            let q = h.grad[0] / h.u;
            q * q
        };
        // ∫_0^1 ∫_{-1/s}^{1/s} G(t) dt ds = ∫_R G(t) min(1, 1/|t|) dt.
        let tol = Tolerance::new(1e-14, 1e-10);
        let inner = quad::integrate_scalar(|t| Ok(g(t)), 0.0, 1.0, &[], tol).unwrap().0;
        let outer = quad::integrate_scalar(|u: f64| {
            // t = 1/u on (1, ∞): G(1/u)·u·u^{-2}
            if u == 0.0 { return Ok(0.0); }
            Ok(g(1.0 / u) / u)
        }, 0.0, 1.0, &[], tol)
        .unwrap()
        .0;
        let oracle = 2.0 * (inner + outer) / 2.0;
        let m = box_mass(&w, Smoothing::Gauss, CarlesonBox::new(BallQuery::d1(0.0, 1.0).unwrap()), &cfg()).unwrap();
        assert_relative_eq!(m.normalized(1), oracle, max_relative = 1e-5);
    }

    #[test]
    fn norm_increases_with_exponent() {
        let family = CarlesonBox::family(1, &Region::interval(-1.0, 1.0), &ScaleRange::new(0.25, 1.0).unwrap(), Sampling::new(5, 3));
        let mut last = 0.0;
        for a in [0.05, 0.1, 0.2, 0.4] {
            let w = WeightSpec::power(1, a).unwrap();
            let est = carleson_norm(&w, Smoothing::Gauss, &family, &cfg()).unwrap();
            assert!(est.value > last, "a = {a}: {} <= {last}", est.value);
            assert!(!est.is_flagged());
            last = est.value;
        }
    }

    #[test]
    fn bump_norm_scales_quadratically() {
        let family = CarlesonBox::family(1, &Region::interval(-1.0, 1.0), &ScaleRange::new(0.25, 2.0).unwrap(), Sampling::new(5, 4));
        let mut ratios = Vec::new();
        for eps in [0.1, 0.05, 0.025] {
            let w = WeightSpec::plateau(1, eps).unwrap();
            let est = carleson_norm(&w, Smoothing::Gauss, &family, &cfg()).unwrap();
            ratios.push(est.value / (eps * eps));
        }
        for pair in ratios.windows(2) {
            assert!((pair[0] / pair[1] - 1.0).abs() < 0.15, "{ratios:?}");
        }
    }

    #[test]
    fn tilde_version_is_comparable_for_square_weight() {
        let w = WeightSpec::power(1, 2.0).unwrap();
        let family = CarlesonBox::family(1, &Region::interval(0.5, 2.0), &ScaleRange::new(0.25, 1.0).unwrap(), Sampling::new(3, 3));
        let plain = carleson_norm(&w, Smoothing::Gauss, &family, &cfg()).unwrap();
        let tilde = carleson_norm(&w, Smoothing::ReferenceBump, &family, &cfg()).unwrap();
        assert!(tilde.value > 0.0);
        let ratio = tilde.value / plain.value;
        assert!(ratio > 0.1 && ratio < 10.0, "{ratio}");
    }

    #[test]
    fn tail_extrapolation_is_exact_for_quadratics() {
        let f = |s: f64| 0.3 + 2.0 * s - 5.0 * s * s;
        let h = 0.01;
        let (tail, _, kind) = extrapolate_tail(h, f(h), f(h / 2.0), f(h / 4.0), 1.0, 0.0);
        let exact = 0.3 * h + h * h - 5.0 * h * h * h / 3.0;
        assert_relative_eq!(tail, exact, max_relative = 1e-10);
        assert_eq!(kind, TailKind::Plateau);
        let (_, _, kind) = extrapolate_tail(h, 1.0, 2.0, 8.0, 1.0, 0.0);
        assert_eq!(kind, TailKind::Unbounded);
        let g = |s: f64| 3.0 * s;
        let (tail, err, kind) = extrapolate_tail(h, g(h), g(h / 2.0), g(h / 4.0), 1.0, 0.0);
        assert_eq!(kind, TailKind::Decaying);
        assert_relative_eq!(tail, 1.5 * h * h, max_relative = 1e-10);
        assert!(err < 1e-15);
    }
}

//! Radial convolution kernels at unit scale.
//!
//! Every kernel used by the crate is radial, `K(z) = P(|z|)`, so a kernel is
//! described by its profile `P`, the profile derivative `P'` (giving
//! `∇K(z) = P'(|z|) z/|z|`), a support radius and the radii where `P` is not
//! smooth. The scaled kernel is `K_r(z) = r^{-n} K(z/r)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::unit_ball_volume;
use crate::quad::{self, Tolerance};

/// Default horizontal truncation of Gaussian convolutions.
pub const DEFAULT_KAPPA: f64 = 8.0;

/// Radius of the indicator inside the reference bump.
const BUMP_CORE: f64 = 1.5;
/// Mollifier radius used for the reference bump.
const BUMP_MOLLIFIER: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    /// `π^{-n/2} e^{-|z|²}`.
    Gauss,
    /// `∇` of the Gaussian; averages against it are gradients.
    GaussGradient,
    /// `1_{Δ(0,1)}`.
    Indicator,
    /// `1_{Δ(0,1)} / |Δ(0,1)|`.
    NormalizedIndicator,
    /// Smooth radial bump with unit mass, flat on `Δ(0,5/4)`, supported in
    /// `Δ(0,7/4)`.
    ReferenceBump,
    /// `1_{Δ(0,1+η/2)} ∗ (reference bump)_{η/4}`: equal to 1 on `Δ(0,1)`,
    /// supported in `Δ(0,1+η)`.
    EtaBump { eta: f64 },
    /// `1_{Δ(0,κ)} · min(φ, π^{-n/2} - 1/κ)`.
    TruncatedGauss { kappa: f64 },
}

/// Cubic Hermite table of a radial profile on a band `[flat, support]`;
/// constant below the band and zero above it.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialTable {
    flat_radius: f64,
    flat_value: f64,
    support: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// `∫₀^∞ P(ρ) ρ^j dρ` for `j = 0..4`, exact for the interpolant.
    radial_moments: [f64; 4],
}

impl RadialTable {
    fn build(flat_radius: f64, flat_value: f64, support: f64, nodes: usize, f: impl Fn(f64) -> (f64, f64)) -> Self {
        let step = (support - flat_radius) / (nodes - 1) as f64;
        let (mut values, mut slopes) = (Vec::with_capacity(nodes), Vec::with_capacity(nodes));
        for i in 0..nodes {
            let rho = flat_radius + step * i as f64;
            let (p, dp) = if i == 0 {
                (flat_value, 0.0)
            } else if i == nodes - 1 {
                (0.0, 0.0)
            } else {
                f(rho)
            };
            values.push(p);
            slopes.push(dp);
        }
        let mut table = Self {
            flat_radius,
            flat_value,
            support,
            step,
            values,
            slopes,
            radial_moments: [0.0; 4],
        };
        table.radial_moments = table.integrate_moments();
        table
    }

    // Four-point Gauss-Legendre per cell integrates cubic × ρ³ exactly.
    fn integrate_moments(&self) -> [f64; 4] {
        const NODES: [(f64, f64); 4] = [
            (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
            (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        ];
        let mut m = [0.0; 4];
        for (j, mj) in m.iter_mut().enumerate() {
            *mj = self.flat_value * self.flat_radius.powi(j as i32 + 1) / (j as f64 + 1.0);
        }
        for i in 0..self.values.len() - 1 {
            let a = self.flat_radius + self.step * i as f64;
            let half = 0.5 * self.step;
            for (t, wt) in NODES {
                let rho = a + half * (1.0 + t);
                let p = self.eval(rho).0 * wt * half;
                let mut pw = 1.0;
                for mj in m.iter_mut() {
                    *mj += p * pw;
                    pw *= rho;
                }
            }
        }
        m
    }

    /// `(P(ρ), P'(ρ))`.
    pub fn eval(&self, rho: f64) -> (f64, f64) {
        if rho <= self.flat_radius {
            return (self.flat_value, 0.0);
        }
        if rho >= self.support {
            return (0.0, 0.0);
        }
        let t = (rho - self.flat_radius) / self.step;
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let s = t - i as f64;
        let h = self.step;
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let p = (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * m1;
        let dp = ((6.0 * s2 - 6.0 * s) * p0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * p1 + (3.0 * s2 - 2.0 * s) * m1) / h;
        (p, dp)
    }

    pub fn flat_radius(&self) -> f64 {
        self.flat_radius
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Node values as `rho,value,derivative` rows.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("rho,value,derivative\n");
        for (i, (p, dp)) in self.values.iter().zip(&self.slopes).enumerate() {
            let rho = self.flat_radius + self.step * i as f64;
            out.push_str(&format!("{rho},{p},{dp}\n"));
        }
        out
    }
}

/// Standard mollifier `c·exp(-1/(1-|z|²))` with unit mass on the unit ball.
fn mollifier_profile(n: usize) -> impl Fn(f64) -> f64 {
    let raw = |t: f64| if t >= 1.0 { 0.0 } else { (-1.0 / (1.0 - t * t)).exp() };
    let tol = Tolerance::new(1e-16, 1e-14);
    let mass = match n {
        1 => 2.0 * quad::integrate_scalar(|t| Ok(raw(t)), 0.0, 1.0, &[], tol).unwrap().0,
        _ => 2.0 * PI * quad::integrate_scalar(|t| Ok(t * raw(t)), 0.0, 1.0, &[], tol).unwrap().0,
    };
    move |t: f64| raw(t) / mass
}

/// `(P, P')` of `1_{Δ(0,R)} ∗ k` at radius `rho`, for a radial kernel `k`
/// supported in `Δ(0, s)`.
fn indicator_convolution(n: usize, big_r: f64, k: &dyn Fn(f64) -> f64, s: f64, rho: f64) -> (f64, f64) {
    let tol = Tolerance::new(1e-15, 1e-13).with_max_intervals(20_000);
    match n {
        1 => {
            // ∫_0^s k(t) [1(|ρ+t|<R) + 1(|ρ-t|<R)] dt and its ρ-derivative.
            let breaks = [(big_r - rho).abs(), big_r + rho];
            let p = quad::integrate_scalar(
                |t| {
                    let hits = ((rho + t).abs() < big_r) as u8 + ((rho - t).abs() < big_r) as u8;
                    Ok(k(t) * hits as f64)
                },
                0.0,
                s,
                &breaks,
                tol,
            )
            .map(|v| v.0)
            .unwrap_or(f64::NAN);
            let dp = k((rho + big_r).abs()) - k((rho - big_r).abs());
            (p, dp)
        }
        _ => {
            let arc = |t: f64| -> f64 {
                if rho == 0.0 {
                    return if t < big_r { 2.0 * PI } else { 0.0 };
                }
                let c = ((rho * rho + t * t - big_r * big_r) / (2.0 * rho * t)).clamp(-1.0, 1.0);
                2.0 * c.acos()
            };
            let breaks = [(big_r - rho).abs(), big_r + rho];
            let p = quad::integrate_scalar(|t| Ok(k(t) * t * arc(t)), 0.0, s, &breaks, tol)
                .map(|v| v.0)
                .unwrap_or(f64::NAN);
            // Derivative as a boundary integral over ∂Δ(ρe₁, R).
            let dp = quad::integrate_scalar(
                |th: f64| {
                    let (x, y) = (rho + big_r * th.cos(), big_r * th.sin());
                    Ok(k(x.hypot(y)) * th.cos() * big_r)
                },
                0.0,
                2.0 * PI,
                &[PI],
                tol,
            )
            .map(|v| v.0)
            .unwrap_or(f64::NAN);
            (p, dp)
        }
    }
}

fn reference_table(n: usize) -> Arc<RadialTable> {
    static TABLES: OnceLock<[Arc<RadialTable>; 2]> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        let make = |n: usize| {
            let m = mollifier_profile(n);
            let delta = BUMP_MOLLIFIER;
            let k = move |t: f64| m(t / delta) / delta.powi(n as i32);
            let norm = unit_ball_volume(n) * BUMP_CORE.powi(n as i32);
            Arc::new(RadialTable::build(
                BUMP_CORE - delta,
                1.0 / norm,
                BUMP_CORE + delta,
                1025,
                |rho| {
                    let (p, dp) = indicator_convolution(n, BUMP_CORE, &k, delta, rho);
                    (p / norm, dp / norm)
                },
            ))
        };
        [make(1), make(2)]
    });
    tables[n - 1].clone()
}

fn eta_table(n: usize, eta: f64) -> Arc<RadialTable> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<RadialTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&(n, eta.to_bits())) {
        return t.clone();
    }
    let inner = reference_table(n);
    let delta = eta / 4.0;
    let k = move |t: f64| inner.eval(t / delta).0 / delta.powi(n as i32);
    let reach = delta * (BUMP_CORE + BUMP_MOLLIFIER);
    let big_r = 1.0 + eta / 2.0;
    let table = Arc::new(RadialTable::build(big_r - reach, 1.0, big_r + reach, 1025, |rho| {
        indicator_convolution(n, big_r, &k, reach, rho)
    }));
    cache.lock().unwrap().insert((n, eta.to_bits()), table.clone());
    table
}

/// A kernel of a given kind in dimension `n`, with its lookup table when the
/// profile is tabulated.
#[derive(Clone, Debug)]
pub struct KernelDescriptor {
    kind: KernelKind,
    n: usize,
    table: Option<Arc<RadialTable>>,
}

impl KernelDescriptor {
    pub fn new(kind: KernelKind, n: usize) -> Result<Self> {
        if !(n == 1 || n == 2) {
            return Err(Error::arg("n", format!("dimension {n} is not supported")));
        }
        let table = match kind {
            KernelKind::ReferenceBump => Some(reference_table(n)),
            KernelKind::EtaBump { eta } => {
                if !(eta > 0.0 && eta < 1.0) {
                    return Err(Error::arg("eta", format!("must lie in (0, 1), got {eta}")));
                }
                Some(eta_table(n, eta))
            }
            KernelKind::TruncatedGauss { kappa } => {
                if !(kappa > 1.0 && kappa.is_finite()) {
                    return Err(Error::arg("kappa", format!("must exceed 1, got {kappa}")));
                }
                if 1.0 / kappa >= PI.powf(-(n as f64) / 2.0) {
                    return Err(Error::arg("kappa", "cap π^{-n/2} - 1/κ must be positive"));
                }
                None
            }
            _ => None,
        };
        Ok(Self { kind, n, table })
    }

    pub fn gauss(n: usize) -> Result<Self> {
        Self::new(KernelKind::Gauss, n)
    }

    pub fn reference_bump(n: usize) -> Result<Self> {
        Self::new(KernelKind::ReferenceBump, n)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn table(&self) -> Option<&RadialTable> {
        self.table.as_deref()
    }

    fn gauss_profile(&self, rho: f64) -> (f64, f64) {
        let p = PI.powf(-(self.n as f64) / 2.0) * (-rho * rho).exp();
        (p, -2.0 * rho * p)
    }

    /// `(P(ρ), P'(ρ))` at unit scale.
    pub fn profile(&self, rho: f64) -> (f64, f64) {
        match self.kind {
            KernelKind::Gauss | KernelKind::GaussGradient => self.gauss_profile(rho),
            KernelKind::Indicator => ((rho < 1.0) as u8 as f64, 0.0),
            KernelKind::NormalizedIndicator => ((rho < 1.0) as u8 as f64 / unit_ball_volume(self.n), 0.0),
            KernelKind::ReferenceBump | KernelKind::EtaBump { .. } => self.table.as_ref().unwrap().eval(rho),
            KernelKind::TruncatedGauss { kappa } => {
                if rho >= kappa {
                    return (0.0, 0.0);
                }
                let cap = PI.powf(-(self.n as f64) / 2.0) - 1.0 / kappa;
                let (p, dp) = self.gauss_profile(rho);
                if p > cap {
                    (cap, 0.0)
                } else {
                    (p, dp)
                }
            }
        }
    }

    /// Support radius at unit scale; `None` for the untruncated Gaussian.
    pub fn support(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Gauss | KernelKind::GaussGradient => None,
            KernelKind::Indicator | KernelKind::NormalizedIndicator => Some(1.0),
            KernelKind::TruncatedGauss { kappa } => Some(kappa),
            KernelKind::ReferenceBump | KernelKind::EtaBump { .. } => Some(self.table.as_ref().unwrap().support()),
        }
    }

    /// Radii where the profile is not smooth (table band edges included).
    pub fn breaks(&self) -> Vec<f64> {
        match self.kind {
            KernelKind::Gauss | KernelKind::GaussGradient => Vec::new(),
            KernelKind::Indicator | KernelKind::NormalizedIndicator => vec![1.0],
            KernelKind::TruncatedGauss { kappa } => {
                let cap = PI.powf(-(self.n as f64) / 2.0) - 1.0 / kappa;
                let knee = (-(cap * PI.powf(self.n as f64 / 2.0)).ln()).sqrt();
                vec![knee, kappa]
            }
            KernelKind::ReferenceBump | KernelKind::EtaBump { .. } => {
                let t = self.table.as_ref().unwrap();
                vec![t.flat_radius(), t.support()]
            }
        }
    }

    /// `(∫K, ∫|z|²K)` at unit scale.
    pub fn moments(&self) -> Result<[f64; 2]> {
        let n = self.n;
        let shell = if n == 1 { 2.0 } else { 2.0 * PI };
        match self.kind {
            KernelKind::Gauss | KernelKind::GaussGradient => Ok([1.0, 0.5 * n as f64]),
            KernelKind::Indicator => Ok([unit_ball_volume(n), shell / (n as f64 + 2.0)]),
            KernelKind::NormalizedIndicator => Ok([1.0, shell / (n as f64 + 2.0) / unit_ball_volume(n)]),
            KernelKind::ReferenceBump | KernelKind::EtaBump { .. } => {
                let m = &self.table.as_ref().unwrap().radial_moments;
                Ok([shell * m[n - 1], shell * m[n + 1]])
            }
            KernelKind::TruncatedGauss { kappa } => {
                let tol = Tolerance::new(1e-15, 1e-13).with_max_intervals(20_000);
                let power = n as i32 - 1;
                let est = quad::integrate(
                    |rho| {
                        let p = self.profile(rho).0 * rho.powi(power);
                        Ok([p, p * rho * rho])
                    },
                    0.0,
                    kappa,
                    &self.breaks(),
                    tol,
                )?;
                Ok([shell * est.value[0], shell * est.value[1]])
            }
        }
    }

    /// Numerical `‖K‖₁`.
    pub fn l1_norm(&self) -> Result<f64> {
        let reach = self.support().unwrap_or(DEFAULT_KAPPA * 1.5);
        let tol = Tolerance::new(1e-15, 1e-13).with_max_intervals(20_000);
        let shell = match self.n {
            1 => 2.0,
            _ => 2.0 * PI,
        };
        let power = self.n as i32 - 1;
        let (v, _) = quad::integrate_scalar(
            |rho| Ok(self.profile(rho).0.abs() * rho.powi(power)),
            0.0,
            reach,
            &self.breaks(),
            tol,
        )?;
        Ok(shell * v)
    }
}

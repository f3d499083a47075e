//! The perturbation experiment: for `A_ε = (1 + ε·b)I` with a fixed bump
//! `b`, compare the weak-DKP norm of `A_ε` with the Carleson norm of the
//! elliptic measure at infinity and its A∞ characteristic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DkpError, Result};
use crate::field::{Analytic, BoxGrid, Bump, CoefficientField};
use crate::green::{elliptic_measure_infinity, green_at_infinity, BoundaryDensity, GreenConfig};
use crate::oscillation::{weak_dkp_norm, OscillationConfig};
use fkplab::{
    ainfty_constant, carleson_norm, BoxConfig, CarlesonBox, GridWeight, HeatConfig, Outside, Region, Sampling, ScaleRange,
    Smoothing, Tolerance, WeightSpec,
};

/// `ω^∞` as a sampled weight on the boundary cell centres, extended by the
/// edge values.
pub fn density_weight(density: &BoundaryDensity) -> Result<WeightSpec> {
    let grid = GridWeight::new_1d(density.ys.clone(), density.density.clone(), Outside::Clamp)?;
    Ok(WeightSpec::grid(grid)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: BoxGrid,
    pub lambda: f64,
    pub bump_center: [f64; 2],
    pub bump_radius: f64,
    pub epsilons: Vec<f64>,
    pub green: GreenConfig,
    pub oscillation: OscillationConfig,
    /// Box centres and radii shared by `ν`, `μ̃_ω` and the A∞ balls.
    pub centers: [f64; 2],
    pub radii: [f64; 2],
    pub sampling: Sampling,
    pub boxes: BoxConfig,
    pub ainfty_tol: Tolerance,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: BoxGrid {
                half_width: 8.0,
                height: 16.0,
                ny: 256,
                ns: 256,
            },
            lambda: 2.0,
            bump_center: [0.0, 1.0],
            bump_radius: 0.75,
            epsilons: vec![0.2, 0.1, 0.05],
            green: GreenConfig::default(),
            oscillation: OscillationConfig::default(),
            centers: [-2.0, 2.0],
            radii: [0.25, 2.0],
            sampling: Sampling::new(9, 8),
            boxes: BoxConfig {
                r_floor_fraction: 2f64.powi(-8),
                s_rel_tol: 1e-4,
                x_rel_tol: 1e-5,
                abs_tol: 1e-10,
                max_intervals: 2000,
                heat: HeatConfig {
                    rel_tol: 1e-8,
                    ..HeatConfig::default()
                },
            },
            ainfty_tol: Tolerance::new(1e-12, 1e-9),
        }
    }
}

impl ExperimentConfig {
    pub fn field(&self, eps: f64) -> Result<CoefficientField> {
        let family = if eps == 0.0 {
            Analytic::Identity
        } else {
            Analytic::Bumps {
                bumps: vec![Bump {
                    eps,
                    center: self.bump_center,
                    radius: self.bump_radius,
                }],
            }
        };
        CoefficientField::analytic(self.grid, self.lambda, &family)
    }

    pub fn family(&self) -> Result<Vec<CarlesonBox>> {
        let region = Region::interval(self.centers[0], self.centers[1]);
        let scales = ScaleRange::new(self.radii[0], self.radii[1])?;
        Ok(CarlesonBox::family(1, &region, &scales, self.sampling))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub eps: f64,
    /// `‖ν‖_C`, the weak-DKP norm.
    pub nu_norm: f64,
    /// `‖μ̃_ω‖_C` with the reference bump.
    pub mu_tilde_norm: f64,
    pub ainfty: f64,
    /// `‖μ̃_ω‖_C / ‖ν‖_C`, absent when `ν = 0`.
    pub ratio: Option<f64>,
    /// Sub-resolution share of the `ν` witness.
    pub nu_tail: f64,
    pub mu_tilde_error: f64,
    pub ainfty_error: f64,
    pub sequence_gap: f64,
    pub limit_gap: f64,
    pub riesz_flagged: bool,
    /// Boxes of `μ̃_ω` whose small-height tail did not decay.
    pub mu_tilde_flagged: bool,
}

impl ExperimentRow {
    pub fn is_flagged(&self) -> bool {
        self.riesz_flagged || self.mu_tilde_flagged
    }
}

/// One row of the experiment for a given field.
pub fn experiment_row(eps: f64, field: &CoefficientField, cfg: &ExperimentConfig) -> Result<(ExperimentRow, BoundaryDensity)> {
    let family = cfg.family()?;
    let green = green_at_infinity(field, &cfg.green)?;
    let density = elliptic_measure_infinity(field, &green, &cfg.green)?;
    let omega = density_weight(&density)?;
    let nu = weak_dkp_norm(field, &family, &cfg.oscillation)?;
    let mu = carleson_norm(&omega, Smoothing::ReferenceBump, &family, &cfg.boxes)?;
    let balls: Vec<_> = family.iter().map(|b| b.base).collect();
    let a = ainfty_constant(&omega, &balls, cfg.ainfty_tol)?;
    let ratio = (nu.value > 0.0).then(|| mu.value / nu.value);
    let row = ExperimentRow {
        eps,
        nu_norm: nu.value,
        mu_tilde_norm: mu.value,
        ainfty: a.value,
        ratio,
        nu_tail: nu.quad_error,
        mu_tilde_error: mu.quad_error,
        ainfty_error: a.quad_error,
        sequence_gap: green.sequence_gaps.last().copied().unwrap_or(0.0),
        limit_gap: green.limit_gap,
        riesz_flagged: density.flagged,
        mu_tilde_flagged: mu.is_flagged(),
    };
    Ok((row, density))
}

/// Rows for every `ε` of the configuration, in order. Rows run in parallel.
pub fn dkp_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    if cfg.epsilons.is_empty() {
        return Err(DkpError::InvalidField("experiment needs at least one eps".into()));
    }
    cfg.epsilons
        .par_iter()
        .map(|&eps| {
            let field = cfg.field(eps)?;
            experiment_row(eps, &field, cfg).map(|(row, _)| row)
        })
        .collect()
}

/// The largest and smallest recorded ratio; `max/min` bounds the
/// comparability constant across rows.
pub fn ratio_range(rows: &[ExperimentRow]) -> Option<(f64, f64)> {
    let r: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    if r.is_empty() {
        return None;
    }
    Some(r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
}

pub const EXPERIMENT_CSV_HEADER: &str = "eps,nu_norm,mu_tilde_norm,ainfty,ratio,nu_tail,mu_tilde_error,ainfty_error,flagged";

pub fn experiment_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from(EXPERIMENT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let ratio = r.ratio.map_or_else(String::new, |v| v.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.eps,
            r.nu_norm,
            r.mu_tilde_norm,
            r.ainfty,
            ratio,
            r.nu_tail,
            r.mu_tilde_error,
            r.ainfty_error,
            r.is_flagged()
        ));
    }
    out
}

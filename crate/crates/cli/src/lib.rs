//! Library side of the `fkplab` command: configuration handling and the
//! subcommands, each of which writes JSON or CSV artifacts into the output
//! directory.

pub mod args;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

pub use config::{Overrides, RunConfig, SpecRef};
pub use error::{CliError, Result};

use fkplab::ainfty::{sweep_csv, theorem_sweep};
use fkplab::fkp::{identity_reports, reports_csv};
use fkplab::weight::{doubling_constant, good_doubling_deficit, GoodDoublingSampling};
use fkplab::{
    ainfty_constant, carleson_norm, BallQuery, BoxConfig, CarlesonBox, CarlesonEstimate, FkpConfig, HeatConfig,
    KernelDescriptor, KernelKind, Smoothing,
};
use fkplab_dkp::experiment::ratio_range;
use fkplab_dkp::{dkp_experiment, elliptic_measure_infinity, experiment_csv, green_at_infinity};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Task {
    WeightAnalyze,
    Carleson,
    FkpCheck,
    Sweep,
    DkpSolve,
    DkpExperiment,
    KernelTable { kind: KernelKind, n: usize },
}

/// What a run produced. `flagged` runs completed but some result missed its
/// tolerance or validation check.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub flagged: bool,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.flagged {
            2
        } else {
            0
        }
    }
}

struct Writer<'a> {
    dir: &'a Path,
    outcome: Outcome,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir,
            outcome: Outcome::default(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        })?;
        self.outcome.artifacts.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value).expect("artifact serializes");
        body.push('\n');
        self.text(name, &body)
    }

    fn finish(mut self, flagged: bool) -> Outcome {
        self.outcome.flagged = flagged;
        self.outcome
    }
}

/// Box tolerances derived from the run tolerance.
pub fn box_config(cfg: &RunConfig) -> BoxConfig {
    BoxConfig {
        s_rel_tol: (100.0 * cfg.tol).min(1e-3),
        x_rel_tol: (10.0 * cfg.tol).min(1e-4),
        heat: HeatConfig {
            rel_tol: cfg.tol / 10.0,
            ..HeatConfig::default()
        },
        ..BoxConfig::default()
    }
}

pub fn fkp_config(cfg: &RunConfig) -> FkpConfig {
    let d = FkpConfig::default();
    FkpConfig {
        boxes: box_config(cfg),
        mean_tol: cfg.tolerance(),
        flux_tol: fkplab::Tolerance::new(d.flux_tol.abs, cfg.tol),
        ..d
    }
}

fn carleson_summary(c: &CarlesonEstimate) -> serde_json::Value {
    json!({
        "value": c.value,
        "witness": c.witness.base,
        "quad_error": c.quad_error,
        "boxes": c.family.len(),
        "plateau_boxes": c.plateau_boxes,
        "unbounded_boxes": c.unbounded_boxes,
        "flagged": c.is_flagged(),
    })
}

fn balls(cfg: &RunConfig, n: usize) -> Result<Vec<BallQuery>> {
    let f = &cfg.family;
    Ok(f.sampling().balls(n, &f.region(n), &f.scales()?))
}

pub fn run(task: Task, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Writer::new(&cfg.out)?;
    let flagged = match task {
        Task::WeightAnalyze => {
            let spec = cfg.load_weight()?;
            let n = spec.dimension();
            let family = balls(cfg, n)?;
            let boxes: Vec<CarlesonBox> = family.iter().map(|q| CarlesonBox::new(*q)).collect();
            let a = ainfty_constant(&spec, &family, cfg.tolerance())?;
            let c = carleson_norm(&spec, Smoothing::Gauss, &boxes, &box_config(cfg))?;
            let d = doubling_constant(&spec, &family, cfg.tolerance())?;
            let f = &cfg.family;
            let centres = f.region(n).lattice(n, f.centers);
            let radii = f.scales()?.log_spaced(f.radii);
            let good = cfg
                .good_doubling
                .iter()
                .map(|&m| good_doubling_deficit(&spec, m, &centres, &radii, GoodDoublingSampling::default(), cfg.tolerance()))
                .collect::<fkplab::Result<Vec<_>>>()?;
            out.json(
                "analysis.json",
                &json!({
                    "weight": spec.to_json(),
                    "ainfty": {
                        "value": a.value,
                        "minus_one": a.minus_one(),
                        "witness": a.witness,
                        "quad_error": a.quad_error,
                    },
                    "carleson": carleson_summary(&c),
                    "doubling": { "constant": d.doubling_constant, "witness": d.witness },
                    "good_doubling": good,
                }),
            )?;
            c.is_flagged()
        }
        Task::Carleson => {
            let spec = cfg.load_weight()?;
            let boxes: Vec<CarlesonBox> = balls(cfg, spec.dimension())?.into_iter().map(CarlesonBox::new).collect();
            let c = carleson_norm(&spec, Smoothing::Gauss, &boxes, &box_config(cfg))?;
            let t = carleson_norm(&spec, Smoothing::ReferenceBump, &boxes, &box_config(cfg))?;
            out.json(
                "carleson.json",
                &json!({ "gauss": carleson_summary(&c), "reference_bump": carleson_summary(&t) }),
            )?;
            c.is_flagged() || t.is_flagged()
        }
        Task::FkpCheck => {
            let spec = cfg.load_weight()?;
            let reports = identity_reports(&spec, &balls(cfg, spec.dimension())?, &fkp_config(cfg))?;
            out.text("identity.csv", &reports_csv(&reports)?)?;
            reports.iter().any(|r| !r.passed)
        }
        Task::Sweep => {
            let weights = cfg.sweep.weights()?;
            let rows = theorem_sweep(&weights, &balls(cfg, cfg.sweep.n)?, &fkp_config(cfg))?;
            out.text("sweep.csv", &sweep_csv(&rows)?)?;
            rows.iter().any(|r| !r.log_bound_holds || r.carleson_flagged)
        }
        Task::DkpSolve => {
            let field = cfg.load_coefficients()?;
            let green = green_at_infinity(&field, &cfg.green)?;
            let density = elliptic_measure_infinity(&field, &green, &cfg.green)?;
            out.text("density.csv", &density.to_csv_string())?;
            out.json(
                "green.json",
                &json!({
                    "raw_normalization": green.raw_normalization,
                    "sequence_gaps": green.sequence_gaps,
                    "limit_gap": green.limit_gap,
                    "min_value": green.min_value,
                    "riesz": density.riesz,
                    "riesz_flagged": density.flagged,
                }),
            )?;
            density.flagged || !green.sequence_is_cauchy() || !green.is_positive()
        }
        Task::DkpExperiment => {
            let rows = dkp_experiment(&cfg.experiment)?;
            out.text("experiment.csv", &experiment_csv(&rows))?;
            out.json(
                "experiment.json",
                &json!({ "rows": rows, "ratio_range": ratio_range(&rows) }),
            )?;
            rows.iter().any(|r| r.is_flagged())
        }
        Task::KernelTable { kind, n } => {
            let k = KernelDescriptor::new(kind, n)?;
            let table = k.table().ok_or_else(|| CliError::Config {
                field: "--kind".into(),
                message: "only reference-bump and eta-bump kernels are tabulated".into(),
            })?;
            out.text("kernel_table.csv", &table.to_csv_string())?;
            false
        }
    };
    Ok(out.finish(flagged))
}

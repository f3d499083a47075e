//! Run configuration: built-in defaults, overridden by a JSON file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};
use fkplab::{Region, Sampling, ScaleRange, Tolerance, WeightSpec};
use fkplab_dkp::{CoefficientField, ExperimentConfig, FieldSpec, GreenConfig};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "FKPLAB_THREADS";

/// Either a path to a file or the object itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecRef {
    Path(PathBuf),
    Inline(Value),
}

/// Ball and box centres on a lattice over `region`, radii log-spaced over
/// `scales`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyConfig {
    pub region: [f64; 2],
    pub scales: [f64; 2],
    pub centers: usize,
    pub radii: usize,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            region: [-2.0, 2.0],
            scales: [0.25, 2.0],
            centers: 9,
            radii: 8,
        }
    }
}

impl FamilyConfig {
    pub fn region(&self, n: usize) -> Region {
        match n {
            1 => Region::interval(self.region[0], self.region[1]),
            _ => Region::square(self.region[0], self.region[1]),
        }
    }

    pub fn scales(&self) -> Result<ScaleRange> {
        Ok(ScaleRange::new(self.scales[0], self.scales[1])?)
    }

    pub fn sampling(&self) -> Sampling {
        Sampling::new(self.centers, self.radii)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    /// `|x|^t`.
    #[default]
    Power,
    /// `1 + t·bump`.
    Plateau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub family: SweepFamily,
    pub n: usize,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            family: SweepFamily::Power,
            n: 1,
            values: vec![0.4, 0.2, 0.1, 0.05],
        }
    }
}

impl SweepConfig {
    pub fn weights(&self) -> Result<Vec<(f64, WeightSpec)>> {
        self.values
            .iter()
            .map(|&t| {
                let w = match self.family {
                    SweepFamily::Power => WeightSpec::power(self.n, t)?,
                    SweepFamily::Plateau => WeightSpec::plateau(self.n, t)?,
                };
                Ok((t, w))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub weight: Option<SpecRef>,
    /// Coefficient field: a JSON field spec (inline or path) or a path to a
    /// binary dump (`.bin`).
    pub coefficients: Option<SpecRef>,
    pub family: FamilyConfig,
    /// Relative quadrature tolerance.
    pub tol: f64,
    pub out: PathBuf,
    /// Recorded for reproducibility; every operation is deterministic.
    pub seed: u64,
    pub threads: Option<usize>,
    /// Candidate `M` values for the good-doubling certificate.
    pub good_doubling: Vec<f64>,
    pub sweep: SweepConfig,
    pub green: GreenConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            weight: None,
            coefficients: None,
            family: FamilyConfig::default(),
            tol: 1e-9,
            out: PathBuf::from("fkplab-out"),
            seed: 0,
            threads: None,
            good_doubling: vec![2.0, 5.0, 10.0, 20.0],
            sweep: SweepConfig::default(),
            green: GreenConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Flags that override the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub threads: Option<usize>,
    pub weight: Option<PathBuf>,
    pub coefficients: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config, naming the offending field on failure.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config {
                field: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }

    /// Reads a config file. Relative spec paths inside it are resolved
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            field: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut cfg = Self::from_json_str(&text)?;
        if let Some(base) = path.parent() {
            for r in [&mut cfg.weight, &mut cfg.coefficients].into_iter().flatten() {
                if let SpecRef::Path(p) = r {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(t) = o.tol {
            self.tol = t;
        }
        if let Some(s) = o.samples {
            self.family.centers = s;
            self.family.radii = s;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if let Some(p) = &o.weight {
            self.weight = Some(SpecRef::Path(p.clone()));
        }
        if let Some(p) = &o.coefficients {
            self.coefficients = Some(SpecRef::Path(p.clone()));
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(CliError::Config {
                field: field.into(),
                message,
            })
        };
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad("tol", format!("must lie in (0, 1), got {}", self.tol));
        }
        let f = &self.family;
        if !(f.region[0] < f.region[1]) || !f.region.iter().all(|v| v.is_finite()) {
            return bad("family.region", format!("need lo < hi, got {:?}", f.region));
        }
        if !(f.scales[0] > 0.0 && f.scales[0] <= f.scales[1] && f.scales[1].is_finite()) {
            return bad("family.scales", format!("need 0 < min <= max, got {:?}", f.scales));
        }
        if f.centers == 0 {
            return bad("family.centers", "must be at least 1".into());
        }
        if f.radii == 0 {
            return bad("family.radii", "must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1".into());
        }
        if let Some(m) = self.good_doubling.iter().find(|m| !(**m > 1.0 && m.is_finite())) {
            return bad("good_doubling", format!("candidates must exceed 1, got {m}"));
        }
        if !(self.sweep.n == 1 || self.sweep.n == 2) {
            return bad("sweep.n", format!("dimension must be 1 or 2, got {}", self.sweep.n));
        }
        if self.sweep.values.is_empty() {
            return bad("sweep.values", "must not be empty".into());
        }
        if self.green.poles.len() < 2 {
            return bad("green.poles", "need at least two pole heights".into());
        }
        if !(self.green.riesz_tol > 0.0) {
            return bad("green.riesz_tol", format!("must be positive, got {}", self.green.riesz_tol));
        }
        if self.experiment.epsilons.is_empty() {
            return bad("experiment.epsilons", "must not be empty".into());
        }
        Ok(())
    }

    /// Quadrature tolerance for ball means.
    pub fn tolerance(&self) -> Tolerance {
        Tolerance::new(1e-14, self.tol)
    }

    pub fn load_weight(&self) -> Result<WeightSpec> {
        match &self.weight {
            None => Err(CliError::Config {
                field: "weight".into(),
                message: "this command needs a weight spec (--weight or config field `weight`)".into(),
            }),
            Some(SpecRef::Path(p)) => WeightSpec::from_json_file(p).map_err(|e| CliError::Config {
                field: "weight".into(),
                message: e.to_string(),
            }),
            Some(SpecRef::Inline(v)) => WeightSpec::from_json_value(v, None).map_err(|e| CliError::Config {
                field: "weight".into(),
                message: e.to_string(),
            }),
        }
    }

    pub fn load_coefficients(&self) -> Result<CoefficientField> {
        let wrap = |e: fkplab_dkp::DkpError| CliError::Config {
            field: "coefficients".into(),
            message: e.to_string(),
        };
        match &self.coefficients {
            None => Err(CliError::Config {
                field: "coefficients".into(),
                message: "this command needs a coefficient field (--coefficients or config field `coefficients`)".into(),
            }),
            Some(SpecRef::Path(p)) => {
                let bytes = std::fs::read(p).map_err(|e| CliError::Config {
                    field: "coefficients".into(),
                    message: format!("cannot read {}: {e}", p.display()),
                })?;
                if p.extension().is_some_and(|x| x == "bin") {
                    CoefficientField::from_bytes(&bytes).map_err(wrap)
                } else {
                    let text = String::from_utf8(bytes).map_err(|_| CliError::Config {
                        field: "coefficients".into(),
                        message: format!("{} is not UTF-8 JSON", p.display()),
                    })?;
                    FieldSpec::from_json_str(&text).and_then(|s| s.build()).map_err(wrap)
                }
            }
            Some(SpecRef::Inline(v)) => FieldSpec::from_json_str(&v.to_string())
                .and_then(|s| s.build())
                .map_err(wrap),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

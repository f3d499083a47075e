//! Divergence-form elliptic operators on the upper half-plane: Green
//! functions with pole at infinity, elliptic measure at infinity, `α₂`
//! oscillation coefficients and the weak-DKP Carleson norm.

pub mod error;
pub mod experiment;
pub mod field;
pub mod green;
pub mod oscillation;
pub mod solve;

pub use error::{DkpError, Result};
pub use field::{Analytic, BoxGrid, Bump, CoefficientField, FieldSpec};
pub use experiment::{dkp_experiment, experiment_csv, ExperimentConfig, ExperimentRow};
pub use green::{elliptic_measure_infinity, green_at_infinity, BoundaryDensity, GreenAtInfinity, GreenConfig};
pub use oscillation::{alpha2, weak_dkp_norm, OscillationConfig, OscillationField, Whitney};
pub use solve::{GridFunction, Operator};

//! Numerical laboratory for small-constant A∞ theory: heat extensions of
//! weights, the associated Carleson measures, A∞ characteristics and
//! doubling diagnostics.

pub mod ainfty;
pub mod carleson;
pub mod error;
pub mod fkp;
pub mod geometry;
pub mod heat;
pub mod kernel;
pub mod quad;
pub mod special;
pub mod weight;

pub use error::{Error, Result};
pub use kernel::{KernelDescriptor, KernelKind};
pub use geometry::{ball_volume, unit_ball_volume, BallQuery, Point, Region, Sampling, ScaleRange};
pub use quad::Tolerance;
pub use weight::{Family, GridWeight, Outside, WeightSpec};
pub use ainfty::{ainfty_constant, ball_ratio, AInftyEstimate};
pub use carleson::{box_mass, carleson_norm, BoxConfig, CarlesonBox, CarlesonEstimate, Smoothing};
pub use fkp::{identity_residual, FkpConfig, IdentityReport};
pub use heat::HeatConfig;

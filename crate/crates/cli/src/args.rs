//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Overrides, THREADS_ENV};
use crate::Task;
use fkplab::KernelKind;

#[derive(Debug, Parser)]
#[command(name = "fkplab", version, about = "Numerical experiments on small-constant A-infinity weights")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Lattice centres and radii per sampling family.
    #[arg(long, global = true)]
    pub samples: Option<usize>,

    /// Worker threads.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    /// Weight spec JSON file.
    #[arg(long, global = true)]
    pub weight: Option<PathBuf>,

    /// Coefficient field: JSON spec or binary dump (`.bin`).
    #[arg(long, global = true)]
    pub coefficients: Option<PathBuf>,

    /// Print the merged configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_effective_config: bool,
}

impl Common {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            tol: self.tol,
            samples: self.samples,
            threads: self.threads,
            weight: self.weight.clone(),
            coefficients: self.coefficients.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Doubling, good-doubling, A-infinity and Carleson diagnostics of a weight.
    Weight {
        #[command(subcommand)]
        action: WeightAction,
    },
    /// Carleson norms of the Gaussian and reference-bump measures.
    Carleson,
    /// Heat-flow identity residuals.
    Fkp {
        #[command(subcommand)]
        action: FkpAction,
    },
    /// Carleson norm, A-infinity constant and error term across a weight family.
    Sweep,
    /// Elliptic problems on the half-plane.
    Dkp {
        #[command(subcommand)]
        action: DkpAction,
    },
    /// Export the cubic Hermite table of a compact kernel as CSV.
    KernelTable {
        #[arg(long, value_enum, default_value_t = TableKind::ReferenceBump)]
        kind: TableKind,
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Width parameter of the eta bump.
        #[arg(long, default_value_t = 0.5)]
        eta: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum WeightAction {
    Analyze,
}

#[derive(Debug, Subcommand)]
pub enum FkpAction {
    Check,
}

#[derive(Debug, Subcommand)]
pub enum DkpAction {
    /// Green function and elliptic measure at infinity for one field.
    Solve,
    /// Perturbation sweep over eps.
    Experiment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TableKind {
    ReferenceBump,
    EtaBump,
}

impl Command {
    pub fn task(&self) -> Task {
        match self {
            Command::Weight { action: WeightAction::Analyze } => Task::WeightAnalyze,
            Command::Carleson => Task::Carleson,
            Command::Fkp { action: FkpAction::Check } => Task::FkpCheck,
            Command::Sweep => Task::Sweep,
            Command::Dkp { action: DkpAction::Solve } => Task::DkpSolve,
            Command::Dkp { action: DkpAction::Experiment } => Task::DkpExperiment,
            Command::KernelTable { kind, n, eta } => Task::KernelTable {
                kind: match kind {
                    TableKind::ReferenceBump => KernelKind::ReferenceBump,
                    TableKind::EtaBump => KernelKind::EtaBump { eta: *eta },
                },
                n: *n,
            },
        }
    }
}

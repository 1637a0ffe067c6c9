//! Experiment orchestration: configuration, the convergence sweep, rate fits and the
//! cross-oracle validation report.

mod commands;
mod config;
mod convergence;
mod fit;
mod validate;

pub use commands::{run_bogoliubov, run_hartree, run_laguerre, HartreeSummary, LaguerreSummary};
pub use config::{ExperimentConfig, FockConfig, GridConfig, InitialState, Tolerances};
pub use convergence::{boundary_mass, run_convergence, write_csv, ConvergenceRun, Manifest, RunRecord};
pub use fit::{fit_rate, RateFit};
pub use validate::{cross_validate, fock_coefficient_error, CheckStatus, Measurement, ReportItem, ValidationReport};

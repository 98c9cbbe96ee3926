//! Alternating minimization for overcomplete dictionary learning.
//!
//! Given observations `Y = A* X*` with a column-normalized, incoherent
//! dictionary `A*` (`d × r`, possibly `r > d`) and `s`-sparse coefficient
//! columns, [`altmin_dict`] alternates per-sample sparse recovery with a
//! least-squares dictionary refit, converging linearly from a nearby start.
//!
//! Modules:
//! * [`model`]: dictionaries, coefficient matrices, sign-invariant distances.
//! * [`synth`]: seeded synthetic instances and perturbed initial dictionaries.
//! * [`recovery`]: GraDeS / constrained-ℓ1 sparse recovery and thresholding.
//! * [`update`]: least-squares refit, accuracy schedules and the driver.
//! * [`diagnostics`]: coherence, RIP, spectral norms and coefficient statistics.
//! * [`experiments`]: convergence runs, one-shot comparison and sample-complexity sweeps.
//! * [`svg`]: line charts for traces and sweep curves.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod recovery;
pub mod rng;
pub mod svg;
pub mod synth;
pub mod update;

pub use error::{Error, Result};
pub use experiments::{
    check, compare, run_trial, sweep, CheckReport, CompareRow, SweepCell, SweepConfig, SUCCESS_ITERS, SUCCESS_TOL,
};
pub use model::{
    dist_dict, dist_vec, error_metric, min_sign_l2, normalize_columns, AccuracySchedule, CoefficientMatrix,
    Dictionary, ModelConfig, NonzeroLaw, SampleSet, ScheduleMode, UNIT_TOL,
};
pub use recovery::{grades_recover, l1_recover, recover_all, threshold_op, SolveStatus, SolverConfig, SolverKind};
pub use synth::{gen_coefficients, gen_dictionary, gen_samples, perturb_dictionary, Instance, PerturbConfig};
pub use update::{accuracy_at, altmin_dict, least_squares_update, AltMinConfig, Oracle, Outcome, TrialReport};

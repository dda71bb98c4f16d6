//! Transporting trial results to a target population.
//!
//! The crate simulates populations with trial participation, applies nested
//! (census or sub-sampled) and non-nested sampling designs, fits
//! participation and outcome models, and estimates potential outcome means
//! in the target population, among non-randomized individuals and among
//! trial participants. A Monte Carlo harness compares estimators against an
//! independent oracle.

pub mod dgp;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod io;
pub mod outcome;
pub mod participation;
pub mod rng;
pub mod sampling;

pub use dgp::{oracle_truth, simulate_actual_population, DgpSpec, OracleTruth};
pub use domain::{
    identification_matrix, Arm, DesignSpec, Estimand, ObservedDataset, ObservedRecord,
    SamplingTable, TreatmentProb, TruthRecord,
};
pub use error::{Error, Result};
pub use estimators::{EstimateReport, EstimatorSpec, Method, Population};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentSummary};
pub use outcome::{fit_outcome, OutcomeModel};
pub use participation::{
    fit_participation, marginal_participation_probability, ParticipationModel, Scale,
};
pub use sampling::apply_design;

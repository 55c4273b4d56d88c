//! Monte Carlo study: data-generating processes, calibration, population
//! targets and the replicate harness.

mod calibration;
mod dgp;
mod harness;
mod reference;
mod report;

pub use calibration::{
    calibrate_p_error, calibrate_sigma_tau, linear_quality, logistic_accuracy, signal_variance, CALIBRATION_DRAWS,
    CALIBRATION_SEED,
};
pub use dgp::{
    design_row, flip_probability, gen_covariates, gen_linear, gen_linear_with, gen_logistic, gen_logistic_with,
    replicate_dataset, signal, stream_rng, HomoskedasticDgp, LinearErrorModel, COVARIATE_CORRELATION,
    OUTCOME_NOISE_SD, STREAM_COVARIATES, STREAM_OUTCOME, STREAM_PREDICTION,
};
pub use harness::{run_replicates, run_scenario, summarize, ReplicateOutcome, ReplicateSet};
pub use reference::{beta_star, reference_coefficients, REFERENCE_DRAWS, REFERENCE_SEED};
pub use report::{round_sig, write_csv, write_json, SimReport, SimRow};

use crate::error::{Error, Result};
use crate::estimands::Family;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    Random,
    Nonrandom,
    CovariateDependent,
}

impl ErrorType {
    pub const ALL: [ErrorType; 3] = [ErrorType::Random, ErrorType::Nonrandom, ErrorType::CovariateDependent];

    pub fn name(self) -> &'static str {
        match self {
            ErrorType::Random => "random",
            ErrorType::Nonrandom => "nonrandom",
            ErrorType::CovariateDependent => "covariate_dependent",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ErrorType::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown error type '{s}'")))
    }
}

/// Prediction quality: `R² ∈ {0.8, 0.6}` for linear outcomes and accuracy
/// `∈ {0.9, 0.7}` for binary outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    High,
    Low,
}

impl Quality {
    pub const ALL: [Quality; 2] = [Quality::High, Quality::Low];

    pub fn name(self) -> &'static str {
        match self {
            Quality::High => "high",
            Quality::Low => "low",
        }
    }

    pub fn target_r2(self) -> f64 {
        match self {
            Quality::High => 0.8,
            Quality::Low => 0.6,
        }
    }

    pub fn target_accuracy(self) -> f64 {
        match self {
            Quality::High => 0.9,
            Quality::Low => 0.7,
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Quality::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown quality '{s}'")))
    }
}

pub const DESK_N: usize = 2_000;
pub const DESK_N_LAB: usize = 300;
pub const DESK_REPLICATES: usize = 500;
pub const FULL_N: usize = 10_000;
pub const FULL_N_LAB: [usize; 4] = [300, 600, 1000, 2000];
pub const FULL_REPLICATES: usize = 2_000;
pub const SIM_FAMILIES: [Family; 2] = [Family::Linear, Family::Logistic];

/// One cell of the simulation grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimScenario {
    pub family: Family,
    pub error_type: ErrorType,
    pub quality: Quality,
    pub n: usize,
    pub n_lab: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl SimScenario {
    pub fn desk(family: Family, error_type: ErrorType, quality: Quality, seed: u64) -> Self {
        SimScenario { family, error_type, quality, n: DESK_N, n_lab: DESK_N_LAB, replicates: DESK_REPLICATES, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == Family::Mean {
            return Err(Error::InvalidArgument("simulation family must be linear or logistic".into()));
        }
        if self.n_lab >= self.n {
            return Err(Error::InvalidArgument(format!("n_lab {} must be below n {}", self.n_lab, self.n)));
        }
        if self.n_lab < 5 {
            return Err(Error::InvalidArgument(format!("n_lab {} too small for 4 coefficients", self.n_lab)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        format!("{}_{}_{}_n{}_lab{}", self.family, self.error_type, self.quality, self.n, self.n_lab)
    }
}

/// Cartesian product of the grid axes, ordered family, error type, quality, `n_lab`.
pub fn scenario_grid(
    families: &[Family],
    error_types: &[ErrorType],
    qualities: &[Quality],
    n_labs: &[usize],
    n: usize,
    replicates: usize,
    seed: u64,
) -> Vec<SimScenario> {
    let mut out = Vec::new();
    for &family in families {
        for &error_type in error_types {
            for &quality in qualities {
                for &n_lab in n_labs {
                    out.push(SimScenario { family, error_type, quality, n, n_lab, replicates, seed });
                }
            }
        }
    }
    out
}

/// The 12 desk-scale cells: both families × three error types × two qualities.
pub fn desk_grid(seed: u64) -> Vec<SimScenario> {
    scenario_grid(&SIM_FAMILIES, &ErrorType::ALL, &Quality::ALL, &[DESK_N_LAB], DESK_N, DESK_REPLICATES, seed)
}

/// Full-scale grid with `n = 10,000`, four labeled sizes and 2,000 replicates.
pub fn full_grid(seed: u64) -> Vec<SimScenario> {
    scenario_grid(&SIM_FAMILIES, &ErrorType::ALL, &Quality::ALL, &FULL_N_LAB, FULL_N, FULL_REPLICATES, seed)
}

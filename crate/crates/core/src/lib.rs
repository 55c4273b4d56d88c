//! Prediction-based inference for Z-estimation.
//!
//! Combines a small labeled sample with machine-learning predictions on a
//! larger sample to estimate regression parameters. Implements the labeled
//! and naive baselines, PPI, PPI_a, the Chen–Chen (CC) estimator, PPI++,
//! PSPA, SUR and POP, with influence-function standard errors, efficiency
//! diagnostics and a Monte Carlo harness.
//!
//! ```
//! use pbinfer::{Dataset64, Family, PbContext, Method};
//!
//! let ds = Dataset64::intercept_only(&[1.0, 3.0], vec![2.0, 2.0, 4.0]).unwrap();
//! let ctx = PbContext::new(&ds, Family::Mean).unwrap();
//! assert!((ctx.point(Method::Ppi).unwrap()[0] - 4.0).abs() < 1e-12);
//! ```

pub mod cli;
pub mod error;
pub mod estimands;
pub mod estimators;
pub mod inference;
pub mod numerics;
pub mod scalar;
pub mod simulation;

pub use error::{Error, Result};
pub use estimands::{expit, solve_z, Dataset, EstimatingFunction, Family, Outcome, RowSet, ZEstimate};
pub use estimators::{
    cc_weight, control_variate_mean, estimate_cc, estimate_lab, estimate_moments, estimate_moments_with, estimate_naive, estimate_pop,
    estimate_ppi, estimate_ppi_a, estimate_ppipp, estimate_pspa, estimate_sur, pop_weight, ppipp_weight,
    pspa_weight, sur_weight, Method, MomentPlugin, MomentSet, PbContext, PbFit, WeightKind, WeightSpec,
};
pub use inference::{
    avar_of_weight, delta_avar_cc, delta_avar_ppia, homoskedastic_summary, if_covariance, AvarReport,
    HomoskedasticSummary,
};
pub use numerics::Mat;
pub use scalar::Scalar;

pub type Mat64 = Mat<f64>;
pub type Mat32 = Mat<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type MomentSet64 = MomentSet<f64>;
pub type PbFit64 = PbFit<f64>;
pub type ZEstimate64 = ZEstimate<f64>;

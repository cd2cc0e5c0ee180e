//! Misspecified Bayesian Cramér–Rao bounds for linear-Gaussian models.
//!
//! Data flows in this order:
//!
//! * [`model`]: true and assumed models, AR-1 covariances, validation and
//!   seeded sampling.
//! * [`bounds`]: closed-form pseudotrue map, information matrix, BCRB, the
//!   misspecified bound `A J⁻¹ Aᵀ` and its biased extension.
//! * [`pseudotrue`]: numerical minimization of the cross-entropy objective,
//!   an independent route to the pseudotrue parameter.
//! * [`estimator`]: MAP / QMLE estimators and the MS-unbiasedness check.
//! * [`experiment`]: Monte Carlo sweeps pairing RMSE with bound predictions.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod presets;
pub mod pseudotrue;
pub mod rng;

pub use bounds::{BfimDecomposition, BoundReport, PseudotrueMap};
pub use error::{Error, Result};
pub use estimator::{EstimatorKind, EstimatorSpec, PreparedEstimator};
pub use experiment::{ErrorReference, ExperimentConfig, GridPoint, SweepAxis, SweepResult, SweepSpec};
pub use model::{
    AssumedPrior, FactoredModel, GaussianDensity, LinearGaussianLikelihood, ModelPair, ObservationBatch,
    ValidationReport,
};
pub use pseudotrue::{EvaluationMode, KlObjectiveSpec, OptimizationResult};

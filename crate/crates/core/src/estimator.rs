//! MAP estimator of the assumed model and its flat-prior limit (QMLE).
//!
//! `θ̂(X) = (N HᵀΣ⁻¹H + Σ_θ⁻¹)⁻¹ (HᵀΣ⁻¹ Σ_n x_n + Σ_θ⁻¹ μ_θ)`.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::bounds;
use crate::error::{Error, Result};
use crate::linalg::{self, CholeskyFactor};
use crate::model::{AssumedPrior, FactoredModel, LinearGaussianLikelihood, ModelPair, ObservationBatch};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Map,
    Qmle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    kind: EstimatorKind,
    prior: AssumedPrior,
    likelihood: LinearGaussianLikelihood,
}

impl EstimatorSpec {
    /// Fails for `Qmle` with a non-flat prior.
    pub fn new(kind: EstimatorKind, prior: AssumedPrior, likelihood: LinearGaussianLikelihood) -> Result<Self> {
        if kind == EstimatorKind::Qmle && !prior.is_flat() {
            return Err(Error::invalid("prior", "the QMLE requires a flat prior"));
        }
        Ok(Self {
            kind,
            prior,
            likelihood,
        })
    }

    pub fn map(prior: AssumedPrior, likelihood: LinearGaussianLikelihood) -> Self {
        Self {
            kind: EstimatorKind::Map,
            prior,
            likelihood,
        }
    }

    pub fn qmle(likelihood: LinearGaussianLikelihood) -> Self {
        Self {
            kind: EstimatorKind::Qmle,
            prior: AssumedPrior::Flat,
            likelihood,
        }
    }

    /// Estimator matching the assumed side of `pair`.
    pub fn for_pair(kind: EstimatorKind, pair: &ModelPair) -> Self {
        match kind {
            EstimatorKind::Map => Self::map(pair.assumed_prior.clone(), pair.assumed_lik.clone()),
            EstimatorKind::Qmle => Self::qmle(pair.assumed_lik.clone()),
        }
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn prior(&self) -> &AssumedPrior {
        &self.prior
    }

    pub fn likelihood(&self) -> &LinearGaussianLikelihood {
        &self.likelihood
    }

    /// `template` with this estimator's assumed side substituted.
    pub fn assumed_pair(&self, template: &ModelPair) -> ModelPair {
        ModelPair {
            assumed_prior: self.prior.clone(),
            assumed_lik: self.likelihood.clone(),
            ..template.clone()
        }
    }

    /// Factorizes the normal equations for batches of `n_samples` columns.
    pub fn prepare(&self, n_samples: usize) -> Result<PreparedEstimator> {
        let n_theta = self.likelihood.parameter_dim();
        let n_x = self.likelihood.observation_dim();
        // Any valid true side works here; only the assumed side is used.
        let pair = ModelPair {
            true_prior: crate::model::GaussianDensity::isotropic(DVector::zeros(n_theta), 1.0),
            true_lik: LinearGaussianLikelihood::new(
                nalgebra::DMatrix::identity(n_x, n_theta),
                nalgebra::DMatrix::identity(n_x, n_x),
            ),
            assumed_prior: self.prior.clone(),
            assumed_lik: self.likelihood.clone(),
            n_samples,
        };
        PreparedEstimator::from_model(&pair.factor()?)
    }
}

/// Estimator with the batch-independent normal-equations factor cached.
#[derive(Debug, Clone)]
pub struct PreparedEstimator {
    n_samples: usize,
    normal_factor: CholeskyFactor,
    whitened_transpose: nalgebra::DMatrix<f64>,
    precision_mean: DVector<f64>,
}

impl PreparedEstimator {
    /// Estimator built from the assumed side of a factored model.
    pub fn from_model(model: &FactoredModel) -> Result<Self> {
        Ok(Self {
            n_samples: model.n_samples(),
            normal_factor: bounds::normal_factor(model)?,
            whitened_transpose: model.assumed_whitened_transpose().clone(),
            precision_mean: model.assumed_prior_precision_mean().clone(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Estimate from the column sum `Σ_n x_n`.
    pub fn estimate_from_sum(&self, column_sum: &DVector<f64>) -> DVector<f64> {
        let rhs = &self.whitened_transpose * column_sum + &self.precision_mean;
        self.normal_factor.solve(&rhs)
    }

    pub fn estimate(&self, batch: &ObservationBatch) -> Result<DVector<f64>> {
        if batch.len() != self.n_samples {
            return Err(Error::DimensionMismatch {
                what: "batch column count",
                expected: self.n_samples,
                found: batch.len(),
            });
        }
        if batch.samples.nrows() != self.whitened_transpose.ncols() {
            return Err(Error::DimensionMismatch {
                what: "observation dimension",
                expected: self.whitened_transpose.ncols(),
                found: batch.samples.nrows(),
            });
        }
        Ok(self.estimate_from_sum(&batch.samples.column_sum()))
    }
}

/// One-shot estimate; factorizes for `batch.len()` columns.
pub fn estimate(spec: &EstimatorSpec, batch: &ObservationBatch) -> Result<DVector<f64>> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "needs at least one observation"));
    }
    spec.prepare(batch.len())?.estimate(batch)
}

/// Monte Carlo mean of `θ̂ − θ₀(ψ)` at a fixed `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasDiagnostic {
    pub mean_error: DVector<f64>,
    pub standard_error: DVector<f64>,
}

impl BiasDiagnostic {
    /// `|mean_error| ≤ k·standard_error` componentwise (with an absolute
    /// floor of `abs_floor` for noiseless configurations).
    pub fn within(&self, k: f64, abs_floor: f64) -> bool {
        self.mean_error
            .iter()
            .zip(self.standard_error.iter())
            .all(|(m, s)| m.abs() <= k * s + abs_floor)
    }
}

const DIAGNOSTIC_KEY: u64 = 0x6d73_6269_6173; // "msbias"

/// Checks MS-unbiasedness of `spec` under the true side of `model` at `psi`.
pub fn ms_bias_diagnostic(
    spec: &EstimatorSpec,
    model: &FactoredModel,
    psi: &DVector<f64>,
    trials: usize,
    seed: u64,
) -> Result<BiasDiagnostic> {
    if trials < 100 {
        return Err(Error::invalid("trials", "at least 100 trials are required"));
    }
    let assumed = spec.assumed_pair(model.pair()).factor()?;
    let target = bounds::pseudotrue(&assumed, psi)?;
    let estimator = PreparedEstimator::from_model(&assumed)?;
    let dim = target.len();
    let mut errors: Vec<Vec<f64>> = (0..dim).map(|_| Vec::with_capacity(trials)).collect();
    for trial in 0..trials {
        let mut rng = rng::stream_rng(seed, DIAGNOSTIC_KEY, trial as u64);
        let samples = assumed.sample_observations_with(psi, &mut rng)?;
        let error = estimator.estimate_from_sum(&samples.column_sum()) - &target;
        for (component, value) in errors.iter_mut().zip(error.iter()) {
            component.push(*value);
        }
    }
    let t = trials as f64;
    let mut mean_error = DVector::zeros(dim);
    let mut standard_error = DVector::zeros(dim);
    for (i, component) in errors.iter().enumerate() {
        let mean = linalg::pairwise_sum(component) / t;
        let sq: Vec<f64> = component.iter().map(|e| (e - mean) * (e - mean)).collect();
        let variance = linalg::pairwise_sum(&sq) / (t - 1.0);
        mean_error[i] = mean;
        standard_error[i] = libm::sqrt(variance / t);
    }
    Ok(BiasDiagnostic {
        mean_error,
        standard_error,
    })
}

//! Monte Carlo validation of the bounds.
//!
//! Every trial draws `ψ` from the true prior, draws `N` observations, runs the
//! estimator and records the squared error against either `θ₀(ψ)` or `ψ`.
//! Trial `t` at grid value `v` uses the random stream keyed by
//! `(master_seed, v)` with stream index `t`, so per-trial results do not
//! depend on scheduling. Aggregation runs over the trials in index order.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::bounds::{self, PseudotrueMap};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorKind, PreparedEstimator};
use crate::linalg;
use crate::model::{FactoredModel, ModelPair};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    SampleCount,
    AssumedGain,
    AssumedNoiseVariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    axis: SweepAxis,
    grid: Vec<f64>,
}

impl SweepSpec {
    /// Grid must be non-empty, strictly increasing and positive; sample-count
    /// grids must hold integers.
    pub fn new(axis: SweepAxis, grid: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("grid", "sweep grid must not be empty"));
        }
        if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("grid", "grid values must be positive and finite"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid", "grid must be strictly increasing"));
        }
        if axis == SweepAxis::SampleCount && grid.iter().any(|v| libm::trunc(*v) != *v) {
            return Err(Error::invalid("grid", "sample counts must be integers >= 1"));
        }
        Ok(Self { axis, grid })
    }

    pub fn axis(&self) -> SweepAxis {
        self.axis
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorReference {
    /// `θ̂ − θ₀(ψ)`, compared against the misspecified bound.
    Pseudotrue,
    /// `θ̂ − ψ`, compared against the biased bound.
    TrueParameter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Template; the swept quantity is overwritten per grid point.
    pub pair: ModelPair,
    pub estimator: EstimatorKind,
    pub trials: usize,
    pub master_seed: u64,
    pub error_reference: ErrorReference,
    pub sweep: SweepSpec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 100 {
            return Err(Error::invalid("trials", "at least 100 trials are required"));
        }
        if self.error_reference == ErrorReference::TrueParameter
            && self.pair.assumed_param_dim() != self.pair.true_param_dim()
        {
            return Err(Error::invalid(
                "error_reference",
                "true-parameter reference needs equal true and assumed parameter dimensions",
            ));
        }
        let report = crate::model::validate_model_pair(&self.pair);
        if !report.is_valid() {
            return Err(Error::InvalidModel(report));
        }
        Ok(())
    }

    /// Model pair at one grid value.
    pub fn pair_at(&self, axis_value: f64) -> Result<ModelPair> {
        let mut pair = self.pair.clone();
        match self.sweep.axis {
            SweepAxis::SampleCount => {
                if !(axis_value >= 1.0 && libm::trunc(axis_value) == axis_value) {
                    return Err(Error::invalid("axis_value", format!("{axis_value} is not a sample count")));
                }
                pair.n_samples = axis_value as usize;
            }
            SweepAxis::AssumedGain => {
                let (rows, cols) = pair.assumed_lik.observation_matrix.shape();
                pair.assumed_lik.observation_matrix = linalg::scaled_identity(rows, cols, axis_value);
            }
            SweepAxis::AssumedNoiseVariance => {
                let n_x = pair.assumed_lik.noise_covariance.nrows();
                pair.assumed_lik.noise_covariance = linalg::scaled_identity(n_x, n_x, axis_value);
            }
        }
        if self.estimator == EstimatorKind::Qmle {
            pair = pair.with_flat_assumed_prior();
        }
        Ok(pair)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_value: f64,
    pub rmse: DVector<f64>,
    pub rmse_standard_error: DVector<f64>,
    /// Square roots of the diagonal of the bound matching the error reference.
    pub bound_rmse_floor: DVector<f64>,
    /// Square roots of the diagonal of `J⁻¹`, for comparison.
    pub bcrb_floor: DVector<f64>,
    /// `sqrt(E‖θ̂ − ref‖²)`.
    pub trace_rmse: f64,
    pub trace_rmse_standard_error: f64,
    /// `sqrt(trace(bound))`.
    pub trace_bound_floor: f64,
}

impl SweepResult {
    /// `rmse_i ≥ floor_i·(1 − k·se_i/rmse_i)` for every component.
    pub fn respects_bound(&self, k: f64) -> bool {
        (0..self.rmse.len()).all(|i| self.component_respects_bound(i, k))
    }

    pub fn component_respects_bound(&self, i: usize, k: f64) -> bool {
        let rmse = self.rmse[i];
        let rel = if rmse > 0.0 {
            self.rmse_standard_error[i] / rmse
        } else {
            0.0
        };
        rmse >= self.bound_rmse_floor[i] * (1.0 - k * rel)
    }
}

/// Everything a trial at one grid value needs, computed once.
#[derive(Debug, Clone)]
pub struct GridPoint {
    axis_value: f64,
    master_seed: u64,
    reference: ErrorReference,
    model: FactoredModel,
    estimator: PreparedEstimator,
    map: PseudotrueMap,
    bound: DMatrix<f64>,
    bcrb: DMatrix<f64>,
}

impl GridPoint {
    pub fn new(config: &ExperimentConfig, axis_value: f64) -> Result<Self> {
        Self::build(config, axis_value).map_err(|source| Error::GridPoint {
            axis_value,
            source: Box::new(source),
        })
    }

    fn build(config: &ExperimentConfig, axis_value: f64) -> Result<Self> {
        let model = config.pair_at(axis_value)?.factor()?;
        let bound = match config.error_reference {
            ErrorReference::Pseudotrue => bounds::mbcrb(&model)?,
            ErrorReference::TrueParameter => bounds::biased_bound(&model)?,
        };
        Ok(Self {
            axis_value,
            master_seed: config.master_seed,
            reference: config.error_reference,
            estimator: PreparedEstimator::from_model(&model)?,
            map: bounds::pseudotrue_map(&model)?,
            bcrb: bounds::bcrb(&model)?,
            bound,
            model,
        })
    }

    pub fn axis_value(&self) -> f64 {
        self.axis_value
    }

    pub fn model(&self) -> &FactoredModel {
        &self.model
    }

    pub fn bound(&self) -> &DMatrix<f64> {
        &self.bound
    }

    pub fn bcrb(&self) -> &DMatrix<f64> {
        &self.bcrb
    }

    /// Componentwise squared error of one realization.
    pub fn run_trial(&self, trial_index: u64) -> DVector<f64> {
        let mut rng = rng::stream_rng(self.master_seed, self.axis_value.to_bits(), trial_index);
        let psi = self.model.sample_parameter_with(&mut rng);
        let samples = self
            .model
            .sample_observations_with(&psi, &mut rng)
            .expect("psi drawn from the model has the model's dimension");
        let estimate = self.estimator.estimate_from_sum(&samples.column_sum());
        let error = match self.reference {
            ErrorReference::Pseudotrue => estimate - self.map.evaluate(&psi),
            ErrorReference::TrueParameter => estimate - psi,
        };
        error.component_mul(&error)
    }

    /// Aggregates per-trial squared errors given in trial order.
    pub fn summarize(&self, squared_errors: &[DVector<f64>]) -> SweepResult {
        let dim = self.map.gain.nrows();
        let mut rmse = DVector::zeros(dim);
        let mut rmse_se = DVector::zeros(dim);
        let mut column = Vec::with_capacity(squared_errors.len());
        for i in 0..dim {
            column.clear();
            column.extend(squared_errors.iter().map(|e| e[i]));
            let (r, se) = rmse_with_standard_error(&column);
            rmse[i] = r;
            rmse_se[i] = se;
        }
        column.clear();
        column.extend(squared_errors.iter().map(|e| linalg::pairwise_sum(e.as_slice())));
        let (trace_rmse, trace_se) = rmse_with_standard_error(&column);
        SweepResult {
            axis_value: self.axis_value,
            rmse,
            rmse_standard_error: rmse_se,
            bound_rmse_floor: diagonal_floor(&self.bound),
            bcrb_floor: diagonal_floor(&self.bcrb),
            trace_rmse,
            trace_rmse_standard_error: trace_se,
            trace_bound_floor: libm::sqrt(self.bound.trace().max(0.0)),
        }
    }

    /// Runs trials `0..trials` sequentially and summarizes them.
    pub fn run(&self, trials: usize) -> SweepResult {
        let errors: Vec<DVector<f64>> = (0..trials as u64).map(|t| self.run_trial(t)).collect();
        self.summarize(&errors)
    }
}

fn diagonal_floor(m: &DMatrix<f64>) -> DVector<f64> {
    m.diagonal().map(|v| libm::sqrt(v.max(0.0)))
}

/// RMSE of squared errors and its delta-method standard error.
pub fn rmse_with_standard_error(squared_errors: &[f64]) -> (f64, f64) {
    let t = squared_errors.len() as f64;
    if squared_errors.is_empty() {
        return (0.0, 0.0);
    }
    let mse = linalg::pairwise_sum(squared_errors) / t;
    let rmse = libm::sqrt(mse);
    if squared_errors.len() < 2 || mse <= 0.0 {
        return (rmse, 0.0);
    }
    let deviations: Vec<f64> = squared_errors.iter().map(|e| (e - mse) * (e - mse)).collect();
    let variance = linalg::pairwise_sum(&deviations) / (t - 1.0);
    let mse_se = libm::sqrt(variance / t);
    (rmse, mse_se / (2.0 * rmse))
}

/// One realization at `axis_value`.
pub fn run_trial(config: &ExperimentConfig, axis_value: f64, trial_index: u64) -> Result<DVector<f64>> {
    if !config.sweep.grid.contains(&axis_value) {
        return Err(Error::invalid("axis_value", format!("{axis_value} is not on the sweep grid")));
    }
    Ok(GridPoint::new(config, axis_value)?.run_trial(trial_index))
}

/// Grid points of `config` in grid order.
pub fn grid_points(config: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    config.validate()?;
    config
        .sweep
        .grid
        .iter()
        .map(|&v| GridPoint::new(config, v))
        .collect()
}

/// Sequential sweep.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    Ok(grid_points(config)?
        .iter()
        .map(|point| point.run(config.trials))
        .collect())
}

//! JSON experiment configuration.
//!
//! Parsing happens in two passes: serde maps the document onto the raw
//! [`ConfigFile`] tree (syntax and type errors carry the JSON path), then
//! [`ConfigFile::to_experiment`] checks the semantics and reports each problem
//! under the path of the offending field.

use std::fmt;
use std::path::Path;

use mbcrb_core::model::{build_ar1_covariance, validate_model_pair};
use mbcrb_core::{
    AssumedPrior, ErrorReference, EstimatorKind, ExperimentConfig, GaussianDensity, LinearGaussianLikelihood,
    ModelPair, SweepAxis, SweepSpec,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A configuration problem located by its dotted JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
    /// The document is well formed but a covariance is not positive definite.
    pub numerical: bool,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
            numerical: false,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub true_model: TrueModelSection,
    pub assumed_model: AssumedModelSection,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueModelSection {
    pub prior_mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_var_scalar: Option<f64>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_scalar: Option<f64>,
    /// Observation dimension when neither `H` nor a noise matrix fixes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumedModelSection {
    pub prior_mean: PriorMean,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_var_scalar: Option<f64>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_scalar: Option<f64>,
    /// Observation dimension when neither `H` nor a noise matrix fixes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
    pub noise: NoiseSpec,
}

/// Observation matrix and noise fields of either model section.
struct LikelihoodFields<'a> {
    h: &'a Option<Vec<Vec<f64>>>,
    h_scalar: Option<f64>,
    n_x: Option<usize>,
    noise: &'a NoiseSpec,
}

impl TrueModelSection {
    fn likelihood_fields(&self) -> LikelihoodFields<'_> {
        LikelihoodFields { h: &self.h, h_scalar: self.h_scalar, n_x: self.n_x, noise: &self.noise }
    }
}

impl AssumedModelSection {
    fn likelihood_fields(&self) -> LikelihoodFields<'_> {
        LikelihoodFields { h: &self.h, h_scalar: self.h_scalar, n_x: self.n_x, noise: &self.noise }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Ar1 { rho: f64, sigma_sq: f64 },
    Matrix(Vec<Vec<f64>>),
}

/// A mean vector or the string `"flat"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorMean {
    Vector(Vec<f64>),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: usize,
    pub master_seed: u64,
    /// Nominal N: used by `bound` and `pseudotrue`, and held fixed by sweeps
    /// over the other axes.
    pub n_samples: usize,
    #[serde(default)]
    pub estimator: EstimatorName,
    pub error_reference: ReferenceName,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    #[default]
    Map,
    Qmle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceName {
    Pseudotrue,
    TrueParameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    SampleCount,
    AssumedGain,
    AssumedNoiseVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: AxisName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeSection>,
}

/// Inclusive `start, start+step, …, stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSection {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            ConfigError::at(path, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config tree serializes")
    }

    /// The validated experiment this document describes.
    pub fn to_experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let true_prior = density(
            "true_model",
            &self.true_model.prior_mean,
            &self.true_model.prior_cov,
            self.true_model.prior_var_scalar,
        )?;
        let n_psi = true_prior.dim();
        let true_lik = likelihood("true_model", &self.true_model.likelihood_fields(), n_psi)?;

        let assumed = &self.assumed_model;
        let (assumed_prior, n_theta) = match &assumed.prior_mean {
            PriorMean::Keyword(word) if word == "flat" => {
                if assumed.prior_cov.is_some() || assumed.prior_var_scalar.is_some() {
                    return Err(ConfigError::at(
                        "assumed_model.prior_mean",
                        "a flat prior takes no prior_cov or prior_var_scalar",
                    ));
                }
                (AssumedPrior::Flat, assumed_parameter_dim(&assumed.likelihood_fields(), n_psi))
            }
            PriorMean::Keyword(word) => {
                return Err(ConfigError::at(
                    "assumed_model.prior_mean",
                    format!("expected a vector or \"flat\", found \"{word}\""),
                ))
            }
            PriorMean::Vector(mean) => {
                let prior = density("assumed_model", mean, &assumed.prior_cov, assumed.prior_var_scalar)?;
                let dim = prior.dim();
                (AssumedPrior::Gaussian(prior), dim)
            }
        };
        let assumed_lik = likelihood("assumed_model", &assumed.likelihood_fields(), n_theta)?;
        if assumed_lik.observation_dim() != true_lik.observation_dim() {
            return Err(ConfigError::at(
                "assumed_model",
                format!(
                    "observation dimension {} differs from the true model's {}",
                    assumed_lik.observation_dim(),
                    true_lik.observation_dim()
                ),
            ));
        }

        let exp = &self.experiment;
        if exp.trials < 100 {
            return Err(ConfigError::at("experiment.trials", "at least 100 trials are required"));
        }
        if exp.n_samples == 0 {
            return Err(ConfigError::at("experiment.n_samples", "must be at least 1"));
        }
        let estimator = match exp.estimator {
            EstimatorName::Map => EstimatorKind::Map,
            EstimatorName::Qmle => EstimatorKind::Qmle,
        };
        let error_reference = match exp.error_reference {
            ReferenceName::Pseudotrue => ErrorReference::Pseudotrue,
            ReferenceName::TrueParameter => {
                if n_theta != n_psi {
                    return Err(ConfigError::at(
                        "experiment.error_reference",
                        "true_parameter needs equal true and assumed parameter dimensions",
                    ));
                }
                ErrorReference::TrueParameter
            }
        };
        let sweep = sweep(&exp.sweep)?;

        let pair = ModelPair {
            true_prior,
            true_lik,
            assumed_prior,
            assumed_lik,
            n_samples: exp.n_samples,
        };
        let pair = if estimator == EstimatorKind::Qmle {
            pair.with_flat_assumed_prior()
        } else {
            pair
        };
        let report = validate_model_pair(&pair);
        if let Some(v) = report.violations.first() {
            return Err(ConfigError {
                path: config_path(&v.field).to_string(),
                numerical: v.message.contains("positive definite"),
                message: v.message.clone(),
            });
        }
        Ok(ExperimentConfig {
            pair,
            estimator,
            trials: exp.trials,
            master_seed: exp.master_seed,
            error_reference,
            sweep,
        })
    }
}

/// Config path of a model-validation field.
fn config_path(field: &str) -> &'static str {
    match field {
        "true_prior.mean" => "true_model.prior_mean",
        "true_prior.covariance" => "true_model.prior_cov",
        "true_lik.noise_covariance" => "true_model.noise",
        "true_lik.observation_matrix" => "true_model.H",
        "assumed_prior.mean" => "assumed_model.prior_mean",
        "assumed_prior.covariance" => "assumed_model.prior_cov",
        "assumed_lik.noise_covariance" => "assumed_model.noise",
        "assumed_lik.observation_matrix" => "assumed_model.H",
        "n_samples" => "experiment.n_samples",
        _ => "",
    }
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(ConfigError::at(path, "matrix must be non-empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(ConfigError::at(
            format!("{path}[{i}]"),
            format!("row has {} entries, expected {ncols}", rows[i].len()),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn density(
    section: &str,
    mean: &[f64],
    cov: &Option<Vec<Vec<f64>>>,
    var_scalar: Option<f64>,
) -> Result<GaussianDensity, ConfigError> {
    if mean.is_empty() {
        return Err(ConfigError::at(format!("{section}.prior_mean"), "must be non-empty"));
    }
    let n = mean.len();
    let covariance = match (cov, var_scalar) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(ConfigError::at(
                section,
                "exactly one of prior_cov and prior_var_scalar is required",
            ))
        }
        (None, Some(v)) => {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::at(
                    format!("{section}.prior_var_scalar"),
                    "must be positive and finite",
                ));
            }
            DMatrix::identity(n, n) * v
        }
        (Some(rows), None) => {
            let path = format!("{section}.prior_cov");
            let m = matrix(&path, rows)?;
            if m.shape() != (n, n) {
                return Err(ConfigError::at(
                    path,
                    format!("expected {n}×{n} to match prior_mean, found {}×{}", m.nrows(), m.ncols()),
                ));
            }
            m
        }
    };
    Ok(GaussianDensity::new(DVector::from_column_slice(mean), covariance))
}

/// Assumed parameter dimension for a flat prior: the columns of `H`, or `n_ψ`.
fn assumed_parameter_dim(fields: &LikelihoodFields<'_>, n_psi: usize) -> usize {
    match fields.h {
        Some(rows) => rows.first().map_or(0, Vec::len),
        None => n_psi,
    }
}

fn likelihood(section: &str, fields: &LikelihoodFields<'_>, n_param: usize) -> Result<LinearGaussianLikelihood, ConfigError> {
    let noise_dim = match fields.noise {
        NoiseSpec::Matrix(rows) => Some(rows.len()),
        NoiseSpec::Ar1 { .. } => None,
    };
    let observation_matrix = match (fields.h, fields.h_scalar) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(ConfigError::at(section, "exactly one of H and h_scalar is required"))
        }
        (Some(rows), None) => {
            let path = format!("{section}.H");
            let h = matrix(&path, rows)?;
            if h.ncols() != n_param {
                return Err(ConfigError::at(
                    path,
                    format!("expected {n_param} columns to match the parameter dimension, found {}", h.ncols()),
                ));
            }
            if fields.n_x.is_some_and(|n| n != h.nrows()) {
                return Err(ConfigError::at(format!("{section}.n_x"), "disagrees with the rows of H"));
            }
            h
        }
        (None, Some(h)) => {
            if !h.is_finite() {
                return Err(ConfigError::at(format!("{section}.h_scalar"), "must be finite"));
            }
            let n_x = fields.n_x.or(noise_dim).unwrap_or(n_param);
            if n_x == 0 {
                return Err(ConfigError::at(format!("{section}.n_x"), "must be at least 1"));
            }
            mbcrb_core::linalg::scaled_identity(n_x, n_param, h)
        }
    };
    let n_x = observation_matrix.nrows();
    let noise_path = format!("{section}.noise");
    let noise_covariance = match fields.noise {
        NoiseSpec::Ar1 { rho, sigma_sq } => {
            if rho.is_nan() || rho.abs() >= 1.0 {
                return Err(ConfigError::at(
                    format!("{noise_path}.ar1.rho"),
                    format!("out of range: {rho} (need |rho| < 1)"),
                ));
            }
            if !(*sigma_sq > 0.0 && sigma_sq.is_finite()) {
                return Err(ConfigError::at(
                    format!("{noise_path}.ar1.sigma_sq"),
                    format!("out of range: {sigma_sq} (need a positive finite value)"),
                ));
            }
            build_ar1_covariance(*rho, n_x, *sigma_sq).map_err(|e| ConfigError::at(&noise_path, e.to_string()))?
        }
        NoiseSpec::Matrix(rows) => {
            let path = format!("{noise_path}.matrix");
            let m = matrix(&path, rows)?;
            if m.shape() != (n_x, n_x) {
                return Err(ConfigError::at(
                    path,
                    format!("expected {n_x}×{n_x}, found {}×{}", m.nrows(), m.ncols()),
                ));
            }
            if !mbcrb_core::linalg::is_symmetric(&m, mbcrb_core::linalg::SYMMETRY_TOLERANCE) {
                return Err(ConfigError::at(path, "not symmetric"));
            }
            m
        }
    };
    Ok(LinearGaussianLikelihood::new(observation_matrix, noise_covariance))
}

fn sweep(section: &SweepSection) -> Result<SweepSpec, ConfigError> {
    let axis = match section.axis {
        AxisName::SampleCount => SweepAxis::SampleCount,
        AxisName::AssumedGain => SweepAxis::AssumedGain,
        AxisName::AssumedNoiseVariance => SweepAxis::AssumedNoiseVariance,
    };
    let (path, grid) = match (&section.grid, &section.range) {
        (Some(grid), None) => ("experiment.sweep.grid", grid.clone()),
        (None, Some(range)) => ("experiment.sweep.range", expand_range(range)?),
        _ => {
            return Err(ConfigError::at(
                "experiment.sweep",
                "exactly one of grid and range is required",
            ))
        }
    };
    SweepSpec::new(axis, grid).map_err(|e| match e {
        mbcrb_core::Error::InvalidArgument { reason, .. } => ConfigError::at(path, reason),
        other => ConfigError::at(path, other.to_string()),
    })
}

/// Values are rounded to 12 decimals so that `0.6 + 2·0.1` reads as `0.8`.
pub fn expand_range(range: &RangeSection) -> Result<Vec<f64>, ConfigError> {
    let RangeSection { start, stop, step } = *range;
    if !(step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite()) {
        return Err(ConfigError::at(
            "experiment.sweep.range.step",
            "start and stop must be finite and step positive",
        ));
    }
    if stop < start {
        return Err(ConfigError::at("experiment.sweep.range.stop", "must not be below start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(ConfigError::at("experiment.sweep.range.step", "range has too many points"));
    }
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"{
        "true_model": {"prior_mean": [0], "prior_var_scalar": 1, "h_scalar": 1,
                       "noise": {"matrix": [[1]]}},
        "assumed_model": {"prior_mean": [0], "prior_var_scalar": 1, "h_scalar": 2,
                          "noise": {"ar1": {"rho": 0, "sigma_sq": 1}}},
        "experiment": {"trials": 100, "master_seed": 1, "n_samples": 1,
                       "error_reference": "pseudotrue",
                       "sweep": {"axis": "sample_count", "grid": [1]}}
    }"#;

    fn with(path: &[&str], value: serde_json::Value) -> String {
        let mut doc: serde_json::Value = serde_json::from_str(SCALAR).unwrap();
        let mut node = &mut doc;
        for key in &path[..path.len() - 1] {
            node = node.get_mut(*key).unwrap();
        }
        node[path[path.len() - 1]] = value;
        doc.to_string()
    }

    fn error_of(text: &str) -> ConfigError {
        ConfigFile::from_json(text).unwrap().to_experiment().unwrap_err()
    }

    #[test]
    fn scalar_document_builds() {
        let config = ConfigFile::from_json(SCALAR).unwrap().to_experiment().unwrap();
        assert_eq!(config.pair.assumed_lik.observation_matrix[(0, 0)], 2.0);
        assert_eq!(config.sweep.grid(), &[1.0]);
    }

    #[test]
    fn rho_out_of_range_is_addressed() {
        let text = with(&["true_model", "noise"], serde_json::json!({"ar1": {"rho": 1.5, "sigma_sq": 1}}));
        let err = error_of(&text);
        assert_eq!(err.path, "true_model.noise.ar1.rho");
        assert!(err.to_string().starts_with("true_model.noise.ar1.rho: out of range"));
        assert!(!err.numerical);
    }

    #[test]
    fn type_errors_carry_the_json_path() {
        let text = with(&["experiment", "trials"], serde_json::json!("many"));
        let err = ConfigFile::from_json(&text).unwrap_err();
        assert_eq!(err.path, "experiment.trials");
        let text = with(&["experiment", "colour"], serde_json::json!(1));
        assert!(ConfigFile::from_json(&text).is_err());
    }

    #[test]
    fn indefinite_covariance_is_numerical() {
        let text = with(&["true_model", "noise"], serde_json::json!({"matrix": [[-1]]}));
        let err = error_of(&text);
        assert!(err.numerical);
        assert_eq!(err.path, "true_model.noise");
    }

    #[test]
    fn semantic_errors() {
        let text = with(&["assumed_model", "prior_mean"], serde_json::json!("vague"));
        assert_eq!(error_of(&text).path, "assumed_model.prior_mean");
        let text = with(&["experiment", "trials"], serde_json::json!(99));
        assert_eq!(error_of(&text).path, "experiment.trials");
        let text = with(&["experiment", "sweep", "grid"], serde_json::json!([2, 1]));
        assert_eq!(error_of(&text).path, "experiment.sweep.grid");
        let text = with(&["true_model", "prior_cov"], serde_json::json!([[1]]));
        assert_eq!(error_of(&text).path, "true_model");
    }

    #[test]
    fn flat_prior_keyword() {
        let text = with(&["assumed_model", "prior_mean"], serde_json::json!("flat"));
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["assumed_model"].as_object_mut().unwrap().remove("prior_var_scalar");
        let config = ConfigFile::from_json(&doc.to_string()).unwrap().to_experiment().unwrap();
        assert!(config.pair.assumed_prior.is_flat());
    }

    #[test]
    fn range_is_inclusive_and_rounded() {
        let grid = expand_range(&RangeSection { start: 0.6, stop: 1.4, step: 0.1 }).unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid[2], 0.8);
        assert_eq!(grid[8], 1.4);
        let grid = expand_range(&RangeSection { start: 1.0, stop: 40.0, step: 1.0 }).unwrap();
        assert_eq!(grid, (1..=40).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn round_trip() {
        let parsed = ConfigFile::from_json(SCALAR).unwrap();
        let again = ConfigFile::from_json(&parsed.to_json()).unwrap();
        assert_eq!(parsed, again);
    }
}

//! True and assumed linear-Gaussian models.
//!
//! The true model draws `ψ ~ N(μ_ψ, Σ_ψ)` and `x_n | ψ ~ N(H*ψ, Σ*)`; the
//! assumed model is `θ ~ N(μ_θ, Σ_θ)` (or flat) with `x_n | θ ~ N(Hθ, Σ)`.
//! [`ModelPair`] is plain data; [`ModelPair::factor`] validates it and caches
//! the Cholesky factors every downstream computation reuses.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CholeskyFactor, SYMMETRY_TOLERANCE};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self { mean, covariance }
    }

    /// `N(mean, variance·I)`.
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Self {
        let n = mean.len();
        Self {
            mean,
            covariance: DMatrix::identity(n, n) * variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianLikelihood {
    /// `n_x × n_param`.
    pub observation_matrix: DMatrix<f64>,
    /// `n_x × n_x`, SPD.
    pub noise_covariance: DMatrix<f64>,
}

impl LinearGaussianLikelihood {
    pub fn new(observation_matrix: DMatrix<f64>, noise_covariance: DMatrix<f64>) -> Self {
        Self {
            observation_matrix,
            noise_covariance,
        }
    }

    pub fn observation_dim(&self) -> usize {
        self.observation_matrix.nrows()
    }

    pub fn parameter_dim(&self) -> usize {
        self.observation_matrix.ncols()
    }
}

/// Prior of the assumed model. `Flat` stands for zero prior precision, which
/// turns the MAP estimator into the QMLE.
#[derive(Debug, Clone, PartialEq)]
pub enum AssumedPrior {
    Gaussian(GaussianDensity),
    Flat,
}

impl AssumedPrior {
    pub fn is_flat(&self) -> bool {
        matches!(self, AssumedPrior::Flat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPair {
    pub true_prior: GaussianDensity,
    pub true_lik: LinearGaussianLikelihood,
    pub assumed_prior: AssumedPrior,
    pub assumed_lik: LinearGaussianLikelihood,
    pub n_samples: usize,
}

impl ModelPair {
    pub fn true_param_dim(&self) -> usize {
        self.true_prior.dim()
    }

    pub fn assumed_param_dim(&self) -> usize {
        self.assumed_lik.parameter_dim()
    }

    pub fn observation_dim(&self) -> usize {
        self.true_lik.observation_dim()
    }

    pub fn with_n_samples(mut self, n_samples: usize) -> Self {
        self.n_samples = n_samples;
        self
    }

    pub fn with_flat_assumed_prior(mut self) -> Self {
        self.assumed_prior = AssumedPrior::Flat;
        self
    }

    /// Validates the pair and caches its factorizations.
    pub fn factor(&self) -> Result<FactoredModel> {
        let report = validate_model_pair(self);
        if !report.is_valid() {
            return Err(Error::InvalidModel(report));
        }
        FactoredModel::from_valid(self.clone())
    }
}

/// `σ²·Q` with `Q_ij = ρ^|i−j|`.
pub fn build_ar1_covariance(rho: f64, n: usize, sigma_sq: f64) -> Result<DMatrix<f64>> {
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Err(Error::invalid("rho", format!("|rho| must be < 1, got {rho}")));
    }
    if sigma_sq <= 0.0 || !sigma_sq.is_finite() {
        return Err(Error::invalid(
            "sigma_sq",
            format!("must be positive and finite, got {sigma_sq}"),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        sigma_sq * libm::pow(rho, i.abs_diff(j) as f64)
    }))
}

/// One violated invariant, addressed by the field it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Whether any entry's rendered text contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.violations
            .iter()
            .any(|v| format!("{v}").contains(needle))
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_spd(report: &mut ValidationReport, field: &str, name: &str, m: &DMatrix<f64>) {
    if m.iter().any(|v| !v.is_finite()) {
        report.push(field, format!("{name} has non-finite entries"));
        return;
    }
    if !m.is_square() {
        report.push(
            field,
            format!("{name} not square ({}×{})", m.nrows(), m.ncols()),
        );
        return;
    }
    if !linalg::is_symmetric(m, SYMMETRY_TOLERANCE) {
        report.push(field, format!("{name} not symmetric"));
        return;
    }
    if linalg::cholesky(m).is_none() {
        report.push(field, format!("{name} not positive definite"));
    }
}

fn check_density(report: &mut ValidationReport, prefix: &str, density: &GaussianDensity) {
    let field = format!("{prefix}.covariance");
    check_spd(report, &field, "covariance", &density.covariance);
    if density.mean.iter().any(|v| !v.is_finite()) {
        report.push(format!("{prefix}.mean"), "mean has non-finite entries");
    }
    if density.mean.len() != density.covariance.nrows() {
        report.push(
            format!("{prefix}.mean"),
            format!(
                "dimension mismatch: mean length {} but covariance dimension {}",
                density.mean.len(),
                density.covariance.nrows()
            ),
        );
    }
}

fn check_likelihood(report: &mut ValidationReport, prefix: &str, lik: &LinearGaussianLikelihood) {
    check_spd(
        report,
        &format!("{prefix}.noise_covariance"),
        "noise_covariance",
        &lik.noise_covariance,
    );
    if lik.observation_matrix.iter().any(|v| !v.is_finite()) {
        report.push(
            format!("{prefix}.observation_matrix"),
            "observation_matrix has non-finite entries",
        );
    }
    if lik.observation_matrix.nrows() != lik.noise_covariance.nrows() {
        report.push(
            format!("{prefix}.observation_matrix"),
            format!(
                "dimension mismatch: observation_matrix has {} rows but noise_covariance dimension {}",
                lik.observation_matrix.nrows(),
                lik.noise_covariance.nrows()
            ),
        );
    }
}

/// Lists every violated well-formedness invariant of `pair`; empty when valid.
pub fn validate_model_pair(pair: &ModelPair) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_density(&mut report, "true_prior", &pair.true_prior);
    check_likelihood(&mut report, "true_lik", &pair.true_lik);
    if let AssumedPrior::Gaussian(prior) = &pair.assumed_prior {
        check_density(&mut report, "assumed_prior", prior);
        if prior.dim() != pair.assumed_lik.parameter_dim() {
            report.push(
                "assumed_prior.mean",
                format!(
                    "dimension mismatch: assumed prior dimension {} but assumed observation_matrix has {} columns",
                    prior.dim(),
                    pair.assumed_lik.parameter_dim()
                ),
            );
        }
    }
    check_likelihood(&mut report, "assumed_lik", &pair.assumed_lik);
    if pair.true_lik.parameter_dim() != pair.true_prior.dim() {
        report.push(
            "true_lik.observation_matrix",
            format!(
                "dimension mismatch: observation_matrix has {} columns but true prior dimension {}",
                pair.true_lik.parameter_dim(),
                pair.true_prior.dim()
            ),
        );
    }
    if pair.true_lik.observation_dim() != pair.assumed_lik.observation_dim() {
        report.push(
            "assumed_lik.observation_matrix",
            format!(
                "observation dimension mismatch: true model has n_x = {} but assumed model has n_x = {}",
                pair.true_lik.observation_dim(),
                pair.assumed_lik.observation_dim()
            ),
        );
    }
    if pair.n_samples == 0 {
        report.push("n_samples", "n_samples must be at least 1");
    }
    report
}

/// A validated [`ModelPair`] with cached factorizations.
#[derive(Debug, Clone)]
pub struct FactoredModel {
    pair: ModelPair,
    true_prior_factor: CholeskyFactor,
    true_noise_factor: CholeskyFactor,
    assumed_noise_factor: CholeskyFactor,
    assumed_prior_factor: Option<CholeskyFactor>,
    assumed_prior_precision: DMatrix<f64>,
    assumed_prior_precision_mean: DVector<f64>,
    assumed_whitened_transpose: DMatrix<f64>,
}

impl FactoredModel {
    fn from_valid(pair: ModelPair) -> Result<Self> {
        let true_prior_factor = linalg::cholesky(&pair.true_prior.covariance)
            .ok_or(Error::NotPositiveDefinite { what: "true prior covariance" })?;
        let true_noise_factor = linalg::cholesky(&pair.true_lik.noise_covariance)
            .ok_or(Error::NotPositiveDefinite { what: "true noise covariance" })?;
        let assumed_noise_factor = linalg::cholesky(&pair.assumed_lik.noise_covariance)
            .ok_or(Error::NotPositiveDefinite { what: "assumed noise covariance" })?;
        let n_theta = pair.assumed_param_dim();
        let (assumed_prior_factor, precision, precision_mean) = match &pair.assumed_prior {
            AssumedPrior::Gaussian(prior) => {
                let factor = linalg::cholesky(&prior.covariance)
                    .ok_or(Error::NotPositiveDefinite { what: "assumed prior covariance" })?;
                let precision = linalg::spd_inverse(&factor);
                let precision_mean = factor.solve(&prior.mean);
                (Some(factor), precision, precision_mean)
            }
            AssumedPrior::Flat => (None, DMatrix::zeros(n_theta, n_theta), DVector::zeros(n_theta)),
        };
        // HᵀΣ⁻¹ = (Σ⁻¹H)ᵀ
        let assumed_whitened_transpose = assumed_noise_factor
            .solve(&pair.assumed_lik.observation_matrix)
            .transpose();
        Ok(Self {
            pair,
            true_prior_factor,
            true_noise_factor,
            assumed_noise_factor,
            assumed_prior_factor,
            assumed_prior_precision: precision,
            assumed_prior_precision_mean: precision_mean,
            assumed_whitened_transpose,
        })
    }

    pub fn pair(&self) -> &ModelPair {
        &self.pair
    }

    pub fn n_samples(&self) -> usize {
        self.pair.n_samples
    }

    pub fn true_param_dim(&self) -> usize {
        self.pair.true_param_dim()
    }

    pub fn assumed_param_dim(&self) -> usize {
        self.pair.assumed_param_dim()
    }

    pub fn observation_dim(&self) -> usize {
        self.pair.observation_dim()
    }

    /// Same model with a different sample count; factorizations are reused.
    pub fn with_n_samples(&self, n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        let mut model = self.clone();
        model.pair.n_samples = n_samples;
        Ok(model)
    }

    pub fn true_prior_factor(&self) -> &CholeskyFactor {
        &self.true_prior_factor
    }

    pub fn true_noise_factor(&self) -> &CholeskyFactor {
        &self.true_noise_factor
    }

    pub fn assumed_noise_factor(&self) -> &CholeskyFactor {
        &self.assumed_noise_factor
    }

    /// `None` for a flat assumed prior.
    pub fn assumed_prior_factor(&self) -> Option<&CholeskyFactor> {
        self.assumed_prior_factor.as_ref()
    }

    /// `Σ_θ⁻¹`, zero for a flat prior.
    pub fn assumed_prior_precision(&self) -> &DMatrix<f64> {
        &self.assumed_prior_precision
    }

    /// `Σ_θ⁻¹ μ_θ`, zero for a flat prior.
    pub fn assumed_prior_precision_mean(&self) -> &DVector<f64> {
        &self.assumed_prior_precision_mean
    }

    /// `HᵀΣ⁻¹` of the assumed likelihood.
    pub fn assumed_whitened_transpose(&self) -> &DMatrix<f64> {
        &self.assumed_whitened_transpose
    }

    pub fn sample_parameter_with<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = rng::standard_normal_vector(rng, self.true_param_dim());
        &self.pair.true_prior.mean + self.true_prior_factor.l_dirty().lower_triangle() * z
    }

    /// `n_x × N` matrix whose columns are `H*ψ + L* z_n`.
    pub fn sample_observations_with<R: Rng + ?Sized>(
        &self,
        psi: &DVector<f64>,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        if psi.len() != self.true_param_dim() {
            return Err(Error::DimensionMismatch {
                what: "psi",
                expected: self.true_param_dim(),
                found: psi.len(),
            });
        }
        let n_x = self.observation_dim();
        let noise_l = self.true_noise_factor.l_dirty().lower_triangle();
        let z = rng::standard_normal_matrix(rng, n_x, self.n_samples());
        let mut samples = noise_l * z;
        let center = &self.pair.true_lik.observation_matrix * psi;
        for mut column in samples.column_iter_mut() {
            column += &center;
        }
        Ok(samples)
    }
}

/// `N` observations drawn from the true likelihood at a fixed parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    /// `n_x × N`; column `n` is `x_n`.
    pub samples: DMatrix<f64>,
    pub generating_parameter: DVector<f64>,
    pub seed: u64,
}

impl ObservationBatch {
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }
}

/// One draw from `prior`, deterministic in `seed`.
pub fn sample_parameter(prior: &GaussianDensity, seed: u64) -> Result<DVector<f64>> {
    if prior.mean.len() != prior.covariance.nrows() {
        return Err(Error::DimensionMismatch {
            what: "prior mean",
            expected: prior.covariance.nrows(),
            found: prior.mean.len(),
        });
    }
    let factor = linalg::cholesky(&prior.covariance)
        .ok_or(Error::NotPositiveDefinite { what: "prior covariance" })?;
    let mut rng = rng::seeded_rng(seed);
    let z = rng::standard_normal_vector(&mut rng, prior.dim());
    Ok(&prior.mean + factor.l_dirty().lower_triangle() * z)
}

/// `N` i.i.d. draws of `x | ψ` under the true likelihood, deterministic in `seed`.
pub fn sample_observations(
    model: &FactoredModel,
    psi: &DVector<f64>,
    seed: u64,
) -> Result<ObservationBatch> {
    let mut rng = rng::seeded_rng(seed);
    let samples = model.sample_observations_with(psi, &mut rng)?;
    Ok(ObservationBatch {
        samples,
        generating_parameter: psi.clone(),
        seed,
    })
}

//! Closed-form bounds for linear-Gaussian model pairs.
//!
//! With `C = (N HᵀΣ⁻¹H + Σ_θ⁻¹)⁻¹` the pseudotrue parameter is the affine map
//! `θ₀(ψ) = C (N HᵀΣ⁻¹H* ψ + Σ_θ⁻¹ μ_θ)`, its Jacobian is the constant gain
//! `A = C N HᵀΣ⁻¹H*`, and the Bayesian information of the true model is
//! `J = N H*ᵀΣ*⁻¹H* + Σ_ψ⁻¹`. The misspecified bound is `A J⁻¹ Aᵀ`.
//!
//! All inverses go through Cholesky factors; the flat assumed prior enters as
//! a zero precision matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, CholeskyFactor};
use crate::model::FactoredModel;

/// `θ₀(ψ) = gain·ψ + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudotrueMap {
    /// `n_θ × n_ψ`.
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl PseudotrueMap {
    pub fn evaluate(&self, psi: &DVector<f64>) -> DVector<f64> {
        &self.gain * psi + &self.offset
    }
}

/// Information matrix of the true model split into data and prior parts.
#[derive(Debug, Clone, PartialEq)]
pub struct BfimDecomposition {
    pub data_term: DMatrix<f64>,
    pub prior_term: DMatrix<f64>,
    pub total: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub pseudotrue_gain: DMatrix<f64>,
    pub pseudotrue_offset: DVector<f64>,
    pub jacobian_a: DMatrix<f64>,
    pub bfim: BfimDecomposition,
    pub bcrb: DMatrix<f64>,
    pub mbcrb: DMatrix<f64>,
    /// Present only when `n_θ = n_ψ`.
    pub biased_bound: Option<DMatrix<f64>>,
}

/// `N HᵀΣ⁻¹H + Σ_θ⁻¹`.
pub fn normal_matrix(model: &FactoredModel) -> DMatrix<f64> {
    let n = model.n_samples() as f64;
    let h = &model.pair().assumed_lik.observation_matrix;
    linalg::inverse_quadratic_form(model.assumed_noise_factor(), h) * n
        + model.assumed_prior_precision()
}

/// Cholesky factor of [`normal_matrix`].
pub fn normal_factor(model: &FactoredModel) -> Result<CholeskyFactor> {
    linalg::cholesky(&normal_matrix(model)).ok_or(Error::SingularNormalMatrix)
}

pub fn pseudotrue_map(model: &FactoredModel) -> Result<PseudotrueMap> {
    let factor = normal_factor(model)?;
    let n = model.n_samples() as f64;
    let cross = model.assumed_whitened_transpose() * &model.pair().true_lik.observation_matrix * n;
    Ok(PseudotrueMap {
        gain: factor.solve(&cross),
        offset: factor.solve(model.assumed_prior_precision_mean()),
    })
}

/// Closed-form pseudotrue parameter at `psi`.
///
/// When both parameters live in the same space this is evaluated as the
/// correction `ψ + C[N HᵀΣ⁻¹(H* − H)ψ + Σ_θ⁻¹(μ_θ − ψ)]`, which vanishes
/// exactly for a matched likelihood with a flat prior.
pub fn pseudotrue(model: &FactoredModel, psi: &DVector<f64>) -> Result<DVector<f64>> {
    check_true_dim(model, psi)?;
    if model.assumed_param_dim() != model.true_param_dim() {
        return Ok(pseudotrue_map(model)?.evaluate(psi));
    }
    let factor = normal_factor(model)?;
    let n = model.n_samples() as f64;
    let pair = model.pair();
    let gain_gap = &pair.true_lik.observation_matrix - &pair.assumed_lik.observation_matrix;
    let rhs = model.assumed_whitened_transpose() * (gain_gap * psi) * n + model.assumed_prior_precision_mean()
        - model.assumed_prior_precision() * psi;
    Ok(psi + factor.solve(&rhs))
}

/// `A = ∂θ₀/∂ψ`, constant for linear models.
pub fn pseudotrue_jacobian(model: &FactoredModel) -> Result<DMatrix<f64>> {
    Ok(pseudotrue_map(model)?.gain)
}

pub fn bfim(model: &FactoredModel) -> BfimDecomposition {
    let n = model.n_samples() as f64;
    let data_term = linalg::inverse_quadratic_form(
        model.true_noise_factor(),
        &model.pair().true_lik.observation_matrix,
    ) * n;
    let prior_term = linalg::spd_inverse(model.true_prior_factor());
    let total = &data_term + &prior_term;
    BfimDecomposition {
        data_term,
        prior_term,
        total,
    }
}

fn bfim_factor(model: &FactoredModel) -> Result<CholeskyFactor> {
    linalg::cholesky(&bfim(model).total).ok_or(Error::NotPositiveDefinite {
        what: "Bayesian information matrix",
    })
}

/// `J⁻¹`.
pub fn bcrb(model: &FactoredModel) -> Result<DMatrix<f64>> {
    Ok(linalg::spd_inverse(&bfim_factor(model)?))
}

/// `A J⁻¹ Aᵀ`.
pub fn mbcrb(model: &FactoredModel) -> Result<DMatrix<f64>> {
    let a = pseudotrue_jacobian(model)?;
    Ok(linalg::inverse_quadratic_form(&bfim_factor(model)?, &a.transpose()))
}

/// `r(ψ) = θ₀(ψ) − ψ`; needs `n_θ = n_ψ`.
pub fn bias_vector(model: &FactoredModel, psi: &DVector<f64>) -> Result<DVector<f64>> {
    check_same_space(model)?;
    Ok(pseudotrue(model, psi)? - psi)
}

/// `E_ψ{r rᵀ} = (A−I)Σ_ψ(A−I)ᵀ + m mᵀ` with `m = (A−I)μ_ψ + c`.
pub fn expected_bias_outer_product(model: &FactoredModel) -> Result<DMatrix<f64>> {
    check_same_space(model)?;
    let map = pseudotrue_map(model)?;
    let n = model.true_param_dim();
    let shift = &map.gain - DMatrix::<f64>::identity(n, n);
    let prior = &model.pair().true_prior;
    let mean_bias = &shift * &prior.mean + &map.offset;
    let spread = &shift * &prior.covariance * shift.transpose();
    Ok(linalg::symmetrize(&(spread + &mean_bias * mean_bias.transpose())))
}

/// `A J⁻¹ Aᵀ + E_ψ{r rᵀ}`, bounding the error against the true parameter.
pub fn biased_bound(model: &FactoredModel) -> Result<DMatrix<f64>> {
    let bias = expected_bias_outer_product(model)?;
    Ok(linalg::symmetrize(&(mbcrb(model)? + bias)))
}

/// Exact error covariance of the MAP estimator around `θ₀(ψ)`:
/// `C (N HᵀΣ⁻¹Σ*Σ⁻¹H) Cᵀ`, independent of `ψ`.
pub fn map_error_covariance(model: &FactoredModel) -> Result<DMatrix<f64>> {
    let factor = normal_factor(model)?;
    let n = model.n_samples() as f64;
    // B = C HᵀΣ⁻¹, error = B Σ_n (x_n − H*ψ)
    let b = factor.solve(model.assumed_whitened_transpose());
    let cov = &b * &model.pair().true_lik.noise_covariance * b.transpose() * n;
    Ok(linalg::symmetrize(&cov))
}

/// Score of the true likelihood, `∇_ψ ln p(X|ψ) = H*ᵀΣ*⁻¹(Σ_n x_n − N H*ψ)`,
/// from the column sum of an observation batch.
pub fn true_score(model: &FactoredModel, psi: &DVector<f64>, column_sum: &DVector<f64>) -> Result<DVector<f64>> {
    check_true_dim(model, psi)?;
    let h = &model.pair().true_lik.observation_matrix;
    if column_sum.len() != h.nrows() {
        return Err(Error::DimensionMismatch {
            what: "column_sum",
            expected: h.nrows(),
            found: column_sum.len(),
        });
    }
    let residual = column_sum - h * psi * model.n_samples() as f64;
    Ok(h.transpose() * model.true_noise_factor().solve(&residual))
}

pub fn bound_report(model: &FactoredModel) -> Result<BoundReport> {
    let map = pseudotrue_map(model)?;
    let biased_bound = if model.assumed_param_dim() == model.true_param_dim() {
        Some(biased_bound(model)?)
    } else {
        None
    };
    Ok(BoundReport {
        jacobian_a: map.gain.clone(),
        pseudotrue_gain: map.gain,
        pseudotrue_offset: map.offset,
        bfim: bfim(model),
        bcrb: bcrb(model)?,
        mbcrb: mbcrb(model)?,
        biased_bound,
    })
}

fn check_true_dim(model: &FactoredModel, psi: &DVector<f64>) -> Result<()> {
    if psi.len() != model.true_param_dim() {
        return Err(Error::DimensionMismatch {
            what: "psi",
            expected: model.true_param_dim(),
            found: psi.len(),
        });
    }
    Ok(())
}

fn check_same_space(model: &FactoredModel) -> Result<()> {
    if model.assumed_param_dim() != model.true_param_dim() {
        return Err(Error::DimensionMismatch {
            what: "assumed parameter dimension (must equal true parameter dimension)",
            expected: model.true_param_dim(),
            found: model.assumed_param_dim(),
        });
    }
    Ok(())
}

//! Model pairs used by the reference experiments.
//!
//! True model: `ψ ~ N([10, 20, 5]ᵀ, 0.5·I)`, `H* = I`, `Σ* = 0.04·Q` with
//! AR-1 correlation `ρ = 0.5`. The mismatched assumed model keeps `H = I` and
//! `Σ_θ = 0.5·I` but uses `μ_θ = [8, 18, 6]ᵀ` and `Σ = 0.1·I`.

use alloc::vec;

use nalgebra::{DMatrix, DVector};

use crate::model::{
    build_ar1_covariance, AssumedPrior, GaussianDensity, LinearGaussianLikelihood, ModelPair,
};

pub const TRUE_PRIOR_MEAN: [f64; 3] = [10.0, 20.0, 5.0];
pub const TRUE_PRIOR_VARIANCE: f64 = 0.5;
pub const TRUE_NOISE_VARIANCE: f64 = 0.04;
pub const TRUE_NOISE_RHO: f64 = 0.5;
pub const ASSUMED_PRIOR_MEAN: [f64; 3] = [8.0, 18.0, 6.0];
pub const ASSUMED_NOISE_VARIANCE: f64 = 0.1;

pub fn baseline_true_prior() -> GaussianDensity {
    GaussianDensity::isotropic(DVector::from_row_slice(&TRUE_PRIOR_MEAN), TRUE_PRIOR_VARIANCE)
}

pub fn baseline_true_likelihood() -> LinearGaussianLikelihood {
    LinearGaussianLikelihood::new(
        DMatrix::identity(3, 3),
        build_ar1_covariance(TRUE_NOISE_RHO, 3, TRUE_NOISE_VARIANCE).expect("valid AR-1 parameters"),
    )
}

/// Mismatched prior mean and white assumed noise.
pub fn baseline_pair(n_samples: usize) -> ModelPair {
    ModelPair {
        true_prior: baseline_true_prior(),
        true_lik: baseline_true_likelihood(),
        assumed_prior: AssumedPrior::Gaussian(GaussianDensity::isotropic(
            DVector::from_row_slice(&ASSUMED_PRIOR_MEAN),
            TRUE_PRIOR_VARIANCE,
        )),
        assumed_lik: LinearGaussianLikelihood::new(
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3) * ASSUMED_NOISE_VARIANCE,
        ),
        n_samples,
    }
}

/// Assumed likelihood equal to the true one and a flat assumed prior.
pub fn matched_flat_pair(n_samples: usize) -> ModelPair {
    ModelPair {
        true_prior: baseline_true_prior(),
        true_lik: baseline_true_likelihood(),
        assumed_prior: AssumedPrior::Flat,
        assumed_lik: baseline_true_likelihood(),
        n_samples,
    }
}

/// Scalar pair: `N = 1`, `h* = 1`, `h = 2`, unit variances everywhere,
/// `μ_θ = μ_ψ = 0`.
pub fn scalar_example_pair() -> ModelPair {
    let unit = |m: f64| DMatrix::from_element(1, 1, m);
    ModelPair {
        true_prior: GaussianDensity::new(DVector::from_vec(vec![0.0]), unit(1.0)),
        true_lik: LinearGaussianLikelihood::new(unit(1.0), unit(1.0)),
        assumed_prior: AssumedPrior::Gaussian(GaussianDensity::new(
            DVector::from_vec(vec![0.0]),
            unit(1.0),
        )),
        assumed_lik: LinearGaussianLikelihood::new(unit(2.0), unit(1.0)),
        n_samples: 1,
    }
}

/// Random well-posed pair with every dimension in `1..=max_dim` and
/// `N` in `1..=max_samples`. Covariances are `B Bᵀ + I/2` with uniform `B`;
/// assumed priors are always proper so the normal matrix is PD.
pub fn random_pair<R: rand::Rng + ?Sized>(rng: &mut R, max_dim: usize, max_samples: usize) -> ModelPair {
    let n_psi = rng.random_range(1..=max_dim);
    let n_theta = rng.random_range(1..=max_dim);
    let n_x = rng.random_range(1..=max_dim);
    let mut uniform = |rows: usize, cols: usize, scale: f64| {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
    };
    let spd = |b: DMatrix<f64>| {
        let n = b.nrows();
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    };
    let true_prior = GaussianDensity::new(uniform(n_psi, 1, 10.0).column(0).into(), spd(uniform(n_psi, n_psi, 1.0)));
    let true_lik = LinearGaussianLikelihood::new(uniform(n_x, n_psi, 2.0), spd(uniform(n_x, n_x, 1.0)));
    let assumed_prior = GaussianDensity::new(uniform(n_theta, 1, 10.0).column(0).into(), spd(uniform(n_theta, n_theta, 1.0)));
    let assumed_lik = LinearGaussianLikelihood::new(uniform(n_x, n_theta, 2.0), spd(uniform(n_x, n_x, 1.0)));
    ModelPair {
        true_prior,
        true_lik,
        assumed_prior: AssumedPrior::Gaussian(assumed_prior),
        assumed_lik,
        n_samples: rng.random_range(1..=max_samples),
    }
}

//! Statistical checks against closed-form quantities. Seeds are fixed, so
//! every gate is deterministic.

use mbcrb_core::bounds::{self, pseudotrue};
use mbcrb_core::estimator::{ms_bias_diagnostic, EstimatorSpec};
use mbcrb_core::experiment::{rmse_with_standard_error, GridPoint};
use mbcrb_core::linalg::pairwise_sum;
use mbcrb_core::presets::{matched_flat_pair, baseline_pair, baseline_true_prior};
use mbcrb_core::pseudotrue::sampled_pseudotrue;
use mbcrb_core::rng::{seeded_rng, stream_rng};
use mbcrb_core::{
    EstimatorKind, ErrorReference, ExperimentConfig, FactoredModel, PreparedEstimator, SweepAxis, SweepSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Sample mean and standard error of each entry of the outer products `v vᵀ`.
fn outer_product_moments(vectors: &[DVector<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = vectors[0].len();
    let t = vectors.len() as f64;
    let mut mean = DMatrix::zeros(n, n);
    let mut se = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let products: Vec<f64> = vectors.iter().map(|v| v[i] * v[j]).collect();
            let m = pairwise_sum(&products) / t;
            let dev: Vec<f64> = products.iter().map(|p| (p - m) * (p - m)).collect();
            mean[(i, j)] = m;
            se[(i, j)] = (pairwise_sum(&dev) / (t - 1.0) / t).sqrt();
        }
    }
    (mean, se)
}

fn assert_within(estimate: &DMatrix<f64>, se: &DMatrix<f64>, truth: &DMatrix<f64>, k: f64) {
    for ((e, s), t) in estimate.iter().zip(se.iter()).zip(truth.iter()) {
        assert!((e - t).abs() <= k * s, "estimate {e} vs {t}, se {s}\n{estimate}\n{truth}");
    }
}

fn map_errors(model: &FactoredModel, trials: u64, seed: u64) -> Vec<DVector<f64>> {
    let estimator = PreparedEstimator::from_model(model).unwrap();
    let map = bounds::pseudotrue_map(model).unwrap();
    (0..trials)
        .map(|t| {
            let mut rng = stream_rng(seed, 7, t);
            let psi = model.sample_parameter_with(&mut rng);
            let x = model.sample_observations_with(&psi, &mut rng).unwrap();
            estimator.estimate_from_sum(&x.column_sum()) - map.evaluate(&psi)
        })
        .collect()
}

#[test]
fn true_score_has_zero_mean() {
    let model = baseline_pair(40).factor().unwrap();
    let mut rng = seeded_rng(11);
    let trials = 100_000;
    for _ in 0..3 {
        let psi = model.sample_parameter_with(&mut rng);
        let scores: Vec<DVector<f64>> = (0..trials)
            .map(|t| {
                let x = model.sample_observations_with(&psi, &mut stream_rng(12, 0, t)).unwrap();
                bounds::true_score(&model, &psi, &x.column_sum()).unwrap()
            })
            .collect();
        for i in 0..3 {
            let values: Vec<f64> = scores.iter().map(|s| s[i]).collect();
            let mean = pairwise_sum(&values) / trials as f64;
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            let se = (pairwise_sum(&dev) / (trials as f64 - 1.0) / trials as f64).sqrt();
            assert!(mean.abs() <= 4.0 * se, "component {i}: {mean} vs se {se}");
        }
    }
}

#[test]
fn score_covariance_is_data_information() {
    let model = baseline_pair(5).factor().unwrap();
    let psi = baseline_true_prior().mean;
    let scores: Vec<DVector<f64>> = (0..50_000)
        .map(|t| {
            let x = model.sample_observations_with(&psi, &mut stream_rng(13, 0, t)).unwrap();
            bounds::true_score(&model, &psi, &x.column_sum()).unwrap()
        })
        .collect();
    let (mean, se) = outer_product_moments(&scores);
    assert_within(&mean, &se, &bounds::bfim(&model).data_term, 4.0);
}

#[test]
fn map_is_ms_unbiased() {
    let pair = baseline_pair(1);
    let psi = baseline_true_prior().mean;
    for n in [1, 10, 40] {
        let pair = pair.clone().with_n_samples(n);
        let model = pair.factor().unwrap();
        let spec = EstimatorSpec::for_pair(EstimatorKind::Map, &pair);
        let diag = ms_bias_diagnostic(&spec, &model, &psi, 100_000, 21).unwrap();
        assert!(diag.within(4.0, 0.0), "N = {n}: {:?}", diag);
    }
}

#[test]
fn matched_qmle_is_unbiased() {
    let pair = matched_flat_pair(3);
    let model = pair.factor().unwrap();
    let spec = EstimatorSpec::for_pair(EstimatorKind::Qmle, &pair);
    let psi = DVector::from_row_slice(&[-4.0, 0.5, 30.0]);
    let diag = ms_bias_diagnostic(&spec, &model, &psi, 10_000, 22).unwrap();
    assert!(diag.within(4.0, 0.0), "{diag:?}");
}

#[test]
fn map_error_covariance_matches_simulation() {
    let model = baseline_pair(40).factor().unwrap();
    let errors = map_errors(&model, 100_000, 31);
    let (mean, se) = outer_product_moments(&errors);
    let exact = bounds::map_error_covariance(&model).unwrap();
    assert_within(&mean, &se, &exact, 4.0);
    // Same simulation sits above the misspecified bound on every diagonal entry.
    let bound = bounds::mbcrb(&model).unwrap();
    for i in 0..3 {
        assert!(mean[(i, i)] + 3.0 * se[(i, i)] >= bound[(i, i)]);
    }
}

#[test]
fn expected_bias_outer_product_matches_prior_draws() {
    let model = baseline_pair(40).factor().unwrap();
    let mut rng = seeded_rng(41);
    let biases: Vec<DVector<f64>> = (0..100_000)
        .map(|_| {
            let psi = model.sample_parameter_with(&mut rng);
            bounds::bias_vector(&model, &psi).unwrap()
        })
        .collect();
    let (mean, se) = outer_product_moments(&biases);
    assert_within(&mean, &se, &bounds::expected_bias_outer_product(&model).unwrap(), 4.0);
}

#[test]
fn scalar_bias_term_matches_one_million_draws() {
    // N=1, h*=h=1, unit variances, zero means: E{r²} = 0.25.
    let mut pair = matched_flat_pair(1);
    pair.true_prior.mean = DVector::zeros(3);
    pair.true_prior.covariance = DMatrix::identity(3, 3);
    pair.true_lik.noise_covariance = DMatrix::identity(3, 3);
    pair.assumed_lik = pair.true_lik.clone();
    pair.assumed_prior = mbcrb_core::AssumedPrior::Gaussian(pair.true_prior.clone());
    let model = pair.factor().unwrap();
    assert!((bounds::expected_bias_outer_product(&model).unwrap() - DMatrix::identity(3, 3) * 0.25).amax() < 1e-15);
    let mut rng = seeded_rng(42);
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let psi: f64 = rng.sample(rand_distr::StandardNormal);
            (0.5 * psi - psi).powi(2)
        })
        .collect();
    let (rms, se) = rmse_with_standard_error(&draws);
    assert!((rms - 0.5).abs() <= 4.0 * se);
}

#[test]
fn sampled_pseudotrue_within_batched_error() {
    let model = baseline_pair(1).factor().unwrap();
    let psi = baseline_true_prior().mean;
    let sampled = sampled_pseudotrue(&model, &psi, 100_000, 20, 51).unwrap();
    let exact = pseudotrue(&model, &psi).unwrap();
    for i in 0..3 {
        let gap = (sampled.minimizer[i] - exact[i]).abs();
        assert!(gap <= 3.0 * sampled.standard_error[i], "{i}: {gap} vs {}", sampled.standard_error[i]);
    }
}

#[test]
fn doubling_trials_shrinks_standard_error() {
    let config = ExperimentConfig {
        pair: baseline_pair(5),
        estimator: EstimatorKind::Map,
        trials: 100,
        master_seed: 61,
        error_reference: ErrorReference::Pseudotrue,
        sweep: SweepSpec::new(SweepAxis::SampleCount, vec![5.0]).unwrap(),
    };
    let point = GridPoint::new(&config, 5.0).unwrap();
    let small = point.run(20_000);
    let large = point.run(40_000);
    let target = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..3 {
        let ratio = large.rmse_standard_error[i] / small.rmse_standard_error[i];
        assert!((ratio / target - 1.0).abs() <= 0.2, "{i}: ratio {ratio}");
    }
}

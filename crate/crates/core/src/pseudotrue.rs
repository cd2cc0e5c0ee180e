//! Numerical pseudotrue parameter: the minimizer over `θ` of the cross
//! entropy `−E_{X|ψ}{ln f(X, θ)}` between the true conditional of `N`
//! observations and the assumed joint density.
//!
//! For linear-Gaussian pairs the objective is
//!
//! ```text
//! N/2 [ E‖x − Hθ‖²_{Σ⁻¹} + ln det(2πΣ) ] + 1/2 ‖θ − μ_θ‖²_{Σ_θ⁻¹} + 1/2 ln det(2πΣ_θ)
//! ```
//!
//! where the expectation is either exact (`E‖x − Hθ‖² = ‖H*ψ − Hθ‖² +
//! tr(Σ⁻¹Σ*)`) or a sample average over a fixed batch of draws of `x | ψ`.
//! The prior terms vanish for a flat prior.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::bounds;
use crate::error::{Error, Result};
use crate::linalg::{self, CholeskyFactor};
use crate::model::FactoredModel;
use crate::rng;

pub const GRADIENT_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluationMode {
    AnalyticExpectation,
    SampleAverage { mc_samples: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct KlObjectiveSpec<'a> {
    pub model: &'a FactoredModel,
    pub psi: DVector<f64>,
    pub mode: EvaluationMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub minimizer: DVector<f64>,
    pub objective_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Expectation of the observation-dependent part, in sufficient statistics.
#[derive(Debug, Clone)]
enum ObservationMoments {
    Analytic {
        /// `H*ψ`.
        mean: DVector<f64>,
        /// `tr(Σ⁻¹Σ*)`.
        trace_term: f64,
    },
    Sampled {
        draws: DMatrix<f64>,
        /// `x̄`.
        mean: DVector<f64>,
        /// mean of `x_mᵀΣ⁻¹x_m − x̄ᵀΣ⁻¹x̄`.
        spread: f64,
    },
}

/// Objective prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct KlObjective<'a> {
    model: &'a FactoredModel,
    moments: ObservationMoments,
    hessian: DMatrix<f64>,
    constant: f64,
}

fn whitened_norm_sq(factor: &CholeskyFactor, v: &DVector<f64>) -> f64 {
    v.dot(&factor.solve(v))
}

impl<'a> KlObjective<'a> {
    pub fn new(spec: &KlObjectiveSpec<'a>) -> Result<Self> {
        let model = spec.model;
        if spec.psi.len() != model.true_param_dim() {
            return Err(Error::DimensionMismatch {
                what: "psi",
                expected: model.true_param_dim(),
                found: spec.psi.len(),
            });
        }
        let noise = model.assumed_noise_factor();
        let moments = match spec.mode {
            EvaluationMode::AnalyticExpectation => {
                let mean = &model.pair().true_lik.observation_matrix * &spec.psi;
                let trace_term = noise.solve(&model.pair().true_lik.noise_covariance).trace();
                ObservationMoments::Analytic { mean, trace_term }
            }
            EvaluationMode::SampleAverage { mc_samples, seed } => {
                if mc_samples == 0 {
                    return Err(Error::invalid("mc_samples", "must be at least 1"));
                }
                let single = model.with_n_samples(mc_samples)?;
                let mut rng = rng::seeded_rng(seed);
                let draws = single.sample_observations_with(&spec.psi, &mut rng)?;
                Self::sampled_moments(noise, draws)
            }
        };
        let n = model.n_samples() as f64;
        let n_x = model.observation_dim() as f64;
        let mut constant = 0.5 * n * (n_x * libm::log(2.0 * PI) + linalg::log_det(noise));
        if let Some(prior) = model.assumed_prior_factor() {
            let n_theta = model.assumed_param_dim() as f64;
            constant += 0.5 * (n_theta * libm::log(2.0 * PI) + linalg::log_det(prior));
        }
        Ok(Self {
            model,
            moments,
            hessian: bounds::normal_matrix(model),
            constant,
        })
    }

    fn sampled_moments(noise: &CholeskyFactor, draws: DMatrix<f64>) -> ObservationMoments {
        let m = draws.ncols() as f64;
        let mean = draws.column_sum() / m;
        let centered: Vec<f64> = draws
            .column_iter()
            .map(|x| whitened_norm_sq(noise, &(x - &mean)))
            .collect();
        let spread = linalg::pairwise_sum(&centered) / m;
        ObservationMoments::Sampled {
            draws,
            mean,
            spread,
        }
    }

    fn observation_mean(&self) -> &DVector<f64> {
        match &self.moments {
            ObservationMoments::Analytic { mean, .. } | ObservationMoments::Sampled { mean, .. } => mean,
        }
    }

    fn prior_value(&self, theta: &DVector<f64>) -> f64 {
        match &self.model.pair().assumed_prior {
            crate::model::AssumedPrior::Gaussian(prior) => {
                let d = theta - &prior.mean;
                0.5 * d.dot(&(self.model.assumed_prior_precision() * &d))
            }
            crate::model::AssumedPrior::Flat => 0.0,
        }
    }

    /// Objective value and its exact gradient in `θ`.
    pub fn evaluate(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check_theta(theta)?;
        let model = self.model;
        let n = model.n_samples() as f64;
        let h = &model.pair().assumed_lik.observation_matrix;
        let residual = self.observation_mean() - h * theta;
        let spread = match &self.moments {
            ObservationMoments::Analytic { trace_term, .. } => *trace_term,
            ObservationMoments::Sampled { spread, .. } => *spread,
        };
        let data = 0.5 * n * (whitened_norm_sq(model.assumed_noise_factor(), &residual) + spread);
        let value = data + self.prior_value(theta) + self.constant;
        let gradient = &self.hessian * theta
            - model.assumed_whitened_transpose() * self.observation_mean() * n
            - model.assumed_prior_precision_mean();
        Ok((value, gradient))
    }

    /// Standard error of the value in sample-average mode (zero in analytic mode).
    pub fn value_standard_error(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_theta(theta)?;
        let ObservationMoments::Sampled { draws, .. } = &self.moments else {
            return Ok(0.0);
        };
        let n = self.model.n_samples() as f64;
        let center = &self.model.pair().assumed_lik.observation_matrix * theta;
        let noise = self.model.assumed_noise_factor();
        let terms: Vec<f64> = draws
            .column_iter()
            .map(|x| 0.5 * n * whitened_norm_sq(noise, &(x - &center)))
            .collect();
        let m = terms.len() as f64;
        if terms.len() < 2 {
            return Ok(0.0);
        }
        let mean = linalg::pairwise_sum(&terms) / m;
        let sq: Vec<f64> = terms.iter().map(|t| (t - mean) * (t - mean)).collect();
        let variance = linalg::pairwise_sum(&sq) / (m - 1.0);
        Ok(libm::sqrt(variance / m))
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.model.assumed_param_dim() {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: self.model.assumed_param_dim(),
                found: theta.len(),
            });
        }
        Ok(())
    }
}

/// Objective value and gradient at `theta`.
pub fn kl_objective(spec: &KlObjectiveSpec<'_>, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    KlObjective::new(spec)?.evaluate(theta)
}

fn converged(value: f64, gradient_norm: f64) -> bool {
    gradient_norm <= GRADIENT_TOLERANCE * (1.0 + value.abs())
}

/// Minimizes the objective from `initial`: Newton steps in analytic mode,
/// gradient descent with backtracking in sample-average mode. Hitting the
/// iteration cap returns `converged = false` with the last iterate.
pub fn minimize_kl(spec: &KlObjectiveSpec<'_>, initial: &DVector<f64>) -> Result<OptimizationResult> {
    let objective = KlObjective::new(spec)?;
    match spec.mode {
        EvaluationMode::AnalyticExpectation => newton(&objective, initial),
        EvaluationMode::SampleAverage { .. } => gradient_descent(&objective, initial),
    }
}

fn newton(objective: &KlObjective<'_>, initial: &DVector<f64>) -> Result<OptimizationResult> {
    let factor = linalg::cholesky(objective.hessian()).ok_or(Error::SingularNormalMatrix)?;
    let mut theta = initial.clone();
    let (mut value, mut gradient) = objective.evaluate(&theta)?;
    let mut iterations = 0;
    while !converged(value, gradient.norm()) && iterations < MAX_ITERATIONS {
        let step = factor.solve(&gradient);
        let candidate = &theta - step;
        let (next_value, next_gradient) = objective.evaluate(&candidate)?;
        iterations += 1;
        // A quadratic reaches its floor in one step; stop once rounding stalls.
        let stalled = next_gradient.norm() >= gradient.norm();
        if !stalled || iterations == 1 {
            theta = candidate;
            value = next_value;
            gradient = next_gradient;
        }
        if stalled {
            break;
        }
    }
    let gradient_norm = gradient.norm();
    Ok(OptimizationResult {
        converged: converged(value, gradient_norm),
        minimizer: theta,
        objective_value: value,
        gradient_norm,
        iterations,
    })
}

fn gradient_descent(objective: &KlObjective<'_>, initial: &DVector<f64>) -> Result<OptimizationResult> {
    const ARMIJO: f64 = 1e-4;
    let mut theta = initial.clone();
    let (mut value, mut gradient) = objective.evaluate(&theta)?;
    let mut step = 1.0;
    let mut iterations = 0;
    while !converged(value, gradient.norm()) && iterations < MAX_ITERATIONS {
        let g2 = gradient.norm_squared();
        let mut accepted = None;
        while step > 1e-300 {
            let candidate = &theta - &gradient * step;
            let (candidate_value, candidate_gradient) = objective.evaluate(&candidate)?;
            // Near the minimizer the decrease drops below the value's rounding
            // error; there only a smaller gradient counts as progress.
            let resolvable = ARMIJO * step * g2 > 64.0 * f64::EPSILON * (1.0 + value.abs());
            let accept = if resolvable {
                candidate_value <= value - ARMIJO * step * g2
            } else {
                candidate_gradient.norm_squared() < g2
            };
            if accept {
                accepted = Some((candidate, candidate_value, candidate_gradient));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((candidate, candidate_value, candidate_gradient)) = accepted else {
            break;
        };
        theta = candidate;
        value = candidate_value;
        gradient = candidate_gradient;
        step = (step * 2.0).min(1.0);
    }
    let gradient_norm = gradient.norm();
    Ok(OptimizationResult {
        converged: converged(value, gradient_norm),
        minimizer: theta,
        objective_value: value,
        gradient_norm,
        iterations,
    })
}

/// Sample-average pseudotrue estimate with a batch-means standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPseudotrue {
    /// Minimizer over all `mc_samples` draws.
    pub minimizer: DVector<f64>,
    /// Standard deviation of the batch minimizers divided by `√batches`.
    pub standard_error: DVector<f64>,
    pub batch_minimizers: Vec<DVector<f64>>,
}

/// Runs the sample-average minimization on the full draw and on `batches`
/// disjoint sub-draws of `mc_samples / batches` each.
pub fn sampled_pseudotrue(
    model: &FactoredModel,
    psi: &DVector<f64>,
    mc_samples: usize,
    batches: usize,
    seed: u64,
) -> Result<SampledPseudotrue> {
    if batches < 2 || mc_samples < batches {
        return Err(Error::invalid(
            "batches",
            "need at least 2 batches and one sample per batch",
        ));
    }
    let initial = DVector::zeros(model.assumed_param_dim());
    let solve = |samples: usize, seed: u64| -> Result<DVector<f64>> {
        let spec = KlObjectiveSpec {
            model,
            psi: psi.clone(),
            mode: EvaluationMode::SampleAverage {
                mc_samples: samples,
                seed,
            },
        };
        let result = minimize_kl(&spec, &initial)?;
        if !result.converged {
            return Err(Error::invalid(
                "mc_samples",
                "sample-average minimization did not converge",
            ));
        }
        Ok(result.minimizer)
    };
    let minimizer = solve(mc_samples, seed)?;
    let per_batch = mc_samples / batches;
    let batch_minimizers = (0..batches)
        .map(|b| solve(per_batch, seed ^ ((b as u64 + 1) << 32)))
        .collect::<Result<Vec<_>>>()?;
    let k = batches as f64;
    let mean = batch_minimizers
        .iter()
        .fold(DVector::zeros(minimizer.len()), |acc, m| acc + m)
        / k;
    let variance = batch_minimizers
        .iter()
        .fold(DVector::zeros(minimizer.len()), |acc, m| {
            let d = m - &mean;
            acc + d.component_mul(&d)
        })
        / (k - 1.0);
    // Batch means estimate the spread of a per_batch-sized solve; rescale to
    // the full draw.
    let scale = per_batch as f64 / mc_samples as f64;
    let standard_error = variance.map(|v| libm::sqrt(v * scale));
    Ok(SampledPseudotrue {
        minimizer,
        standard_error,
        batch_minimizers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::pseudotrue;
    use crate::presets::{matched_flat_pair, baseline_pair, scalar_example_pair};

    fn dv(values: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(values)
    }

    fn analytic<'a>(model: &'a FactoredModel, psi: DVector<f64>) -> KlObjectiveSpec<'a> {
        KlObjectiveSpec {
            model,
            psi,
            mode: EvaluationMode::AnalyticExpectation,
        }
    }

    #[test]
    fn scalar_minimizer_by_grid_search() {
        let model = scalar_example_pair().factor().unwrap();
        let objective = KlObjective::new(&analytic(&model, dv(&[3.0]))).unwrap();
        let best = (0..=40_000)
            .map(|i| -2.0 + i as f64 * 1e-4)
            .min_by(|a, b| {
                let fa = objective.evaluate(&dv(&[*a])).unwrap().0;
                let fb = objective.evaluate(&dv(&[*b])).unwrap().0;
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert!((best - 1.2).abs() < 1e-4);
        let result = minimize_kl(&analytic(&model, dv(&[3.0])), &dv(&[0.0])).unwrap();
        assert!(result.converged);
        assert!((result.minimizer[0] - 1.2).abs() < 1e-8);
    }

    #[test]
    fn gradient_vanishes_at_closed_form() {
        let model = baseline_pair(40).factor().unwrap();
        let psi = dv(&[10.0, 20.0, 5.0]);
        let theta = pseudotrue(&model, &psi).unwrap();
        let (_, gradient) = kl_objective(&analytic(&model, psi), &theta).unwrap();
        assert!(gradient.norm() <= 1e-10, "{}", gradient.norm());
    }

    #[test]
    fn gradient_matches_finite_differences_in_both_modes() {
        let model = baseline_pair(10).factor().unwrap();
        let psi = dv(&[10.0, 20.0, 5.0]);
        let modes = [
            EvaluationMode::AnalyticExpectation,
            EvaluationMode::SampleAverage { mc_samples: 200, seed: 9 },
        ];
        let points = [
            dv(&[9.0, 19.0, 4.0]),
            dv(&[11.0, 21.5, 6.0]),
            dv(&[0.0, 0.0, 0.0]),
            dv(&[10.2, 19.7, 5.3]),
            dv(&[-3.0, 7.0, 15.0]),
        ];
        for mode in modes {
            let spec = KlObjectiveSpec { model: &model, psi: psi.clone(), mode };
            let objective = KlObjective::new(&spec).unwrap();
            for theta in &points {
                let (_, gradient) = objective.evaluate(theta).unwrap();
                let step = 1e-4;
                let fd = DVector::from_fn(3, |j, _| {
                    let mut plus = theta.clone();
                    let mut minus = theta.clone();
                    plus[j] += step;
                    minus[j] -= step;
                    (objective.evaluate(&plus).unwrap().0 - objective.evaluate(&minus).unwrap().0)
                        / (2.0 * step)
                });
                assert!((&fd - &gradient).norm() <= 1e-7 * gradient.norm().max(1.0));
            }
        }
    }

    #[test]
    fn matched_flat_minimizer_is_psi() {
        let model = matched_flat_pair(4).factor().unwrap();
        let psi = dv(&[1.5, -7.0, 30.0]);
        let result = minimize_kl(&analytic(&model, psi.clone()), &dv(&[100.0, 100.0, -50.0])).unwrap();
        assert!(result.converged);
        assert!((result.minimizer - psi).amax() <= 1e-8);
    }

    #[test]
    fn sample_average_value_converges_to_analytic() {
        let model = baseline_pair(1).factor().unwrap();
        let psi = dv(&[10.0, 20.0, 5.0]);
        let theta = dv(&[9.5, 20.5, 5.0]);
        let exact = kl_objective(&analytic(&model, psi.clone()), &theta).unwrap().0;
        let spec = KlObjectiveSpec {
            model: &model,
            psi,
            mode: EvaluationMode::SampleAverage { mc_samples: 1_000_000, seed: 3 },
        };
        let objective = KlObjective::new(&spec).unwrap();
        let value = objective.evaluate(&theta).unwrap().0;
        let se = objective.value_standard_error(&theta).unwrap();
        assert!(se > 0.0);
        assert!((value - exact).abs() <= 4.0 * se, "{value} vs {exact} (se {se})");
    }

    #[test]
    fn gradient_descent_reaches_sample_minimizer() {
        let model = baseline_pair(40).factor().unwrap();
        let psi = dv(&[10.0, 20.0, 5.0]);
        let spec = KlObjectiveSpec {
            model: &model,
            psi,
            mode: EvaluationMode::SampleAverage { mc_samples: 1000, seed: 1 },
        };
        let result = minimize_kl(&spec, &DVector::zeros(3)).unwrap();
        assert!(result.converged, "{result:?}");
        assert!(result.iterations > 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = baseline_pair(10).factor().unwrap();
        let bad_psi = analytic(&model, dv(&[1.0]));
        assert!(KlObjective::new(&bad_psi).is_err());
        let zero = KlObjectiveSpec {
            model: &model,
            psi: dv(&[1.0, 2.0, 3.0]),
            mode: EvaluationMode::SampleAverage { mc_samples: 0, seed: 0 },
        };
        assert!(KlObjective::new(&zero).is_err());
        let ok = analytic(&model, dv(&[1.0, 2.0, 3.0]));
        assert!(kl_objective(&ok, &dv(&[1.0])).is_err());
    }
}

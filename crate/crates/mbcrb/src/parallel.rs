//! Multi-threaded sweep execution.
//!
//! Trials are mapped in parallel and collected in trial order before the
//! core summarizer runs, so results do not depend on the thread count.

use mbcrb_core::experiment::grid_points;
use mbcrb_core::{ExperimentConfig, Result, SweepResult};
use nalgebra::DVector;
use rayon::prelude::*;

/// Runs every grid point of `config` on a pool of `threads` workers
/// (`0` picks the rayon default).
pub fn run_sweep_parallel(config: &ExperimentConfig, threads: usize) -> Result<Vec<SweepResult>> {
    let points = grid_points(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool construction");
    let trials = config.trials as u64;
    Ok(pool.install(|| {
        points
            .iter()
            .map(|point| {
                let errors: Vec<DVector<f64>> = (0..trials).into_par_iter().map(|t| point.run_trial(t)).collect();
                point.summarize(&errors)
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mbcrb_core::experiment::run_sweep;
    use mbcrb_core::presets::baseline_pair;
    use mbcrb_core::{ErrorReference, EstimatorKind, SweepAxis, SweepSpec};

    #[test]
    fn matches_sequential_bit_for_bit() {
        let config = ExperimentConfig {
            pair: baseline_pair(1),
            estimator: EstimatorKind::Map,
            trials: 2_000,
            master_seed: 99,
            error_reference: ErrorReference::TrueParameter,
            sweep: SweepSpec::new(SweepAxis::SampleCount, vec![1.0, 3.0, 8.0]).unwrap(),
        };
        let sequential = run_sweep(&config).unwrap();
        for threads in [1, 3, 8] {
            assert_eq!(run_sweep_parallel(&config, threads).unwrap(), sequential);
        }
    }
}

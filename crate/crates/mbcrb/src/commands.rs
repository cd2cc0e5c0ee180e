//! The `bound`, `run` and `pseudotrue` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mbcrb_core::bounds::{self, bound_report, map_error_covariance};
use mbcrb_core::pseudotrue::{minimize_kl, sampled_pseudotrue};
use mbcrb_core::{EvaluationMode, ExperimentConfig, KlObjectiveSpec};
use nalgebra::DVector;
use thiserror::Error;

use crate::config::{ConfigError, ConfigFile};
use crate::output::{self, Manifest, OutputDir};
use crate::parallel::run_sweep_parallel;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    ConfigError = 1,
    NumericalError = 2,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical error: {0}")]
    Numerical(#[from] mbcrb_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(e) if e.numerical => ExitCode::NumericalError,
            CliError::Numerical(_) => ExitCode::NumericalError,
            _ => ExitCode::ConfigError,
        }
    }
}

fn io_error(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Parsed configuration together with the raw bytes it came from.
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub experiment: ExperimentConfig,
    pub sha256: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path).map_err(io_error(format!("cannot read {}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Usage(format!("{}: not valid UTF-8", path.display())))?;
    let file = ConfigFile::from_json(&text)?;
    let experiment = file.to_experiment()?;
    Ok(LoadedConfig {
        file,
        experiment,
        sha256: output::sha256_hex(&bytes),
    })
}

fn write_all(out: &mut OutputDir, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    out.write(name, bytes)
        .map(|_| ())
        .map_err(io_error(format!("cannot write {}", out.path(name).display())))
}

fn join_vector(v: &DVector<f64>) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

/// Bound matrices at the configured nominal N.
pub fn bound(config_path: &Path, out_dir: &Path) -> Result<String, CliError> {
    let loaded = load_config(config_path)?;
    let model = loaded.experiment.pair.factor()?;
    let report = bound_report(&model)?;
    let map_cov = map_error_covariance(&model)?;
    let csv = output::bound_csv(&report, &map_cov).map_err(io_error("cannot format bound.csv"))?;
    let summary = output::bound_summary_csv(&report).map_err(io_error("cannot format bound_summary.csv"))?;

    let mut out = OutputDir::create(out_dir).map_err(io_error(format!("cannot create {}", out_dir.display())))?;
    write_all(&mut out, "bound.csv", &csv)?;
    write_all(&mut out, "bound_summary.csv", &summary)?;
    out.commit();

    let mut text = String::new();
    let _ = writeln!(text, "N = {}", model.n_samples());
    let _ = writeln!(text, "diag(BCRB)  = {}", join_vector(&report.bcrb.diagonal()));
    let _ = writeln!(text, "diag(MBCRB) = {}", join_vector(&report.mbcrb.diagonal()));
    let _ = writeln!(text, "trace(BCRB) = {}  trace(MBCRB) = {}", report.bcrb.trace(), report.mbcrb.trace());
    if let Some(biased) = &report.biased_bound {
        let _ = writeln!(text, "diag(MBCRB + E{{rr'}}) = {}", join_vector(&biased.diagonal()));
    }
    let _ = writeln!(text, "wrote {}", out_dir.join("bound.csv").display());
    Ok(text)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    /// `0` lets the thread pool pick.
    pub threads: usize,
}

/// Monte Carlo sweep with CSV, SVG and manifest outputs.
pub fn run(config_path: &Path, out_dir: &Path, options: &RunOptions) -> Result<String, CliError> {
    let loaded = load_config(config_path)?;
    let mut config = loaded.experiment;
    if let Some(trials) = options.trials {
        if trials < 100 {
            return Err(CliError::Usage("--trials: at least 100 trials are required".into()));
        }
        config.trials = trials;
    }
    if let Some(seed) = options.seed {
        config.master_seed = seed;
    }
    let results = run_sweep_parallel(&config, options.threads)?;

    let axis = config.sweep.axis();
    let reference = config.error_reference;
    let sweep = output::sweep_csv(&results, reference).map_err(io_error("cannot format sweep.csv"))?;
    let trace = output::sweep_trace_csv(&results).map_err(io_error("cannot format sweep_trace.csv"))?;
    let charts = output::component_charts(&results, axis, reference);

    let mut out = OutputDir::create(out_dir).map_err(io_error(format!("cannot create {}", out_dir.display())))?;
    write_all(&mut out, "sweep.csv", &sweep)?;
    write_all(&mut out, "sweep_trace.csv", &trace)?;
    for (name, svg) in &charts {
        write_all(&mut out, name, svg.as_bytes())?;
    }
    let mut outputs: Vec<String> = out
        .written()
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        master_seed: config.master_seed,
        trials: config.trials,
        config_sha256: loaded.sha256,
        config_path: config_path.display().to_string(),
        outputs,
    };
    let manifest = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_all(&mut out, "manifest.json", manifest.as_bytes())?;
    out.commit();

    let floor = output::floor_column(reference);
    let mut text = format!("{:>12} {:>14} {:>14} {:>18}\n", output::axis_label(axis), "rmse[0]", "stderr[0]", floor);
    for r in &results {
        let _ = writeln!(
            text,
            "{:>12} {:>14.6} {:>14.6} {:>18.6}",
            r.axis_value, r.rmse[0], r.rmse_standard_error[0], r.bound_rmse_floor[0]
        );
    }
    let _ = writeln!(text, "wrote {}", out_dir.join("sweep.csv").display());
    Ok(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudotrueMode {
    Analytic,
    /// Sample-average objective over `mc_samples` draws.
    Sampled { mc_samples: usize, seed: u64 },
}

/// Closed-form and numerically minimized pseudotrue parameter at `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudotrueComparison {
    pub closed_form: DVector<f64>,
    pub numeric: DVector<f64>,
    /// Batch-means standard error in sampled mode.
    pub standard_error: Option<DVector<f64>>,
    pub max_abs_difference: f64,
}

pub fn compare_pseudotrue(
    config: &ExperimentConfig,
    psi: &[f64],
    mode: PseudotrueMode,
) -> Result<PseudotrueComparison, CliError> {
    let model = config.pair.factor()?;
    if psi.len() != model.true_param_dim() {
        return Err(CliError::Usage(format!(
            "--psi: expected {} values, found {}",
            model.true_param_dim(),
            psi.len()
        )));
    }
    let psi = DVector::from_column_slice(psi);
    let closed_form = bounds::pseudotrue(&model, &psi)?;
    let (numeric, standard_error) = match mode {
        PseudotrueMode::Analytic => {
            let spec = KlObjectiveSpec {
                model: &model,
                psi: psi.clone(),
                mode: EvaluationMode::AnalyticExpectation,
            };
            let result = minimize_kl(&spec, &DVector::zeros(model.assumed_param_dim()))?;
            if !result.converged {
                return Err(mbcrb_core::Error::InvalidArgument {
                    name: "psi",
                    reason: format!("KL minimization stopped at gradient norm {}", result.gradient_norm),
                }
                .into());
            }
            (result.minimizer, None)
        }
        PseudotrueMode::Sampled { mc_samples, seed } => {
            let sampled = sampled_pseudotrue(&model, &psi, mc_samples, 20, seed)?;
            (sampled.minimizer, Some(sampled.standard_error))
        }
    };
    let max_abs_difference = (&numeric - &closed_form).amax();
    Ok(PseudotrueComparison {
        closed_form,
        numeric,
        standard_error,
        max_abs_difference,
    })
}

pub fn pseudotrue(
    config_path: &Path,
    psi: &[f64],
    mode: PseudotrueMode,
    out_dir: Option<&PathBuf>,
) -> Result<String, CliError> {
    let loaded = load_config(config_path)?;
    let cmp = compare_pseudotrue(&loaded.experiment, psi, mode)?;
    if let Some(dir) = out_dir {
        let rows = (0..cmp.closed_form.len()).map(|i| {
            vec![
                i.to_string(),
                cmp.closed_form[i].to_string(),
                cmp.numeric[i].to_string(),
                (cmp.numeric[i] - cmp.closed_form[i]).abs().to_string(),
            ]
        });
        let mut writer = csv::Writer::from_writer(Vec::new());
        let bytes = (|| -> std::io::Result<Vec<u8>> {
            writer.write_record(["component_index", "closed_form", "numeric", "abs_difference"])?;
            for row in rows {
                writer.write_record(&row)?;
            }
            writer.into_inner().map_err(|e| e.into_error())
        })()
        .map_err(io_error("cannot format pseudotrue.csv"))?;
        let mut out = OutputDir::create(dir).map_err(io_error(format!("cannot create {}", dir.display())))?;
        write_all(&mut out, "pseudotrue.csv", &bytes)?;
        out.commit();
    }
    let mut text = String::new();
    let _ = writeln!(text, "closed form: {}", join_vector(&cmp.closed_form));
    let _ = writeln!(text, "numeric:     {}", join_vector(&cmp.numeric));
    if let Some(se) = &cmp.standard_error {
        let _ = writeln!(text, "std error:   {}", join_vector(se));
    }
    let _ = writeln!(text, "max |difference| = {:e}", cmp.max_abs_difference);
    Ok(text)
}

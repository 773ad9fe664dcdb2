use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use saddlemax::experiments::{run_converge, run_posterior, run_sample, run_spa_vs_clt};
use saddlemax::report::write_report;
use saddlemax::{build_model, parse_list, parse_params, ExperimentConfig, ExperimentKind, HarnessError, ModelEntry};
use saddlemax_core::mle::{fit_mle, ExactSource, MleOptions};
use saddlemax_core::{log_likelihood, solve_saddlepoint, ApproximationKind, Observation, QuadratureConfig, SolverConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "saddlemax", version, about = "Saddlepoint likelihoods, MLEs and rate experiments")]
struct Cli {
    /// Overrides the seed of an experiment config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file: JSON for solve/eval/fit, CSV (plus .meta.json) for experiments.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ModelArgs {
    #[arg(long)]
    model: String,
    /// Model construction parameters, `k=v,...` (e.g. `t=1`, `blocks=3`, `beta=1;2`).
    #[arg(long, default_value = "")]
    params: String,
}

impl ModelArgs {
    fn entry(&self) -> Result<ModelEntry, HarnessError> {
        build_model(&self.model, &parse_params(&self.params)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExactArg {
    Quadrature,
    ClosedForm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Converge,
    Sample,
    Posterior,
    SpaVsClt,
}

#[derive(Subcommand)]
enum Command {
    /// Solve K0'(s; θ) = y.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        /// Parameter θ; defaults to the model's.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        y: String,
    },
    /// Evaluate a log-likelihood.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        x: String,
        #[arg(long)]
        n: f64,
        #[arg(long, value_enum, default_value = "quadrature")]
        exact_source: ExactArg,
    },
    /// Maximise a log-likelihood inside a box.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        x: String,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        init: Option<String>,
        /// Bounds per coordinate, `lo:hi,lo:hi`.
        #[arg(long = "box")]
        bounds: Option<String>,
        #[arg(long, value_enum, default_value = "quadrature")]
        exact_source: ExactArg,
    },
    /// Run an experiment from a JSON config.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentArg,
        #[arg(long)]
        config: PathBuf,
    },
}

fn vec_arg(text: &str) -> Result<DVector<f64>, HarnessError> {
    Ok(DVector::from_vec(parse_list(text)?))
}

fn kind_arg(text: &str) -> Result<ApproximationKind, HarnessError> {
    ApproximationKind::parse(text).ok_or_else(|| HarnessError::Usage(format!("unknown kind '{text}'")))
}

fn parse_box(text: &str) -> Result<Vec<(f64, f64)>, HarnessError> {
    text.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| HarnessError::Usage(format!("box entry '{part}' is not lo:hi")))?;
            let p = |s: &str| s.trim().parse::<f64>().map_err(|_| HarnessError::Usage(format!("'{s}' is not a number")));
            Ok((p(lo)?, p(hi)?))
        })
        .collect()
}

fn emit(out: &Option<PathBuf>, value: serde_json::Value) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(&value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| HarnessError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Solve { model, theta, y } => {
            let e = model.entry()?;
            let theta = theta.as_deref().map(vec_arg).transpose()?.unwrap_or(e.default_theta.clone());
            let r = solve_saddlepoint(e.model.as_ref(), &theta, &vec_arg(&y)?, &SolverConfig::default())?;
            emit(
                &cli.out,
                json!({
                    "s_hat": r.s_hat.as_slice(),
                    "residual": r.residual_norm,
                    "iterations": r.iterations,
                    "hessian": r.hess_at_saddle.as_slice(),
                }),
            )
        }
        Command::Eval { model, kind, theta, x, n, exact_source } => {
            let e = model.entry()?;
            let kind = kind_arg(&kind)?;
            let theta = theta.as_deref().map(vec_arg).transpose()?.unwrap_or(e.default_theta.clone());
            let obs = Observation::new(vec_arg(&x)?, n)?;
            let value = if kind == ApproximationKind::Exact && matches!(exact_source, ExactArg::ClosedForm) {
                let total = e
                    .model
                    .closed_form_log_density(&theta, &obs.x, n)
                    .ok_or_else(|| HarnessError::Usage(format!("{} has no closed-form density", e.id)))?;
                json!({ "kind": kind.label(), "total": total, "source": "closed_form" })
            } else {
                let ll = log_likelihood(e.model.as_ref(), &theta, &obs, kind, &QuadratureConfig::default())?;
                json!({
                    "kind": kind.label(),
                    "total": ll.total,
                    "log_lstar": ll.log_lstar,
                    "log_p": ll.log_p,
                    "s_hat": ll.saddle.as_ref().map(|s| s.s_hat.as_slice().to_vec()),
                })
            };
            emit(&cli.out, value)
        }
        Command::Fit { model, kind, x, n, init, bounds, exact_source } => {
            let e = model.entry()?;
            let kind = kind_arg(&kind)?;
            let obs = Observation::new(vec_arg(&x)?, n)?;
            let init = init.as_deref().map(vec_arg).transpose()?.unwrap_or(e.default_theta.clone());
            let bounds = bounds.as_deref().map(parse_box).transpose()?.unwrap_or(e.default_box.clone());
            let opts = MleOptions {
                exact_source: match exact_source {
                    ExactArg::Quadrature => ExactSource::Quadrature,
                    ExactArg::ClosedForm => ExactSource::ClosedForm,
                },
                ..MleOptions::default()
            };
            let fit = fit_mle(e.model.as_ref(), &obs, kind, &init, &bounds, &opts)?;
            let cov = (-&fit.hessian_theta).try_inverse();
            emit(
                &cli.out,
                json!({
                    "kind": kind.label(),
                    "theta_hat": fit.theta_hat.as_slice(),
                    "converged": fit.converged,
                    "grad_norm": fit.grad_norm,
                    "iterations": fit.iterations,
                    "near_singular": fit.near_singular,
                    "hessian": fit.hessian_theta.as_slice(),
                    "std_errors": cov.map(|c| c.diagonal().iter().map(|v| v.sqrt()).collect::<Vec<_>>()),
                }),
            )
        }
        Command::Experiment { kind, config } => {
            let mut cfg = ExperimentConfig::from_json(&std::fs::read_to_string(&config)?)?;
            let want = match kind {
                ExperimentArg::Converge => ExperimentKind::Converge,
                ExperimentArg::Sample => ExperimentKind::Sample,
                ExperimentArg::Posterior => ExperimentKind::Posterior,
                ExperimentArg::SpaVsClt => ExperimentKind::SpaVsClt,
            };
            if cfg.experiment != want {
                return Err(HarnessError::Config(format!(
                    "config describes a {:?} experiment, not {:?}",
                    cfg.experiment, want
                )));
            }
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let entry = cfg.model_entry()?;
            let path = cli
                .out
                .clone()
                .or_else(|| cfg.output.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.file_stem().unwrap_or_default().to_string_lossy())));
            let (table, meta) = match want {
                ExperimentKind::Converge => {
                    let o = run_converge(&cfg, &entry)?;
                    (o.table(), o.meta(&cfg))
                }
                ExperimentKind::Sample => {
                    let o = run_sample(&cfg, &entry)?;
                    (o.table(entry.model.signature().p), o.meta(&cfg))
                }
                ExperimentKind::Posterior => {
                    let o = run_posterior(&cfg, &entry)?;
                    (o.table(), o.meta(&cfg))
                }
                ExperimentKind::SpaVsClt => {
                    let o = run_spa_vs_clt(&cfg, &entry)?;
                    (o.table(), o.meta(&cfg))
                }
            };
            write_report(&path, &table, &meta)?;
            println!("wrote {} ({} rows)", path.display(), table.rows.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

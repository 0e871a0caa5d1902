//! Command-line interface: instance generation, single fits, matching, and
//! the full experiment runner.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 numeric failure
//! (for `experiment`: every cell failed), 3 I/O failure.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use mismatch_core::error::{Error, Result};
use mismatch_core::estimators::{
    estimate_mismatch_set, fit_crr, fit_group_lasso, lambda0, lambda_star, naive_least_squares,
    refit, CrrOptions, GroupLassoOptions, MismatchRule,
};
use mismatch_core::io::{read_match_csv, read_matrix_csv, write_match_csv, write_matrix_csv};
use mismatch_core::matcher::{match_constrained, match_permutation, match_threshold};
use mismatch_core::metrics as eval;
use mismatch_core::model::{FitResult, GeneralizedMatch, MatchResult, RegressionData};
use mismatch_core::relaxations::{fit_ds_cons, fit_ds_reg, FwOptions};
use mismatch_core::synth::{self, SynthConfig};

use mismatch_cli::config::ExperimentConfig;
use mismatch_cli::experiment;

#[derive(Parser)]
#[command(
    name = "mismatch",
    about = "Two-stage multivariate regression with sparsely mismatched data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance into a directory
    /// (X.csv, Y.csv, theta_star.csv, B_star.csv, meta.json).
    Generate(GenerateArgs),
    /// Fit a stage-one estimator to X.csv / Y.csv files.
    Fit(FitArgs),
    /// Recover the correspondence given coefficients.
    Match(MatchArgs),
    /// Evaluate metrics for given artifacts; emits a JSON report.
    Metrics(MetricsArgs),
    /// Run a configuration-driven experiment grid.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Response dimension (defaults to d).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    k_frac: f64,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    missing_frac: f64,
    #[arg(long, default_value_t = 0.0)]
    many_to_one_frac: f64,
    /// Seed of the pinned ChaCha20 stream.
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitEstimator {
    Naive,
    Proposed,
    ProposedPlus,
    Crr,
    DsCons,
    DsReg,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliLambdaRule {
    LambdaStar,
    TwoLambda0,
    Sigma0,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long, value_enum)]
    estimator: FitEstimator,
    /// Explicit penalty level (overrides --lambda-rule).
    #[arg(long)]
    lambda: Option<f64>,
    /// Formula-based penalty level; lambda-star and two-lambda0 need
    /// --sigma, sigma0 needs --multiplier.
    #[arg(long, value_enum)]
    lambda_rule: Option<CliLambdaRule>,
    /// Noise level for formula-based penalty rules.
    #[arg(long)]
    sigma: Option<f64>,
    /// Multiplier for the sigma0 rule.
    #[arg(long)]
    multiplier: Option<f64>,
    /// Sparsity budget (proposed-plus, crr, ds-cons).
    #[arg(long)]
    k: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMatchMode {
    Threshold,
    Permutation,
    Constrained,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Coefficient matrix CSV (d rows, m columns).
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_enum)]
    mode: CliMatchMode,
    /// Distance cutoff for threshold mode (matches beyond it are missing).
    #[arg(long)]
    tau: Option<f64>,
    /// Noise-level estimate for constrained mode.
    #[arg(long)]
    sigma_hat: Option<f64>,
    /// Pre-linked correspondence for constrained mode (defaults to identity).
    #[arg(long)]
    theta_pre: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    b_est: PathBuf,
    #[arg(long)]
    b_star: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    theta_hat: Option<PathBuf>,
    #[arg(long)]
    theta_star: Option<PathBuf>,
    /// Alignment constant of the normalized-SNR axis.
    #[arg(long, default_value_t = eval::NORMALIZED_SNR_C)]
    c: f64,
    /// Output JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (results.csv, aggregate.json, timings.csv).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 means one per core. Results are byte-identical
    /// for any choice.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Override the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, everything else is a
            // usage error
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Match(args) => cmd_match(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Io(_) | Error::Parse { .. } => 3,
                Error::InvalidConfig(_) | Error::DimensionMismatch(_) => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let cfg = SynthConfig {
        n: args.n,
        d: args.d,
        m: args.m.unwrap_or(args.d),
        k_frac: args.k_frac,
        q: args.q,
        sigma: args.sigma,
        missing_frac: args.missing_frac,
        many_to_one_frac: args.many_to_one_frac,
        seed: args.seed,
    };
    let (data, truth) = synth::generate(&cfg)?;
    synth::dump(&args.out, &cfg, &data, &truth)?;
    println!(
        "wrote instance n={} d={} m={} k={} to {}",
        cfg.n,
        cfg.d,
        cfg.m,
        cfg.k(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_data(x: &PathBuf, y: &PathBuf) -> Result<RegressionData> {
    RegressionData::new(read_matrix_csv(x)?, read_matrix_csv(y)?)
}

fn resolve_cli_lambda(args: &FitArgs, data: &RegressionData) -> Result<f64> {
    if let Some(v) = args.lambda {
        return Ok(v);
    }
    let (n, m, d) = (data.n(), data.m(), data.d());
    match args.lambda_rule {
        Some(CliLambdaRule::LambdaStar) => {
            let sigma = args.sigma.ok_or_else(|| {
                Error::InvalidConfig("--lambda-rule lambda-star needs --sigma".into())
            })?;
            Ok(lambda_star(n, m, sigma))
        }
        Some(CliLambdaRule::TwoLambda0) => {
            let sigma = args.sigma.ok_or_else(|| {
                Error::InvalidConfig("--lambda-rule two-lambda0 needs --sigma".into())
            })?;
            Ok(2.0 * lambda0(n, d, m, sigma)?)
        }
        Some(CliLambdaRule::Sigma0) => {
            let mult = args.multiplier.ok_or_else(|| {
                Error::InvalidConfig("--lambda-rule sigma0 needs --multiplier".into())
            })?;
            let s0 = experiment::estimate_sigma0(data.x(), data.y())?;
            Ok(mult * s0 / ((n * m) as f64).sqrt())
        }
        None => Err(Error::InvalidConfig(
            "this estimator needs --lambda or --lambda-rule".into(),
        )),
    }
}

fn require_k(args: &FitArgs) -> Result<usize> {
    args.k
        .ok_or_else(|| Error::InvalidConfig("this estimator needs --k".into()))
}

fn write_fit_outputs(out: &PathBuf, fit: &FitResult) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_matrix_csv(out.join("B_hat.csv"), fit.b_hat.view())?;
    write_matrix_csv(out.join("Xi_hat.csv"), fit.xi_hat.view())?;
    let s_hat: Vec<String> = fit.s_hat.iter().map(|i| (i + 1).to_string()).collect();
    std::fs::write(out.join("S_hat.csv"), s_hat.join("\n") + "\n")?;
    let diag = serde_json::json!({
        "iterations": fit.iterations,
        "converged": fit.converged,
        "objective_trace": fit.objective_trace,
    });
    std::fs::write(out.join("fit.json"), serde_json::to_string_pretty(&diag).unwrap() + "\n")?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<ExitCode> {
    let data = load_data(&args.x, &args.y)?;
    match args.estimator {
        FitEstimator::Naive => {
            let b = naive_least_squares(&data)?;
            std::fs::create_dir_all(&args.out)?;
            write_matrix_csv(args.out.join("B_hat.csv"), b.view())?;
        }
        FitEstimator::Proposed => {
            let lambda = resolve_cli_lambda(&args, &data)?;
            let fit = fit_group_lasso(&data, &GroupLassoOptions::new(lambda))?;
            write_fit_outputs(&args.out, &fit)?;
        }
        FitEstimator::ProposedPlus => {
            let lambda = resolve_cli_lambda(&args, &data)?;
            let k = require_k(&args)?;
            let mut fit = fit_group_lasso(&data, &GroupLassoOptions::new(lambda))?;
            let suspects = if k == 0 {
                BTreeSet::new()
            } else {
                estimate_mismatch_set(&fit, MismatchRule::TopK(k))?
            };
            fit.b_hat = refit(&data, &suspects)?;
            fit.s_hat = suspects;
            write_fit_outputs(&args.out, &fit)?;
        }
        FitEstimator::Crr => {
            let fit = fit_crr(&data, &CrrOptions::new(require_k(&args)?))?;
            write_fit_outputs(&args.out, &fit)?;
        }
        FitEstimator::DsCons => {
            let fit = fit_ds_cons(&data, &FwOptions::constrained(require_k(&args)?))?;
            std::fs::create_dir_all(&args.out)?;
            write_matrix_csv(args.out.join("B_hat.csv"), fit.b.view())?;
            write_matrix_csv(args.out.join("Theta.csv"), fit.theta.view())?;
        }
        FitEstimator::DsReg => {
            let lambda = resolve_cli_lambda(&args, &data)?;
            let fit = fit_ds_reg(&data, &FwOptions::regularized(lambda))?;
            std::fs::create_dir_all(&args.out)?;
            write_matrix_csv(args.out.join("B_hat.csv"), fit.b.view())?;
            write_matrix_csv(args.out.join("Theta.csv"), fit.theta.view())?;
        }
    }
    println!("wrote fit to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn write_match_outputs(out: &PathBuf, result: &MatchResult) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_match_csv(out.join("theta_hat.csv"), &result.theta_hat)?;
    let n = result.row_distance.len();
    let dist = Array2::from_shape_vec((n, 1), result.row_distance.clone())
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write_matrix_csv(out.join("row_distance.csv"), dist.view())?;
    let meta = serde_json::json!({
        "tau": if result.tau.is_finite() { serde_json::json!(result.tau) } else { serde_json::Value::Null },
        "missing": result.theta_hat.missing_set().len(),
    });
    std::fs::write(out.join("match.json"), serde_json::to_string_pretty(&meta).unwrap() + "\n")?;
    Ok(())
}

fn cmd_match(args: MatchArgs) -> Result<ExitCode> {
    let data = load_data(&args.x, &args.y)?;
    let b = read_matrix_csv(&args.b)?;
    let result = match args.mode {
        CliMatchMode::Threshold => {
            let tau = args
                .tau
                .ok_or_else(|| Error::InvalidConfig("threshold mode needs --tau".into()))?;
            match_threshold(&data, b.view(), tau)?
        }
        CliMatchMode::Permutation => match_permutation(&data, b.view())?,
        CliMatchMode::Constrained => {
            let sigma_hat = args.sigma_hat.ok_or_else(|| {
                Error::InvalidConfig("constrained mode needs --sigma-hat".into())
            })?;
            let pre = match &args.theta_pre {
                Some(path) => read_match_csv(path)?,
                None => GeneralizedMatch::identity(data.n()),
            };
            match_constrained(&data, &pre, b.view(), sigma_hat)?
        }
    };
    write_match_outputs(&args.out, &result)?;
    println!(
        "matched {} rows, {} missing, output in {}",
        data.n(),
        result.theta_hat.missing_set().len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_metrics(args: MetricsArgs) -> Result<ExitCode> {
    let data = load_data(&args.x, &args.y)?;
    let b_est = read_matrix_csv(&args.b_est)?;
    let b_star = args.b_star.as_ref().map(read_matrix_csv).transpose()?;
    let theta_hat = args.theta_hat.as_ref().map(read_match_csv).transpose()?;
    let theta_star = args.theta_star.as_ref().map(read_match_csv).transpose()?;

    // separation and signal metrics use the true coefficients when given,
    // the estimate otherwise
    let b_ref = b_star.as_ref().unwrap_or(&b_est);
    let missing = theta_star
        .as_ref()
        .map(|t| t.missing_set())
        .unwrap_or_default();
    let srank = eval::stable_rank(b_ref.view());
    let report = eval::MetricsReport {
        hamming_frac: match (&theta_hat, &theta_star) {
            (Some(hat), Some(star)) => eval::hamming_frac(hat, star)?,
            _ => f64::NAN,
        },
        std_err: match (&b_star, args.sigma) {
            (Some(star), Some(sigma)) => eval::standardized_error(
                b_est.view(),
                star.view(),
                sigma,
                data.m(),
                data.d(),
                data.n(),
            ),
            _ => f64::NAN,
        },
        r_squared: eval::r_squared(data.x(), data.y(), b_est.view())?,
        rel_reduction: match (&theta_hat, &theta_star) {
            (Some(hat), Some(star)) => eval::rel_reduction(hat, star, data.y())?,
            _ => f64::NAN,
        },
        gamma_sq: eval::gamma_sq(data.x(), b_ref.view()).unwrap_or(f64::NAN),
        gamma0_sq: eval::gamma0_sq(data.x(), data.y(), b_ref.view(), &missing)
            .unwrap_or(f64::NAN),
        snr: args
            .sigma
            .map(|s| eval::snr(b_ref.view(), s, data.m()))
            .unwrap_or(f64::NAN),
        stable_rank: srank,
        normalized_log_snr: args
            .sigma
            .map(|s| eval::normalized_log_snr(data.n(), srank, s, args.c))
            .unwrap_or(f64::NAN),
    };
    std::fs::write(
        &args.out,
        serde_json::to_string_pretty(&report).unwrap() + "\n",
    )?;
    println!("wrote metrics to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = args.seed {
        cfg.run.base_seed = seed;
    }
    let summary = experiment::run(&cfg, &args.out, args.threads)?;
    println!(
        "{} rows ({} ok, {} failed) in {}",
        summary.rows_total,
        summary.rows_ok,
        summary.rows_failed,
        args.out.display()
    );
    if summary.rows_total > 0 && summary.rows_ok == 0 {
        eprintln!("error: every cell failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

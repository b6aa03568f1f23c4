//! `npl`: penalized likelihood fits, GCV tuning, likelihood-ratio tests,
//! penalty diagnostics and the autoregressive simulation study.
//!
//! Exit status: 0 on success, 1 on input or usage errors, 2 on numeric
//! failures. Errors go to stderr as `error[CODE]: message`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use npl::format::{sig9, to_json};
use npl::inference::{lr_test, sandwich_covariance, selection_rows, CovarianceEstimate, LrTestResult};
use npl::io::{dataset_to_csv, read_dataset_path, CsvOptions, ResponseColumn};
use npl::model::ols;
use npl::optimizer::fit_penalized;
use npl::parallel::Execution;
use npl::penalty::condition_diagnostics;
use npl::sim::{
    dimension_rule, run_lr_null_experiment, run_table_experiment, simulate_ar, ArProcessSpec,
    ExperimentConfig,
};
use npl::tuning::{default_lambda_grid, gcv_scan, profile_csv, GcvScan, ScanOptions};
use npl::{Dataset, Error, FitConfig, FitResult, GaussianModel, PenaltyKind, PenaltySpec};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "npl", version, about = "Nonconcave penalized likelihood for linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a penalized model and report coefficients with sandwich standard errors.
    Fit(FitArgs),
    /// Scan a λ grid with generalized cross-validation.
    Gcv(GcvArgs),
    /// Penalized likelihood-ratio test that the named coefficients are zero.
    Test(TestArgs),
    /// Penalty regularity diagnostics at the fitted coefficients.
    Diag(FitArgs),
    /// Autoregressive Monte Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Scad,
    Hard,
    L1,
    Lq,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// CSV file with one response column and numeric covariates.
    #[arg(short, long)]
    input: PathBuf,
    /// Treat the first line as data rather than column names.
    #[arg(long)]
    no_header: bool,
    /// Response column: a header name or a 1-based column number.
    #[arg(short, long, default_value = "1")]
    response: String,
    /// Known noise variance σ² in the likelihood.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
}

#[derive(Args, Debug, Clone)]
struct PenaltyArgs {
    #[arg(long, value_enum, default_value_t = Family::Scad)]
    penalty: Family,
    /// SCAD shape parameter.
    #[arg(long, default_value_t = npl::penalty::DEFAULT_SCAD_A)]
    a: f64,
    /// Exponent of the Lq penalty.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Penalize coefficient j with λ·SE_j (least-squares standard errors).
    #[arg(long)]
    scale_by_se: bool,
}

impl PenaltyArgs {
    fn kind(&self) -> PenaltyKind {
        match self.penalty {
            Family::Scad => PenaltyKind::Scad { a: self.a },
            Family::Hard => PenaltyKind::Hard,
            Family::L1 => PenaltyKind::SoftL1,
            Family::Lq => PenaltyKind::Lq { q: self.q },
        }
    }
}

#[derive(Args, Debug, Clone)]
struct TuningArgs {
    /// Fixed λ; when absent λ is chosen by GCV.
    #[arg(long)]
    lambda: Option<f64>,
    /// GCV inflation factor γ.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Comma-separated ascending λ grid (default: 50 log-spaced points).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50)]
    grid_points: usize,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Write the primary artifact here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct GcvArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Coefficients set to zero under the null: names or 1-based indices.
    #[arg(long, value_delimiter = ',', required = true)]
    zero: Vec<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Table,
    LrNull,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Experiment::Table)]
    experiment: Experiment,
    #[arg(short, long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, env = "NPL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 50)]
    grid_points: usize,
    /// LR study: leave the tested coefficients unpenalized.
    #[arg(long)]
    unpenalized_tested: bool,
    /// Run replicates on one thread.
    #[arg(long)]
    serial: bool,
    /// Table study, CSV: also write the standard-error table here.
    #[arg(long)]
    se_table: Option<PathBuf>,
    /// LR study: write `x,density` histogram data here.
    #[arg(long)]
    density: Option<PathBuf>,
    /// LR study: write χ² QQ-plot pairs here.
    #[arg(long)]
    qq: Option<PathBuf>,
    /// Also write replicate 0 as a headerless CSV (response first).
    #[arg(long)]
    dump_dataset: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {first}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> npl::Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Gcv(args) => cmd_gcv(&args),
        Command::Test(args) => cmd_test(&args),
        Command::Diag(args) => cmd_diag(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    }
}

fn emit(output: &OutputArgs, text: &str) -> npl::Result<()> {
    match &output.output {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> npl::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn load(input: &InputArgs) -> npl::Result<GaussianModel> {
    let options = CsvOptions {
        has_header: !input.no_header,
        response: input.response.parse::<ResponseColumn>()?,
    };
    let dataset = read_dataset_path(&input.input, &options)?;
    GaussianModel::with_sigma2(dataset, input.sigma2)
}

fn fit_config(model: &GaussianModel, penalty: &PenaltyArgs, tuning: &TuningArgs) -> npl::Result<FitConfig> {
    let mut config = FitConfig {
        max_iterations: tuning.max_iterations,
        convergence_tol: tuning.tol,
        ..FitConfig::default()
    };
    if penalty.scale_by_se {
        config.penalty_scale = Some(ols(model.dataset())?.standard_errors);
    }
    Ok(config)
}

fn scan(
    model: &GaussianModel,
    family: &PenaltySpec,
    tuning: &TuningArgs,
    config: &FitConfig,
) -> npl::Result<GcvScan> {
    let grid = match &tuning.grid {
        Some(g) => g.clone(),
        None => default_lambda_grid(model, config.penalty_scale.as_deref(), tuning.grid_points),
    };
    gcv_scan(model, family, &grid, tuning.gamma, config, ScanOptions::default())
}

/// Penalty at the requested or GCV-selected λ, with its fit.
fn tuned_fit(
    model: &GaussianModel,
    penalty: &PenaltyArgs,
    tuning: &TuningArgs,
    config: &FitConfig,
) -> npl::Result<(PenaltySpec, FitResult, bool)> {
    let family = PenaltySpec::new(penalty.kind(), 0.0)?;
    match tuning.lambda {
        Some(lambda) => {
            let spec = family.with_lambda(lambda)?;
            let fit = fit_penalized(model, &spec, config)?;
            Ok((spec, fit, false))
        }
        None => {
            let s = scan(model, &family, tuning, config)?;
            Ok((family.with_lambda(s.best.lambda)?, s.best_fit, true))
        }
    }
}

fn coefficient_rows(names: &[String], fit: &FitResult, cov: Option<&CovarianceEstimate>) -> Vec<serde_json::Value> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            json!({
                "name": name,
                "estimate": fit.beta[j],
                "std_error": cov.and_then(|c| c.standard_error_of(j)),
            })
        })
        .collect()
}

fn cmd_fit(args: &FitArgs) -> npl::Result<()> {
    let model = load(&args.input)?;
    let config = fit_config(&model, &args.penalty, &args.tuning)?;
    let (spec, fit, by_gcv) = tuned_fit(&model, &args.penalty, &args.tuning, &config)?;
    let names = model.dataset().column_names();
    let cov = if fit.active_set.is_empty() {
        None
    } else {
        match sandwich_covariance(&model, &fit, &spec) {
            Ok(c) => Some(c),
            Err(e) if e.is_numeric() => {
                eprintln!("warning[{}]: no standard errors: {e}", e.code());
                None
            }
            Err(e) => return Err(e),
        }
    };
    match args.output.format {
        Format::Csv => {
            let mut out = String::from("name,estimate,std_error\n");
            for (j, name) in names.iter().enumerate() {
                let se = cov
                    .as_ref()
                    .and_then(|c| c.standard_error_of(j))
                    .map_or(String::new(), sig9);
                out.push_str(&format!("{name},{},{se}\n", sig9(fit.beta[j])));
            }
            emit(&args.output, &out)
        }
        Format::Json => {
            let value = json!({
                "penalty": spec,
                "lambda_selected_by_gcv": by_gcv,
                "sigma2": model.sigma2(),
                "coefficients": coefficient_rows(&names, &fit, cov.as_ref()),
                "beta": fit.beta,
                "active_set": fit.active_set.iter().map(|&j| names[j].clone()).collect::<Vec<_>>(),
                "objective": fit.objective,
                "iterations": fit.iterations,
                "converged": fit.converged,
                "lambda_used": fit.lambda_used,
                "covariance": cov,
            });
            emit(&args.output, &to_json(&value)?)
        }
    }
}

fn cmd_gcv(args: &GcvArgs) -> npl::Result<()> {
    let model = load(&args.input)?;
    let config = fit_config(&model, &args.penalty, &args.tuning)?;
    let family = PenaltySpec::new(args.penalty.kind(), 0.0)?;
    let s = scan(&model, &family, &args.tuning, &config)?;
    match args.output.format {
        Format::Csv => {
            eprintln!("selected lambda: {}", sig9(s.best.lambda));
            emit(&args.output, &profile_csv(&s.profile))
        }
        Format::Json => {
            let value = json!({
                "best": s.best,
                "beta": s.best_fit.beta,
                "names": model.dataset().column_names(),
                "profile": s.profile,
                "degenerate_lambdas": s.degenerate,
            });
            emit(&args.output, &to_json(&value)?)
        }
    }
}

/// Column indices (0-based) for names or 1-based numbers.
fn resolve_columns(dataset: &Dataset, items: &[String]) -> npl::Result<Vec<usize>> {
    let names = dataset.column_names();
    let mut out = Vec::new();
    for item in items {
        let item = item.trim();
        let j = match names.iter().position(|n| n == item) {
            Some(j) => j,
            None => match item.parse::<usize>() {
                Ok(k) if (1..=names.len()).contains(&k) => k - 1,
                _ => return Err(Error::Input(format!("unknown coefficient {item:?}"))),
            },
        };
        if out.contains(&j) {
            return Err(Error::Input(format!("coefficient {item:?} listed twice")));
        }
        out.push(j);
    }
    Ok(out)
}

fn cmd_test(args: &TestArgs) -> npl::Result<()> {
    let model = load(&args.input)?;
    let tested = resolve_columns(model.dataset(), &args.zero)?;
    let config = fit_config(&model, &args.penalty, &args.tuning)?;
    let (spec, _, by_gcv) = tuned_fit(&model, &args.penalty, &args.tuning, &config)?;
    let a = selection_rows(&tested, model.p())?;
    let result: LrTestResult = lr_test(&model, &spec, &a, &config)?;
    if result.local_optimum_warning {
        eprintln!(
            "warning: constrained fit beat the unconstrained one (raw T = {}); both are local maxima",
            sig9(result.raw_statistic)
        );
    }
    let names = model.dataset().column_names();
    match args.output.format {
        Format::Csv => {
            let text = format!(
                "statistic,df,p_value\n{},{},{}\n",
                sig9(result.statistic),
                result.df,
                sig9(result.p_value)
            );
            emit(&args.output, &text)
        }
        Format::Json => {
            let mut value = serde_json::to_value(&result).map_err(|e| Error::Numeric(e.to_string()))?;
            let obj = value.as_object_mut().expect("struct serializes to an object");
            obj.insert("tested".into(), json!(tested.iter().map(|&j| names[j].clone()).collect::<Vec<_>>()));
            obj.insert("penalty".into(), json!(spec));
            obj.insert("lambda_selected_by_gcv".into(), json!(by_gcv));
            emit(&args.output, &to_json(&value)?)
        }
    }
}

fn cmd_diag(args: &FitArgs) -> npl::Result<()> {
    let model = load(&args.input)?;
    let config = fit_config(&model, &args.penalty, &args.tuning)?;
    let (spec, fit, _) = tuned_fit(&model, &args.penalty, &args.tuning, &config)?;
    let nonzero: Vec<f64> = fit.beta.iter().copied().filter(|b| *b != 0.0).collect();
    let diag = condition_diagnostics(&spec, &nonzero)?;
    match args.output.format {
        Format::Csv => {
            let text = format!(
                "a_n,b_n,singular_at_origin,lipschitz_ok,lipschitz_constant,separation_ratio\n{},{},{},{},{},{}\n",
                sig9(diag.a_n),
                sig9(diag.b_n),
                diag.singular_at_origin,
                diag.lipschitz_ok,
                sig9(diag.lipschitz_constant),
                sig9(diag.separation_ratio)
            );
            emit(&args.output, &text)
        }
        Format::Json => {
            let value = json!({ "penalty": spec, "beta": fit.beta, "diagnostics": diag });
            emit(&args.output, &to_json(&value)?)
        }
    }
}

fn cmd_simulate(args: &SimulateArgs) -> npl::Result<()> {
    let process = ArProcessSpec::new(
        npl::sim::default_ar_coefficients(),
        args.noise_sd,
        args.burn_in,
        args.seed,
    )?;
    if let Some(path) = &args.dump_dataset {
        let p = dimension_rule(args.n)?;
        let data = simulate_ar(&process, args.n, p)?;
        write_file(path, &dataset_to_csv(&data, false))?;
    }
    let config = ExperimentConfig {
        process,
        n: args.n,
        replicates: args.replicates,
        family: args.penalty.kind(),
        gamma: args.gamma,
        grid_points: args.grid_points,
        scale_by_se: args.penalty.scale_by_se,
        unpenalized_tested: args.unpenalized_tested,
        fit: FitConfig::default(),
    };
    let execution = if args.serial { Execution::Serial } else { Execution::Parallel };
    match args.experiment {
        Experiment::Table => {
            let report = run_table_experiment(&config, execution)?;
            if let Some(path) = &args.se_table {
                write_file(path, &report.se_table_csv())?;
            }
            match args.output.format {
                Format::Csv => emit(&args.output, &report.summary_csv()),
                Format::Json => emit(&args.output, &to_json(&report)?),
            }
        }
        Experiment::LrNull => {
            let report = run_lr_null_experiment(&config, execution)?;
            if let Some(path) = &args.density {
                write_file(path, &report.density_csv())?;
            }
            if let Some(path) = &args.qq {
                write_file(path, &report.qq_csv())?;
            }
            match args.output.format {
                Format::Csv => {
                    let mut out = String::from("replicate,statistic\n");
                    for (i, t) in report.statistics.iter().enumerate() {
                        out.push_str(&format!("{i},{}\n", sig9(*t)));
                    }
                    emit(&args.output, &out)
                }
                Format::Json => emit(&args.output, &to_json(&report)?),
            }
        }
    }
}

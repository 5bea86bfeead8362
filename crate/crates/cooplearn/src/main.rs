use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cooplearn::commands;
use cooplearn::config::{RunConfig, RunOverrides};
use cooplearn::error::{CliError, ExitCode};
use cooplearn::io;
use cooplearn_core::compare::BenchmarkConfig;
use cooplearn_core::data::Family;
use cooplearn_core::selection::SelectionRule;
use cooplearn_core::theory::TheoryCheckConfig;

#[derive(Parser)]
#[command(name = "cooplearn", version, about = "Cooperative learning for multiview data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate over (rho, lambda) and write the final fit.
    Fit(RunArgs),
    /// Cross-validate over (rho, lambda) and write the error surface.
    Cv(RunArgs),
    /// Predict from a saved fit.json.
    Predict(PredictArgs),
    /// Simulate latent factor data, or benchmark the methods on it.
    Simulate(SimulateArgs),
    /// Check the closed-form theory numerically.
    TheoryCheck(TheoryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Binomial,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Min,
    OneSe,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    view_paths: Option<Vec<PathBuf>>,
    #[arg(long)]
    response_path: Option<PathBuf>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, value_delimiter = ',')]
    rho_grid: Option<Vec<f64>>,
    #[arg(long)]
    n_lambda: Option<usize>,
    #[arg(long)]
    min_ratio: Option<f64>,
    #[arg(long)]
    alpha_mix: Option<f64>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    /// Adaptive cooperative learning (two gaussian views).
    #[arg(long)]
    adaptive: bool,
    /// JSON file with `pairs` and `rho2`.
    #[arg(long)]
    pairs_path: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// CSV files have no header line.
    #[arg(long)]
    no_header: bool,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    view_paths: Vec<PathBuf>,
    #[arg(long, default_value = "predictions.csv")]
    output: PathBuf,
    #[arg(long)]
    no_header: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Correlated,
    XOnly,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON benchmark configuration; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "correlated")]
    preset: Preset,
    /// 500 features per view instead of 100.
    #[arg(long)]
    full: bool,
    /// Fit and score every method instead of writing a dataset.
    #[arg(long)]
    benchmark: bool,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    p_per_view: Option<usize>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long, default_value = "sim")]
    output_dir: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct TheoryArgs {
    /// JSON check configuration (parameters, sample sizes, tolerances).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mc_draws: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run_config(args: RunArgs) -> Result<RunConfig, CliError> {
    let base = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("config: {}: {e}", p.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    Ok(base.merge(RunOverrides {
        view_paths: args.view_paths,
        response_path: args.response_path,
        family: args.family.map(|f| match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binomial => Family::Binomial,
        }),
        rho_grid: args.rho_grid,
        n_lambda: args.n_lambda,
        min_ratio: args.min_ratio,
        alpha_mix: args.alpha_mix,
        k_folds: args.k_folds,
        seed: args.seed,
        rule: args.rule.map(|r| match r {
            RuleArg::Min => SelectionRule::Min,
            RuleArg::OneSe => SelectionRule::OneSe,
        }),
        adaptive: args.adaptive,
        pairs_path: args.pairs_path,
        output_dir: args.output_dir,
        no_header: args.no_header,
        workers: args.workers,
    }))
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Fit(args) => commands::cmd_fit(&run_config(args)?),
        Command::Cv(args) => commands::cmd_cv(&run_config(args)?),
        Command::Predict(args) => commands::cmd_predict(&args.fit, &args.view_paths, !args.no_header, &args.output),
        Command::Simulate(args) => {
            let mut config = match &args.config {
                Some(p) => io::read_json::<BenchmarkConfig>(p)?,
                None => match args.preset {
                    Preset::Correlated => BenchmarkConfig::correlated(args.full),
                    Preset::XOnly => BenchmarkConfig::x_only(args.full),
                },
            };
            macro_rules! set {
                ($($f:ident),*) => { $( if let Some(v) = args.$f { config.$f = v; } )* };
            }
            set!(replicates, seed, snr, n_train, n_test, p_per_view, k_folds);
            commands::cmd_simulate(&config, args.benchmark, args.workers, &args.output_dir)
        }
        Command::TheoryCheck(args) => {
            let mut config = match &args.config {
                Some(p) => io::read_json::<TheoryCheckConfig>(p)?,
                None => TheoryCheckConfig::default(),
            };
            if let Some(s) = args.seed {
                config.seed = s;
            }
            if let Some(d) = args.mc_draws {
                config.mc_draws = d;
            }
            commands::cmd_theory_check(&config, args.output.as_deref()).map(|(_, msg)| msg)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            process::exit(ExitCode::Ok as i32);
        }
        Err(e) => {
            eprintln!("error: {e}");
            process::exit(e.exit_code() as i32);
        }
    }
}

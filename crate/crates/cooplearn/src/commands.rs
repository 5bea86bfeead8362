//! Subcommand implementations. Each returns a short human-readable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cooplearn_core::augmented::PairSpec;
use cooplearn_core::compare::{run_benchmark_with, summary_table, BenchmarkConfig};
use cooplearn_core::coop::{coop_direct_fit, CoopConfig, CoopFit, CoopPath};
use cooplearn_core::data::{DataView, Family, MultiViewDataset};
use cooplearn_core::glm::coop_logistic_path;
use cooplearn_core::selection::{
    adaptive_direct_with, cv_coop_with, make_folds, AdaptiveOptions, CvOptions, CvResult, LambdaSpec,
};
use cooplearn_core::sim::gen_with_snr;
use cooplearn_core::theory::{run_theory_checks, TheoryCheckConfig, TheoryReport};
use cooplearn_core::Matrix;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io;
use crate::parallel::RayonExecutor;
use crate::report::{AdaptiveSummary, CvReport, FitReport, SimulationSidecar, Versioned};

/// Wall-clock timings written to `<command>.log`; the only place timestamps appear.
struct Timer {
    start: Instant,
    last: Instant,
    lines: Vec<String>,
}

impl Timer {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            lines: Vec::new(),
        }
    }

    fn lap(&mut self, what: &str) {
        let now = Instant::now();
        let line = format!("{what}: {:.3}s", (now - self.last).as_secs_f64());
        log::info!("{line}");
        self.lines.push(line);
        self.last = now;
    }

    fn write(mut self, path: &Path) -> Result<(), CliError> {
        let total = format!("total: {:.3}s", self.start.elapsed().as_secs_f64());
        self.lines.push(total);
        fs::write(path, self.lines.join("\n") + "\n").map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

fn executor(workers: Option<usize>) -> Result<RayonExecutor, CliError> {
    RayonExecutor::new(workers).map_err(|e| CliError::config(format!("workers: {e}")))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::config(format!("output_dir: {}: {e}", dir.display())))
}

fn load_views(paths: &[PathBuf], header: bool) -> Result<Vec<DataView>, CliError> {
    Ok(paths.iter().map(|p| io::load_view(p, header)).collect::<Result<Vec<_>, _>>()?)
}

pub fn load_dataset(config: &RunConfig) -> Result<MultiViewDataset, CliError> {
    config.validate()?;
    let views = load_views(&config.view_paths, config.header)?;
    let response = config.response_path.as_deref().expect("validated");
    let y = io::load_response(response, config.header)?;
    Ok(MultiViewDataset::new(views, &y, config.family)?)
}

fn load_pairs(config: &RunConfig, dataset: &MultiViewDataset) -> Result<Option<PairSpec>, CliError> {
    let Some(path) = &config.pairs_path else {
        return Ok(None);
    };
    let spec: PairSpec = io::read_json(path)?;
    spec.validate(&dataset.view_widths())
        .map_err(|e| CliError::config(format!("pairs_path: {e}")))?;
    Ok(Some(spec))
}

pub fn cv_options(config: &RunConfig, pairs: Option<PairSpec>) -> CvOptions {
    CvOptions {
        rho_grid: config.rho_grid.clone(),
        lambda: LambdaSpec::Auto {
            n_lambda: config.n_lambda,
            min_ratio: config.min_ratio,
        },
        rule: config.rule,
        config: CoopConfig {
            alpha_mix: config.alpha_mix,
            pairs,
            ..CoopConfig::default()
        },
        ..CvOptions::default()
    }
}

pub struct CvRun {
    pub dataset: MultiViewDataset,
    pub options: CvOptions,
    pub cv: CvResult,
    pub adaptive: Option<AdaptiveSummary>,
}

fn run_cv(config: &RunConfig, timer: &mut Timer) -> Result<CvRun, CliError> {
    let dataset = load_dataset(config)?;
    let pairs = load_pairs(config, &dataset)?;
    timer.lap("load");
    let exec = executor(config.workers)?;
    let options = cv_options(config, pairs);
    let folds = make_folds(dataset.n(), config.k_folds, config.seed)?;
    let (cv, adaptive) = if config.adaptive {
        let res = adaptive_direct_with(&dataset, &options, &AdaptiveOptions::default(), &folds, &exec)?;
        let summary = AdaptiveSummary {
            states: res.states,
            ratios: res.ratios,
            clamped: res.clamped,
        };
        (res.cv, Some(summary))
    } else {
        (cv_coop_with(&dataset, &options, &folds, &exec)?, None)
    };
    timer.lap("cross_validation");
    Ok(CvRun {
        dataset,
        options,
        cv,
        adaptive,
    })
}

/// `λ` path at the selected `ρ`, on the same grid and penalty factors as CV.
pub fn selected_path(run: &CvRun) -> Result<CoopPath, CliError> {
    let s = run.cv.selected;
    let grid = &run.cv.lambdas[s.rho_index];
    let mut config = run.options.config.clone();
    if let Some(pf) = &run.cv.penalty_factors {
        config.penalty_factors = Some(pf[s.rho_index].clone());
    }
    Ok(match run.dataset.family() {
        Family::Gaussian => coop_direct_fit(&run.dataset, s.rho, grid, &config)?,
        Family::Binomial => coop_logistic_path(&run.dataset, s.rho, grid, &config, &run.options.logistic)?,
    })
}

fn path_csv(path: &CoopPath, names: &[String]) -> String {
    let mut out = String::from("lambda");
    for n in names {
        let _ = write!(out, ",df_{n}");
    }
    out.push_str(",df,objective\n");
    for (lambda, fit) in path.lambdas.iter().zip(&path.fits) {
        let _ = write!(out, "{lambda}");
        for v in &fit.views {
            let _ = write!(out, ",{}", v.coefficients.iter().filter(|c| **c != 0.0).count());
        }
        let _ = writeln!(out, ",{},{}", fit.nonzero(), fit.objective);
    }
    out
}

fn paired_discrepancy(fit: &CoopFit, dataset: &MultiViewDataset) -> Option<f64> {
    let pairs = fit.pairs.as_ref()?;
    Some(pairs.discrepancy(&dataset.view_matrices(), &fit.thetas()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Cross-validates, refits, and writes `fit.json`, `path.csv`, `fitted.csv` and `fit.log`.
pub fn cmd_fit(config: &RunConfig) -> Result<String, CliError> {
    let mut timer = Timer::new();
    let run = run_cv(config, &mut timer)?;
    let path = selected_path(&run)?;
    timer.lap("path");
    let fit = run.cv.refit.clone();
    let raw: Vec<Matrix> = run.dataset.raw_views().iter().map(|v| v.matrix().clone()).collect();
    let fitted = fit.predict(&raw)?;
    let s = run.cv.selected;
    let report = FitReport {
        paired_discrepancy: paired_discrepancy(&fit, &run.dataset),
        penalty_factors: run.cv.penalty_factors.as_ref().map(|pf| pf[s.rho_index].clone()),
        fit,
        selection: s,
        seed: config.seed,
        k_folds: config.k_folds,
    };
    let dir = &config.output_dir;
    ensure_dir(dir)?;
    io::write_json(&dir.join("fit.json"), &Versioned::new(&report))?;
    write_text(&dir.join("path.csv"), &path_csv(&path, &run.dataset.view_names()))?;
    io::write_column(&dir.join("fitted.csv"), "fitted", fitted.as_slice())?;
    timer.lap("write");
    timer.write(&dir.join("fit.log"))?;
    let mut msg = format!(
        "rho = {}, lambda = {:.6e}, cv error = {:.6}, nonzero = {}",
        s.rho,
        s.lambda,
        s.cv_error,
        report.fit.nonzero()
    );
    if let Some(d) = report.paired_discrepancy {
        let _ = write!(msg, ", paired discrepancy = {d:.3e}");
    }
    Ok(msg)
}

/// Cross-validates and writes `cv.json`, `cv.csv` and `cv.log`.
pub fn cmd_cv(config: &RunConfig) -> Result<String, CliError> {
    let mut timer = Timer::new();
    let run = run_cv(config, &mut timer)?;
    let dir = &config.output_dir;
    ensure_dir(dir)?;
    let mut table = String::from("rho,lambda,mean_error,sd_error\n");
    for (r, rho) in run.cv.rho_grid.iter().enumerate() {
        for (l, lambda) in run.cv.lambdas[r].iter().enumerate() {
            let _ = writeln!(table, "{rho},{lambda},{},{}", run.cv.mean_error[r][l], run.cv.sd_error[r][l]);
        }
    }
    let s = run.cv.selected;
    let msg = format!("selected rho = {}, lambda = {:.6e}, cv error = {:.6}", s.rho, s.lambda, s.cv_error);
    let report = CvReport {
        seed: config.seed,
        cv: run.cv,
        adaptive: run.adaptive,
    };
    io::write_json(&dir.join("cv.json"), &Versioned::new(&report))?;
    write_text(&dir.join("cv.csv"), &table)?;
    timer.lap("write");
    timer.write(&dir.join("cv.log"))?;
    Ok(msg)
}

/// Applies a saved fit to new raw views.
pub fn cmd_predict(fit_path: &Path, views: &[PathBuf], header: bool, output: &Path) -> Result<String, CliError> {
    let report: Versioned<FitReport> = io::read_json(fit_path)?;
    if report.schema != crate::report::SCHEMA {
        return Err(CliError::config(format!("fit: unsupported schema {}", report.schema)));
    }
    let raw: Vec<Matrix> = load_views(views, header)?.into_iter().map(|v| v.matrix().clone()).collect();
    let pred = report.body.fit.predict(&raw)?;
    io::write_column(output, "prediction", pred.as_slice())?;
    Ok(format!("{} predictions written to {}", pred.len(), output.display()))
}

/// Writes one simulated train/test split, or runs the method comparison.
pub fn cmd_simulate(
    config: &BenchmarkConfig,
    benchmark: bool,
    workers: Option<usize>,
    output_dir: &Path,
) -> Result<String, CliError> {
    config.validate()?;
    ensure_dir(output_dir)?;
    let mut timer = Timer::new();
    if benchmark {
        let exec = executor(workers)?;
        let bench = run_benchmark_with(config, &exec)?;
        timer.lap("benchmark");
        let table = summary_table(&bench);
        io::write_json(&output_dir.join("benchmark.json"), &Versioned::new(&bench))?;
        write_text(&output_dir.join("summary.csv"), &table)?;
        timer.write(&output_dir.join("simulate.log"))?;
        let ranking: Vec<&str> = bench.ranking().iter().map(|m| m.name()).collect();
        return Ok(format!("{table}ranking: {}", ranking.join(" < ")));
    }
    let params = config.sim_params(0);
    let data = gen_with_snr(&params, config.snr)?;
    let sigma_params = cooplearn_core::sim::FactorSimParams {
        sigma: cooplearn_core::sim::calibrate_sigma(&params, config.snr)?,
        ..params
    };
    let (train, test) = data.split(config.n_train)?;
    for (name, part) in [("train", &train), ("test", &test)] {
        let dir = output_dir.join(name);
        ensure_dir(&dir)?;
        for (m, v) in part.views.iter().enumerate() {
            let names: Vec<String> = (1..=v.ncols()).map(|j| format!("V{j}")).collect();
            io::write_matrix(&dir.join(format!("view{}.csv", m + 1)), &names, v)?;
        }
        io::write_column(&dir.join("response.csv"), "y", &part.y)?;
    }
    let sidecar = SimulationSidecar {
        params: sigma_params,
        target_snr: config.snr,
        realized_snr: data.realized_snr,
        n_train: config.n_train,
        n_test: config.n_test,
    };
    io::write_json(&output_dir.join("simulation.json"), &Versioned::new(&sidecar))?;
    timer.lap("simulate");
    timer.write(&output_dir.join("simulate.log"))?;
    Ok(format!(
        "wrote {} train and {} test rows to {} (realized snr {:.3})",
        config.n_train,
        config.n_test,
        output_dir.display(),
        data.realized_snr
    ))
}

/// Runs the theory checks; fails with a numeric error if any check fails.
pub fn cmd_theory_check(config: &TheoryCheckConfig, output: Option<&Path>) -> Result<(TheoryReport, String), CliError> {
    let report = run_theory_checks(config)?;
    let mut msg = String::new();
    for c in &report.checks {
        let _ = writeln!(
            msg,
            "{} {}: observed {:.4e}, threshold {:.4e} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.observed,
            c.threshold,
            c.detail
        );
    }
    if let Some(path) = output {
        io::write_json(path, &Versioned::new(&report))?;
    }
    if !report.all_passed() {
        return Err(CliError::Numeric(format!("{msg}theory checks failed")));
    }
    Ok((report, msg.trim_end().to_string()))
}

//! Train/test benchmark of cooperative learning against its baselines on
//! latent factor data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::coop::CoopFit;
use crate::data::MultiViewDataset;
use crate::error::{invalid, Result};
use crate::exec::{Executor, Sequential};
use crate::fusion::late_fusion_fit_with;
use crate::math;
use crate::selection::{
    adaptive_direct_with, cv_coop_with, make_folds, AdaptiveOptions, CvOptions, LambdaSpec, DEFAULT_RHO_GRID,
};
use crate::sim::{gen_with_snr, FactorSimParams};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SeparateX,
    SeparateZ,
    EarlyFusion,
    LateFusion,
    Cooperative,
    AdaptiveCooperative,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SeparateX,
        Method::SeparateZ,
        Method::EarlyFusion,
        Method::LateFusion,
        Method::Cooperative,
        Method::AdaptiveCooperative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SeparateX => "separate_x",
            Method::SeparateZ => "separate_z",
            Method::EarlyFusion => "early_fusion",
            Method::LateFusion => "late_fusion",
            Method::Cooperative => "cooperative",
            Method::AdaptiveCooperative => "adaptive_cooperative",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub p_per_view: usize,
    pub p_u: usize,
    pub s_u: f64,
    pub t_x: f64,
    pub t_z: f64,
    /// Every factor coefficient.
    pub beta_u: f64,
    pub snr: f64,
    pub k_folds: usize,
    pub n_lambda: usize,
    pub min_ratio: Option<f64>,
    pub rho_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self::correlated(false)
    }
}

impl BenchmarkConfig {
    /// Medium correlation, both views informative. `full` uses 500 features per view.
    pub fn correlated(full: bool) -> Self {
        Self {
            n_train: 200,
            n_test: 1000,
            p_per_view: if full { 500 } else { 100 },
            p_u: 30,
            s_u: 1.0,
            t_x: 2.0,
            t_z: 2.0,
            beta_u: 2.0,
            snr: 1.8,
            k_folds: 10,
            n_lambda: 50,
            min_ratio: Some(0.01),
            rho_grid: DEFAULT_RHO_GRID.to_vec(),
            replicates: 10,
            seed: 1,
            methods: Method::ALL.to_vec(),
        }
    }

    /// Uncorrelated views, only the first informative.
    pub fn x_only(full: bool) -> Self {
        Self {
            t_z: 0.0,
            snr: 3.5,
            ..Self::correlated(full)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(invalid("replicates", "at least one replicate is required"));
        }
        if self.n_test == 0 {
            return Err(invalid("n_test", "must be positive"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "no methods requested"));
        }
        if self.rho_grid.is_empty() {
            return Err(invalid("rho_grid", "must not be empty"));
        }
        self.sim_params(0).validate()
    }

    /// Generator parameters of replicate `replicate` (before calibrating `σ`).
    pub fn sim_params(&self, replicate: usize) -> FactorSimParams {
        FactorSimParams {
            n: self.n_train + self.n_test,
            p_per_view: vec![self.p_per_view, self.p_per_view],
            p_u: self.p_u,
            s_u: self.s_u,
            t_per_view: vec![self.t_x, self.t_z],
            beta_u: vec![self.beta_u; self.p_u],
            sigma: 1.0,
            seed: self.seed.wrapping_add(replicate as u64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub test_mse: f64,
    pub rho: f64,
    pub lambda: f64,
    pub nonzero: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub realized_snr: f64,
    pub results: Vec<MethodResult>,
}

impl ReplicateResult {
    pub fn mse(&self, method: Method) -> Option<f64> {
        self.results.iter().find(|r| r.method == method).map(|r| r.test_mse)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_test_mse: f64,
    pub sd_test_mse: f64,
    pub mean_nonzero: f64,
    pub mean_rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub replicates: Vec<ReplicateResult>,
    pub summary: Vec<MethodSummary>,
}

impl Benchmark {
    pub fn mean(&self, method: Method) -> Option<f64> {
        self.summary.iter().find(|s| s.method == method).map(|s| s.mean_test_mse)
    }

    /// Share of replicates in which `a` has test MSE at most that of `b`.
    pub fn share_at_most(&self, a: Method, b: Method) -> f64 {
        let wins = self
            .replicates
            .iter()
            .filter(|r| matches!((r.mse(a), r.mse(b)), (Some(x), Some(y)) if x <= y))
            .count();
        wins as f64 / self.replicates.len().max(1) as f64
    }

    /// Methods ordered by mean test MSE.
    pub fn ranking(&self) -> Vec<Method> {
        let mut s: Vec<&MethodSummary> = self.summary.iter().collect();
        s.sort_by(|a, b| a.mean_test_mse.total_cmp(&b.mean_test_mse));
        s.into_iter().map(|m| m.method).collect()
    }
}

fn test_mse(fit: &CoopFit, views: &[Matrix], y: &[f64]) -> Result<f64> {
    let pred = fit.predict(views)?;
    Ok(y.iter().zip(pred.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Fits every configured method on one replicate.
pub fn run_replicate<E: Executor>(config: &BenchmarkConfig, replicate: usize, exec: &E) -> Result<ReplicateResult> {
    let params = config.sim_params(replicate);
    let data = gen_with_snr(&params, config.snr)?;
    let (train, test) = data.split(config.n_train)?;
    let dataset = train.to_dataset()?;
    let folds = make_folds(config.n_train, config.k_folds, params.seed)?;
    let options = CvOptions {
        rho_grid: config.rho_grid.clone(),
        lambda: LambdaSpec::Auto {
            n_lambda: config.n_lambda,
            min_ratio: config.min_ratio,
        },
        ..CvOptions::default()
    };
    let early = CvOptions {
        rho_grid: vec![0.0],
        ..options.clone()
    };
    let single = |m: usize| -> Result<(MultiViewDataset, Vec<Matrix>)> {
        Ok((dataset.select_views(&[m])?, vec![test.views[m].clone()]))
    };

    let mut results = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let (fit, views) = match method {
            Method::SeparateX | Method::SeparateZ => {
                let (ds, views) = single(if method == Method::SeparateX { 0 } else { 1 })?;
                (cv_coop_with(&ds, &early, &folds, exec)?.refit, views)
            }
            Method::EarlyFusion => (cv_coop_with(&dataset, &early, &folds, exec)?.refit, test.views.clone()),
            Method::LateFusion => (
                late_fusion_fit_with(&dataset, &options, &folds, &folds, exec)?.fit,
                test.views.clone(),
            ),
            Method::Cooperative => (cv_coop_with(&dataset, &options, &folds, exec)?.refit, test.views.clone()),
            Method::AdaptiveCooperative => {
                let adaptive = AdaptiveOptions {
                    n_lambda: config.n_lambda,
                    min_ratio: config.min_ratio,
                    ..AdaptiveOptions::default()
                };
                let res = adaptive_direct_with(&dataset, &options, &adaptive, &folds, exec)?;
                (res.cv.refit, test.views.clone())
            }
        };
        results.push(MethodResult {
            method,
            test_mse: test_mse(&fit, &views, &test.y)?,
            rho: fit.rho,
            lambda: fit.lambda,
            nonzero: fit.nonzero(),
        });
    }
    Ok(ReplicateResult {
        replicate,
        seed: params.seed,
        realized_snr: data.realized_snr,
        results,
    })
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Benchmark> {
    run_benchmark_with(config, &Sequential)
}

/// Replicates run through `exec`; replicate `r` uses seed `config.seed + r`.
pub fn run_benchmark_with<E: Executor>(config: &BenchmarkConfig, exec: &E) -> Result<Benchmark> {
    config.validate()?;
    let reps: Vec<Result<ReplicateResult>> = exec.map(config.replicates, |r| run_replicate(config, r, exec));
    let replicates = reps.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = config
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&MethodResult> = replicates
                .iter()
                .filter_map(|r| r.results.iter().find(|m| m.method == method))
                .collect();
            let mse: Vec<f64> = rows.iter().map(|m| m.test_mse).collect();
            let nz: Vec<f64> = rows.iter().map(|m| m.nonzero as f64).collect();
            let rho: Vec<f64> = rows.iter().map(|m| m.rho).collect();
            MethodSummary {
                method,
                mean_test_mse: math::mean(&mse),
                sd_test_mse: math::sample_sd(&mse),
                mean_nonzero: math::mean(&nz),
                mean_rho: math::mean(&rho),
            }
        })
        .collect();
    Ok(Benchmark {
        config: config.clone(),
        replicates,
        summary,
    })
}

/// One line per method: name, mean and SD of the test MSE, mean support size.
pub fn summary_table(bench: &Benchmark) -> alloc::string::String {
    let mut out = alloc::string::String::from("method,mean_test_mse,sd_test_mse,mean_nonzero,mean_rho\n");
    for s in &bench.summary {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.2},{:.3}\n",
            s.method.name(),
            s.mean_test_mse,
            s.sd_test_mse,
            s.mean_nonzero,
            s.mean_rho
        ));
    }
    out
}

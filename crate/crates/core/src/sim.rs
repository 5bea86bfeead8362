//! Latent factor simulators and the sparsity-versus-`ρ` study.
//!
//! Draw order (fixed for reproducibility): view columns view by view, column by
//! column, then the factor columns, then the noise. All draws come from one
//! ChaCha8 stream seeded by `seed`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coop::{coop_direct_fit, coop_lambda_grid, CoopConfig};
use crate::data::{Family, MultiViewDataset};
use crate::error::{invalid, CoopError, Result};
use crate::exec::{Executor, Sequential};
use crate::math;
use crate::solver::SolverOptions;
use crate::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSimParams {
    pub n: usize,
    pub p_per_view: Vec<usize>,
    pub p_u: usize,
    pub s_u: f64,
    pub t_per_view: Vec<f64>,
    pub beta_u: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl FactorSimParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", "at least two rows are required"));
        }
        if self.p_per_view.is_empty() {
            return Err(invalid("p_per_view", "at least one view is required"));
        }
        if self.t_per_view.len() != self.p_per_view.len() {
            return Err(invalid("t_per_view", "one loading per view is required"));
        }
        if self.beta_u.len() != self.p_u {
            return Err(invalid("beta_u", format!("expected {} entries, got {}", self.p_u, self.beta_u.len())));
        }
        if self.p_per_view.iter().any(|&p| self.p_u >= p) {
            return Err(invalid("p_u", "must be smaller than every view's column count"));
        }
        let finite_nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !finite_nonneg(self.s_u) || !finite_nonneg(self.sigma) {
            return Err(invalid("s_u", "scale parameters must be finite and >= 0"));
        }
        if self.t_per_view.iter().any(|t| !finite_nonneg(*t)) {
            return Err(invalid("t_per_view", "loadings must be finite and >= 0"));
        }
        if self.beta_u.iter().any(|b| !b.is_finite()) {
            return Err(invalid("beta_u", "coefficients must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedDataset {
    pub views: Vec<Matrix>,
    pub y: Vec<f64>,
    pub latent: Matrix,
    /// `Uβ_u`.
    pub signal: Vec<f64>,
    /// `Var̂(Uβ_u)/σ²` on this draw (infinite at `σ = 0`).
    pub realized_snr: f64,
}

impl SimulatedDataset {
    pub fn to_dataset(&self) -> Result<MultiViewDataset> {
        MultiViewDataset::from_matrices(self.views.clone(), &self.y, Family::Gaussian)
    }

    /// First `n_train` rows and the rest.
    pub fn split(&self, n_train: usize) -> Result<(SimulatedDataset, SimulatedDataset)> {
        let n = self.y.len();
        if n_train == 0 || n_train >= n {
            return Err(invalid("n_train", format!("must lie in 1..{n}")));
        }
        let part = |start: usize, len: usize| SimulatedDataset {
            views: self.views.iter().map(|v| v.rows(start, len).into_owned()).collect(),
            y: self.y[start..start + len].to_vec(),
            latent: self.latent.rows(start, len).into_owned(),
            signal: self.signal[start..start + len].to_vec(),
            realized_snr: self.realized_snr,
        };
        Ok((part(0, n_train), part(n_train, n - n_train)))
    }
}

struct Draw {
    views: Vec<Matrix>,
    latent: Matrix,
    noise: Vector,
}

fn draw(params: &FactorSimParams) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n;
    let mut views: Vec<Matrix> = params
        .p_per_view
        .iter()
        .map(|&p| Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal)))
        .collect();
    let latent = Matrix::from_fn(n, params.p_u, |_, _| params.s_u * rng.sample::<f64, _>(StandardNormal));
    for (v, &t) in views.iter_mut().zip(&params.t_per_view) {
        for i in 0..params.p_u {
            v.column_mut(i).axpy(t, &latent.column(i), 1.0);
        }
    }
    let noise = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
    Draw { views, latent, noise }
}

/// Generates views `X_m = E_m + t_m U` on the first `p_u` columns and `y = Uβ_u + σε`.
pub fn gen_factor_dataset(params: &FactorSimParams) -> Result<SimulatedDataset> {
    params.validate()?;
    let d = draw(params);
    let signal = &d.latent * Vector::from_column_slice(&params.beta_u);
    let y: Vec<f64> = signal
        .iter()
        .zip(d.noise.iter())
        .map(|(s, e)| s + params.sigma * e)
        .collect();
    let var = math::variance(signal.as_slice());
    let realized_snr = if params.sigma == 0.0 {
        f64::INFINITY
    } else {
        var / (params.sigma * params.sigma)
    };
    Ok(SimulatedDataset {
        views: d.views,
        y,
        latent: d.latent,
        signal: signal.iter().copied().collect(),
        realized_snr,
    })
}

/// `σ = sqrt(Var̂(Uβ_u)/target)` on the factor draw that `params.seed` produces.
pub fn calibrate_sigma(params: &FactorSimParams, target_snr: f64) -> Result<f64> {
    if !(target_snr > 0.0 && target_snr.is_finite()) {
        return Err(invalid("snr", "target must be finite and > 0"));
    }
    if params.beta_u.iter().all(|b| *b == 0.0) {
        return Err(CoopError::NoSignal);
    }
    let probe = FactorSimParams {
        sigma: 1.0,
        ..params.clone()
    };
    probe.validate()?;
    let d = draw(&probe);
    let signal = &d.latent * Vector::from_column_slice(&params.beta_u);
    let var = math::variance(signal.as_slice());
    if var == 0.0 {
        return Err(CoopError::NoSignal);
    }
    Ok(math::sqrt(var / target_snr))
}

/// Generates with `σ` calibrated to `target_snr`.
pub fn gen_with_snr(params: &FactorSimParams, target_snr: f64) -> Result<SimulatedDataset> {
    let sigma = calibrate_sigma(params, target_snr)?;
    gen_factor_dataset(&FactorSimParams {
        sigma,
        ..params.clone()
    })
}

/// Two independent Gaussian views with `y = Xβ_x + Zβ_z + σε`, `σ` set from the realized signal.
pub fn gen_linear_two_view(n: usize, p: usize, coef: f64, snr: f64, seed: u64) -> Result<SimulatedDataset> {
    if n < 2 || p == 0 {
        return Err(invalid("n", "need n >= 2 and p >= 1"));
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(invalid("snr", "target must be finite and > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    let z = Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    let noise = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
    let beta = Vector::from_element(p, coef);
    let signal = &x * &beta + &z * &beta;
    let var = math::variance(signal.as_slice());
    if var == 0.0 {
        return Err(CoopError::NoSignal);
    }
    let sigma = math::sqrt(var / snr);
    let y = (&signal + noise * sigma).iter().copied().collect();
    Ok(SimulatedDataset {
        views: vec![x, z],
        y,
        latent: Matrix::zeros(n, 0),
        signal: signal.iter().copied().collect(),
        realized_snr: snr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityConfig {
    pub n: usize,
    pub p: usize,
    pub coef: f64,
    pub snr: f64,
    pub replicates: usize,
    pub rhos: Vec<f64>,
    pub n_lambda: usize,
    pub min_ratio: f64,
    /// Points of the common `ℓ1` grid.
    pub n_grid: usize,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 20,
            coef: 2.0,
            snr: 2.0,
            replicates: 100,
            rhos: vec![0.0, 0.5, 1.0, 2.0],
            n_lambda: 200,
            min_ratio: 1e-3,
            n_grid: 20,
        }
    }
}

/// One regularization path summarized as `(ℓ1 norm, nonzero count)` pairs in path order.
pub type StepPath = Vec<(f64, usize)>;

/// Nonzero count of the last path point whose `ℓ1` norm does not exceed `l1`.
pub fn count_at(path: &StepPath, l1: f64) -> usize {
    path.iter()
        .take_while(|(norm, _)| *norm <= l1)
        .last()
        .map_or(0, |(_, c)| *c)
}

/// Paths of one replicate at every `ρ`.
pub fn sparsity_replicate(config: &SparsityConfig, seed: u64) -> Result<Vec<StepPath>> {
    let sim = gen_linear_two_view(config.n, config.p, config.coef, config.snr, seed)?;
    let ds = sim.to_dataset()?;
    let coop = CoopConfig {
        solver: SolverOptions {
            tol: 1e-9,
            max_sweeps: 100_000,
        },
        ..CoopConfig::default()
    };
    let grid = coop_lambda_grid(&ds, &coop, config.n_lambda, config.min_ratio)?;
    config
        .rhos
        .iter()
        .map(|&rho| {
            let path = coop_direct_fit(&ds, rho, &grid, &coop)?;
            Ok(path.fits.iter().map(|f| (f.l1_norm(), f.nonzero())).collect())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub rho: f64,
    pub l1_norm: f64,
    pub nonzero_count: f64,
}

/// Mean nonzero count at each point of a common `ℓ1` grid, per `ρ`.
///
/// The grid spans `(0, L]` where `L` is the smallest final `ℓ1` norm reached by
/// any path, so every curve is observed over the whole grid.
pub fn sparsity_study(config: &SparsityConfig, seed: u64) -> Result<Vec<SparsityRow>> {
    sparsity_study_with(config, seed, &Sequential)
}

pub fn sparsity_study_with<E: Executor>(config: &SparsityConfig, seed: u64, exec: &E) -> Result<Vec<SparsityRow>> {
    if config.replicates == 0 || config.n_grid == 0 || config.rhos.is_empty() {
        return Err(invalid("replicates", "replicates, grid points and rhos must be non-empty"));
    }
    let reps = exec.map(config.replicates, |r| sparsity_replicate(config, seed + r as u64));
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
    let top = reps
        .iter()
        .flatten()
        .map(|path| path.iter().map(|(l1, _)| *l1).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min);
    let mut rows = Vec::with_capacity(config.rhos.len() * config.n_grid);
    for (k, &rho) in config.rhos.iter().enumerate() {
        for g in 1..=config.n_grid {
            let l1 = top * g as f64 / config.n_grid as f64;
            let total: usize = reps.iter().map(|paths| count_at(&paths[k], l1)).sum();
            rows.push(SparsityRow {
                rho,
                l1_norm: l1,
                nonzero_count: total as f64 / config.replicates as f64,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(t: [f64; 2], sigma: f64, seed: u64) -> FactorSimParams {
        FactorSimParams {
            n: 200,
            p_per_view: vec![10, 10],
            p_u: 3,
            s_u: 1.0,
            t_per_view: t.to_vec(),
            beta_u: vec![2.0, 2.0, 2.0],
            sigma,
            seed,
        }
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (math::mean(a), math::mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        cov / math::sqrt(va * vb)
    }

    #[test]
    fn same_seed_same_draw() {
        let a = gen_factor_dataset(&params([2.0, 2.0], 1.0, 5)).unwrap();
        let b = gen_factor_dataset(&params([2.0, 2.0], 1.0, 5)).unwrap();
        assert_eq!(a, b);
        let c = gen_factor_dataset(&params([2.0, 2.0], 1.0, 6)).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn no_loading_no_cross_view_correlation() {
        let d = gen_factor_dataset(&params([0.0, 0.0], 1.0, 1)).unwrap();
        let bound = 4.0 / math::sqrt(200.0);
        for i in 0..3 {
            let r = corr(d.views[0].column(i).as_slice(), d.views[1].column(i).as_slice());
            assert!(r.abs() < bound);
        }
    }

    #[test]
    fn zero_noise_reproduces_signal() {
        let d = gen_factor_dataset(&params([1.0, 1.0], 0.0, 2)).unwrap();
        assert_eq!(d.y, d.signal);
        assert!(d.realized_snr.is_infinite());
    }

    #[test]
    fn calibration_hits_target_snr() {
        let p = params([2.0, 2.0], 1.0, 3);
        let d = gen_with_snr(&p, 1.0).unwrap();
        assert!((d.realized_snr - 1.0).abs() < 0.1);
    }

    #[test]
    fn calibration_single_factor() {
        let mut p = params([1.0, 1.0], 1.0, 4);
        p.n = 20_000;
        p.beta_u = vec![0.0, 3.0, 0.0];
        let sigma = calibrate_sigma(&p, 2.0).unwrap();
        assert!((sigma - 3.0 / math::sqrt(2.0)).abs() < 0.05);
    }

    #[test]
    fn calibration_scale_equivariance() {
        let p = params([1.0, 1.0], 1.0, 4);
        let mut q = p.clone();
        q.beta_u = p.beta_u.iter().map(|b| 2.0 * b).collect();
        let (a, b) = (calibrate_sigma(&p, 1.5).unwrap(), calibrate_sigma(&q, 1.5).unwrap());
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn no_signal_is_an_error() {
        let mut p = params([1.0, 1.0], 1.0, 4);
        p.beta_u = vec![0.0; 3];
        assert!(matches!(calibrate_sigma(&p, 1.0), Err(CoopError::NoSignal)));
    }

    #[test]
    fn latent_count_must_be_below_view_width() {
        let mut p = params([1.0, 1.0], 1.0, 4);
        p.p_u = 10;
        p.beta_u = vec![1.0; 10];
        assert!(gen_factor_dataset(&p).is_err());
    }

    #[test]
    fn cross_view_correlation_matches_theory() {
        let (tx, tz, su) = (2.0, 1.0, 1.0);
        let expected = tx * tz * su * su / math::sqrt((1.0 + tx * tx * su * su) * (1.0 + tz * tz * su * su));
        let rs: Vec<f64> = (0..50)
            .map(|s| {
                let d = gen_factor_dataset(&params([tx, tz], 1.0, 100 + s)).unwrap();
                corr(d.views[0].column(0).as_slice(), d.views[1].column(0).as_slice())
            })
            .collect();
        let m = math::mean(&rs);
        let se = math::sqrt(math::variance(&rs) * 50.0 / 49.0 / 50.0);
        assert!((m - expected).abs() < 5.0 * se, "{m} vs {expected}");
    }

    #[test]
    fn split_partitions_rows() {
        let d = gen_factor_dataset(&params([1.0, 1.0], 1.0, 9)).unwrap();
        let (a, b) = d.split(150).unwrap();
        assert_eq!(a.y.len(), 150);
        assert_eq!(b.y.len(), 50);
        assert_eq!(b.y[0], d.y[150]);
        assert_eq!(b.views[1][(0, 4)], d.views[1][(150, 4)]);
    }

    #[test]
    fn step_function_lookup() {
        let path = vec![(0.0, 0), (1.0, 2), (2.5, 3), (4.0, 5)];
        assert_eq!(count_at(&path, 0.5), 0);
        assert_eq!(count_at(&path, 2.5), 3);
        assert_eq!(count_at(&path, 10.0), 5);
    }

    #[test]
    fn small_study_is_bounded() {
        let config = SparsityConfig {
            replicates: 3,
            n_lambda: 30,
            ..SparsityConfig::default()
        };
        let rows = sparsity_study(&config, 1).unwrap();
        assert_eq!(rows.len(), 4 * 20);
        assert!(rows.iter().all(|r| r.nonzero_count <= 40.0));
    }
}

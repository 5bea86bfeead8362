//! Cross-validation over `(ρ, λ)` and adaptive cooperative learning.
//!
//! Folds are formed from the rows of the original views. Each training fold is
//! re-standardized from its own raw rows, its augmented system is built from
//! those rows only, and held-out error is the plain prediction loss on the
//! original held-out rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coop::{
    coop_direct_fit, coop_direct_fit_problem, coop_lambda_grid, CoopConfig, CoopFit, CoopPath,
    CoopProblem,
};
use crate::data::{Family, MultiViewDataset};
use crate::error::{invalid, CoopError, Result};
use crate::exec::{Executor, Sequential};
use crate::glm::{coop_logistic_path, logistic_lambda_grid, LogisticOptions};
use crate::math;
use crate::solver::{fit_path_quadratic, grid_from_max, lambda_max, PenaltySpec, QuadraticProblem};
use crate::{Matrix, Vector};

/// Default `ρ` grid.
pub const DEFAULT_RHO_GRID: [f64; 9] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0, 4.0, 8.0];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub k: usize,
    /// Fold id of every row.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

/// Shuffles rows under `seed` and deals them round-robin into `k` folds.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(invalid("k_folds", format!("must be >= 2, got {k}")));
    }
    if k > n {
        return Err(invalid("k_folds", format!("{k} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k;
    }
    Ok(FoldPlan {
        n,
        k,
        assignments,
        seed,
    })
}

impl FoldPlan {
    /// `(training rows, held-out rows)` of fold `f`, each ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.n).partition(|&i| self.assignments[i] != f)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LambdaSpec {
    /// The same explicit grid at every `ρ`.
    Grid(Vec<f64>),
    /// Log-spaced grid from `λ_max`; `min_ratio` defaults to 0.01 when `n < p`, else 1e-4.
    Auto { n_lambda: usize, min_ratio: Option<f64> },
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Auto {
            n_lambda: 50,
            min_ratio: None,
        }
    }
}

pub fn default_min_ratio(n: usize, p: usize) -> f64 {
    if n < p {
        0.01
    } else {
        1e-4
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    #[default]
    Min,
    OneSe,
}

#[derive(Clone, Debug)]
pub struct CvOptions {
    pub rho_grid: Vec<f64>,
    pub lambda: LambdaSpec,
    pub rule: SelectionRule,
    pub config: CoopConfig,
    pub logistic: LogisticOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            rho_grid: DEFAULT_RHO_GRID.to_vec(),
            lambda: LambdaSpec::default(),
            rule: SelectionRule::Min,
            config: CoopConfig::default(),
            logistic: LogisticOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub rho_index: usize,
    pub lambda_index: usize,
    pub rho: f64,
    pub lambda: f64,
    pub cv_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub rho_grid: Vec<f64>,
    /// `lambdas[r]` is the grid used at `rho_grid[r]`.
    pub lambdas: Vec<Vec<f64>>,
    /// Fold-mean held-out error, `mean_error[r][l]`.
    pub mean_error: Vec<Vec<f64>>,
    /// Across-fold standard deviation of the held-out error.
    pub sd_error: Vec<Vec<f64>>,
    pub selected: Selection,
    pub rule: SelectionRule,
    pub folds: FoldPlan,
    pub refit: CoopFit,
    /// Inner fits (fold or refit) that stopped at the sweep limit.
    pub nonconverged: usize,
    /// Penalty factors used at each `ρ` when they differ from all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_factors: Option<Vec<Vec<f64>>>,
}

impl CvResult {
    /// Lowest fold-mean error at each `ρ`.
    pub fn best_per_rho(&self) -> Vec<f64> {
        self.mean_error
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Held-out loss: mean squared error, or mean binomial deviance.
pub fn heldout_error(family: Family, y: &[f64], prediction: &Vector) -> f64 {
    let n = y.len() as f64;
    match family {
        Family::Gaussian => {
            y.iter()
                .zip(prediction.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n
        }
        Family::Binomial => {
            y.iter()
                .zip(prediction.iter())
                .map(|(&t, &p)| {
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    -2.0 * (t * math::ln(p) + (1.0 - t) * math::ln(1.0 - p))
                })
                .sum::<f64>()
                / n
        }
    }
}

struct PreparedFold {
    train: MultiViewDataset,
    problem: Option<CoopProblem>,
    test_views: Vec<Matrix>,
    test_y: Vec<f64>,
}

fn prepare_folds(dataset: &MultiViewDataset, folds: &FoldPlan) -> Result<Vec<PreparedFold>> {
    if folds.n != dataset.n() {
        return Err(CoopError::DimensionMismatch(format!(
            "fold plan covers {} rows, dataset has {}",
            folds.n,
            dataset.n()
        )));
    }
    (0..folds.k)
        .map(|f| {
            let (train_rows, test_rows) = folds.split(f);
            let train = dataset.subset(&train_rows)?;
            let problem = match dataset.family() {
                Family::Gaussian => Some(CoopProblem::from_dataset(&train)?),
                Family::Binomial => None,
            };
            let test_raw: Vec<Matrix> = dataset
                .raw_views()
                .iter()
                .map(|v| v.select_rows(&test_rows).matrix().clone())
                .collect();
            let test_views = train.standardize_new(&test_raw)?;
            let test_y = test_rows.iter().map(|&r| dataset.raw_response()[r]).collect();
            Ok(PreparedFold {
                train,
                problem,
                test_views,
                test_y,
            })
        })
        .collect()
}

fn fit_path(
    dataset: &MultiViewDataset,
    problem: Option<&CoopProblem>,
    rho: f64,
    grid: &[f64],
    config: &CoopConfig,
    logistic: &LogisticOptions,
) -> Result<CoopPath> {
    match (dataset.family(), problem) {
        (Family::Gaussian, Some(p)) => coop_direct_fit_problem(dataset, p, rho, grid, config),
        (Family::Gaussian, None) => coop_direct_fit(dataset, rho, grid, config),
        (Family::Binomial, _) => coop_logistic_path(dataset, rho, grid, config, logistic),
    }
}

fn auto_grid(
    dataset: &MultiViewDataset,
    config: &CoopConfig,
    spec: &LambdaSpec,
) -> Result<Vec<f64>> {
    match spec {
        LambdaSpec::Grid(g) => {
            if g.is_empty() || g.windows(2).any(|w| !(w[1] < w[0])) || g.iter().any(|l| !(*l >= 0.0)) {
                return Err(invalid("lambda", "grid must be non-empty, non-negative and strictly decreasing"));
            }
            Ok(g.clone())
        }
        LambdaSpec::Auto {
            n_lambda,
            min_ratio,
        } => {
            let ratio = min_ratio.unwrap_or_else(|| default_min_ratio(dataset.n(), dataset.total_features()));
            match dataset.family() {
                Family::Gaussian => coop_lambda_grid(dataset, config, *n_lambda, ratio),
                Family::Binomial => logistic_lambda_grid(dataset, config, *n_lambda, ratio),
            }
        }
    }
}

/// One `ρ` of a cross-validation: the grid and configuration to use there.
#[derive(Clone, Debug)]
pub struct CvCell {
    pub rho: f64,
    pub grid: Vec<f64>,
    pub config: CoopConfig,
}

struct CellErrors {
    errors: Vec<f64>,
    nonconverged: usize,
}

fn choose(mean: &[Vec<f64>], sd: &[Vec<f64>], k: usize, rule: SelectionRule) -> (usize, usize) {
    // Strict comparison in (ρ ascending, λ descending) order breaks ties towards
    // smaller ρ, then larger λ.
    let mut best = (0, 0);
    let mut best_err = f64::INFINITY;
    for (r, row) in mean.iter().enumerate() {
        for (l, &e) in row.iter().enumerate() {
            if e < best_err {
                best_err = e;
                best = (r, l);
            }
        }
    }
    if rule == SelectionRule::OneSe {
        let (r, l) = best;
        let threshold = best_err + sd[r][l] / math::sqrt(k as f64);
        let l_se = (0..=l).find(|&i| mean[r][i] <= threshold).unwrap_or(l);
        best = (r, l_se);
    }
    best
}

/// Cross-validates the given cells on shared folds and refits the winner on all rows.
pub fn cv_cells<E: Executor>(
    dataset: &MultiViewDataset,
    cells: &[CvCell],
    folds: &FoldPlan,
    rule: SelectionRule,
    logistic: &LogisticOptions,
    exec: &E,
) -> Result<CvResult> {
    if cells.is_empty() {
        return Err(invalid("rho_grid", "at least one rho is required"));
    }
    for c in cells {
        if !(c.rho >= 0.0 && c.rho.is_finite()) {
            return Err(CoopError::Domain(format!("rho must be finite and >= 0, got {}", c.rho)));
        }
    }
    let prepared = prepare_folds(dataset, folds)?;
    let k = folds.k;
    let family = dataset.family();
    let tasks: Vec<Result<CellErrors>> = exec.map(cells.len() * k, |t| {
        let (c, f) = (t / k, t % k);
        let cell = &cells[c];
        let fold = &prepared[f];
        let path = fit_path(&fold.train, fold.problem.as_ref(), cell.rho, &cell.grid, &cell.config, logistic)?;
        let refs: Vec<&Matrix> = fold.test_views.iter().collect();
        let mut errors = Vec::with_capacity(path.fits.len());
        for fit in &path.fits {
            let pred = fit.predict_standardized(&refs)?;
            errors.push(heldout_error(family, &fold.test_y, &pred));
        }
        let nonconverged = path.fits.iter().filter(|f| !f.converged).count();
        Ok(CellErrors {
            errors,
            nonconverged,
        })
    });
    let tasks = tasks.into_iter().collect::<Result<Vec<_>>>()?;

    let mut mean_error = Vec::with_capacity(cells.len());
    let mut sd_error = Vec::with_capacity(cells.len());
    let mut nonconverged = 0;
    for (c, cell) in cells.iter().enumerate() {
        let per_fold = &tasks[c * k..(c + 1) * k];
        nonconverged += per_fold.iter().map(|t| t.nonconverged).sum::<usize>();
        let mut means = Vec::with_capacity(cell.grid.len());
        let mut sds = Vec::with_capacity(cell.grid.len());
        for l in 0..cell.grid.len() {
            let vals: Vec<f64> = per_fold.iter().map(|t| t.errors[l]).collect();
            let m = math::mean(&vals);
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k as f64 - 1.0);
            means.push(m);
            sds.push(math::sqrt(var));
        }
        mean_error.push(means);
        sd_error.push(sds);
    }
    if mean_error.iter().flatten().any(|e| !e.is_finite()) {
        return Err(CoopError::NonFinite("cross-validation error".into()));
    }
    let (r, l) = choose(&mean_error, &sd_error, k, rule);
    let cell = &cells[r];
    let refit_path = fit_path(dataset, None, cell.rho, &cell.grid[..=l], &cell.config, logistic)?;
    let refit = refit_path.fits.into_iter().last().expect("non-empty grid");
    if !refit.converged {
        nonconverged += 1;
    }
    let selected = Selection {
        rho_index: r,
        lambda_index: l,
        rho: cell.rho,
        lambda: cell.grid[l],
        cv_error: mean_error[r][l],
    };
    let uniform = cells
        .iter()
        .all(|c| c.config.penalty_factors.as_ref().map_or(true, |pf| pf.iter().all(|v| *v == 1.0)));
    Ok(CvResult {
        rho_grid: cells.iter().map(|c| c.rho).collect(),
        lambdas: cells.iter().map(|c| c.grid.clone()).collect(),
        mean_error,
        sd_error,
        selected,
        rule,
        folds: folds.clone(),
        refit,
        nonconverged,
        penalty_factors: if uniform {
            None
        } else {
            Some(
                cells
                    .iter()
                    .map(|c| c.config.penalty(dataset.total_features()).map(|s| s.penalty_factors))
                    .collect::<Result<Vec<_>>>()?,
            )
        },
    })
}

/// Cooperative learning with `(ρ, λ)` chosen by cross-validation.
pub fn cv_coop(dataset: &MultiViewDataset, options: &CvOptions, folds: &FoldPlan) -> Result<CvResult> {
    cv_coop_with(dataset, options, folds, &Sequential)
}

pub fn cv_coop_with<E: Executor>(
    dataset: &MultiViewDataset,
    options: &CvOptions,
    folds: &FoldPlan,
    exec: &E,
) -> Result<CvResult> {
    let cells = options
        .rho_grid
        .iter()
        .map(|&rho| {
            Ok(CvCell {
                rho,
                grid: auto_grid(dataset, &options.config, &options.lambda)?,
                config: options.config.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    cv_cells(dataset, &cells, folds, options.rule, &options.logistic, exec)
}

/// Order in which Algorithm 3 visits the two views.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// First view, then second.
    XZ,
    /// Second view, then first.
    ZX,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub lambda_x_star: f64,
    pub lambda_z_star: f64,
    /// Sum of the two views' minimum CV errors in the final iteration.
    pub cv_error_sum: f64,
    pub orientation: Orientation,
    pub iterations: usize,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveOptions {
    pub n_lambda: usize,
    pub min_ratio: Option<f64>,
    /// Relative change of the objective that ends the alternation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            n_lambda: 50,
            min_ratio: None,
            tol: 1e-5,
            max_iter: 20,
        }
    }
}

/// Per-fold centered Gram matrices of one standardized view, reused for every target.
struct BlockCv<'a> {
    x: &'a Matrix,
    folds: Vec<BlockFold>,
    full_gram: Matrix,
}

struct BlockFold {
    train: Vec<usize>,
    test: Vec<usize>,
    gram: Matrix,
    x_test: Matrix,
    x_train: Matrix,
}

struct BlockCvOutcome {
    lambda_star: f64,
    cv_error: f64,
    beta: Vector,
}

impl<'a> BlockCv<'a> {
    fn new(x: &'a Matrix, plan: &FoldPlan) -> Self {
        let folds = (0..plan.k)
            .map(|f| {
                let (train, test) = plan.split(f);
                let xt = x.select_rows(&train);
                let means = Vector::from_fn(x.ncols(), |j, _| xt.column(j).mean());
                let mut xc = xt;
                for (j, mut col) in xc.column_iter_mut().enumerate() {
                    col.add_scalar_mut(-means[j]);
                }
                let mut x_test = x.select_rows(&test);
                for (j, mut col) in x_test.column_iter_mut().enumerate() {
                    col.add_scalar_mut(-means[j]);
                }
                BlockFold {
                    gram: xc.tr_mul(&xc),
                    x_train: xc,
                    x_test,
                    train,
                    test,
                }
            })
            .collect();
        Self {
            x,
            folds,
            full_gram: x.tr_mul(x),
        }
    }

    /// CV lasso of `target` on the view; returns the minimizing `λ` and the full-data fit there.
    fn run(&self, target: &Vector, options: &AdaptiveOptions) -> Result<BlockCvOutcome> {
        let n = self.x.nrows();
        let p = self.x.ncols();
        let spec = PenaltySpec::uniform(0.0, 1.0, p);
        let tmean = target.mean();
        let centered = target.add_scalar(-tmean);
        let full = QuadraticProblem {
            gram: self.full_gram.clone(),
            xty: self.x.tr_mul(&centered),
            yty: centered.norm_squared(),
        };
        let lmax = lambda_max(&full, 1.0, &spec.penalty_factors)?;
        let ratio = options.min_ratio.unwrap_or_else(|| default_min_ratio(n, p));
        let grid = match grid_from_max(lmax, options.n_lambda, ratio) {
            Ok(g) => g,
            // A target with no linear signal: nothing to select.
            Err(CoopError::DegenerateResponse) => {
                return Ok(BlockCvOutcome {
                    lambda_star: f64::INFINITY,
                    cv_error: centered.norm_squared() / n as f64,
                    beta: Vector::zeros(p),
                })
            }
            Err(e) => return Err(e),
        };
        let mut sums = vec![0.0; grid.len()];
        for fold in &self.folds {
            let t_train = Vector::from_iterator(fold.train.len(), fold.train.iter().map(|&i| target[i]));
            let tm = t_train.mean();
            let tc = t_train.add_scalar(-tm);
            let problem = QuadraticProblem {
                gram: fold.gram.clone(),
                xty: fold.x_train.tr_mul(&tc),
                yty: tc.norm_squared(),
            };
            let path = fit_path_quadratic(&problem, &spec, &grid, &Default::default())?;
            for (l, c) in path.coefs.iter().enumerate() {
                let pred = (&fold.x_test * &c.beta).add_scalar(tm);
                let err: f64 = fold
                    .test
                    .iter()
                    .zip(pred.iter())
                    .map(|(&i, p)| (target[i] - p) * (target[i] - p))
                    .sum();
                sums[l] += err / fold.test.len() as f64;
            }
        }
        let k = self.folds.len() as f64;
        let (mut best, mut best_err) = (0, f64::INFINITY);
        for (l, s) in sums.iter().enumerate() {
            if s / k < best_err {
                best_err = s / k;
                best = l;
            }
        }
        let path = fit_path_quadratic(&full, &spec, &grid[..=best], &Default::default())?;
        Ok(BlockCvOutcome {
            lambda_star: grid[best],
            cv_error: best_err,
            beta: path.coefs.last().expect("non-empty").beta.clone(),
        })
    }
}

fn require_two_views(dataset: &MultiViewDataset) -> Result<()> {
    if dataset.n_views() != 2 {
        return Err(CoopError::Unsupported(format!(
            "adaptive cooperative learning needs exactly two views, got {}",
            dataset.n_views()
        )));
    }
    if dataset.family() != Family::Gaussian {
        return Err(CoopError::Unsupported("adaptive cooperative learning is gaussian only".into()));
    }
    Ok(())
}

/// Algorithm 3: alternating CV-tuned lasso fits of each view on its
/// penalty-adjusted partial residual, starting from `θ = 0`.
pub fn adaptive_one_at_a_time(
    dataset: &MultiViewDataset,
    rho: f64,
    folds: &FoldPlan,
    orientation: Orientation,
    options: &AdaptiveOptions,
) -> Result<AdaptiveState> {
    require_two_views(dataset)?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(CoopError::Domain(format!("rho must be finite and >= 0, got {rho}")));
    }
    if folds.n != dataset.n() {
        return Err(CoopError::DimensionMismatch("fold plan does not match the dataset".into()));
    }
    let views = dataset.view_matrices();
    let y = &dataset.response().values;
    let blocks = [BlockCv::new(views[0], folds), BlockCv::new(views[1], folds)];
    let order = match orientation {
        Orientation::XZ => [0, 1],
        Orientation::ZX => [1, 0],
    };
    let mut fitted = [Vector::zeros(y.len()), Vector::zeros(y.len())];
    let mut lambdas = [f64::INFINITY; 2];
    let mut errors = [0.0; 2];
    let mut l1 = [0.0; 2];
    let mut objective = f64::INFINITY;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        for &m in &order {
            let other = &fitted[1 - m];
            let target = (y - other * (1.0 - rho)) / (1.0 + rho);
            let out = blocks[m].run(&target, options)?;
            fitted[m] = views[m] * &out.beta;
            lambdas[m] = out.lambda_star;
            errors[m] = out.cv_error;
            l1[m] = out.beta.iter().map(|b| b.abs()).sum();
        }
        let pen: f64 = (0..2)
            .map(|m| if lambdas[m].is_finite() { lambdas[m] * l1[m] } else { 0.0 })
            .sum();
        let next = 0.5 * (y - &fitted[0] - &fitted[1]).norm_squared()
            + 0.5 * rho * (&fitted[0] - &fitted[1]).norm_squared()
            + (1.0 + rho) * pen;
        let done = (objective - next).abs() < options.tol * next.abs().max(f64::MIN_POSITIVE);
        objective = next;
        if done {
            break;
        }
    }
    Ok(AdaptiveState {
        lambda_x_star: lambdas[0],
        lambda_z_star: lambdas[1],
        cv_error_sum: errors[0] + errors[1],
        orientation,
        iterations,
        rho,
    })
}

/// Penalty-factor ratio `λ_z*/λ_x*`, clamped to `[1e-6, 1e6]`. Returns the ratio
/// and whether clamping was needed.
pub fn penalty_ratio(state: &AdaptiveState) -> (f64, bool) {
    let (lx, lz) = (state.lambda_x_star, state.lambda_z_star);
    let raw = if lx.is_infinite() && lz.is_infinite() {
        1.0
    } else if lx.is_infinite() || lx <= 0.0 {
        1e-6
    } else {
        lz / lx
    };
    let clamped = raw.clamp(1e-6, 1e6);
    (clamped, clamped != raw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveCvResult {
    pub cv: CvResult,
    /// The orientation kept at each `ρ`.
    pub states: Vec<AdaptiveState>,
    pub ratios: Vec<f64>,
    /// `ρ` values at which the ratio was clamped.
    pub clamped: Vec<f64>,
}

/// Algorithm 4: per `ρ`, both orientations of Algorithm 3 on identical folds,
/// the one with the lower CV-error sum sets the penalty factor of the second
/// view, and `(ρ, λ)` is chosen by cross-validation of the direct fit.
pub fn adaptive_direct(
    dataset: &MultiViewDataset,
    options: &CvOptions,
    adaptive: &AdaptiveOptions,
    folds: &FoldPlan,
) -> Result<AdaptiveCvResult> {
    adaptive_direct_with(dataset, options, adaptive, folds, &Sequential)
}

pub fn adaptive_direct_with<E: Executor>(
    dataset: &MultiViewDataset,
    options: &CvOptions,
    adaptive: &AdaptiveOptions,
    folds: &FoldPlan,
    exec: &E,
) -> Result<AdaptiveCvResult> {
    require_two_views(dataset)?;
    let widths = dataset.view_widths();
    let states: Vec<Result<AdaptiveState>> = exec.map(options.rho_grid.len(), |r| {
        let rho = options.rho_grid[r];
        let a = adaptive_one_at_a_time(dataset, rho, folds, Orientation::XZ, adaptive)?;
        let b = adaptive_one_at_a_time(dataset, rho, folds, Orientation::ZX, adaptive)?;
        Ok(if b.cv_error_sum < a.cv_error_sum { b } else { a })
    });
    let states = states.into_iter().collect::<Result<Vec<_>>>()?;
    let mut ratios = Vec::with_capacity(states.len());
    let mut clamped = Vec::new();
    let mut cells = Vec::with_capacity(states.len());
    for state in &states {
        let (ratio, was_clamped) = penalty_ratio(state);
        if was_clamped {
            clamped.push(state.rho);
        }
        ratios.push(ratio);
        let base = options.config.penalty(dataset.total_features())?.penalty_factors;
        let pf: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(j, b)| if j < widths[0] { *b } else { b * ratio })
            .collect();
        let config = CoopConfig {
            penalty_factors: Some(pf),
            ..options.config.clone()
        };
        let grid = auto_grid(dataset, &config, &options.lambda)?;
        cells.push(CvCell {
            rho: state.rho,
            grid,
            config,
        });
    }
    let cv = cv_cells(dataset, &cells, folds, options.rule, &options.logistic, exec)?;
    Ok(AdaptiveCvResult {
        cv,
        states,
        ratios,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coop::coop_direct_fit_at;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn normal(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
        Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    fn signal_dataset(seed: u64, n: usize, px: usize, pz: usize, z_signal: f64) -> MultiViewDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal(&mut rng, n, px);
        let z = normal(&mut rng, n, pz);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                2.0 * x[(i, 0)] - 1.5 * x[(i, 1)] + z_signal * z[(i, 0)]
                    + rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        MultiViewDataset::from_matrices(vec![x, z], &y, Family::Gaussian).unwrap()
    }

    #[test]
    fn leave_one_out_folds() {
        let plan = make_folds(10, 10, 3).unwrap();
        assert_eq!(plan.sizes(), vec![1; 10]);
    }

    #[test]
    fn balanced_folds() {
        let plan = make_folds(10, 3, 3).unwrap();
        let mut sizes = plan.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
    }

    #[test]
    fn folds_are_seeded() {
        assert_eq!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 9).unwrap());
        assert_ne!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 10).unwrap());
    }

    #[test]
    fn too_many_folds() {
        assert!(make_folds(3, 4, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    #[test]
    fn loo_errors_match_hand_loop() {
        let ds = signal_dataset(1, 4, 2, 2, 0.5);
        let folds = make_folds(4, 4, 0).unwrap();
        let options = CvOptions {
            rho_grid: vec![0.5],
            lambda: LambdaSpec::Grid(vec![1.0, 0.3]),
            ..CvOptions::default()
        };
        let cv = cv_coop(&ds, &options, &folds).unwrap();
        for (l, &lambda) in [1.0, 0.3].iter().enumerate() {
            let mut errs = vec![];
            for i in 0..4 {
                let rows: Vec<usize> = (0..4).filter(|&r| r != i).collect();
                let train = ds.subset(&rows).unwrap();
                let fit = coop_direct_fit_at(&train, 0.5, lambda, &CoopConfig::default()).unwrap();
                let test: Vec<Matrix> = ds
                    .raw_views()
                    .iter()
                    .map(|v| v.matrix().rows(i, 1).into_owned())
                    .collect();
                let pred = fit.predict(&test).unwrap()[0];
                errs.push((ds.raw_response()[i] - pred).powi(2));
            }
            let mean = errs.iter().sum::<f64>() / 4.0;
            assert!((cv.mean_error[0][l] - mean).abs() < 1e-6 * (1.0 + mean));
        }
    }

    #[test]
    fn selection_attains_minimum() {
        let ds = signal_dataset(2, 60, 5, 5, 1.0);
        let folds = make_folds(60, 5, 1).unwrap();
        let options = CvOptions {
            rho_grid: vec![0.0, 0.5, 1.0],
            lambda: LambdaSpec::Auto { n_lambda: 15, min_ratio: Some(0.01) },
            ..CvOptions::default()
        };
        let cv = cv_coop(&ds, &options, &folds).unwrap();
        let min = cv.mean_error.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(cv.selected.cv_error, min);
        assert_eq!(cv.refit.rho, cv.selected.rho);
        assert_eq!(cv.refit.lambda, cv.selected.lambda);
        let again = cv_coop(&ds, &options, &folds).unwrap();
        assert_eq!(cv.selected, again.selected);
    }

    #[test]
    fn one_se_prefers_larger_lambda() {
        let ds = signal_dataset(3, 60, 5, 5, 1.0);
        let folds = make_folds(60, 5, 1).unwrap();
        let mut options = CvOptions {
            rho_grid: vec![0.5],
            lambda: LambdaSpec::Auto { n_lambda: 20, min_ratio: Some(0.01) },
            ..CvOptions::default()
        };
        let min = cv_coop(&ds, &options, &folds).unwrap();
        options.rule = SelectionRule::OneSe;
        let se = cv_coop(&ds, &options, &folds).unwrap();
        assert!(se.selected.lambda >= min.selected.lambda);
        let r = &se.mean_error[0];
        let l = min.selected.lambda_index;
        assert!(r[se.selected.lambda_index] <= r[l] + se.sd_error[0][l] / 5f64.sqrt());
    }

    #[test]
    fn heldout_rows_do_not_touch_training_fit() {
        let ds = signal_dataset(4, 30, 3, 3, 1.0);
        let folds = make_folds(30, 3, 5).unwrap();
        let (train_rows, test_rows) = folds.split(0);
        let mut views: Vec<Matrix> = ds.raw_views().iter().map(|v| v.matrix().clone()).collect();
        views[0][(test_rows[0], 0)] += 100.0;
        let mut y = ds.raw_response().to_vec();
        y[test_rows[0]] -= 50.0;
        let perturbed = MultiViewDataset::from_matrices(views, &y, Family::Gaussian).unwrap();
        let a = prepare_folds(&ds, &folds).unwrap();
        let b = prepare_folds(&perturbed, &folds).unwrap();
        assert_eq!(a[0].train.view_matrices(), b[0].train.view_matrices());
        assert_eq!(a[0].problem.as_ref().unwrap().xty, b[0].problem.as_ref().unwrap().xty);
        assert_eq!(train_rows.len(), 20);
    }

    #[test]
    fn single_rho_zero_is_lasso_cv() {
        let ds = signal_dataset(5, 40, 4, 4, 0.0);
        let folds = make_folds(40, 4, 2).unwrap();
        let options = CvOptions {
            rho_grid: vec![0.0],
            lambda: LambdaSpec::Auto { n_lambda: 10, min_ratio: Some(0.05) },
            ..CvOptions::default()
        };
        let cv = cv_coop(&ds, &options, &folds).unwrap();
        // One view holding the concatenation is plain lasso.
        let cat = MultiViewDataset::from_matrices(
            vec![crate::data::hstack(&ds.raw_views().iter().map(|v| v.matrix()).collect::<Vec<_>>())],
            ds.raw_response(),
            Family::Gaussian,
        )
        .unwrap();
        let lasso = cv_coop(&cat, &options, &folds).unwrap();
        for (a, b) in cv.mean_error[0].iter().zip(&lasso.mean_error[0]) {
            assert!((a - b).abs() < 1e-8 * (1.0 + a));
        }
    }

    #[test]
    fn rho_one_block_targets_are_halves() {
        let ds = signal_dataset(6, 50, 4, 4, 1.0);
        let folds = make_folds(50, 5, 7).unwrap();
        let opts = AdaptiveOptions::default();
        let state = adaptive_one_at_a_time(&ds, 1.0, &folds, Orientation::XZ, &opts).unwrap();
        let views = ds.view_matrices();
        let half = &ds.response().values / 2.0;
        for (m, lam) in [state.lambda_x_star, state.lambda_z_star].iter().enumerate() {
            let direct = BlockCv::new(views[m], &folds).run(&half, &opts).unwrap();
            assert_eq!(direct.lambda_star, *lam);
        }
        assert!(state.iterations <= 2);
    }

    #[test]
    fn noise_view_gets_large_penalty() {
        let ds = signal_dataset(7, 100, 10, 10, 0.0);
        let folds = make_folds(100, 5, 8).unwrap();
        let state = adaptive_one_at_a_time(&ds, 0.5, &folds, Orientation::XZ, &AdaptiveOptions::default()).unwrap();
        assert!(state.lambda_z_star > state.lambda_x_star);
    }

    #[test]
    fn adaptive_rejects_three_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let views = vec![normal(&mut rng, 10, 2), normal(&mut rng, 10, 2), normal(&mut rng, 10, 2)];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = MultiViewDataset::from_matrices(views, &y, Family::Gaussian).unwrap();
        let folds = make_folds(10, 2, 0).unwrap();
        assert!(matches!(
            adaptive_one_at_a_time(&ds, 0.5, &folds, Orientation::XZ, &AdaptiveOptions::default()),
            Err(CoopError::Unsupported(_))
        ));
    }

    #[test]
    fn ratio_is_clamped() {
        let mut s = AdaptiveState {
            lambda_x_star: 1e-9,
            lambda_z_star: 1.0,
            cv_error_sum: 0.0,
            orientation: Orientation::XZ,
            iterations: 1,
            rho: 0.0,
        };
        assert_eq!(penalty_ratio(&s), (1e6, true));
        s.lambda_x_star = 2.0;
        assert_eq!(penalty_ratio(&s), (0.5, false));
    }

    #[test]
    fn identical_views_give_unit_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = normal(&mut rng, 60, 5);
        let y: Vec<f64> = (0..60).map(|i| x[(i, 0)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let ds = MultiViewDataset::from_matrices(vec![x.clone(), x], &y, Family::Gaussian).unwrap();
        let folds = make_folds(60, 5, 3).unwrap();
        let options = CvOptions {
            rho_grid: vec![0.5, 1.0],
            lambda: LambdaSpec::Auto { n_lambda: 10, min_ratio: Some(0.01) },
            ..CvOptions::default()
        };
        let res = adaptive_direct(&ds, &options, &AdaptiveOptions::default(), &folds).unwrap();
        // At rho = 1 the two targets coincide, so the chosen lambdas do too.
        assert!((res.ratios[1] - 1.0).abs() < 1e-12);
    }
}

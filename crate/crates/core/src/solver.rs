//! Cyclic coordinate descent for the elastic net with per-feature penalty factors.
//!
//! Minimizes
//!
//! ```text
//! (1/2)‖y − Xβ‖² + λ Σ_j pf_j [α|β_j| + (1−α)β_j²/2]
//! ```
//!
//! The loss is not divided by `n`. The solver works on the Gram form
//! `(XᵀX, Xᵀy, yᵀy)` and keeps the gradient `Xᵀ(y − Xβ)` up to date after each
//! coordinate move ("covariance updates"), so a coordinate that stays at zero
//! costs O(1). Columns are used as given; standardization is the caller's job.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, CoopError, Result};
use crate::math;
use crate::{Matrix, Vector};

/// Smallest mixing weight used when computing `λ_max` (pure ridge has no finite `λ_max`).
pub const ALPHA_FLOOR: f64 = 1e-3;

/// `sign(z) · max(|z| − gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0, "soft threshold needs gamma >= 0");
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Regularization strength, ℓ1/ℓ2 mix and per-feature penalty factors.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltySpec {
    pub lambda: f64,
    /// 1 is the lasso, 0 is ridge.
    pub alpha_mix: f64,
    pub penalty_factors: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(lambda: f64, alpha_mix: f64, penalty_factors: Vec<f64>) -> Result<Self> {
        let spec = Self {
            lambda,
            alpha_mix,
            penalty_factors,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Penalty factor 1 on all `p` features.
    pub fn uniform(lambda: f64, alpha_mix: f64, p: usize) -> Self {
        Self {
            lambda,
            alpha_mix,
            penalty_factors: vec![1.0; p],
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha_mix) {
            return Err(invalid("alpha_mix", format!("must lie in [0, 1], got {}", self.alpha_mix)));
        }
        if let Some(pf) = self
            .penalty_factors
            .iter()
            .find(|f| !(f.is_finite() && **f >= 0.0))
        {
            return Err(invalid("penalty_factors", format!("must be finite and >= 0, got {pf}")));
        }
        Ok(())
    }

    /// `λ Σ_j pf_j [α|β_j| + (1−α)β_j²/2]`.
    pub fn value(&self, beta: &[f64]) -> f64 {
        let a = self.alpha_mix;
        self.lambda
            * beta
                .iter()
                .zip(&self.penalty_factors)
                .map(|(b, pf)| pf * (a * b.abs() + (1.0 - a) * b * b / 2.0))
                .sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once the largest coefficient move in a sweep is below `tol · (1 + max|β|)`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

/// Solution at one `λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefs {
    pub beta: Vector,
    pub n_iter: usize,
    pub converged: bool,
    pub objective: f64,
}

impl Coefs {
    pub fn nonzero(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

/// Warm-started solutions along a decreasing `λ` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PathResult {
    pub lambdas: Vec<f64>,
    pub coefs: Vec<Coefs>,
    pub df: Vec<usize>,
}

/// The quadratic form `(1/2)‖y − Xβ‖²` stored as `(XᵀX, Xᵀy, yᵀy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    pub gram: Matrix,
    pub xty: Vector,
    pub yty: f64,
}

impl QuadraticProblem {
    pub fn from_data(x: &Matrix, y: &Vector) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(CoopError::DimensionMismatch(format!(
                "X has {} rows, y has {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(CoopError::NonFinite("design or response".into()));
        }
        Ok(Self {
            gram: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.dot(y),
        })
    }

    pub fn p(&self) -> usize {
        self.xty.len()
    }

    /// `Xᵀ(y − Xβ)`.
    pub fn gradient(&self, beta: &Vector) -> Vector {
        &self.xty - &self.gram * beta
    }

    /// `(1/2)‖y − Xβ‖²` from the Gram form.
    pub fn loss(&self, beta: &Vector) -> f64 {
        let grad = self.gradient(beta);
        0.5 * (self.yty - beta.dot(&self.xty) - beta.dot(&grad)).max(0.0)
    }

    pub fn objective(&self, beta: &Vector, spec: &PenaltySpec) -> f64 {
        self.loss(beta) + spec.value(beta.as_slice())
    }
}

fn check_spec(problem: &QuadraticProblem, spec: &PenaltySpec) -> Result<()> {
    spec.validate()?;
    if spec.penalty_factors.len() != problem.p() {
        return Err(CoopError::DimensionMismatch(format!(
            "{} penalty factors for {} features",
            spec.penalty_factors.len(),
            problem.p()
        )));
    }
    Ok(())
}

/// Coordinate descent on the Gram form.
pub fn solve_quadratic(
    problem: &QuadraticProblem,
    spec: &PenaltySpec,
    warm: Option<&Vector>,
    options: &SolverOptions,
) -> Result<Coefs> {
    check_spec(problem, spec)?;
    if !(options.tol > 0.0) {
        return Err(invalid("tol", "must be > 0"));
    }
    let p = problem.p();
    let mut beta = match warm {
        Some(w) if w.len() == p => w.clone(),
        Some(w) => {
            return Err(CoopError::DimensionMismatch(format!(
                "warm start has {} entries for {} features",
                w.len(),
                p
            )))
        }
        None => Vector::zeros(p),
    };
    let mut grad = problem.gradient(&beta);
    let gram = &problem.gram;
    let (lambda, a) = (spec.lambda, spec.alpha_mix);

    let mut converged = false;
    let mut sweeps = 0;
    #[cfg(debug_assertions)]
    let mut last_objective = f64::INFINITY;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let gjj = gram[(j, j)];
            let pf = spec.penalty_factors[j];
            let l1 = lambda * pf * a;
            let l2 = lambda * pf * (1.0 - a);
            let denom = gjj + l2;
            let old = beta[j];
            let new = if denom > 0.0 {
                soft_threshold(grad[j] + gjj * old, l1) / denom
            } else {
                0.0
            };
            if new != old {
                let delta = new - old;
                grad.axpy(-delta, &gram.column(j), 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        #[cfg(debug_assertions)]
        {
            let obj = objective_from_gradient(problem, &beta, &grad, spec);
            debug_assert!(
                obj <= last_objective + 1e-9 * (1.0 + last_objective.abs()),
                "coordinate descent objective increased: {last_objective} -> {obj}"
            );
            last_objective = obj;
        }
        let scale = 1.0 + beta.amax();
        if max_change < options.tol * scale {
            converged = true;
            break;
        }
    }
    let objective = objective_from_gradient(problem, &beta, &grad, spec);
    Ok(Coefs {
        beta,
        n_iter: sweeps,
        converged,
        objective,
    })
}

fn objective_from_gradient(
    problem: &QuadraticProblem,
    beta: &Vector,
    grad: &Vector,
    spec: &PenaltySpec,
) -> f64 {
    let rss = (problem.yty - beta.dot(&problem.xty) - beta.dot(grad)).max(0.0);
    0.5 * rss + spec.value(beta.as_slice())
}

/// Elastic net on raw data: the `Lasso(X, y, λ)` primitive.
pub fn coordinate_descent(
    x: &Matrix,
    y: &Vector,
    spec: &PenaltySpec,
    warm: Option<&Coefs>,
    options: &SolverOptions,
) -> Result<Coefs> {
    let problem = QuadraticProblem::from_data(x, y)?;
    solve_quadratic(&problem, spec, warm.map(|c| &c.beta), options)
}

/// Largest violation of the optimality conditions at `beta`.
///
/// For `β_j ≠ 0` this is `|g_j − λ pf_j (1−α) β_j − λ pf_j α sign(β_j)|`, for
/// `β_j = 0` it is `max(0, |g_j| − λ pf_j α)`, with `g = Xᵀ(y − Xβ)`.
pub fn kkt_violation(problem: &QuadraticProblem, spec: &PenaltySpec, beta: &Vector) -> f64 {
    let grad = problem.gradient(beta);
    let (lambda, a) = (spec.lambda, spec.alpha_mix);
    (0..problem.p())
        .map(|j| {
            let pf = spec.penalty_factors[j];
            let l1 = lambda * pf * a;
            let l2 = lambda * pf * (1.0 - a);
            let b = beta[j];
            if b != 0.0 {
                (grad[j] - l2 * b - l1 * b.signum()).abs()
            } else {
                (grad[j].abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest `λ` at which every penalized coefficient is zero.
///
/// Unpenalized features (`pf_j = 0`) are fitted first and `λ_max` is read off
/// the gradient at that partial fit.
pub fn lambda_max(problem: &QuadraticProblem, alpha_mix: f64, penalty_factors: &[f64]) -> Result<f64> {
    let spec = PenaltySpec::new(0.0, alpha_mix, penalty_factors.to_vec())?;
    check_spec(problem, &spec)?;
    let free: Vec<usize> = (0..problem.p())
        .filter(|&j| penalty_factors[j] == 0.0)
        .collect();
    let grad = if free.is_empty() {
        problem.xty.clone()
    } else {
        let sub = QuadraticProblem {
            gram: problem.gram.select_rows(&free).select_columns(&free),
            xty: problem.xty.select_rows(&free),
            yty: problem.yty,
        };
        let fit = solve_quadratic(
            &sub,
            &PenaltySpec::uniform(0.0, 1.0, free.len()),
            None,
            &SolverOptions {
                tol: 1e-12,
                max_sweeps: 100_000,
            },
        )?;
        let mut beta = Vector::zeros(problem.p());
        for (k, &j) in free.iter().enumerate() {
            beta[j] = fit.beta[k];
        }
        problem.gradient(&beta)
    };
    let a = alpha_mix.max(ALPHA_FLOOR);
    let lmax = (0..problem.p())
        .filter(|&j| penalty_factors[j] > 0.0)
        .map(|j| grad[j].abs() / (a * penalty_factors[j]))
        .fold(0.0, f64::max);
    // Nudged up so the all-zero solution survives rounding in the threshold test.
    Ok(lmax * (1.0 + 1e-12))
}

/// Log-spaced grid from `lambda_max` down to `lambda_max · min_ratio`.
pub fn grid_from_max(lambda_max: f64, n_lambda: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(invalid("n_lambda", format!("must be >= 2, got {n_lambda}")));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(invalid("min_ratio", format!("must lie in (0, 1), got {min_ratio}")));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(CoopError::DegenerateResponse);
    }
    let log_max = math::ln(lambda_max);
    let step = math::ln(min_ratio) / (n_lambda - 1) as f64;
    let mut grid: Vec<f64> = (0..n_lambda)
        .map(|k| math::exp(log_max + step * k as f64))
        .collect();
    grid[0] = lambda_max;
    grid[n_lambda - 1] = lambda_max * min_ratio;
    Ok(grid)
}

/// Decreasing `λ` grid for `(X, y)` under the given mix and penalty factors.
pub fn lambda_grid(
    x: &Matrix,
    y: &Vector,
    alpha_mix: f64,
    penalty_factors: &[f64],
    n_lambda: usize,
    min_ratio: f64,
) -> Result<Vec<f64>> {
    let problem = QuadraticProblem::from_data(x, y)?;
    let lmax = lambda_max(&problem, alpha_mix, penalty_factors)?;
    grid_from_max(lmax, n_lambda, min_ratio)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty lambda grid"));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("grid", "lambda grid must be strictly decreasing"));
    }
    Ok(())
}

/// Warm-started path on the Gram form. `spec.lambda` is ignored.
pub fn fit_path_quadratic(
    problem: &QuadraticProblem,
    spec: &PenaltySpec,
    grid: &[f64],
    options: &SolverOptions,
) -> Result<PathResult> {
    check_grid(grid)?;
    let mut coefs: Vec<Coefs> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let warm = coefs.last().map(|c| &c.beta);
        coefs.push(solve_quadratic(problem, &spec.with_lambda(lambda), warm, options)?);
    }
    let df = coefs.iter().map(Coefs::nonzero).collect();
    Ok(PathResult {
        lambdas: grid.to_vec(),
        coefs,
        df,
    })
}

pub fn fit_path(
    x: &Matrix,
    y: &Vector,
    spec: &PenaltySpec,
    grid: &[f64],
    options: &SolverOptions,
) -> Result<PathResult> {
    let problem = QuadraticProblem::from_data(x, y)?;
    fit_path_quadratic(&problem, spec, grid, options)
}

//! Cooperative fits: the direct algorithm on the augmented system, the
//! one-at-a-time algorithm over pluggable per-view fitters, and prediction.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::augmented::{
    agreement, augmented_gram, coop_objective_with_pairs, spans_for, split_by_spans, BlockSpan,
    PairSpec,
};
use crate::data::{apply_standardization, hstack, Family, MultiViewDataset};
use crate::error::{invalid, CoopError, Result};
use crate::math;
use crate::solver::{
    fit_path_quadratic, grid_from_max, lambda_max, solve_quadratic, PenaltySpec, QuadraticProblem,
    SolverOptions,
};
use crate::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Direct,
    OneAtATime,
    LateFusion,
}

/// Coefficients of one view on the standardized scale, with the statistics
/// needed to standardize new rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewCoefficients {
    pub name: String,
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoopFit {
    pub views: Vec<ViewCoefficients>,
    pub rho: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// Response mean for the gaussian family, fitted intercept for binomial.
    pub intercept: f64,
    pub objective: f64,
    pub family: Family,
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PairSpec>,
}

impl CoopFit {
    /// Assembles a fit over `dataset` from per-view coefficient vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn from_thetas(
        dataset: &MultiViewDataset,
        thetas: &[Vector],
        rho: f64,
        lambda: f64,
        alpha: f64,
        intercept: f64,
        objective: f64,
        algorithm: Algorithm,
    ) -> Self {
        let views = dataset
            .views()
            .iter()
            .zip(dataset.raw_views())
            .zip(thetas)
            .map(|((sv, raw), t)| ViewCoefficients {
                name: sv.source_name.clone(),
                coefficients: t.iter().copied().collect(),
                column_names: raw.column_names().to_vec(),
                column_means: sv.column_means.clone(),
                column_sds: sv.column_sds.clone(),
            })
            .collect();
        Self {
            views,
            rho,
            lambda,
            alpha,
            intercept,
            objective,
            family: dataset.family(),
            algorithm,
            iterations: 1,
            converged: true,
            view_lambdas: None,
            pairs: None,
        }
    }

    pub fn thetas(&self) -> Vec<Vector> {
        self.views
            .iter()
            .map(|v| Vector::from_column_slice(&v.coefficients))
            .collect()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Count of nonzero coefficients across views.
    pub fn nonzero(&self) -> usize {
        self.views
            .iter()
            .flat_map(|v| v.coefficients.iter())
            .filter(|b| **b != 0.0)
            .count()
    }

    pub fn l1_norm(&self) -> f64 {
        self.views
            .iter()
            .flat_map(|v| v.coefficients.iter())
            .map(|b| b.abs())
            .sum()
    }

    fn check_views<'a>(&self, views: impl ExactSizeIterator<Item = &'a Matrix>) -> Result<usize> {
        if views.len() != self.views.len() {
            return Err(CoopError::DimensionMismatch(format!(
                "{} views supplied, model has {}",
                views.len(),
                self.views.len()
            )));
        }
        let mut n = None;
        for (m, (x, v)) in views.zip(&self.views).enumerate() {
            if x.ncols() != v.coefficients.len() {
                return Err(CoopError::DimensionMismatch(format!(
                    "view {} (`{}`) has {} columns, model expects {}",
                    m + 1,
                    v.name,
                    x.ncols(),
                    v.coefficients.len()
                )));
            }
            if *n.get_or_insert(x.nrows()) != x.nrows() {
                return Err(CoopError::DimensionMismatch("views have different row counts".into()));
            }
        }
        Ok(n.unwrap_or(0))
    }

    /// Linear predictor (including the intercept) on already standardized views.
    pub fn linear_predictor_standardized(&self, views: &[&Matrix]) -> Result<Vector> {
        let n = self.check_views(views.iter().copied())?;
        let mut eta = Vector::from_element(n, self.intercept);
        for (x, v) in views.iter().zip(&self.views) {
            eta += *x * Vector::from_column_slice(&v.coefficients);
        }
        Ok(eta)
    }

    /// Per-view contributions `X_m θ_m` on standardized views.
    pub fn view_predictions_standardized(&self, views: &[&Matrix]) -> Result<Vec<Vector>> {
        self.check_views(views.iter().copied())?;
        Ok(views
            .iter()
            .zip(&self.views)
            .map(|(x, v)| *x * Vector::from_column_slice(&v.coefficients))
            .collect())
    }

    /// Standardizes raw views with the training statistics.
    pub fn standardize(&self, raw: &[Matrix]) -> Result<Vec<Matrix>> {
        self.check_views(raw.iter())?;
        raw.iter()
            .zip(&self.views)
            .map(|(x, v)| apply_standardization(x, &v.column_means, &v.column_sds))
            .collect()
    }

    pub fn linear_predictor(&self, raw: &[Matrix]) -> Result<Vector> {
        let std = self.standardize(raw)?;
        let refs: Vec<&Matrix> = std.iter().collect();
        self.linear_predictor_standardized(&refs)
    }

    /// Predictions on raw views: the response scale for gaussian, probabilities for binomial.
    pub fn predict(&self, raw: &[Matrix]) -> Result<Vector> {
        let eta = self.linear_predictor(raw)?;
        Ok(self.link_inverse(eta))
    }

    pub fn predict_standardized(&self, views: &[&Matrix]) -> Result<Vector> {
        let eta = self.linear_predictor_standardized(views)?;
        Ok(self.link_inverse(eta))
    }

    fn link_inverse(&self, eta: Vector) -> Vector {
        match self.family {
            Family::Gaussian => eta,
            Family::Binomial => eta.map(math::logistic),
        }
    }
}

/// Predictions of `fit` on raw views.
pub fn predict(fit: &CoopFit, raw: &[Matrix]) -> Result<Vector> {
    fit.predict(raw)
}

/// Options shared by the direct fits.
#[derive(Clone, Debug, PartialEq)]
pub struct CoopConfig {
    pub alpha_mix: f64,
    /// Per-feature factors over the concatenated views; all ones when `None`.
    pub penalty_factors: Option<Vec<f64>>,
    pub pairs: Option<PairSpec>,
    /// Extra `(ridge/2)‖β‖²` added to the objective.
    pub ridge: f64,
    pub solver: SolverOptions,
}

impl Default for CoopConfig {
    fn default() -> Self {
        Self {
            alpha_mix: 1.0,
            penalty_factors: None,
            pairs: None,
            ridge: 0.0,
            solver: SolverOptions::default(),
        }
    }
}

impl CoopConfig {
    pub fn penalty(&self, p: usize) -> Result<PenaltySpec> {
        let pf = match &self.penalty_factors {
            Some(pf) if pf.len() == p => pf.clone(),
            Some(pf) => {
                return Err(CoopError::DimensionMismatch(format!(
                    "{} penalty factors for {} features",
                    pf.len(),
                    p
                )))
            }
            None => alloc::vec![1.0; p],
        };
        PenaltySpec::new(0.0, self.alpha_mix, pf)
    }
}

/// Sufficient statistics of `(views, y)` from which the augmented normal
/// equations at any `ρ` follow without forming `X̃`.
#[derive(Clone, Debug)]
pub struct CoopProblem {
    pub spans: Vec<BlockSpan>,
    pub base_gram: Matrix,
    pub xty: Vector,
    pub yty: f64,
}

impl CoopProblem {
    pub fn new(views: &[&Matrix], y: &Vector) -> Result<Self> {
        let cat = hstack(views);
        let widths: Vec<usize> = views.iter().map(|v| v.ncols()).collect();
        let base = QuadraticProblem::from_data(&cat, y)?;
        Ok(Self {
            spans: spans_for(&widths, None),
            base_gram: base.gram,
            xty: base.xty,
            yty: base.yty,
        })
    }

    pub fn from_dataset(dataset: &MultiViewDataset) -> Result<Self> {
        Self::new(&dataset.view_matrices(), &dataset.response().values)
    }

    pub fn p(&self) -> usize {
        self.xty.len()
    }

    /// The augmented quadratic at `ρ`; `X̃ᵀỹ = Xᵀy` for every `ρ`.
    pub fn at(&self, rho: f64, pairs: Option<&PairSpec>, ridge: f64) -> Result<QuadraticProblem> {
        let mut gram = augmented_gram(&self.base_gram, &self.spans, rho, pairs)?;
        if ridge != 0.0 {
            if !(ridge > 0.0 && ridge.is_finite()) {
                return Err(invalid("ridge", "must be finite and >= 0"));
            }
            for j in 0..gram.nrows() {
                gram[(j, j)] += ridge;
            }
        }
        Ok(QuadraticProblem {
            gram,
            xty: self.xty.clone(),
            yty: self.yty,
        })
    }
}

/// Direct fits along a `λ` path at one `ρ`.
#[derive(Clone, Debug)]
pub struct CoopPath {
    pub rho: f64,
    pub lambdas: Vec<f64>,
    pub fits: Vec<CoopFit>,
    pub df: Vec<usize>,
}

fn require_gaussian(dataset: &MultiViewDataset) -> Result<()> {
    if dataset.family() != Family::Gaussian {
        return Err(CoopError::Unsupported(
            "binomial responses are fitted by the logistic module".into(),
        ));
    }
    Ok(())
}

/// Decreasing `λ` grid for the direct algorithm. It does not depend on `ρ`.
pub fn coop_lambda_grid(
    dataset: &MultiViewDataset,
    config: &CoopConfig,
    n_lambda: usize,
    min_ratio: f64,
) -> Result<Vec<f64>> {
    let problem = CoopProblem::from_dataset(dataset)?;
    let spec = config.penalty(problem.p())?;
    let lmax = lambda_max(&problem.at(0.0, None, 0.0)?, spec.alpha_mix, &spec.penalty_factors)?;
    grid_from_max(lmax, n_lambda, min_ratio)
}

/// Solves `Lasso(X̃, ỹ, λ)` along `grid` and splits the solutions by view.
pub fn coop_direct_fit(
    dataset: &MultiViewDataset,
    rho: f64,
    grid: &[f64],
    config: &CoopConfig,
) -> Result<CoopPath> {
    require_gaussian(dataset)?;
    let problem = CoopProblem::from_dataset(dataset)?;
    coop_direct_fit_problem(dataset, &problem, rho, grid, config)
}

/// As [`coop_direct_fit`] with precomputed statistics.
pub fn coop_direct_fit_problem(
    dataset: &MultiViewDataset,
    problem: &CoopProblem,
    rho: f64,
    grid: &[f64],
    config: &CoopConfig,
) -> Result<CoopPath> {
    require_gaussian(dataset)?;
    let spec = config.penalty(problem.p())?;
    let quad = problem.at(rho, config.pairs.as_ref(), config.ridge)?;
    let path = fit_path_quadratic(&quad, &spec, grid, &config.solver)?;
    let views = dataset.view_matrices();
    let y = &dataset.response().values;
    let fits = path
        .coefs
        .iter()
        .zip(&path.lambdas)
        .map(|(c, &lambda)| {
            let thetas = split_by_spans(&problem.spans, &c.beta);
            let pen = spec.with_lambda(lambda);
            let objective = coop_objective_with_pairs(&views, y, &thetas, rho, &pen, config.pairs.as_ref())?
                + 0.5 * config.ridge * c.beta.norm_squared();
            let mut fit = CoopFit::from_thetas(
                dataset,
                &thetas,
                rho,
                lambda,
                config.alpha_mix,
                dataset.response().mean,
                objective,
                Algorithm::Direct,
            );
            fit.iterations = c.n_iter;
            fit.converged = c.converged;
            fit.pairs = config.pairs.clone();
            Ok(fit)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoopPath {
        rho,
        lambdas: path.lambdas,
        fits,
        df: path.df,
    })
}

/// Direct fit at a single `(ρ, λ)`.
pub fn coop_direct_fit_at(
    dataset: &MultiViewDataset,
    rho: f64,
    lambda: f64,
    config: &CoopConfig,
) -> Result<CoopFit> {
    require_gaussian(dataset)?;
    let problem = CoopProblem::from_dataset(dataset)?;
    let spec = config.penalty(problem.p())?.with_lambda(lambda);
    spec.validate()?;
    let quad = problem.at(rho, config.pairs.as_ref(), config.ridge)?;
    let c = solve_quadratic(&quad, &spec, None, &config.solver)?;
    let thetas = split_by_spans(&problem.spans, &c.beta);
    let objective = coop_objective_with_pairs(
        &dataset.view_matrices(),
        &dataset.response().values,
        &thetas,
        rho,
        &spec,
        config.pairs.as_ref(),
    )? + 0.5 * config.ridge * c.beta.norm_squared();
    let mut fit = CoopFit::from_thetas(
        dataset,
        &thetas,
        rho,
        lambda,
        config.alpha_mix,
        dataset.response().mean,
        objective,
        Algorithm::Direct,
    );
    fit.iterations = c.n_iter;
    fit.converged = c.converged;
    fit.pairs = config.pairs.clone();
    Ok(fit)
}

/// A fitted per-view predictor.
pub trait ViewModel {
    fn predict(&self, x: &Matrix) -> Vector;
    /// Linear coefficients, when the model has them.
    fn coefficients(&self) -> Option<&Vector>;
    /// Penalty contribution of this model to the cooperative objective.
    fn penalty(&self) -> f64;
}

/// A fitting mechanism for one view.
///
/// `fit` minimizes `(weight/2)‖target − f(x)‖² + penalty(f)`. Fitters without an
/// explicit penalty may ignore `weight`.
pub trait ViewFitter {
    fn fit(
        &self,
        x: &Matrix,
        target: &Vector,
        weight: f64,
        warm: Option<&dyn ViewModel>,
    ) -> Result<Box<dyn ViewModel>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub beta: Vector,
    pub penalty: f64,
    pub converged: bool,
}

impl ViewModel for LinearModel {
    fn predict(&self, x: &Matrix) -> Vector {
        x * &self.beta
    }

    fn coefficients(&self) -> Option<&Vector> {
        Some(&self.beta)
    }

    fn penalty(&self) -> f64 {
        self.penalty
    }
}

/// Elastic net with an optional ridge term; `lambda = 0` gives least squares.
#[derive(Clone, Debug, PartialEq)]
pub struct LassoFitter {
    pub lambda: f64,
    pub alpha_mix: f64,
    pub penalty_factors: Option<Vec<f64>>,
    pub ridge: f64,
    pub solver: SolverOptions,
}

impl LassoFitter {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            alpha_mix: 1.0,
            penalty_factors: None,
            ridge: 0.0,
            solver: SolverOptions::default(),
        }
    }

    fn spec(&self, p: usize) -> Result<PenaltySpec> {
        let pf = self.penalty_factors.clone().unwrap_or_else(|| alloc::vec![1.0; p]);
        if pf.len() != p {
            return Err(CoopError::DimensionMismatch(format!(
                "{} penalty factors for {} features",
                pf.len(),
                p
            )));
        }
        PenaltySpec::new(self.lambda, self.alpha_mix, pf)
    }
}

impl ViewFitter for LassoFitter {
    fn fit(
        &self,
        x: &Matrix,
        target: &Vector,
        weight: f64,
        warm: Option<&dyn ViewModel>,
    ) -> Result<Box<dyn ViewModel>> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(invalid("weight", "must be finite and > 0"));
        }
        let spec = self.spec(x.ncols())?;
        let mut problem = QuadraticProblem::from_data(x, target)?;
        for j in 0..problem.p() {
            problem.gram[(j, j)] += self.ridge / weight;
        }
        let scaled = spec.with_lambda(self.lambda / weight);
        let c = solve_quadratic(&problem, &scaled, warm.and_then(|w| w.coefficients()), &self.solver)?;
        let penalty = spec.value(c.beta.as_slice()) + 0.5 * self.ridge * c.beta.norm_squared();
        Ok(Box::new(LinearModel {
            beta: c.beta,
            penalty,
            converged: c.converged,
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterativeOptions {
    /// Stop when a full cycle changes the objective by less than `tol·(1+|objective|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// Outcome of the one-at-a-time algorithm for arbitrary fitters.
pub struct IterativeResult {
    pub models: Vec<Box<dyn ViewModel>>,
    /// Objective at the start and after every single-view update.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IterativeResult {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace starts with the initial objective")
    }
}

fn objective_from_fitted(y: &Vector, fitted: &[Vector], penalties: f64, rho: f64) -> f64 {
    let mut total = Vector::zeros(y.len());
    for f in fitted {
        total += f;
    }
    0.5 * (y - total).norm_squared() + 0.5 * rho * agreement(fitted) + penalties
}

/// Block coordinate descent over views: view `m` is refitted on
/// `y*_m = (y − (1−ρ) Σ_{m'≠m} X_{m'}θ_{m'}) / (1+(M−1)ρ)` with weight `1+(M−1)ρ`,
/// cycling in input order from `θ = 0`.
pub fn iterate_views(
    views: &[&Matrix],
    y: &Vector,
    rho: f64,
    fitters: &[&dyn ViewFitter],
    options: &IterativeOptions,
) -> Result<IterativeResult> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(CoopError::Domain(format!("rho must be finite and >= 0, got {rho}")));
    }
    if views.is_empty() || views.len() != fitters.len() {
        return Err(invalid("fitters", "exactly one fitter per view is required"));
    }
    if views.iter().any(|v| v.nrows() != y.len()) {
        return Err(CoopError::DimensionMismatch("views and response differ in rows".into()));
    }
    let m_views = views.len();
    let weight = 1.0 + (m_views as f64 - 1.0) * rho;
    let mut models: Vec<Option<Box<dyn ViewModel>>> = (0..m_views).map(|_| None).collect();
    let mut fitted: Vec<Vector> = (0..m_views).map(|_| Vector::zeros(y.len())).collect();
    let mut penalties = alloc::vec![0.0; m_views];
    let mut objective = objective_from_fitted(y, &fitted, 0.0, rho);
    let mut trace = alloc::vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let start = objective;
        for m in 0..m_views {
            let mut others = Vector::zeros(y.len());
            for (k, f) in fitted.iter().enumerate() {
                if k != m {
                    others += f;
                }
            }
            let target = (y - others * (1.0 - rho)) / weight;
            let model = fitters[m].fit(views[m], &target, weight, models[m].as_deref())?;
            fitted[m] = model.predict(views[m]);
            penalties[m] = model.penalty();
            models[m] = Some(model);
            let next = objective_from_fitted(y, &fitted, penalties.iter().sum(), rho);
            debug_assert!(
                next <= objective + 1e-9 * (1.0 + objective.abs()),
                "one-at-a-time objective increased: {objective} -> {next}"
            );
            objective = next;
            trace.push(objective);
        }
        if (start - objective).abs() < options.tol * (1.0 + objective.abs()) {
            converged = true;
            break;
        }
    }
    Ok(IterativeResult {
        models: models.into_iter().map(|m| m.expect("every view fitted")).collect(),
        trace,
        iterations,
        converged,
    })
}

/// The one-at-a-time algorithm with an elastic-net fitter per view.
///
/// Each view has its own `λ`. A run that hits `max_iter` is reported through
/// `converged = false` and `iterations == max_iter`.
pub fn coop_iterative_fit(
    dataset: &MultiViewDataset,
    rho: f64,
    fitters: &[LassoFitter],
    options: &IterativeOptions,
) -> Result<(CoopFit, Vec<f64>)> {
    require_gaussian(dataset)?;
    let refs: Vec<&dyn ViewFitter> = fitters.iter().map(|f| f as &dyn ViewFitter).collect();
    let views = dataset.view_matrices();
    let result = iterate_views(&views, &dataset.response().values, rho, &refs, options)?;
    let thetas: Vec<Vector> = result
        .models
        .iter()
        .map(|m| m.coefficients().cloned().expect("linear fitter"))
        .collect();
    let lambdas: Vec<f64> = fitters.iter().map(|f| f.lambda).collect();
    let mut fit = CoopFit::from_thetas(
        dataset,
        &thetas,
        rho,
        lambdas[0],
        fitters[0].alpha_mix,
        dataset.response().mean,
        result.objective(),
        Algorithm::OneAtATime,
    );
    fit.iterations = result.iterations;
    fit.converged = result.converged;
    fit.view_lambdas = Some(lambdas);
    Ok((fit, result.trace))
}

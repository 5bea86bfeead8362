//! Cooperative logistic regression by iteratively reweighted least squares.
//!
//! Each outer step replaces the negative log-likelihood by its quadratic
//! approximation at the current linear predictor and solves the resulting
//! weighted cooperative lasso. The response rows are weighted by `√w`, the
//! agreement rows are not. An unpenalized intercept is carried explicitly.

use alloc::format;
use alloc::vec::Vec;
use core::ops::AddAssign;

use crate::augmented::{augmented_gram, build_augmented, spans_for, split_by_spans, view_pairs, AugmentedSystem};
use crate::coop::{Algorithm, CoopConfig, CoopFit, CoopPath};
use crate::data::{hstack, Family, MultiViewDataset};
use crate::error::{CoopError, Result};
use crate::math;
use crate::solver::{grid_from_max, solve_quadratic, PenaltySpec, QuadraticProblem, SolverOptions};
use crate::{Matrix, Vector};

/// Lower bound on IRLS weights.
pub const WEIGHT_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct IrlsState {
    pub eta: Vector,
    pub mu: Vector,
    pub working_response: Vector,
    pub weights: Vector,
    pub deviance: f64,
    pub iteration: usize,
}

/// Binomial negative log-likelihood `Σ log(1+e^η) − yη`.
pub fn logistic_nll(eta: &Vector, y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &t)| math::softplus(e) - t * e)
        .sum()
}

/// Quadratic approximation of the likelihood at `eta`.
pub fn irls_update(eta: &Vector, y: &[f64], iteration: usize) -> IrlsState {
    let mu = eta.map(math::logistic);
    let weights = mu.map(|m| (m * (1.0 - m)).max(WEIGHT_FLOOR));
    let working_response = Vector::from_fn(eta.len(), |i, _| eta[i] + (y[i] - mu[i]) / weights[i]);
    IrlsState {
        deviance: 2.0 * logistic_nll(eta, y),
        eta: eta.clone(),
        mu,
        working_response,
        weights,
        iteration,
    }
}

/// The weighted augmented system: `W^{1/2}` scales the response rows and the
/// working response, the contrast rows stay unweighted.
pub fn build_weighted_augmented(views: &[&Matrix], state: &IrlsState, rho: f64) -> Result<AugmentedSystem> {
    let n = state.weights.len();
    if state.working_response.len() != n {
        return Err(CoopError::DimensionMismatch("weights and working response differ in length".into()));
    }
    let root = state.weights.map(math::sqrt);
    let weighted: Vec<Matrix> = views
        .iter()
        .map(|v| {
            if v.nrows() != n {
                return Err(CoopError::DimensionMismatch(format!(
                    "view has {} rows, weights have {}",
                    v.nrows(),
                    n
                )));
            }
            let mut w = (*v).clone();
            for (i, mut row) in w.row_iter_mut().enumerate() {
                row *= root[i];
            }
            Ok(w)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&Matrix> = weighted.iter().collect();
    let target = state.working_response.component_mul(&root);
    let mut sys = build_augmented(&refs, &target, rho)?;
    let s = math::sqrt(rho);
    for (k, (a, b)) in view_pairs(views.len()).enumerate() {
        let start = n * (k + 1);
        let (sa, sb) = (&sys.block_spans[a], &sys.block_spans[b]);
        let (a0, al, b0, bl) = (sa.start, sa.len, sb.start, sb.len);
        sys.x_tilde.view_mut((start, a0), (n, al)).copy_from(&(views[a] * -s));
        sys.x_tilde.view_mut((start, b0), (n, bl)).copy_from(&(views[b] * s));
    }
    Ok(sys)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticOptions {
    /// Outer stop: `|ΔF| < tol·(1+|F|)`.
    pub tol: f64,
    pub max_outer: usize,
    pub max_halvings: usize,
    pub solver: SolverOptions,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_outer: 100,
            max_halvings: 10,
            solver: SolverOptions {
                tol: 1e-9,
                max_sweeps: 10_000,
            },
        }
    }
}

/// Fixed pieces of a cooperative logistic problem.
struct LogisticProblem<'a> {
    y: &'a [f64],
    /// `[1, X_1..X_M]`.
    design: Matrix,
    /// Contribution of the agreement rows to the Gram, in feature coordinates.
    contrast_gram: Matrix,
    rho: f64,
    spec: PenaltySpec,
}

impl<'a> LogisticProblem<'a> {
    fn new(views: Vec<&Matrix>, y: &'a [f64], rho: f64, spec: PenaltySpec) -> Result<Self> {
        let cat = hstack(&views);
        let widths: Vec<usize> = views.iter().map(|v| v.ncols()).collect();
        let spans = spans_for(&widths, None);
        let base = cat.tr_mul(&cat);
        let contrast_gram = augmented_gram(&base, &spans, rho, None)? - &base;
        let n = y.len();
        let mut design = Matrix::from_element(n, cat.ncols() + 1, 1.0);
        design.columns_mut(1, cat.ncols()).copy_from(&cat);
        Ok(Self {
            y,
            design,
            contrast_gram,
            rho,
            spec,
        })
    }

    fn p(&self) -> usize {
        self.design.ncols() - 1
    }

    fn eta(&self, coef: &Vector) -> Vector {
        &self.design * coef
    }

    /// Penalized objective at `(b0, β)` stacked as `coef`.
    fn objective(&self, coef: &Vector) -> f64 {
        let beta = coef.rows(1, self.p());
        let nll = logistic_nll(&self.eta(coef), self.y);
        let mut agree = 0.0;
        if self.rho != 0.0 {
            agree = 0.5 * beta.dot(&(&self.contrast_gram * beta));
        }
        nll + agree + self.spec.value(beta.as_slice())
    }

    /// Solves the weighted subproblem at `state`, warm-started at `coef`.
    fn weighted_step(&self, state: &IrlsState, coef: &Vector, lambda: f64, options: &SolverOptions) -> Result<(Vector, bool)> {
        let mut wd = self.design.clone();
        for (i, mut row) in wd.row_iter_mut().enumerate() {
            row *= state.weights[i];
        }
        let mut gram = self.design.tr_mul(&wd);
        let p = self.p();
        gram.view_mut((1, 1), (p, p)).add_assign(&self.contrast_gram);
        let xty = wd.tr_mul(&state.working_response);
        let yty = state
            .working_response
            .iter()
            .zip(state.weights.iter())
            .map(|(z, w)| w * z * z)
            .sum();
        let mut pf = Vec::with_capacity(p + 1);
        pf.push(0.0);
        pf.extend_from_slice(&self.spec.penalty_factors);
        let spec = PenaltySpec::new(lambda, self.spec.alpha_mix, pf)?;
        let c = solve_quadratic(&QuadraticProblem { gram, xty, yty }, &spec, Some(coef), options)?;
        Ok((c.beta, c.converged))
    }
}

/// Result of one cooperative logistic fit.
#[derive(Clone, Debug)]
pub struct LogisticFit {
    pub intercept: f64,
    pub beta: Vector,
    pub objective: f64,
    /// Objective after every accepted outer step, starting from the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_binary(y: &[f64]) -> Result<f64> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(CoopError::Domain("binomial response must be 0/1".into()));
    }
    let mean = math::mean(y);
    if mean == 0.0 || mean == 1.0 {
        return Err(CoopError::DegenerateResponse);
    }
    Ok(mean)
}

/// Penalized IRLS for `NLL + agreement + penalty` on standardized views.
pub fn fit_logistic_views(
    views: &[&Matrix],
    y: &[f64],
    rho: f64,
    spec: &PenaltySpec,
    warm: Option<(f64, &Vector)>,
    options: &LogisticOptions,
) -> Result<LogisticFit> {
    let ybar = check_binary(y)?;
    spec.validate()?;
    let problem = LogisticProblem::new(views.to_vec(), y, rho, spec.clone())?;
    let p = problem.p();
    if spec.penalty_factors.len() != p {
        return Err(CoopError::DimensionMismatch(format!(
            "{} penalty factors for {} features",
            spec.penalty_factors.len(),
            p
        )));
    }
    let mut coef = Vector::zeros(p + 1);
    match warm {
        Some((b0, beta)) if beta.len() == p => {
            coef[0] = b0;
            coef.rows_mut(1, p).copy_from(beta);
        }
        Some(_) => return Err(CoopError::DimensionMismatch("warm start length".into())),
        None => coef[0] = math::ln(ybar / (1.0 - ybar)),
    }
    let mut objective = problem.objective(&coef);
    let mut trace = alloc::vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_outer {
        iterations += 1;
        let state = irls_update(&problem.eta(&coef), y, iterations);
        let (proposal, _) = problem.weighted_step(&state, &coef, spec.lambda, &options.solver)?;
        let mut step = 1.0;
        let mut candidate = proposal.clone();
        let mut cand_obj = problem.objective(&candidate);
        let mut halvings = 0;
        while cand_obj > objective && halvings < options.max_halvings {
            halvings += 1;
            step *= 0.5;
            candidate = &coef + (&proposal - &coef) * step;
            cand_obj = problem.objective(&candidate);
        }
        let slack = options.tol * (1.0 + objective.abs());
        if cand_obj > objective {
            if cand_obj - objective <= slack {
                converged = true;
                break;
            }
            return Err(CoopError::Diverged {
                iterations,
                objective: cand_obj,
            });
        }
        let change = objective - cand_obj;
        coef = candidate;
        objective = cand_obj;
        trace.push(objective);
        if change < slack {
            converged = true;
            break;
        }
    }
    if !objective.is_finite() {
        return Err(CoopError::NonFinite("logistic objective".into()));
    }
    Ok(LogisticFit {
        intercept: coef[0],
        beta: coef.rows(1, p).into_owned(),
        objective,
        trace,
        iterations,
        converged,
    })
}

fn require_binomial(dataset: &MultiViewDataset) -> Result<()> {
    if dataset.family() != Family::Binomial {
        return Err(CoopError::Unsupported("logistic fits need a binomial response".into()));
    }
    Ok(())
}

fn to_coop_fit(dataset: &MultiViewDataset, fit: &LogisticFit, rho: f64, lambda: f64, config: &CoopConfig) -> CoopFit {
    let spans = spans_for(&dataset.view_widths(), None);
    let thetas = split_by_spans(&spans, &fit.beta);
    let mut out = CoopFit::from_thetas(
        dataset,
        &thetas,
        rho,
        lambda,
        config.alpha_mix,
        fit.intercept,
        fit.objective,
        Algorithm::Direct,
    );
    out.iterations = fit.iterations;
    out.converged = fit.converged;
    out
}

fn check_config(config: &CoopConfig) -> Result<()> {
    if config.pairs.is_some() || config.ridge != 0.0 {
        return Err(CoopError::Unsupported(
            "paired features and ridge terms are gaussian only".into(),
        ));
    }
    Ok(())
}

/// Cooperative logistic fit at one `(ρ, λ)`.
pub fn fit_coop_logistic(
    dataset: &MultiViewDataset,
    rho: f64,
    lambda: f64,
    config: &CoopConfig,
    options: &LogisticOptions,
) -> Result<CoopFit> {
    require_binomial(dataset)?;
    check_config(config)?;
    let spec = config.penalty(dataset.total_features())?.with_lambda(lambda);
    let fit = fit_logistic_views(
        &dataset.view_matrices(),
        dataset.response().values.as_slice(),
        rho,
        &spec,
        None,
        options,
    )?;
    Ok(to_coop_fit(dataset, &fit, rho, lambda, config))
}

/// Smallest `λ` with all penalized coefficients zero: `max_j |X_jᵀ(y − ȳ)| / (α pf_j)`.
pub fn logistic_lambda_max(dataset: &MultiViewDataset, config: &CoopConfig) -> Result<f64> {
    require_binomial(dataset)?;
    let y = dataset.response().values.as_slice();
    let ybar = check_binary(y)?;
    let spec = config.penalty(dataset.total_features())?;
    let resid = Vector::from_iterator(y.len(), y.iter().map(|v| v - ybar));
    let grad = dataset.concatenated().tr_mul(&resid);
    let a = spec.alpha_mix.max(crate::solver::ALPHA_FLOOR);
    let lmax = (0..grad.len())
        .filter(|&j| spec.penalty_factors[j] > 0.0)
        .map(|j| grad[j].abs() / (a * spec.penalty_factors[j]))
        .fold(0.0, f64::max);
    Ok(lmax * (1.0 + 1e-12))
}

pub fn logistic_lambda_grid(
    dataset: &MultiViewDataset,
    config: &CoopConfig,
    n_lambda: usize,
    min_ratio: f64,
) -> Result<Vec<f64>> {
    grid_from_max(logistic_lambda_max(dataset, config)?, n_lambda, min_ratio)
}

/// Warm-started logistic fits along a decreasing grid.
pub fn coop_logistic_path(
    dataset: &MultiViewDataset,
    rho: f64,
    grid: &[f64],
    config: &CoopConfig,
    options: &LogisticOptions,
) -> Result<CoopPath> {
    require_binomial(dataset)?;
    check_config(config)?;
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(crate::error::invalid("grid", "lambda grid must be non-empty and strictly decreasing"));
    }
    let views = dataset.view_matrices();
    let y = dataset.response().values.as_slice();
    let base = config.penalty(dataset.total_features())?;
    let mut fits = Vec::with_capacity(grid.len());
    let mut warm: Option<LogisticFit> = None;
    for &lambda in grid {
        let spec = base.with_lambda(lambda);
        let fit = fit_logistic_views(
            &views,
            y,
            rho,
            &spec,
            warm.as_ref().map(|w| (w.intercept, &w.beta)),
            options,
        )?;
        fits.push(to_coop_fit(dataset, &fit, rho, lambda, config));
        warm = Some(fit);
    }
    let df = fits.iter().map(CoopFit::nonzero).collect();
    Ok(CoopPath {
        rho,
        lambdas: grid.to_vec(),
        fits,
        df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn binary_dataset(seed: u64, n: usize, px: usize, pz: usize) -> MultiViewDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, px, |_, _| rng.sample(StandardNormal));
        let z = Matrix::from_fn(n, pz, |_, _| rng.sample(StandardNormal));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta = 1.2 * x[(i, 0)] - 0.8 * z[(i, 1)] + 0.3;
                let u: f64 = rng.random();
                if u < math::logistic(eta) { 1.0 } else { 0.0 }
            })
            .collect();
        MultiViewDataset::from_matrices(vec![x, z], &y, Family::Binomial).unwrap()
    }

    /// Proximal gradient with backtracking on `NLL + λ‖β‖₁`, intercept unpenalized.
    fn proximal_oracle(x: &Matrix, y: &[f64], lambda: f64) -> (f64, Vector) {
        let n = y.len();
        let p = x.ncols();
        let mut a = Matrix::from_element(n, p + 1, 1.0);
        a.columns_mut(1, p).copy_from(x);
        let f = |c: &Vector| logistic_nll(&(&a * c), y);
        let mut c = Vector::zeros(p + 1);
        let mut step = 1.0;
        for _ in 0..20_000 {
            let eta = &a * &c;
            let r = Vector::from_fn(n, |i, _| math::logistic(eta[i]) - y[i]);
            let g = a.tr_mul(&r);
            let fc = f(&c);
            loop {
                let mut next = &c - &g * step;
                for j in 1..=p {
                    next[j] = crate::solver::soft_threshold(next[j], step * lambda);
                }
                let d = &next - &c;
                if f(&next) <= fc + g.dot(&d) + d.norm_squared() / (2.0 * step) {
                    c = next;
                    break;
                }
                step *= 0.5;
            }
        }
        (c[0], c.rows(1, p).into_owned())
    }

    #[test]
    fn zero_eta_state() {
        let s = irls_update(&Vector::zeros(2), &[0.0, 1.0], 0);
        assert_eq!(s.mu.as_slice(), &[0.5, 0.5]);
        assert_eq!(s.weights.as_slice(), &[0.25, 0.25]);
        assert_eq!(s.working_response.as_slice(), &[-2.0, 2.0]);
    }

    #[test]
    fn saturated_weight_is_clamped() {
        let s = irls_update(&Vector::from_element(1, 20.0), &[1.0], 0);
        assert_eq!(s.weights[0], WEIGHT_FLOOR);
        assert!(s.working_response[0].is_finite());
    }

    #[test]
    fn unit_weights_match_gaussian_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(5, 2, |_, _| rng.sample(StandardNormal));
        let z = Matrix::from_fn(5, 3, |_, _| rng.sample(StandardNormal));
        let zr = Vector::from_fn(5, |_, _| rng.sample(StandardNormal));
        let state = IrlsState {
            eta: Vector::zeros(5),
            mu: Vector::zeros(5),
            working_response: zr.clone(),
            weights: Vector::from_element(5, 1.0),
            deviance: 0.0,
            iteration: 0,
        };
        let a = build_weighted_augmented(&[&x, &z], &state, 0.7).unwrap();
        let b = build_augmented(&[&x, &z], &zr, 0.7).unwrap();
        assert!((a.x_tilde - b.x_tilde).amax() < 1e-15);
        assert_eq!(a.y_tilde, b.y_tilde);
    }

    #[test]
    fn weight_four_quadruples_top_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_fn(6, 2, |_, _| rng.sample(StandardNormal));
        let z = Matrix::from_fn(6, 2, |_, _| rng.sample(StandardNormal));
        let state = IrlsState {
            eta: Vector::zeros(6),
            mu: Vector::zeros(6),
            working_response: Vector::from_element(6, 1.0),
            weights: Vector::from_element(6, 4.0),
            deviance: 0.0,
            iteration: 0,
        };
        let sys = build_weighted_augmented(&[&x, &z], &state, 1.0).unwrap();
        let cat = hstack(&[&x, &z]);
        let top = sys.x_tilde.rows(0, 6).into_owned();
        assert!((top.tr_mul(&top) - cat.tr_mul(&cat) * 4.0).amax() < 1e-12);
        // Contrast rows are not weighted.
        assert!((sys.x_tilde.rows(6, 6).columns(0, 2) + &x).amax() < 1e-15);
    }

    #[test]
    fn first_newton_step_is_weighted_least_squares() {
        let x = Matrix::from_row_slice(6, 1, &[-1.0, 0.5, 2.0, -0.3, 1.1, -1.7]);
        let z = Matrix::from_row_slice(6, 1, &[0.2, -1.0, 0.4, 1.5, -0.6, 0.9]);
        let y = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let spec = PenaltySpec::uniform(0.0, 1.0, 2);
        let problem = LogisticProblem::new(vec![&x, &z], &y, 0.0, spec).unwrap();
        let coef = Vector::zeros(3);
        let state = irls_update(&problem.eta(&coef), &y, 1);
        let tight = SolverOptions { tol: 1e-14, max_sweeps: 100_000 };
        let (step, _) = problem.weighted_step(&state, &coef, 0.0, &tight).unwrap();
        let a = &problem.design;
        let w = Matrix::from_diagonal(&state.weights);
        let lhs = a.transpose() * &w * a;
        let rhs = a.transpose() * &w * &state.working_response;
        let expected = lhs.try_inverse().unwrap() * rhs;
        assert!((step - expected).amax() < 1e-9);
    }

    #[test]
    fn rho_zero_matches_proximal_oracle() {
        let ds = binary_dataset(4, 40, 5, 5);
        let lambda = 1.5;
        let fit = fit_coop_logistic(&ds, 0.0, lambda, &CoopConfig::default(), &LogisticOptions::default()).unwrap();
        let (b0, beta) = proximal_oracle(&ds.concatenated(), ds.response().values.as_slice(), lambda);
        let got: Vec<f64> = fit.thetas().iter().flat_map(|t| t.iter().copied()).collect();
        for (g, e) in got.iter().zip(beta.iter()) {
            assert!((g - e).abs() < 1e-4, "{g} vs {e}");
        }
        assert!((fit.intercept - b0).abs() < 1e-4);
    }

    #[test]
    fn outer_objective_never_increases() {
        let ds = binary_dataset(5, 60, 4, 4);
        let spec = PenaltySpec::uniform(0.5, 1.0, 8);
        let fit = fit_logistic_views(
            &ds.view_matrices(),
            ds.response().values.as_slice(),
            1.0,
            &spec,
            None,
            &LogisticOptions::default(),
        )
        .unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.converged);
    }

    #[test]
    fn separable_data_stays_finite() {
        let x = Matrix::from_row_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let z = Matrix::from_row_slice(6, 1, &[-1.0, -2.0, -3.0, 3.0, 2.0, 1.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let ds = MultiViewDataset::from_matrices(vec![x, z], &y, Family::Binomial).unwrap();
        let fit = fit_coop_logistic(&ds, 0.5, 0.1, &CoopConfig::default(), &LogisticOptions::default()).unwrap();
        assert!(fit.thetas().iter().all(|t| t.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn flipped_labels_negate_fit() {
        let ds = binary_dataset(6, 50, 3, 3);
        let flipped: Vec<f64> = ds.raw_response().iter().map(|v| 1.0 - v).collect();
        let raw: Vec<Matrix> = ds.raw_views().iter().map(|v| v.matrix().clone()).collect();
        let ds2 = MultiViewDataset::from_matrices(raw, &flipped, Family::Binomial).unwrap();
        let opts = LogisticOptions::default();
        let a = fit_coop_logistic(&ds, 0.5, 0.8, &CoopConfig::default(), &opts).unwrap();
        let b = fit_coop_logistic(&ds2, 0.5, 0.8, &CoopConfig::default(), &opts).unwrap();
        for (ta, tb) in a.thetas().iter().zip(b.thetas().iter()) {
            assert!((ta + tb).amax() < 1e-6);
        }
        assert!((a.intercept + b.intercept).abs() < 1e-6);
    }

    #[test]
    fn score_equation_at_rho_zero() {
        let ds = binary_dataset(7, 60, 2, 2);
        let fit = fit_coop_logistic(&ds, 0.0, 0.0, &CoopConfig::default(), &LogisticOptions::default()).unwrap();
        let p = fit.predict_standardized(&ds.view_matrices()).unwrap();
        assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
        assert!((p.mean() - math::mean(ds.raw_response())).abs() < 1e-6);
    }

    #[test]
    fn path_starts_at_zero() {
        let ds = binary_dataset(8, 40, 3, 3);
        let grid = logistic_lambda_grid(&ds, &CoopConfig::default(), 5, 0.1).unwrap();
        let path = coop_logistic_path(&ds, 1.0, &grid, &CoopConfig::default(), &LogisticOptions::default()).unwrap();
        assert_eq!(path.df[0], 0);
        assert!(path.df[4] > 0);
    }
}

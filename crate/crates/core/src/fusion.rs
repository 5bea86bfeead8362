//! Early and late fusion baselines.
//!
//! Early fusion is the lasso on the concatenated views, i.e. the direct fit at
//! `ρ = 0`. Late fusion fits a cross-validated lasso per view and combines the
//! per-view predictions by least squares. The combiner sees out-of-fold
//! predictions so that it does not reward views that overfit.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::coop::{coop_direct_fit, coop_direct_fit_at, Algorithm, CoopConfig, CoopFit, CoopPath};
use crate::data::{Family, MultiViewDataset};
use crate::error::{CoopError, Result};
use crate::exec::{Executor, Sequential};
use crate::selection::{cv_coop_with, CvOptions, CvResult, FoldPlan};
use crate::{Matrix, Vector};

/// Lasso path on the concatenated views.
pub fn early_fusion_fit(dataset: &MultiViewDataset, grid: &[f64], config: &CoopConfig) -> Result<CoopPath> {
    coop_direct_fit(dataset, 0.0, grid, config)
}

/// Minimum-norm least-squares weights of `y` on the columns of `predictions`,
/// without an intercept.
pub fn combine_least_squares(predictions: &Matrix, y: &Vector) -> Result<Vec<f64>> {
    if predictions.nrows() != y.len() {
        return Err(CoopError::DimensionMismatch("predictions and response differ in rows".into()));
    }
    let scale = predictions.amax().max(1.0);
    let svd = predictions.clone().svd(true, true);
    let w = svd
        .solve(y, 1e-10 * scale)
        .map_err(|e| CoopError::Collinear(e.into()))?;
    Ok(w.iter().copied().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LateFusionFit {
    /// `θ_m = w_m θ̂_m`, intercept the training response mean.
    pub fit: CoopFit,
    pub weights: Vec<f64>,
    /// Per-view cross-validation that chose each view's `λ`.
    pub per_view: Vec<CvResult>,
}

pub fn late_fusion_fit(
    dataset: &MultiViewDataset,
    options: &CvOptions,
    folds: &FoldPlan,
    combiner_folds: &FoldPlan,
) -> Result<LateFusionFit> {
    late_fusion_fit_with(dataset, options, folds, combiner_folds, &Sequential)
}

/// Late fusion; the `ρ` grid in `options` is ignored (each view is a plain lasso).
pub fn late_fusion_fit_with<E: Executor>(
    dataset: &MultiViewDataset,
    options: &CvOptions,
    folds: &FoldPlan,
    combiner_folds: &FoldPlan,
    exec: &E,
) -> Result<LateFusionFit> {
    if dataset.family() != Family::Gaussian {
        return Err(CoopError::Unsupported("late fusion is gaussian only".into()));
    }
    if combiner_folds.n != dataset.n() {
        return Err(CoopError::DimensionMismatch("combiner folds do not match the dataset".into()));
    }
    let m_views = dataset.n_views();
    let single = CvOptions {
        rho_grid: vec![0.0],
        ..options.clone()
    };
    let mut per_view = Vec::with_capacity(m_views);
    let mut datasets = Vec::with_capacity(m_views);
    for m in 0..m_views {
        let ds = dataset.select_views(&[m])?;
        per_view.push(cv_coop_with(&ds, &single, folds, exec)?);
        datasets.push(ds);
    }

    // Out-of-fold linear predictions of every view at its chosen λ.
    let n = dataset.n();
    let mut oof = Matrix::zeros(n, m_views);
    let config = CoopConfig {
        penalty_factors: None,
        ..options.config.clone()
    };
    let cells: Vec<Result<(usize, Vec<usize>, Vector)>> = exec.map(m_views * combiner_folds.k, |t| {
        let (m, f) = (t / combiner_folds.k, t % combiner_folds.k);
        let (train, test) = combiner_folds.split(f);
        let sub = datasets[m].subset(&train)?;
        let fit = coop_direct_fit_at(&sub, 0.0, per_view[m].selected.lambda, &config)?;
        let raw = datasets[m].raw_views()[0].select_rows(&test).matrix().clone();
        let pred = fit.linear_predictor(&[raw])?.add_scalar(-fit.intercept);
        Ok((m, test, pred))
    });
    for cell in cells {
        let (m, test, pred) = cell?;
        for (k, &i) in test.iter().enumerate() {
            oof[(i, m)] = pred[k];
        }
    }
    let weights = combine_least_squares(&oof, &dataset.response().values)?;

    let thetas: Vec<Vector> = per_view
        .iter()
        .zip(&weights)
        .map(|(cv, w)| Vector::from_column_slice(&cv.refit.views[0].coefficients) * *w)
        .collect();
    let refs = dataset.view_matrices();
    let mut total = Vector::zeros(n);
    for (x, t) in refs.iter().zip(&thetas) {
        total += *x * t;
    }
    let objective = 0.5 * (&dataset.response().values - total).norm_squared();
    let mut fit = CoopFit::from_thetas(
        dataset,
        &thetas,
        0.0,
        per_view[0].selected.lambda,
        options.config.alpha_mix,
        dataset.response().mean,
        objective,
        Algorithm::LateFusion,
    );
    fit.view_lambdas = Some(per_view.iter().map(|cv| cv.selected.lambda).collect());
    Ok(LateFusionFit {
        fit,
        weights,
        per_view,
    })
}

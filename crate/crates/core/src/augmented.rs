//! Augmented least-squares systems for the agreement penalty.
//!
//! For views `X_1..X_M` the cooperative objective
//!
//! ```text
//! (1/2)‖y − Σ_m X_m θ_m‖² + (ρ/2) Σ_{m<m'} ‖X_m θ_m − X_{m'} θ_{m'}‖² + penalty
//! ```
//!
//! equals `(1/2)‖ỹ − X̃ β̃‖² + penalty` where `X̃` stacks the column-concatenated
//! views on top of one contrast block per unordered pair `(m, m')`, holding
//! `−√ρ X_m` in block `m` and `+√ρ X_{m'}` in block `m'`, and `ỹ = (y, 0, …, 0)`.
//! Pair blocks are ordered lexicographically by `(m, m')`.
//!
//! Paired features add `ρ₂ ‖X_{a,j} θ_{a,j} − X_{b,k} θ_{b,k}‖²` per pair, encoded as one
//! more `n`-row block carrying `+√(2ρ₂) X_{a,j}` and `−√(2ρ₂) X_{b,k}`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoopError, Result};
use crate::math;
use crate::solver::{PenaltySpec, QuadraticProblem};
use crate::{Matrix, Vector};

/// Column range of one view inside `X̃`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpan {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl BlockSpan {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// What a block of rows in `X̃` encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Response,
    /// `−√ρ X_first`, `+√ρ X_second`.
    Contrast { first: usize, second: usize },
    /// `+√(2ρ₂) X_{view_a, col_a}`, `−√(2ρ₂) X_{view_b, col_b}`.
    Paired(FeaturePair),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowBlock {
    pub kind: RowKind,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSystem {
    pub x_tilde: Matrix,
    pub y_tilde: Vector,
    pub block_spans: Vec<BlockSpan>,
    pub row_blocks: Vec<RowBlock>,
    pub rho: f64,
}

impl AugmentedSystem {
    /// Splits a stacked coefficient vector into per-view pieces.
    pub fn split(&self, beta: &Vector) -> Vec<Vector> {
        split_by_spans(&self.block_spans, beta)
    }

    pub fn to_problem(&self) -> Result<QuadraticProblem> {
        QuadraticProblem::from_data(&self.x_tilde, &self.y_tilde)
    }
}

pub fn split_by_spans(spans: &[BlockSpan], beta: &Vector) -> Vec<Vector> {
    spans
        .iter()
        .map(|s| beta.rows(s.start, s.len).into_owned())
        .collect()
}

/// Column spans for views of the given widths, named `view1..viewM` unless names are given.
pub fn spans_for(widths: &[usize], names: Option<&[String]>) -> Vec<BlockSpan> {
    let mut start = 0;
    widths
        .iter()
        .enumerate()
        .map(|(m, &len)| {
            let name = names
                .and_then(|n| n.get(m).cloned())
                .unwrap_or_else(|| format!("view{}", m + 1));
            let span = BlockSpan { name, start, len };
            start += len;
            span
        })
        .collect()
}

/// Unordered view pairs `(m, m')`, `m < m'`, in lexicographic order.
pub fn view_pairs(n_views: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_views).flat_map(move |a| (a + 1..n_views).map(move |b| (a, b)))
}

fn check_views(views: &[&Matrix], n: usize) -> Result<()> {
    if views.is_empty() {
        return Err(invalid("views", "at least one view is required"));
    }
    for (m, v) in views.iter().enumerate() {
        if v.nrows() != n {
            return Err(CoopError::DimensionMismatch(format!(
                "view {} has {} rows, expected {}",
                m + 1,
                v.nrows(),
                n
            )));
        }
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(CoopError::Domain(format!("rho must be finite and >= 0, got {rho}")));
    }
    Ok(())
}

/// Stacks the response rows and one contrast block per view pair.
pub fn build_augmented(views: &[&Matrix], y: &Vector, rho: f64) -> Result<AugmentedSystem> {
    check_rho(rho)?;
    let n = y.len();
    check_views(views, n)?;
    let m_views = views.len();
    let widths: Vec<usize> = views.iter().map(|v| v.ncols()).collect();
    let spans = spans_for(&widths, None);
    let p: usize = widths.iter().sum();
    let n_pairs = m_views * (m_views - 1) / 2;
    let rows = n * (1 + n_pairs);

    let mut x_tilde = Matrix::zeros(rows, p);
    let mut row_blocks = Vec::with_capacity(1 + n_pairs);
    for (v, s) in views.iter().zip(&spans) {
        x_tilde.view_mut((0, s.start), (n, s.len)).copy_from(*v);
    }
    row_blocks.push(RowBlock {
        kind: RowKind::Response,
        start: 0,
        len: n,
    });
    let root = math::sqrt(rho);
    for (k, (a, b)) in view_pairs(m_views).enumerate() {
        let start = n * (k + 1);
        let (sa, sb) = (&spans[a], &spans[b]);
        x_tilde
            .view_mut((start, sa.start), (n, sa.len))
            .copy_from(&(views[a] * -root));
        x_tilde
            .view_mut((start, sb.start), (n, sb.len))
            .copy_from(&(views[b] * root));
        row_blocks.push(RowBlock {
            kind: RowKind::Contrast {
                first: a,
                second: b,
            },
            start,
            len: n,
        });
    }
    let mut y_tilde = Vector::zeros(rows);
    y_tilde.rows_mut(0, n).copy_from(y);
    Ok(AugmentedSystem {
        x_tilde,
        y_tilde,
        block_spans: spans,
        row_blocks,
        rho,
    })
}

/// One feature pair `(view_a, col_a) ↔ (view_b, col_b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePair {
    pub view_a: usize,
    pub col_a: usize,
    pub view_b: usize,
    pub col_b: usize,
}

/// Paired-feature agreement: pairs and their weight `ρ₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub pairs: Vec<FeaturePair>,
    pub rho2: f64,
}

impl PairSpec {
    pub fn validate(&self, widths: &[usize]) -> Result<()> {
        if !(self.rho2 >= 0.0 && self.rho2.is_finite()) {
            return Err(CoopError::Domain(format!("rho2 must be finite and >= 0, got {}", self.rho2)));
        }
        for (i, p) in self.pairs.iter().enumerate() {
            let ok = |v: usize, c: usize| v < widths.len() && c < widths[v];
            if !ok(p.view_a, p.col_a) || !ok(p.view_b, p.col_b) {
                return Err(invalid("pairs", format!("pair {} references a column out of range", i + 1)));
            }
            if p.view_a == p.view_b && p.col_a == p.col_b {
                return Err(invalid("pairs", format!("pair {} pairs a column with itself", i + 1)));
            }
            if self.pairs[..i].contains(p) {
                return Err(invalid("pairs", format!("pair {} is a duplicate", i + 1)));
            }
        }
        Ok(())
    }

    /// `Σ_P ‖X_{a,j} θ_{a,j} − X_{b,k} θ_{b,k}‖²` (without the `ρ₂` weight).
    pub fn discrepancy(&self, views: &[&Matrix], thetas: &[Vector]) -> f64 {
        self.pairs
            .iter()
            .map(|p| {
                let d = views[p.view_a].column(p.col_a) * thetas[p.view_a][p.col_a]
                    - views[p.view_b].column(p.col_b) * thetas[p.view_b][p.col_b];
                d.norm_squared()
            })
            .sum()
    }
}

/// Appends one `n`-row block per pair to an existing system.
pub fn add_paired_rows(
    system: &AugmentedSystem,
    views: &[&Matrix],
    spec: &PairSpec,
) -> Result<AugmentedSystem> {
    let widths: Vec<usize> = system.block_spans.iter().map(|s| s.len).collect();
    if views.len() != widths.len() || views.iter().zip(&widths).any(|(v, w)| v.ncols() != *w) {
        return Err(CoopError::DimensionMismatch(
            "views do not match the system's column blocks".into(),
        ));
    }
    spec.validate(&widths)?;
    let n = views[0].nrows();
    let old_rows = system.x_tilde.nrows();
    let rows = old_rows + n * spec.pairs.len();
    let mut x_tilde = system.x_tilde.clone().resize_vertically(rows, 0.0);
    let y_tilde = system.y_tilde.clone().resize_vertically(rows, 0.0);
    let mut row_blocks = system.row_blocks.clone();
    let scale = math::sqrt(2.0 * spec.rho2);
    for (k, pair) in spec.pairs.iter().enumerate() {
        let start = old_rows + k * n;
        let ca = system.block_spans[pair.view_a].start + pair.col_a;
        let cb = system.block_spans[pair.view_b].start + pair.col_b;
        x_tilde
            .view_mut((start, ca), (n, 1))
            .copy_from(&(views[pair.view_a].column(pair.col_a) * scale));
        x_tilde
            .view_mut((start, cb), (n, 1))
            .copy_from(&(views[pair.view_b].column(pair.col_b) * -scale));
        row_blocks.push(RowBlock {
            kind: RowKind::Paired(*pair),
            start,
            len: n,
        });
    }
    Ok(AugmentedSystem {
        x_tilde,
        y_tilde,
        block_spans: system.block_spans.clone(),
        row_blocks,
        rho: system.rho,
    })
}

/// `(1/2) Σ_{m<m'} ‖X_m θ_m − X_{m'} θ_{m'}‖²` without the `ρ` weight, from fitted values.
pub fn agreement(fitted: &[Vector]) -> f64 {
    view_pairs(fitted.len())
        .map(|(a, b)| (&fitted[a] - &fitted[b]).norm_squared())
        .sum::<f64>()
}

fn fitted_values(views: &[&Matrix], thetas: &[Vector]) -> Result<Vec<Vector>> {
    if views.len() != thetas.len() {
        return Err(CoopError::DimensionMismatch(format!(
            "{} views but {} coefficient blocks",
            views.len(),
            thetas.len()
        )));
    }
    views
        .iter()
        .zip(thetas)
        .enumerate()
        .map(|(m, (v, t))| {
            if v.ncols() != t.len() {
                Err(CoopError::DimensionMismatch(format!(
                    "view {} has {} columns, coefficients have {}",
                    m + 1,
                    v.ncols(),
                    t.len()
                )))
            } else {
                Ok(*v * t)
            }
        })
        .collect()
}

fn concat(thetas: &[Vector]) -> Vec<f64> {
    thetas.iter().flat_map(|t| t.iter().copied()).collect()
}

/// The cooperative objective evaluated directly.
///
/// `penalty.penalty_factors` covers the concatenated features of all views.
pub fn coop_objective(
    views: &[&Matrix],
    y: &Vector,
    thetas: &[Vector],
    rho: f64,
    penalty: &PenaltySpec,
) -> Result<f64> {
    coop_objective_with_pairs(views, y, thetas, rho, penalty, None)
}

pub fn coop_objective_with_pairs(
    views: &[&Matrix],
    y: &Vector,
    thetas: &[Vector],
    rho: f64,
    penalty: &PenaltySpec,
    pairs: Option<&PairSpec>,
) -> Result<f64> {
    check_views(views, y.len())?;
    let fitted = fitted_values(views, thetas)?;
    let beta = concat(thetas);
    if penalty.penalty_factors.len() != beta.len() {
        return Err(CoopError::DimensionMismatch(format!(
            "{} penalty factors for {} coefficients",
            penalty.penalty_factors.len(),
            beta.len()
        )));
    }
    let mut total = Vector::zeros(y.len());
    for f in &fitted {
        total += f;
    }
    let loss = 0.5 * (y - total).norm_squared();
    let agree = 0.5 * rho * agreement(&fitted);
    let paired = pairs.map_or(0.0, |p| p.rho2 * p.discrepancy(views, thetas));
    Ok(loss + agree + paired + penalty.value(&beta))
}

/// `X̃ᵀX̃` assembled from the concatenated view Gram `[X_1..X_M]ᵀ[X_1..X_M]`.
///
/// Diagonal blocks scale by `1 + (M−1)ρ`, off-diagonal blocks by `1 − ρ`; paired
/// features add `2ρ₂` times the corresponding Gram entries. This avoids forming
/// `X̃` when many `ρ` values share the same data.
pub fn augmented_gram(
    base_gram: &Matrix,
    spans: &[BlockSpan],
    rho: f64,
    pairs: Option<&PairSpec>,
) -> Result<Matrix> {
    check_rho(rho)?;
    let m_views = spans.len();
    let mut g = base_gram.clone();
    let diag = 1.0 + (m_views as f64 - 1.0) * rho;
    let off = 1.0 - rho;
    for (a, sa) in spans.iter().enumerate() {
        for (b, sb) in spans.iter().enumerate() {
            let f = if a == b { diag } else { off };
            g.view_mut((sa.start, sb.start), (sa.len, sb.len))
                .scale_mut(f);
        }
    }
    if let Some(spec) = pairs {
        let widths: Vec<usize> = spans.iter().map(|s| s.len).collect();
        spec.validate(&widths)?;
        let w = 2.0 * spec.rho2;
        for p in &spec.pairs {
            let i = spans[p.view_a].start + p.col_a;
            let j = spans[p.view_b].start + p.col_b;
            g[(i, i)] += w * base_gram[(i, i)];
            g[(j, j)] += w * base_gram[(j, j)];
            g[(i, j)] -= w * base_gram[(i, j)];
            g[(j, i)] -= w * base_gram[(j, i)];
        }
    }
    Ok(g)
}

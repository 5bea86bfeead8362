//! Views, standardization and the shared response.
//!
//! Every fitting routine consumes standardized views: each column has mean 0 and
//! unit standard deviation, where the SD uses the population denominator `n`
//! (the glmnet convention). A constant column becomes all zeros and records a
//! sentinel SD of 1, so it stays in place as an inert feature.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoopError, Result};
use crate::math;
use crate::{Matrix, Vector};

/// A raw feature matrix measured on the shared samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DataView {
    name: String,
    matrix: Matrix,
    column_names: Vec<String>,
}

impl DataView {
    /// Builds a view, generating `V1..Vp` when no column names are given.
    pub fn new(
        name: impl Into<String>,
        matrix: Matrix,
        column_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(CoopError::EmptyInput);
        }
        if let Some((idx, _)) = matrix.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (idx % matrix.nrows(), idx / matrix.nrows());
            return Err(CoopError::NonFinite(format!(
                "view matrix at row {}, column {}",
                row + 1,
                col + 1
            )));
        }
        let column_names = match column_names {
            Some(names) => {
                if names.len() != matrix.ncols() {
                    return Err(CoopError::DimensionMismatch(format!(
                        "{} column names for {} columns",
                        names.len(),
                        matrix.ncols()
                    )));
                }
                names
            }
            None => (1..=matrix.ncols()).map(|j| format!("V{j}")).collect(),
        };
        Ok(Self {
            name: name.into(),
            matrix,
            column_names,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Keeps only `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            matrix: self.matrix.select_rows(rows),
            column_names: self.column_names.clone(),
        }
    }
}

/// A standardized view together with the statistics used to produce it.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizedView {
    pub matrix: Matrix,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
    pub source_name: String,
}

impl StandardizedView {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Standardizes new rows with the stored means and SDs.
    pub fn apply(&self, raw: &Matrix) -> Result<Matrix> {
        apply_standardization(raw, &self.column_means, &self.column_sds)
    }

    /// Multiplies by the SDs and adds the means back.
    pub fn destandardize(&self) -> Matrix {
        let mut out = self.matrix.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.column_means[j], self.column_sds[j]);
            col.iter_mut().for_each(|v| *v = *v * s + m);
        }
        out
    }
}

/// Standardizes `raw` column-wise with externally supplied statistics.
pub fn apply_standardization(raw: &Matrix, means: &[f64], sds: &[f64]) -> Result<Matrix> {
    if raw.ncols() != means.len() || means.len() != sds.len() {
        return Err(CoopError::DimensionMismatch(format!(
            "matrix has {} columns, standardization has {}",
            raw.ncols(),
            means.len()
        )));
    }
    let mut out = raw.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (m, s) = (means[j], sds[j]);
        col.iter_mut().for_each(|v| *v = (*v - m) / s);
    }
    Ok(out)
}

/// Mean-centers and scales each column to unit population SD.
pub fn standardize(view: &DataView) -> Result<StandardizedView> {
    let n = view.nrows();
    if n < 2 {
        return Err(CoopError::InsufficientRows { needed: 2, got: n });
    }
    let mut matrix = view.matrix().clone();
    let mut column_means = Vec::with_capacity(view.ncols());
    let mut column_sds = Vec::with_capacity(view.ncols());
    for mut col in matrix.column_iter_mut() {
        let values: Vec<f64> = col.iter().copied().collect();
        let mean = math::mean(&values);
        let sd = math::sqrt(math::variance(&values));
        if sd <= 1e-12 * mean.abs().max(1.0) {
            col.fill(0.0);
            column_means.push(mean);
            column_sds.push(1.0);
        } else {
            col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            column_means.push(mean);
            column_sds.push(sd);
        }
    }
    Ok(StandardizedView {
        matrix,
        column_means,
        column_sds,
        source_name: view.name().to_string(),
    })
}

/// Response family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Gaussian,
    Binomial,
}

/// The shared response. Gaussian values are stored centered; binomial values are 0/1.
#[derive(Clone, Debug, PartialEq)]
pub struct Response {
    pub values: Vector,
    pub mean: f64,
    pub family: Family,
}

pub fn center_response(y: &[f64], family: Family) -> Result<Response> {
    if y.is_empty() {
        return Err(CoopError::EmptyInput);
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(CoopError::NonFinite(format!("response at row {}", i + 1)));
    }
    let mean = math::mean(y);
    match family {
        Family::Gaussian => Ok(Response {
            values: Vector::from_iterator(y.len(), y.iter().map(|v| v - mean)),
            mean,
            family,
        }),
        Family::Binomial => {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(CoopError::Domain(format!(
                    "binomial response must be 0 or 1, found {} at row {}",
                    y[i],
                    i + 1
                )));
            }
            Ok(Response {
                values: Vector::from_column_slice(y),
                mean,
                family,
            })
        }
    }
}

/// Several standardized views sharing one response.
///
/// The raw views are kept so that cross-validation can re-standardize on
/// training rows only.
#[derive(Clone, Debug)]
pub struct MultiViewDataset {
    views: Vec<StandardizedView>,
    response: Response,
    raw_views: Vec<DataView>,
    raw_response: Vec<f64>,
}

impl MultiViewDataset {
    pub fn new(raw_views: Vec<DataView>, y: &[f64], family: Family) -> Result<Self> {
        if raw_views.is_empty() {
            return Err(invalid("views", "at least one view is required"));
        }
        let n = y.len();
        for v in &raw_views {
            if v.nrows() != n {
                return Err(CoopError::DimensionMismatch(format!(
                    "view `{}` has {} rows, response has {}",
                    v.name(),
                    v.nrows(),
                    n
                )));
            }
        }
        for (i, v) in raw_views.iter().enumerate() {
            if raw_views[..i].iter().any(|w| w.name() == v.name()) {
                return Err(invalid("views", format!("duplicate view name `{}`", v.name())));
            }
        }
        let views = raw_views
            .iter()
            .map(standardize)
            .collect::<Result<Vec<_>>>()?;
        let response = center_response(y, family)?;
        Ok(Self {
            views,
            response,
            raw_views,
            raw_response: y.to_vec(),
        })
    }

    /// Convenience constructor from bare matrices named `view1..viewM`.
    pub fn from_matrices(matrices: Vec<Matrix>, y: &[f64], family: Family) -> Result<Self> {
        let views = matrices
            .into_iter()
            .enumerate()
            .map(|(i, m)| DataView::new(format!("view{}", i + 1), m, None))
            .collect::<Result<Vec<_>>>()?;
        Self::new(views, y, family)
    }

    pub fn n(&self) -> usize {
        self.raw_response.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[StandardizedView] {
        &self.views
    }

    pub fn raw_views(&self) -> &[DataView] {
        &self.raw_views
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    pub fn raw_response(&self) -> &[f64] {
        &self.raw_response
    }

    pub fn family(&self) -> Family {
        self.response.family
    }

    pub fn view_matrices(&self) -> Vec<&Matrix> {
        self.views.iter().map(|v| &v.matrix).collect()
    }

    pub fn view_names(&self) -> Vec<String> {
        self.views.iter().map(|v| v.source_name.clone()).collect()
    }

    /// Column count of each view.
    pub fn view_widths(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    pub fn total_features(&self) -> usize {
        self.views.iter().map(|v| v.ncols()).sum()
    }

    /// Column-concatenation of the standardized views.
    pub fn concatenated(&self) -> Matrix {
        hstack(&self.view_matrices())
    }

    /// Restricts to `rows` and re-standardizes from the raw data of those rows.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(invalid("rows", format!("row {r} out of range")));
        }
        let raw_views = self.raw_views.iter().map(|v| v.select_rows(rows)).collect();
        let y: Vec<f64> = rows.iter().map(|&r| self.raw_response[r]).collect();
        Self::new(raw_views, &y, self.family())
    }

    /// Keeps only the views at `indices`.
    pub fn select_views(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("views", "at least one view is required"));
        }
        let mut out = Self {
            views: Vec::with_capacity(indices.len()),
            response: self.response.clone(),
            raw_views: Vec::with_capacity(indices.len()),
            raw_response: self.raw_response.clone(),
        };
        for &i in indices {
            if i >= self.n_views() {
                return Err(invalid("views", format!("view index {i} out of range")));
            }
            out.views.push(self.views[i].clone());
            out.raw_views.push(self.raw_views[i].clone());
        }
        Ok(out)
    }

    /// Standardizes raw matrices of new samples with this dataset's statistics.
    pub fn standardize_new(&self, raw: &[Matrix]) -> Result<Vec<Matrix>> {
        if raw.len() != self.n_views() {
            return Err(CoopError::DimensionMismatch(format!(
                "{} views supplied, model has {}",
                raw.len(),
                self.n_views()
            )));
        }
        raw.iter()
            .zip(&self.views)
            .map(|(m, v)| v.apply(m))
            .collect()
    }
}

/// Horizontally concatenates matrices with the same row count.
pub fn hstack(blocks: &[&Matrix]) -> Matrix {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let p: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(n, p);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((0, offset), (n, b.ncols())).copy_from(*b);
        offset += b.ncols();
    }
    out
}

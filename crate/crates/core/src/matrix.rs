//! Data matrix container, demeaning and row/column/double standardization.
//!
//! All variances use the population convention (divide by the number of
//! entries), so a doubly standardized m x n matrix has every row sum of squares
//! equal to n and every column sum of squares equal to m.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Axis, Error, Result};

/// Tolerance used when verifying standardization states.
pub const STD_TOL: f64 = 1e-8;

/// Default iteration cap for [`double_standardize`].
pub const DEFAULT_MAX_ITER: usize = 50;

/// What has been done to a [`DataMatrix`] so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    Raw,
    Demeaned,
    RowStd,
    ColStd,
    DoubleStd,
}

/// Dense m x n matrix of finite reals, rows = features, columns = samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    state: Standardization,
}

impl DataMatrix {
    /// Wraps `values` as a raw matrix. Requires at least 2 rows, 2 columns and
    /// finite entries.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (m, n) = values.shape();
        if m < 2 || n < 2 {
            return Err(Error::invalid(format!(
                "data matrix must be at least 2 x 2, got {m} x {n}"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                pos % m,
                pos / m
            )));
        }
        Ok(DataMatrix {
            values,
            state: Standardization::Raw,
        })
    }

    /// Builds a raw matrix from row-major data.
    pub fn from_row_slice(m: usize, n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::invalid(format!(
                "expected {} values for a {m} x {n} matrix, got {}",
                m * n,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(m, n, data))
    }

    /// Wraps `values` and tags it with `state` after checking that the state
    /// actually holds within `tol`.
    pub fn with_verified_state(
        values: DMatrix<f64>,
        state: Standardization,
        tol: f64,
    ) -> Result<Self> {
        let mut x = Self::new(values)?;
        x.state = state;
        if !x.satisfies(state, tol) {
            return Err(Error::invalid(format!(
                "matrix does not satisfy the {state:?} conditions within {tol:e}"
            )));
        }
        Ok(x)
    }

    pub(crate) fn from_parts(values: DMatrix<f64>, state: Standardization) -> Self {
        DataMatrix { values, state }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn state(&self) -> Standardization {
        self.state
    }

    /// Returns the matrix with columns reordered so that new column `j` is old
    /// column `perm[j]`. The standardization state is preserved.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let n = self.ncols();
        if perm.len() != n || !is_permutation(perm) {
            return Err(Error::invalid("column permutation is not a permutation of 0..n"));
        }
        let values = DMatrix::from_fn(self.nrows(), n, |i, j| self.values[(i, perm[j])]);
        Ok(Self::from_parts(values, self.state))
    }

    /// Checks the defining conditions of `state` within `tol`.
    pub fn satisfies(&self, state: Standardization, tol: f64) -> bool {
        let (row, col) = self.deviations();
        match state {
            Standardization::Raw => true,
            Standardization::Demeaned => row.mean <= tol && col.mean <= tol,
            Standardization::RowStd => row.max() <= tol,
            Standardization::ColStd => col.max() <= tol,
            Standardization::DoubleStd => row.max() <= tol && col.max() <= tol,
        }
    }

    /// Largest deviation of any row or column mean from 0 and any row or column
    /// variance from 1.
    pub fn standardization_deviation(&self) -> f64 {
        let (row, col) = self.deviations();
        row.max().max(col.max())
    }

    fn deviations(&self) -> (AxisDeviation, AxisDeviation) {
        let x = &self.values;
        let mut row = AxisDeviation::default();
        for r in x.row_iter() {
            let (mean, var) = mean_var(r.iter().copied());
            row.update(mean, var);
        }
        let mut col = AxisDeviation::default();
        for c in x.column_iter() {
            let (mean, var) = mean_var(c.iter().copied());
            col.update(mean, var);
        }
        (row, col)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct AxisDeviation {
    mean: f64,
    var: f64,
}

impl AxisDeviation {
    fn update(&mut self, mean: f64, var: f64) {
        self.mean = self.mean.max(mean.abs());
        self.var = self.var.max((var - 1.0).abs());
    }

    fn max(&self) -> f64 {
        self.mean.max(self.var)
    }
}

pub(crate) fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Population mean and variance.
/// Mean and population variance, two-pass.
pub fn mean_var(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let count = v.len() as f64;
    let mean = v.iter().sum::<f64>() / count;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count;
    (mean, var)
}

/// Subtracts row and column means: `x_ij - xbar_i. - xbar_.j + xbar_..`.
pub fn demean(x: &DataMatrix) -> DataMatrix {
    let v = &x.values;
    let (m, n) = v.shape();
    let row_means: Vec<f64> = v.row_iter().map(|r| r.sum() / n as f64).collect();
    let col_means: Vec<f64> = v.column_iter().map(|c| c.sum() / m as f64).collect();
    let grand = row_means.iter().sum::<f64>() / m as f64;
    let mut out = DMatrix::from_fn(m, n, |i, j| v[(i, j)] - row_means[i] - col_means[j] + grand);
    // one more centering pass removes the O(eps) residue the grand mean leaves behind
    center_rows(&mut out);
    center_columns(&mut out);
    DataMatrix::from_parts(out, Standardization::Demeaned)
}

fn center_rows(v: &mut DMatrix<f64>) {
    let n = v.ncols() as f64;
    for mut r in v.row_iter_mut() {
        let mean = r.sum() / n;
        r.add_scalar_mut(-mean);
    }
}

fn center_columns(v: &mut DMatrix<f64>) {
    let m = v.nrows() as f64;
    for mut c in v.column_iter_mut() {
        let mean = c.sum() / m;
        c.add_scalar_mut(-mean);
    }
}

fn is_degenerate(var: f64, scale: f64) -> bool {
    !(var > 1e-24 * scale * scale) || var == 0.0
}

/// Centers each column and scales it to population variance 1.
pub fn standardize_columns(x: &DataMatrix) -> Result<DataMatrix> {
    let mut v = x.values.clone();
    standardize_columns_in_place(&mut v)?;
    Ok(DataMatrix::from_parts(v, Standardization::ColStd))
}

/// Centers each row and scales it to population variance 1.
pub fn standardize_rows(x: &DataMatrix) -> Result<DataMatrix> {
    let mut v = x.values.clone();
    standardize_rows_in_place(&mut v)?;
    Ok(DataMatrix::from_parts(v, Standardization::RowStd))
}

pub(crate) fn standardize_columns_in_place(v: &mut DMatrix<f64>) -> Result<()> {
    for (j, mut c) in v.column_iter_mut().enumerate() {
        let scale = c.amax();
        let (mean, var) = mean_var(c.iter().copied());
        if is_degenerate(var, scale) {
            return Err(Error::DegenerateAxis {
                axis: Axis::Column,
                index: j,
            });
        }
        let sd = var.sqrt();
        c.apply(|e| *e = (*e - mean) / sd);
    }
    Ok(())
}

pub(crate) fn standardize_rows_in_place(v: &mut DMatrix<f64>) -> Result<()> {
    let n = v.ncols();
    let mut buf = vec![0.0; n];
    for (i, mut r) in v.row_iter_mut().enumerate() {
        for (b, e) in buf.iter_mut().zip(r.iter()) {
            *b = *e;
        }
        let scale = buf.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let (mean, var) = mean_var(buf.iter().copied());
        if is_degenerate(var, scale) {
            return Err(Error::DegenerateAxis {
                axis: Axis::Row,
                index: i,
            });
        }
        let sd = var.sqrt();
        r.apply(|e| *e = (*e - mean) / sd);
    }
    Ok(())
}

/// Which standardization each double-standardization sweep applies first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    #[default]
    ColumnFirst,
    RowFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleStdOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub order: SweepOrder,
}

impl Default for DoubleStdOptions {
    fn default() -> Self {
        DoubleStdOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: STD_TOL,
            order: SweepOrder::ColumnFirst,
        }
    }
}

/// Record of a double standardization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationLog {
    /// Number of column+row sweeps applied (0 if the input already qualified).
    pub iterations: usize,
    /// Maximum row/column mean or variance deviation after the final sweep.
    pub final_deviation: f64,
    pub order: SweepOrder,
    /// Deviation after each sweep.
    pub history: Vec<f64>,
}

/// Alternates column and row standardization until every row and column has
/// mean 0 and variance 1 within `opts.tol`.
pub fn double_standardize(
    x: &DataMatrix,
    opts: &DoubleStdOptions,
) -> Result<(DataMatrix, StandardizationLog)> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let initial = x.standardization_deviation();
    if initial < opts.tol {
        let log = StandardizationLog {
            iterations: 0,
            final_deviation: initial,
            order: opts.order,
            history: Vec::new(),
        };
        return Ok((
            DataMatrix::from_parts(x.values.clone(), Standardization::DoubleStd),
            log,
        ));
    }

    let mut v = x.values.clone();
    let mut history = Vec::new();
    for iter in 1..=opts.max_iter {
        match opts.order {
            SweepOrder::ColumnFirst => {
                standardize_columns_in_place(&mut v)?;
                standardize_rows_in_place(&mut v)?;
            }
            SweepOrder::RowFirst => {
                standardize_rows_in_place(&mut v)?;
                standardize_columns_in_place(&mut v)?;
            }
        }
        let current = DataMatrix::from_parts(v, Standardization::DoubleStd);
        let dev = current.standardization_deviation();
        history.push(dev);
        if dev < opts.tol {
            let log = StandardizationLog {
                iterations: iter,
                final_deviation: dev,
                order: opts.order,
                history,
            };
            return Ok((current, log));
        }
        v = current.values;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        deviation: history.last().copied().unwrap_or(initial),
    })
}

/// Replaces each column by its normal scores `Phi^-1((rank - 1/2) / m)`, with
/// tied entries sharing their average rank.
pub fn normal_scores_columns(x: &DataMatrix) -> DataMatrix {
    let std_normal = Normal::standard();
    let (m, n) = x.values.shape();
    let mut out = DMatrix::zeros(m, n);
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for j in 0..n {
        let col = x.values.column(j);
        order.clear();
        order.extend(0..m);
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && col[order[end]] == col[order[start]] {
                end += 1;
            }
            // ranks start+1 ..= end, averaged
            let rank = (start + end + 1) as f64 / 2.0;
            let score = std_normal.inverse_cdf((rank - 0.5) / m as f64);
            for &i in &order[start..end] {
                out[(i, j)] = score;
            }
            start = end;
        }
    }
    DataMatrix::from_parts(out, Standardization::Raw)
}

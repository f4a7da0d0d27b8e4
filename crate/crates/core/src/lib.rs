//! Tests of column-wise independence for data matrices whose rows are
//! themselves correlated.
//!
//! The crate standardizes an m x n matrix (rows = features, columns =
//! samples), summarizes its row and column correlation through the spectrum,
//! estimates the total row correlation `alpha` and the effective sample size
//! `m_tilde`, and runs permutation, eigenratio, bilinear and outlier-scan
//! tests whose null distributions account for `m_tilde`.
//!
//! Monte Carlo work runs on rayon when the default `parallel` feature is on and
//! sequentially otherwise; results are identical either way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod correlation;
pub mod error;
pub mod exec;
pub mod fdr;
pub mod io;
pub mod matrix;
pub mod normal;
pub mod permutation;
pub mod spectral;
pub mod zscore;

pub use nalgebra;

pub use audit::{audit, emit, AuditConfig, AuditReport, Format};
pub use correlation::{
    alpha_corrected, correlation_report, demeaned_cov_transform, effective_sample_size, offdiag_moments,
    AlphaEstimator, CorrelationReport, ReportOptions,
};
pub use error::{Axis, Error, Result, Warning};
pub use fdr::{bh_fdr, corr_null_pvalue, scan_column_pairs, OutlierReport, ScanNull, Tail};
pub use matrix::{
    demean, double_standardize, standardize_columns, standardize_rows, DataMatrix, DoubleStdOptions,
    Standardization, StandardizationLog, SweepOrder,
};
pub use permutation::{block_basis, perm_pvalue, BlockBasis, PValueRule, PermOptions, PermStatistic, TestResult};
pub use spectral::{spectral, SpectralSummary};

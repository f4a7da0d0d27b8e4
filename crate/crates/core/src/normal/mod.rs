//! Normal-theory tools: matrix-normal and Wishart simulation, the eigenratio
//! test, bilinear statistics and their moments.

pub mod bilinear;
pub mod eigenratio;
pub mod simulate;
pub mod wishart;

pub use bilinear::{bilinear_test, trace_stat_moments, two_sample_w, two_sample_w_for_labels, BilinearResult};
pub use eigenratio::{
    block_alpha, block_correlation, calibrate_gamma, eigenratio, eigenratio_null, eigenratio_of_matrix,
    eigenratio_test, observed_eigenratio, Calibration, CalibrationOptions, NullModel,
};
pub use simulate::{
    block_of, psd_sqrt, sample_matrix_normal, sample_matrix_normal_with, scaled_column_cov, DeltaModel,
    SigmaModel, SimulationSpec,
};
pub use wishart::{sample_wishart, WishartSampler};

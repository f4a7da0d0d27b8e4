//! Bilinear statistics `tau^2 = w' D w` and moments of trace statistics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Two-sample contrast: `sqrt(n1 n2 / (n1 + n2)) * (-1/n1, ..., -1/n1, 1/n2, ..., 1/n2)`.
/// Has unit norm and zero sum.
pub fn two_sample_w(n1: usize, n2: usize) -> Result<DVector<f64>> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("both groups need at least one column"));
    }
    let labels: Vec<bool> = (0..n1 + n2).map(|j| j >= n1).collect();
    two_sample_w_for_labels(&labels)
}

/// Two-sample contrast for arbitrary column labels (`false` = first group,
/// `true` = second group).
pub fn two_sample_w_for_labels(labels: &[bool]) -> Result<DVector<f64>> {
    let n2 = labels.iter().filter(|&&g| g).count();
    let n1 = labels.len() - n2;
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("both groups need at least one column"));
    }
    let (a, b) = (n1 as f64, n2 as f64);
    let scale = (a * b / (a + b)).sqrt();
    Ok(DVector::from_iterator(
        labels.len(),
        labels.iter().map(|&g| if g { scale / b } else { -scale / a }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearResult {
    pub tau_hat: f64,
    pub tau_hat_sq: f64,
    /// Coefficient of variation of `tau_hat` under the effective sample size,
    /// `(2 m_tilde)^{-1/2}`.
    pub cv: f64,
    pub m_tilde: f64,
    pub w: Vec<f64>,
    pub w_norm_sq: f64,
    /// `(tau_hat - |w|) / (cv * |w|)`: standard errors above the null value
    /// `tau = |w|` (Delta = I).
    pub std_distance: f64,
    /// Upper tail of `tau_hat^2` under `Delta = I`, using the scaled
    /// chi-square approximation `m_tilde tau_hat^2 / |w|^2 ~ chi2(m_tilde)`.
    pub p_value: f64,
    #[serde(skip)]
    pub z_scores: Vec<f64>,
}

/// `Z = X w`, `tau_hat^2 = mean(Z_i^2)`.
pub fn bilinear_test(x: &DataMatrix, w: &DVector<f64>, m_tilde: f64) -> Result<BilinearResult> {
    if w.len() != x.ncols() {
        return Err(Error::invalid(format!(
            "contrast has length {} but the matrix has {} columns",
            w.len(),
            x.ncols()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) || w.norm_squared() == 0.0 {
        return Err(Error::invalid("contrast must be finite and nonzero"));
    }
    if !(m_tilde > 0.0) {
        return Err(Error::invalid(format!("effective sample size must be positive, got {m_tilde}")));
    }
    let z = x.values() * w;
    let tau_hat_sq = z.norm_squared() / x.nrows() as f64;
    let tau_hat = tau_hat_sq.sqrt();
    let cv = (2.0 * m_tilde).powf(-0.5);
    let w_norm_sq = w.norm_squared();
    let tau0 = w_norm_sq.sqrt();
    let chi = ChiSquared::new(m_tilde).map_err(|e| Error::invalid(e.to_string()))?;
    let p_value = chi.sf(m_tilde * tau_hat_sq / w_norm_sq);
    Ok(BilinearResult {
        tau_hat,
        tau_hat_sq,
        cv,
        m_tilde,
        w: w.iter().copied().collect(),
        w_norm_sq,
        std_distance: (tau_hat - tau0) / (cv * tau0),
        p_value,
        z_scores: z.iter().copied().collect(),
    })
}

/// Null mean and variance of `tr(D B)` when `D` estimates the identity with
/// effective sample size `m_tilde`: `(tr B, 2 tr(B^2) / m_tilde)`.
pub fn trace_stat_moments(b: &DMatrix<f64>, m_tilde: f64) -> Result<(f64, f64)> {
    if !b.is_square() {
        return Err(Error::invalid("B must be square"));
    }
    let trace = b.trace();
    let trace_sq: f64 = b.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum();
    Ok((trace, 2.0 * trace_sq / m_tilde))
}

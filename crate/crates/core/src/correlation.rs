//! Row and column covariance summaries, total correlation and effective sample
//! size.
//!
//! For a demeaned m x n matrix the n^2 entries of `X'X/m` and the m^2 entries
//! of `XX'/n` share mean 0 and variance `c2 = sum(e_k^2) / (mn)^2`, where `e_k`
//! are the eigenvalues of `X'X`. The m x m row covariance is never formed here;
//! row-side quantities come from sampled row pairs or from the spectrum.

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result, Warning};
use crate::exec;
use crate::matrix::DataMatrix;
use crate::spectral::{gram_over_rows, SpectralSummary};

/// `X'X / m`, the n x n column covariance.
pub fn column_cov(x: &DataMatrix) -> DMatrix<f64> {
    gram_over_rows(x.values())
}

/// Empirical mean and population variance of all entries of `a`.
pub fn entry_moments(a: &DMatrix<f64>) -> (f64, f64) {
    crate::matrix::mean_var(a.iter().copied())
}

/// `sum(e_k^2) / (mn)^2`.
pub fn c2_from_spectrum(s: &SpectralSummary, m: usize, n: usize) -> f64 {
    let mn = (m * n) as f64;
    s.eigenvalues.iter().map(|e| e * e).sum::<f64>() / (mn * mn)
}

/// Number of unordered row pairs `i < i'` among `m` rows.
pub fn pair_count(m: usize) -> usize {
    m * (m.saturating_sub(1)) / 2
}

/// Maps a linear index over pairs `(0,1), (0,2), ..., (0,m-1), (1,2), ...` back
/// to the pair.
pub fn pair_from_index(k: usize, m: usize) -> (usize, usize) {
    debug_assert!(k < pair_count(m));
    // first row whose block of pairs ends beyond k
    let mf = m as f64;
    let kf = k as f64;
    let disc = (2.0 * mf - 1.0) * (2.0 * mf - 1.0) - 8.0 * kf;
    let mut i = ((2.0 * mf - 1.0 - disc.sqrt()) / 2.0).floor().max(0.0) as usize;
    let start = |i: usize| i * (2 * m - i - 1) / 2;
    while i > 0 && start(i) > k {
        i -= 1;
    }
    while i + 1 < m && start(i + 1) <= k {
        i += 1;
    }
    (i, i + 1 + (k - start(i)))
}

/// Rows centered and scaled to unit Euclidean norm; `None` for constant rows.
fn normalized_rows(x: &DataMatrix) -> Vec<Option<Vec<f64>>> {
    x.values()
        .row_iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.sum() / n;
            let centered: Vec<f64> = r.iter().map(|v| v - mean).collect();
            let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if norm > 1e-12 * scale * n.sqrt() && norm > 0.0 {
                Some(centered.into_iter().map(|v| v / norm).collect())
            } else {
                None
            }
        })
        .collect()
}

/// Pearson correlations of `count` distinct row pairs drawn uniformly without
/// replacement. The same seed always yields the same pairs in the same order.
pub fn row_corr_sample(x: &DataMatrix, count: usize, seed: u64) -> Result<Vec<f64>> {
    let m = x.nrows();
    let total = pair_count(m);
    if count > total {
        return Err(Error::invalid(format!(
            "requested {count} row pairs but only {total} exist"
        )));
    }
    let mut rng = exec::rng(seed);
    let picks = index::sample(&mut rng, total, count).into_vec();
    let rows = normalized_rows(x);
    exec::try_map_indices(picks.len(), |t| {
        let (i, j) = pair_from_index(picks[t], m);
        match (&rows[i], &rows[j]) {
            (Some(a), Some(b)) => Ok(a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>().clamp(-1.0, 1.0)),
            (None, _) => Err(Error::DegenerateAxis { axis: Axis::Row, index: i }),
            (_, None) => Err(Error::DegenerateAxis { axis: Axis::Row, index: j }),
        }
    })
}

/// Mean and variance of the off-diagonal entries of the column correlation
/// matrix of a doubly standardized matrix, as implied by `c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalMoments {
    pub mean: f64,
    /// Clamped at 0.
    pub variance: f64,
}

/// `mean = -1/(n-1)`, `variance = n/(n-1) * (c2 - 1/(n-1))`.
pub fn offdiag_moments(c2: f64, n: usize) -> Result<OffDiagonalMoments> {
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 columns, got {n}")));
    }
    let nf = n as f64;
    let mean = -1.0 / (nf - 1.0);
    let variance = (nf / (nf - 1.0)) * (c2 - 1.0 / (nf - 1.0));
    Ok(OffDiagonalMoments {
        mean,
        variance: variance.max(0.0),
    })
}

/// Total correlation estimates built from the raw variance of sampled row
/// correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimates {
    /// Empirical-Bayes estimate that removes the sampling variance of each row
    /// correlation, `A^2 - 3 A^4/(n-5)` with `A^2 = ((n-3) abar^2 - 1)/(n-5)`.
    pub corrected_sq: f64,
    /// Diagonal-removal form `n/(n-1) * (abar^2 - 1/(n-1))`.
    pub simple_sq: f64,
}

pub fn alpha_corrected(alpha_bar_sq: f64, n: usize) -> Result<AlphaEstimates> {
    if n <= 5 {
        return Err(Error::invalid(format!(
            "corrected total correlation needs n >= 6, got {n}"
        )));
    }
    let nf = n as f64;
    let a2 = ((nf - 3.0) * alpha_bar_sq - 1.0) / (nf - 5.0);
    let corrected = a2 - 3.0 / (nf - 5.0) * a2 * a2;
    let simple = (nf / (nf - 1.0)) * (alpha_bar_sq - 1.0 / (nf - 1.0));
    Ok(AlphaEstimates {
        corrected_sq: if a2 > 0.0 { corrected.max(0.0) } else { 0.0 },
        simple_sq: simple.max(0.0),
    })
}

/// `m / (1 + (m-1) alpha^2)`.
pub fn effective_sample_size(m: usize, alpha_sq: f64) -> f64 {
    let mf = m as f64;
    mf / (1.0 + (mf - 1.0) * alpha_sq)
}

/// Covariance after removing row and column means:
/// `D_jk - D_.k - D_j. + D_..`.
pub fn demeaned_cov_transform(delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = delta.nrows();
    if delta.ncols() != n || n == 0 {
        return Err(Error::invalid("covariance must be a non-empty square matrix"));
    }
    let nf = n as f64;
    let row_means: Vec<f64> = delta.row_iter().map(|r| r.sum() / nf).collect();
    let col_means: Vec<f64> = delta.column_iter().map(|c| c.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    Ok(DMatrix::from_fn(n, n, |j, k| {
        delta[(j, k)] - col_means[k] - row_means[j] + grand
    }))
}

/// Which total-correlation estimate feeds the effective sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaEstimator {
    /// From the spectrum via `c2` and the off-diagonal variance.
    #[default]
    EigenC2,
    /// Empirical-Bayes corrected estimate from sampled row correlations.
    Corrected,
    /// Simple diagonal-removal estimate from sampled row correlations.
    Simple,
}

/// Settings for [`correlation_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Row pairs sampled for the row-correlation estimators (capped at the
    /// number of available pairs).
    pub row_pairs: usize,
    pub seed: u64,
    pub estimator: AlphaEstimator,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            row_pairs: 10_000,
            seed: 0,
            estimator: AlphaEstimator::EigenC2,
        }
    }
}

/// Threshold on `|mean row correlation|` above which the corrected estimator's
/// zero-mean assumption is flagged.
pub const ROW_MEAN_WARNING: f64 = 0.05;

/// Correlation summary of a doubly standardized matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub c2: f64,
    pub mu_hat: f64,
    pub alpha_hat: f64,
    pub alpha_tilde: Option<f64>,
    pub alpha_corrected: Option<f64>,
    pub alpha_bar: Option<f64>,
    pub row_corr_mean: Option<f64>,
    pub m_tilde: f64,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub estimator: AlphaEstimator,
    pub mean_shift_warning: bool,
}

impl CorrelationReport {
    /// The total correlation selected by `estimator`.
    pub fn alpha(&self) -> f64 {
        match self.estimator {
            AlphaEstimator::EigenC2 => self.alpha_hat,
            AlphaEstimator::Corrected => self.alpha_corrected.unwrap_or(self.alpha_hat),
            AlphaEstimator::Simple => self.alpha_tilde.unwrap_or(self.alpha_hat),
        }
    }

    pub fn warnings(&self) -> Vec<Warning> {
        match (self.mean_shift_warning, self.row_corr_mean) {
            (true, Some(mean)) => vec![Warning::NonzeroRowCorrelationMean { mean }],
            _ => Vec::new(),
        }
    }
}

/// Builds a [`CorrelationReport`] for a doubly standardized `x` with spectrum `s`.
pub fn correlation_report(
    x: &DataMatrix,
    s: &SpectralSummary,
    opts: &ReportOptions,
) -> Result<CorrelationReport> {
    let (m, n) = (x.nrows(), x.ncols());
    let c2 = c2_from_spectrum(s, m, n);
    let off = offdiag_moments(c2, n)?;
    let alpha_hat = off.variance.sqrt();

    let pairs = opts.row_pairs.min(pair_count(m));
    let (alpha_bar, row_mean, estimates) = if pairs >= 2 {
        let r = row_corr_sample(x, pairs, opts.seed)?;
        let (mean, var) = crate::matrix::mean_var(r.iter().copied());
        let est = if n > 5 { Some(alpha_corrected(var, n)?) } else { None };
        (Some(var.sqrt()), Some(mean), est)
    } else {
        (None, None, None)
    };

    let mut report = CorrelationReport {
        c2,
        mu_hat: off.mean,
        alpha_hat,
        alpha_tilde: estimates.map(|e| e.simple_sq.sqrt()),
        alpha_corrected: estimates.map(|e| e.corrected_sq.sqrt()),
        alpha_bar,
        row_corr_mean: row_mean,
        m_tilde: 0.0,
        n,
        m,
        k: s.rank(),
        estimator: opts.estimator,
        mean_shift_warning: row_mean.is_some_and(|v| v.abs() > ROW_MEAN_WARNING),
    };
    let alpha = report.alpha();
    report.m_tilde = effective_sample_size(m, alpha * alpha);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{demean, double_standardize, DoubleStdOptions};
    use crate::spectral::{spectral, RANK_TOL};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(m: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = crate::exec::rng(seed);
        DataMatrix::new(DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    fn doubly(m: usize, n: usize, seed: u64) -> DataMatrix {
        double_standardize(&random(m, n, seed), &DoubleStdOptions::default())
            .unwrap()
            .0
    }

    #[test]
    fn orthogonal_columns_give_identity() {
        // columns of a 4x2 Hadamard-like matrix, each with norm^2 = m
        let x = DataMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0])
            .unwrap();
        let c = column_cov(&x);
        assert!((c - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn column_cov_matches_double_loop() {
        let x = demean(&random(6, 3, 1));
        let c = column_cov(&x);
        let v = x.values();
        for j in 0..3 {
            for k in 0..3 {
                let mut s = 0.0;
                for i in 0..6 {
                    s += v[(i, j)] * v[(i, k)];
                }
                assert!((c[(j, k)] - s / 6.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn doubly_standardized_cov_has_unit_diagonal() {
        let c = column_cov(&doubly(50, 6, 2));
        for j in 0..6 {
            assert!((c[(j, j)] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn pair_index_roundtrip() {
        for m in 2..30 {
            let mut k = 0;
            for i in 0..m {
                for j in (i + 1)..m {
                    assert_eq!(pair_from_index(k, m), (i, j), "m={m} k={k}");
                    k += 1;
                }
            }
            assert_eq!(k, pair_count(m));
        }
    }

    #[test]
    fn duplicate_rows_correlate_perfectly() {
        let x = DataMatrix::from_row_slice(2, 4, &[1.0, 3.0, 2.0, 7.0, 1.0, 3.0, 2.0, 7.0]).unwrap();
        let r = row_corr_sample(&x, 1, 0).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_sample_matches_enumeration() {
        let x = random(4, 7, 3);
        let mut got = row_corr_sample(&x, 6, 99).unwrap();
        let v = x.values();
        let mut oracle = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let a: Vec<f64> = v.row(i).iter().copied().collect();
                let b: Vec<f64> = v.row(j).iter().copied().collect();
                let ma = a.iter().sum::<f64>() / 7.0;
                let mb = b.iter().sum::<f64>() / 7.0;
                let sab: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
                let saa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
                let sbb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
                oracle.push(sab / (saa * sbb).sqrt());
            }
        }
        got.sort_by(f64::total_cmp);
        oracle.sort_by(f64::total_cmp);
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-13);
        }
    }

    #[test]
    fn row_sampling_is_seeded() {
        let x = random(40, 5, 4);
        assert_eq!(row_corr_sample(&x, 50, 7).unwrap(), row_corr_sample(&x, 50, 7).unwrap());
        assert_ne!(row_corr_sample(&x, 50, 7).unwrap(), row_corr_sample(&x, 50, 8).unwrap());
        assert!(row_corr_sample(&x, pair_count(40) + 1, 7).is_err());
    }

    #[test]
    fn equal_eigenvalues_give_c2_one_over_k() {
        // scaled centering matrix: doubly standardized with n-1 equal eigenvalues
        let n = 4;
        let scale = (n as f64 / (1.0 - 1.0 / n as f64)).sqrt();
        let c = (DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)) * scale;
        let x = DataMatrix::new(c).unwrap();
        assert!(x.satisfies(crate::matrix::Standardization::DoubleStd, 1e-12));
        let s = spectral(&x, RANK_TOL).unwrap();
        assert_eq!(s.rank(), 3);
        assert!((c2_from_spectrum(&s, 4, 4) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn c2_matches_double_sum() {
        let x = demean(&random(8, 5, 5));
        let s = spectral(&x, RANK_TOL).unwrap();
        let c = column_cov(&x);
        let direct = c.iter().map(|v| v * v).sum::<f64>() / 25.0;
        assert!((c2_from_spectrum(&s, 8, 5) - direct).abs() / direct < 1e-10);
    }

    #[test]
    fn offdiag_moments_reference_value() {
        let o = offdiag_moments(0.283 * 0.283, 44).unwrap();
        assert!((o.mean + 0.023).abs() < 5e-4);
        assert!((o.variance.sqrt() - 0.241).abs() < 5e-4);
    }

    #[test]
    fn offdiag_variance_cancels_at_threshold() {
        let o = offdiag_moments(1.0 / 9.0, 10).unwrap();
        assert!(o.variance.abs() < 1e-16);
        assert_eq!(offdiag_moments(0.0, 10).unwrap().variance, 0.0);
    }

    #[test]
    fn offdiag_moments_match_enumeration() {
        let x = doubly(30, 8, 6);
        let s = spectral(&x, RANK_TOL).unwrap();
        let c = column_cov(&x);
        let off: Vec<f64> = (0..8)
            .flat_map(|j| (0..8).filter(move |&k| k != j).map(move |k| (j, k)))
            .map(|(j, k)| c[(j, k)])
            .collect();
        assert_eq!(off.len(), 56);
        let (mean, var) = crate::matrix::mean_var(off.iter().copied());
        let o = offdiag_moments(c2_from_spectrum(&s, 30, 8), 8).unwrap();
        assert!((o.mean - mean).abs() < 1e-10);
        assert!((o.variance - var).abs() < 1e-10);
    }

    #[test]
    fn corrected_alpha_vanishes_with_numerator() {
        let e = alpha_corrected(1.0 / 41.0, 44).unwrap();
        assert!(e.corrected_sq.abs() < 1e-15);
        assert!(alpha_corrected(0.1, 5).is_err());
        // below the noise floor everything clamps to 0
        let e = alpha_corrected(0.001, 44).unwrap();
        assert_eq!((e.corrected_sq, e.simple_sq), (0.0, 0.0));
    }

    #[test]
    fn effective_sample_size_limits() {
        assert_eq!(effective_sample_size(500, 0.0), 500.0);
        let big = effective_sample_size(100_000_000, 0.04);
        assert!((big - 25.0).abs() < 1e-4);
        let a = effective_sample_size(20_426, 0.241 * 0.241);
        assert!((a - 17.2).abs() < 0.05);
    }

    #[test]
    fn demeaned_transform_of_identity_and_constant() {
        let n = 5;
        let t = demeaned_cov_transform(&DMatrix::identity(n, n)).unwrap();
        let expect = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        assert!((t - expect).amax() < 1e-15);
        let z = demeaned_cov_transform(&DMatrix::from_element(n, n, 3.5)).unwrap();
        assert!(z.amax() < 1e-15);
    }

    #[test]
    fn report_on_iid_matrix() {
        let x = doubly(300, 12, 7);
        let s = spectral(&x, RANK_TOL).unwrap();
        let r = correlation_report(&x, &s, &ReportOptions::default()).unwrap();
        assert_eq!((r.m, r.n, r.k), (300, 12, 11));
        assert!(r.c2 * r.k as f64 >= 1.0 - 1e-12);
        assert!(r.alpha_hat < 0.1);
        assert!(r.m_tilde >= 1.0 && r.m_tilde <= 300.0);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["c2", "mu_hat", "alpha_hat", "alpha_tilde", "alpha_corrected", "m_tilde", "n", "m", "K", "estimator"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}

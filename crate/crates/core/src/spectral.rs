//! Singular value decomposition summaries of a data matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Default relative rank cutoff: eigenvalues below `RANK_TOL * e1` are dropped.
pub const RANK_TOL: f64 = 1e-12;

/// Tolerance for orthonormality checks on singular vectors.
pub const ORTH_TOL: f64 = 1e-8;

/// Nonzero spectrum of `X'X`: eigenvalues `e_k = d_k^2` in nonincreasing order
/// with the matching left (m x K) and right (n x K) singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

impl SpectralSummary {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn total(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `U diag(d) V'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DVector::from_iterator(self.rank(), self.eigenvalues.iter().map(|e| e.sqrt()));
        let mut ud = self.left.clone();
        for (k, mut c) in ud.column_iter_mut().enumerate() {
            c *= d[k];
        }
        ud * self.right.transpose()
    }
}

/// Computes the singular value decomposition of `x` through the symmetric
/// eigendecomposition of the smaller Gram matrix (`X'X` when `n <= m`,
/// otherwise `XX'`), keeping triples whose eigenvalue exceeds `rank_tol * e1`.
pub fn spectral(x: &DataMatrix, rank_tol: f64) -> Result<SpectralSummary> {
    let v = x.values();
    let tall = v.ncols() <= v.nrows();
    let mut gram = if tall { v.tr_mul(v) } else { v * v.transpose() };
    symmetrize(&mut gram);
    let eig = SymmetricEigen::new(gram);
    if eig.eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numerical("eigendecomposition produced non-finite values".into()));
    }
    let ev = &eig.eigenvalues;
    let mut order: Vec<usize> = (0..ev.len()).collect();
    order.sort_by(|&a, &b| ev[b].total_cmp(&ev[a]));
    let e1 = order.first().map(|&k| ev[k]).unwrap_or(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&k| e1 > 0.0 && ev[k] > rank_tol * e1)
        .collect();

    let eigenvalues: Vec<f64> = keep.iter().map(|&k| ev[k]).collect();
    let basis = DMatrix::from_fn(eig.eigenvectors.nrows(), keep.len(), |i, c| eig.eigenvectors[(i, keep[c])]);
    // the other side: X v_k / d_k (or X' u_k / d_k)
    let mut other = if tall { v * &basis } else { v.tr_mul(&basis) };
    for (mut col, e) in other.column_iter_mut().zip(&eigenvalues) {
        col /= e.sqrt();
    }
    let (left, right) = if tall { (other, basis) } else { (basis, other) };
    let summary = SpectralSummary {
        eigenvalues,
        left,
        right,
    };

    let scale = x.values().norm();
    if scale > 0.0 {
        let err = (x.values() - summary.reconstruct()).norm() / scale;
        if !(err < 1e-8) {
            return Err(Error::Numerical(format!(
                "SVD reconstruction error {err:.3e} exceeds 1e-8"
            )));
        }
    }
    Ok(summary)
}

/// Eigenvalues of a symmetric matrix in nonincreasing order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// `X'X / m` for an m x n matrix.
pub fn gram_over_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows() as f64;
    let mut g = x.tr_mul(x);
    g /= m;
    // tr_mul is not bit-symmetric
    symmetrize(&mut g);
    g
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{demean, double_standardize, DoubleStdOptions};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(m: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = crate::exec::rng(seed);
        DataMatrix::new(DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn eigenvalues_sorted_descending() {
        let x = DataMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        let s = spectral(&x, RANK_TOL).unwrap();
        assert_eq!(s.rank(), 2);
        assert!((s.eigenvalues[0] - 4.0).abs() < 1e-12);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubly_standardized_trace_is_mn() {
        let (x, _) = double_standardize(&random(40, 7, 1), &DoubleStdOptions::default()).unwrap();
        let s = spectral(&x, RANK_TOL).unwrap();
        assert!((s.total() - 280.0).abs() / 280.0 < 1e-10);
    }

    #[test]
    fn matches_dense_eigensolver_of_gram() {
        let x = demean(&random(8, 5, 2));
        let s = spectral(&x, RANK_TOL).unwrap();
        assert!(s.rank() <= 4);
        let oracle = symmetric_eigenvalues(&(x.values().transpose() * x.values()));
        for (k, e) in s.eigenvalues.iter().enumerate() {
            assert!((e - oracle[k]).abs() < 1e-9 * oracle[0]);
        }
        // the dropped one is numerically zero
        assert!(oracle[s.rank()].abs() < 1e-9 * oracle[0]);
    }

    #[test]
    fn singular_vectors_are_orthonormal() {
        for &(m, n) in &[(30, 6), (5, 9), (12, 12)] {
            let s = spectral(&demean(&random(m, n, 3)), RANK_TOL).unwrap();
            let k = s.rank();
            let vtv = s.right.transpose() * &s.right;
            let utu = s.left.transpose() * &s.left;
            assert!((vtv - DMatrix::identity(k, k)).amax() < ORTH_TOL);
            assert!((utu - DMatrix::identity(k, k)).amax() < ORTH_TOL);
        }
    }

    #[test]
    fn row_and_column_grams_share_spectrum() {
        let x = demean(&random(9, 6, 4));
        let s = spectral(&x, RANK_TOL).unwrap();
        let rows = symmetric_eigenvalues(&(x.values() * x.values().transpose()));
        for (k, e) in s.eigenvalues.iter().enumerate() {
            assert!((e - rows[k]).abs() / e < 1e-8);
        }
    }

    #[test]
    fn zero_matrix_has_empty_spectrum() {
        let x = DataMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(spectral(&x, RANK_TOL).unwrap().rank(), 0);
    }
}

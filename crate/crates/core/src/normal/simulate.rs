//! Matrix-normal sampling `X ~ N(0, Sigma (x) Delta)`, i.e.
//! `cov(X_ij, X_i'j') = Sigma_ii' Delta_jj'`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::matrix::{standardize_columns_in_place, DataMatrix, Standardization};

/// Row covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaModel {
    Identity,
    /// `y_ij = c_{I(i) j} + e_ij` with `c ~ N(0, gamma^2)` shared by the rows of
    /// each of `num_blocks` consecutive row blocks, so
    /// `Sigma = I + gamma^2 * (same-block indicator)`.
    Block { num_blocks: usize, gamma: f64 },
    /// Arbitrary positive semidefinite m x m covariance.
    Dense { sigma: DMatrix<f64> },
}

/// Column covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaModel {
    Identity,
    /// `Delta = I + lambda * beta beta'`.
    Spiked { lambda: f64, beta: Vec<f64> },
    Dense { delta: DMatrix<f64> },
}

/// Generative description of a matrix-normal draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub m: usize,
    pub n: usize,
    pub sigma: SigmaModel,
    pub delta: DeltaModel,
    pub seed: u64,
    /// Column-standardize the draw.
    pub standardize: bool,
}

impl SimulationSpec {
    pub fn new(m: usize, n: usize) -> Self {
        SimulationSpec {
            m,
            n,
            sigma: SigmaModel::Identity,
            delta: DeltaModel::Identity,
            seed: 0,
            standardize: false,
        }
    }

    pub fn with_sigma(mut self, sigma: SigmaModel) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_delta(mut self, delta: DeltaModel) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn standardized(mut self, yes: bool) -> Self {
        self.standardize = yes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < 2 {
            return Err(Error::invalid(format!(
                "simulation needs m, n >= 2, got {} x {}",
                self.m, self.n
            )));
        }
        match &self.sigma {
            SigmaModel::Identity => {}
            SigmaModel::Block { num_blocks, gamma } => {
                if *num_blocks == 0 || *num_blocks > self.m {
                    return Err(Error::invalid(format!(
                        "num_blocks must be in 1..={}, got {num_blocks}",
                        self.m
                    )));
                }
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return Err(Error::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
                }
            }
            SigmaModel::Dense { sigma } => check_psd(sigma, self.m, "Sigma")?,
        }
        match &self.delta {
            DeltaModel::Identity => {}
            DeltaModel::Spiked { lambda, beta } => {
                if beta.len() != self.n || beta.iter().any(|b| !b.is_finite()) {
                    return Err(Error::invalid("spike vector must have n finite entries"));
                }
                let b2: f64 = beta.iter().map(|b| b * b).sum();
                if !lambda.is_finite() || (b2 > 0.0 && *lambda <= -1.0 / b2) {
                    return Err(Error::invalid(format!(
                        "I + lambda beta beta' is not positive definite for lambda = {lambda}"
                    )));
                }
            }
            DeltaModel::Dense { delta } => check_psd(delta, self.n, "Delta")?,
        }
        Ok(())
    }

    /// Row variances `Sigma_ii`.
    pub fn sigma_diagonal(&self) -> Vec<f64> {
        match &self.sigma {
            SigmaModel::Identity => vec![1.0; self.m],
            SigmaModel::Block { gamma, .. } => vec![1.0 + gamma * gamma; self.m],
            SigmaModel::Dense { sigma } => sigma.diagonal().iter().copied().collect(),
        }
    }

    /// Total correlation: the mean of `Sigma_ii'^2 / (Sigma_ii Sigma_i'i')` over
    /// row pairs `i < i'`.
    pub fn total_correlation_sq(&self) -> f64 {
        let m = self.m;
        let pairs = (m * (m - 1) / 2) as f64;
        match &self.sigma {
            SigmaModel::Identity => 0.0,
            SigmaModel::Block { num_blocks, gamma } => {
                let g2 = gamma * gamma;
                let rho = g2 / (1.0 + g2);
                let same: usize = block_sizes(m, *num_blocks)
                    .iter()
                    .map(|&b| b * b.saturating_sub(1) / 2)
                    .sum();
                rho * rho * same as f64 / pairs
            }
            SigmaModel::Dense { sigma } => {
                let mut total = 0.0;
                for i in 0..m {
                    for k in (i + 1)..m {
                        let denom = sigma[(i, i)] * sigma[(k, k)];
                        if denom > 0.0 {
                            total += sigma[(i, k)] * sigma[(i, k)] / denom;
                        }
                    }
                }
                total / pairs
            }
        }
    }

    /// The full m x m row covariance.
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        match &self.sigma {
            SigmaModel::Identity => DMatrix::identity(self.m, self.m),
            SigmaModel::Block { num_blocks, gamma } => {
                let g2 = gamma * gamma;
                DMatrix::from_fn(self.m, self.m, |i, k| {
                    let same = block_of(i, self.m, *num_blocks) == block_of(k, self.m, *num_blocks);
                    (if i == k { 1.0 } else { 0.0 }) + if same { g2 } else { 0.0 }
                })
            }
            SigmaModel::Dense { sigma } => sigma.clone(),
        }
    }

    /// The full n x n column covariance.
    pub fn delta_matrix(&self) -> DMatrix<f64> {
        match &self.delta {
            DeltaModel::Identity => DMatrix::identity(self.n, self.n),
            DeltaModel::Spiked { lambda, beta } => {
                let b = DVector::from_column_slice(beta);
                DMatrix::identity(self.n, self.n) + &b * b.transpose() * *lambda
            }
            DeltaModel::Dense { delta } => delta.clone(),
        }
    }
}

fn check_psd(a: &DMatrix<f64>, dim: usize, name: &str) -> Result<()> {
    if a.shape() != (dim, dim) {
        return Err(Error::invalid(format!("{name} must be {dim} x {dim}, got {:?}", a.shape())));
    }
    if a.iter().any(|v| !v.is_finite()) || (a - a.transpose()).amax() > 1e-10 * a.amax().max(1.0) {
        return Err(Error::invalid(format!("{name} must be finite and symmetric")));
    }
    let ev = SymmetricEigen::new(a.clone()).eigenvalues;
    if ev.min() < -1e-10 * ev.amax().max(1.0) {
        return Err(Error::invalid(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

/// Block index of row `i` when `m` rows are cut into `num_blocks` consecutive
/// blocks of `m / num_blocks` rows, the remainder joining the last block.
pub fn block_of(i: usize, m: usize, num_blocks: usize) -> usize {
    let size = (m / num_blocks).max(1);
    (i / size).min(num_blocks - 1)
}

pub fn block_sizes(m: usize, num_blocks: usize) -> Vec<usize> {
    let mut sizes = vec![0; num_blocks];
    for i in 0..m {
        sizes[block_of(i, m, num_blocks)] += 1;
    }
    sizes
}

/// Symmetric PSD square root via eigendecomposition.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// One draw from `spec`, seeded by `spec.seed`.
pub fn sample_matrix_normal(spec: &SimulationSpec) -> Result<DataMatrix> {
    spec.validate()?;
    let mut rng = exec::rng(spec.seed);
    draw(spec, &mut rng)
}

/// One draw from `spec` using the caller's generator (the seed in `spec` is
/// ignored). Assumes `spec` has been validated.
pub fn sample_matrix_normal_with<R: Rng + ?Sized>(spec: &SimulationSpec, rng: &mut R) -> Result<DataMatrix> {
    draw(spec, rng)
}

fn draw<R: Rng + ?Sized>(spec: &SimulationSpec, rng: &mut R) -> Result<DataMatrix> {
    let (m, n) = (spec.m, spec.n);
    let mut x = standard_normal_matrix(m, n, rng);

    // left factor: any F with F F' = Sigma
    match &spec.sigma {
        SigmaModel::Identity => {}
        SigmaModel::Block { num_blocks, gamma } => {
            let c = standard_normal_matrix(*num_blocks, n, rng);
            for i in 0..m {
                let b = block_of(i, m, *num_blocks);
                for j in 0..n {
                    x[(i, j)] += gamma * c[(b, j)];
                }
            }
        }
        SigmaModel::Dense { sigma } => x = psd_sqrt(sigma) * x,
    }

    // right factor: Delta^{1/2}
    match &spec.delta {
        DeltaModel::Identity => {}
        DeltaModel::Spiked { lambda, beta } => {
            let b = DVector::from_column_slice(beta);
            let b2 = b.norm_squared();
            if b2 > 0.0 {
                // (I + c bb')^2 = I + lambda bb'
                let c = ((1.0 + lambda * b2).sqrt() - 1.0) / b2;
                let xb = &x * &b;
                x += xb * b.transpose() * c;
            }
        }
        DeltaModel::Dense { delta } => x *= psd_sqrt(delta),
    }

    if spec.standardize {
        standardize_columns_in_place(&mut x)?;
        return Ok(DataMatrix::from_parts(x, Standardization::ColStd));
    }
    DataMatrix::new(x)
}

/// `X' diag(sigma)^{-1} X / m` for row variances `sigma_diag`.
pub fn scaled_column_cov(x: &DMatrix<f64>, sigma_diag: &[f64]) -> DMatrix<f64> {
    let mut scaled = x.clone();
    for (i, mut r) in scaled.row_iter_mut().enumerate() {
        r /= sigma_diag[i].sqrt();
    }
    crate::spectral::gram_over_rows(&scaled)
}

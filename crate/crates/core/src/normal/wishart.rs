//! Scaled Wishart draws `W / df` with `W ~ Wishart(df, Delta)`, including
//! non-integer `df`.
//!
//! Bartlett construction: `W = L A A' L'` with `Delta = L L'` and `A` lower
//! triangular, `A_ii^2 ~ chi2(df - i)` and independent standard normals below
//! the diagonal. Fractional `df` only changes the chi-square shapes.
//!
//! [`WishartSampler::extended`] also accepts `0 < df <= n - 1`. There `A` is
//! n x k lower trapezoidal with `k = ceil(df)` columns: rows `i < k` follow the
//! rule above, rows `i >= k` carry normals in the first `k - 1` columns and a
//! random-signed `sqrt(chi2(df - k + 1))` in the last. For integer `df` this is
//! exactly the singular Wishart law; for fractional `df` every diagonal entry of
//! `W` is `chi2(df)` distributed.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone)]
pub struct WishartSampler {
    df: f64,
    n: usize,
    factor: DMatrix<f64>,
    identity: bool,
}

impl WishartSampler {
    /// Sampler for `Wishart(df, delta) / df`; requires `df > n - 1` and a
    /// positive definite `delta`.
    pub fn new(df: f64, delta: &DMatrix<f64>) -> Result<Self> {
        let n = delta.nrows();
        if !(df > n as f64 - 1.0) || !df.is_finite() {
            return Err(Error::invalid(format!(
                "Wishart degrees of freedom must exceed n - 1 = {}, got {df}",
                n as f64 - 1.0
            )));
        }
        Self::build(df, delta)
    }

    /// Like [`WishartSampler::new`] but accepts any `df > 0`, giving a rank
    /// `min(n, ceil(df))` draw when `df <= n - 1`.
    pub fn extended(df: f64, delta: &DMatrix<f64>) -> Result<Self> {
        if !(df > 0.0) || !df.is_finite() {
            return Err(Error::invalid(format!("degrees of freedom must be positive, got {df}")));
        }
        Self::build(df, delta)
    }

    fn build(df: f64, delta: &DMatrix<f64>) -> Result<Self> {
        let n = delta.nrows();
        if n == 0 || delta.ncols() != n {
            return Err(Error::invalid("Wishart scale must be a non-empty square matrix"));
        }
        let identity = *delta == DMatrix::identity(n, n);
        let factor = if identity {
            DMatrix::identity(n, n)
        } else {
            Cholesky::new(delta.clone())
                .ok_or_else(|| Error::invalid("Wishart scale matrix is not positive definite"))?
                .l()
        };
        Ok(WishartSampler { df, n, factor, identity })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower-(trapezoidal) Bartlett factor `A` for `Wishart(df, I)`.
    pub fn bartlett_factor<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let n = self.n;
        let full = self.df > n as f64 - 1.0;
        let k = if full { n } else { self.df.ceil() as usize };
        let mut a = DMatrix::zeros(n, k);
        for i in 0..n {
            if i < k {
                for c in 0..i {
                    a[(i, c)] = rng.sample(StandardNormal);
                }
                a[(i, i)] = chi(self.df - i as f64, rng);
            } else {
                for c in 0..k - 1 {
                    a[(i, c)] = rng.sample(StandardNormal);
                }
                let last = chi(self.df - (k - 1) as f64, rng);
                a[(i, k - 1)] = if rng.random::<bool>() { last } else { -last };
            }
        }
        a
    }

    /// One draw of `Wishart(df, Delta) / df`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let a = self.bartlett_factor(rng);
        let la = if self.identity { a } else { &self.factor * a };
        let mut w = &la * la.transpose();
        w /= self.df;
        crate::spectral::symmetrize(&mut w);
        w
    }
}

fn chi<R: Rng + ?Sized>(k: f64, rng: &mut R) -> f64 {
    // k > 0 is guaranteed by the callers
    ChiSquared::new(k).expect("positive chi-square shape").sample(rng).sqrt()
}

/// One seeded draw of `Wishart(df, delta) / df` (`df > n - 1`).
pub fn sample_wishart(df: f64, delta: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let sampler = WishartSampler::new(df, delta)?;
    Ok(sampler.sample(&mut exec::rng(seed)))
}

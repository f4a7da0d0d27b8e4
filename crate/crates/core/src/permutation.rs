//! Order-sensitive permutation tests of the i.i.d. column hypothesis.
//!
//! If the columns are exchangeable, every ordering of the components of the
//! first right singular vector `v1` is equally likely. Block and trend
//! statistics of `v1` are compared with the same statistics of randomly
//! permuted copies of `v1`. The trace statistic `tr(D B)` on the column
//! covariance `D` is compared with its values under random column orderings.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::correlation::column_cov;
use crate::error::{Error, Result, Warning};
use crate::exec;
use crate::matrix::DataMatrix;
use crate::spectral::{spectral, SpectralSummary, RANK_TOL};

/// Relative gap below which the leading eigenvalues count as tied.
pub const EIGENGAP_TOL: f64 = 1e-8;

/// Relative tolerance under which a permuted statistic counts as tied with the
/// observed one. Ties count as exceedances.
pub const TIE_TOL: f64 = 1e-12;

/// Catalog of contiguous 0/1 block vectors and their summed outer product `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBasis {
    n: usize,
    min_len: usize,
    max_len: usize,
    /// `(start, len)` of each block.
    blocks: Vec<(usize, usize)>,
    matrix: DMatrix<f64>,
}

impl BlockBasis {
    /// All blocks of length `min_len..=max_len` in an n-vector. `max_len` is
    /// truncated to `n`.
    pub fn new(n: usize, min_len: usize, max_len: usize) -> Result<Self> {
        let max_len = max_len.min(n);
        if min_len < 2 || min_len > max_len {
            return Err(Error::invalid(format!(
                "block lengths must satisfy 2 <= min_len <= max_len <= n, got {min_len}..={max_len} with n = {n}"
            )));
        }
        let blocks: Vec<(usize, usize)> = (min_len..=max_len)
            .flat_map(|len| (0..=n - len).map(move |start| (start, len)))
            .collect();
        let mut matrix = DMatrix::zeros(n, n);
        for &(start, len) in &blocks {
            for j in start..start + len {
                for k in start..start + len {
                    matrix[(j, k)] += 1.0;
                }
            }
        }
        Ok(BlockBasis {
            n,
            min_len,
            max_len,
            blocks,
            matrix,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn min_len(&self) -> usize {
        self.min_len
    }

    /// Effective maximum length after truncation to `n`.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    /// The 0/1 indicator vector of block `h`.
    pub fn vector(&self, h: usize) -> DVector<f64> {
        let (start, len) = self.blocks[h];
        DVector::from_fn(self.n, |j, _| if j >= start && j < start + len { 1.0 } else { 0.0 })
    }

    /// `B = sum_h beta_h beta_h'`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Shorthand for [`BlockBasis::new`].
pub fn block_basis(n: usize, min_len: usize, max_len: usize) -> Result<BlockBasis> {
    BlockBasis::new(n, min_len, max_len)
}

fn check_len(v: &[f64], basis: &BlockBasis) -> Result<()> {
    if v.len() != basis.n {
        return Err(Error::invalid(format!(
            "vector has length {} but the block basis has n = {}",
            v.len(),
            basis.n
        )));
    }
    Ok(())
}

/// `v'Bv = sum_h (beta_h' v)^2`, evaluated with prefix sums.
pub fn block_statistic(v: &[f64], basis: &BlockBasis) -> Result<f64> {
    check_len(v, basis)?;
    Ok(block_statistic_unchecked(v, basis, &mut Vec::with_capacity(v.len() + 1)))
}

fn block_statistic_unchecked(v: &[f64], basis: &BlockBasis, prefix: &mut Vec<f64>) -> f64 {
    prefix.clear();
    prefix.push(0.0);
    let mut acc = 0.0;
    for x in v {
        acc += x;
        prefix.push(acc);
    }
    basis
        .blocks
        .iter()
        .map(|&(start, len)| {
            let s = prefix[start + len] - prefix[start];
            s * s
        })
        .sum()
}

/// Squared correlation between `v` and the index `1..=n` (the R^2 of a least
/// squares line through `v` against position). Zero for constant `v`.
pub fn trend_statistic(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let idx_mean = (nf + 1.0) / 2.0;
    let v_mean = v.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (j, &y) in v.iter().enumerate() {
        let dx = (j + 1) as f64 - idx_mean;
        let dy = y - v_mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if syy <= 1e-300 || syy <= 1e-24 * v.iter().map(|y| y * y).sum::<f64>() {
        return 0.0;
    }
    (sxy * sxy / (sxx * syy)).min(1.0)
}

/// Unit first right singular vector, signed so its largest-magnitude component
/// is positive, plus a warning when `e1` and `e2` are nearly tied.
pub fn first_eigvec(s: &SpectralSummary) -> Result<(DVector<f64>, Option<Warning>)> {
    if s.rank() == 0 {
        return Err(Error::invalid("matrix has rank 0, no first eigenvector"));
    }
    let mut v: DVector<f64> = s.right.column(0).into_owned();
    let norm = v.norm();
    v /= norm;
    let lead = v.iamax();
    if v[lead] < 0.0 {
        v.neg_mut();
    }
    let warning = if s.rank() >= 2 {
        let (e1, e2) = (s.eigenvalues[0], s.eigenvalues[1]);
        let gap = (e1 - e2) / e1;
        (gap < EIGENGAP_TOL).then_some(Warning::DegenerateEigengap { e1, e2, gap })
    } else {
        None
    };
    Ok((v, warning))
}

/// `tr(D B) = sum_h beta_h' D beta_h`, summing each block's square submatrix of
/// `D` through a 2-D prefix table.
pub fn trace_statistic(delta_hat: &DMatrix<f64>, basis: &BlockBasis) -> Result<f64> {
    if delta_hat.shape() != (basis.n, basis.n) {
        return Err(Error::invalid(format!(
            "covariance is {:?} but the block basis has n = {}",
            delta_hat.shape(),
            basis.n
        )));
    }
    let mut table = Vec::new();
    Ok(trace_unchecked(basis.n, |j, k| delta_hat[(j, k)], basis, &mut table))
}

fn trace_unchecked(
    n: usize,
    entry: impl Fn(usize, usize) -> f64,
    basis: &BlockBasis,
    table: &mut Vec<f64>,
) -> f64 {
    let w = n + 1;
    table.clear();
    table.resize(w * w, 0.0);
    for j in 0..n {
        let mut row = 0.0;
        for k in 0..n {
            row += entry(j, k);
            table[(j + 1) * w + k + 1] = table[j * w + k + 1] + row;
        }
    }
    basis
        .blocks
        .iter()
        .map(|&(s, len)| {
            let e = s + len;
            table[e * w + e] - table[s * w + e] - table[e * w + s] + table[s * w + s]
        })
        .sum()
}

/// `sum_j (e_j/m) v_j' B v_j` over the spectrum of an m-row matrix.
pub fn trace_statistic_spectral(s: &SpectralSummary, m: usize, basis: &BlockBasis) -> Result<f64> {
    let mut total = 0.0;
    for (j, e) in s.eigenvalues.iter().enumerate() {
        let v: Vec<f64> = s.right.column(j).iter().copied().collect();
        total += e / m as f64 * block_statistic(&v, basis)?;
    }
    Ok(total)
}

/// Which statistic a permutation test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermStatistic {
    /// `v1' B v1` on the first eigenvector.
    BlockOnV1,
    /// Squared index correlation of the first eigenvector.
    TrendOnV1,
    /// `tr(D B)` under column permutations.
    TraceB,
}

impl PermStatistic {
    pub fn label(self) -> &'static str {
        match self {
            PermStatistic::BlockOnV1 => "perm_block",
            PermStatistic::TrendOnV1 => "perm_trend",
            PermStatistic::TraceB => "perm_trace",
        }
    }
}

/// How the exceedance count becomes a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueRule {
    /// `count / L`.
    #[default]
    Plain,
    /// `(count + 1) / (L + 1)`.
    Conservative,
}

pub fn p_value(exceed_count: usize, l: usize, rule: PValueRule) -> f64 {
    match rule {
        PValueRule::Plain => exceed_count as f64 / l as f64,
        PValueRule::Conservative => (exceed_count + 1) as f64 / (l + 1) as f64,
    }
}

/// Whether a null draw counts as at least as extreme as the observed value.
pub fn exceeds(null: f64, observed: f64) -> bool {
    null >= observed - TIE_TOL * observed.abs().max(f64::MIN_POSITIVE)
}

/// Outcome of a resampling test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub exceed_count: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
    #[serde(skip)]
    pub null_samples: Vec<f64>,
}

impl TestResult {
    /// Assembles a result from an observed value and its null draws.
    pub fn from_null(
        method: impl Into<String>,
        statistic: f64,
        null_samples: Vec<f64>,
        seed: u64,
        rule: PValueRule,
    ) -> Self {
        let l = null_samples.len();
        let exceed_count = null_samples.iter().filter(|&&s| exceeds(s, statistic)).count();
        TestResult {
            method: method.into(),
            statistic,
            p_value: p_value(exceed_count, l, rule),
            l,
            exceed_count,
            seed,
            warnings: Vec::new(),
            null_samples,
        }
    }
}

/// Settings for [`perm_pvalue`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermOptions {
    pub l: usize,
    pub seed: u64,
    pub min_block: usize,
    pub max_block: usize,
    pub rule: PValueRule,
}

impl Default for PermOptions {
    fn default() -> Self {
        PermOptions {
            l: 2000,
            seed: 0,
            min_block: 2,
            max_block: 10,
            rule: PValueRule::Plain,
        }
    }
}

/// `L` values of `stat` on random permutations of `v`. Replicate `l` shuffles
/// with substream `(seed, l)`.
pub fn permutation_null<F>(v: &[f64], stat: F, l: usize, seed: u64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    exec::map_indices(l, |rep| {
        let mut rng = exec::substream(seed, rep as u64);
        let mut w = v.to_vec();
        w.shuffle(&mut rng);
        stat(&w)
    })
}

/// Permutation test of column-wise i.i.d. on `x` (normally doubly standardized).
pub fn perm_pvalue(x: &DataMatrix, statistic: PermStatistic, opts: &PermOptions) -> Result<TestResult> {
    if opts.l == 0 {
        return Err(Error::invalid("number of permutations must be positive"));
    }
    let n = x.ncols();
    match statistic {
        PermStatistic::BlockOnV1 | PermStatistic::TrendOnV1 => {
            let s = spectral(x, RANK_TOL)?;
            let (v1, warning) = first_eigvec(&s)?;
            let v: Vec<f64> = v1.iter().copied().collect();
            let mut result = if statistic == PermStatistic::BlockOnV1 {
                let basis = BlockBasis::new(n, opts.min_block, opts.max_block)?;
                let stat = |w: &[f64]| block_statistic_unchecked(w, &basis, &mut Vec::new());
                let observed = stat(&v);
                let null = permutation_null(&v, stat, opts.l, opts.seed);
                TestResult::from_null(statistic.label(), observed, null, opts.seed, opts.rule)
            } else {
                let observed = trend_statistic(&v);
                let null = permutation_null(&v, trend_statistic, opts.l, opts.seed);
                TestResult::from_null(statistic.label(), observed, null, opts.seed, opts.rule)
            };
            result.warnings.extend(warning);
            Ok(result)
        }
        PermStatistic::TraceB => {
            let basis = BlockBasis::new(n, opts.min_block, opts.max_block)?;
            let cov = column_cov(x);
            let observed = trace_statistic(&cov, &basis)?;
            let null = exec::map_indices(opts.l, |rep| {
                let mut rng = exec::substream(opts.seed, rep as u64);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                // column j of the permuted X is column perm[j] of X
                trace_unchecked(n, |j, k| cov[(perm[j], perm[k])], &basis, &mut Vec::new())
            });
            Ok(TestResult::from_null(
                statistic.label(),
                observed,
                null,
                opts.seed,
                opts.rule,
            ))
        }
    }
}

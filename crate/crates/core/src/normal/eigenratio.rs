//! The eigenratio statistic `e1 / sum(e_k)` and its simulated null
//! distributions, plus calibration of the block row-correlation generator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::simulate::{sample_matrix_normal_with, SigmaModel, SimulationSpec};
use super::wishart::WishartSampler;
use crate::correlation::{alpha_corrected, pair_count, row_corr_sample};
use crate::error::{Error, Result};
use crate::exec;
use crate::matrix::{double_standardize, standardize_columns_in_place, mean_var, DataMatrix, DoubleStdOptions, Standardization};
use crate::permutation::{PValueRule, TestResult};
use crate::spectral::{gram_over_rows, symmetric_eigenvalues, SpectralSummary};

/// `e1 / sum(e_k)` for a spectral summary with at least one eigenvalue.
pub fn eigenratio(s: &SpectralSummary) -> Result<f64> {
    if s.rank() == 0 {
        return Err(Error::invalid("eigenratio needs rank >= 1"));
    }
    Ok(s.eigenvalues[0] / s.total())
}

/// Eigenratio of a symmetric positive semidefinite matrix.
pub fn eigenratio_of_matrix(a: &DMatrix<f64>) -> f64 {
    let ev = symmetric_eigenvalues(a);
    let e1 = ev[0];
    let total: f64 = ev.iter().filter(|&&e| e > crate::spectral::RANK_TOL * e1).sum();
    e1 / total
}

/// Generator of null column covariance estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullModel {
    /// `Wishart(df, I)/df`. With `centered`, the scale is `I - J/n` (the
    /// column covariance left after removing row means), which has the same
    /// nonzero spectrum as `Wishart(df, I_{n-1})`.
    Wishart { df: f64, centered: bool },
    /// `X'X/m` of a doubly standardized draw from `spec`.
    CorrelatedRows { spec: SimulationSpec },
}

impl NullModel {
    pub fn label(&self) -> &'static str {
        match self {
            NullModel::Wishart { .. } => "eigenratio_wishart",
            NullModel::CorrelatedRows { .. } => "eigenratio_correlated_rows",
        }
    }
}

/// `reps` draws of the eigenratio under `model` for n columns. Replicate `r`
/// uses substream `(seed, r)`.
pub fn eigenratio_null(model: &NullModel, reps: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::invalid("reps must be positive"));
    }
    match model {
        NullModel::Wishart { df, centered } => {
            let dim = if *centered { n - 1 } else { n };
            if dim == 0 {
                return Err(Error::invalid("Wishart null needs n >= 2"));
            }
            let sampler = WishartSampler::extended(*df, &DMatrix::identity(dim, dim))?;
            Ok(exec::map_indices(reps, |r| {
                let w = sampler.sample(&mut exec::substream(seed, r as u64));
                eigenratio_of_matrix(&w)
            }))
        }
        NullModel::CorrelatedRows { spec } => {
            if spec.n != n {
                return Err(Error::invalid(format!(
                    "simulation has n = {} but the test has n = {n}",
                    spec.n
                )));
            }
            spec.validate()?;
            let opts = DoubleStdOptions::default();
            exec::try_map_indices(reps, |r| {
                let mut rng = exec::substream(seed, r as u64);
                let x = sample_matrix_normal_with(spec, &mut rng)?;
                let (x, _) = double_standardize(&x, &opts)?;
                Ok(eigenratio_of_matrix(&gram_over_rows(x.values())))
            })
        }
    }
}

/// Empirical test of an observed eigenratio: `p = #{S* >= S} / reps`.
pub fn eigenratio_test(observed: f64, model: &NullModel, reps: usize, n: usize, seed: u64) -> Result<TestResult> {
    let null = eigenratio_null(model, reps, n, seed)?;
    Ok(TestResult::from_null(model.label(), observed, null, seed, PValueRule::Plain))
}

/// Settings for [`calibrate_gamma`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub target_alpha: f64,
    pub m: usize,
    pub n: usize,
    pub num_blocks: usize,
    /// Simulated matrices averaged per evaluation.
    pub reps: usize,
    /// Row pairs sampled per simulated matrix.
    pub pairs: usize,
    pub seed: u64,
    /// Accepted distance between the achieved and the target alpha.
    pub tol: f64,
    /// Upper end of the search bracket `[0, max_gamma]`.
    pub max_gamma: f64,
}

impl CalibrationOptions {
    pub fn new(target_alpha: f64, m: usize, n: usize, num_blocks: usize) -> Self {
        CalibrationOptions {
            target_alpha,
            m,
            n,
            num_blocks,
            reps: 8,
            pairs: 10_000,
            seed: 0,
            tol: 0.005,
            max_gamma: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma: f64,
    pub achieved_alpha: f64,
    pub evaluations: usize,
}

/// Monte Carlo total correlation of the column-standardized block generator:
/// the corrected estimate from the variance of sampled row correlations,
/// averaged over `reps` draws. The same seed reuses the same normals for every
/// `gamma`, so the estimate is a smooth function of `gamma`.
pub fn block_alpha(gamma: f64, opts: &CalibrationOptions) -> Result<f64> {
    let spec = SimulationSpec::new(opts.m, opts.n)
        .with_sigma(SigmaModel::Block { num_blocks: opts.num_blocks, gamma });
    spec.validate()?;
    let pairs = opts.pairs.min(pair_count(opts.m));
    let alphas = exec::try_map_indices(opts.reps, |r| {
        let mut rng = exec::substream(opts.seed, r as u64);
        let mut y = sample_matrix_normal_with(&spec, &mut rng)?.into_values();
        standardize_columns_in_place(&mut y)?;
        let y = DataMatrix::from_parts(y, Standardization::ColStd);
        let corr = row_corr_sample(&y, pairs, exec::stage_seed(opts.seed, &format!("pairs{r}")))?;
        let (_, var) = mean_var(corr.iter().copied());
        Ok::<f64, Error>(alpha_corrected(var, opts.n)?.corrected_sq.sqrt())
    })?;
    Ok(alphas.iter().sum::<f64>() / alphas.len() as f64)
}

/// Finds the block effect size `gamma` whose simulated total correlation
/// matches `target_alpha`, by bisection on `[0, max_gamma]`. Targets at or
/// below the Monte Carlo estimate at `gamma = 0` give `gamma = 0`.
pub fn calibrate_gamma(opts: &CalibrationOptions) -> Result<Calibration> {
    let target = opts.target_alpha;
    if !(0.0..1.0).contains(&target) {
        return Err(Error::invalid(format!("target alpha must be in [0, 1), got {target}")));
    }
    if opts.reps == 0 || opts.pairs < 2 {
        return Err(Error::invalid("calibration needs reps >= 1 and pairs >= 2"));
    }
    if target == 0.0 {
        return Ok(Calibration { gamma: 0.0, achieved_alpha: block_alpha(0.0, opts)?, evaluations: 1 });
    }
    let mut lo = 0.0;
    let mut hi = opts.max_gamma;
    let f_lo = block_alpha(lo, opts)?;
    let f_hi = block_alpha(hi, opts)?;
    let mut evaluations = 2;
    if f_lo >= target {
        // the generator cannot go below its gamma = 0 noise floor
        return Ok(Calibration { gamma: 0.0, achieved_alpha: f_lo, evaluations });
    }
    if f_hi < target {
        return Err(Error::CalibrationFailure(format!(
            "alpha at gamma = {hi} is only {f_hi:.4}, below the target {target}"
        )));
    }
    let mut best = (hi, f_hi);
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        let f = block_alpha(mid, opts)?;
        evaluations += 1;
        if (f - target).abs() < (best.1 - target).abs() {
            best = (mid, f);
        }
        if (f - target).abs() < opts.tol / 10.0 {
            break;
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target).abs() >= opts.tol {
        return Err(Error::CalibrationFailure(format!(
            "closest alpha {:.4} at gamma {:.4} misses target {target} by more than {}",
            best.1, best.0, opts.tol
        )));
    }
    Ok(Calibration { gamma: best.0, achieved_alpha: best.1, evaluations })
}

/// Within-block row correlation of the block generator before any
/// standardization, `gamma^2 / (1 + gamma^2)`.
pub fn block_correlation(gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    g2 / (1.0 + g2)
}

/// Eigenratio of the doubly standardized version of `x`, for convenience.
pub fn observed_eigenratio(x: &DataMatrix) -> Result<f64> {
    let x = if x.state() == Standardization::DoubleStd {
        x.clone()
    } else {
        double_standardize(x, &DoubleStdOptions::default())?.0
    };
    Ok(eigenratio_of_matrix(&gram_over_rows(x.values())))
}

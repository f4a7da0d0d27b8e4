//! Outlier scan over pairwise column correlations with Benjamini-Hochberg
//! false discovery rate control.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::exec;
use crate::matrix::DataMatrix;
use crate::spectral::gram_over_rows;

/// Which tail the p-values are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `P(R >= r)`: large positive correlations are outliers.
    #[default]
    Upper,
    /// `2 min(P(R >= r), P(R <= r))`.
    TwoSided,
}

/// Upper-tail p-value `P(R >= r - shift)` where `R` is the sample correlation
/// of `m_tilde` independent bivariate normal pairs with zero correlation.
///
/// `R` has density proportional to `(1 - r^2)^((nu - 4) / 2)`, i.e.
/// `(1 + R) / 2 ~ Beta(a, a)` with `a = (nu - 2) / 2`, so the tail is the
/// regularized incomplete beta `I_{(1 - r0)/2}(a, a)`. `m_tilde` may be
/// fractional. Shifted arguments outside `[-1, 1]` are clamped to the support.
pub fn corr_null_pvalue(r: f64, m_tilde: f64, shift: f64) -> Result<f64> {
    if !(m_tilde > 3.0) || !m_tilde.is_finite() {
        return Err(Error::invalid(format!(
            "effective sample size must exceed 3 for the correlation null, got {m_tilde}"
        )));
    }
    // rounding can leave a computed correlation a few ulps outside the support
    if !(r.abs() <= 1.0 + 1e-12) || !shift.is_finite() {
        return Err(Error::invalid(format!("correlation must lie in [-1, 1], got {r}")));
    }
    let r0 = (r - shift).clamp(-1.0, 1.0);
    let a = 0.5 * (m_tilde - 2.0);
    let x = 0.5 * (1.0 - r0);
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    Ok(beta_reg(a, a, x))
}

/// Null distribution for the correlations of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScanNull {
    /// Correlation of `m_tilde` independent normal pairs, evaluated at `r - shift`.
    CorrelationDf { m_tilde: f64, shift: f64 },
    /// `N(mu, sd^2)`.
    Gaussian { mu: f64, sd: f64 },
}

impl ScanNull {
    /// Correlation null with the usual recentering for demeaned columns,
    /// `shift = -1/(n - 1)`.
    pub fn correlation_df(m_tilde: f64, n: usize) -> Self {
        ScanNull::CorrelationDf { m_tilde, shift: -1.0 / (n as f64 - 1.0) }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ScanNull::CorrelationDf { m_tilde, shift } => {
                corr_null_pvalue(0.0, m_tilde, shift).map(|_| ())
            }
            ScanNull::Gaussian { mu, sd } => {
                if !mu.is_finite() || !(sd > 0.0) || !sd.is_finite() {
                    return Err(Error::invalid(format!("gaussian null needs finite mu and sd > 0, got ({mu}, {sd})")));
                }
                Ok(())
            }
        }
    }

    /// `P(R >= r)` under this null.
    pub fn upper_tail(&self, r: f64) -> Result<f64> {
        match *self {
            ScanNull::CorrelationDf { m_tilde, shift } => corr_null_pvalue(r, m_tilde, shift),
            ScanNull::Gaussian { mu, sd } => {
                let normal = Normal::new(mu, sd).map_err(|e| Error::invalid(e.to_string()))?;
                Ok(normal.sf(r))
            }
        }
    }

    pub fn p_value(&self, r: f64, tail: Tail) -> Result<f64> {
        let upper = self.upper_tail(r)?;
        Ok(match tail {
            Tail::Upper => upper,
            Tail::TwoSided => (2.0 * upper.min(1.0 - upper)).min(1.0),
        })
    }
}

/// Benjamini-Hochberg step-up rule. Returns the indices (ascending) of the
/// rejected hypotheses: all `p_i <= p_(k)` where `k` is the largest rank with
/// `p_(k) <= k q / N`. Tied values at the threshold are rejected together.
pub fn bh_fdr(pvalues: &[f64], q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q must lie in (0, 1), got {q}")));
    }
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-values must lie in [0, 1], got {p}")));
    }
    let n = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let cutoff = (1..=n)
        .rev()
        .find(|&k| sorted[k - 1] <= k as f64 * q / n as f64)
        .map(|k| sorted[k - 1]);
    Ok(match cutoff {
        Some(c) => (0..n).filter(|&i| pvalues[i] <= c).collect(),
        None => Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub j: usize,
    pub k: usize,
    pub r: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub q: f64,
    pub tail: Tail,
    pub null_model: ScanNull,
    /// Smallest correlation among the discoveries; `None` when there are none.
    pub threshold_r: Option<f64>,
    pub discoveries: usize,
    pub pairs: Vec<PairResult>,
}

impl OutlierReport {
    pub fn significant_pairs(&self) -> impl Iterator<Item = &PairResult> {
        self.pairs.iter().filter(|p| p.significant)
    }
}

/// Column-pair correlations `X'X/m` for `j < k`, in row-major pair order.
pub fn column_pair_correlations(x: &DataMatrix) -> Vec<(usize, usize, f64)> {
    let c = gram_over_rows(x.values());
    let n = c.ncols();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for k in j + 1..n {
            out.push((j, k, c[(j, k)]));
        }
    }
    out
}

/// Tests every off-diagonal column correlation of a doubly standardized matrix
/// against `null` and applies the step-up rule at level `q`.
pub fn scan_column_pairs(x: &DataMatrix, null: ScanNull, q: f64, tail: Tail) -> Result<OutlierReport> {
    null.validate()?;
    let pairs = column_pair_correlations(x);
    let pvalues = exec::try_map_indices(pairs.len(), |i| null.p_value(pairs[i].2.clamp(-1.0, 1.0), tail))?;
    let rejected = bh_fdr(&pvalues, q)?;
    let mut flags = vec![false; pairs.len()];
    for &i in &rejected {
        flags[i] = true;
    }
    let threshold_r = rejected.iter().map(|&i| pairs[i].2).min_by(|a, b| a.total_cmp(b));
    Ok(OutlierReport {
        q,
        tail,
        null_model: null,
        threshold_r,
        discoveries: rejected.len(),
        pairs: pairs
            .iter()
            .zip(pvalues)
            .zip(flags)
            .map(|((&(j, k, r), p), significant)| PairResult { j, k, r, p, significant })
            .collect(),
    })
}

/// One histogram bin of the scanned correlations together with the count
/// expected under the null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub null_count: f64,
}

/// Equal-width bins over `[-1, 1]`.
pub fn correlation_histogram(report: &OutlierReport, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for p in &report.pairs {
        let b = (((p.r + 1.0) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    let total = report.pairs.len() as f64;
    (0..bins)
        .map(|b| {
            let lo = -1.0 + b as f64 * width;
            let hi = if b + 1 == bins { 1.0 } else { lo + width };
            let mass = report.null_model.upper_tail(lo)? - report.null_model.upper_tail(hi)?;
            Ok(HistogramBin { lo, hi, count: counts[b], null_count: total * mass })
        })
        .collect()
}

/// Writes histogram bins as CSV with a `lo,hi,count,null_count` header.
pub fn write_histogram_csv<W: std::io::Write>(bins: &[HistogramBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in bins {
        w.serialize(b).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn density(r: f64, nu: f64) -> f64 {
        (1.0 - r * r).powf(0.5 * (nu - 4.0))
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let c = 0.5 * (a + b);
        let (fa, fb, fc) = (f(a), f(b), f(c));
        let left = (c - a) / 6.0 * (fa + 4.0 * f(0.5 * (a + c)) + fc);
        let right = (b - c) / 6.0 * (fc + 4.0 * f(0.5 * (c + b)) + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, c, left, tol / 2.0, depth - 1) + simpson(f, c, b, right, tol / 2.0, depth - 1)
        }
    }

    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        simpson(f, a, b, whole, 1e-14, 40)
    }

    #[test]
    fn pvalue_matches_quadrature() {
        let nu = 17.2;
        let f = |r: f64| density(r, nu);
        let norm = integrate(&f, -1.0, 1.0);
        for i in 0..=40 {
            let r = -1.0 + 0.05 * i as f64;
            let expected = integrate(&f, r, 1.0) / norm;
            let got = corr_null_pvalue(r, nu, 0.0).unwrap();
            assert!((got - expected).abs() < 1e-10, "r={r}: {got} vs {expected}");
        }
    }

    #[test]
    fn pvalue_fixed_points() {
        let shift = -1.0 / 43.0;
        assert!((corr_null_pvalue(shift, 17.2, shift).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(corr_null_pvalue(1.0, 17.2, shift).unwrap(), 0.0);
        assert_eq!(corr_null_pvalue(-1.0, 17.2, 0.0).unwrap(), 1.0);
        assert_eq!(corr_null_pvalue(1.0, 17.2, 0.0).unwrap(), 0.0);
        assert!(corr_null_pvalue(0.1, 3.0, 0.0).is_err());
        assert!(corr_null_pvalue(1.5, 10.0, 0.0).is_err());
    }

    #[test]
    fn pvalue_symmetric_about_shift_and_decreasing() {
        let shift = -0.023;
        let mut last = 1.0;
        for i in 0..=40 {
            let r = -0.9 + 0.045 * i as f64;
            let p = corr_null_pvalue(r, 17.2, shift).unwrap();
            let mirror = corr_null_pvalue(-r + 2.0 * shift, 17.2, shift).unwrap();
            assert!((p + mirror - 1.0).abs() < 1e-12);
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn bh_examples() {
        assert!(bh_fdr(&[1.0; 6], 0.1).unwrap().is_empty());
        assert_eq!(bh_fdr(&[0.001, 0.015, 0.2, 0.6, 0.9], 0.1).unwrap(), vec![0, 1]);
        assert_eq!(bh_fdr(&[0.05], 0.1).unwrap(), vec![0]);
        assert!(bh_fdr(&[], 0.1).unwrap().is_empty());
        // later rank passes even though an earlier one does not
        assert_eq!(bh_fdr(&[0.03, 0.035, 0.9], 0.1).unwrap(), vec![0, 1]);
        // ties at the cutoff go together
        assert_eq!(bh_fdr(&[0.02, 0.02, 0.5], 0.06).unwrap(), vec![0, 1]);
        assert!(bh_fdr(&[0.5], 1.0).is_err());
        assert!(bh_fdr(&[1.5], 0.1).is_err());
    }

    #[test]
    fn two_sided_pvalues() {
        let null = ScanNull::CorrelationDf { m_tilde: 20.0, shift: 0.0 };
        let up = null.p_value(0.4, Tail::Upper).unwrap();
        let two = null.p_value(0.4, Tail::TwoSided).unwrap();
        assert!((two - 2.0 * up).abs() < 1e-14);
        assert!((null.p_value(-0.4, Tail::TwoSided).unwrap() - two).abs() < 1e-12);
    }

    #[test]
    fn gaussian_null() {
        let null = ScanNull::Gaussian { mu: -0.023, sd: 0.241 };
        assert!((null.upper_tail(-0.023).unwrap() - 0.5).abs() < 1e-14);
        assert!(scan_null_rejects(ScanNull::Gaussian { mu: 0.0, sd: 0.0 }));
    }

    fn scan_null_rejects(null: ScanNull) -> bool {
        null.validate().is_err()
    }

    #[test]
    fn scan_flags_a_planted_pair() {
        let m = 400;
        let mut rng = exec::rng(3);
        use rand::Rng;
        let mut data = vec![0.0; m * 6];
        for i in 0..m {
            for j in 0..6 {
                data[i * 6 + j] = rng.sample(rand_distr::StandardNormal);
            }
            data[i * 6 + 5] = data[i * 6 + 4] + 0.3 * data[i * 6 + 5];
        }
        let x = DataMatrix::from_row_slice(m, 6, &data).unwrap();
        let (x, _) = crate::matrix::double_standardize(&x, &Default::default()).unwrap();
        let report = scan_column_pairs(&x, ScanNull::correlation_df(m as f64, 6), 0.1, Tail::Upper).unwrap();
        assert_eq!(report.pairs.len(), 15);
        let planted = report.pairs.iter().find(|p| (p.j, p.k) == (4, 5)).unwrap();
        assert!(planted.significant);
        assert_eq!(report.threshold_r.unwrap(), report.significant_pairs().map(|p| p.r).fold(f64::INFINITY, f64::min));

        let bins = correlation_histogram(&report, 40).unwrap();
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 15);
        let expected: f64 = bins.iter().map(|b| b.null_count).sum();
        assert!((expected - 15.0).abs() < 1e-9);
        let mut buf = Vec::new();
        write_histogram_csv(&bins, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lo,hi,count,null_count\n"));
        assert_eq!(text.lines().count(), 41);
    }
}

//! Conversion of t-statistics to z-values.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// `Phi^-1(F_df(t))`, the normal quantile of the t-distribution CDF.
///
/// The lower tail at `-|t|` is evaluated and the sign restored afterwards, so the
/// result is exactly antisymmetric in `t` and keeps full precision far into the
/// upper tail.
pub fn t_to_z(t: f64, df: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::invalid("t must be finite"));
    }
    if !(df >= 1.0) {
        return Err(Error::invalid(format!("degrees of freedom must be >= 1, got {df}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid(e.to_string()))?;
    let lower = dist.cdf(-t.abs());
    let z = Normal::standard().inverse_cdf(lower);
    Ok(if t > 0.0 { -z } else { z })
}

//! Standard normal distribution helpers used for confidence intervals and
//! Wald tests.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn std_normal() -> Normal {
    // Unit normal construction cannot fail.
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// CDF of the standard normal distribution, `P(Z <= x)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Quantile (inverse CDF) of the standard normal distribution.
///
/// `p` must lie strictly between 0 and 1.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    Ok(std_normal().inverse_cdf(p))
}

/// Two-sided tail probability `P(|Z| >= |z|)` for a standard normal `Z`.
pub fn two_sided_p(z: f64) -> f64 {
    // Evaluate in the lower tail for accuracy, then double.
    let tail = std_normal_cdf(-z.abs());
    (2.0 * tail).min(1.0)
}

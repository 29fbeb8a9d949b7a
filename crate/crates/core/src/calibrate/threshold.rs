use crate::error::{Error, Result};
use crate::table::{FrequencyTable, TableLabel};

// Acklam's rational approximation coefficients.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.38357751867269e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

/// Standard normal quantile `Φ^-1(p)` for `p` in `(0, 1)`; relative error
/// below 1.2e-9.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    Ok(if p < P_LOW {
        lower_tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -lower_tail(1.0 - p)
    })
}

fn lower_tail(p: f64) -> f64 {
    let q = (-2.0 * p.ln()).sqrt();
    (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
        / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
}

/// `Φ^-1(1 − β/d)·√variance`: the level a pure-noise estimate exceeds with
/// probability `β/d`, so that across `d` items the chance of any false
/// alarm is about `β`.
pub fn significance_threshold(d: usize, beta: f64, variance: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("domain size must be at least 1"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::invalid(format!(
            "variance must be positive, got {variance}"
        )));
    }
    let tail = beta / d as f64;
    // evaluate the upper quantile through the lower tail to keep precision
    Ok(-inverse_normal_cdf(tail)? * variance.sqrt())
}

/// Sets every estimate below `threshold` to zero.
pub fn zero_below_threshold(estimates: &FrequencyTable, threshold: f64) -> Result<FrequencyTable> {
    if estimates.label() != TableLabel::Estimated {
        return Err(Error::invalid(format!(
            "can only threshold estimated tables, got {}",
            estimates.label()
        )));
    }
    let values = estimates
        .values()
        .iter()
        .map(|&v| if v < threshold { 0.0 } else { v })
        .collect();
    estimates.with_values(values, TableLabel::Estimated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_symmetry() {
        assert_eq!(inverse_normal_cdf(0.5).unwrap(), 0.0);
        for p in [1e-5, 0.01, 0.2, 0.4] {
            let lo = inverse_normal_cdf(p).unwrap();
            let hi = inverse_normal_cdf(1.0 - p).unwrap();
            assert!((lo + hi).abs() < 1e-8 * lo.abs().max(1.0), "{p}");
        }
        assert!(inverse_normal_cdf(0.0).is_err());
        assert!(inverse_normal_cdf(1.0).is_err());
    }

    #[test]
    fn known_quantiles() {
        assert!((inverse_normal_cdf(0.975).unwrap() - 1.959963984540054).abs() < 1e-8);
        assert!((inverse_normal_cdf(0.05).unwrap() + 1.644853626951472).abs() < 1e-8);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(significance_threshold(1, 0.5, 1.0).unwrap(), 0.0);
        let t = significance_threshold(500, 0.05, 900.0).unwrap();
        let t4 = significance_threshold(500, 0.05, 3600.0).unwrap();
        assert!((t4 - 2.0 * t).abs() < 1e-12);
        let big = significance_threshold(41_270, 0.05, 5434.0).unwrap();
        assert!((big - 348.0).abs() < 1.0, "{big}");
        assert!(significance_threshold(0, 0.05, 1.0).is_err());
        assert!(significance_threshold(10, 1.0, 1.0).is_err());
        assert!(significance_threshold(10, 0.05, 0.0).is_err());
    }

    #[test]
    fn zeroing_rule() {
        let est = FrequencyTable::new(vec![-5.0, 10.0, 100.0], 200, TableLabel::Estimated).unwrap();
        let z = zero_below_threshold(&est, 50.0).unwrap();
        assert_eq!(z.values(), &[0.0, 0.0, 100.0]);
        assert_eq!(zero_below_threshold(&z, 50.0).unwrap(), z);
        assert_eq!(zero_below_threshold(&est, f64::NEG_INFINITY).unwrap(), est);
    }
}

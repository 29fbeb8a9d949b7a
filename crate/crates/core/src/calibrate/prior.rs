use std::fmt;
use std::ops::RangeInclusive;

use super::neumaier_sum;
use crate::error::{Error, Result};

/// Half-width, in prior standard deviations, of the automatic grid for a
/// discretised Gaussian prior.
pub(crate) const GAUSSIAN_GRID_SIGMAS: f64 = 10.0;

/// Longest support grid a prior may have.
const MAX_GRID: u64 = 200_000_000;

/// Parametric family a prior was built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriorFamily {
    /// `p(k) ∝ k^-alpha`.
    PowerLaw { alpha: f64 },
    /// Gaussian density sampled on the integer grid and renormalised.
    Gaussian { mu: f64, sigma2: f64 },
    /// Arbitrary probabilities supplied directly.
    Tabulated,
}

impl PriorFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PriorFamily::PowerLaw { .. } => "power-law",
            PriorFamily::Gaussian { .. } => "gaussian",
            PriorFamily::Tabulated => "tabulated",
        }
    }
}

impl fmt::Display for PriorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorFamily::PowerLaw { alpha } => write!(f, "power-law(alpha={alpha})"),
            PriorFamily::Gaussian { mu, sigma2 } => write!(f, "gaussian(mu={mu}, sigma2={sigma2})"),
            PriorFamily::Tabulated => f.write_str("tabulated"),
        }
    }
}

/// Distribution of true item frequencies on the integer grid
/// `k_min..=k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorModel {
    family: PriorFamily,
    k_min: u64,
    pmf: Vec<f64>,
    log_pmf: Vec<f64>,
}

impl PriorModel {
    /// Power law on `1..=k_max`.
    pub fn power_law(alpha: f64, k_max: u64) -> Result<Self> {
        prior_pmf(PriorFamily::PowerLaw { alpha }, 1, k_max)
    }

    /// Discretised Gaussian on an automatic grid covering `mu ± 10σ`,
    /// clipped below at zero.
    pub fn gaussian(mu: f64, sigma2: f64) -> Result<Self> {
        check_gaussian(mu, sigma2)?;
        let sd = sigma2.sqrt();
        let lo = (mu - GAUSSIAN_GRID_SIGMAS * sd).floor().max(0.0);
        let hi = (mu + GAUSSIAN_GRID_SIGMAS * sd).ceil().max(lo);
        if hi - lo >= MAX_GRID as f64 {
            return Err(Error::invalid(format!(
                "gaussian prior with variance {sigma2} needs too large a grid"
            )));
        }
        prior_pmf(PriorFamily::Gaussian { mu, sigma2 }, lo as u64, hi as u64)
    }

    /// Tabulated prior: `weights[j]` is the (unnormalised) mass at
    /// `k_min + j`.
    pub fn from_weights(k_min: u64, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("tabulated prior needs at least one weight"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "prior weights must be finite and non-negative",
            ));
        }
        normalized(
            PriorFamily::Tabulated,
            k_min,
            weights.into_iter().map(f64::ln).collect(),
        )
    }

    pub fn family(&self) -> PriorFamily {
        self.family
    }

    pub fn k_min(&self) -> u64 {
        self.k_min
    }

    pub fn k_max(&self) -> u64 {
        self.k_min + self.pmf.len() as u64 - 1
    }

    pub fn support(&self) -> RangeInclusive<u64> {
        self.k_min..=self.k_max()
    }

    /// Probabilities for `k_min..=k_max` in order.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Natural log of [`pmf`](Self::pmf), exact even where the
    /// probabilities underflow.
    pub fn log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    /// Mass at `k` (zero off the grid).
    pub fn prob(&self, k: u64) -> f64 {
        if k < self.k_min {
            return 0.0;
        }
        self.pmf
            .get((k - self.k_min) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        neumaier_sum(self.grid().map(|(k, p)| k * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        neumaier_sum(self.grid().map(|(k, p)| (k - m) * (k - m) * p))
    }

    fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let k0 = self.k_min as f64;
        self.pmf
            .iter()
            .enumerate()
            .map(move |(j, &p)| (k0 + j as f64, p))
    }
}

/// Builds the normalised pmf of `family` on `k_min..=k_max`.
pub fn prior_pmf(family: PriorFamily, k_min: u64, k_max: u64) -> Result<PriorModel> {
    if k_max < k_min {
        return Err(Error::invalid(format!(
            "empty prior support {k_min}..={k_max}"
        )));
    }
    if k_max - k_min >= MAX_GRID {
        return Err(Error::invalid(format!(
            "prior support {k_min}..={k_max} is too large"
        )));
    }
    let logs = match family {
        PriorFamily::PowerLaw { alpha } => {
            check_alpha(alpha)?;
            if k_min == 0 {
                return Err(Error::invalid("power-law support must start at 1 or above"));
            }
            (k_min..=k_max).map(|k| -alpha * (k as f64).ln()).collect()
        }
        PriorFamily::Gaussian { mu, sigma2 } => {
            check_gaussian(mu, sigma2)?;
            (k_min..=k_max)
                .map(|k| {
                    let z = k as f64 - mu;
                    -z * z / (2.0 * sigma2)
                })
                .collect()
        }
        PriorFamily::Tabulated => {
            return Err(Error::invalid(
                "a tabulated prior has no parameters; use PriorModel::from_weights",
            ));
        }
    };
    normalized(family, k_min, logs)
}

fn normalized(family: PriorFamily, k_min: u64, mut logs: Vec<f64>) -> Result<PriorModel> {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::invalid("prior weights have no mass"));
    }
    let log_total = top + neumaier_sum(logs.iter().map(|l| (l - top).exp())).ln();
    for l in &mut logs {
        *l -= log_total;
    }
    let pmf = logs.iter().map(|l| l.exp()).collect();
    Ok(PriorModel {
        family,
        k_min,
        pmf,
        log_pmf: logs,
    })
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "power-law exponent must be finite and non-negative, got {alpha}"
        )));
    }
    Ok(())
}

fn check_gaussian(mu: f64, sigma2: f64) -> Result<()> {
    if !mu.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian mean must be finite, got {mu}"
        )));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::invalid(format!(
            "gaussian variance must be positive, got {sigma2}"
        )));
    }
    Ok(())
}

/// Mean of the power law `k^-alpha` on `k_min..=k_max`, without building
/// the pmf.
pub(crate) fn power_law_mean(alpha: f64, k_min: u64, k_max: u64) -> f64 {
    let mut num = Vec::with_capacity((k_max - k_min + 1) as usize);
    let mut den = Vec::with_capacity(num.capacity());
    for k in k_min..=k_max {
        let kf = k as f64;
        let w = (-alpha * kf.ln()).exp();
        num.push(kf * w);
        den.push(w);
    }
    neumaier_sum(num) / neumaier_sum(den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_alpha_two_on_four_points() {
        let prior = PriorModel::power_law(2.0, 4).unwrap();
        let z = 1.0 + 1.0 / 4.0 + 1.0 / 9.0 + 1.0 / 16.0;
        let expected = [1.0 / z, 0.25 / z, 1.0 / 9.0 / z, 0.0625 / z];
        for (p, e) in prior.pmf().iter().zip(expected) {
            assert!((p - e).abs() < 1e-15, "{p} vs {e}");
        }
        assert!((prior.pmf()[0] - 0.702439).abs() < 1e-6);
        assert_eq!(prior.support(), 1..=4);
    }

    #[test]
    fn power_law_alpha_zero_is_uniform() {
        let prior = PriorModel::power_law(0.0, 5).unwrap();
        assert!(prior.pmf().iter().all(|&p| (p - 0.2).abs() < 1e-15));
        assert!((power_law_mean(0.0, 1, 5) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_grid_mean() {
        let prior = PriorModel::gaussian(10.0, 4.0).unwrap();
        assert!((prior.mean() - 10.0).abs() < 1e-3);
        assert!((prior.variance() - 4.0).abs() < 1e-3);
        let total: f64 = prior.pmf().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_grid_clips_at_zero() {
        let prior = PriorModel::gaussian(50.0, 1000.0).unwrap();
        assert_eq!(prior.k_min(), 0);
        assert!(prior.k_max() >= 50 + 316);
        assert_eq!(
            prior.family(),
            PriorFamily::Gaussian {
                mu: 50.0,
                sigma2: 1000.0
            }
        );
        let far_left = PriorModel::gaussian(-100.0, 1.0).unwrap();
        assert_eq!(far_left.support(), 0..=0);
        assert_eq!(far_left.pmf(), &[1.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PriorModel::power_law(-1.0, 10).is_err());
        assert!(PriorModel::power_law(f64::NAN, 10).is_err());
        assert!(PriorModel::power_law(1.0, 0).is_err());
        assert!(PriorModel::gaussian(1.0, 0.0).is_err());
        assert!(PriorModel::from_weights(0, vec![]).is_err());
        assert!(PriorModel::from_weights(0, vec![0.0, 0.0]).is_err());
        assert!(PriorModel::from_weights(0, vec![1.0, -0.5]).is_err());
        assert!(prior_pmf(PriorFamily::PowerLaw { alpha: 1.0 }, 0, 3).is_err());
        assert!(prior_pmf(PriorFamily::Tabulated, 0, 3).is_err());
    }

    #[test]
    fn prob_off_grid_is_zero() {
        let prior = PriorModel::from_weights(3, vec![1.0, 3.0]).unwrap();
        assert_eq!(prior.prob(2), 0.0);
        assert!((prior.prob(3) - 0.25).abs() < 1e-15);
        assert!((prior.prob(4) - 0.75).abs() < 1e-15);
        assert_eq!(prior.prob(5), 0.0);
    }
}

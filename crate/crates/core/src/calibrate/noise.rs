use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::protocols::ProtocolSpec;

/// Zero-mean Gaussian model of the per-item estimation noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid(format!(
                "noise variance must be positive and finite, got {variance}"
            )));
        }
        Ok(NoiseModel { variance })
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Log density at `x`.
    pub fn log_pdf(&self, x: f64) -> f64 {
        -0.5 * (x * x / self.variance + (2.0 * PI * self.variance).ln())
    }
}

/// Noise model for `n` reports under `spec`; `l` is the item-set padding
/// length (1 for single items), which scales the variance by `l²`.
pub fn noise_model_for(spec: &ProtocolSpec, n: u64, l: usize) -> Result<NoiseModel> {
    if n == 0 {
        return Err(Error::invalid("noise model needs at least one report"));
    }
    if l == 0 {
        return Err(Error::invalid("item-set length l must be at least 1"));
    }
    let l = l as f64;
    NoiseModel::new(l * l * spec.estimator_variance(n))
}

/// Density of the noise at `x`.
pub fn gaussian_pdf(x: f64, model: &NoiseModel) -> f64 {
    model.log_pdf(x).exp()
}

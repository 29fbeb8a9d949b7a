//! Posterior-mean calibration of noisy frequency estimates.
//!
//! An aggregated estimate is modelled as `f̂ = f + s`: the true frequency
//! `f` drawn from a prior `p_f`, plus zero-mean Gaussian noise `s` whose
//! variance follows from the protocol. Given both distributions the
//! calibrated value is the posterior mean
//!
//! ```text
//! f̃ = Σ_k k · p_s(f̂ − k) p_f(k) / Σ_k p_s(f̂ − k) p_f(k)
//! ```
//!
//! which minimises the expected squared error over all functions of `f̂`.
//! The prior is fitted from the estimates themselves, by moment matching
//! ([`fit_mean_variance`]) or maximum likelihood ([`fit_mle`]).

mod fit;
mod model_io;
mod noise;
mod posterior;
mod prior;
mod threshold;

pub use fit::{fit, fit_mean_variance, fit_mle, FamilyTag, Fit, FitDiagnostics, FitMethod};
pub use model_io::ModelDocument;
pub use noise::{gaussian_pdf, noise_model_for, NoiseModel};
pub use posterior::{
    calibrate_all, calibrate_one, posterior, predictive_pmf, Calibrator, Posterior, PredictiveModel,
};
pub use prior::{prior_pmf, PriorFamily, PriorModel};
pub use threshold::{inverse_normal_cdf, significance_threshold, zero_below_threshold};

use crate::error::{Error, Result};

/// Default half-width of the posterior window, in noise standard deviations.
pub const DEFAULT_TRUNCATION_SIGMAS: f64 = 8.0;

/// Numerical knobs for fitting and calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    /// Posterior window half-width in noise standard deviations.
    pub truncation_sigmas: f64,
    pub pmf_tolerance: f64,
    /// Initial step of the MLE gradient ascent.
    pub gd_step: f64,
    pub gd_max_iters: usize,
    pub gd_grad_tolerance: f64,
    /// Bisection bracket for the power-law exponent.
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub root_tolerance: f64,
    /// Largest frequency a power-law prior can produce; `None` means the
    /// population size of the estimates being fitted.
    pub power_law_k_max: Option<u64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            truncation_sigmas: DEFAULT_TRUNCATION_SIGMAS,
            pmf_tolerance: 1e-9,
            gd_step: 0.01,
            gd_max_iters: 2000,
            gd_grad_tolerance: 1e-6,
            alpha_lo: 0.0,
            alpha_hi: 20.0,
            root_tolerance: 1e-8,
            power_law_k_max: None,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("truncation_sigmas", self.truncation_sigmas),
            ("pmf_tolerance", self.pmf_tolerance),
            ("gd_step", self.gd_step),
            ("gd_grad_tolerance", self.gd_grad_tolerance),
            ("alpha_hi", self.alpha_hi),
            ("root_tolerance", self.root_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.gd_max_iters == 0 {
            return Err(Error::invalid("gd_max_iters must be at least 1"));
        }
        if !(self.alpha_lo >= 0.0 && self.alpha_lo < self.alpha_hi) {
            return Err(Error::invalid(format!(
                "alpha bracket [{}, {}] must satisfy 0 <= lo < hi",
                self.alpha_lo, self.alpha_hi
            )));
        }
        if self.power_law_k_max == Some(0) {
            return Err(Error::invalid("power_law_k_max must be at least 1"));
        }
        Ok(())
    }
}

/// Compensated (Neumaier) summation.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and (population) variance.
pub(crate) fn moments(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = neumaier_sum(values.iter().copied()) / m;
    let var = neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / m;
    (mean, var)
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::noise::NoiseModel;
use super::posterior::log_weights;
use super::prior::{power_law_mean, prior_pmf, PriorFamily, PriorModel, GAUSSIAN_GRID_SIGMAS};
use super::{moments, neumaier_sum, CalibrationConfig};
use crate::error::{Error, Result};
use crate::table::FrequencyTable;

/// Prior family to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FamilyTag {
    PowerLaw,
    Gaussian,
}

impl FamilyTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FamilyTag::PowerLaw => "power-law",
            FamilyTag::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power-law" | "powerlaw" | "power_law" => Ok(FamilyTag::PowerLaw),
            "gaussian" | "normal" => Ok(FamilyTag::Gaussian),
            other => Err(Error::invalid(format!(
                "unknown prior family '{other}' (expected power-law or gaussian)"
            ))),
        }
    }
}

/// How prior parameters are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FitMethod {
    /// Match the sample moments of the estimates.
    MeanVariance,
    /// Maximise the marginal likelihood of the estimates.
    Mle,
}

impl FitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMethod::MeanVariance => "mv",
            FitMethod::Mle => "mle",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mv" | "mean-variance" => Ok(FitMethod::MeanVariance),
            "mle" => Ok(FitMethod::Mle),
            other => Err(Error::invalid(format!(
                "unknown fit method '{other}' (expected mv or mle)"
            ))),
        }
    }
}

/// What happened during a fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub method: String,
    pub iterations: usize,
    pub converged: bool,
    /// Mean mismatch for moment fits, final gradient norm for MLE.
    pub residual: f64,
    /// Mean per-item log-likelihood at the result (MLE only).
    pub log_likelihood: Option<f64>,
    pub warnings: Vec<String>,
    /// Objective after each accepted ascent step, starting point first.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

/// A fitted prior with its diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub prior: PriorModel,
    pub diagnostics: FitDiagnostics,
}

/// Fits `family` with the chosen method.
pub fn fit(
    estimates: &FrequencyTable,
    noise: &NoiseModel,
    family: FamilyTag,
    method: FitMethod,
    config: &CalibrationConfig,
) -> Result<Fit> {
    match method {
        FitMethod::MeanVariance => fit_mean_variance(estimates, noise, family, config),
        FitMethod::Mle => fit_mle(estimates, noise, family, config),
    }
}

fn check_inputs(estimates: &FrequencyTable, config: &CalibrationConfig) -> Result<()> {
    config.validate()?;
    if estimates.d() < 2 {
        return Err(Error::invalid("fitting a prior needs at least 2 estimates"));
    }
    if estimates.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("estimates must be finite"));
    }
    Ok(())
}

fn power_law_k_max(estimates: &FrequencyTable, config: &CalibrationConfig) -> u64 {
    config.power_law_k_max.unwrap_or(estimates.n())
}

/// Gaussian grid wide enough for the prior itself and every estimate, so no
/// posterior window falls off it.
fn gaussian_prior(mu: f64, sigma2: f64, values: &[f64]) -> Result<PriorModel> {
    let sd = sigma2.sqrt();
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let lo = (mu - GAUSSIAN_GRID_SIGMAS * sd).min(min).floor().max(0.0);
    let hi = (mu + GAUSSIAN_GRID_SIGMAS * sd).max(max).ceil().max(lo);
    prior_pmf(PriorFamily::Gaussian { mu, sigma2 }, lo as u64, hi as u64)
}

/// Moment matching: `E(f̂) = E(f)` and `Var(f̂) = Var(f) + Var(s)`.
pub fn fit_mean_variance(
    estimates: &FrequencyTable,
    noise: &NoiseModel,
    family: FamilyTag,
    config: &CalibrationConfig,
) -> Result<Fit> {
    check_inputs(estimates, config)?;
    let (mean, var) = moments(estimates.values());
    let mut diag = FitDiagnostics {
        method: FitMethod::MeanVariance.as_str().into(),
        ..Default::default()
    };
    let prior = match family {
        FamilyTag::PowerLaw => {
            let k_max = power_law_k_max(estimates, config);
            let (alpha, iterations) = solve_alpha(mean, k_max, config)?;
            diag.iterations = iterations;
            diag.residual = power_law_mean(alpha, 1, k_max) - mean;
            PriorModel::power_law(alpha, k_max)?
        }
        FamilyTag::Gaussian => {
            let floor = 1e-6 * noise.variance();
            let mut sigma2 = var - noise.variance();
            if sigma2 < floor {
                diag.warnings.push(format!(
                    "sample variance {var} does not exceed the noise variance {}; prior variance floored at {floor}",
                    noise.variance()
                ));
                sigma2 = floor;
            }
            gaussian_prior(mean, sigma2, estimates.values())?
        }
    };
    diag.converged = true;
    Ok(Fit {
        prior,
        diagnostics: diag,
    })
}

/// Power-law exponent on `1..=k_max` whose mean is `target`, by bisection.
fn solve_alpha(target: f64, k_max: u64, config: &CalibrationConfig) -> Result<(f64, usize)> {
    let (mut lo, mut hi) = (config.alpha_lo, config.alpha_hi);
    let mean_lo = power_law_mean(lo, 1, k_max);
    let mean_hi = power_law_mean(hi, 1, k_max);
    let slack = 1e-12 * mean_lo;
    if target > mean_lo + slack || target < mean_hi - slack {
        return Err(Error::FitFailure(format!(
            "sample mean {target} is outside [{mean_hi}, {mean_lo}], the power-law means reachable with alpha in [{lo}, {hi}] on 1..={k_max}"
        )));
    }
    if target >= mean_lo {
        return Ok((lo, 0));
    }
    if target <= mean_hi {
        return Ok((hi, 0));
    }
    let mut iterations = 0;
    while hi - lo > config.root_tolerance {
        let mid = 0.5 * (lo + hi);
        if power_law_mean(mid, 1, k_max) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok((0.5 * (lo + hi), iterations))
}

/// Distinct estimate values with multiplicities.
fn distinct(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, count)) if *last == v => *count += 1.0,
            _ => out.push((v, 1.0)),
        }
    }
    out
}

/// Parameterisation used by the ascent.
enum Param {
    /// `theta = [alpha]`.
    PowerLaw { k_max: u64 },
    /// `theta = [(mu - mu0) / scale, ln sigma2]`.
    Gaussian { mu0: f64, scale: f64 },
}

struct Objective<'a> {
    param: Param,
    values: &'a [f64],
    groups: Vec<(f64, f64)>,
    noise: &'a NoiseModel,
    config: &'a CalibrationConfig,
}

impl Objective<'_> {
    fn prior(&self, theta: &[f64]) -> Result<PriorModel> {
        match self.param {
            Param::PowerLaw { k_max } => PriorModel::power_law(theta[0], k_max),
            Param::Gaussian { mu0, scale } => {
                gaussian_prior(mu0 + scale * theta[0], theta[1].exp(), self.values)
            }
        }
    }

    fn project(&self, theta: &mut [f64]) {
        if let Param::PowerLaw { .. } = self.param {
            theta[0] = theta[0].clamp(self.config.alpha_lo, self.config.alpha_hi);
        }
    }

    /// Per-item score `∂ ln p_f(k) / ∂θ` up to the normaliser term.
    fn score(&self, theta: &[f64], k: f64, out: &mut [f64]) {
        match self.param {
            Param::PowerLaw { .. } => out[0] = -k.ln(),
            Param::Gaussian { mu0, scale } => {
                let mu = mu0 + scale * theta[0];
                let s = theta[1].exp();
                let z = k - mu;
                out[0] = scale * z / s;
                out[1] = z * z / (2.0 * s);
            }
        }
    }

    /// Mean log-likelihood per item and its gradient; `None` when some
    /// estimate has no prior mass in its window.
    fn eval(&self, theta: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        let prior = self.prior(theta)?;
        let dim = theta.len();
        let mut buf = vec![0.0; dim];

        let mut prior_score = vec![0.0; dim];
        let k0 = prior.k_min() as f64;
        for (j, &p) in prior.pmf().iter().enumerate() {
            if p > 0.0 {
                self.score(theta, k0 + j as f64, &mut buf);
                for (acc, b) in prior_score.iter_mut().zip(&buf) {
                    *acc += p * b;
                }
            }
        }

        let sigmas = self.config.truncation_sigmas;
        let mut terms = Vec::with_capacity(self.groups.len());
        let mut post_score = vec![0.0; dim];
        for &(f_hat, count) in &self.groups {
            let (lo, logs, top) = match log_weights(f_hat, &prior, self.noise, sigmas) {
                Ok(w) => w,
                Err(Error::DegeneratePosterior { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut total = 0.0;
            let mut acc = vec![0.0; dim];
            for (j, l) in logs.iter().enumerate() {
                let w = (l - top).exp();
                if w == 0.0 {
                    continue;
                }
                total += w;
                self.score(theta, (lo + j as u64) as f64, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += w * b;
                }
            }
            terms.push(count * (top + total.ln()));
            for (p, a) in post_score.iter_mut().zip(&acc) {
                *p += count * a / total;
            }
        }
        let d = self.values.len() as f64;
        let value = neumaier_sum(terms) / d;
        if !value.is_finite() {
            return Ok(None);
        }
        let grad = post_score
            .iter()
            .zip(&prior_score)
            .map(|(p, q)| p / d - q)
            .collect();
        Ok(Some((value, grad)))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Maximum marginal likelihood of the estimates under the prior convolved
/// with the noise, by gradient ascent with backtracking. Starts from the
/// moment fit.
pub fn fit_mle(
    estimates: &FrequencyTable,
    noise: &NoiseModel,
    family: FamilyTag,
    config: &CalibrationConfig,
) -> Result<Fit> {
    check_inputs(estimates, config)?;
    let values = estimates.values();
    let mut warnings = Vec::new();
    let start = fit_mean_variance(estimates, noise, family, config);
    let (param, mut theta) = match family {
        FamilyTag::PowerLaw => {
            let alpha = match &start {
                Ok(f) => match f.prior.family() {
                    PriorFamily::PowerLaw { alpha } => alpha,
                    _ => unreachable!("power-law fit returned another family"),
                },
                Err(e) => {
                    warnings.push(format!("moment fit failed ({e}); starting from alpha = 2"));
                    2.0f64.clamp(config.alpha_lo, config.alpha_hi)
                }
            };
            (
                Param::PowerLaw {
                    k_max: power_law_k_max(estimates, config),
                },
                vec![alpha],
            )
        }
        FamilyTag::Gaussian => {
            let f = start?;
            let PriorFamily::Gaussian { mu, sigma2 } = f.prior.family() else {
                unreachable!("gaussian fit returned another family")
            };
            warnings.extend(f.diagnostics.warnings);
            let scale = sigma2.sqrt().max(1.0);
            (Param::Gaussian { mu0: mu, scale }, vec![0.0, sigma2.ln()])
        }
    };
    let objective = Objective {
        param,
        values,
        groups: distinct(values),
        noise,
        config,
    };

    let Some((mut value, mut grad)) = objective.eval(&theta)? else {
        return Err(Error::FitFailure(
            "log-likelihood is not finite at the starting point: some estimate has no prior mass in its window".into(),
        ));
    };
    let mut trace = vec![value];
    let mut step = config.gd_step;
    let mut iterations = 0;
    let mut converged = false;
    'ascent: while iterations < config.gd_max_iters {
        if norm(&grad) < config.gd_grad_tolerance {
            converged = true;
            break;
        }
        loop {
            let mut next: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
            objective.project(&mut next);
            if next == theta {
                // pinned against the bracket with the gradient pointing out
                converged = true;
                warnings.push(format!("stopped at the parameter bound {theta:?}"));
                break 'ascent;
            }
            if let Some((v, g)) = objective.eval(&next)? {
                if v >= value {
                    theta = next;
                    value = v;
                    grad = g;
                    trace.push(v);
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-14 {
                converged = true;
                warnings.push(format!(
                    "line search stalled at gradient norm {:.3e}; treating as converged",
                    norm(&grad)
                ));
                break 'ascent;
            }
        }
        iterations += 1;
    }
    if !converged {
        warnings.push(format!(
            "iteration cap {} reached with gradient norm {:.3e}",
            config.gd_max_iters,
            norm(&grad)
        ));
    }
    let prior = objective.prior(&theta)?;
    Ok(Fit {
        prior,
        diagnostics: FitDiagnostics {
            method: FitMethod::Mle.as_str().into(),
            iterations,
            converged,
            residual: norm(&grad),
            log_likelihood: Some(value),
            warnings,
            objective_trace: trace,
        },
    })
}

use std::collections::HashMap;
use std::ops::RangeInclusive;

use super::noise::NoiseModel;
use super::prior::PriorModel;
use super::DEFAULT_TRUNCATION_SIGMAS;
use crate::error::{Error, Result};
use crate::table::{FrequencyTable, TableLabel};

/// Posterior distribution of one item's true frequency given its estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    k_min: u64,
    probs: Vec<f64>,
    mean: f64,
    log_evidence: f64,
}

impl Posterior {
    pub fn support(&self) -> RangeInclusive<u64> {
        self.k_min..=self.k_min + self.probs.len() as u64 - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Posterior mean, the calibrated frequency.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `Σ_k p_s(f̂ − k) p_f(k)` over the window.
    pub fn evidence(&self) -> f64 {
        self.log_evidence.exp()
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }
}

/// Prior grid points within `sigmas` noise deviations of `f_hat`.
pub(crate) fn window(
    f_hat: f64,
    prior: &PriorModel,
    noise: &NoiseModel,
    sigmas: f64,
) -> Option<(u64, u64)> {
    let half = sigmas * noise.sigma();
    let lo = (f_hat - half).ceil().max(prior.k_min() as f64);
    let hi = (f_hat + half).floor().min(prior.k_max() as f64);
    (lo <= hi).then_some((lo as u64, hi as u64))
}

/// Log weights `ln p_f(k) + ln p_s(f̂ − k)` over the window, with their
/// maximum. Fails when the window holds no prior mass.
pub(crate) fn log_weights(
    f_hat: f64,
    prior: &PriorModel,
    noise: &NoiseModel,
    sigmas: f64,
) -> Result<(u64, Vec<f64>, f64)> {
    if !f_hat.is_finite() {
        return Err(Error::invalid(format!(
            "estimate must be finite, got {f_hat}"
        )));
    }
    let degenerate = || Error::DegeneratePosterior { f_hat };
    let (lo, hi) = window(f_hat, prior, noise, sigmas).ok_or_else(degenerate)?;
    let log_pmf = &prior.log_pmf()[(lo - prior.k_min()) as usize..=(hi - prior.k_min()) as usize];
    let mut top = f64::NEG_INFINITY;
    let logs: Vec<f64> = log_pmf
        .iter()
        .enumerate()
        .map(|(j, &lp)| {
            let k = (lo + j as u64) as f64;
            let lw = lp + noise.log_pdf(f_hat - k);
            top = top.max(lw);
            lw
        })
        .collect();
    if top == f64::NEG_INFINITY {
        return Err(degenerate());
    }
    Ok((lo, logs, top))
}

fn posterior_with(
    f_hat: f64,
    prior: &PriorModel,
    noise: &NoiseModel,
    sigmas: f64,
) -> Result<Posterior> {
    let (lo, logs, top) = log_weights(f_hat, prior, noise, sigmas)?;
    let mut probs: Vec<f64> = logs.into_iter().map(|l| (l - top).exp()).collect();
    let total: f64 = probs.iter().sum();
    let mut mean = 0.0;
    for (j, p) in probs.iter_mut().enumerate() {
        *p /= total;
        mean += (lo + j as u64) as f64 * *p;
    }
    let hi = lo + probs.len() as u64 - 1;
    Ok(Posterior {
        k_min: lo,
        probs,
        mean: mean.clamp(lo as f64, hi as f64),
        log_evidence: top + total.ln(),
    })
}

/// Bayes posterior over the prior support, truncated to `±8σ` around
/// `f_hat`.
pub fn posterior(f_hat: f64, prior: &PriorModel, noise: &NoiseModel) -> Result<Posterior> {
    posterior_with(f_hat, prior, noise, DEFAULT_TRUNCATION_SIGMAS)
}

/// Posterior mean of the true frequency given estimate `f_hat`.
pub fn calibrate_one(f_hat: f64, prior: &PriorModel, noise: &NoiseModel) -> Result<f64> {
    posterior(f_hat, prior, noise).map(|p| p.mean)
}

/// Calibrates every entry of an estimated table.
pub fn calibrate_all(
    estimates: &FrequencyTable,
    prior: &PriorModel,
    noise: &NoiseModel,
) -> Result<FrequencyTable> {
    Calibrator::new(prior, *noise).calibrate_table(estimates)
}

/// Reusable calibrator with a configurable truncation window. Repeated
/// estimate values (common, since estimates live on a lattice) are
/// computed once.
#[derive(Clone, Debug)]
pub struct Calibrator<'a> {
    prior: &'a PriorModel,
    noise: NoiseModel,
    sigmas: f64,
}

impl<'a> Calibrator<'a> {
    pub fn new(prior: &'a PriorModel, noise: NoiseModel) -> Self {
        Calibrator {
            prior,
            noise,
            sigmas: DEFAULT_TRUNCATION_SIGMAS,
        }
    }

    pub fn with_truncation(mut self, sigmas: f64) -> Result<Self> {
        if !(sigmas.is_finite() && sigmas > 0.0) {
            return Err(Error::invalid(format!(
                "truncation width must be positive, got {sigmas}"
            )));
        }
        self.sigmas = sigmas;
        Ok(self)
    }

    pub fn posterior(&self, f_hat: f64) -> Result<Posterior> {
        posterior_with(f_hat, self.prior, &self.noise, self.sigmas)
    }

    pub fn calibrate(&self, f_hat: f64) -> Result<f64> {
        self.posterior(f_hat).map(|p| p.mean)
    }

    pub fn calibrate_table(&self, estimates: &FrequencyTable) -> Result<FrequencyTable> {
        if estimates.label() != TableLabel::Estimated {
            return Err(Error::invalid(format!(
                "can only calibrate estimated tables, got {}",
                estimates.label()
            )));
        }
        let mut cache: HashMap<u64, f64> = HashMap::new();
        let mut out = Vec::with_capacity(estimates.d());
        for (i, &v) in estimates.values().iter().enumerate() {
            let c = match cache.get(&v.to_bits()) {
                Some(&c) => c,
                None => {
                    let c = self.calibrate(v).map_err(|e| Error::Item {
                        item: i + 1,
                        source: Box::new(e),
                    })?;
                    cache.insert(v.to_bits(), c);
                    c
                }
            };
            out.push(c);
        }
        estimates.with_values(out, TableLabel::Calibrated)
    }
}

/// Distribution of the estimate `f̂ = f + s` on an integer grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveModel {
    lo: i64,
    pmf: Vec<f64>,
}

impl PredictiveModel {
    pub fn support(&self) -> RangeInclusive<i64> {
        self.lo..=self.lo + self.pmf.len() as i64 - 1
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Mass at grid point `k_hat` (zero off the grid).
    pub fn prob(&self, k_hat: i64) -> f64 {
        if k_hat < self.lo {
            return 0.0;
        }
        self.pmf
            .get((k_hat - self.lo) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(j, p)| (self.lo + j as i64) as f64 * p)
            .sum()
    }
}

/// Convolution of prior and noise, on the prior support widened by `±8σ`
/// and normalised. Each grid point pairs with the same prior points as the
/// posterior window of that estimate.
pub fn predictive_pmf(prior: &PriorModel, noise: &NoiseModel) -> PredictiveModel {
    let half = (DEFAULT_TRUNCATION_SIGMAS * noise.sigma()).floor() as i64;
    let k_min = prior.k_min() as i64;
    let lo = k_min - half;
    let len = prior.pmf().len() + 2 * half as usize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|x| super::gaussian_pdf(x as f64, noise))
        .collect();
    let mut pmf = vec![0.0; len];
    for (j, &p) in prior.pmf().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        // grid index of k - half is exactly j
        for (o, &g) in kernel.iter().enumerate() {
            pmf[j + o] += p * g;
        }
    }
    let total: f64 = pmf.iter().sum();
    for v in &mut pmf {
        *v /= total;
    }
    PredictiveModel { lo, pmf }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> PriorModel {
        let mut w = vec![0.0; 11];
        w[0] = 1.0;
        w[10] = 1.0;
        PriorModel::from_weights(0, w).unwrap()
    }

    #[test]
    fn point_mass_prior_dominates() {
        let prior = PriorModel::from_weights(5, vec![1.0]).unwrap();
        let noise = NoiseModel::new(4.0).unwrap();
        for f_hat in [-3.0, 5.0, 9.5] {
            let post = posterior(f_hat, &prior, &noise).unwrap();
            assert_eq!(post.probs(), &[1.0]);
            assert_eq!(post.mean(), 5.0);
        }
    }

    #[test]
    fn symmetric_two_point_prior() {
        let noise = NoiseModel::new(25.0).unwrap();
        let post = posterior(5.0, &two_point(), &noise).unwrap();
        assert!((post.prob_at(0) - 0.5).abs() < 1e-12);
        assert!((post.prob_at(10) - 0.5).abs() < 1e-12);
        assert!((post.mean() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_prior_off_centre() {
        // standard normal densities at 0.6 and 1.4
        let phi = |z: f64| (-z * z / 2.0).exp();
        let expected = 10.0 * phi(1.4) / (phi(0.6) + phi(1.4));
        let noise = NoiseModel::new(25.0).unwrap();
        let got = calibrate_one(3.0, &two_point(), &noise).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 3.10).abs() < 0.01, "{got}");
    }

    #[test]
    fn window_outside_support_is_degenerate() {
        let prior = PriorModel::from_weights(100, vec![1.0; 10]).unwrap();
        let noise = NoiseModel::new(1.0).unwrap();
        let err = posterior(0.0, &prior, &noise).unwrap_err();
        assert!(matches!(err, Error::DegeneratePosterior { f_hat } if f_hat == 0.0));
        assert!(posterior(f64::NAN, &prior, &noise).is_err());
    }

    #[test]
    fn calibrate_all_attaches_item_index() {
        let prior = PriorModel::from_weights(100, vec![1.0; 10]).unwrap();
        let noise = NoiseModel::new(1.0).unwrap();
        let est = FrequencyTable::new(vec![104.0, 0.0], 10, TableLabel::Estimated).unwrap();
        match calibrate_all(&est, &prior, &noise).unwrap_err() {
            Error::Item { item, .. } => assert_eq!(item, 2),
            other => panic!("unexpected {other}"),
        }
        let truth = FrequencyTable::new(vec![104.0], 10, TableLabel::True).unwrap();
        assert!(calibrate_all(&truth, &prior, &noise).is_err());
    }

    #[test]
    fn single_item_table_matches_calibrate_one() {
        let prior = PriorModel::power_law(1.5, 500).unwrap();
        let noise = NoiseModel::new(400.0).unwrap();
        let est = FrequencyTable::new(vec![37.5], 500, TableLabel::Estimated).unwrap();
        let table = calibrate_all(&est, &prior, &noise).unwrap();
        assert_eq!(table.label(), TableLabel::Calibrated);
        assert_eq!(
            table.values()[0],
            calibrate_one(37.5, &prior, &noise).unwrap()
        );
    }

    #[test]
    fn predictive_of_point_mass_is_shifted_noise() {
        let prior = PriorModel::from_weights(20, vec![1.0]).unwrap();
        let noise = NoiseModel::new(9.0).unwrap();
        let pred = predictive_pmf(&prior, &noise);
        assert_eq!(pred.support(), -4..=44);
        let total: f64 = pred.pmf().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        for x in [-4i64, 0, 3, 11] {
            let expected = super::super::gaussian_pdf(x as f64, &noise);
            assert!((pred.prob(20 + x) - expected).abs() < 1e-6);
            assert!((pred.prob(20 + x) - pred.prob(20 - x)).abs() < 1e-15);
        }
    }

    #[test]
    fn predictive_of_two_point_prior_is_symmetric() {
        let noise = NoiseModel::new(25.0).unwrap();
        let pred = predictive_pmf(&two_point(), &noise);
        for x in 0..45i64 {
            assert!((pred.prob(5 + x) - pred.prob(5 - x)).abs() < 1e-15);
        }
        assert!((pred.mean() - 5.0).abs() < 1e-9);
    }

    impl Posterior {
        fn prob_at(&self, k: u64) -> f64 {
            self.probs
                .get((k - self.k_min) as usize)
                .copied()
                .unwrap_or(0.0)
        }
    }
}

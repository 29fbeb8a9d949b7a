use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;

use crate::calibrate::PriorModel;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::table::FrequencyTable;

const MAX_RETRIES: u64 = 8;
const SHUFFLE_STREAM: u64 = u64::MAX;

/// Recipe for a synthetic population.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub d: usize,
    /// Population size to rescale to; `None` keeps the raw draws as the
    /// frequencies, so `n` is their sum.
    pub n: Option<u64>,
    /// Distribution the per-item frequencies are drawn from.
    pub prior: PriorModel,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(d: usize, n: Option<u64>, prior: PriorModel, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("synthetic domain size d must be at least 1"));
        }
        if n == Some(0) {
            return Err(Error::invalid(
                "synthetic population size n must be at least 1",
            ));
        }
        Ok(SyntheticSpec { d, n, prior, seed })
    }

    /// Power law `k^-alpha` on `1..=k_max`, with `k_max = n` (or 10 000
    /// when `n` is left free).
    pub fn power_law(d: usize, n: Option<u64>, alpha: f64, seed: u64) -> Result<Self> {
        let k_max = n.unwrap_or(10_000);
        Self::new(d, n, PriorModel::power_law(alpha, k_max)?, seed)
    }
}

/// True frequencies plus one item per user.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub truth: FrequencyTable,
    /// Item held by each user, shuffled.
    pub users: Vec<usize>,
}

/// Draws per-item frequencies i.i.d. from the prior, optionally rescales
/// them to sum to `n` (largest-remainder rounding), and materialises a
/// shuffled user population.
pub fn synthesize(spec: &SyntheticSpec) -> Result<Population> {
    let pmf = spec.prior.pmf();
    let sampler = WeightedIndex::new(pmf)
        .map_err(|e| Error::invalid(format!("prior cannot be sampled: {e}")))?;
    let k_min = spec.prior.k_min();
    let mut draws = None;
    for attempt in 0..=MAX_RETRIES {
        let mut rng = stream(derive_seed(spec.seed, attempt));
        let g: Vec<u64> = (0..spec.d)
            .map(|_| k_min + sampler.sample(&mut rng) as u64)
            .collect();
        if g.iter().any(|&x| x > 0) {
            draws = Some(g);
            break;
        }
    }
    let g = draws.ok_or_else(|| {
        Error::DegenerateSample(format!(
            "all draws were zero after {} attempts",
            MAX_RETRIES + 1
        ))
    })?;
    let counts = match spec.n {
        Some(n) => largest_remainder(&g, n),
        None => g,
    };
    let n: u64 = counts.iter().sum();
    let truth = FrequencyTable::from_counts(&counts, n)?;
    let mut users = Vec::with_capacity(n as usize);
    for (i, &c) in counts.iter().enumerate() {
        users.extend(std::iter::repeat(i + 1).take(c as usize));
    }
    users.shuffle(&mut stream(derive_seed(spec.seed, SHUFFLE_STREAM)));
    Ok(Population { truth, users })
}

/// Integer apportionment of `n` proportionally to `weights` (not all zero).
fn largest_remainder(weights: &[u64], n: u64) -> Vec<u64> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    let mut out = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let scaled = n as u128 * w as u128;
        out.push((scaled / total) as u64);
        rems.push((scaled % total, i));
    }
    let short = n - out.iter().sum::<u64>();
    rems.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(short as usize) {
        out[i] += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_splits_evenly() {
        let prior = PriorModel::from_weights(1, vec![1.0]).unwrap();
        let pop = synthesize(&SyntheticSpec::new(4, Some(8), prior, 3).unwrap()).unwrap();
        assert_eq!(pop.truth.values(), &[2.0, 2.0, 2.0, 2.0]);
        assert_eq!(pop.users.len(), 8);
    }

    #[test]
    fn largest_remainder_hits_target() {
        assert_eq!(largest_remainder(&[1, 1, 1], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[5, 0, 5], 3), vec![2, 0, 1]);
        assert_eq!(largest_remainder(&[1, 2, 7], 100), vec![10, 20, 70]);
    }

    #[test]
    fn sums_to_n_for_every_seed() {
        for seed in 0..25 {
            let spec = SyntheticSpec::power_law(57, Some(9_999), 1.7, seed).unwrap();
            let pop = synthesize(&spec).unwrap();
            assert_eq!(pop.truth.sum(), 9_999.0);
            assert_eq!(pop.truth.n(), 9_999);
        }
    }

    #[test]
    fn reproducible_from_seed() {
        let spec = SyntheticSpec::power_law(100, Some(5_000), 2.0, 7).unwrap();
        assert_eq!(synthesize(&spec).unwrap(), synthesize(&spec).unwrap());
        let other = SyntheticSpec {
            seed: 8,
            ..spec.clone()
        };
        assert_ne!(
            synthesize(&spec).unwrap().truth,
            synthesize(&other).unwrap().truth
        );
    }

    #[test]
    fn users_match_truth() {
        let spec = SyntheticSpec::power_law(30, None, 1.5, 1).unwrap();
        let pop = synthesize(&spec).unwrap();
        let mut counts = vec![0u64; 30];
        for &u in &pop.users {
            counts[u - 1] += 1;
        }
        let truth: Vec<u64> = pop.truth.values().iter().map(|&v| v as u64).collect();
        assert_eq!(counts, truth);
        assert!(
            pop.truth.values().iter().all(|&v| v >= 1.0),
            "raw power-law draws start at 1"
        );
    }

    #[test]
    fn all_zero_draws_exhaust_retries() {
        let prior = PriorModel::from_weights(0, vec![1.0]).unwrap();
        let spec = SyntheticSpec::new(5, Some(10), prior, 1).unwrap();
        assert!(matches!(synthesize(&spec), Err(Error::DegenerateSample(_))));
    }
}

use rand::seq::index;
use rand::Rng;

use super::aggregate::{aggregate, SupportCounts};
use super::{Domain, PerturbedReport, ProtocolKind, ProtocolSpec};
use crate::error::{Error, Result};
use crate::rng::StreamFactory;
use crate::table::{FrequencyTable, TableLabel};

/// A user holding a set of distinct real items.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemSetUser {
    items: Vec<usize>,
}

impl ItemSetUser {
    /// Deduplicates `items` and checks they lie in `1..=d`.
    pub fn new(items: impl IntoIterator<Item = usize>, d: usize) -> Result<Self> {
        let mut items: Vec<usize> = items.into_iter().collect();
        items.sort_unstable();
        items.dedup();
        if let Some(&bad) = items.iter().find(|&&i| i == 0 || i > d) {
            return Err(Error::invalid(format!(
                "item {bad} outside the domain 1..={d}"
            )));
        }
        Ok(ItemSetUser { items })
    }

    /// Sorted, distinct items.
    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Nearest-rank percentile of the set sizes, floored at 1.
pub fn percentile_l(set_sizes: &[usize], fraction: f64) -> Result<usize> {
    if set_sizes.is_empty() {
        return Err(Error::invalid("percentile of an empty sequence"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "percentile fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut sorted = set_sizes.to_vec();
    sorted.sort_unstable();
    let m = sorted.len();
    // the small slack keeps e.g. 0.7 * 10 from ceiling to 8
    let rank = ((fraction * m as f64 - 1e-9).ceil() as usize).clamp(1, m);
    Ok(sorted[rank - 1].max(1))
}

/// Fixes the user to exactly `l` items (padding with distinct dummies or
/// subsampling) and returns one of them uniformly at random.
///
/// Dummy slots are the indices `d+1..=d+l` of `domain`.
pub fn pad_and_sample<R: Rng + ?Sized>(
    user: &ItemSetUser,
    l: usize,
    domain: &Domain,
    rng: &mut R,
) -> Result<usize> {
    if l < 1 {
        return Err(Error::invalid("pad length l must be at least 1"));
    }
    if domain.dummy_count() != l {
        return Err(Error::invalid(format!(
            "domain has {} dummy slots but l = {l}",
            domain.dummy_count()
        )));
    }
    if let Some(&last) = user.items.last() {
        if last > domain.d() {
            return Err(Error::invalid(format!(
                "item {last} outside the real domain"
            )));
        }
    }
    let m = user.len();
    if m < l {
        let dummies = index::sample(rng, l, l - m);
        let slot = rng.gen_range(0..l);
        Ok(if slot < m {
            user.items[slot]
        } else {
            domain.d() + 1 + dummies.index(slot - m)
        })
    } else if m > l {
        let kept = index::sample(rng, m, l);
        let slot = rng.gen_range(0..l);
        Ok(user.items[kept.index(slot)])
    } else {
        Ok(user.items[rng.gen_range(0..l)])
    }
}

/// Aggregates item-set reports and rescales by `l`.
pub fn itemset_aggregate<'a>(
    spec: &ProtocolSpec,
    reports: impl IntoIterator<Item = &'a PerturbedReport>,
    d: usize,
    l: usize,
) -> Result<FrequencyTable> {
    if l < 1 {
        return Err(Error::invalid("pad length l must be at least 1"));
    }
    scale(aggregate(spec, reports, d)?, l)
}

fn scale(table: FrequencyTable, l: usize) -> Result<FrequencyTable> {
    let values = table.values().iter().map(|v| v * l as f64).collect();
    table.with_values(values, TableLabel::Estimated)
}

/// Pads/samples and perturbs every user, returning the support counts over
/// real items. User `u` draws from `streams.stream(u)`: first the sampling
/// step, then the perturbation.
pub fn simulate_itemset_counts(
    spec: &ProtocolSpec,
    domain: &Domain,
    users: &[ItemSetUser],
    streams: &StreamFactory,
) -> Result<SupportCounts> {
    if spec.kind() == ProtocolKind::Krr && spec.krr_domain() != Some(domain.len()) {
        return Err(Error::invalid(
            "k-RR spec does not match the padded domain size",
        ));
    }
    let l = domain.dummy_count();
    let mut counts = SupportCounts::new(domain.d());
    for (u, user) in users.iter().enumerate() {
        let mut rng = streams.stream(u as u64);
        let item = pad_and_sample(user, l, domain, &mut rng)?;
        counts.absorb(spec, domain, item, &mut rng);
    }
    Ok(counts)
}

/// One padded-and-sampled collection under `seed`, scaled by `l`.
pub fn simulate_itemset_estimates(
    spec: &ProtocolSpec,
    domain: &Domain,
    users: &[ItemSetUser],
    seed: u64,
) -> Result<FrequencyTable> {
    let counts = simulate_itemset_counts(spec, domain, users, &StreamFactory::new(seed))?;
    scale(counts.estimate(spec)?, domain.dummy_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{aggregate, oue_spec, perturb};
    use crate::rng::stream;

    #[test]
    fn percentile_examples() {
        let sizes: Vec<usize> = (1..=10).collect();
        assert_eq!(percentile_l(&sizes, 0.9).unwrap(), 9);
        assert_eq!(percentile_l(&sizes, 0.7).unwrap(), 7);
        assert_eq!(percentile_l(&sizes, 1.0).unwrap(), 10);
        assert_eq!(percentile_l(&[3, 3, 3, 3], 0.1).unwrap(), 3);
        assert_eq!(percentile_l(&[3, 3, 3, 3], 0.9).unwrap(), 3);
        assert_eq!(percentile_l(&[0, 0, 0], 0.9).unwrap(), 1);
        assert!(percentile_l(&[], 0.9).is_err());
        assert!(percentile_l(&[1], 0.0).is_err());
        assert!(percentile_l(&[1], 1.5).is_err());
    }

    #[test]
    fn user_sets_are_deduplicated_and_checked() {
        let u = ItemSetUser::new([3, 1, 3, 2], 5).unwrap();
        assert_eq!(u.items(), &[1, 2, 3]);
        assert!(ItemSetUser::new([0], 5).is_err());
        assert!(ItemSetUser::new([6], 5).is_err());
        assert!(ItemSetUser::new([], 5).unwrap().is_empty());
    }

    fn frequencies(user: &ItemSetUser, l: usize, d: usize, draws: usize) -> Vec<f64> {
        let dom = Domain::with_dummies(d, l).unwrap();
        let mut rng = stream(17);
        let mut hits = vec![0usize; dom.len() + 1];
        for _ in 0..draws {
            hits[pad_and_sample(user, l, &dom, &mut rng).unwrap()] += 1;
        }
        hits.into_iter().map(|h| h as f64 / draws as f64).collect()
    }

    #[test]
    fn padding_gives_each_slot_equal_weight() {
        let user = ItemSetUser::new([2, 4], 6).unwrap();
        let f = frequencies(&user, 3, 6, 60_000);
        assert!((f[2] - 1.0 / 3.0).abs() < 0.01);
        assert!((f[4] - 1.0 / 3.0).abs() < 0.01);
        // the single padding slot is spread over the three dummies
        let dummy: f64 = f[7..=9].iter().sum();
        assert!((dummy - 1.0 / 3.0).abs() < 0.01);
        for x in &f[7..=9] {
            assert!((x - 1.0 / 9.0).abs() < 0.01);
        }
    }

    #[test]
    fn subsampling_picks_each_item_with_one_over_size() {
        let user = ItemSetUser::new([1, 2, 3, 4, 5], 5).unwrap();
        let f = frequencies(&user, 3, 5, 60_000);
        for x in &f[1..=5] {
            assert!((x - 0.2).abs() < 0.01);
        }
        assert!(f[6..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_user_always_reports_a_dummy() {
        let user = ItemSetUser::new([], 4).unwrap();
        let dom = Domain::with_dummies(4, 2).unwrap();
        let mut rng = stream(3);
        for _ in 0..500 {
            assert!(dom.is_dummy(pad_and_sample(&user, 2, &dom, &mut rng).unwrap()));
        }
    }

    #[test]
    fn pad_length_must_match_dummy_slots() {
        let user = ItemSetUser::new([1], 4).unwrap();
        let mut rng = stream(3);
        assert!(pad_and_sample(&user, 0, &Domain::new(4).unwrap(), &mut rng).is_err());
        assert!(pad_and_sample(&user, 2, &Domain::with_dummies(4, 3).unwrap(), &mut rng).is_err());
    }

    #[test]
    fn l_of_one_is_plain_aggregation() {
        let spec = oue_spec(1.0).unwrap();
        let dom = Domain::with_dummies(5, 1).unwrap();
        let mut rng = stream(8);
        let reports: Vec<_> = (0..100)
            .map(|u| perturb(&spec, &dom, u % 6 + 1, &mut rng).unwrap())
            .collect();
        assert_eq!(
            itemset_aggregate(&spec, &reports, 5, 1).unwrap(),
            aggregate(&spec, &reports, 5).unwrap()
        );
    }
}

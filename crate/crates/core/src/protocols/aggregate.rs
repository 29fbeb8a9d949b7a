use rand::Rng;

use super::perturb::{check_item, krr_report, olh_hash, olh_report, unary_ones};
use super::{Domain, PerturbedReport, ProtocolKind, ProtocolSpec};
use crate::data::materialize_users;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, StreamFactory};
use crate::table::{FrequencyTable, TableLabel};

/// Running per-item support counts over real items `1..=d`.
///
/// Counting is a commutative, associative reduction: partial counters built
/// over any partition of the reports can be [merged](SupportCounts::merge).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportCounts {
    counts: Vec<u64>,
    reports: u64,
}

impl SupportCounts {
    pub fn new(d: usize) -> Self {
        SupportCounts {
            counts: vec![0; d],
            reports: 0,
        }
    }

    pub fn d(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of reports absorbed so far.
    pub fn reports(&self) -> u64 {
        self.reports
    }

    pub fn add(&mut self, spec: &ProtocolSpec, report: &PerturbedReport) -> Result<()> {
        if !report.kind_matches(spec.kind()) {
            return Err(Error::invalid(format!(
                "report variant does not match protocol {}",
                spec.kind()
            )));
        }
        let d = self.counts.len();
        match report {
            PerturbedReport::Bits(bits) => {
                for i in bits.ones().take_while(|&i| i < d) {
                    self.counts[i] += 1;
                }
            }
            PerturbedReport::Hashed { seed, bucket } => self.add_hashed(spec, *seed, *bucket),
            PerturbedReport::Item(i) => {
                if (1..=d).contains(i) {
                    self.counts[i - 1] += 1;
                }
            }
        }
        self.reports += 1;
        Ok(())
    }

    fn add_hashed(&mut self, spec: &ProtocolSpec, seed: u64, bucket: u64) {
        let g = spec.olh_g().expect("OLH spec carries g");
        for (i, c) in self.counts.iter_mut().enumerate() {
            if olh_hash(seed, i + 1, g) == bucket {
                *c += 1;
            }
        }
    }

    /// Perturbs `item` with `rng` and counts the supports of the result.
    pub(super) fn absorb<R: Rng + ?Sized>(
        &mut self,
        spec: &ProtocolSpec,
        domain: &Domain,
        item: usize,
        rng: &mut R,
    ) {
        let d = self.counts.len();
        let len = domain.len();
        match spec.kind() {
            ProtocolKind::Oue | ProtocolKind::BasicRappor => {
                let c = &mut self.counts;
                unary_ones(spec, len, item, rng, |i| {
                    if i < d {
                        c[i] += 1;
                    }
                });
            }
            ProtocolKind::Olh => {
                let (seed, bucket) = olh_report(spec, item, rng);
                self.add_hashed(spec, seed, bucket);
            }
            ProtocolKind::Krr => {
                let out = krr_report(spec, len, item, rng);
                if out <= d {
                    self.counts[out - 1] += 1;
                }
            }
        }
        self.reports += 1;
    }

    pub fn merge(&mut self, other: &SupportCounts) -> Result<()> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::invalid(
                "cannot merge support counts over different domains",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.reports += other.reports;
        Ok(())
    }

    /// Unbiased frequency estimates from the counts.
    pub fn estimate(&self, spec: &ProtocolSpec) -> Result<FrequencyTable> {
        if self.reports == 0 {
            return Err(Error::invalid("cannot aggregate an empty set of reports"));
        }
        let n = self.reports as f64;
        let baseline = n * spec.q_star();
        let gap = spec.p_star() - spec.q_star();
        let values = self
            .counts
            .iter()
            .map(|&c| (c as f64 - baseline) / gap)
            .collect();
        FrequencyTable::new(values, self.reports, TableLabel::Estimated)
    }
}

/// Server-side aggregation of a batch of reports over real items `1..=d`.
/// Reports supporting dummy indices are ignored.
pub fn aggregate<'a>(
    spec: &ProtocolSpec,
    reports: impl IntoIterator<Item = &'a PerturbedReport>,
    d: usize,
) -> Result<FrequencyTable> {
    let mut counts = SupportCounts::new(d);
    for r in reports {
        counts.add(spec, r)?;
    }
    counts.estimate(spec)
}

/// Perturbs every user's item and counts supports without keeping the reports.
///
/// User `u` draws from `streams.stream(u)`, consuming exactly the randomness
/// that [`perturb`](super::perturb) would, so the counts equal those of
/// aggregating the materialised reports.
pub fn simulate_counts(
    spec: &ProtocolSpec,
    domain: &Domain,
    items: &[usize],
    streams: &StreamFactory,
) -> Result<SupportCounts> {
    if spec.kind() == ProtocolKind::Krr && spec.krr_domain() != Some(domain.len()) {
        return Err(Error::invalid("k-RR spec does not match the domain size"));
    }
    let mut counts = SupportCounts::new(domain.d());
    for (u, &item) in items.iter().enumerate() {
        check_item(domain, item)?;
        counts.absorb(spec, domain, item, &mut streams.stream(u as u64));
    }
    Ok(counts)
}

/// One full encode/perturb/aggregate run under `seed`.
pub fn simulate_estimates(
    spec: &ProtocolSpec,
    domain: &Domain,
    items: &[usize],
    seed: u64,
) -> Result<FrequencyTable> {
    simulate_counts(spec, domain, items, &StreamFactory::new(seed))?.estimate(spec)
}

/// Per-item mean of the estimates over `trials` independent runs on the
/// population described by `truth`. Trial `t` uses seed `derive_seed(seed, t)`.
pub fn unbiasedness_check(
    spec: &ProtocolSpec,
    truth: &FrequencyTable,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let items = materialize_users(truth)?;
    let domain = Domain::new(truth.d())?;
    let mut sums = vec![0.0; truth.d()];
    for t in 0..trials {
        let est = simulate_estimates(spec, &domain, &items, derive_seed(seed, t as u64))?;
        for (s, v) in sums.iter_mut().zip(est.values()) {
            *s += v;
        }
    }
    Ok(sums.into_iter().map(|s| s / trials as f64).collect())
}

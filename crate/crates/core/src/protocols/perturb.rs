use fixedbitset::FixedBitSet;
use rand::Rng;

use super::{Domain, ProtocolKind, ProtocolSpec};
use crate::error::{Error, Result};
use crate::rng::mix64;

/// One user's randomized output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PerturbedReport {
    /// Unary-encoding report (OUE, basic RAPPOR); bit `i` stands for item `i + 1`.
    Bits(FixedBitSet),
    /// Local-hashing report: the user's hash function and the perturbed bucket.
    Hashed { seed: u64, bucket: u64 },
    /// Randomized-response report.
    Item(usize),
}

impl PerturbedReport {
    pub fn kind_matches(&self, kind: ProtocolKind) -> bool {
        matches!(
            (self, kind),
            (
                PerturbedReport::Bits(_),
                ProtocolKind::Oue | ProtocolKind::BasicRappor
            ) | (PerturbedReport::Hashed { .. }, ProtocolKind::Olh)
                | (PerturbedReport::Item(_), ProtocolKind::Krr)
        )
    }
}

/// Hash of `item` under the function identified by `seed`, in `[0, g)`.
#[inline]
pub fn olh_hash(seed: u64, item: usize, g: u64) -> u64 {
    mix64(seed ^ mix64(item as u64)) % g
}

pub(super) fn check_item(domain: &Domain, item: usize) -> Result<()> {
    if item == 0 || item > domain.len() {
        return Err(Error::invalid(format!(
            "item {item} outside the domain 1..={}",
            domain.len()
        )));
    }
    Ok(())
}

fn check_krr_domain(spec: &ProtocolSpec, domain: &Domain) -> Result<()> {
    match spec.krr_domain() {
        Some(k) if k == domain.len() => Ok(()),
        Some(k) => Err(Error::invalid(format!(
            "k-RR spec built for {k} outputs used on a domain of {}",
            domain.len()
        ))),
        None => Ok(()),
    }
}

/// Emits the zero-based positions of the raised bits of a unary-encoding
/// report for `item`, without materialising the vector.
///
/// The held bit is drawn first; the remaining bits are Bernoulli(q) each and
/// are visited by geometric skipping, which costs one draw per raised bit.
pub(super) fn unary_ones<R: Rng + ?Sized>(
    spec: &ProtocolSpec,
    len: usize,
    item: usize,
    rng: &mut R,
    mut emit: impl FnMut(usize),
) {
    let held = item - 1;
    if rng.gen::<f64>() < spec.keep_prob() {
        emit(held);
    }
    let log_miss = (-spec.other_prob()).ln_1p();
    if log_miss == 0.0 {
        return;
    }
    let mut pos = 0usize;
    while pos < len {
        let u = 1.0 - rng.gen::<f64>();
        let skip = (u.ln() / log_miss).floor();
        if skip.is_nan() || skip >= (len - pos) as f64 {
            break;
        }
        pos += skip as usize;
        if pos != held {
            emit(pos);
        }
        pos += 1;
    }
}

/// Hashes `item` with a fresh per-user function and randomizes the bucket.
pub(super) fn olh_report<R: Rng + ?Sized>(
    spec: &ProtocolSpec,
    item: usize,
    rng: &mut R,
) -> (u64, u64) {
    let g = spec.olh_g().expect("OLH spec carries g");
    let seed: u64 = rng.gen();
    let true_bucket = olh_hash(seed, item, g);
    let bucket = if rng.gen::<f64>() < spec.keep_prob() {
        true_bucket
    } else {
        let other = rng.gen_range(0..g - 1);
        if other >= true_bucket {
            other + 1
        } else {
            other
        }
    };
    (seed, bucket)
}

pub(super) fn krr_report<R: Rng + ?Sized>(
    spec: &ProtocolSpec,
    len: usize,
    item: usize,
    rng: &mut R,
) -> usize {
    if rng.gen::<f64>() < spec.keep_prob() {
        item
    } else {
        let other = rng.gen_range(1..len);
        if other >= item {
            other + 1
        } else {
            other
        }
    }
}

/// Client-side encode and perturb of a single item (1-based, real or dummy).
pub fn perturb<R: Rng + ?Sized>(
    spec: &ProtocolSpec,
    domain: &Domain,
    item: usize,
    rng: &mut R,
) -> Result<PerturbedReport> {
    check_item(domain, item)?;
    Ok(match spec.kind() {
        ProtocolKind::Oue | ProtocolKind::BasicRappor => {
            let mut bits = FixedBitSet::with_capacity(domain.len());
            unary_ones(spec, domain.len(), item, rng, |i| bits.insert(i));
            PerturbedReport::Bits(bits)
        }
        ProtocolKind::Olh => {
            let (seed, bucket) = olh_report(spec, item, rng);
            PerturbedReport::Hashed { seed, bucket }
        }
        ProtocolKind::Krr => {
            check_krr_domain(spec, domain)?;
            PerturbedReport::Item(krr_report(spec, domain.len(), item, rng))
        }
    })
}

/// Whether `report` votes for `item` during aggregation.
pub fn supports(spec: &ProtocolSpec, report: &PerturbedReport, item: usize) -> bool {
    match report {
        PerturbedReport::Bits(bits) => item >= 1 && bits.contains(item - 1),
        PerturbedReport::Hashed { seed, bucket } => match spec.olh_g() {
            Some(g) => olh_hash(*seed, item, g) == *bucket,
            None => false,
        },
        PerturbedReport::Item(i) => *i == item,
    }
}

/// Exact probability that `perturb(item)` outputs `report`.
///
/// For OLH the per-user hash seed is uniform and identical for every input,
/// so the returned value is the probability of the bucket given the seed.
pub fn report_probability(
    spec: &ProtocolSpec,
    domain: &Domain,
    item: usize,
    report: &PerturbedReport,
) -> Result<f64> {
    check_item(domain, item)?;
    if !report.kind_matches(spec.kind()) {
        return Err(Error::invalid("report variant does not match the protocol"));
    }
    Ok(match report {
        PerturbedReport::Bits(bits) => {
            if bits.len() != domain.len() {
                return Err(Error::invalid("report length does not match the domain"));
            }
            (0..domain.len())
                .map(|i| {
                    let p = if i == item - 1 {
                        spec.keep_prob()
                    } else {
                        spec.other_prob()
                    };
                    if bits.contains(i) {
                        p
                    } else {
                        1.0 - p
                    }
                })
                .product()
        }
        PerturbedReport::Hashed { seed, bucket } => {
            let g = spec.olh_g().expect("OLH spec carries g");
            if *bucket >= g {
                0.0
            } else if olh_hash(*seed, item, g) == *bucket {
                spec.keep_prob()
            } else {
                spec.other_prob()
            }
        }
        PerturbedReport::Item(out) => {
            if *out == 0 || *out > domain.len() {
                0.0
            } else if *out == item {
                spec.keep_prob()
            } else {
                spec.other_prob()
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{krr_spec, oue_spec};
    use crate::rng::stream;

    #[test]
    fn out_of_range_items_rejected() {
        let spec = oue_spec(1.0).unwrap();
        let dom = Domain::new(3).unwrap();
        let mut rng = stream(1);
        assert!(perturb(&spec, &dom, 0, &mut rng).is_err());
        assert!(perturb(&spec, &dom, 4, &mut rng).is_err());
        assert!(perturb(&spec, &dom, 3, &mut rng).is_ok());
    }

    #[test]
    fn oue_large_epsilon_zero_bits_are_exact() {
        let spec = oue_spec(700.0).unwrap();
        let dom = Domain::new(50).unwrap();
        let mut rng = stream(2);
        let mut held = 0;
        for _ in 0..2000 {
            let PerturbedReport::Bits(bits) = perturb(&spec, &dom, 7, &mut rng).unwrap() else {
                panic!("expected bits")
            };
            assert!(bits.ones().all(|i| i == 6));
            held += bits.contains(6) as usize;
        }
        // the held bit is Bernoulli(1/2)
        assert!((900..1100).contains(&held), "held bit set {held} times");
    }

    #[test]
    fn support_lookup() {
        let spec = oue_spec(1.0).unwrap();
        let mut bits = FixedBitSet::with_capacity(3);
        bits.insert(0);
        bits.insert(2);
        let r = PerturbedReport::Bits(bits);
        assert!(supports(&spec, &r, 1));
        assert!(!supports(&spec, &r, 2));
        assert!(supports(&spec, &r, 3));
        let krr = krr_spec(1.0, 10).unwrap();
        assert!(supports(&krr, &PerturbedReport::Item(7), 7));
        assert!(!supports(&krr, &PerturbedReport::Item(7), 6));
    }

    #[test]
    fn krr_spec_must_match_domain() {
        let spec = krr_spec(1.0, 5).unwrap();
        let mut rng = stream(3);
        assert!(perturb(&spec, &Domain::new(6).unwrap(), 1, &mut rng).is_err());
        assert!(perturb(&spec, &Domain::new(5).unwrap(), 1, &mut rng).is_ok());
    }

    #[test]
    fn report_probabilities_sum_to_one_over_unary_outputs() {
        let spec = oue_spec(0.9).unwrap();
        let dom = Domain::new(4).unwrap();
        let mut total = 0.0;
        for mask in 0u32..16 {
            let mut bits = FixedBitSet::with_capacity(4);
            for i in 0..4 {
                if mask & (1 << i) != 0 {
                    bits.insert(i);
                }
            }
            total += report_probability(&spec, &dom, 2, &PerturbedReport::Bits(bits)).unwrap();
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
}

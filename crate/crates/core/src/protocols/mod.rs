//! Pure-LDP frequency oracles: client-side perturbation, server-side
//! aggregation, and the padding-and-sampling wrapper for set-valued users.
//!
//! A pure-LDP protocol is summarised by two probabilities: `p_star`, the
//! chance that a user's report supports the item they hold, and `q_star`,
//! the chance that it supports any given other item. Aggregation inverts
//! that relation:
//!
//! ```text
//! f̂_i = (#reports supporting i − n·q*) / (p* − q*)
//! ```

mod aggregate;
mod itemset;
mod perturb;
pub mod report_io;

use std::fmt;
use std::str::FromStr;

pub use aggregate::{
    aggregate, simulate_counts, simulate_estimates, unbiasedness_check, SupportCounts,
};
pub use itemset::{
    itemset_aggregate, pad_and_sample, percentile_l, simulate_itemset_counts,
    simulate_itemset_estimates, ItemSetUser,
};
pub use perturb::{olh_hash, perturb, report_probability, supports, PerturbedReport};

use crate::error::{Error, Result};

/// Item domain: real items `1..=d`, then `dummy_count` padding slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Domain {
    d: usize,
    dummy_count: usize,
}

impl Domain {
    /// Single-item domain with no dummy slots.
    pub fn new(d: usize) -> Result<Self> {
        Self::with_dummies(d, 0)
    }

    /// Item-set domain with `l` dummy slots.
    pub fn with_dummies(d: usize, dummy_count: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("domain size d must be at least 1"));
        }
        Ok(Domain { d, dummy_count })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dummy_count(&self) -> usize {
        self.dummy_count
    }

    /// Total number of encodable indices, real and dummy.
    pub fn len(&self) -> usize {
        self.d + self.dummy_count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_dummy(&self, item: usize) -> bool {
        item > self.d && item <= self.len()
    }
}

/// The supported mechanisms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    /// Optimized unary encoding.
    Oue,
    /// Symmetric unary encoding (RAPPOR without Bloom filters).
    BasicRappor,
    /// Optimized local hashing.
    Olh,
    /// k-ary randomized response.
    Krr,
}

impl ProtocolKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolKind::Oue => "oue",
            ProtocolKind::BasicRappor => "rappor",
            ProtocolKind::Olh => "olh",
            ProtocolKind::Krr => "krr",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oue" => Ok(ProtocolKind::Oue),
            "rappor" | "basic-rappor" | "basic_rappor" => Ok(ProtocolKind::BasicRappor),
            "olh" => Ok(ProtocolKind::Olh),
            "krr" | "k-rr" => Ok(ProtocolKind::Krr),
            other => Err(Error::invalid(format!(
                "unknown protocol `{other}` (expected oue, rappor, olh or krr)"
            ))),
        }
    }
}

/// A configured pure-LDP mechanism.
///
/// Besides the support probabilities `p_star`/`q_star` used by aggregation,
/// a `ProtocolSpec` carries the perturbation probabilities: `keep_prob` for
/// reporting the true bit/bucket/item and `other_prob` for each alternative.
/// They coincide with `(p_star, q_star)` except for OLH, where `q_star = 1/g`
/// is the hash-collision rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSpec {
    kind: ProtocolKind,
    epsilon: f64,
    p_star: f64,
    q_star: f64,
    keep_prob: f64,
    other_prob: f64,
    olh_g: Option<u64>,
    krr_domain: Option<usize>,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    Ok(())
}

impl ProtocolSpec {
    /// Builds the mechanism for `kind`; `domain_len` is only consulted by k-RR,
    /// whose output space is the full (real + dummy) domain.
    pub fn new(kind: ProtocolKind, epsilon: f64, domain_len: usize) -> Result<Self> {
        match kind {
            ProtocolKind::Oue => oue_spec(epsilon),
            ProtocolKind::BasicRappor => basic_rappor_spec(epsilon),
            ProtocolKind::Olh => olh_spec(epsilon),
            ProtocolKind::Krr => krr_spec(epsilon, domain_len),
        }
    }

    fn validated(self) -> Result<Self> {
        if !(self.q_star > 0.0 && self.q_star < self.p_star && self.p_star <= 1.0) {
            return Err(Error::invalid(format!(
                "{} at epsilon {} gives degenerate support probabilities p*={}, q*={}",
                self.kind, self.epsilon, self.p_star, self.q_star
            )));
        }
        Ok(self)
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    pub fn other_prob(&self) -> f64 {
        self.other_prob
    }

    /// Number of hash buckets (OLH only).
    pub fn olh_g(&self) -> Option<u64> {
        self.olh_g
    }

    /// Output domain size (k-RR only).
    pub fn krr_domain(&self) -> Option<usize> {
        self.krr_domain
    }

    /// Per-item estimator variance `n q*(1-q*)/(p*-q*)^2`.
    pub fn estimator_variance(&self, n: u64) -> f64 {
        let gap = self.p_star - self.q_star;
        n as f64 * self.q_star * (1.0 - self.q_star) / (gap * gap)
    }
}

/// OUE: keep the held bit with probability 1/2, raise every other bit with
/// probability `1/(1+e^ε)`.
pub fn oue_spec(epsilon: f64) -> Result<ProtocolSpec> {
    check_epsilon(epsilon)?;
    let q = 1.0 / (1.0 + epsilon.exp());
    ProtocolSpec {
        kind: ProtocolKind::Oue,
        epsilon,
        p_star: 0.5,
        q_star: q,
        keep_prob: 0.5,
        other_prob: q,
        olh_g: None,
        krr_domain: None,
    }
    .validated()
}

/// Basic RAPPOR: symmetric bit flipping with `ε/2` spent per bit.
pub fn basic_rappor_spec(epsilon: f64) -> Result<ProtocolSpec> {
    check_epsilon(epsilon)?;
    let h = (epsilon / 2.0).exp();
    let p = h / (1.0 + h);
    let q = 1.0 / (1.0 + h);
    ProtocolSpec {
        kind: ProtocolKind::BasicRappor,
        epsilon,
        p_star: p,
        q_star: q,
        keep_prob: p,
        other_prob: q,
        olh_g: None,
        krr_domain: None,
    }
    .validated()
}

/// Largest bucket count OLH will accept; beyond this `e^ε` is so large that
/// local hashing offers nothing over direct encoding.
const MAX_OLH_BUCKETS: f64 = 4_294_967_296.0;

/// OLH with `g = round(e^ε + 1)` buckets (at least 2).
pub fn olh_spec(epsilon: f64) -> Result<ProtocolSpec> {
    check_epsilon(epsilon)?;
    let e = epsilon.exp();
    let g_real = (e + 1.0).round();
    if g_real > MAX_OLH_BUCKETS {
        return Err(Error::invalid(format!(
            "epsilon {epsilon} needs too many OLH buckets"
        )));
    }
    let g = (g_real as u64).max(2);
    let gf = g as f64;
    let keep = e / (gf - 1.0 + e);
    let other = 1.0 / (gf - 1.0 + e);
    ProtocolSpec {
        kind: ProtocolKind::Olh,
        epsilon,
        p_star: keep,
        q_star: 1.0 / gf,
        keep_prob: keep,
        other_prob: other,
        olh_g: Some(g),
        krr_domain: None,
    }
    .validated()
}

/// k-ary randomized response over a domain of `d` outputs.
pub fn krr_spec(epsilon: f64, d: usize) -> Result<ProtocolSpec> {
    check_epsilon(epsilon)?;
    if d < 2 {
        return Err(Error::invalid(format!(
            "k-RR needs a domain of at least 2 items, got {d}"
        )));
    }
    let e = epsilon.exp();
    let denom = e + d as f64 - 1.0;
    ProtocolSpec {
        kind: ProtocolKind::Krr,
        epsilon,
        p_star: e / denom,
        q_star: 1.0 / denom,
        keep_prob: e / denom,
        other_prob: 1.0 / denom,
        olh_g: None,
        krr_domain: Some(d),
    }
    .validated()
}

//! Local-differential-privacy frequency estimation with posterior-mean
//! calibration.
//!
//! The crate covers the whole collection pipeline:
//!
//! * [`protocols`]: pure-LDP frequency oracles (OUE, basic RAPPOR, OLH,
//!   k-RR), their unbiased aggregator, and padding-and-sampling for users
//!   holding item sets.
//! * [`calibrate`]: the Gaussian noise model of the aggregator, prior
//!   fitting (mean–variance and maximum likelihood), the Bayes posterior over
//!   the true frequency and its mean, plus the significance-threshold
//!   baseline.
//! * [`eval`]: error and heavy-hitter metrics and a seeded multi-trial
//!   experiment runner.
//! * [`data`]: transaction-file ingestion and synthetic populations.
//!
//! ```
//! use ldp_calibrate::calibrate::{self, FamilyTag};
//! use ldp_calibrate::data::{synthesize, SyntheticSpec};
//! use ldp_calibrate::protocols::{oue_spec, simulate_estimates, Domain};
//!
//! # fn main() -> ldp_calibrate::Result<()> {
//! let population = synthesize(&SyntheticSpec::power_law(200, Some(20_000), 2.0, 7)?)?;
//! let spec = oue_spec(3.0)?;
//! let estimates = simulate_estimates(&spec, &Domain::new(200)?, &population.users, 11)?;
//!
//! let noise = calibrate::noise_model_for(&spec, estimates.n(), 1)?;
//! let fit = calibrate::fit_mean_variance(&estimates, &noise, FamilyTag::PowerLaw, &Default::default())?;
//! let calibrated = calibrate::calibrate_all(&estimates, &fit.prior, &noise)?;
//! assert_eq!(calibrated.d(), 200);
//! # Ok(())
//! # }
//! ```

pub mod calibrate;
pub mod data;
mod error;
pub mod eval;
pub mod protocols;
pub mod rng;
mod table;

pub use error::{Error, Result};
pub use table::{FrequencyTable, TableLabel};

/// The guide's chapters, compiled as doctests so their snippets stay in
/// sync with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/protocols.md")]
    mod protocols {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/priors.md")]
    mod priors {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/heavy-hitters.md")]
    mod heavy_hitters {}
    #[doc = include_str!("../../../book/src/item-sets.md")]
    mod item_sets {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}

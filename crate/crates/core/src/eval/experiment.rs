use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use super::{heavy_hitter_report, squared_error};
use crate::calibrate::{
    fit, noise_model_for, significance_threshold, CalibrationConfig, Calibrator, FamilyTag,
    FitMethod,
};
use crate::error::{Error, Result};
use crate::protocols::{
    simulate_estimates, simulate_itemset_estimates, Domain, ItemSetUser, ProtocolKind, ProtocolSpec,
};
use crate::rng::derive_seed;
use crate::table::{FrequencyTable, TableLabel};

/// Post-processing applied to the raw estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Unbiased estimates as aggregated.
    Raw,
    /// Estimates below the significance threshold set to zero.
    Zero,
    /// Posterior means under the fitted prior.
    Calibrate,
    /// Posterior means, then zeroed below the significance threshold.
    CalibrateZero,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Raw,
        Variant::Zero,
        Variant::Calibrate,
        Variant::CalibrateZero,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Zero => "zero",
            Variant::Calibrate => "calibrate",
            Variant::CalibrateZero => "calibrate-zero",
        }
    }

    fn calibrates(&self) -> bool {
        matches!(self, Variant::Calibrate | Variant::CalibrateZero)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown variant '{s}' (expected raw, zero, calibrate or calibrate-zero)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    EstimationError,
    Precision,
    Recall,
    FScore,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::EstimationError => "estimation_error",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::FScore => "f_score",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Heavy-hitter thresholds evaluated at each epsilon. The significance
/// threshold of that epsilon is always added.
#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdGrid {
    /// `count` log-spaced values from `lo·T` to `hi·T`, `T` the
    /// significance threshold.
    Relative {
        count: usize,
        lo: f64,
        hi: f64,
    },
    Fixed(Vec<f64>),
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid::Relative {
            count: 20,
            lo: 0.05,
            hi: 2.0,
        }
    }
}

impl ThresholdGrid {
    fn validate(&self) -> Result<()> {
        match self {
            ThresholdGrid::Relative { count, lo, hi } => {
                if *count == 0 || !(*lo > 0.0 && lo < hi && hi.is_finite()) {
                    return Err(Error::invalid(format!(
                        "bad relative threshold grid: {count} values in [{lo}, {hi}]"
                    )));
                }
            }
            ThresholdGrid::Fixed(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("thresholds must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated thresholds for significance threshold `t`.
    pub fn resolve(&self, t: f64) -> Vec<f64> {
        let mut out = match self {
            ThresholdGrid::Relative { count, lo, hi } => {
                if *count == 1 {
                    vec![lo * t]
                } else {
                    let step = (hi / lo).ln() / (*count as f64 - 1.0);
                    (0..*count)
                        .map(|j| lo * t * (step * j as f64).exp())
                        .collect()
                }
            }
            ThresholdGrid::Fixed(values) => values.clone(),
        };
        out.push(t);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Where each simulated user's input comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum UserSource {
    /// One item per user.
    Single(Vec<usize>),
    /// Item sets, reported through padding-and-sampling with length `l`.
    ItemSets { users: Vec<ItemSetUser>, l: usize },
}

impl UserSource {
    fn len(&self) -> usize {
        match self {
            UserSource::Single(u) => u.len(),
            UserSource::ItemSets { users, .. } => users.len(),
        }
    }

    fn l(&self) -> usize {
        match self {
            UserSource::Single(_) => 1,
            UserSource::ItemSets { l, .. } => *l,
        }
    }
}

/// Everything [`run_experiment`] needs besides trial count and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// True per-item counts (occurrence counts in item-set mode).
    pub truth: FrequencyTable,
    pub users: UserSource,
    pub protocol: ProtocolKind,
    pub epsilons: Vec<f64>,
    pub variants: Vec<Variant>,
    pub family: FamilyTag,
    pub method: FitMethod,
    pub beta: f64,
    pub thresholds: ThresholdGrid,
    pub calibration: CalibrationConfig,
}

impl Scenario {
    /// Raw, zero and calibrate variants, power-law prior by moment
    /// matching, `beta = 0.05`, default threshold grid.
    pub fn new(
        truth: FrequencyTable,
        users: UserSource,
        protocol: ProtocolKind,
        epsilons: Vec<f64>,
    ) -> Self {
        Scenario {
            truth,
            users,
            protocol,
            epsilons,
            variants: vec![Variant::Raw, Variant::Zero, Variant::Calibrate],
            family: FamilyTag::PowerLaw,
            method: FitMethod::MeanVariance,
            beta: 0.05,
            thresholds: ThresholdGrid::default(),
            calibration: CalibrationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.truth.label() != TableLabel::True {
            return Err(Error::invalid("scenario truth must be a true table"));
        }
        if self.epsilons.is_empty() {
            return Err(Error::invalid("epsilons: at least one value required"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::invalid(format!(
                "epsilons: {e} is not a positive finite number"
            )));
        }
        if self.variants.is_empty() {
            return Err(Error::invalid("variants: at least one required"));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                return Err(Error::invalid(format!("variants: '{v}' listed twice")));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!(
                "beta: must lie in (0, 1), got {}",
                self.beta
            )));
        }
        self.thresholds.validate()?;
        self.calibration.validate()?;
        if self.users.len() == 0 {
            return Err(Error::invalid("users: population is empty"));
        }
        if self.users.l() == 0 {
            return Err(Error::invalid("l: must be at least 1"));
        }
        Ok(())
    }
}

/// One measured value. `None` value marks an undefined ratio.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub epsilon: f64,
    pub variant: Variant,
    pub trial: usize,
    pub metric: Metric,
    pub threshold: Option<f64>,
    pub value: Option<f64>,
}

/// Mean and standard deviation of a metric over trials; undefined values
/// are skipped and counted.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub epsilon: f64,
    pub variant: Variant,
    pub metric: Metric,
    pub threshold: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignificanceRow {
    pub epsilon: f64,
    pub noise_variance: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub trials: usize,
    pub seed: u64,
    pub significance: Vec<SignificanceRow>,
    pub summary: Vec<SummaryRow>,
    #[serde(skip)]
    pub records: Vec<Record>,
}

impl ExperimentResult {
    pub fn summary_row(
        &self,
        epsilon: f64,
        variant: Variant,
        metric: Metric,
        threshold: Option<f64>,
    ) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| {
            r.epsilon == epsilon
                && r.variant == variant
                && r.metric == metric
                && r.threshold == threshold
        })
    }
}

/// Runs every (trial, epsilon) pipeline. Within a pair all variants share
/// one set of reports, seeded from `(seed, trial, epsilon)` only.
pub fn run_experiment(scenario: &Scenario, trials: usize, seed: u64) -> Result<ExperimentResult> {
    scenario.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials: must be at least 1"));
    }
    let truth = &scenario.truth;
    let d = truth.d();
    let l = scenario.users.l();
    let domain = match &scenario.users {
        UserSource::Single(_) => Domain::new(d)?,
        UserSource::ItemSets { .. } => Domain::with_dummies(d, l)?,
    };
    let n = scenario.users.len() as u64;
    let wants_fit = scenario.variants.iter().any(Variant::calibrates);

    let mut significance = Vec::with_capacity(scenario.epsilons.len());
    for &eps in &scenario.epsilons {
        let spec = ProtocolSpec::new(scenario.protocol, eps, domain.len())?;
        let noise = noise_model_for(&spec, n, l)?;
        significance.push(SignificanceRow {
            epsilon: eps,
            noise_variance: noise.variance(),
            threshold: significance_threshold(d, scenario.beta, noise.variance())?,
        });
    }

    let mut records = Vec::new();
    for trial in 0..trials {
        let trial_seed = derive_seed(seed, trial as u64);
        for (&eps, sig) in scenario.epsilons.iter().zip(&significance) {
            let run_seed = derive_seed(trial_seed, eps.to_bits());
            let spec = ProtocolSpec::new(scenario.protocol, eps, domain.len())?;
            let estimates = match &scenario.users {
                UserSource::Single(users) => simulate_estimates(&spec, &domain, users, run_seed)?,
                UserSource::ItemSets { users, .. } => {
                    simulate_itemset_estimates(&spec, &domain, users, run_seed)?
                }
            };
            let noise = noise_model_for(&spec, n, l)?;
            let calibrated = if wants_fit {
                let fitted = fit(
                    &estimates,
                    &noise,
                    scenario.family,
                    scenario.method,
                    &scenario.calibration,
                )?;
                let calibrator = Calibrator::new(&fitted.prior, noise)
                    .with_truncation(scenario.calibration.truncation_sigmas)?;
                Some(calibrator.calibrate_table(&estimates)?)
            } else {
                None
            };
            let thresholds = scenario.thresholds.resolve(sig.threshold);
            for &variant in &scenario.variants {
                let table = match variant {
                    Variant::Raw => estimates.clone(),
                    Variant::Zero => zeroed(&estimates, sig.threshold)?,
                    Variant::Calibrate => calibrated.clone().expect("fit ran"),
                    Variant::CalibrateZero => {
                        zeroed(calibrated.as_ref().expect("fit ran"), sig.threshold)?
                    }
                };
                let record = |metric, threshold, value| Record {
                    epsilon: eps,
                    variant,
                    trial,
                    metric,
                    threshold,
                    value,
                };
                records.push(record(
                    Metric::EstimationError,
                    None,
                    Some(squared_error(truth, &table)?),
                ));
                for &t in &thresholds {
                    let hh = heavy_hitter_report(truth, &table, t);
                    records.push(record(Metric::Precision, Some(t), hh.precision));
                    records.push(record(Metric::Recall, Some(t), hh.recall));
                    records.push(record(Metric::FScore, Some(t), hh.f_score));
                }
            }
        }
    }
    let summary = summarize(&records);
    Ok(ExperimentResult {
        trials,
        seed,
        significance,
        summary,
        records,
    })
}

fn zeroed(table: &FrequencyTable, threshold: f64) -> Result<FrequencyTable> {
    let values = table
        .values()
        .iter()
        .map(|&v| if v < threshold { 0.0 } else { v })
        .collect();
    table.with_values(values, table.label())
}

type Key = (u64, Variant, Metric, Option<u64>);

fn summarize(records: &[Record]) -> Vec<SummaryRow> {
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, (Vec<f64>, usize)> = HashMap::new();
    for r in records {
        let key = (
            r.epsilon.to_bits(),
            r.variant,
            r.metric,
            r.threshold.map(f64::to_bits),
        );
        let entry = groups.entry(key).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match r.value {
            Some(v) => entry.0.push(v),
            None => entry.1 += 1,
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (values, skipped) = &groups[&key];
            let count = values.len();
            let mean = (count > 0).then(|| values.iter().sum::<f64>() / count as f64);
            let std = mean.map(|m| {
                if count < 2 {
                    0.0
                } else {
                    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (count as f64 - 1.0))
                        .sqrt()
                }
            });
            SummaryRow {
                epsilon: f64::from_bits(key.0),
                variant: key.1,
                metric: key.2,
                threshold: key.3.map(f64::from_bits),
                mean,
                std,
                count,
                skipped: *skipped,
            }
        })
        .collect()
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Long-form CSV: `epsilon,variant,trial,metric,threshold,value`, with
/// `NA` for missing thresholds and undefined values.
pub fn write_records_csv<W: Write>(mut out: W, records: &[Record]) -> Result<()> {
    writeln!(out, "epsilon,variant,trial,metric,threshold,value")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epsilon,
            r.variant,
            r.trial,
            r.metric,
            na(r.threshold),
            na(r.value)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SyntheticSpec};

    fn scenario() -> Scenario {
        let pop = synthesize(&SyntheticSpec::power_law(60, Some(3000), 2.0, 5).unwrap()).unwrap();
        let mut s = Scenario::new(
            pop.truth,
            UserSource::Single(pop.users),
            ProtocolKind::Oue,
            vec![2.0, 4.0],
        );
        s.variants = Variant::ALL.to_vec();
        s.thresholds = ThresholdGrid::Relative {
            count: 4,
            lo: 0.1,
            hi: 1.5,
        };
        s
    }

    #[test]
    fn threshold_grid_includes_significance() {
        let grid = ThresholdGrid::Relative {
            count: 3,
            lo: 0.25,
            hi: 4.0,
        }
        .resolve(10.0);
        assert_eq!(grid.len(), 3);
        assert!(
            (grid[0] - 2.5).abs() < 1e-12
                && (grid[1] - 10.0).abs() < 1e-12
                && (grid[2] - 40.0).abs() < 1e-9
        );
        assert_eq!(
            ThresholdGrid::Fixed(vec![5.0, 1.0]).resolve(3.0),
            vec![1.0, 3.0, 5.0]
        );
    }

    #[test]
    fn reproducible_and_order_free() {
        let s = scenario();
        let a = run_experiment(&s, 2, 99).unwrap();
        assert_eq!(a, run_experiment(&s, 2, 99).unwrap());
        let mut swapped = s.clone();
        swapped.variants.reverse();
        let b = run_experiment(&swapped, 2, 99).unwrap();
        for v in Variant::ALL {
            let pick = |r: &ExperimentResult| {
                r.records
                    .iter()
                    .filter(|x| x.variant == v)
                    .cloned()
                    .collect::<Vec<_>>()
            };
            assert_eq!(pick(&a), pick(&b));
        }
    }

    #[test]
    fn single_trial_matches_hand_pipeline() {
        let s = scenario();
        let result = run_experiment(&s, 1, 42).unwrap();
        let eps: f64 = 4.0;
        let seed = derive_seed(derive_seed(42, 0), eps.to_bits());
        let spec = crate::protocols::oue_spec(eps).unwrap();
        let UserSource::Single(users) = &s.users else {
            unreachable!()
        };
        let est = simulate_estimates(&spec, &Domain::new(60).unwrap(), users, seed).unwrap();
        let raw = result
            .summary_row(eps, Variant::Raw, Metric::EstimationError, None)
            .unwrap();
        assert_eq!(raw.mean, Some(squared_error(&s.truth, &est).unwrap()));
        let noise = noise_model_for(&spec, 3000, 1).unwrap();
        let fitted = crate::calibrate::fit_mean_variance(
            &est,
            &noise,
            FamilyTag::PowerLaw,
            &Default::default(),
        )
        .unwrap();
        let cal = crate::calibrate::calibrate_all(&est, &fitted.prior, &noise).unwrap();
        let row = result
            .summary_row(eps, Variant::Calibrate, Metric::EstimationError, None)
            .unwrap();
        assert_eq!(row.mean, Some(squared_error(&s.truth, &cal).unwrap()));
    }

    #[test]
    fn undefined_values_are_skipped() {
        let records = vec![
            Record {
                epsilon: 1.0,
                variant: Variant::Raw,
                trial: 0,
                metric: Metric::Precision,
                threshold: Some(3.0),
                value: None,
            },
            Record {
                epsilon: 1.0,
                variant: Variant::Raw,
                trial: 1,
                metric: Metric::Precision,
                threshold: Some(3.0),
                value: Some(0.5),
            },
        ];
        let rows = summarize(&records);
        assert_eq!(rows.len(), 1);
        assert_eq!(
            (rows[0].mean, rows[0].count, rows[0].skipped),
            (Some(0.5), 1, 1)
        );
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("1,raw,0,precision,3,NA"));
    }

    #[test]
    fn rejects_bad_configuration() {
        let mut s = scenario();
        s.epsilons = vec![0.0];
        assert!(run_experiment(&s, 1, 1)
            .unwrap_err()
            .to_string()
            .contains("epsilons"));
        let mut s = scenario();
        s.variants = vec![Variant::Raw, Variant::Raw];
        assert!(run_experiment(&s, 1, 1).is_err());
        assert!(run_experiment(&scenario(), 0, 1).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
    }
}

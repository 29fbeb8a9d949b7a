//! Accuracy metrics and the repeated-trial experiment runner.

mod experiment;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use experiment::{
    run_experiment, write_records_csv, ExperimentResult, Metric, Record, Scenario, SummaryRow,
    ThresholdGrid, UserSource, Variant,
};

use crate::error::{Error, Result};
use crate::table::{FrequencyTable, TableLabel};

/// Repeated estimates of one true table.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSet {
    truth: FrequencyTable,
    trials: Vec<FrequencyTable>,
}

impl TrialSet {
    pub fn new(truth: FrequencyTable, trials: Vec<FrequencyTable>) -> Result<Self> {
        if truth.label() != TableLabel::True {
            return Err(Error::invalid("trial set truth must be a true table"));
        }
        if trials.is_empty() {
            return Err(Error::invalid("trial set needs at least one trial"));
        }
        for (t, table) in trials.iter().enumerate() {
            if table.d() != truth.d() {
                return Err(Error::invalid(format!(
                    "trial {t} has {} items, truth has {}",
                    table.d(),
                    truth.d()
                )));
            }
            if table.label() != trials[0].label() {
                return Err(Error::invalid(format!(
                    "trial {t} is labelled {}, trial 0 {}",
                    table.label(),
                    trials[0].label()
                )));
            }
        }
        Ok(TrialSet { truth, trials })
    }

    pub fn truth(&self) -> &FrequencyTable {
        &self.truth
    }

    pub fn trials(&self) -> &[FrequencyTable] {
        &self.trials
    }
}

/// Per-item mean squared error across trials.
pub fn mse_per_item(trials: &TrialSet) -> Vec<f64> {
    let truth = trials.truth.values();
    let mut acc = vec![0.0; truth.len()];
    for table in &trials.trials {
        for ((a, v), f) in acc.iter_mut().zip(table.values()).zip(truth) {
            *a += (v - f) * (v - f);
        }
    }
    let m = trials.trials.len() as f64;
    acc.into_iter().map(|a| a / m).collect()
}

/// Average of [`mse_per_item`] over items.
pub fn estimation_error(trials: &TrialSet) -> f64 {
    let mse = mse_per_item(trials);
    mse.iter().sum::<f64>() / mse.len() as f64
}

/// Squared error of one table against the truth, averaged over items.
pub fn squared_error(truth: &FrequencyTable, table: &FrequencyTable) -> Result<f64> {
    if truth.d() != table.d() {
        return Err(Error::invalid(format!(
            "table has {} items, truth has {}",
            table.d(),
            truth.d()
        )));
    }
    let total: f64 = truth
        .values()
        .iter()
        .zip(table.values())
        .map(|(f, v)| (v - f) * (v - f))
        .sum();
    Ok(total / truth.d() as f64)
}

/// Items (1-based) whose value is strictly above `threshold`.
pub fn heavy_hitters(table: &FrequencyTable, threshold: f64) -> BTreeSet<usize> {
    table
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Precision, recall and F-score of a predicted heavy-hitter set. Ratios
/// with a zero denominator are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyHitterReport {
    pub threshold: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn prf(truth: &BTreeSet<usize>, predicted: &BTreeSet<usize>) -> HeavyHitterReport {
    let tp = truth.intersection(predicted).count();
    let fp = predicted.len() - tp;
    let fn_ = truth.len() - tp;
    HeavyHitterReport {
        threshold: None,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        // equals 2PR/(P+R) whenever that is defined
        f_score: ratio(2 * tp, 2 * tp + fp + fn_),
    }
}

/// [`prf`] of the items above `threshold` in `table` against those above it
/// in `truth`.
pub fn heavy_hitter_report(
    truth: &FrequencyTable,
    table: &FrequencyTable,
    threshold: f64,
) -> HeavyHitterReport {
    let mut report = prf(
        &heavy_hitters(truth, threshold),
        &heavy_hitters(table, threshold),
    );
    report.threshold = Some(threshold);
    report
}

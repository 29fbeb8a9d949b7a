//! Per-item frequency tables.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// What a [`FrequencyTable`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TableLabel {
    True,
    Estimated,
    Calibrated,
}

impl fmt::Display for TableLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableLabel::True => "true",
            TableLabel::Estimated => "estimated",
            TableLabel::Calibrated => "calibrated",
        })
    }
}

impl FromStr for TableLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(TableLabel::True),
            "estimated" => Ok(TableLabel::Estimated),
            "calibrated" => Ok(TableLabel::Calibrated),
            other => Err(Error::Format(format!("unknown table label `{other}`"))),
        }
    }
}

/// Real-valued frequencies (in user counts) for items `1..=d`.
///
/// `values()[i]` is the frequency of item `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyTable {
    values: Vec<f64>,
    n: u64,
    label: TableLabel,
}

impl FrequencyTable {
    pub fn new(values: Vec<f64>, n: u64, label: TableLabel) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("frequency table needs at least one item"));
        }
        if n == 0 {
            return Err(Error::invalid("population size n must be positive"));
        }
        if label == TableLabel::True
            && values
                .iter()
                .any(|v| *v < 0.0 || v.fract() != 0.0 || !v.is_finite())
        {
            return Err(Error::invalid(
                "true frequencies must be non-negative integers",
            ));
        }
        Ok(FrequencyTable { values, n, label })
    }

    /// A true table from occurrence counts.
    pub fn from_counts(counts: &[u64], n: u64) -> Result<Self> {
        Self::new(
            counts.iter().map(|&c| c as f64).collect(),
            n,
            TableLabel::True,
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn d(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn label(&self) -> TableLabel {
        self.label
    }

    /// Frequency of the 1-based `item`.
    pub fn get(&self, item: usize) -> Option<f64> {
        item.checked_sub(1)
            .and_then(|i| self.values.get(i))
            .copied()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Same shape and population, new values and label.
    pub fn with_values(&self, values: Vec<f64>, label: TableLabel) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Self::new(values, self.n, label)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

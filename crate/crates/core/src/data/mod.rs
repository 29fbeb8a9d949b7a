//! Dataset ingestion and synthetic populations.

mod parse;
mod synth;

use std::io::Write;

pub use parse::{parse_transactions, read_transactions, write_transactions, TransactionDataset};
pub use synth::{synthesize, Population, SyntheticSpec};

use crate::error::{Error, Result};
use crate::table::{FrequencyTable, TableLabel};

/// Single-item view of a transaction file: every raw occurrence is a user.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleItemView {
    pub n: u64,
    pub truth: FrequencyTable,
    /// Dense item index of each user, in file order.
    pub users: Vec<usize>,
}

/// Turns every item occurrence (duplicates included) into a one-item user.
pub fn flatten_single_item(dataset: &TransactionDataset) -> Result<SingleItemView> {
    let n = dataset.total_occurrences();
    if n == 0 {
        return Err(Error::invalid("dataset has no item occurrences"));
    }
    let mut counts = vec![0u64; dataset.d()];
    for &i in dataset.occurrences() {
        counts[i - 1] += 1;
    }
    Ok(SingleItemView {
        n,
        truth: FrequencyTable::from_counts(&counts, n)?,
        users: dataset.occurrences().to_vec(),
    })
}

/// Expands a true table into one item per user, items in ascending order.
pub fn materialize_users(truth: &FrequencyTable) -> Result<Vec<usize>> {
    if truth.label() != TableLabel::True {
        return Err(Error::invalid(
            "can only materialise users from a true table",
        ));
    }
    let total: f64 = truth.sum();
    let mut users = Vec::with_capacity(total as usize);
    for (i, &f) in truth.values().iter().enumerate() {
        users.extend(std::iter::repeat(i + 1).take(f as usize));
    }
    if users.is_empty() {
        return Err(Error::invalid("true table describes an empty population"));
    }
    Ok(users)
}

/// Writes `item_id,frequency` rows; `ids[i]` is the external id of item
/// `i + 1` (dense ids are used when absent).
pub fn write_frequency_csv<W: Write>(
    mut out: W,
    table: &FrequencyTable,
    ids: Option<&[u64]>,
) -> Result<()> {
    if let Some(ids) = ids {
        if ids.len() != table.d() {
            return Err(Error::invalid(
                "id table does not match the frequency table",
            ));
        }
    }
    writeln!(out, "item_id,frequency")?;
    for (i, v) in table.values().iter().enumerate() {
        let id = ids.map_or(i as u64 + 1, |ids| ids[i]);
        writeln!(out, "{id},{v}")?;
    }
    Ok(())
}

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};
use crate::protocols::ItemSetUser;

/// A Kosarak-style transaction file: one user per non-blank line.
///
/// Item ids are remapped to dense indices `1..=d` in order of first
/// appearance; [`original_ids`](Self::original_ids) maps them back.
#[derive(Clone, Debug, PartialEq)]
pub struct TransactionDataset {
    users: Vec<ItemSetUser>,
    original_ids: Vec<u64>,
    occurrences: Vec<usize>,
    duplicates: u64,
}

impl TransactionDataset {
    pub fn users(&self) -> &[ItemSetUser] {
        &self.users
    }

    pub fn d(&self) -> usize {
        self.original_ids.len()
    }

    /// Item occurrences in the raw file, duplicates within a line included.
    pub fn total_occurrences(&self) -> u64 {
        self.occurrences.len() as u64
    }

    /// Occurrences dropped when deduplicating lines into item sets.
    pub fn duplicate_occurrences(&self) -> u64 {
        self.duplicates
    }

    /// Dense index of every raw occurrence, in file order.
    pub fn occurrences(&self) -> &[usize] {
        &self.occurrences
    }

    /// `original_ids()[i]` is the file id of dense item `i + 1`.
    pub fn original_ids(&self) -> &[u64] {
        &self.original_ids
    }

    pub fn set_sizes(&self) -> Vec<usize> {
        self.users.iter().map(ItemSetUser::len).collect()
    }
}

/// Parses whitespace-separated positive integer ids, one transaction per
/// line. Gzip input is detected from its magic bytes.
pub fn parse_transactions<R: Read>(reader: R) -> Result<TransactionDataset> {
    let mut buffered = BufReader::new(reader);
    let gzipped = buffered.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    if gzipped {
        parse_lines(BufReader::new(MultiGzDecoder::new(buffered)))
    } else {
        parse_lines(buffered)
    }
}

/// Opens and parses a transaction file.
pub fn read_transactions(path: impl AsRef<Path>) -> Result<TransactionDataset> {
    parse_transactions(File::open(path)?)
}

fn parse_lines<R: BufRead>(reader: R) -> Result<TransactionDataset> {
    let mut dense: HashMap<u64, usize> = HashMap::new();
    let mut original_ids = Vec::new();
    let mut raw_users = Vec::new();
    let mut occurrences = Vec::new();
    let mut duplicates = 0u64;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut items = Vec::new();
        for token in line.split_whitespace() {
            let id: u64 = token.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{token}` is not a positive integer item id"),
            })?;
            if id == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "item id 0 is not allowed".into(),
                });
            }
            let next = original_ids.len() + 1;
            let item = *dense.entry(id).or_insert_with(|| {
                original_ids.push(id);
                next
            });
            items.push(item);
            occurrences.push(item);
        }
        let before = items.len();
        items.sort_unstable();
        items.dedup();
        duplicates += (before - items.len()) as u64;
        raw_users.push(items);
    }
    let d = original_ids.len();
    let users = raw_users
        .into_iter()
        .map(|items| ItemSetUser::new(items, d))
        .collect::<Result<_>>()?;
    Ok(TransactionDataset {
        users,
        original_ids,
        occurrences,
        duplicates,
    })
}

/// Writes the item sets back with their original ids.
pub fn write_transactions<W: Write>(mut out: W, dataset: &TransactionDataset) -> Result<()> {
    for user in dataset.users() {
        let line: Vec<String> = user
            .items()
            .iter()
            .map(|&i| dataset.original_ids[i - 1].to_string())
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

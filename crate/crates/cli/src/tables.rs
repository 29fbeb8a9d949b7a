//! Frequency tables on disk: `# key=value` provenance lines, then an
//! `item_id,frequency` CSV body.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ldp_calibrate::data::write_frequency_csv;
use ldp_calibrate::{FrequencyTable, TableLabel};
use serde_json::{Map, Value};

use crate::Failure;

/// Ordered key/value metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Meta(Vec<(String, String)>);

impl Meta {
    pub fn new(command: &str) -> Self {
        let mut m = Meta::default();
        m.set(
            "tool",
            format!("ldp-calibrate {}", env!("CARGO_PKG_VERSION")),
        );
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Failure::input(format!("bad `{key}` metadata: `{v}`")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str, path: &Path) -> Result<T, Failure> {
        self.parsed(key)?
            .ok_or_else(|| Failure::input(format!("{} has no `{key}` metadata", path.display())))
    }

    /// Copies the keys that describe how a table was produced.
    pub fn inherit(&mut self, from: &Meta, keys: &[&str]) -> &mut Self {
        for key in keys {
            if let Some(v) = from.get(key) {
                self.set(key, v);
            }
        }
        self
    }

    pub fn write_header<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for (k, v) in &self.0 {
            writeln!(out, "# {k}={v}")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        Value::Object(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect::<Map<_, _>>(),
        )
    }

    pub fn into_map(self) -> std::collections::BTreeMap<String, String> {
        self.0.into_iter().collect()
    }
}

pub struct TableFile {
    pub meta: Meta,
    pub ids: Vec<u64>,
    pub table: FrequencyTable,
}

pub fn write_table(
    path: &Path,
    meta: &Meta,
    table: &FrequencyTable,
    ids: &[u64],
) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Failure::io(path, e))?);
    meta.write_header(&mut out)
        .map_err(|e| Failure::io(path, e))?;
    write_frequency_csv(&mut out, table, Some(ids))?;
    out.flush().map_err(|e| Failure::io(path, e))?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<TableFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let mut meta = Meta::default();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
            meta.set(k.trim(), v.trim());
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let bad = || Failure::input(format!("{}: bad row {}", path.display(), row + 1));
        if record.len() != 2 {
            return Err(bad());
        }
        ids.push(record[0].parse::<u64>().map_err(|_| bad())?);
        values.push(record[1].parse::<f64>().map_err(|_| bad())?);
    }
    if values.is_empty() {
        return Err(Failure::input(format!("{} holds no items", path.display())));
    }
    let label = meta
        .parsed::<TableLabel>("label")?
        .unwrap_or(TableLabel::Estimated);
    let n = match meta.parsed::<u64>("n")? {
        Some(n) => n,
        None if label == TableLabel::True => values.iter().sum::<f64>().round() as u64,
        None => {
            return Err(Failure::input(format!(
                "{} has no `n` metadata",
                path.display()
            )))
        }
    };
    let table = FrequencyTable::new(values, n, label)?;
    Ok(TableFile { meta, ids, table })
}

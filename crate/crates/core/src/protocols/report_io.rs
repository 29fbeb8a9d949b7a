//! Line-oriented report files.
//!
//! ```text
//! # ldp-reports protocol=oue epsilon=4 d=5 dummy_count=0 l=1
//! a0
//! 48
//! ```
//!
//! One report per line after the header. Unary reports are hex strings of
//! `ceil(len/8)` bytes with the most significant bit of the first byte
//! standing for item 1; OLH reports are `seed,bucket`; k-RR reports are the
//! decimal item index.

use std::io::{BufRead, Lines, Write};

use fixedbitset::FixedBitSet;

use super::{Domain, PerturbedReport, ProtocolKind, ProtocolSpec};
use crate::error::{Error, Result};

const MAGIC: &str = "# ldp-reports";

/// Metadata needed to rebuild the protocol on the collector side.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportHeader {
    pub kind: ProtocolKind,
    pub epsilon: f64,
    pub d: usize,
    pub dummy_count: usize,
    /// Pad length; 1 in single-item mode.
    pub l: usize,
}

impl ReportHeader {
    pub fn domain(&self) -> Result<Domain> {
        Domain::with_dummies(self.d, self.dummy_count)
    }

    pub fn spec(&self) -> Result<ProtocolSpec> {
        ProtocolSpec::new(self.kind, self.epsilon, self.d + self.dummy_count)
    }

    pub fn to_line(&self) -> String {
        format!(
            "{MAGIC} protocol={} epsilon={} d={} dummy_count={} l={}",
            self.kind, self.epsilon, self.d, self.dummy_count, self.l
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let rest = line
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::Format(format!("missing `{MAGIC}` header")))?;
        let mut kind = None;
        let mut epsilon = None;
        let mut d = None;
        let mut dummy_count = None;
        let mut l = None;
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header field `{field}`")))?;
            let bad = |_| Error::Format(format!("bad value for `{key}`: `{value}`"));
            match key {
                "protocol" => {
                    kind = Some(
                        value
                            .parse::<ProtocolKind>()
                            .map_err(|e| Error::Format(e.to_string()))?,
                    )
                }
                "epsilon" => epsilon = Some(value.parse::<f64>().map_err(|_| bad(()))?),
                "d" => d = Some(value.parse::<usize>().map_err(|_| bad(()))?),
                "dummy_count" => dummy_count = Some(value.parse::<usize>().map_err(|_| bad(()))?),
                "l" => l = Some(value.parse::<usize>().map_err(|_| bad(()))?),
                _ => return Err(Error::Format(format!("unknown header field `{key}`"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("header lacks `{k}`"));
        Ok(ReportHeader {
            kind: kind.ok_or_else(|| missing("protocol"))?,
            epsilon: epsilon.ok_or_else(|| missing("epsilon"))?,
            d: d.ok_or_else(|| missing("d"))?,
            dummy_count: dummy_count.ok_or_else(|| missing("dummy_count"))?,
            l: l.ok_or_else(|| missing("l"))?,
        })
    }
}

/// Text form of one report over a domain of `len` indices.
pub fn encode_report(report: &PerturbedReport, len: usize) -> String {
    match report {
        PerturbedReport::Bits(bits) => {
            let mut bytes = vec![0u8; len.div_ceil(8)];
            for i in bits.ones().filter(|&i| i < len) {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
            hex::encode(bytes)
        }
        PerturbedReport::Hashed { seed, bucket } => format!("{seed},{bucket}"),
        PerturbedReport::Item(i) => i.to_string(),
    }
}

/// Parses one report line written by [`encode_report`].
pub fn decode_report(line: &str, header: &ReportHeader) -> Result<PerturbedReport> {
    let len = header.d + header.dummy_count;
    let line = line.trim();
    match header.kind {
        ProtocolKind::Oue | ProtocolKind::BasicRappor => {
            let bytes =
                hex::decode(line).map_err(|e| Error::Format(format!("bad hex report: {e}")))?;
            if bytes.len() != len.div_ceil(8) {
                return Err(Error::Format(format!(
                    "report has {} bytes, expected {}",
                    bytes.len(),
                    len.div_ceil(8)
                )));
            }
            let mut bits = FixedBitSet::with_capacity(len);
            for (b, byte) in bytes.iter().enumerate() {
                for j in 0..8 {
                    if byte & (0x80 >> j) != 0 {
                        let i = b * 8 + j;
                        if i >= len {
                            return Err(Error::Format("padding bits must be zero".into()));
                        }
                        bits.insert(i);
                    }
                }
            }
            Ok(PerturbedReport::Bits(bits))
        }
        ProtocolKind::Olh => {
            let (seed, bucket) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("expected `seed,bucket`, got `{line}`")))?;
            let seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad seed `{seed}`")))?;
            let bucket = bucket
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad bucket `{bucket}`")))?;
            Ok(PerturbedReport::Hashed { seed, bucket })
        }
        ProtocolKind::Krr => {
            let item: usize = line
                .parse()
                .map_err(|_| Error::Format(format!("bad item `{line}`")))?;
            if item == 0 || item > len {
                return Err(Error::Format(format!("item {item} outside 1..={len}")));
            }
            Ok(PerturbedReport::Item(item))
        }
    }
}

/// Writes the header followed by one line per report.
pub fn write_reports<'a, W: Write>(
    mut out: W,
    header: &ReportHeader,
    reports: impl IntoIterator<Item = &'a PerturbedReport>,
) -> Result<()> {
    writeln!(out, "{}", header.to_line())?;
    let len = header.d + header.dummy_count;
    for r in reports {
        writeln!(out, "{}", encode_report(r, len))?;
    }
    Ok(())
}

/// Streaming reader over a report file.
pub struct ReportReader<R> {
    header: ReportHeader,
    lines: Lines<R>,
    line_no: usize,
}

impl<R: BufRead> ReportReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("empty report file".into()))??;
        let header = ReportHeader::parse(first.trim_end())?;
        Ok(ReportReader {
            header,
            lines,
            line_no: 1,
        })
    }

    pub fn header(&self) -> &ReportHeader {
        &self.header
    }
}

impl<R: BufRead> Iterator for ReportReader<R> {
    type Item = Result<PerturbedReport>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let line_no = self.line_no;
            return Some(
                decode_report(&line, &self.header).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                }),
            );
        }
    }
}

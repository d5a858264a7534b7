//! Interaction log parsing.
//!
//! Input lines are `timestamp,spreader,author[,hashtags]`, with the timestamp
//! in epoch seconds and hashtags separated by `;`. Blank lines and lines
//! starting with `#` are ignored. `.gz` inputs are decompressed on the fly.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, FixedOffset, Timelike};
use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::cube::{build_base_cube, Cube, CubeError, DimKind, DimSpec, DimensionSchema, Fields};

/// Dimension names of the interaction cubes.
pub mod dims {
    pub const SPREADER: &str = "spreader";
    pub const AUTHOR: &str = "author";
    pub const HASHTAG: &str = "hashtag";
    pub const DAY: &str = "day";
    pub const HOUR: &str = "hour";
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error("line {line}: {message}")]
    Community { line: u64, message: String },
    #[error("invalid UTC offset `{0}`, expected e.g. +02:00")]
    Offset(String),
}

/// One retweet: `spreader` retweeted `author` at hour `hour` of `day`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub spreader: String,
    pub author: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hashtag: Option<String>,
    pub day: String,
    pub hour: u8,
}

impl Fields for InteractionRecord {
    fn field(&self, dim: &str) -> Option<Cow<'_, str>> {
        match dim {
            dims::SPREADER => Some(Cow::Borrowed(&self.spreader)),
            dims::AUTHOR => Some(Cow::Borrowed(&self.author)),
            dims::HASHTAG => self.hashtag.as_deref().map(Cow::Borrowed),
            dims::DAY => Some(Cow::Borrowed(&self.day)),
            dims::HOUR => Some(Cow::Owned(self.hour.to_string())),
            _ => None,
        }
    }
}

/// `spreader x author x day x hour`.
pub fn interaction_schema() -> DimensionSchema {
    DimensionSchema::new(vec![
        DimSpec::categorical(dims::SPREADER),
        DimSpec::categorical(dims::AUTHOR),
        DimSpec::new(dims::DAY, DimKind::Day),
        DimSpec::new(dims::HOUR, DimKind::HourOfDay),
    ])
    .expect("static schema")
}

/// `spreader x author x hashtag x day x hour`.
pub fn hashtag_schema() -> DimensionSchema {
    DimensionSchema::new(vec![
        DimSpec::categorical(dims::SPREADER),
        DimSpec::categorical(dims::AUTHOR),
        DimSpec::categorical(dims::HASHTAG),
        DimSpec::new(dims::DAY, DimKind::Day),
        DimSpec::new(dims::HOUR, DimKind::HourOfDay),
    ])
    .expect("static schema")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    /// `timestamp,spreader,author`
    Triplet,
    /// `timestamp,spreader,author[,tag;tag...]`
    #[default]
    Quad,
}

/// Calendar day (`YYYY-MM-DD`) and hour of day of an epoch timestamp in
/// the given zone.
pub fn bin_time(timestamp: i64, zone: FixedOffset) -> (String, u8) {
    let utc = DateTime::from_timestamp(timestamp, 0).expect("timestamp in chrono range");
    let local = utc.with_timezone(&zone);
    (local.format("%Y-%m-%d").to_string(), local.hour() as u8)
}

pub fn utc() -> FixedOffset {
    FixedOffset::east_opt(0).expect("zero offset")
}

/// Parses `Z`, `+HH:MM`, `-HH:MM` or `+HH`.
pub fn parse_offset(s: &str) -> Result<FixedOffset, IngestError> {
    let bad = || IngestError::Offset(s.to_owned());
    if s.eq_ignore_ascii_case("z") || s.eq_ignore_ascii_case("utc") {
        return Ok(utc());
    }
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let (h, m) = match rest.split_once(':') {
        Some((h, m)) => (h, m),
        None => (rest, "0"),
    };
    let h: i32 = h.parse().map_err(|_| bad())?;
    let m: i32 = m.parse().map_err(|_| bad())?;
    if h > 23 || m > 59 {
        return Err(bad());
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
}

/// Lowercase, canonically decomposed, with combining marks removed and
/// leading `#`s and surrounding whitespace dropped.
pub fn normalize_hashtag(tag: &str) -> String {
    tag.trim()
        .trim_start_matches('#')
        .trim_start()
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: u64,
    pub message: String,
}

/// Parsed log: one record per well-formed line, and one hashtag record per
/// (line, hashtag) pair.
#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub records: Vec<InteractionRecord>,
    pub hashtag_records: Vec<InteractionRecord>,
    pub errors: Vec<LineError>,
}

impl ParsedLog {
    pub fn interaction_cube(&self) -> Result<Cube, CubeError> {
        build_base_cube(&self.records, &interaction_schema())
    }

    pub fn hashtag_cube(&self) -> Result<Cube, CubeError> {
        build_base_cube(&self.hashtag_records, &hashtag_schema())
    }
}

/// Splits a data line into trimmed fields. `None` for blank and comment lines.
fn fields(line: &str) -> Option<Vec<&str>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return None;
    }
    Some(line.split(',').map(str::trim).collect())
}

pub fn parse_interactions<R: BufRead>(
    input: R,
    format: LogFormat,
    zone: FixedOffset,
) -> Result<ParsedLog, IngestError> {
    let mut log = ParsedLog::default();
    let max_fields = match format {
        LogFormat::Triplet => 3,
        LogFormat::Quad => 4,
    };
    for (i, line) in input.lines().enumerate() {
        let line_no = i as u64 + 1;
        let text = line.map_err(|source| IngestError::Io {
            path: format!("line {line_no}"),
            source,
        })?;
        let Some(row) = fields(&text) else { continue };
        let fail = |message: String| LineError {
            line: line_no,
            message,
        };
        if row.len() < 3 || row.len() > max_fields {
            log.errors.push(fail(format!(
                "expected {} fields, found {}",
                if max_fields == 3 { "3" } else { "3 or 4" },
                row.len()
            )));
            continue;
        }
        let ts: i64 = match row[0].parse() {
            Ok(t) => t,
            Err(_) => {
                log.errors.push(fail(format!("unparseable timestamp `{}`", row[0])));
                continue;
            }
        };
        if DateTime::from_timestamp(ts, 0).is_none() {
            log.errors.push(fail(format!("timestamp {ts} out of range")));
            continue;
        }
        if row[1].is_empty() || row[2].is_empty() {
            log.errors.push(fail("empty spreader or author".into()));
            continue;
        }
        let (day, hour) = bin_time(ts, zone);
        let record = InteractionRecord {
            spreader: row[1].to_owned(),
            author: row[2].to_owned(),
            hashtag: None,
            day,
            hour,
        };
        if row.len() == 4 {
            let mut seen = Vec::new();
            for tag in row[3].split(';').map(normalize_hashtag) {
                if tag.is_empty() || seen.contains(&tag) {
                    continue;
                }
                seen.push(tag.clone());
                log.hashtag_records.push(InteractionRecord {
                    hashtag: Some(tag),
                    ..record.clone()
                });
            }
        }
        log.records.push(record);
    }
    Ok(log)
}

/// Opens a file, transparently decompressing gzip (by magic bytes).
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = BufReader::new(File::open(path).map_err(io_err)?);
    let is_gzip = file.fill_buf().map_err(io_err)?.starts_with(&[0x1f, 0x8b]);
    Ok(if is_gzip {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(file)
    })
}

pub fn read_log(path: &Path, format: LogFormat, zone: FixedOffset) -> Result<ParsedLog, IngestError> {
    parse_interactions(open_input(path)?, format, zone)
}

/// Reads `spreader,community` lines.
pub fn parse_communities<R: BufRead>(input: R) -> Result<BTreeMap<String, String>, IngestError> {
    let mut out = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i as u64 + 1;
        let text = line.map_err(|source| IngestError::Io {
            path: format!("line {line_no}"),
            source,
        })?;
        let Some(row) = fields(&text) else { continue };
        if row.len() != 2 || row[0].is_empty() || row[1].is_empty() {
            return Err(IngestError::Community {
                line: line_no,
                message: "expected `spreader,community`".into(),
            });
        }
        if let Some(prev) = out.insert(row[0].to_owned(), row[1].to_owned()) {
            if prev != row[1] {
                return Err(IngestError::Community {
                    line: line_no,
                    message: format!("spreader `{}` assigned to two communities", row[0]),
                });
            }
        }
    }
    Ok(out)
}

/// Salted `user-n` aliases. Aliases are numbered in the order of
/// `sha256(salt, key)`, so the mapping depends on the salt but never on
/// input order.
pub fn anonymize<'a, I>(keys: I, salt: &str) -> HashMap<String, String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut hashed: Vec<([u8; 32], &str)> = keys
        .into_iter()
        .map(|k| {
            let mut h = Sha256::new();
            h.update(salt.as_bytes());
            h.update([0u8]);
            h.update(k.as_bytes());
            (h.finalize().into(), k)
        })
        .collect();
    hashed.sort_unstable();
    hashed.dedup_by(|a, b| a.1 == b.1);
    hashed
        .into_iter()
        .enumerate()
        .map(|(i, (_, k))| (k.to_owned(), format!("user-{}", i + 1)))
        .collect()
}

/// Writes records back in the triplet/quad text format, with a
/// representative timestamp (start of the record's hour, UTC).
pub fn write_log<W: io::Write>(mut out: W, lines: &[LogLine]) -> io::Result<()> {
    for l in lines {
        if l.hashtags.is_empty() {
            writeln!(out, "{},{},{}", l.timestamp, l.spreader, l.author)?;
        } else {
            writeln!(out, "{},{},{},{}", l.timestamp, l.spreader, l.author, l.hashtags.join(";"))?;
        }
    }
    Ok(())
}

/// One raw log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub timestamp: i64,
    pub spreader: String,
    pub author: String,
    pub hashtags: Vec<String>,
}

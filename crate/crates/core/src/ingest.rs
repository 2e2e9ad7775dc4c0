//! Corpus loading and yearly batching.
//!
//! Input is UTF-8 text with one composite per line:
//! `part_id <TAB> year <TAB> token token ...`. Lines starting with `#` and
//! blank lines are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::incremental::{Batch, BatchTarget};
use crate::token::{Sequence, Vocabulary};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CorpusRecord {
    pub part_id: String,
    pub year: i32,
    pub parts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MalformedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadedCorpus {
    pub records: Vec<CorpusRecord>,
    pub malformed: Vec<MalformedLine>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{malformed} of {lines} data lines are malformed (first: line {}: {})", .first.line, .first.reason)]
    TooManyMalformed {
        malformed: usize,
        lines: usize,
        first: MalformedLine,
    },
}

/// Parses corpus text. Malformed lines are collected, not dropped silently;
/// more than 1% of data lines being malformed is an error.
pub fn parse_corpus(text: &str) -> Result<LoadedCorpus, IngestError> {
    let mut out = LoadedCorpus::default();
    let mut lines = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        lines += 1;
        match parse_line(line) {
            Ok(r) => out.records.push(r),
            Err(reason) => out.malformed.push(MalformedLine { line: i + 1, reason }),
        }
    }
    if out.malformed.len() * 100 > lines {
        return Err(IngestError::TooManyMalformed {
            malformed: out.malformed.len(),
            lines,
            first: out.malformed[0].clone(),
        });
    }
    Ok(out)
}

fn parse_line(line: &str) -> Result<CorpusRecord, String> {
    let mut fields = line.split('\t');
    let (Some(id), Some(year), Some(parts)) = (fields.next(), fields.next(), fields.next()) else {
        return Err("expected three tab-separated fields".into());
    };
    if fields.next().is_some() {
        return Err("more than three tab-separated fields".into());
    }
    let id = id.trim();
    if id.is_empty() {
        return Err("empty part id".into());
    }
    let year: i32 = year
        .trim()
        .parse()
        .map_err(|_| format!("year {:?} is not an integer", year.trim()))?;
    let parts: Vec<String> = parts.split_whitespace().map(str::to_owned).collect();
    if parts.is_empty() {
        return Err("no parts".into());
    }
    Ok(CorpusRecord {
        part_id: id.to_owned(),
        year,
        parts,
    })
}

pub fn load_corpus(path: &Path) -> Result<LoadedCorpus, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_corpus(&text)
}

/// Writes records in the input format.
pub fn write_corpus<W: Write>(records: &[CorpusRecord], mut out: W) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}\t{}\t{}", r.part_id, r.year, r.parts.join(" "))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BatchOptions {
    pub min_target_len: usize,
    /// Inclusive year range.
    pub years: (i32, i32),
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            min_target_len: 2,
            years: (2003, 2017),
        }
    }
}

/// Year-ordered batches over a shared vocabulary.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub batches: Vec<Batch>,
    pub records: usize,
    pub dropped_short: usize,
    pub dropped_out_of_range: usize,
}

impl Corpus {
    pub fn target_count(&self) -> usize {
        self.batches.iter().map(|b| b.targets.len()).sum()
    }

    /// Every kept target merged into a single batch.
    pub fn merged(&self, label: &str) -> Batch {
        Batch {
            label: label.to_owned(),
            targets: self.batches.iter().flat_map(|b| b.targets.iter().cloned()).collect(),
            new_sources: self.batches.iter().flat_map(|b| b.new_sources.iter().copied()).collect(),
        }
    }
}

/// One batch per year in ascending order. `new_sources` holds the tokens
/// first used in that year. Short targets and out-of-range years are dropped
/// and counted.
pub fn make_batches(records: &[CorpusRecord], options: BatchOptions) -> Corpus {
    let mut by_year: BTreeMap<i32, Vec<&CorpusRecord>> = BTreeMap::new();
    let mut dropped_short = 0;
    let mut dropped_out_of_range = 0;
    for r in records {
        if r.year < options.years.0 || r.year > options.years.1 {
            dropped_out_of_range += 1;
        } else if r.parts.len() < options.min_target_len.max(1) {
            dropped_short += 1;
        } else {
            by_year.entry(r.year).or_default().push(r);
        }
    }
    if dropped_short > 0 {
        log::warn!(
            "dropped {dropped_short} records shorter than {} parts",
            options.min_target_len
        );
    }
    if dropped_out_of_range > 0 {
        log::warn!(
            "dropped {dropped_out_of_range} records outside {}..={}",
            options.years.0,
            options.years.1
        );
    }
    let mut vocabulary = Vocabulary::new();
    let mut batches = Vec::with_capacity(by_year.len());
    for (year, recs) in by_year {
        let known = vocabulary.len() as u32;
        let targets: Vec<BatchTarget> = recs
            .iter()
            .map(|r| BatchTarget {
                name: r.part_id.clone(),
                tokens: Sequence::new(r.parts.iter().map(|p| vocabulary.intern(p)).collect())
                    .expect("non-empty parts"),
            })
            .collect();
        batches.push(Batch {
            label: year.to_string(),
            targets,
            new_sources: (known..vocabulary.len() as u32).map(crate::token::Token).collect(),
        });
    }
    Corpus {
        vocabulary,
        batches,
        records: records.len(),
        dropped_short,
        dropped_out_of_range,
    }
}

/// Summary statistics of the kept targets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub records: usize,
    pub sources: usize,
    pub targets: usize,
    pub total_length: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub dropped_short: usize,
    pub dropped_out_of_range: usize,
    /// target length -> number of targets
    pub length_histogram: BTreeMap<usize, usize>,
    pub targets_per_batch: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn of(corpus: &Corpus) -> Self {
        let lengths: Vec<usize> = corpus
            .batches
            .iter()
            .flat_map(|b| b.targets.iter().map(|t| t.tokens.len()))
            .collect();
        let mut length_histogram = BTreeMap::new();
        for &l in &lengths {
            *length_histogram.entry(l).or_default() += 1;
        }
        let sources: BTreeSet<_> = corpus
            .batches
            .iter()
            .flat_map(|b| b.targets.iter().flat_map(|t| t.tokens.iter().copied()))
            .collect();
        CorpusStats {
            records: corpus.records,
            sources: sources.len(),
            targets: lengths.len(),
            total_length: lengths.iter().sum(),
            min_length: lengths.iter().copied().min().unwrap_or(0),
            max_length: lengths.iter().copied().max().unwrap_or(0),
            dropped_short: corpus.dropped_short,
            dropped_out_of_range: corpus.dropped_out_of_range,
            length_histogram,
            targets_per_batch: corpus
                .batches
                .iter()
                .map(|b| (b.label.clone(), b.targets.len()))
                .collect(),
        }
    }

    /// Length categories by descending frequency (ties: shorter first).
    pub fn top_lengths(&self, k: usize) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.length_histogram.iter().map(|(&l, &n)| (l, n)).collect();
        v.sort_by_key(|&(l, n)| (std::cmp::Reverse(n), l));
        v.truncate(k);
        v
    }

    /// Fraction of targets whose length exceeds `len`.
    pub fn share_longer_than(&self, len: usize) -> f64 {
        let n: usize = self.length_histogram.range(len + 1..).map(|(_, &n)| n).sum();
        n as f64 / self.targets.max(1) as f64
    }
}

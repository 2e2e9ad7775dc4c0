//! End-to-end runs: corpus in, metric tables, core listings, DAG snapshot and
//! run manifest out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::centrality::{h_score, CentralityError};
use crate::dag::{LexisDag, Violation};
use crate::incremental::{Batch, EvolveConfig, EvolveError, StepReport, Timeline, TimelineStep};
use crate::ingest::{load_corpus, make_batches, write_corpus, BatchOptions, Corpus, CorpusStats, IngestError, LoadedCorpus};
use crate::metrics::MetricRecord;
use crate::snapshot::{read_dag, write_dag, SnapshotError};
use crate::token::Vocabulary;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub tau: f64,
    pub steady_state: Option<usize>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub formats: BTreeSet<Format>,
    pub batching: BatchOptions,
}

impl RunConfig {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            tau: 0.85,
            steady_state: None,
            output_dir: output_dir.into(),
            formats: BTreeSet::from([Format::Csv, Format::Json]),
            batching: BatchOptions::default(),
        }
    }

    fn check(&self) -> Result<(), RunError> {
        if (0.0..=1.0).contains(&self.tau) {
            Ok(())
        } else {
            Err(RunError::InvalidTau(self.tau))
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Snapshot { path: PathBuf, source: SnapshotError },
    #[error("{}: {} DAG constraint violation(s), first: {}", .path.display(), .violations.len(), .violations[0])]
    InvalidDag { path: PathBuf, violations: Vec<Violation> },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}

impl RunError {
    /// 1 for bad input or I/O, 2 when a DAG invariant check fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::InvalidDag { .. } => 2,
            RunError::Evolve(EvolveError::Centrality(CentralityError::InvalidTau(_))) => 1,
            RunError::Evolve(_) => 2,
            _ => 1,
        }
    }
}

/// One exported table row: the step's cost report and its metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub report: StepReport,
    pub metrics: MetricRecord<f64>,
}

impl From<&TimelineStep<f64>> for MetricRow {
    fn from(step: &TimelineStep<f64>) -> Self {
        let mut report = step.report.clone();
        report.added.clear();
        MetricRow {
            report,
            metrics: step.metrics.clone(),
        }
    }
}

/// Column order of the metric tables.
pub const COLUMNS: [&str; 27] = [
    "label",
    "targets_added",
    "targets_removed",
    "targets_skipped",
    "sources_added",
    "cost_before",
    "cost_flat",
    "cost_after_stage1",
    "cost_after_stage2",
    "stage2_iterations",
    "normalized_cost",
    "batch_cost_stage1",
    "batch_cost_stage2",
    "avg_depth",
    "avg_node_length",
    "intermediates",
    "core_size",
    "flat_core_size",
    "h_score",
    "h_degenerate",
    "h_clamped",
    "diversity",
    "core_stability_vs_prev",
    "source_similarity_vs_prev",
    "source_reuse_histogram",
    "reuse_sources",
    "reuse_max",
];

enum Cell<'a> {
    Text(&'a str),
    Int(usize),
    Real(f64),
    Flag(bool),
    Missing,
    Histogram(&'a BTreeMap<usize, usize>),
}

fn cells(row: &MetricRow) -> Vec<Cell<'_>> {
    let (r, m) = (&row.report, &row.metrics);
    let opt = |x: Option<f64>| x.map_or(Cell::Missing, Cell::Real);
    let hist = &m.source_reuse_histogram;
    vec![
        Cell::Text(&m.label),
        Cell::Int(r.targets_added),
        Cell::Int(r.targets_removed),
        Cell::Int(r.targets_skipped),
        Cell::Int(r.sources_added),
        Cell::Int(r.cost_before),
        Cell::Int(r.cost_flat),
        Cell::Int(r.cost_after_stage1),
        Cell::Int(r.cost_after_stage2),
        Cell::Int(r.stage2_iterations),
        Cell::Real(m.normalized_cost),
        Cell::Real(m.batch_cost_stage1),
        Cell::Real(m.batch_cost_stage2),
        Cell::Real(m.avg_depth),
        Cell::Real(m.avg_node_length),
        Cell::Int(m.intermediates),
        Cell::Int(m.core_size),
        Cell::Int(m.flat_core_size),
        Cell::Real(m.h_score),
        Cell::Flag(m.h_degenerate),
        Cell::Flag(m.h_clamped),
        Cell::Real(m.diversity),
        opt(m.core_stability_vs_prev),
        opt(m.source_similarity_vs_prev),
        Cell::Histogram(hist),
        Cell::Int(hist.values().sum()),
        Cell::Int(hist.keys().next_back().copied().unwrap_or(0)),
    ]
}

/// Formats a real with 12 significant digits, trailing zeros trimmed.
pub fn format_real(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let s = format!("{:.11e}", x);
    let exp: i32 = s.split_once('e').and_then(|(_, e)| e.parse().ok()).expect("exponent");
    let decimals = (11 - exp).max(0) as usize;
    let rounded: f64 = s.parse().expect("float");
    let out = format!("{:.*}", decimals, rounded);
    if out.contains('.') {
        out.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        out
    }
}

/// `x` rounded to 12 significant digits, as it appears in exported tables.
pub fn round_real(x: f64) -> f64 {
    format_real(x).parse().unwrap_or(x)
}

fn format_histogram(h: &BTreeMap<usize, usize>) -> String {
    let parts: Vec<String> = h.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    parts.join(";")
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Text(s) => (*s).to_owned(),
        Cell::Int(n) => n.to_string(),
        Cell::Real(x) => format_real(*x),
        Cell::Flag(b) => b.to_string(),
        Cell::Missing => String::new(),
        Cell::Histogram(h) => format_histogram(h),
    }
}

fn cell_json(c: &Cell) -> Value {
    match c {
        Cell::Text(s) => json!(s),
        Cell::Int(n) => json!(n),
        Cell::Real(x) => json!(round_real(*x)),
        Cell::Flag(b) => json!(b),
        Cell::Missing => Value::Null,
        Cell::Histogram(h) => Value::Object(h.iter().map(|(k, v)| (k.to_string(), json!(v))).collect()),
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for row in rows {
        w.write_record(cells(row).iter().map(cell_text)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn metrics_json(rows: &[MetricRow]) -> Vec<u8> {
    let table: Vec<Value> = rows
        .iter()
        .map(|row| {
            let obj = COLUMNS
                .iter()
                .zip(cells(row).iter())
                .map(|(k, c)| ((*k).to_owned(), cell_json(c)))
                .collect();
            Value::Object(obj)
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&table).expect("serializable");
    out.push(b'\n');
    out
}

#[derive(Debug, Error)]
#[error("metrics table row {row}, column {column}: {reason}")]
pub struct TableError {
    pub row: usize,
    pub column: String,
    pub reason: String,
}

/// Parses a table written by [`metrics_csv`].
pub fn parse_metrics_csv(data: &[u8]) -> Result<Vec<MetricRow>, TableError> {
    let mut reader = csv::Reader::from_reader(data);
    let err = |row: usize, column: &str, reason: String| TableError {
        row,
        column: column.to_owned(),
        reason,
    };
    let headers = reader.headers().map_err(|e| err(0, "", e.to_string()))?.clone();
    if headers.iter().ne(COLUMNS.iter().copied()) {
        return Err(err(0, "", "unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(i + 1, "", e.to_string()))?;
        let get = |name: &str| rec.get(COLUMNS.iter().position(|c| *c == name).expect("known column")).unwrap_or("");
        let int = |name: &str| get(name).parse::<usize>().map_err(|e| err(i + 1, name, e.to_string()));
        let real = |name: &str| get(name).parse::<f64>().map_err(|e| err(i + 1, name, e.to_string()));
        let flag = |name: &str| get(name).parse::<bool>().map_err(|e| err(i + 1, name, e.to_string()));
        let opt = |name: &str| match get(name) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|e| err(i + 1, name, e.to_string())),
        };
        let mut hist = BTreeMap::new();
        for pair in get("source_reuse_histogram").split(';').filter(|p| !p.is_empty()) {
            let parsed = pair
                .split_once(':')
                .and_then(|(k, v)| Some((k.parse().ok()?, v.parse().ok()?)));
            let (k, v) = parsed.ok_or_else(|| err(i + 1, "source_reuse_histogram", format!("bad entry {pair:?}")))?;
            hist.insert(k, v);
        }
        rows.push(MetricRow {
            report: StepReport {
                label: get("label").to_owned(),
                cost_flat: int("cost_flat")?,
                cost_after_stage1: int("cost_after_stage1")?,
                cost_after_stage2: int("cost_after_stage2")?,
                cost_before: int("cost_before")?,
                targets_added: int("targets_added")?,
                targets_removed: int("targets_removed")?,
                targets_skipped: int("targets_skipped")?,
                sources_added: int("sources_added")?,
                stage2_iterations: int("stage2_iterations")?,
                added: Vec::new(),
            },
            metrics: MetricRecord {
                label: get("label").to_owned(),
                normalized_cost: real("normalized_cost")?,
                batch_cost_stage1: real("batch_cost_stage1")?,
                batch_cost_stage2: real("batch_cost_stage2")?,
                avg_depth: real("avg_depth")?,
                avg_node_length: real("avg_node_length")?,
                intermediates: int("intermediates")?,
                core_size: int("core_size")?,
                flat_core_size: int("flat_core_size")?,
                h_score: real("h_score")?,
                h_degenerate: flag("h_degenerate")?,
                h_clamped: flag("h_clamped")?,
                diversity: real("diversity")?,
                core_stability_vs_prev: opt("core_stability_vs_prev")?,
                source_similarity_vs_prev: opt("source_similarity_vs_prev")?,
                source_reuse_histogram: hist,
            },
        });
    }
    Ok(rows)
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, data: &[u8]) -> Result<(), RunError> {
    let wrap = |source: io::Error| RunError::Output {
        path: path.to_owned(),
        source,
    };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(wrap)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(data).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Collects output files, then writes them and a manifest listing their
/// checksums.
struct Outputs {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_owned(),
            files: BTreeMap::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, data: Vec<u8>) {
        self.files.insert(name.into(), data);
    }

    fn finish(self, mut manifest: Value) -> Result<Vec<PathBuf>, RunError> {
        let sums: serde_json::Map<String, Value> =
            self.files.iter().map(|(k, v)| (k.clone(), json!(sha256_hex(v)))).collect();
        manifest["outputs"] = Value::Object(sums);
        let mut m = serde_json::to_vec_pretty(&manifest).expect("serializable");
        m.push(b'\n');
        let mut written = Vec::new();
        for (name, data) in self.files.iter().chain([(&"run_manifest.json".to_owned(), &m)]) {
            let path = self.dir.join(name);
            write_atomic(&path, data)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn core_listing(step: &TimelineStep<f64>, vocabulary: &Vocabulary) -> Vec<u8> {
    let mut out = String::new();
    for s in &step.core {
        out.push_str(&vocabulary.render(s));
        out.push('\n');
    }
    out.into_bytes()
}

fn snapshot_bytes(dag: &LexisDag, vocabulary: &Vocabulary) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dag(dag, vocabulary, &mut buf).expect("in-memory write");
    buf
}

/// What a run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub rows: Vec<MetricRow>,
    pub stats: CorpusStats,
    pub malformed: usize,
    pub files: Vec<PathBuf>,
}

struct LoadedInput {
    corpus: Corpus,
    loaded: LoadedCorpus,
    checksum: String,
}

fn load_input(path: &Path, options: BatchOptions) -> Result<LoadedInput, RunError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    let loaded = load_corpus(path)?;
    for m in &loaded.malformed {
        log::warn!("{}:{}: {}", path.display(), m.line, m.reason);
    }
    let corpus = make_batches(&loaded.records, options);
    Ok(LoadedInput {
        corpus,
        loaded,
        checksum: sha256_hex(&bytes),
    })
}

fn manifest(command: &str, config: &RunConfig, input: &LoadedInput, stats: &CorpusStats) -> Value {
    json!({
        "tool": "lexis",
        "version": VERSION,
        "command": command,
        "config": config,
        "corpus": {
            "sha256": input.checksum,
            "records": input.loaded.records.len(),
            "malformed_lines": input.loaded.malformed.len(),
            "targets": stats.targets,
            "sources": stats.sources,
            "dropped_short": stats.dropped_short,
            "dropped_out_of_range": stats.dropped_out_of_range,
        },
    })
}

fn run_batches(
    command: &str,
    corpus_path: &Path,
    config: &RunConfig,
    batches: impl FnOnce(&Corpus) -> Vec<Batch>,
) -> Result<RunSummary, RunError> {
    config.check()?;
    let input = load_input(corpus_path, config.batching)?;
    let stats = CorpusStats::of(&input.corpus);
    let mut timeline = Timeline::new(EvolveConfig {
        tau: config.tau,
        steady_state: config.steady_state,
    });
    let mut outputs = Outputs::new(&config.output_dir);
    let mut rows = Vec::new();
    for batch in batches(&input.corpus) {
        log::info!("{command}: step {} ({} targets)", batch.label, batch.targets.len());
        let step = timeline.step(&batch)?;
        outputs.add(
            format!("core_members_{}.txt", file_label(&batch.label)),
            core_listing(&step, &input.corpus.vocabulary),
        );
        rows.push(MetricRow::from(&step));
    }
    if config.formats.contains(&Format::Csv) {
        outputs.add("metrics.csv", metrics_csv(&rows));
    }
    if config.formats.contains(&Format::Json) {
        outputs.add("metrics.json", metrics_json(&rows));
    }
    outputs.add("dag.txt", snapshot_bytes(timeline.dag(), &input.corpus.vocabulary));
    let files = outputs.finish(manifest(command, config, &input, &stats))?;
    Ok(RunSummary {
        rows,
        stats,
        malformed: input.loaded.malformed.len(),
        files,
    })
}

/// Yearly timeline: clean slate for the first year, incremental after.
pub fn evolve(corpus_path: &Path, config: &RunConfig) -> Result<RunSummary, RunError> {
    run_batches("evolve", corpus_path, config, |c| c.batches.clone())
}

/// A single clean-slate DAG over every kept target, labelled `all`.
pub fn build(corpus_path: &Path, config: &RunConfig) -> Result<RunSummary, RunError> {
    run_batches("build", corpus_path, config, |c| vec![c.merged("all")])
}

/// Validates a corpus and writes its normalized form (`corpus.tsv`, kept
/// records ordered by year) and `corpus_stats.json`.
pub fn ingest(corpus_path: &Path, options: BatchOptions, output_dir: &Path) -> Result<CorpusStats, RunError> {
    let input = load_input(corpus_path, options)?;
    let stats = CorpusStats::of(&input.corpus);
    let mut kept: Vec<_> = input
        .loaded
        .records
        .iter()
        .filter(|r| {
            (options.years.0..=options.years.1).contains(&r.year) && r.parts.len() >= options.min_target_len.max(1)
        })
        .cloned()
        .collect();
    kept.sort_by_key(|r| r.year);
    let mut tsv = Vec::new();
    write_corpus(&kept, &mut tsv).expect("in-memory write");
    let report = json!({
        "sha256": input.checksum,
        "records_before_drops": input.loaded.records.len(),
        "stats": stats,
        "top_lengths": stats.top_lengths(5),
        "share_longer_than_10": round_real(stats.share_longer_than(10)),
        "malformed": input.loaded.malformed,
    });
    let mut outputs = Outputs::new(output_dir);
    outputs.add("corpus.tsv", tsv);
    let mut r = serde_json::to_vec_pretty(&report).expect("serializable");
    r.push(b'\n');
    outputs.add("corpus_stats.json", r);
    outputs.finish(json!({
        "tool": "lexis",
        "version": VERSION,
        "command": "ingest",
        "config": options,
    }))?;
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoreReport {
    pub tau: f64,
    pub h_score: f64,
    pub degenerate: bool,
    pub clamped: bool,
    pub core_size: usize,
    pub flat_core_size: usize,
    pub total_paths: String,
    pub remaining_fraction: f64,
    /// Core members in removal order.
    pub members: Vec<CoreEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoreEntry {
    pub node: u32,
    pub kind: char,
    pub centrality: String,
    pub string: String,
}

impl fmt::Display for CoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "tau {}  core {}  flat core {}  H {}{}",
            format_real(self.tau),
            self.core_size,
            self.flat_core_size,
            format_real(self.h_score),
            if self.degenerate { " (degenerate)" } else if self.clamped { " (clamped)" } else { "" }
        )?;
        for m in &self.members {
            writeln!(f, "{}\t{}\t{}\t{}", m.node, m.kind, m.centrality, m.string)?;
        }
        Ok(())
    }
}

/// Core and H-score of a saved DAG snapshot.
pub fn core_of_snapshot(path: &Path, tau: f64) -> Result<CoreReport, RunError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(RunError::InvalidTau(tau));
    }
    let snapshot_err = |source: SnapshotError| RunError::Snapshot {
        path: path.to_owned(),
        source,
    };
    let file = fs::File::open(path).map_err(|e| snapshot_err(e.into()))?;
    let (dag, vocabulary) = read_dag(io::BufReader::new(file)).map_err(snapshot_err)?;
    let violations = dag.validate();
    if !violations.is_empty() {
        return Err(RunError::InvalidDag {
            path: path.to_owned(),
            violations,
        });
    }
    let h = h_score(&dag, tau).map_err(EvolveError::from)?;
    Ok(CoreReport {
        tau,
        h_score: h.value,
        degenerate: h.degenerate,
        clamped: h.clamped,
        core_size: h.core.len(),
        flat_core_size: h.flat_core.len(),
        total_paths: h.core.total_paths.to_string(),
        remaining_fraction: h.core.remaining_fraction,
        members: h
            .core
            .members
            .iter()
            .map(|m| CoreEntry {
                node: m.id.0,
                kind: m.kind.code(),
                centrality: m.centrality.to_string(),
                string: vocabulary.render(&m.string),
            })
            .collect(),
    })
}

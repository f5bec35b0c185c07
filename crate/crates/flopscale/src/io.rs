//! Readers for run records, latency measurements and point lists.

use std::fs;
use std::io::Read;
use std::path::Path;

use flopscale_core::fit::RunRecord;
use flopscale_core::flops::{training_compute, CostFactors, DEFAULT_BACKWARD_MULTIPLIER};
use flopscale_core::planner::ConfigTable;
use flopscale_core::runtime::{LatencyMeasurement, Metric};
use flopscale_core::ArchKind;
use serde::Deserialize;

/// Column order of run-record CSV files.
pub const RUN_COLUMNS: [&str; 6] = ["kind", "N", "D", "T_ctx", "C", "loss"];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunFormat {
    Csv,
    Jsonl,
}

impl RunFormat {
    /// `.jsonl` and `.ndjson` are JSON lines, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("ndjson") => RunFormat::Jsonl,
            _ => RunFormat::Csv,
        }
    }
}

/// How missing training compute is filled in.
#[derive(Debug, Clone)]
pub struct ComputeLookup<'a> {
    pub table: &'a ConfigTable,
    pub factors: CostFactors,
    pub backward_multiplier: f64,
}

impl<'a> ComputeLookup<'a> {
    pub fn new(table: &'a ConfigTable) -> Self {
        ComputeLookup { table, factors: CostFactors::default(), backward_multiplier: DEFAULT_BACKWARD_MULTIPLIER }
    }

    fn compute(&self, kind: ArchKind, n: f64, d: f64, t_ctx: u64) -> Result<f64, String> {
        let entry = self
            .table
            .resolve_kind(kind, n)
            .ok_or_else(|| format!("C missing and no {kind:?} configuration within tolerance of N = {n}"))?;
        training_compute(&entry.config, t_ctx, d, &self.factors, self.backward_multiplier)
            .map(|c| c.flops)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions<'a> {
    /// Abort on the first invalid row instead of collecting errors.
    pub strict: bool,
    pub lookup: Option<ComputeLookup<'a>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<RunRecord>,
    pub errors: Vec<LineError>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    kind: ArchKind,
    #[serde(rename = "N")]
    n: f64,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "T_ctx")]
    t_ctx: f64,
    #[serde(rename = "C", default)]
    c: Option<f64>,
    loss: f64,
}

fn open(path: &Path) -> Result<String, IoError> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| IoError::Open { path: path.display().to_string(), source })?;
    Ok(s)
}

pub fn load_runs(path: &Path, format: RunFormat, options: &LoadOptions) -> Result<LoadReport, IoError> {
    let text = open(path)?;
    parse_runs(&text, format, options)
}

pub fn parse_runs(text: &str, format: RunFormat, options: &LoadOptions) -> Result<LoadReport, IoError> {
    let mut report = LoadReport::default();
    let mut push = |line: u64, row: Result<RunRecord, String>| -> Result<(), IoError> {
        match row {
            Ok(r) => report.records.push(r),
            Err(message) if options.strict => return Err(IoError::Line { line, message }),
            Err(message) => report.errors.push(LineError { line, message }),
        }
        Ok(())
    };
    match format {
        RunFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
            let headers = reader.headers().map_err(|e| IoError::Format(e.to_string()))?.clone();
            let index = run_columns(&headers)?;
            for result in reader.records() {
                let (line, row) = match result {
                    Ok(rec) => {
                        let line = rec.position().map_or(0, |p| p.line());
                        (line, csv_run(&rec, &index).and_then(|raw| finish(raw, options)))
                    }
                    Err(e) => (e.position().map_or(0, |p| p.line()), Err(e.to_string())),
                };
                push(line, row)?;
            }
        }
        RunFormat::Jsonl => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let row = serde_json::from_str::<RawRun>(line)
                    .map_err(|e| e.to_string())
                    .and_then(|raw| finish(raw, options));
                push(i as u64 + 1, row)?;
            }
        }
    }
    Ok(report)
}

struct RunColumns {
    kind: usize,
    n: usize,
    d: usize,
    t_ctx: usize,
    c: Option<usize>,
    loss: usize,
}

fn run_columns(headers: &csv::StringRecord) -> Result<RunColumns, IoError> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| IoError::Format(format!("missing column `{name}`")));
    if let Some(extra) = headers.iter().find(|h| !RUN_COLUMNS.contains(h)) {
        return Err(IoError::Format(format!("unknown column `{extra}`")));
    }
    Ok(RunColumns {
        kind: need("kind")?,
        n: need("N")?,
        d: need("D")?,
        t_ctx: need("T_ctx")?,
        c: find("C"),
        loss: need("loss")?,
    })
}

fn number(rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64, String> {
    let field = rec.get(i).ok_or_else(|| format!("missing field `{name}`"))?;
    field.parse::<f64>().map_err(|_| format!("`{name}` is not a number: {field:?}"))
}

fn csv_run(rec: &csv::StringRecord, idx: &RunColumns) -> Result<RawRun, String> {
    let kind = match rec.get(idx.kind).map(|k| k.to_ascii_lowercase()) {
        Some(k) if k == "xlstm" => ArchKind::Xlstm,
        Some(k) if k == "transformer" => ArchKind::Transformer,
        other => return Err(format!("unknown kind {:?}", other.unwrap_or_default())),
    };
    let c = match idx.c.and_then(|i| rec.get(i)) {
        None | Some("") => None,
        Some(_) => Some(number(rec, idx.c.unwrap(), "C")?),
    };
    Ok(RawRun {
        kind,
        n: number(rec, idx.n, "N")?,
        d: number(rec, idx.d, "D")?,
        t_ctx: number(rec, idx.t_ctx, "T_ctx")?,
        c,
        loss: number(rec, idx.loss, "loss")?,
    })
}

fn finish(raw: RawRun, options: &LoadOptions) -> Result<RunRecord, String> {
    if !(raw.t_ctx >= 1.0 && raw.t_ctx.fract() == 0.0 && raw.t_ctx <= u64::MAX as f64) {
        return Err(format!("T_ctx must be a positive integer, got {}", raw.t_ctx));
    }
    let t_ctx = raw.t_ctx as u64;
    let c = match (raw.c, &options.lookup) {
        (Some(c), _) => c,
        (None, Some(lookup)) => lookup.compute(raw.kind, raw.n, raw.d, t_ctx)?,
        (None, None) => return Err("C missing and no configuration table supplied".into()),
    };
    let record = RunRecord { kind: raw.kind, n: raw.n, d: raw.d, t_ctx, c, loss: raw.loss };
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}

/// Writes records in the run CSV layout.
pub fn write_runs_csv<W: std::io::Write>(runs: &[RunRecord], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| IoError::Format(e.to_string());
    w.write_record(RUN_COLUMNS).map_err(err)?;
    for r in runs {
        let kind = match r.kind {
            ArchKind::Xlstm => "xlstm",
            ArchKind::Transformer => "transformer",
        };
        w.write_record([kind, &num(r.n), &num(r.d), &r.t_ctx.to_string(), &num(r.c), &num(r.loss)]).map_err(err)?;
    }
    w.flush().map_err(|e| IoError::Format(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLatency {
    config_id: String,
    metric: String,
    #[serde(rename = "B")]
    batch: f64,
    #[serde(rename = "T_p")]
    prefill_len: f64,
    seconds: f64,
}

fn parse_metric(s: &str) -> Option<Metric> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "ttft" => Some(Metric::Ttft),
        "step_time" | "step" => Some(Metric::StepTime),
        _ => None,
    }
}

fn count(v: f64, name: &str) -> Result<u64, String> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("{name} must be a non-negative integer, got {v}"))
    }
}

/// Reads `config_id,metric,B,T_p,seconds` rows. Any invalid row is an error.
pub fn load_latency(path: &Path) -> Result<Vec<LatencyMeasurement>, IoError> {
    parse_latency(&open(path)?)
}

pub fn parse_latency(text: &str) -> Result<Vec<LatencyMeasurement>, IoError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| IoError::Format(e.to_string()))?.clone();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IoError::Line { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = rec
            .deserialize::<RawLatency>(Some(&headers))
            .map_err(|e| e.to_string())
            .and_then(|raw| {
                let metric = parse_metric(&raw.metric).ok_or_else(|| format!("unknown metric {:?}", raw.metric))?;
                if !(raw.seconds.is_finite() && raw.seconds > 0.0) {
                    return Err(format!("seconds must be > 0, got {}", raw.seconds));
                }
                Ok(LatencyMeasurement {
                    config_id: raw.config_id,
                    metric,
                    batch: count(raw.batch, "B")?,
                    prefill_len: count(raw.prefill_len, "T_p")?,
                    seconds: raw.seconds,
                })
            });
        out.push(parsed.map_err(|message| IoError::Line { line, message })?);
    }
    Ok(out)
}

/// Reads a two-column CSV of `(x, y)` pairs under any header.
pub fn load_points(path: &Path) -> Result<Vec<(f64, f64)>, IoError> {
    parse_points(&open(path)?)
}

pub fn parse_points(text: &str) -> Result<Vec<(f64, f64)>, IoError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let width = reader.headers().map_err(|e| IoError::Format(e.to_string()))?.len();
    if width != 2 {
        return Err(IoError::Format(format!("expected 2 columns, found {width}")));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IoError::Line { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let x = number(&rec, 0, "x").map_err(|message| IoError::Line { line, message })?;
        let y = number(&rec, 1, "y").map_err(|message| IoError::Line { line, message })?;
        out.push((x, y));
    }
    Ok(out)
}

use std::fmt;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::signal::{ObservationMask, SampleVector, SignalError, SpikeTrain};

pub const SAMPLE_COLUMNS: [&str; 4] = ["ell", "re", "im", "observed"];
pub const TRUTH_COLUMNS: [&str; 3] = ["tau", "re", "im"];

/// Comment block written above every CSV header.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub command: String,
    pub config_hash: String,
    pub seeds: String,
}

impl Metadata {
    pub fn new<C: Serialize>(command: &str, config: &C, seeds: &[u64]) -> Self {
        let json = serde_json::to_string(config).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        let seeds = match seeds {
            [] => "none".to_string(),
            [s] => s.to_string(),
            [first, .., last] if (*last - *first) as usize + 1 == seeds.len() => format!("{first}..={last}"),
            _ => seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
        };
        Self {
            command: command.to_string(),
            config_hash,
            seeds,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        let _ = writeln!(out, "# sliding-omp {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "# command: {}", self.command);
        let _ = writeln!(out, "# config-sha256: {}", self.config_hash);
        let _ = writeln!(out, "# seeds: {}", self.seeds);
    }
}

/// Renders metadata, header and rows.
pub fn render_csv(meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = Vec::new();
    meta.write(&mut out);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()
        }
    }
}

/// Shortest round-trip form; scientific outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn sample_rows(y: &SampleVector, mask: &ObservationMask) -> Vec<Vec<String>> {
    let n = y.n() as i64;
    (-n..=n)
        .map(|ell| {
            let v = y.get(ell);
            vec![
                ell.to_string(),
                fmt_f64(v.re),
                fmt_f64(v.im),
                u8::from(mask.is_observed(ell)).to_string(),
            ]
        })
        .collect()
}

pub fn truth_rows(train: &SpikeTrain) -> Vec<Vec<String>> {
    train
        .taus()
        .iter()
        .zip(train.amps())
        .map(|(t, a)| vec![fmt_f64(*t), fmt_f64(a.re), fmt_f64(a.im)])
        .collect()
}

/// Malformed input file.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub line: Option<u64>,
    pub column: Option<String>,
    pub message: String,
}

impl InputError {
    fn at(line: Option<u64>, column: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line,
            column: column.map(str::to_string),
            message: message.into(),
        }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(c) = &self.column {
            write!(f, "column `{c}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for InputError {}

struct Table {
    columns: Vec<usize>,
    records: Vec<(Option<u64>, csv::StringRecord)>,
}

fn read_table(text: &str, wanted: &[&str]) -> Result<Table, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| InputError::at(None, None, format!("unreadable header: {e}")))?
        .clone();
    let mut columns = Vec::with_capacity(wanted.len());
    for w in wanted {
        let idx = header
            .iter()
            .position(|h| h == *w)
            .ok_or_else(|| InputError::at(None, Some(w), format!("missing column `{w}` (expected header {})", wanted.join(","))))?;
        columns.push(idx);
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            InputError::at(line, None, e.to_string())
        })?;
        records.push((rec.position().map(|p| p.line()), rec));
    }
    Ok(Table { columns, records })
}

fn parse_f64(rec: &csv::StringRecord, idx: usize, line: Option<u64>, name: &str) -> Result<f64, InputError> {
    let raw = rec.get(idx).unwrap_or("");
    let v: f64 = raw
        .parse()
        .map_err(|_| InputError::at(line, Some(name), format!("expected a number, found {raw:?}")))?;
    if !v.is_finite() {
        return Err(InputError::at(line, Some(name), format!("value {raw:?} is not finite")));
    }
    Ok(v)
}

/// Parses a sample file with header `ell,re,im,observed`.
///
/// Rows must list `ell = -n..=n` in order; `observed` is `0`/`1` or
/// `false`/`true` and must be symmetric in `ell`.
pub fn parse_samples(text: &str) -> Result<(SampleVector, ObservationMask), InputError> {
    let t = read_table(text, &SAMPLE_COLUMNS)?;
    let len = t.records.len();
    if len == 0 || len % 2 == 0 {
        return Err(InputError::at(None, Some("ell"), format!("need an odd number 2n+1 >= 3 of rows, found {len}")));
    }
    let n = (len - 1) / 2;
    let mut values = Vec::with_capacity(len);
    let mut observed = Vec::with_capacity(len);
    for (k, (line, rec)) in t.records.iter().enumerate() {
        let want = k as i64 - n as i64;
        let raw = rec.get(t.columns[0]).unwrap_or("");
        let ell: i64 = raw
            .parse()
            .map_err(|_| InputError::at(*line, Some("ell"), format!("expected an integer, found {raw:?}")))?;
        if ell != want {
            return Err(InputError::at(
                *line,
                Some("ell"),
                format!("expected ell = {want}: indices must run contiguously from -{n} to {n}"),
            ));
        }
        let re = parse_f64(rec, t.columns[1], *line, "re")?;
        let im = parse_f64(rec, t.columns[2], *line, "im")?;
        let obs = match rec.get(t.columns[3]).unwrap_or("") {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(InputError::at(*line, Some("observed"), format!("expected 0 or 1, found {other:?}")));
            }
        };
        values.push(Complex64::new(re, im));
        observed.push(obs);
    }
    let count = observed.iter().filter(|&&o| o).count();
    let mask = ObservationMask::from_observed(n, observed, count as f64 / len as f64).map_err(|e| match e {
        SignalError::Asymmetric(ell) => InputError::at(
            None,
            Some("observed"),
            format!("observation mask must be symmetric (ell observed iff -ell observed); ell = {ell} violates it"),
        ),
        other => InputError::at(None, Some("observed"), other.to_string()),
    })?;
    let y = SampleVector::new(n, values).map_err(|e| InputError::at(None, None, e.to_string()))?;
    Ok((y, mask))
}

/// Parses a truth file with header `tau,re,im`.
pub fn parse_truth(text: &str) -> Result<SpikeTrain, InputError> {
    let t = read_table(text, &TRUTH_COLUMNS)?;
    let mut taus = Vec::new();
    let mut amps = Vec::new();
    for (line, rec) in &t.records {
        taus.push(parse_f64(rec, t.columns[0], *line, "tau")?);
        amps.push(Complex64::new(
            parse_f64(rec, t.columns[1], *line, "re")?,
            parse_f64(rec, t.columns[2], *line, "im")?,
        ));
    }
    SpikeTrain::new(taus, amps).map_err(|e| InputError::at(None, Some("tau"), e.to_string()))
}

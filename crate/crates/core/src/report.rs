//! Structured records of verified inequalities and their JSON-lines output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BallRecord;

/// Where an inequality is tightest (or fails).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ball: Option<BallRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub other_point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub function: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<f64>,
}

impl Witness {
    pub fn ball(ball: BallRecord) -> Self {
        Witness {
            ball: Some(ball),
            ..Default::default()
        }
    }

    pub fn point(point: Vec<f64>) -> Self {
        Witness {
            point: Some(point),
            ..Default::default()
        }
    }

    pub fn with_value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_function(mut self, function: usize) -> Self {
        self.function = Some(function);
        self
    }

    pub fn with_other_point(mut self, point: Vec<f64>) -> Self {
        self.other_point = Some(point);
        self
    }
}

/// One checked inequality: fitted constants, measured quantities, verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub constants: BTreeMap<String, f64>,
    pub measured: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            pass: true,
            constants: BTreeMap::new(),
            measured: BTreeMap::new(),
            witness: None,
            notes: Vec::new(),
        }
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }

    pub fn constant(mut self, key: impl Into<String>, value: f64) -> Self {
        self.constants.insert(key.into(), value);
        self
    }

    pub fn measure(mut self, key: impl Into<String>, value: f64) -> Self {
        self.measured.insert(key.into(), value);
        self
    }

    pub fn with_witness(mut self, witness: Witness) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.constants
            .get(key)
            .or_else(|| self.measured.get(key))
            .copied()
    }
}

/// Theorem-level result: measured ratios and the fitted growth `(C, ϑ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub theorem: String,
    pub operator: String,
    pub pass: bool,
    pub parameters: BTreeMap<String, f64>,
    /// Worst ratio per test function, in suite order.
    pub ratios: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    pub fitted_constant: Option<f64>,
    /// Largest `lhs / (1 + r/ρ)^ϑ` at the fitted exponent.
    pub measured_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header {
        format: String,
        version: u32,
        records: usize,
    },
    Check(CheckReport),
    Boundedness(BoundednessReport),
}

impl Record {
    pub fn name(&self) -> &str {
        match self {
            Record::Header { format, .. } => format,
            Record::Check(c) => &c.name,
            Record::Boundedness(b) => &b.theorem,
        }
    }

    pub fn pass(&self) -> bool {
        match self {
            Record::Header { .. } => true,
            Record::Check(c) => c.pass,
            Record::Boundedness(b) => b.pass,
        }
    }
}

impl From<CheckReport> for Record {
    fn from(c: CheckReport) -> Self {
        Record::Check(c)
    }
}

impl From<BoundednessReport> for Record {
    fn from(b: BoundednessReport) -> Self {
        Record::Boundedness(b)
    }
}

pub const REPORT_FORMAT: &str = "rholab-report";

/// JSON lines: a header record, then one line per record in the given order.
pub fn to_json_lines(records: &[Record]) -> String {
    let header = Record::Header {
        format: REPORT_FORMAT.to_string(),
        version: 1,
        records: records.len(),
    };
    let mut out = String::new();
    for r in std::iter::once(&header).chain(records) {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_json_lines(text: &str) -> Result<Vec<Record>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string())))
        .filter(|r| !matches!(r, Ok(Record::Header { .. })))
        .collect()
}

/// Fixed-width pass/fail table.
pub fn summary_table(records: &[Record]) -> String {
    let passed = records.iter().filter(|r| r.pass()).count();
    let mut out = String::new();
    let _ = writeln!(out, "{:<48} {:<6} details", "record", "pass");
    for r in records {
        let details = match r {
            Record::Header { .. } => String::new(),
            Record::Check(c) => c
                .constants
                .iter()
                .map(|(k, v)| format!("{k}={v:.4e}"))
                .collect::<Vec<_>>()
                .join(" "),
            Record::Boundedness(b) => format!(
                "{} theta={} C={} measured={:.4e}",
                b.operator,
                b.fitted_exponent.map_or("-".into(), |v| v.to_string()),
                b.fitted_constant.map_or("-".into(), |v| v.to_string()),
                b.measured_constant
            ),
        };
        let _ = writeln!(
            out,
            "{:<48} {:<6} {}",
            r.name(),
            if r.pass() { "PASS" } else { "FAIL" },
            details
        );
    }
    let _ = writeln!(
        out,
        "total {} passed {} failed {}",
        records.len(),
        passed,
        records.len() - passed
    );
    out
}

/// Writes `path` (JSON lines) and `path.summary.txt`; returns the summary text.
pub fn emit_report(records: &[Record], path: &Path) -> Result<String> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_json_lines(records).as_bytes())
        .map_err(|e| Error::io(path, e))?;
    let summary = summary_table(records);
    let summary_path = summary_path(path);
    std::fs::write(&summary_path, &summary).map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}

pub fn summary_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".summary.txt");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_has_only_header() {
        let text = to_json_lines(&[]);
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"kind\":\"header\""));
        assert!(parse_json_lines(&text).unwrap().is_empty());
    }

    #[test]
    fn single_record_roundtrip() {
        let rec: Record = CheckReport::new("demo").constant("C", 2.0).into();
        let text = to_json_lines(std::slice::from_ref(&rec));
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("\"pass\":true"));
        assert_eq!(parse_json_lines(&text).unwrap(), vec![rec]);
    }

    #[test]
    fn summary_counts_match_records() {
        let recs: Vec<Record> = vec![
            CheckReport::new("a").into(),
            CheckReport::new("b").with_pass(false).into(),
            CheckReport::new("c").into(),
        ];
        let summary = summary_table(&recs);
        let scanned_pass = summary.lines().filter(|l| l.contains(" PASS ")).count();
        let scanned_fail = summary.lines().filter(|l| l.contains(" FAIL ")).count();
        assert_eq!((scanned_pass, scanned_fail), (2, 1));
        assert!(summary.ends_with("total 3 passed 2 failed 1\n"));
    }

    #[test]
    fn emit_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        emit_report(&[CheckReport::new("x").into()], &path).unwrap();
        assert!(path.exists());
        assert!(summary_path(&path).exists());
        let bad = dir.path().join("missing").join("out.jsonl");
        let err = emit_report(&[], &bad).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }
}

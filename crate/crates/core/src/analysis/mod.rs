//! Static-analysis findings: the normalized [`Violation`] model, parsers for
//! the analyzer output formats we accept, and the [`AnalyzerAdapter`]
//! contract used both to flag files and to re-check candidate revisions.

mod external;
mod sarif;
mod sonar;
mod toy;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{run_external_analyzer, ExternalAnalyzer};
pub use sarif::parse_sarif_subset;
pub use sonar::parse_sonar_issues;
pub use toy::{toy_analyzer, ToyAdapter, ToyRule};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("malformed analyzer report: {0}")]
    Parse(String),
    #[error("invalid line pattern `{pattern}`: {reason}")]
    InvalidPattern { pattern: String, reason: String },
    #[error("failed to spawn analyzer `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("analyzer exited with {status} and produced no report: {stderr}")]
    Crashed { status: String, stderr: String },
    #[error("analyzer configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One flagged location.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub file: String,
    pub start_line: usize,
    pub end_line: usize,
    pub rule_id: String,
    pub message: String,
}

impl Violation {
    pub fn new(
        file: impl Into<String>,
        start_line: usize,
        end_line: usize,
        rule_id: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Self {
            file: file.into(),
            start_line,
            end_line,
            rule_id: rule_id.into(),
            message: message.into(),
        }
    }

    fn check(&self) -> Result<(), AnalysisError> {
        if self.start_line == 0 || self.start_line > self.end_line {
            return Err(AnalysisError::Parse(format!(
                "invalid line span {}..{} in {}",
                self.start_line, self.end_line, self.file
            )));
        }
        if self.rule_id.is_empty() {
            return Err(AnalysisError::Parse("violation with empty rule id".into()));
        }
        Ok(())
    }
}

/// Findings for one analysis target, sorted by file then line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub target: String,
    pub violations: Vec<Violation>,
}

impl AnalysisReport {
    pub fn new(target: impl Into<String>, mut violations: Vec<Violation>) -> Self {
        violations.sort();
        Self {
            target: target.into(),
            violations,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// Violations of one rule, in report order.
    pub fn for_rule<'a>(&'a self, rule_id: &'a str) -> impl Iterator<Item = &'a Violation> + 'a {
        self.violations.iter().filter(move |v| v.rule_id == rule_id)
    }

    pub fn count(&self, rule_id: &str, file: &str) -> usize {
        self.for_rule(rule_id).filter(|v| v.file == file).count()
    }

    /// Internal format: one JSON-encoded violation per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            out.push_str(&serde_json::to_string(v).expect("violation serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(target: impl Into<String>, text: &str) -> Result<Self, AnalysisError> {
        let mut violations = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Violation = serde_json::from_str(line)
                .map_err(|e| AnalysisError::Parse(format!("line {}: {e}", i + 1)))?;
            v.check()?;
            violations.push(v);
        }
        Ok(Self::new(target, violations))
    }
}

/// A parsed report plus the number of results discarded for lacking a line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ingested {
    pub report: AnalysisReport,
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Sarif,
    Sonar,
    Jsonl,
}

impl ReportFormat {
    pub fn parse(self, bytes: &[u8]) -> Result<Ingested, AnalysisError> {
        match self {
            ReportFormat::Sarif => parse_sarif_subset(bytes),
            ReportFormat::Sonar => parse_sonar_issues(bytes),
            ReportFormat::Jsonl => {
                let text =
                    std::str::from_utf8(bytes).map_err(|e| AnalysisError::Parse(e.to_string()))?;
                Ok(Ingested {
                    report: AnalysisReport::from_jsonl("", text)?,
                    dropped: 0,
                })
            }
        }
    }
}

/// Runs one static check over a workspace directory.
///
/// Implementations must be deterministic: the same workspace contents and
/// check id always yield the same report. Candidate pruning relies on it.
pub trait AnalyzerAdapter: Send + Sync {
    fn run(&self, check_id: &str, workspace: &Path) -> Result<AnalysisReport, AnalysisError>;
}

impl<T: AnalyzerAdapter + ?Sized> AnalyzerAdapter for Box<T> {
    fn run(&self, check_id: &str, workspace: &Path) -> Result<AnalysisReport, AnalysisError> {
        (**self).run(check_id, workspace)
    }
}

impl<T: AnalyzerAdapter + ?Sized> AnalyzerAdapter for std::sync::Arc<T> {
    fn run(&self, check_id: &str, workspace: &Path) -> Result<AnalysisReport, AnalysisError> {
        (**self).run(check_id, workspace)
    }
}

/// Normalizes an analyzer-reported path to a workspace-relative, `/`-separated one.
pub(crate) fn normalize_path(raw: &str, workspace: Option<&Path>) -> String {
    let mut p = raw
        .strip_prefix("file://")
        .unwrap_or(raw)
        .replace('\\', "/");
    if let Some(ws) = workspace {
        let ws = ws.to_string_lossy().replace('\\', "/");
        let ws = ws.trim_end_matches('/');
        if let Some(rest) = p.strip_prefix(ws) {
            if rest.starts_with('/') {
                p = rest.trim_start_matches('/').to_string();
            }
        }
    }
    while let Some(rest) = p.strip_prefix("./") {
        p = rest.to_string();
    }
    p
}

//! Run metrics, per-file rows and their JSON / markdown renderings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ranker::{FileClass, ScoreValue};

pub const SCHEMA_VERSION: u32 = 1;

/// Shown in place of a ratio whose denominator is zero.
pub const NOT_APPLICABLE: &str = "–";

/// `num / den` to two decimals.
pub fn format_ratio(num: usize, den: usize) -> String {
    if den == 0 {
        NOT_APPLICABLE.to_string()
    } else {
        format!("{:.2}", num as f64 / den as f64)
    }
}

/// `num / den` as a percentage to two decimals.
pub fn format_percent(num: usize, den: usize) -> String {
    if den == 0 {
        NOT_APPLICABLE.to_string()
    } else {
        format!("{:.2}%", 100.0 * num as f64 / den as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub files_flagged: usize,
    pub issues_flagged: usize,
    pub files_passing_static: usize,
    /// Violations left in files where no candidate passed.
    pub issues_remaining: usize,
    pub files_ranked_high: usize,
    pub files_ranked_low: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            files_flagged: self.files_flagged + o.files_flagged,
            issues_flagged: self.issues_flagged + o.issues_flagged,
            files_passing_static: self.files_passing_static + o.files_passing_static,
            issues_remaining: self.issues_remaining + o.issues_remaining,
            files_ranked_high: self.files_ranked_high + o.files_ranked_high,
            files_ranked_low: self.files_ranked_low + o.files_ranked_low,
        }
    }
}

/// Counts plus their ratios, all relative to files flagged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(flatten)]
    pub counts: Counts,
    pub avg_issues_per_file: String,
    pub files_passing_static_pct: String,
    pub avg_issues_remaining_per_file: String,
    pub files_ranked_high_pct: String,
    pub files_ranked_low_pct: String,
}

impl Metrics {
    pub fn from_counts(c: Counts) -> Self {
        let n = c.files_flagged;
        Self {
            counts: c,
            avg_issues_per_file: format_ratio(c.issues_flagged, n),
            files_passing_static_pct: format_percent(c.files_passing_static, n),
            avg_issues_remaining_per_file: format_ratio(c.issues_remaining, n),
            files_ranked_high_pct: format_percent(c.files_ranked_high, n),
            files_ranked_low_pct: format_percent(c.files_ranked_low, n),
        }
    }

    /// Table cells in column order: files flagged, issues flagged, files
    /// passing, issues remaining, ranked high, ranked low.
    pub fn cells(&self) -> [String; 6] {
        let c = &self.counts;
        [
            format!(
                "{} ({})",
                c.files_flagged,
                format_percent(c.files_flagged, c.files_flagged)
            ),
            format!("{} ({})", c.issues_flagged, self.avg_issues_per_file),
            format!(
                "{} ({})",
                c.files_passing_static, self.files_passing_static_pct
            ),
            format!(
                "{} ({})",
                c.issues_remaining, self.avg_issues_remaining_per_file
            ),
            format!("{} ({})", c.files_ranked_high, self.files_ranked_high_pct),
            format!("{} ({})", c.files_ranked_low, self.files_ranked_low_pct),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateScore {
    /// `s<sample_index>`.
    pub candidate: String,
    pub rank: usize,
    pub score: ScoreValue,
    pub reason: String,
    pub changed_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub candidate: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRow {
    pub file: String,
    pub violations_before: usize,
    pub prompt_units: usize,
    /// Candidates assembled from successful samples.
    pub candidates_generated: usize,
    pub candidates_unique: usize,
    pub syntax_rejected: Vec<Rejection>,
    pub candidates_validated: usize,
    pub candidates_passed: usize,
    pub min_violations_remaining: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<FileClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_candidate: Option<String>,
    pub scores: Vec<CandidateScore>,
    /// Infrastructure failure that stopped processing of this file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FileRow {
    pub fn counts(&self) -> Counts {
        let passing = self.candidates_passed > 0;
        Counts {
            files_flagged: 1,
            issues_flagged: self.violations_before,
            files_passing_static: usize::from(passing),
            issues_remaining: if passing {
                0
            } else {
                self.min_violations_remaining
            },
            files_ranked_high: usize::from(self.class == Some(FileClass::RankedHigh)),
            files_ranked_low: usize::from(self.class == Some(FileClass::RankedLow)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub tool: String,
    pub title: String,
    pub metrics: Metrics,
    pub infrastructure_errors: usize,
    pub files: Vec<FileRow>,
}

impl CheckReport {
    /// Builds the report for one check; rows are sorted by file.
    pub fn new(check_id: &str, tool: &str, title: &str, mut files: Vec<FileRow>) -> Self {
        files.sort_by(|a, b| a.file.cmp(&b.file));
        let counts = files
            .iter()
            .map(FileRow::counts)
            .fold(Counts::default(), |a, b| a + b);
        Self {
            check_id: check_id.to_string(),
            tool: tool.to_string(),
            title: title.to_string(),
            metrics: Metrics::from_counts(counts),
            infrastructure_errors: files.iter().filter(|f| f.error.is_some()).count(),
            files,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub checks: Vec<CheckReport>,
    /// Raw counts summed over all checks.
    pub aggregate: Metrics,
}

impl PipelineReport {
    pub fn new(checks: Vec<CheckReport>) -> Self {
        let counts = checks
            .iter()
            .map(|c| c.metrics.counts)
            .fold(Counts::default(), |a, b| a + b);
        Self {
            schema_version: SCHEMA_VERSION,
            checks,
            aggregate: Metrics::from_counts(counts),
        }
    }

    pub fn infrastructure_errors(&self) -> usize {
        self.checks.iter().map(|c| c.infrastructure_errors).sum()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let report: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported report schema_version {} (expected {SCHEMA_VERSION})",
                report.schema_version
            ));
        }
        Ok(report)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Check | #Files flagged | #Issues flagged (Avg. per file) | #Files passing static checks (%) | #Issues remaining (Avg. per file) | #Files ranked high (%) | #Files ranked low (%) |\n");
        out.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
        let mut row = |label: &str, m: &Metrics| {
            let _ = writeln!(out, "| {label} | {} |", m.cells().join(" | "));
        };
        for c in &self.checks {
            row(&c.check_id, &c.metrics);
        }
        if self.checks.len() != 1 {
            row("**All checks**", &self.aggregate);
        }
        for c in &self.checks {
            let _ = writeln!(out, "\n## {}\n", c.check_id);
            out.push_str("| File | Issues | Candidates (unique) | Passed | Remaining | Class | Best | Scores |\n");
            out.push_str("|---|---:|---:|---:|---:|---|---|---|\n");
            for f in &c.files {
                let class = match (&f.error, f.class) {
                    (Some(e), _) => format!("error: {}", e.replace('|', "\\|")),
                    (None, Some(FileClass::RankedHigh)) => "high".into(),
                    (None, Some(FileClass::RankedLow)) => "low".into(),
                    (None, None) => "not passing".into(),
                };
                let scores: Vec<String> = f
                    .scores
                    .iter()
                    .map(|s| format!("{}={}", s.candidate, s.score.as_u8()))
                    .collect();
                let _ = writeln!(
                    out,
                    "| {} | {} | {} ({}) | {} | {} | {} | {} | {} |",
                    f.file,
                    f.violations_before,
                    f.candidates_generated,
                    f.candidates_unique,
                    f.candidates_passed,
                    f.counts().issues_remaining,
                    class,
                    f.best_candidate.as_deref().unwrap_or(NOT_APPLICABLE),
                    scores.join(", "),
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormatKind {
    Json,
    Markdown,
}

/// Writes `report.json` and/or `report.md` into `out_dir`.
pub fn emit_report(
    report: &PipelineReport,
    formats: &[ReportFormatKind],
    out_dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for format in formats {
        let (name, body) = match format {
            ReportFormatKind::Json => ("report.json", report.to_json()),
            ReportFormatKind::Markdown => ("report.md", report.to_markdown()),
        };
        let path = out_dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

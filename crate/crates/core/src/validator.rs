//! Re-running the configured check on each candidate revision.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::AnalyzerAdapter;
use crate::revision::CandidateRevision;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    /// Index into the validated candidate list.
    pub candidate: usize,
    pub violations_after: usize,
    pub passed: bool,
    /// Set when the analyzer failed on this candidate; such candidates
    /// never pass and keep the original violation count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileOutcome {
    pub file: String,
    pub candidates_passed: usize,
    pub min_violations_remaining: usize,
}

/// Writes each candidate into its own directory under `scratch_root`
/// (`s<sample_index>/<file>`), runs the analyzer there and counts the
/// remaining `check_id` violations in the revised file.
///
/// Analyzer failures are contained per candidate. Outcomes come back in
/// candidate order.
pub fn validate_candidates(
    adapter: &dyn AnalyzerAdapter,
    check_id: &str,
    scratch_root: &Path,
    original_count: usize,
    candidates: &[CandidateRevision],
) -> Vec<ValidationOutcome> {
    candidates
        .par_iter()
        .enumerate()
        .map(|(i, candidate)| {
            let failed = |error: String| {
                tracing::warn!(file = %candidate.file, sample = candidate.origin.sample_index, %error, "validation failed");
                ValidationOutcome {
                    candidate: i,
                    violations_after: original_count,
                    passed: false,
                    error: Some(error),
                }
            };
            let workspace = scratch_root.join(format!("s{}", candidate.origin.sample_index));
            let target = workspace.join(&candidate.file);
            let written = target
                .parent()
                .map_or(Ok(()), std::fs::create_dir_all)
                .and_then(|_| std::fs::write(&target, &candidate.revised_content));
            if let Err(e) = written {
                return failed(format!("writing scratch copy: {e}"));
            }
            match adapter.run(check_id, &workspace) {
                Ok(report) => {
                    let after = report.count(check_id, &candidate.file);
                    ValidationOutcome {
                        candidate: i,
                        violations_after: after,
                        passed: after == 0,
                        error: None,
                    }
                }
                Err(e) => failed(e.to_string()),
            }
        })
        .collect()
}

/// Per-file pass count and residual violations: zero when any candidate
/// passed, else the fewest left by any candidate. With no outcomes at all
/// the original count stands.
pub fn summarize_file(
    file: &str,
    outcomes: &[ValidationOutcome],
    original_count: usize,
) -> FileOutcome {
    let candidates_passed = outcomes.iter().filter(|o| o.passed).count();
    let min_violations_remaining = if candidates_passed > 0 {
        0
    } else {
        outcomes
            .iter()
            .map(|o| o.violations_after)
            .min()
            .unwrap_or(original_count)
    };
    FileOutcome {
        file: file.to_string(),
        candidates_passed,
        min_violations_remaining,
    }
}

use serde_json::Value;

use super::{normalize_path, AnalysisError, AnalysisReport, Ingested, Violation};

/// Parses a SonarQube issues-search style document (`issues[].rule`,
/// `.line`, `.message`, `.component`). A `textRange`, when present, supplies
/// the line span; issues without any line are dropped.
pub fn parse_sonar_issues(bytes: &[u8]) -> Result<Ingested, AnalysisError> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| AnalysisError::Parse(e.to_string()))?;
    let issues = doc
        .get("issues")
        .and_then(Value::as_array)
        .ok_or_else(|| AnalysisError::Parse("document has no `issues` array".into()))?;

    let mut violations = Vec::new();
    let mut dropped = 0;
    for issue in issues {
        let rule = issue
            .get("rule")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| AnalysisError::Parse("issue without `rule`".into()))?;
        let message = issue
            .get("message")
            .and_then(Value::as_str)
            .ok_or_else(|| AnalysisError::Parse(format!("issue for `{rule}` without `message`")))?;

        let start = issue
            .pointer("/textRange/startLine")
            .or_else(|| issue.get("line"))
            .and_then(Value::as_u64)
            .filter(|&l| l >= 1);
        let Some(start) = start else {
            dropped += 1;
            continue;
        };
        let end = issue
            .pointer("/textRange/endLine")
            .and_then(Value::as_u64)
            .unwrap_or(start)
            .max(start);

        // Components look like `project-key:path/to/File.java`.
        let file = issue
            .get("component")
            .and_then(Value::as_str)
            .map(|c| c.split_once(':').map_or(c, |(_, path)| path))
            .map(|p| normalize_path(p, None))
            .unwrap_or_default();

        violations.push(Violation::new(
            file,
            start as usize,
            end as usize,
            rule,
            message,
        ));
    }
    Ok(Ingested {
        report: AnalysisReport::new("", violations),
        dropped,
    })
}

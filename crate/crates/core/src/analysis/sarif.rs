use serde_json::Value;

use super::{normalize_path, AnalysisError, AnalysisReport, Ingested, Violation};

/// Parses the subset of SARIF 2.1.0 the pipeline needs: rule id, message
/// text, and the first physical location of each result.
///
/// Results without a start line are dropped and counted in
/// [`Ingested::dropped`].
pub fn parse_sarif_subset(bytes: &[u8]) -> Result<Ingested, AnalysisError> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| AnalysisError::Parse(e.to_string()))?;
    let runs = doc
        .get("runs")
        .and_then(Value::as_array)
        .ok_or_else(|| AnalysisError::Parse("SARIF document has no `runs` array".into()))?;

    let mut violations = Vec::new();
    let mut dropped = 0;
    for run in runs {
        let Some(results) = run.get("results") else {
            continue;
        };
        let results = results
            .as_array()
            .ok_or_else(|| AnalysisError::Parse("`results` is not an array".into()))?;
        for result in results {
            let rule_id = result
                .get("ruleId")
                .and_then(Value::as_str)
                .or_else(|| result.pointer("/rule/id").and_then(Value::as_str))
                .filter(|s| !s.is_empty())
                .ok_or_else(|| AnalysisError::Parse("result without `ruleId`".into()))?;
            let message = result
                .pointer("/message/text")
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    AnalysisError::Parse(format!("result for `{rule_id}` without `message.text`"))
                })?;

            let physical = result.pointer("/locations/0/physicalLocation");
            let start = physical
                .and_then(|p| p.pointer("/region/startLine"))
                .and_then(Value::as_u64)
                .filter(|&l| l >= 1);
            let Some(start) = start else {
                dropped += 1;
                continue;
            };
            let end = physical
                .and_then(|p| p.pointer("/region/endLine"))
                .and_then(Value::as_u64)
                .unwrap_or(start)
                .max(start);
            let file = physical
                .and_then(|p| p.pointer("/artifactLocation/uri"))
                .and_then(Value::as_str)
                .map(|u| normalize_path(u, None))
                .unwrap_or_default();

            violations.push(Violation::new(
                file,
                start as usize,
                end as usize,
                rule_id,
                message,
            ));
        }
    }
    Ok(Ingested {
        report: AnalysisReport::new("", violations),
        dropped,
    })
}

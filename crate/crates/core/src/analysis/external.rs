use std::path::Path;
use std::process::Command;

use super::{normalize_path, AnalysisError, AnalysisReport, AnalyzerAdapter, ReportFormat};

/// An analyzer invoked as a subprocess.
///
/// The command template is split shell-style and must mention the
/// `{check}`, `{workspace}` and `{out}` placeholders; the process is
/// expected to write its report to `{out}` in `format`.
#[derive(Debug, Clone)]
pub struct ExternalAnalyzer {
    argv: Vec<String>,
    format: ReportFormat,
}

impl ExternalAnalyzer {
    pub fn new(command_template: &str, format: ReportFormat) -> Result<Self, AnalysisError> {
        for placeholder in ["{check}", "{workspace}", "{out}"] {
            if !command_template.contains(placeholder) {
                return Err(AnalysisError::Config(format!(
                    "analyzer command must contain the {placeholder} placeholder"
                )));
            }
        }
        let argv = shlex::split(command_template)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| {
                AnalysisError::Config(format!(
                    "cannot split analyzer command `{command_template}`"
                ))
            })?;
        Ok(Self { argv, format })
    }
}

impl AnalyzerAdapter for ExternalAnalyzer {
    fn run(&self, check_id: &str, workspace: &Path) -> Result<AnalysisReport, AnalysisError> {
        let scratch = tempfile::tempdir()?;
        let out = scratch.path().join("report.out");
        let ws = workspace.to_string_lossy();
        let out_s = out.to_string_lossy();
        let args: Vec<String> = self
            .argv
            .iter()
            .map(|a| {
                a.replace("{check}", check_id)
                    .replace("{workspace}", &ws)
                    .replace("{out}", &out_s)
            })
            .collect();

        let output = Command::new(&args[0])
            .args(&args[1..])
            .output()
            .map_err(|source| AnalysisError::Spawn {
                program: args[0].clone(),
                source,
            })?;

        if !out.exists() {
            if output.status.success() {
                return Ok(AnalysisReport::new(ws.to_string(), Vec::new()));
            }
            let stderr = String::from_utf8_lossy(&output.stderr);
            let tail: String = stderr
                .chars()
                .rev()
                .take(400)
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            return Err(AnalysisError::Crashed {
                status: output.status.to_string(),
                stderr: tail,
            });
        }

        let bytes = std::fs::read(&out)?;
        let ingested = self.format.parse(&bytes)?;
        if ingested.dropped > 0 {
            tracing::warn!(
                dropped = ingested.dropped,
                "analyzer results without line information were dropped"
            );
        }
        let canonical = workspace.canonicalize().ok();
        let violations = ingested
            .report
            .violations
            .into_iter()
            .map(|mut v| {
                v.file = normalize_path(&v.file, Some(workspace));
                if let Some(c) = &canonical {
                    v.file = normalize_path(&v.file, Some(c));
                }
                v
            })
            .collect();
        Ok(AnalysisReport::new(ws.to_string(), violations))
    }
}

/// Convenience wrapper: build an [`ExternalAnalyzer`] and run it once.
pub fn run_external_analyzer(
    command_template: &str,
    format: ReportFormat,
    check_id: &str,
    workspace: &Path,
) -> Result<AnalysisReport, AnalysisError> {
    ExternalAnalyzer::new(command_template, format)?.run(check_id, workspace)
}

//! A line-pattern analyzer. It stands in for a real static analysis tool so
//! the whole pipeline can run hermetically.

use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;

use super::{AnalysisError, AnalysisReport, AnalyzerAdapter, Violation};

#[derive(Debug, Clone)]
pub struct ToyRule {
    pub rule_id: String,
    pattern: Regex,
    message: Option<String>,
}

impl ToyRule {
    pub fn new(rule_id: impl Into<String>, pattern: &str) -> Result<Self, AnalysisError> {
        let pattern = Regex::new(pattern).map_err(|e| AnalysisError::InvalidPattern {
            pattern: pattern.to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            rule_id: rule_id.into(),
            pattern,
            message: None,
        })
    }

    pub fn with_message(mut self, message: impl Into<String>) -> Self {
        self.message = Some(message.into());
        self
    }

    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }

    fn message_for(&self, line: &str) -> String {
        match &self.message {
            Some(m) => m.clone(),
            None => format!(
                "Line matches the `{}` pattern: `{}`",
                self.rule_id,
                line.trim()
            ),
        }
    }
}

/// One violation per (line, rule) match in `file_content`.
pub fn toy_analyzer(rules: &[ToyRule], file: &str, file_content: &str) -> AnalysisReport {
    let mut violations = Vec::new();
    for (idx, line) in file_content.lines().enumerate() {
        for rule in rules {
            if rule.pattern.is_match(line) {
                violations.push(Violation::new(
                    file,
                    idx + 1,
                    idx + 1,
                    &rule.rule_id,
                    rule.message_for(line),
                ));
            }
        }
    }
    AnalysisReport::new(file, violations)
}

/// Adapter running [`toy_analyzer`] over every file in a workspace.
#[derive(Debug, Clone, Default)]
pub struct ToyAdapter {
    rules: Vec<ToyRule>,
}

impl ToyAdapter {
    pub fn new(rules: Vec<ToyRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[ToyRule] {
        &self.rules
    }
}

impl AnalyzerAdapter for ToyAdapter {
    fn run(&self, check_id: &str, workspace: &Path) -> Result<AnalysisReport, AnalysisError> {
        let rules: Vec<ToyRule> = self
            .rules
            .iter()
            .filter(|r| r.rule_id == check_id)
            .cloned()
            .collect();
        if rules.is_empty() {
            return Err(AnalysisError::Config(format!(
                "toy analyzer has no rule for `{check_id}`"
            )));
        }
        let mut files = Vec::new();
        collect_files(workspace, &mut files)?;
        files.sort();

        let mut violations = Vec::new();
        for path in files {
            // Binary and non-UTF-8 files are not analyzable.
            let Ok(content) = fs::read_to_string(&path) else {
                continue;
            };
            let rel = path
                .strip_prefix(workspace)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            violations.extend(toy_analyzer(&rules, &rel, &content).violations);
        }
        Ok(AnalysisReport::new(
            workspace.display().to_string(),
            violations,
        ))
    }
}

pub(crate) fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        let ty = entry.file_type()?;
        if ty.is_dir() {
            collect_files(&entry.path(), out)?;
        } else if ty.is_file() {
            out.push(entry.path());
        }
    }
    Ok(())
}

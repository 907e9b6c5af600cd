//! Turning model responses into full-file candidate revisions, and the
//! cheap screens (dedup, syntax) applied before re-running the analyzer.

use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::PromptUnit;
use crate::diff::unified_diff;
use crate::lang::{scan, Language};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RevisionError {
    #[error("lines {start}..{end} are outside a file of {line_count} lines")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        line_count: usize,
    },
    #[error("{units} prompt units but {outputs} outputs")]
    MisalignedOutputs { units: usize, outputs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    /// Indices of the prompt units whose outputs were patched in.
    pub units: Vec<usize>,
    pub temperature: f64,
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRevision {
    pub file: String,
    pub revised_content: String,
    pub origin: Origin,
    pub diff_text: String,
}

impl CandidateRevision {
    pub fn id(&self) -> String {
        format!("s{}", self.origin.sample_index)
    }
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn is_blank(line: &str) -> bool {
    line.trim().is_empty()
}

/// Pulls code out of a model response. Fenced blocks win (concatenated with
/// newlines); otherwise the whole response minus leading and trailing blank
/// lines. The result has no trailing newline.
pub fn extract_code(response: &str) -> String {
    let lines: Vec<&str> = response.lines().collect();
    if lines.iter().any(|l| is_fence(l)) {
        let mut bodies: Vec<String> = Vec::new();
        let mut current: Option<Vec<&str>> = None;
        for line in &lines {
            if is_fence(line) {
                match current.take() {
                    Some(body) => bodies.push(body.join("\n")),
                    None => current = Some(Vec::new()),
                }
            } else if let Some(body) = current.as_mut() {
                body.push(line);
            }
        }
        // an unterminated fence runs to the end of the response
        if let Some(body) = current {
            bodies.push(body.join("\n"));
        }
        return bodies.join("\n");
    }
    let start = lines.iter().position(|l| !is_blank(l));
    let end = lines.iter().rposition(|l| !is_blank(l));
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

/// Replaces lines `start..=end` of `original` with `generated`.
///
/// A newline is added after `generated` when the replaced span ended with
/// one. Blank lines at either edge of the replaced span are kept when
/// `generated` has no blank line at that edge, since extracted code never
/// carries them.
pub fn patch_unit(
    original: &str,
    start: usize,
    end: usize,
    generated: &str,
) -> Result<String, RevisionError> {
    let lines: Vec<&str> = original.split_inclusive('\n').collect();
    let line_count = lines.len().max(1);
    if start == 0 || start > end || end > line_count {
        return Err(RevisionError::SpanOutOfRange {
            start,
            end,
            line_count,
        });
    }
    let span: &[&str] = if lines.is_empty() {
        &[""]
    } else {
        &lines[start - 1..end]
    };

    let mut replacement = String::new();
    if !generated.is_empty() {
        let lead = span.iter().take_while(|l| is_blank(l)).count();
        let gen_starts_blank = generated.lines().next().is_none_or(is_blank);
        if lead < span.len() && !gen_starts_blank {
            replacement.extend(span[..lead].iter().copied());
        }
        replacement.push_str(generated);
        if span.last().is_some_and(|l| l.ends_with('\n')) && !generated.ends_with('\n') {
            replacement.push('\n');
        }
        let trail = span.iter().rev().take_while(|l| is_blank(l)).count();
        let gen_ends_blank =
            generated.lines().last().is_none_or(is_blank) || generated.ends_with("\n\n");
        if trail < span.len() && !gen_ends_blank {
            replacement.extend(span[span.len() - trail..].iter().copied());
        }
    }

    let mut out = String::with_capacity(original.len() + generated.len());
    if !lines.is_empty() {
        out.extend(lines[..start - 1].iter().copied());
    }
    out.push_str(&replacement);
    if !lines.is_empty() {
        out.extend(lines[end..].iter().copied());
    }
    Ok(out)
}

/// Patches every unit's output into `original` and records the diff.
///
/// `outputs[i]` is the raw model response for `units[i]`, all from the same
/// sample index. Units are applied from the bottom of the file up so earlier
/// spans keep their line numbers.
pub fn assemble_candidate(
    file: &str,
    original: &str,
    units: &[PromptUnit],
    outputs: &[String],
    temperature: f64,
    sample_index: usize,
) -> Result<CandidateRevision, RevisionError> {
    if units.len() != outputs.len() {
        return Err(RevisionError::MisalignedOutputs {
            units: units.len(),
            outputs: outputs.len(),
        });
    }
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(units[i].block.start_line));

    let mut content = original.to_string();
    for i in order {
        let block = &units[i].block;
        content = patch_unit(
            &content,
            block.start_line,
            block.end_line,
            &extract_code(&outputs[i]),
        )?;
    }
    Ok(CandidateRevision {
        file: file.to_string(),
        diff_text: unified_diff(file, original, &content),
        revised_content: content,
        origin: Origin {
            units: (0..units.len()).collect(),
            temperature,
            sample_index,
        },
    })
}

fn dedup_key(content: &str) -> String {
    content
        .lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Drops candidates whose content repeats another's, ignoring trailing
/// whitespace on each line. Of each group the lowest (temperature, sample
/// index) survives; survivors keep their input order.
pub fn dedup(candidates: Vec<CandidateRevision>) -> Vec<CandidateRevision> {
    let mut best: HashMap<String, usize> = HashMap::new();
    for (i, c) in candidates.iter().enumerate() {
        let key = dedup_key(&c.revised_content);
        let better = |j: usize| {
            let o = &candidates[j].origin;
            (c.origin.temperature, c.origin.sample_index) < (o.temperature, o.sample_index)
        };
        match best.get(&key) {
            Some(&j) if !better(j) => {}
            _ => {
                best.insert(key, i);
            }
        }
    }
    let mut keep = vec![false; candidates.len()];
    for i in best.into_values() {
        keep[i] = true;
    }
    candidates
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}

pub trait SyntaxChecker: Send + Sync {
    fn check(&self, language: Language, content: &str) -> Result<(), String>;
}

/// Balanced delimiters, terminated strings and comments.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinSyntaxChecker;

impl SyntaxChecker for BuiltinSyntaxChecker {
    fn check(&self, language: Language, content: &str) -> Result<(), String> {
        scan(language, content).map(|_| ())
    }
}

/// Runs a per-language parse-only command on a temporary copy of the
/// content (`{file}` placeholder); languages without a command use the
/// built-in check.
#[derive(Debug, Clone, Default)]
pub struct CommandSyntaxChecker {
    commands: BTreeMap<Language, String>,
}

impl CommandSyntaxChecker {
    pub fn new(commands: BTreeMap<Language, String>) -> Self {
        Self { commands }
    }
}

impl SyntaxChecker for CommandSyntaxChecker {
    fn check(&self, language: Language, content: &str) -> Result<(), String> {
        let Some(template) = self.commands.get(&language) else {
            return BuiltinSyntaxChecker.check(language, content);
        };
        let suffix = match language {
            Language::Python => ".py",
            Language::Java => ".java",
        };
        let mut file = tempfile::Builder::new()
            .suffix(suffix)
            .tempfile()
            .map_err(|e| format!("creating scratch file: {e}"))?;
        file.write_all(content.as_bytes())
            .map_err(|e| format!("writing scratch file: {e}"))?;
        let path = file.path().to_string_lossy().into_owned();
        let argv: Vec<String> = shlex::split(template)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| format!("cannot split syntax command `{template}`"))?
            .into_iter()
            .map(|a| a.replace("{file}", &path))
            .collect();
        match Command::new(&argv[0]).args(&argv[1..]).output() {
            Ok(out) if out.status.success() => Ok(()),
            Ok(out) => {
                let msg = String::from_utf8_lossy(&out.stderr);
                let last = msg
                    .lines()
                    .rev()
                    .find(|l| !l.trim().is_empty())
                    .unwrap_or("")
                    .trim();
                Err(format!("{} rejected the revision: {last}", argv[0]))
            }
            Err(e) => {
                tracing::warn!(command = %argv[0], error = %e, "syntax command unavailable; using built-in check");
                BuiltinSyntaxChecker.check(language, content)
            }
        }
    }
}

/// Splits candidates by syntax verdict. Empty or whitespace-only revisions
/// are always rejected; with no known language that is the only check.
pub fn screen_syntax(
    checker: &dyn SyntaxChecker,
    language: Option<Language>,
    candidates: Vec<CandidateRevision>,
) -> (Vec<CandidateRevision>, Vec<(CandidateRevision, String)>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for c in candidates {
        if c.revised_content.trim().is_empty() {
            rejected.push((c, "empty revision".to_string()));
            continue;
        }
        match language.map_or(Ok(()), |l| checker.check(l, &c.revised_content)) {
            Ok(()) => kept.push(c),
            Err(reason) => rejected.push((c, reason)),
        }
    }
    (kept, rejected)
}

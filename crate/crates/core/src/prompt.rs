//! Prompt rendering for the proposer (code revision) and ranker (diff
//! scoring) calls. Templates are fixed; per-check variation comes only from
//! the [`CheckSpec`] text.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::CheckSpec;
use crate::context::{estimate_tokens, BlockIndex, PromptUnit, RelevantBlock};

pub const NO_UNRELATED_REMOVAL: &str =
    "Do not remove any section of the code unrelated to the desired fix.";
pub const BUGGY_CODE_MARKER: &str = "Buggy Code:\n";
pub const FIXED_CODE_CUE: &str = "Fixed Code:";
pub const INTEREST_HEADER: &str = "The following lines are likely to be of interest:";
pub const RELEVANT_HEADER: &str = "The following code blocks are relevant for doing the revision:";

pub const SCORE_RUBRIC: &str = "\
Score 0, if the patch has changes unrelated and unnecessary to fixing the warning (Strong Reject).
Score 1, if the patch has a few correct fixes, but still modifies the original snippet unnecessarily (Weak Reject).
Score 2, if the patch has mostly correct fixes but is still not ideal (Weak Accept).
Score 3, if the patch only makes edits that fix the warning with least impact on any unrelated segments of the original snippet (Strong Accept).";

pub const HALLUCINATION_NOTE: &str = "\
If you find additions or deletions of code snippets that are unrelated to the desired fixes (think LLM hallucinations), it can be categorically scored 0 (Strong Reject). That said, you can make exceptions in very specific cases where you are sure that the additions or deletions do not alter the functional correctness of the code, as outlined next.";

pub const ALLOWED_EXCEPTIONS: &str = "\
Allowed Exceptions:
The following (unrelated) code changes in the diff file can be considered okay and need not come in the way of labeling an otherwise correct code change as accept (score 2 or 3). This list is not exhaustive, but you should get the idea
(a) deleting comments is okay,
(b) rewriting a = a + 1 as a += 1 is okay, even though it may not have anything to do with the warning of interest,
(c) making version specific changes is okay, say changing print (\"hello\") to print \"hello\".";

pub const DISALLOWED_CHANGES: &str = "\
The following (unrelated) code changes in the diff file are NOT considered okay, and you should label the diff file as reject (score 0 or 1) even if it is otherwise correct for the query. This list is not exhaustive, but you should get the idea
(a) deleting or adding a print statement,
(b) optimizing a computation,
(c) changing variable names or introducing typos.";

pub const OUTPUT_INSTRUCTION: &str =
    "Output only the reason and score for the patch below. Do not output anything else.";
pub const DIFF_MARKER: &str = "Diff:\n";
pub const REASON_CUE: &str = "Reason:";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("cannot render a ranker prompt for an empty diff")]
    EmptyDiff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposerPrompt {
    pub description: String,
    pub rubric: String,
    pub relevant: Vec<RelevantBlock>,
    pub code: String,
    pub warnings: Vec<String>,
    pub lines_of_interest: Vec<String>,
    pub rendered_text: String,
    pub estimated_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankerPrompt {
    pub title: String,
    pub diff_text: String,
    pub rendered_text: String,
    pub estimated_tokens: usize,
}

fn p5_header(tool: &str) -> String {
    format!("{tool} warning(s) for the above buggy code:")
}

/// Renders the proposer prompt for one prompt unit.
///
/// `index` supplies the source text of each line of interest; the unit's
/// violations are listed in ascending line order.
pub fn render_proposer_prompt(
    check: &CheckSpec,
    unit: &PromptUnit,
    index: &BlockIndex,
    relevant: &[RelevantBlock],
) -> ProposerPrompt {
    let tool = &check.tool_name;
    let mut covered = unit.covered.clone();
    covered.sort_by_key(|v| (v.start_line, v.end_line));

    let warnings: Vec<String> = covered
        .iter()
        .map(|v| v.message.trim().to_string())
        .collect();
    let mut seen = Vec::new();
    for v in &covered {
        if !seen.contains(&v.start_line) {
            seen.push(v.start_line);
        }
    }
    let lines_of_interest: Vec<String> = seen
        .iter()
        .enumerate()
        .map(|(i, &line)| {
            let text = if line <= index.line_count() {
                index.line(line)
            } else {
                ""
            };
            format!("{}. {}", i + 1, text)
        })
        .collect();

    let mut out = String::new();
    let _ = writeln!(
        out,
        "We are fixing code that has been flagged for the {tool} warning titled \"{}\" which has the following description:",
        check.display_title()
    );
    let _ = writeln!(out, "{}\n", check.description.trim());
    let _ = writeln!(
        out,
        "The recommended way to fix code flagged for this warning is:"
    );
    let _ = writeln!(out, "{}\n", check.fix_rubric.trim());
    if !relevant.is_empty() {
        let _ = writeln!(out, "{RELEVANT_HEADER}");
        for block in relevant {
            let _ = writeln!(out, "{}:", block.label);
            out.push_str(&block.text);
            if !block.text.ends_with('\n') {
                out.push('\n');
            }
            out.push('\n');
        }
    }
    let _ = writeln!(
        out,
        "Modify the Buggy code below to fix the {tool} warning(s). Output the entire code block with appropriate changes. {NO_UNRELATED_REMOVAL}\n"
    );
    out.push_str(BUGGY_CODE_MARKER);
    out.push_str(&unit.block_text);
    out.push_str("\n\n");
    let _ = writeln!(out, "{}", p5_header(tool));
    for w in &warnings {
        let _ = writeln!(out, "{w}");
    }
    out.push('\n');
    let _ = writeln!(out, "{INTEREST_HEADER}");
    for l in &lines_of_interest {
        let _ = writeln!(out, "{l}");
    }
    out.push('\n');
    out.push_str(FIXED_CODE_CUE);
    out.push('\n');

    ProposerPrompt {
        description: check.description.trim().to_string(),
        rubric: check.fix_rubric.trim().to_string(),
        relevant: relevant.to_vec(),
        code: unit.block_text.clone(),
        warnings,
        lines_of_interest,
        estimated_tokens: estimate_tokens(&out),
        rendered_text: out,
    }
}

/// Recovers the code section of a rendered proposer prompt verbatim.
///
/// Returns `None` for text that is not a proposer prompt.
pub fn recover_code(rendered: &str) -> Option<&str> {
    let start = rendered.find(BUGGY_CODE_MARKER)? + BUGGY_CODE_MARKER.len();
    let tail = &rendered[start..];
    // the warnings header is the last "\n\n<tool> warning(s) for the above buggy code:" in the prompt
    let needle = " warning(s) for the above buggy code:\n";
    let header_at = tail.rfind(needle)?;
    let before_header = &tail[..header_at];
    let sep = before_header.rfind("\n\n")?;
    Some(&tail[..sep])
}

/// Renders the ranker prompt asking for a 0–3 score of `diff_text`.
pub fn render_ranker_prompt(
    check: &CheckSpec,
    diff_text: &str,
) -> Result<RankerPrompt, PromptError> {
    if diff_text.trim().is_empty() {
        return Err(PromptError::EmptyDiff);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "You are an expert developer. You are verifying the code generated by LLM to fix the warning titled \"{}\" which has the following description:",
        check.display_title()
    );
    let _ = writeln!(out, "{}\n", check.description.trim());
    let _ = writeln!(
        out,
        "The recommended ways to fix code flagged for this warning are:"
    );
    let _ = writeln!(out, "{}\n", check.fix_rubric.trim());
    let _ = writeln!(
        out,
        "Your task is to assess the quality of the generated patch and rate it on the following evaluation criteria:"
    );
    let _ = writeln!(out, "{SCORE_RUBRIC}\n");
    let _ = writeln!(out, "{HALLUCINATION_NOTE}\n");
    let _ = writeln!(out, "{ALLOWED_EXCEPTIONS}\n");
    let _ = writeln!(out, "{DISALLOWED_CHANGES}\n");
    let _ = writeln!(out, "{OUTPUT_INSTRUCTION}\n");
    out.push_str(DIFF_MARKER);
    out.push_str(diff_text);
    if !diff_text.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(REASON_CUE);
    out.push('\n');

    Ok(RankerPrompt {
        title: check.display_title().to_string(),
        diff_text: diff_text.to_string(),
        estimated_tokens: estimate_tokens(&out),
        rendered_text: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Violation;
    use crate::context::{cover_violations, ByteEstimator, CoverOptions};

    fn check() -> CheckSpec {
        CheckSpec::new(
            "py/missing-equals",
            "CodeQL",
            "`__eq__` not overridden when adding attributes",
            "A class that defines attributes that are not present in its superclasses may need to override the __eq__() method (__ne__() should also be defined).",
            "Override __eq__ method to also test for equality of added attributes.",
        )
    }

    fn unit_for(src: &str, lines: &[usize]) -> (BlockIndex, PromptUnit) {
        let idx = BlockIndex::whole_file_only(src);
        let vs: Vec<_> = lines
            .iter()
            .map(|&l| {
                Violation::new(
                    "f.py",
                    l,
                    l,
                    "py/missing-equals",
                    format!("message for {l}"),
                )
            })
            .collect();
        let unit = cover_violations(&idx, &vs, CoverOptions::new(4000), &ByteEstimator)
            .unwrap()
            .remove(0);
        (idx, unit)
    }

    #[test]
    fn proposer_contains_description() {
        let (idx, unit) = unit_for("class A(dict):\n    pass\n", &[1]);
        let p = render_proposer_prompt(&check(), &unit, &idx, &[]);
        assert!(p
            .rendered_text
            .contains("__eq__() method (__ne__() should also be defined)"));
        assert!(!p.rendered_text.contains(RELEVANT_HEADER));
        assert!(p.rendered_text.ends_with("Fixed Code:\n"));
        assert!(p.rendered_text.contains("1. class A(dict):"));
    }

    #[test]
    fn warnings_in_line_order() {
        let (idx, unit) = unit_for("a\nb\nc\nd\n", &[4, 2]);
        let p = render_proposer_prompt(&check(), &unit, &idx, &[]);
        let first = p.rendered_text.find("message for 2").unwrap();
        let second = p.rendered_text.find("message for 4").unwrap();
        assert!(first < second);
        assert_eq!(p.lines_of_interest, vec!["1. b", "2. d"]);
    }

    #[test]
    fn relevant_section_optional() {
        let (idx, unit) = unit_for("x = 1\n", &[1]);
        let rel = [RelevantBlock {
            label: "enclosing class".into(),
            text: "class Q:\n    pass".into(),
        }];
        let p = render_proposer_prompt(&check(), &unit, &idx, &rel);
        let r = p.rendered_text.find(RELEVANT_HEADER).unwrap();
        assert!(r < p.rendered_text.find(BUGGY_CODE_MARKER).unwrap());
        assert!(r > p.rendered_text.find("Override __eq__").unwrap());
    }

    #[test]
    fn code_recoverable_and_deterministic() {
        for src in [
            "",
            "x\n",
            "a\n\n\nb",
            "weird\n\nCodeQL warning(s) for the above buggy code:\nstill code\n",
        ] {
            let idx = BlockIndex::whole_file_only(src);
            let unit = PromptUnit {
                block: idx.root().clone(),
                block_text: src.to_string(),
                covered: vec![Violation::new("f", 1, 1, "r", "m")],
                estimated_tokens: 0,
            };
            let p = render_proposer_prompt(&check(), &unit, &idx, &[]);
            assert_eq!(recover_code(&p.rendered_text), Some(src), "{src:?}");
            assert_eq!(p, render_proposer_prompt(&check(), &unit, &idx, &[]));
        }
        assert_eq!(recover_code("no markers here"), None);
    }

    #[test]
    fn ranker_template() {
        let diff = "--- a/f.py\n+++ b/f.py\n@@ -1,2 +1,3 @@\n a\n+b\n c\n";
        let p = render_ranker_prompt(&check(), diff).unwrap();
        assert_eq!(p.rendered_text.matches("Strong Accept").count(), 1);
        assert_eq!(p.rendered_text.matches("@@ -1,2 +1,3 @@").count(), 1);
        let diff_at = p.rendered_text.find(diff).unwrap();
        for part in [
            SCORE_RUBRIC,
            ALLOWED_EXCEPTIONS,
            DISALLOWED_CHANGES,
            OUTPUT_INSTRUCTION,
        ] {
            assert!(p.rendered_text.find(part).unwrap() < diff_at);
        }
        assert!(p.rendered_text.ends_with("Reason:\n"));
        assert_eq!(
            render_ranker_prompt(&check(), ""),
            Err(PromptError::EmptyDiff)
        );
    }
}

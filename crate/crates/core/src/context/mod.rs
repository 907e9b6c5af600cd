//! Source context for prompts: the block hierarchy of a file, token
//! estimates, and the procedure that splits a file's violations into prompt
//! units that each fit the token budget.

mod blocks;
mod parse;
mod relevant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Violation;
use crate::lang::Language;

pub use blocks::{BlockId, BlockIndex, BlockKind, BlockSpan, CodeBlock};
pub use parse::build_block_index;
pub use relevant::{fetch_relevant_blocks, symbols_in_message, RelevantBlock};

/// Default half-width of the line-window fallback.
pub const DEFAULT_WINDOW_LINES: usize = 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("no block parser registered for `{0}`")]
    UnsupportedLanguage(String),
    #[error("token budget must be positive")]
    ZeroBudget,
    #[error("line {line} alone needs {tokens} tokens, over the budget of {budget}")]
    BudgetTooSmall {
        line: usize,
        tokens: usize,
        budget: usize,
    },
    #[error("violation at line {line} is outside the file ({line_count} lines)")]
    LineOutOfRange { line: usize, line_count: usize },
}

/// Estimates prompt tokens for a piece of text. Implementations must be
/// monotone: a longer text never estimates lower than its prefix.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(bytes / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteEstimator;

impl TokenEstimator for ByteEstimator {
    fn estimate(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    ByteEstimator.estimate(text)
}

/// Parses `source` with the block parser for `language` name.
pub fn build_block_index_for(source: &str, language: &str) -> Result<BlockIndex, ContextError> {
    let lang: Language = language
        .parse()
        .map_err(|_| ContextError::UnsupportedLanguage(language.to_string()))?;
    Ok(build_block_index(source, lang))
}

/// One proposer prompt's worth of code and the violations it addresses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptUnit {
    pub block: CodeBlock,
    pub block_text: String,
    pub covered: Vec<Violation>,
    pub estimated_tokens: usize,
}

impl PromptUnit {
    pub fn first_line(&self) -> usize {
        self.covered[0].start_line
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverOptions {
    pub budget: usize,
    pub window_lines: usize,
}

impl CoverOptions {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            window_lines: DEFAULT_WINDOW_LINES,
        }
    }
}

/// Partitions `violations` into prompt units.
///
/// A file whose text fits the budget becomes a single unit. Otherwise the
/// first uncovered violation picks the largest block on its ancestor chain
/// that still fits, that block absorbs every uncovered violation starting
/// inside it, and the process repeats. A violation whose innermost block is
/// already too large gets a window of lines around it instead, shrunk by
/// halving until it fits and kept clear of child blocks and earlier units so
/// unit spans never overlap.
pub fn cover_violations(
    index: &BlockIndex,
    violations: &[Violation],
    options: CoverOptions,
    estimator: &dyn TokenEstimator,
) -> Result<Vec<PromptUnit>, ContextError> {
    if options.budget == 0 {
        return Err(ContextError::ZeroBudget);
    }
    let mut pending: Vec<Violation> = violations.to_vec();
    pending.sort_by(|a, b| {
        (a.start_line, a.end_line, &a.rule_id, &a.message).cmp(&(
            b.start_line,
            b.end_line,
            &b.rule_id,
            &b.message,
        ))
    });
    if pending.is_empty() {
        return Ok(Vec::new());
    }
    let line_count = index.line_count();
    if let Some(v) = pending
        .iter()
        .find(|v| v.start_line == 0 || v.start_line > line_count)
    {
        return Err(ContextError::LineOutOfRange {
            line: v.start_line,
            line_count,
        });
    }

    let whole_tokens = estimator.estimate(index.text(BlockIndex::ROOT));
    if whole_tokens <= options.budget {
        return Ok(vec![PromptUnit {
            block: index.root().clone(),
            block_text: index.text(BlockIndex::ROOT).to_string(),
            covered: pending,
            estimated_tokens: whole_tokens,
        }]);
    }

    let mut covered = vec![false; pending.len()];
    let mut units: Vec<PromptUnit> = Vec::new();
    for i in 0..pending.len() {
        if covered[i] {
            continue;
        }
        let line = pending[i].start_line;
        let innermost = index.innermost(line);

        let mut chosen = None;
        for id in index.ancestors(innermost) {
            let tokens = estimator.estimate(index.text(id));
            if tokens <= options.budget {
                chosen = Some((id, tokens));
            } else {
                break;
            }
        }

        let (block, text, tokens) = match chosen {
            Some((id, tokens)) => (index.block(id).clone(), index.text(id).to_string(), tokens),
            None => line_window(index, innermost, line, &units, options, estimator)?,
        };

        let mut members = Vec::new();
        for (j, v) in pending.iter().enumerate() {
            if !covered[j] && block.contains_line(v.start_line) {
                covered[j] = true;
                members.push(v.clone());
            }
        }
        units.push(PromptUnit {
            block,
            block_text: text,
            covered: members,
            estimated_tokens: tokens,
        });
    }
    Ok(units)
}

fn line_window(
    index: &BlockIndex,
    innermost: BlockId,
    line: usize,
    emitted: &[PromptUnit],
    options: CoverOptions,
    estimator: &dyn TokenEstimator,
) -> Result<(CodeBlock, String, usize), ContextError> {
    let scope = index.block(innermost);
    let mut lo = scope.start_line;
    let mut hi = scope.end_line;
    let fences = index
        .children(innermost)
        .iter()
        .map(|&c| (index.block(c).start_line, index.block(c).end_line))
        .chain(
            emitted
                .iter()
                .map(|u| (u.block.start_line, u.block.end_line)),
        );
    for (start, end) in fences {
        if end < line {
            lo = lo.max(end + 1);
        } else if start > line {
            hi = hi.min(start - 1);
        }
    }

    let mut half = options.window_lines;
    loop {
        let start = lo.max(line.saturating_sub(half));
        let end = hi.min(line + half);
        let text = index.text_of_lines(start, end);
        let tokens = estimator.estimate(text);
        if tokens <= options.budget {
            let block = CodeBlock {
                kind: BlockKind::LineWindow,
                name: None,
                start_line: start,
                end_line: end,
                parent: Some(innermost),
            };
            return Ok((block, text.to_string(), tokens));
        }
        if half == 0 {
            return Err(ContextError::BudgetTooSmall {
                line,
                tokens,
                budget: options.budget,
            });
        }
        half /= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(line: usize) -> Violation {
        Violation::new("f.py", line, line, "r", format!("m{line}"))
    }

    /// `n` lines of `width` bytes each (plus newline).
    fn filler(n: usize, width: usize) -> String {
        (0..n)
            .map(|i| format!("{:<w$}\n", format!("# {i}"), w = width))
            .collect()
    }

    #[test]
    fn estimator_formula() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("12345678"), 2);
        assert_eq!(estimate_tokens("123456789"), 3);
        let (a, b) = ("abc", "defghij");
        let joined = format!("{a}{b}");
        assert!(estimate_tokens(&joined) >= estimate_tokens(a).max(estimate_tokens(b)));
    }

    #[test]
    fn small_file_single_unit() {
        let src = filler(100, 7); // 800 bytes → 200 tokens
        let idx = BlockIndex::whole_file_only(&src);
        let units = cover_violations(
            &idx,
            &[v(90), v(3)],
            CoverOptions::new(4000),
            &ByteEstimator,
        )
        .unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].block.kind, BlockKind::WholeFile);
        assert_eq!(units[0].estimated_tokens, 200);
        let lines: Vec<_> = units[0].covered.iter().map(|v| v.start_line).collect();
        assert_eq!(lines, vec![3, 90]);
    }

    #[test]
    fn class_and_function_units() {
        // 100 lines of 8 bytes: class A 10..60 (51 lines = 102 tokens), g 75..85.
        let src = filler(100, 7);
        let idx = BlockIndex::from_spans(
            &src,
            vec![
                BlockSpan::new(BlockKind::ClassLike, Some("A"), 10, 60),
                BlockSpan::new(BlockKind::FunctionLike, Some("h"), 12, 20),
                BlockSpan::new(BlockKind::ClassLike, Some("B"), 70, 99),
                BlockSpan::new(BlockKind::FunctionLike, Some("g"), 75, 85),
            ],
        )
        .unwrap();
        // B is 30 lines = 60 tokens, so budget 59 forces g for line 80.
        let units = cover_violations(
            &idx,
            &[v(15), v(40), v(80)],
            CoverOptions::new(150),
            &ByteEstimator,
        )
        .unwrap();
        let got: Vec<_> = units
            .iter()
            .map(|u| {
                (
                    u.block.name.clone(),
                    u.covered.iter().map(|v| v.start_line).collect::<Vec<_>>(),
                )
            })
            .collect();
        assert_eq!(
            got,
            vec![
                (Some("A".into()), vec![15, 40]),
                (Some("B".into()), vec![80])
            ]
        );
        let units = cover_violations(
            &idx,
            &[v(15), v(40), v(80)],
            CoverOptions::new(105),
            &ByteEstimator,
        )
        .unwrap();
        let names: Vec<_> = units
            .iter()
            .map(|u| u.block.name.clone().unwrap())
            .collect();
        assert_eq!(names, vec!["A", "B"]);
        let units = cover_violations(
            &idx,
            &[v(15), v(40), v(80)],
            CoverOptions::new(59),
            &ByteEstimator,
        )
        .unwrap();
        let got: Vec<_> = units
            .iter()
            .map(|u| (u.block.kind, u.block.name.clone()))
            .collect();
        assert_eq!(got[0], (BlockKind::FunctionLike, Some("h".into())));
        assert_eq!(
            got.last().unwrap(),
            &(BlockKind::FunctionLike, Some("g".into()))
        );
    }

    #[test]
    fn oversized_function_uses_line_window() {
        // one function spanning 300 lines of 40 bytes = 3000 tokens
        let src = filler(300, 39);
        let idx = BlockIndex::from_spans(
            &src,
            vec![BlockSpan::new(BlockKind::FunctionLike, Some("big"), 1, 300)],
        )
        .unwrap();
        let units =
            cover_violations(&idx, &[v(150)], CoverOptions::new(200), &ByteEstimator).unwrap();
        assert_eq!(units.len(), 1);
        let u = &units[0];
        assert_eq!(u.block.kind, BlockKind::LineWindow);
        assert!(u.block.contains_line(150));
        assert!(u.estimated_tokens <= 200);
        // half-width 25 → 510 tokens, 12 → 250, 6 → 13 lines = 130 tokens
        assert_eq!((u.block.start_line, u.block.end_line), (144, 156));
        assert_eq!(u.block_text, idx.text_of_lines(144, 156));
    }

    #[test]
    fn single_line_over_budget() {
        let src = filler(10, 399);
        let idx = BlockIndex::whole_file_only(&src);
        let err =
            cover_violations(&idx, &[v(5)], CoverOptions::new(50), &ByteEstimator).unwrap_err();
        assert!(matches!(err, ContextError::BudgetTooSmall { line: 5, .. }));
    }

    #[test]
    fn windows_do_not_overlap_each_other() {
        let src = filler(300, 39);
        let idx = BlockIndex::whole_file_only(&src);
        let units = cover_violations(
            &idx,
            &[v(100), v(140), v(141)],
            CoverOptions::new(200),
            &ByteEstimator,
        )
        .unwrap();
        for pair in units.windows(2) {
            assert!(pair[0].block.end_line < pair[1].block.start_line);
        }
        let total: usize = units.iter().map(|u| u.covered.len()).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn out_of_range_and_zero_budget() {
        let idx = BlockIndex::whole_file_only("a\n");
        assert!(matches!(
            cover_violations(&idx, &[v(3)], CoverOptions::new(10), &ByteEstimator),
            Err(ContextError::LineOutOfRange { .. })
        ));
        assert_eq!(
            cover_violations(&idx, &[v(1)], CoverOptions::new(0), &ByteEstimator),
            Err(ContextError::ZeroBudget)
        );
    }
}

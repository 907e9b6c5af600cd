use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BlockIndex, BlockKind, TokenEstimator};
use crate::analysis::Violation;
use crate::catalog::{HintKind, RelevantBlockHint, SymbolSource};

/// A labelled piece of related code placed in the optional prompt section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevantBlock {
    pub label: String,
    pub text: String,
}

static QUOTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"`([^`]+)`|'([^']+)'|"([^"]+)"|‘([^’]+)’"#).unwrap());
static IDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z_$][\w$]*").unwrap());

/// Identifiers quoted in an analyzer message, in order of appearance.
/// Dotted names contribute their last segment.
pub fn symbols_in_message(message: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for caps in QUOTED.captures_iter(message) {
        let inner = caps
            .iter()
            .skip(1)
            .flatten()
            .next()
            .map(|m| m.as_str())
            .unwrap_or("");
        let inner = inner.trim().trim_end_matches("()");
        let last = inner.rsplit('.').next().unwrap_or(inner);
        if IDENT.find(last).is_some_and(|m| m.as_str() == last) && !out.iter().any(|s| s == last) {
            out.push(last.to_string());
        }
    }
    out
}

/// Resolves a hint against the block index. Unresolvable hints give an
/// empty list. Each returned text is cut to at most `budget / 4` tokens.
pub fn fetch_relevant_blocks(
    index: &BlockIndex,
    hint: &RelevantBlockHint,
    violation: &Violation,
    budget: usize,
    estimator: &dyn TokenEstimator,
) -> Vec<RelevantBlock> {
    let limit = budget / 4;
    let line = violation.start_line;
    let enclosing = |kind: BlockKind| {
        if line == 0 || line > index.line_count() {
            return None;
        }
        index
            .ancestors(index.innermost(line))
            .find(|&id| index.block(id).kind == kind)
    };

    let found: Vec<(String, usize)> = match hint.kind {
        HintKind::EnclosingClass => enclosing(BlockKind::ClassLike)
            .map(|id| vec![("enclosing class".to_string(), id)])
            .unwrap_or_default(),
        HintKind::EnclosingFunction => enclosing(BlockKind::FunctionLike)
            .map(|id| vec![("enclosing function".to_string(), id)])
            .unwrap_or_default(),
        HintKind::NamedSymbolDefinition => {
            let names = match &hint.symbol_source {
                SymbolSource::FixedName(n) => vec![n.clone()],
                SymbolSource::FromWarningMessage => symbols_in_message(&violation.message),
            };
            let mut hits = Vec::new();
            for name in names {
                for (id, block) in index.blocks().iter().enumerate() {
                    let named =
                        matches!(block.kind, BlockKind::ClassLike | BlockKind::FunctionLike);
                    if named
                        && block.name.as_deref() == Some(name.as_str())
                        && !hits.iter().any(|(_, h)| *h == id)
                    {
                        hits.push((format!("definition of `{name}`"), id));
                    }
                }
            }
            hits
        }
    };

    found
        .into_iter()
        .map(|(label, id)| RelevantBlock {
            label,
            text: truncate_to_tokens(index.text(id), limit, estimator).to_string(),
        })
        .collect()
}

/// Longest prefix of `text` (on a char boundary) estimated within `limit`.
fn truncate_to_tokens<'a>(text: &'a str, limit: usize, estimator: &dyn TokenEstimator) -> &'a str {
    if estimator.estimate(text) <= limit {
        return text;
    }
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain([text.len()])
        .collect();
    // bounds[lo] always fits (the empty prefix estimates to zero tokens)
    let (mut lo, mut hi) = (0, bounds.len() - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if estimator.estimate(&text[..bounds[mid]]) <= limit {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    &text[..bounds[lo]]
}

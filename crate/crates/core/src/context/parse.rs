//! Lightweight block parsers. They recover class and function spans well
//! enough to choose prompt context; they are not full grammars.

use std::sync::LazyLock;

use regex::Regex;

use super::blocks::{count_lines, BlockIndex, BlockKind, BlockSpan};
use crate::lang::{scan, Language};

/// Builds the block index for `source`; any lexical failure degrades to a
/// whole-file-only index.
pub fn build_block_index(source: &str, language: Language) -> BlockIndex {
    let spans = match language {
        Language::Python => python_spans(source),
        Language::Java => brace_spans(source),
    };
    match spans {
        Ok(spans) => BlockIndex::from_spans_lenient(source, spans),
        Err(reason) => BlockIndex::whole_file_only(source).with_fallback_reason(reason),
    }
}

static PY_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:async\s+)?(def|class)\s+([A-Za-z_]\w*)").unwrap());

fn indent_width(line: &str) -> usize {
    let mut col = 0;
    for c in line.chars() {
        match c {
            ' ' => col += 1,
            '\t' => col = (col / 8 + 1) * 8,
            _ => break,
        }
    }
    col
}

fn python_spans(source: &str) -> Result<Vec<BlockSpan>, String> {
    let scanned = scan(Language::Python, source)?;
    let n = count_lines(source);

    // Lines that begin a new logical line and carry code.
    let raw_lines: Vec<&str> = source.split('\n').collect();
    let mut logical: Vec<(usize, usize)> = Vec::new(); // (line number, indent)
    for i in 0..n {
        let raw = raw_lines.get(i).copied().unwrap_or("");
        if scanned.starts_in_literal[i] || scanned.depth_at_start[i] > 0 {
            continue;
        }
        let code = &scanned.code[i];
        if code.trim().is_empty() {
            // a string-only line (docstring) still counts as code
            let raw_trim = raw.trim_start();
            if raw_trim.is_empty() || raw_trim.starts_with('#') {
                continue;
            }
        }
        logical.push((i + 1, indent_width(raw)));
    }

    let mut spans = Vec::new();
    for (pos, &(line, indent)) in logical.iter().enumerate() {
        let code = &scanned.code[line - 1];
        let Some(caps) = PY_HEADER.captures(code) else {
            continue;
        };
        let kind = if &caps[1] == "class" {
            BlockKind::ClassLike
        } else {
            BlockKind::FunctionLike
        };
        let terminator = logical[pos + 1..]
            .iter()
            .find(|&&(_, ind)| ind <= indent)
            .map(|&(l, _)| l);
        // The block ends at the last logical line before the terminator; the
        // extent of that logical line covers its continuation lines.
        let last_logical = logical[pos..]
            .iter()
            .take_while(|&&(l, _)| terminator.is_none_or(|t| l < t))
            .last()
            .map(|&(l, _)| l)
            .unwrap_or(line);
        let limit = terminator.map_or(n, |t| t - 1);
        let mut end = last_logical;
        while end < limit && (scanned.starts_in_literal[end] || scanned.depth_at_start[end] > 0) {
            end += 1;
        }
        spans.push(BlockSpan::new(kind, Some(&caps[2]), line, end));
    }
    Ok(spans)
}

static CLASS_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(class|interface|enum|record)\s+([A-Za-z_$][\w$]*)").unwrap());
static FN_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"([A-Za-z_$][\w$]*)\s*\((?:[^()]|\([^()]*\))*\)\s*(?:throws\s+[\w$.,\s<>]+)?$")
        .unwrap()
});
static ANNOTATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"@[\w.]+(?:\s*\([^()]*\))?").unwrap());

const CONTROL_WORDS: &[&str] = &[
    "if",
    "for",
    "while",
    "switch",
    "catch",
    "synchronized",
    "try",
    "return",
    "new",
    "else",
    "do",
    "throw",
    "assert",
    "super",
    "this",
];

fn classify_header(header: &str) -> Option<(BlockKind, String)> {
    let header = ANNOTATION.replace_all(header, " ");
    let header = header.trim();
    if header.is_empty() || header.contains("->") {
        return None;
    }
    if let Some(c) = CLASS_HEADER.captures(header) {
        if !header.contains("new ") && !header.contains('=') && !header.contains('(')
            || c.get(1).unwrap().as_str() == "record"
        {
            return Some((BlockKind::ClassLike, c[2].to_string()));
        }
    }
    if header.contains('=') || header.split_whitespace().any(|w| w == "new") {
        return None;
    }
    let caps = FN_HEADER.captures(header)?;
    let name = caps[1].to_string();
    if CONTROL_WORDS.contains(&name.as_str()) {
        return None;
    }
    Some((BlockKind::FunctionLike, name))
}

fn brace_spans(source: &str) -> Result<Vec<BlockSpan>, String> {
    let scanned = scan(Language::Java, source)?;
    let n = count_lines(source);
    let mut spans = Vec::new();
    let mut open: Vec<Option<(BlockKind, String, usize)>> = Vec::new();
    let mut header = String::new();
    let mut header_start: Option<usize> = None;

    for (idx, line) in scanned.code.iter().enumerate().take(n) {
        let line_no = idx + 1;
        for c in line.chars() {
            match c {
                '{' => {
                    let start = header_start.unwrap_or(line_no);
                    open.push(classify_header(&header).map(|(k, name)| (k, name, start)));
                    header.clear();
                    header_start = None;
                }
                '}' => {
                    if let Some(Some((kind, name, start))) = open.pop() {
                        spans.push(BlockSpan::new(kind, Some(&name), start, line_no));
                    }
                    header.clear();
                    header_start = None;
                }
                ';' => {
                    header.clear();
                    header_start = None;
                }
                c => {
                    if header_start.is_none() && !c.is_whitespace() {
                        header_start = Some(line_no);
                    }
                    header.push(c);
                }
            }
        }
        header.push(' ');
    }
    Ok(spans)
}

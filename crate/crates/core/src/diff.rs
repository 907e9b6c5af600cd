//! Unified diffs between an original file and a candidate revision.

use diffy::DiffOptions;

pub const CONTEXT_LINES: usize = 3;

/// Standard unified diff (`--- a/<file>` / `+++ b/<file>` headers, three
/// lines of context). Identical inputs give an empty string.
pub fn unified_diff(file: &str, original: &str, revised: &str) -> String {
    if original == revised {
        return String::new();
    }
    let patch = DiffOptions::new()
        .set_context_len(CONTEXT_LINES)
        .create_patch(original, revised)
        .to_string();
    let mut out = format!("--- a/{file}\n+++ b/{file}\n");
    // skip the generic headers; empty context lines get their leading space back
    for line in patch.split_inclusive('\n').skip(2) {
        if line == "\n" {
            out.push_str(" \n");
        } else {
            out.push_str(line);
        }
    }
    out
}

/// Number of added plus removed lines.
pub fn changed_line_count(diff: &str) -> usize {
    diff.lines()
        .filter(|l| {
            (l.starts_with('+') && !l.starts_with("+++"))
                || (l.starts_with('-') && !l.starts_with("---"))
        })
        .count()
}

pub fn hunk_count(diff: &str) -> usize {
    diff.lines().filter(|l| l.starts_with("@@ ")).count()
}

use std::cmp::Reverse;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    WholeFile,
    ClassLike,
    FunctionLike,
    LineWindow,
}

impl BlockKind {
    fn nesting_rank(self) -> u8 {
        match self {
            BlockKind::WholeFile => 0,
            BlockKind::ClassLike => 1,
            BlockKind::FunctionLike => 2,
            BlockKind::LineWindow => 3,
        }
    }
}

/// Index of a block inside its [`BlockIndex`].
pub type BlockId = usize;

/// A contiguous, 1-based inclusive line span with a syntactic role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    pub kind: BlockKind,
    pub name: Option<String>,
    pub start_line: usize,
    pub end_line: usize,
    pub parent: Option<BlockId>,
}

impl CodeBlock {
    pub fn contains_line(&self, line: usize) -> bool {
        self.start_line <= line && line <= self.end_line
    }

    pub fn lines(&self) -> RangeInclusive<usize> {
        self.start_line..=self.end_line
    }

    pub fn len(&self) -> usize {
        self.end_line + 1 - self.start_line
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A block as reported by a parser, before it is placed in the forest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpan {
    pub kind: BlockKind,
    pub name: Option<String>,
    pub start_line: usize,
    pub end_line: usize,
}

impl BlockSpan {
    pub fn new(kind: BlockKind, name: Option<&str>, start_line: usize, end_line: usize) -> Self {
        Self {
            kind,
            name: name.map(str::to_string),
            start_line,
            end_line,
        }
    }
}

/// The containment tree of blocks for one source file. Block 0 is always the
/// whole file; every other block has a parent that contains it, and sibling
/// spans never overlap.
#[derive(Debug, Clone)]
pub struct BlockIndex {
    source: String,
    /// Byte offset of the start of each line, plus a final sentinel.
    line_starts: Vec<usize>,
    blocks: Vec<CodeBlock>,
    children: Vec<Vec<BlockId>>,
    fallback_reason: Option<String>,
}

impl BlockIndex {
    /// An index holding only the whole-file block.
    pub fn whole_file_only(source: &str) -> Self {
        Self::assemble(source, Vec::new())
    }

    /// Builds an index from explicit spans, rejecting any that break the
    /// forest invariants.
    pub fn from_spans(source: &str, spans: Vec<BlockSpan>) -> Result<Self, String> {
        let line_count = count_lines(source);
        let nested = nest(line_count, spans, true)?;
        Ok(Self::assemble(source, nested))
    }

    /// Like [`from_spans`](Self::from_spans) but silently discards spans that
    /// would overlap a sibling or duplicate their parent.
    pub(crate) fn from_spans_lenient(source: &str, spans: Vec<BlockSpan>) -> Self {
        let line_count = count_lines(source);
        let nested = nest(line_count, spans, false).expect("lenient nesting never fails");
        Self::assemble(source, nested)
    }

    pub(crate) fn with_fallback_reason(mut self, reason: String) -> Self {
        self.fallback_reason = Some(reason);
        self
    }

    fn assemble(source: &str, nested: Vec<(BlockSpan, usize)>) -> Self {
        let mut line_starts = vec![0];
        for (i, b) in source.bytes().enumerate() {
            if b == b'\n' && i + 1 < source.len() {
                line_starts.push(i + 1);
            }
        }
        line_starts.push(source.len());
        let line_count = line_starts.len() - 1;

        let mut blocks = vec![CodeBlock {
            kind: BlockKind::WholeFile,
            name: None,
            start_line: 1,
            end_line: line_count.max(1),
            parent: None,
        }];
        let mut children = vec![Vec::new()];
        for (span, parent) in nested {
            let id = blocks.len();
            blocks.push(CodeBlock {
                kind: span.kind,
                name: span.name,
                start_line: span.start_line,
                end_line: span.end_line,
                parent: Some(parent),
            });
            children.push(Vec::new());
            children[parent].push(id);
        }
        Self {
            source: source.to_string(),
            line_starts,
            blocks,
            children,
            fallback_reason: None,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of lines; an empty file has one (empty) line.
    pub fn line_count(&self) -> usize {
        (self.line_starts.len() - 1).max(1)
    }

    pub const ROOT: BlockId = 0;

    pub fn root(&self) -> &CodeBlock {
        &self.blocks[Self::ROOT]
    }

    pub fn block(&self, id: BlockId) -> &CodeBlock {
        &self.blocks[id]
    }

    pub fn blocks(&self) -> &[CodeBlock] {
        &self.blocks
    }

    pub fn children(&self, id: BlockId) -> &[BlockId] {
        &self.children[id]
    }

    /// Set when the language parser failed and the index degraded to the
    /// whole-file block.
    pub fn fallback_reason(&self) -> Option<&str> {
        self.fallback_reason.as_deref()
    }

    /// Deepest block whose span contains `line`.
    pub fn innermost(&self, line: usize) -> BlockId {
        let mut current = Self::ROOT;
        'descend: loop {
            for &child in &self.children[current] {
                if self.blocks[child].contains_line(line) {
                    current = child;
                    continue 'descend;
                }
            }
            return current;
        }
    }

    /// `id` followed by each of its ancestors up to the root.
    pub fn ancestors(&self, id: BlockId) -> impl Iterator<Item = BlockId> + '_ {
        std::iter::successors(Some(id), move |&b| self.blocks[b].parent)
    }

    /// Exact source text of lines `start..=end`, including line terminators.
    pub fn text_of_lines(&self, start: usize, end: usize) -> &str {
        let total = self.line_starts.len() - 1;
        if total == 0 {
            return "";
        }
        let from = self.line_starts[start - 1];
        let to = self.line_starts[end.min(total)];
        &self.source[from..to]
    }

    pub fn text(&self, id: BlockId) -> &str {
        let b = &self.blocks[id];
        self.text_of_lines(b.start_line, b.end_line)
    }

    /// Text of a single line without its terminator.
    pub fn line(&self, line: usize) -> &str {
        self.text_of_lines(line, line)
            .trim_end_matches('\n')
            .trim_end_matches('\r')
    }
}

pub(crate) fn count_lines(source: &str) -> usize {
    source.split_inclusive('\n').count().max(1)
}

/// Places spans into a forest, returning each span with its parent id (ids
/// are assigned in output order starting at 1; 0 is the whole file).
fn nest(
    line_count: usize,
    mut spans: Vec<BlockSpan>,
    strict: bool,
) -> Result<Vec<(BlockSpan, usize)>, String> {
    spans.sort_by_key(|s| (s.start_line, Reverse(s.end_line), s.kind.nesting_rank()));
    let mut out: Vec<(BlockSpan, usize)> = Vec::new();
    // (id, start, end, kind) of the currently open ancestors
    let mut stack: Vec<(usize, usize, usize, BlockKind)> =
        vec![(0, 1, line_count, BlockKind::WholeFile)];
    let mut last_child_end: Vec<usize> = vec![0];

    for span in spans {
        let bad = |why: &str| {
            format!(
                "block {:?} {}..{}: {why}",
                span.kind, span.start_line, span.end_line
            )
        };
        if matches!(span.kind, BlockKind::WholeFile | BlockKind::LineWindow) {
            if strict {
                return Err(bad(
                    "only class-like and function-like blocks may be indexed",
                ));
            }
            continue;
        }
        if span.start_line == 0 || span.start_line > span.end_line || span.end_line > line_count {
            if strict {
                return Err(bad("span outside the file"));
            }
            continue;
        }
        while let Some(&(_, _, end, _)) = stack.last() {
            if span.start_line > end {
                stack.pop();
                last_child_end.pop();
            } else {
                break;
            }
        }
        let &(parent_id, p_start, p_end, p_kind) = stack.last().expect("root never popped");
        let sibling_end = *last_child_end.last().unwrap();
        let problem = if span.end_line > p_end {
            Some("overlaps its enclosing block")
        } else if sibling_end >= span.start_line {
            Some("overlaps a sibling")
        } else if span.start_line == p_start && span.end_line == p_end && span.kind == p_kind {
            Some("duplicates its parent")
        } else {
            None
        };
        if let Some(why) = problem {
            if strict {
                return Err(bad(why));
            }
            continue;
        }
        let id = out.len() + 1;
        *last_child_end.last_mut().unwrap() = span.end_line;
        stack.push((id, span.start_line, span.end_line, span.kind));
        last_child_end.push(0);
        out.push((span, parent_id));
    }
    Ok(out)
}

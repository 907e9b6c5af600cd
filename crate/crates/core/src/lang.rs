//! Source languages and a small lexical scanner shared by the block parsers
//! and the built-in syntax screen.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    Java,
}

impl Language {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "py" | "pyi" => Some(Language::Python),
            "java" => Some(Language::Java),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::Java => "java",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            "java" => Ok(Language::Java),
            other => Err(format!("unsupported language `{other}`")),
        }
    }
}

/// Source with string literals and comments blanked out.
#[derive(Debug, Clone)]
pub(crate) struct Scanned {
    /// One entry per source line; string and comment bytes replaced by spaces.
    pub code: Vec<String>,
    /// Whether each line begins inside a multi-line string or comment.
    pub starts_in_literal: Vec<bool>,
    /// Open-bracket nesting depth at the start of each line.
    pub depth_at_start: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    Str { quote: u8, triple: bool },
    BlockComment,
}

/// Scans `source`, returning the masked view or a description of the first
/// lexical or delimiter error.
pub(crate) fn scan(language: Language, source: &str) -> Result<Scanned, String> {
    let mut code = Vec::new();
    let mut starts_in_literal = Vec::new();
    let mut depth_at_start = Vec::new();
    let mut stack: Vec<(u8, usize)> = Vec::new();
    let mut state = State::Code;

    for (line_idx, line) in source.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let bytes = line.as_bytes();
        let mut masked = bytes.to_vec();
        starts_in_literal.push(state != State::Code);
        depth_at_start.push(stack.len());
        let mut i = 0;
        while i < bytes.len() {
            let b = bytes[i];
            match state {
                State::Code => {
                    let rest = &bytes[i..];
                    match (language, b) {
                        (Language::Python, b'#') => {
                            blank(&mut masked, i, bytes.len());
                            i = bytes.len();
                            continue;
                        }
                        (Language::Java, b'/') if rest.starts_with(b"//") => {
                            blank(&mut masked, i, bytes.len());
                            i = bytes.len();
                            continue;
                        }
                        (Language::Java, b'/') if rest.starts_with(b"/*") => {
                            state = State::BlockComment;
                            blank(&mut masked, i, i + 2);
                            i += 2;
                            continue;
                        }
                        (_, b'"') | (Language::Python, b'\'') => {
                            let triple = rest.len() >= 3 && rest[1] == b && rest[2] == b;
                            state = State::Str { quote: b, triple };
                            let n = if triple { 3 } else { 1 };
                            blank(&mut masked, i, i + n);
                            i += n;
                            continue;
                        }
                        (Language::Java, b'\'') => {
                            state = State::Str {
                                quote: b,
                                triple: false,
                            };
                            blank(&mut masked, i, i + 1);
                            i += 1;
                            continue;
                        }
                        (_, b'(' | b'[' | b'{') => stack.push((b, line_idx + 1)),
                        (_, b')' | b']' | b'}') => {
                            let want = match b {
                                b')' => b'(',
                                b']' => b'[',
                                _ => b'{',
                            };
                            match stack.pop() {
                                Some((open, _)) if open == want => {}
                                Some((open, at)) => {
                                    return Err(format!(
                                        "line {}: `{}` does not close `{}` opened on line {at}",
                                        line_idx + 1,
                                        b as char,
                                        open as char
                                    ))
                                }
                                None => {
                                    return Err(format!(
                                        "line {}: unmatched `{}`",
                                        line_idx + 1,
                                        b as char
                                    ))
                                }
                            }
                        }
                        _ => {}
                    }
                    i += 1;
                }
                State::Str { quote, triple } => {
                    if b == b'\\' {
                        blank(&mut masked, i, (i + 2).min(bytes.len()));
                        i += 2;
                        continue;
                    }
                    let closes = if triple {
                        bytes[i..].starts_with(&[quote, quote, quote])
                    } else {
                        b == quote
                    };
                    let n = if closes && triple { 3 } else { 1 };
                    blank(&mut masked, i, i + n);
                    i += n;
                    if closes {
                        state = State::Code;
                    }
                }
                State::BlockComment => {
                    if bytes[i..].starts_with(b"*/") {
                        blank(&mut masked, i, i + 2);
                        i += 2;
                        state = State::Code;
                    } else {
                        masked[i] = b' ';
                        i += 1;
                    }
                }
            }
        }
        if let State::Str { triple: false, .. } = state {
            // A backslash at end of line continues the literal in Python.
            let continued = language == Language::Python && bytes.last() == Some(&b'\\');
            if !continued {
                return Err(format!(
                    "line {}: unterminated string literal",
                    line_idx + 1
                ));
            }
        }
        code.push(String::from_utf8_lossy(&masked).into_owned());
    }

    match state {
        State::Code => {}
        State::Str { .. } => return Err("unterminated string literal at end of file".into()),
        State::BlockComment => return Err("unterminated block comment at end of file".into()),
    }
    if let Some((open, at)) = stack.last() {
        return Err(format!(
            "`{}` opened on line {at} is never closed",
            *open as char
        ));
    }
    Ok(Scanned {
        code,
        starts_in_literal,
        depth_at_start,
    })
}

fn blank(buf: &mut [u8], from: usize, to: usize) {
    let to = to.min(buf.len());
    for b in &mut buf[from..to] {
        // keep multi-byte sequences intact so the masked line stays UTF-8
        if b.is_ascii() {
            *b = b' ';
        }
    }
}

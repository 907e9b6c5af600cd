use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest};
use crate::prompt::recover_code;

/// Responses for every request whose tag key matches `tag` (a glob where
/// `*` matches any run of characters and `?` any single character).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tag: String,
    pub responses: Vec<String>,
}

/// A script file with separate proposer and ranker sections.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub proposer: Vec<ScriptEntry>,
    #[serde(default)]
    pub ranker: Vec<ScriptEntry>,
}

impl ScriptFile {
    /// Loads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }
}

/// Deterministic backend replaying scripted responses.
///
/// Each concrete tag keeps its own cursor into the first matching entry, so
/// the n-th request with a given tag gets the n-th scripted text no matter
/// how requests for other tags interleave. Requests past the end of the
/// script, or with no matching entry, echo the prompt's code section back
/// (an identity revision); prompts without one get an empty response.
#[derive(Debug, Default)]
pub struct ScriptedMock {
    entries: Vec<ScriptEntry>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ScriptedMock {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            entries,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    /// A mock with no script: always the identity revision.
    pub fn identity() -> Self {
        Self::default()
    }
}

impl CompletionBackend for ScriptedMock {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let key = request.tag.key();
        let scripted = self
            .entries
            .iter()
            .find(|e| glob_match(&e.tag, &key))
            .and_then(|entry| {
                let mut cursors = self.cursors.lock().unwrap();
                let cursor = cursors.entry(key.clone()).or_insert(0);
                let text = entry.responses.get(*cursor).cloned();
                *cursor += 1;
                text
            });
        Ok(scripted.unwrap_or_else(|| {
            recover_code(&request.prompt_text)
                .unwrap_or_default()
                .to_string()
        }))
    }
}

pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{sample, RequestTag, SamplingPlan};

    fn prompt(code: &str) -> String {
        format!("intro\nBuggy Code:\n{code}\n\nT warning(s) for the above buggy code:\nm\n\nFixed Code:\n")
    }

    #[test]
    fn scripted_then_identity() {
        let mock = ScriptedMock::new(vec![ScriptEntry {
            tag: "chk:f.py#u0".into(),
            responses: vec!["fixed code A".into(), "fixed code B".into()],
        }]);
        let plan: SamplingPlan = "0:3".parse().unwrap();
        let got = sample(
            &mock,
            &prompt("orig\n"),
            &plan,
            &RequestTag::proposer("chk", "f.py", 0),
            10,
        )
        .unwrap();
        let texts: Vec<_> = got.into_iter().map(|s| s.outcome.unwrap()).collect();
        assert_eq!(texts, vec!["fixed code A", "fixed code B", "orig\n"]);
    }

    #[test]
    fn unmatched_is_identity() {
        let mock = ScriptedMock::identity();
        let got = sample(
            &mock,
            &prompt("x = 1\n"),
            &SamplingPlan::greedy(),
            &RequestTag::proposer("c", "g.py", 0),
            1,
        )
        .unwrap();
        assert_eq!(got[0].outcome.as_deref(), Ok("x = 1\n"));
        let req = CompletionRequest {
            prompt_text: "Diff:\n...\nReason:\n".into(),
            temperature: 0.0,
            max_output_tokens: 1,
            tag: RequestTag::ranker("c", "g.py", 0),
        };
        assert_eq!(mock.complete(&req).unwrap(), "");
    }

    #[test]
    fn wildcard_entries_count_per_tag() {
        let mock = ScriptedMock::new(vec![ScriptEntry {
            tag: "c:*#s*".into(),
            responses: vec!["Score: 3".into()],
        }]);
        for s in 0..3 {
            let req = CompletionRequest {
                prompt_text: String::new(),
                temperature: 0.0,
                max_output_tokens: 1,
                tag: RequestTag::ranker("c", "a.py", s),
            };
            assert_eq!(mock.complete(&req).unwrap(), "Score: 3");
        }
    }

    #[test]
    fn globbing() {
        assert!(glob_match("*", ""));
        assert!(glob_match("a*c", "abbbc"));
        assert!(glob_match("a?c", "abc"));
        assert!(!glob_match("a*d", "abc"));
        assert!(glob_match("*:src/*.py#u0", "chk:src/x.py#u0"));
        assert!(!glob_match("*:src/*.py#u0", "chk:src/x.py#u1"));
    }

    #[test]
    fn script_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("s.toml");
        std::fs::write(
            &toml_path,
            "[[proposer]]\ntag = \"*\"\nresponses = [\"a\"]\n",
        )
        .unwrap();
        let s = ScriptFile::load(&toml_path).unwrap();
        assert_eq!(s.proposer.len(), 1);
        assert!(s.ranker.is_empty());
        let json_path = dir.path().join("s.json");
        std::fs::write(
            &json_path,
            r#"{"ranker":[{"tag":"*","responses":["Score: 1"]}]}"#,
        )
        .unwrap();
        assert_eq!(
            ScriptFile::load(&json_path).unwrap().ranker[0].responses,
            vec!["Score: 1"]
        );
    }
}

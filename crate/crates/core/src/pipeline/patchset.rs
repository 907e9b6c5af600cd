//! Ranked patch files and the per-file index.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::ranker::{classify_file, FileClass, ScoredRevision};

pub const NO_ACCEPTED_REVISION: &str = "no accepted revision";

/// File name stem for a corpus path: separators become `__`, other
/// characters outside `[A-Za-z0-9._-]` become `_`.
pub fn file_slug(file: &str) -> String {
    file.split(['/', '\\'])
        .filter(|s| !s.is_empty())
        .map(|seg| {
            seg.chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || "._-".contains(c) {
                        c
                    } else {
                        '_'
                    }
                })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("__")
}

pub fn patch_file_name(file: &str, scored: &ScoredRevision) -> String {
    format!(
        "{}.rank{}.score{}.patch",
        file_slug(file),
        scored.rank,
        scored.score.value.as_u8()
    )
}

/// Writes one patch per scored candidate plus `<slug>.index.md`.
///
/// Files that rank low (or have nothing scored) get only the index, marked
/// with [`NO_ACCEPTED_REVISION`], unless `include_rejected` is set.
pub fn write_patch_set(
    file: &str,
    scored: &[ScoredRevision],
    out_dir: &Path,
    include_rejected: bool,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let accepted = !scored.is_empty() && classify_file(scored) == FileClass::RankedHigh;
    let write_patches = accepted || include_rejected;

    let mut index = format!("# {file}\n\n");
    if !accepted {
        let _ = writeln!(index, "{NO_ACCEPTED_REVISION}\n");
    }
    let mut written = Vec::new();
    for s in scored {
        let name = patch_file_name(file, s);
        let reason = s.score.reason.lines().next().unwrap_or("").trim();
        let _ = writeln!(
            index,
            "- rank {} score {} ({}, T={}, {} changed lines){}: {}",
            s.rank,
            s.score.value.as_u8(),
            s.candidate.id(),
            s.candidate.origin.temperature,
            s.changed_lines,
            if write_patches {
                format!(" `{name}`")
            } else {
                String::new()
            },
            reason
        );
        if write_patches {
            let path = out_dir.join(&name);
            std::fs::write(&path, &s.candidate.diff_text)?;
            written.push(path);
        }
    }
    let index_path = out_dir.join(format!("{}.index.md", file_slug(file)));
    std::fs::write(&index_path, index)?;
    written.push(index_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::unified_diff;
    use crate::ranker::{RankScore, RankerTranscript, ScoreValue};
    use crate::revision::{CandidateRevision, Origin};

    fn scored(
        original: &str,
        revised: &str,
        s: usize,
        value: ScoreValue,
        rank: usize,
    ) -> ScoredRevision {
        ScoredRevision {
            candidate: CandidateRevision {
                file: "pkg/mod.py".into(),
                revised_content: revised.into(),
                origin: Origin {
                    units: vec![0],
                    temperature: 0.75,
                    sample_index: s,
                },
                diff_text: unified_diff("pkg/mod.py", original, revised),
            },
            score: RankScore {
                value,
                reason: "because".into(),
            },
            rank,
            changed_lines: 2,
            transcript: RankerTranscript {
                prompt: String::new(),
                responses: vec![],
            },
        }
    }

    #[test]
    fn slugs() {
        assert_eq!(file_slug("pkg/mod.py"), "pkg__mod.py");
        assert_eq!(file_slug("a b/c$.java"), "a_b__c_.java");
    }

    #[test]
    fn three_candidates_three_patches() {
        let dir = tempfile::tempdir().unwrap();
        let o = "a\nb\n";
        let set = vec![
            scored(o, "a\nB\n", 1, ScoreValue::StrongAccept, 1),
            scored(o, "A\nb\n", 2, ScoreValue::WeakAccept, 2),
            scored(o, "x\n", 3, ScoreValue::StrongReject, 3),
        ];
        let paths = write_patch_set("pkg/mod.py", &set, dir.path(), false).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(dir.path().join("pkg__mod.py.rank1.score3.patch").exists());
        assert!(dir.path().join("pkg__mod.py.rank3.score0.patch").exists());
        let index = std::fs::read_to_string(dir.path().join("pkg__mod.py.index.md")).unwrap();
        assert!(!index.contains(NO_ACCEPTED_REVISION));
    }

    #[test]
    fn ranked_low_gets_index_only() {
        let dir = tempfile::tempdir().unwrap();
        let set = vec![scored("a\n", "b\n", 0, ScoreValue::WeakReject, 1)];
        let paths = write_patch_set("pkg/mod.py", &set, dir.path(), false).unwrap();
        assert_eq!(paths.len(), 1);
        let index = std::fs::read_to_string(&paths[0]).unwrap();
        assert!(index.contains(NO_ACCEPTED_REVISION));

        let dir = tempfile::tempdir().unwrap();
        let paths = write_patch_set("pkg/mod.py", &set, dir.path(), true).unwrap();
        assert_eq!(paths.len(), 2);
    }
}

//! Scoring validated candidates with the ranker model and ordering them.

use std::cmp::Ordering;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::CheckSpec;
use crate::diff::changed_line_count;
use crate::gateway::{CompletionBackend, CompletionRequest, RequestTag};
use crate::prompt::render_ranker_prompt;
use crate::revision::CandidateRevision;

/// Output budget for a ranker reply (a short reason and a score).
pub const RANKER_MAX_OUTPUT_TOKENS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreValue {
    StrongReject = 0,
    WeakReject = 1,
    WeakAccept = 2,
    StrongAccept = 3,
}

impl ScoreValue {
    pub fn from_digit(d: u32) -> Option<Self> {
        match d {
            0 => Some(Self::StrongReject),
            1 => Some(Self::WeakReject),
            2 => Some(Self::WeakAccept),
            3 => Some(Self::StrongAccept),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_accept(self) -> bool {
        self >= Self::WeakAccept
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankScore {
    pub value: ScoreValue,
    pub reason: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unparsable ranker score: {0}")]
pub struct UnparsableScore(pub String);

static SCORE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)score[*_"'`\s]*[:=][*_"'`\s]*\(?(\d+)"#).unwrap());

/// Reads the last `Score: <n>` in a ranker reply; the reason is the text
/// before it, minus a leading `Reason:` label.
pub fn parse_score(response: &str) -> Result<RankScore, UnparsableScore> {
    let Some(caps) = SCORE.captures_iter(response).last() else {
        return Err(UnparsableScore("no score found".into()));
    };
    let digits = &caps[1];
    let value = digits
        .parse::<u32>()
        .ok()
        .and_then(ScoreValue::from_digit)
        .ok_or_else(|| UnparsableScore(format!("score {digits} is outside 0-3")))?;
    let before = response[..caps.get(0).unwrap().start()].trim();
    let reason = before
        .strip_prefix("Reason:")
        .or_else(|| before.strip_prefix("reason:"))
        .unwrap_or(before)
        .trim()
        .to_string();
    Ok(RankScore { value, reason })
}

/// The ranker exchange for one candidate, kept for transcripts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankerTranscript {
    pub prompt: String,
    /// One entry per request; an `Err` holds a transport error message.
    pub responses: Vec<Result<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRevision {
    pub candidate: CandidateRevision,
    pub score: RankScore,
    /// 1-based position within the file.
    pub rank: usize,
    pub changed_lines: usize,
    pub transcript: RankerTranscript,
}

fn ask(backend: &dyn CompletionBackend, prompt: &str, tag: &RequestTag) -> Result<String, String> {
    let request = CompletionRequest {
        prompt_text: prompt.to_string(),
        temperature: 0.0,
        max_output_tokens: RANKER_MAX_OUTPUT_TOKENS,
        tag: tag.clone(),
    };
    backend.complete(&request).map_err(|e| e.message)
}

fn score_one(
    backend: &dyn CompletionBackend,
    check: &CheckSpec,
    candidate: &CandidateRevision,
) -> (RankScore, RankerTranscript) {
    let reject = |reason: &str| RankScore {
        value: ScoreValue::StrongReject,
        reason: reason.to_string(),
    };
    let prompt = match render_ranker_prompt(check, &candidate.diff_text) {
        Ok(p) => p.rendered_text,
        Err(e) => {
            let transcript = RankerTranscript {
                prompt: String::new(),
                responses: Vec::new(),
            };
            return (reject(&e.to_string()), transcript);
        }
    };
    let mut tag = RequestTag::ranker(
        &check.check_id,
        &candidate.file,
        candidate.origin.sample_index,
    );
    let mut responses = Vec::new();
    let mut score = None;
    for attempt in 0..2 {
        tag.attempt = attempt;
        let response = ask(backend, &prompt, &tag);
        if let Ok(text) = &response {
            score = parse_score(text).ok();
        }
        responses.push(response);
        if score.is_some() {
            break;
        }
    }
    let score = score.unwrap_or_else(|| reject("unparsable"));
    (score, RankerTranscript { prompt, responses })
}

fn rank_order(a: &ScoredRevision, b: &ScoredRevision) -> Ordering {
    b.score
        .value
        .cmp(&a.score.value)
        .then(a.changed_lines.cmp(&b.changed_lines))
        .then(
            a.candidate
                .origin
                .temperature
                .total_cmp(&b.candidate.origin.temperature),
        )
        .then(
            a.candidate
                .origin
                .sample_index
                .cmp(&b.candidate.origin.sample_index),
        )
}

/// Sorts by (score desc, changed lines asc, temperature asc, sample index
/// asc) and assigns ranks 1..k.
pub fn assign_ranks(mut scored: Vec<ScoredRevision>) -> Vec<ScoredRevision> {
    scored.sort_by(rank_order);
    for (i, s) in scored.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    scored
}

/// One temperature-0 ranker request per candidate. A reply without a
/// readable score is asked once more; a second failure (or a transport
/// error) scores the candidate StrongReject with reason "unparsable".
pub fn score_candidates(
    backend: &dyn CompletionBackend,
    check: &CheckSpec,
    candidates: Vec<CandidateRevision>,
) -> Vec<ScoredRevision> {
    let scored = candidates
        .into_par_iter()
        .map(|candidate| {
            let (score, transcript) = score_one(backend, check, &candidate);
            ScoredRevision {
                changed_lines: changed_line_count(&candidate.diff_text),
                candidate,
                score,
                rank: 0,
                transcript,
            }
        })
        .collect();
    assign_ranks(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileClass {
    RankedHigh,
    RankedLow,
}

/// High when any candidate scored WeakAccept or better.
pub fn classify_file(scored: &[ScoredRevision]) -> FileClass {
    if scored.iter().any(|s| s.score.value.is_accept()) {
        FileClass::RankedHigh
    } else {
        FileClass::RankedLow
    }
}

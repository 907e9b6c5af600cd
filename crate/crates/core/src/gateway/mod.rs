//! Completion backends and the sampling plan used to query them.
//!
//! Every backend implements [`CompletionBackend`]. Decorators add rate
//! limiting ([`Throttled`]), retries ([`Retrying`]), request recording
//! ([`RecordingBackend`]) and record/replay caching ([`ReplayCache`]).

mod http;
mod mock;
mod replay;
mod throttle;

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{OpenAiBackend, OpenAiConfig};
pub use mock::{glob_match, ScriptEntry, ScriptFile, ScriptedMock};
pub use replay::{CacheError, CacheRecord, Offline, ReplayCache};
pub use throttle::{
    Clock, RateLimit, RateLimiter, RetryPolicy, Retrying, SystemClock, Throttled, VirtualClock,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
    pub retryable: bool,
    pub status: Option<u16>,
}

impl BackendError {
    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
            status: None,
        }
    }

    pub fn retryable(message: impl Into<String>, status: Option<u16>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
            status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Proposer,
    Ranker,
}

/// Identifies a request for scripting, caching and transcripts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestTag {
    pub role: Role,
    pub check: String,
    pub file: String,
    pub unit: usize,
    pub sample: usize,
    /// Re-asks of the same question (e.g. after an unparsable answer).
    #[serde(default)]
    pub attempt: usize,
}

impl RequestTag {
    pub fn proposer(check: &str, file: &str, unit: usize) -> Self {
        Self {
            role: Role::Proposer,
            check: check.to_string(),
            file: file.to_string(),
            unit,
            sample: 0,
            attempt: 0,
        }
    }

    pub fn ranker(check: &str, file: &str, sample: usize) -> Self {
        Self {
            role: Role::Ranker,
            check: check.to_string(),
            file: file.to_string(),
            unit: 0,
            sample,
            attempt: 0,
        }
    }

    /// The string scripts match against: `check:file#u<unit>` for proposer
    /// requests, `check:file#s<sample>` for ranker requests.
    pub fn key(&self) -> String {
        match self.role {
            Role::Proposer => format!("{}:{}#u{}", self.check, self.file, self.unit),
            Role::Ranker => format!("{}:{}#s{}", self.check, self.file, self.sample),
        }
    }
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt_text: String,
    pub temperature: f64,
    pub max_output_tokens: usize,
    pub tag: RequestTag,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for &T {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Temperatures and how many samples to draw at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    steps: Vec<(f64, usize)>,
}

impl Default for SamplingPlan {
    /// One greedy sample, six at 0.75 and three at 1.0.
    fn default() -> Self {
        Self {
            steps: vec![(0.0, 1), (0.75, 6), (1.0, 3)],
        }
    }
}

impl SamplingPlan {
    pub fn new(steps: Vec<(f64, usize)>) -> Result<Self, String> {
        if steps.iter().any(|&(t, _)| !t.is_finite() || t < 0.0) {
            return Err("temperatures must be finite and non-negative".into());
        }
        if steps.iter().any(|&(_, n)| n == 0) {
            return Err("sample counts must be positive".into());
        }
        if steps.is_empty() {
            return Err("a sampling plan needs at least one sample".into());
        }
        Ok(Self { steps })
    }

    pub fn greedy() -> Self {
        Self {
            steps: vec![(0.0, 1)],
        }
    }

    pub fn steps(&self) -> &[(f64, usize)] {
        &self.steps
    }

    pub fn total(&self) -> usize {
        self.steps.iter().map(|&(_, n)| n).sum()
    }

    /// `(sample_index, temperature)` for every sample, in plan order.
    pub fn expand(&self) -> Vec<(usize, f64)> {
        self.steps
            .iter()
            .flat_map(|&(t, n)| std::iter::repeat_n(t, n))
            .enumerate()
            .collect()
    }
}

impl FromStr for SamplingPlan {
    type Err = String;

    /// Parses `"0:1,0.75:6,1.0:3"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let steps = s
            .split(',')
            .map(|part| {
                let (t, n) = part
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| format!("expected temperature:count, got `{part}`"))?;
                let t: f64 = t
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad temperature `{t}`"))?;
                let n: usize = n.trim().parse().map_err(|_| format!("bad count `{n}`"))?;
                Ok((t, n))
            })
            .collect::<Result<Vec<_>, String>>()?;
        Self::new(steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_index: usize,
    pub temperature: f64,
    pub outcome: Result<String, BackendError>,
}

#[derive(Debug, Error)]
#[error("all {} samples failed; first error: {}", .0.len(), .0.first().map(|(_, e)| e.message.as_str()).unwrap_or(""))]
pub struct AllSamplesFailed(pub Vec<(usize, BackendError)>);

/// Issues one request per planned sample. Individual failures are kept in
/// the result; the call fails only when no sample succeeds.
pub fn sample(
    backend: &dyn CompletionBackend,
    prompt: &str,
    plan: &SamplingPlan,
    tag: &RequestTag,
    max_output_tokens: usize,
) -> Result<Vec<Sample>, AllSamplesFailed> {
    let mut out = Vec::with_capacity(plan.total());
    for (sample_index, temperature) in plan.expand() {
        let request = CompletionRequest {
            prompt_text: prompt.to_string(),
            temperature,
            max_output_tokens,
            tag: RequestTag {
                sample: sample_index,
                ..tag.clone()
            },
        };
        out.push(Sample {
            sample_index,
            temperature,
            outcome: backend.complete(&request),
        });
    }
    if out.iter().all(|s| s.outcome.is_err()) {
        return Err(AllSamplesFailed(
            out.into_iter()
                .map(|s| (s.sample_index, s.outcome.unwrap_err()))
                .collect(),
        ));
    }
    Ok(out)
}

/// Sends proposer and ranker requests to different backends.
pub struct RoleRouter {
    pub proposer: Box<dyn CompletionBackend>,
    pub ranker: Box<dyn CompletionBackend>,
}

impl CompletionBackend for RoleRouter {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        match request.tag.role {
            Role::Proposer => self.proposer.complete(request),
            Role::Ranker => self.ranker.complete(request),
        }
    }
}

/// Passes requests through while remembering each one.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<CompletionRequest>>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.log.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
}

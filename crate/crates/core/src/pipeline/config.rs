//! The run configuration file and the services built from it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::analysis::{AnalyzerAdapter, ExternalAnalyzer, ReportFormat, ToyAdapter, ToyRule};
use crate::gateway::{
    CompletionBackend, Offline, OpenAiBackend, OpenAiConfig, RateLimit, RateLimiter, ReplayCache,
    RetryPolicy, Retrying, RoleRouter, ScriptFile, ScriptedMock, SystemClock, Throttled,
};
use crate::lang::Language;
use crate::revision::{CommandSyntaxChecker, SyntaxChecker};

pub const DEFAULT_API_KEY_ENV: &str = "CORE_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSection {
    pub base_url: Option<String>,
    pub proposer_model: String,
    pub ranker_model: String,
    /// Requests per second across both roles.
    pub rate_limit: f64,
    pub retries: usize,
    pub api_key_env: String,
    /// Model context window in tokens.
    pub context_window: usize,
    pub timeout_secs: u64,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            base_url: None,
            proposer_model: "gpt-3.5-turbo".into(),
            ranker_model: "gpt-4".into(),
            rate_limit: 4.0,
            retries: 3,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            context_window: 8192,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextSection {
    /// Tokens allowed for a unit's code; derived from the context window
    /// when absent.
    pub token_budget: Option<usize>,
    pub window_lines: usize,
}

impl Default for ContextSection {
    fn default() -> Self {
        Self {
            token_budget: None,
            window_lines: crate::context::DEFAULT_WINDOW_LINES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyRuleConfig {
    pub id: String,
    pub pattern: String,
    #[serde(default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormatName {
    #[default]
    Sarif,
    Sonar,
    Jsonl,
}

impl From<ReportFormatName> for ReportFormat {
    fn from(f: ReportFormatName) -> Self {
        match f {
            ReportFormatName::Sarif => ReportFormat::Sarif,
            ReportFormatName::Sonar => ReportFormat::Sonar,
            ReportFormatName::Jsonl => ReportFormat::Jsonl,
        }
    }
}

/// Either an external command (`{check}`, `{workspace}`, `{out}`
/// placeholders) or built-in line-pattern rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerSection {
    pub command: Option<String>,
    pub format: ReportFormatName,
    #[serde(rename = "rule")]
    pub rules: Vec<ToyRuleConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxCommand {
    /// Parse-only command; `{file}` is replaced by a temporary copy.
    pub command: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    /// Check catalog, relative to the config file.
    pub catalog: Option<PathBuf>,
    pub llm: LlmSection,
    pub context: ContextSection,
    pub analyzer: AnalyzerSection,
    pub syntax: BTreeMap<Language, SyntaxCommand>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file; relative `catalog` paths are resolved against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(c) = cfg.catalog.as_mut().filter(|c| c.is_relative()) {
            *c = base.join(&*c);
        }
        Ok(cfg)
    }

    pub fn analyzer(&self) -> Result<Arc<dyn AnalyzerAdapter>, PipelineError> {
        let a = &self.analyzer;
        match (&a.command, a.rules.is_empty()) {
            (Some(_), false) => Err(PipelineError::Config(
                "[analyzer] takes either `command` or `rule` entries, not both".into(),
            )),
            (Some(cmd), true) => Ok(Arc::new(ExternalAnalyzer::new(cmd, a.format.into())?)),
            (None, false) => {
                let rules = a
                    .rules
                    .iter()
                    .map(|r| {
                        let rule = ToyRule::new(&r.id, &r.pattern)?;
                        Ok(match &r.message {
                            Some(m) => rule.with_message(m),
                            None => rule,
                        })
                    })
                    .collect::<Result<Vec<_>, crate::analysis::AnalysisError>>()?;
                Ok(Arc::new(ToyAdapter::new(rules)))
            }
            (None, true) => Err(PipelineError::Config(
                "[analyzer] needs a `command` or `rule` entries".into(),
            )),
        }
    }

    pub fn syntax_checker(&self) -> Arc<dyn SyntaxChecker> {
        Arc::new(CommandSyntaxChecker::new(
            self.syntax
                .iter()
                .map(|(l, c)| (*l, c.command.clone()))
                .collect(),
        ))
    }

    /// The model backend: a scripted mock when `mock_script` is given, else
    /// the configured HTTP endpoint (rate limited and retried). A replay
    /// cache, when given, wraps either; with neither a mock nor a
    /// `base_url`, a replay cache runs offline.
    pub fn backend(
        &self,
        mock_script: Option<&Path>,
        replay: Option<&Path>,
    ) -> Result<Arc<dyn CompletionBackend>, PipelineError> {
        let live: Box<dyn CompletionBackend> = if let Some(script) = mock_script {
            let script = ScriptFile::load(script).map_err(PipelineError::Config)?;
            Box::new(RoleRouter {
                proposer: Box::new(ScriptedMock::new(script.proposer)),
                ranker: Box::new(ScriptedMock::new(script.ranker)),
            })
        } else if let Some(base_url) = &self.llm.base_url {
            let api_key = std::env::var(&self.llm.api_key_env)
                .ok()
                .filter(|k| !k.is_empty());
            if api_key.is_none() {
                tracing::warn!(env = %self.llm.api_key_env, "no API key set; sending unauthenticated requests");
            }
            let limit =
                RateLimit::per_second(self.llm.rate_limit).map_err(PipelineError::Config)?;
            let clock = Arc::new(SystemClock::default());
            let limiter = Arc::new(RateLimiter::new(limit, clock.clone()));
            let policy = RetryPolicy {
                retries: self.llm.retries,
                ..RetryPolicy::default()
            };
            let make = |model: &str| -> Box<dyn CompletionBackend> {
                let http = OpenAiBackend::new(OpenAiConfig {
                    base_url: base_url.clone(),
                    model: model.to_string(),
                    api_key: api_key.clone(),
                    timeout: Duration::from_secs(self.llm.timeout_secs),
                });
                Box::new(Retrying::new(
                    Throttled::new(http, limiter.clone()),
                    policy,
                    clock.clone(),
                ))
            };
            Box::new(RoleRouter {
                proposer: make(&self.llm.proposer_model),
                ranker: make(&self.llm.ranker_model),
            })
        } else if replay.is_some() {
            Box::new(Offline)
        } else {
            return Err(PipelineError::Config(
                "no model backend: set llm.base_url, or pass a mock script or replay cache".into(),
            ));
        };
        Ok(match replay {
            Some(path) => Arc::new(ReplayCache::open(live, path)?),
            None => Arc::from(live),
        })
    }
}

/// Everything one check's run needs besides the services.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    pub plan: crate::gateway::SamplingPlan,
    /// Fixed code budget per unit; derived from `context_window` when `None`.
    pub token_budget: Option<usize>,
    pub context_window: usize,
    pub window_lines: usize,
    pub workers: usize,
    /// Parent of per-candidate scratch workspaces (a temporary directory
    /// when `None`).
    pub work_dir: Option<PathBuf>,
    pub keep_work: bool,
    pub include_rejected: bool,
    pub dump_prompts: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            out_dir: out_dir.into(),
            plan: Default::default(),
            token_budget: None,
            context_window: LlmSection::default().context_window,
            window_lines: crate::context::DEFAULT_WINDOW_LINES,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            work_dir: None,
            keep_work: false,
            include_rejected: false,
            dump_prompts: None,
        }
    }

    /// Applies the `[context]` and `[llm]` sizing settings.
    pub fn with_file_settings(mut self, file: &ConfigFile) -> Self {
        self.token_budget = file.context.token_budget;
        self.window_lines = file.context.window_lines;
        self.context_window = file.llm.context_window;
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.workers == 0 {
            return Err(PipelineError::Config(
                "worker count must be at least 1".into(),
            ));
        }
        if !self.corpus.is_dir() {
            return Err(PipelineError::Config(format!(
                "corpus {} is not a directory",
                self.corpus.display()
            )));
        }
        if self.window_lines == 0 {
            return Err(PipelineError::Config(
                "context.window_lines must be at least 1".into(),
            ));
        }
        if self.token_budget == Some(0) {
            return Err(PipelineError::Config(
                "context.token_budget must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Output tokens reserved for the proposer's reply: half the window.
    pub fn output_reserve(&self) -> usize {
        self.context_window / 2
    }

    /// Code budget per unit: the fixed budget, or the window minus the
    /// prompt's fixed text and the output reserve.
    pub fn unit_budget(&self, prompt_overhead: usize) -> usize {
        self.token_budget.unwrap_or_else(|| {
            self.context_window
                .saturating_sub(prompt_overhead)
                .saturating_sub(self.output_reserve())
        })
    }
}

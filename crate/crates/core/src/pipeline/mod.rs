//! Orchestration of a whole run: analyze the corpus, then per flagged file
//! cover → prompt → sample → assemble → screen → validate → rank, and
//! finally write patches and the metrics report.

mod config;
mod patchset;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

pub use config::{
    AnalyzerSection, ConfigFile, ContextSection, LlmSection, ReportFormatName, RunConfig,
    SyntaxCommand, ToyRuleConfig, DEFAULT_API_KEY_ENV,
};
pub use patchset::{file_slug, patch_file_name, write_patch_set, NO_ACCEPTED_REVISION};
pub use report::{
    emit_report, format_percent, format_ratio, CandidateScore, CheckReport, Counts, FileRow,
    Metrics, PipelineReport, Rejection, ReportFormatKind, NOT_APPLICABLE, SCHEMA_VERSION,
};

use crate::analysis::{AnalysisError, AnalyzerAdapter, Violation};
use crate::catalog::{Catalog, CatalogError, CheckSpec};
use crate::context::{
    build_block_index, cover_violations, fetch_relevant_blocks, BlockIndex, BlockKind,
    ByteEstimator, CodeBlock, CoverOptions, PromptUnit, RelevantBlock,
};
use crate::gateway::{sample, CacheError, CompletionBackend, RequestTag};
use crate::lang::Language;
use crate::prompt::render_proposer_prompt;
use crate::ranker::{classify_file, score_candidates, ScoredRevision};
use crate::revision::{assemble_candidate, dedup, screen_syntax, SyntaxChecker};
use crate::validator::{summarize_file, validate_candidates};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("analyzer: {0}")]
    Analyzer(#[from] AnalysisError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// The pluggable parts of a run.
#[derive(Clone)]
pub struct Services {
    pub analyzer: Arc<dyn AnalyzerAdapter>,
    pub syntax: Arc<dyn SyntaxChecker>,
    /// Serves both proposer and ranker requests (see [`crate::gateway::RoleRouter`]).
    pub llm: Arc<dyn CompletionBackend>,
}

/// A file's processing result: its report row and what to write out.
struct FileResult {
    row: FileRow,
    scored: Vec<ScoredRevision>,
}

struct FileJob<'a> {
    cfg: &'a RunConfig,
    services: &'a Services,
    check: &'a CheckSpec,
    scratch: &'a Path,
    prompt_overhead: usize,
}

fn prompt_overhead(check: &CheckSpec) -> usize {
    let empty = BlockIndex::whole_file_only("");
    let unit = PromptUnit {
        block: CodeBlock {
            kind: BlockKind::WholeFile,
            name: None,
            start_line: 1,
            end_line: 1,
            parent: None,
        },
        block_text: String::new(),
        covered: Vec::new(),
        estimated_tokens: 0,
    };
    render_proposer_prompt(check, &unit, &empty, &[]).estimated_tokens
}

fn relevant_blocks(
    check: &CheckSpec,
    index: &BlockIndex,
    unit: &PromptUnit,
    budget: usize,
) -> Vec<RelevantBlock> {
    let mut out: Vec<RelevantBlock> = Vec::new();
    for hint in &check.relevant_block_queries {
        for v in &unit.covered {
            for block in fetch_relevant_blocks(index, hint, v, budget, &ByteEstimator) {
                // skip blocks the unit already shows in full
                if unit.block_text.contains(block.text.as_str()) || out.contains(&block) {
                    continue;
                }
                out.push(block);
            }
        }
    }
    out
}

fn write_dump(dir: &Path, name: &str, body: &str) {
    if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(name), body))
    {
        tracing::warn!(dir = %dir.display(), error = %e, "could not write prompt dump");
    }
}

impl FileJob<'_> {
    fn dump_dir(&self) -> Option<PathBuf> {
        self.cfg
            .dump_prompts
            .as_ref()
            .map(|d| d.join(file_slug(&self.check.check_id)))
    }

    fn run(&self, file: &str, violations: Vec<Violation>) -> FileResult {
        let mut row = FileRow {
            file: file.to_string(),
            violations_before: violations.len(),
            min_violations_remaining: violations.len(),
            ..Default::default()
        };
        match self.process(file, &violations, &mut row) {
            Ok(scored) => FileResult { row, scored },
            Err(error) => {
                tracing::error!(%file, %error, "file failed");
                row.error = Some(error);
                row.candidates_passed = 0;
                row.min_violations_remaining = row.violations_before;
                row.class = None;
                FileResult {
                    row,
                    scored: Vec::new(),
                }
            }
        }
    }

    fn process(
        &self,
        file: &str,
        violations: &[Violation],
        row: &mut FileRow,
    ) -> Result<Vec<ScoredRevision>, String> {
        let check = self.check;
        let path = self.cfg.corpus.join(file);
        let original = std::fs::read_to_string(&path)
            .map_err(|e| format!("reading {}: {e}", path.display()))?;
        let language = Language::from_path(Path::new(file));
        let index = match language {
            Some(lang) => build_block_index(&original, lang),
            None => BlockIndex::whole_file_only(&original),
        };
        if let Some(reason) = index.fallback_reason() {
            tracing::debug!(%file, %reason, "no block structure; using whole file");
        }

        let budget = self.cfg.unit_budget(self.prompt_overhead);
        let options = CoverOptions {
            budget,
            window_lines: self.cfg.window_lines,
        };
        let units = cover_violations(&index, violations, options, &ByteEstimator)
            .map_err(|e| e.to_string())?;
        row.prompt_units = units.len();

        // outputs[u][s]: response of unit u for sample s (None when that sample failed)
        let plan = &self.cfg.plan;
        let mut outputs: Vec<Vec<Option<String>>> = Vec::with_capacity(units.len());
        let dump = self.dump_dir();
        for (u, unit) in units.iter().enumerate() {
            let relevant = relevant_blocks(check, &index, unit, budget);
            let prompt = render_proposer_prompt(check, unit, &index, &relevant);
            if let Some(dir) = &dump {
                write_dump(
                    dir,
                    &format!("{}.u{u}.prompt.txt", file_slug(file)),
                    &prompt.rendered_text,
                );
            }
            let tag = RequestTag::proposer(&check.check_id, file, u);
            let samples = sample(
                self.services.llm.as_ref(),
                &prompt.rendered_text,
                plan,
                &tag,
                self.cfg.output_reserve(),
            )
            .map_err(|e| format!("unit {u}: {e}"))?;
            let mut by_index = vec![None; plan.total()];
            for s in samples {
                match s.outcome {
                    Ok(text) => by_index[s.sample_index] = Some(text),
                    Err(e) => {
                        tracing::warn!(%file, unit = u, sample = s.sample_index, error = %e, "sample failed")
                    }
                }
            }
            outputs.push(by_index);
        }

        let mut candidates = Vec::new();
        for (sample_index, temperature) in plan.expand() {
            let Some(texts) = outputs
                .iter()
                .map(|o| o[sample_index].clone())
                .collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            match assemble_candidate(file, &original, &units, &texts, temperature, sample_index) {
                Ok(c) => candidates.push(c),
                Err(e) => {
                    tracing::warn!(%file, sample = sample_index, error = %e, "could not assemble candidate")
                }
            }
        }
        row.candidates_generated = candidates.len();

        let candidates = dedup(candidates);
        row.candidates_unique = candidates.len();
        let (candidates, rejected) =
            screen_syntax(self.services.syntax.as_ref(), language, candidates);
        row.syntax_rejected = rejected
            .into_iter()
            .map(|(c, reason)| Rejection {
                candidate: c.id(),
                reason,
            })
            .collect();
        row.candidates_validated = candidates.len();

        let scratch = self.scratch.join(file_slug(file));
        let outcomes = validate_candidates(
            self.services.analyzer.as_ref(),
            &check.check_id,
            &scratch,
            violations.len(),
            &candidates,
        );
        let summary = summarize_file(file, &outcomes, violations.len());
        row.candidates_passed = summary.candidates_passed;
        row.min_violations_remaining = summary.min_violations_remaining;

        let passing: Vec<_> = candidates
            .into_iter()
            .zip(&outcomes)
            .filter(|(_, o)| o.passed)
            .map(|(c, _)| c)
            .collect();
        if passing.is_empty() {
            return Ok(Vec::new());
        }
        let scored = score_candidates(self.services.llm.as_ref(), check, passing);
        row.class = Some(classify_file(&scored));
        row.best_candidate = scored.first().map(|s| s.candidate.id());
        row.scores = scored
            .iter()
            .map(|s| CandidateScore {
                candidate: s.candidate.id(),
                rank: s.rank,
                score: s.score.value,
                reason: s.score.reason.clone(),
                changed_lines: s.changed_lines,
            })
            .collect();
        Ok(scored)
    }
}

/// Groups the corpus findings for `check_id` by file.
fn flagged_files(violations: Vec<Violation>, check_id: &str) -> BTreeMap<String, Vec<Violation>> {
    let mut by_file: BTreeMap<String, Vec<Violation>> = BTreeMap::new();
    for v in violations.into_iter().filter(|v| v.rule_id == check_id) {
        by_file.entry(v.file.clone()).or_default().push(v);
    }
    by_file
}

/// Runs one check over the corpus and writes its patch sets under
/// `<out>/patches/<check>/`. Per-file failures are recorded in the rows;
/// only problems affecting the whole run are returned as errors.
pub fn run_check(
    cfg: &RunConfig,
    services: &Services,
    check: &CheckSpec,
) -> Result<CheckReport, PipelineError> {
    cfg.validate()?;
    let findings = services.analyzer.run(&check.check_id, &cfg.corpus)?;
    let files = flagged_files(findings.violations, &check.check_id);
    tracing::info!(check = %check.check_id, files = files.len(), "flagged files");

    let temp_scratch;
    let scratch_root = match &cfg.work_dir {
        Some(dir) => dir.join(file_slug(&check.check_id)),
        None => {
            temp_scratch =
                tempfile::tempdir().map_err(|e| PipelineError::io(Path::new("<tempdir>"), e))?;
            temp_scratch.path().to_path_buf()
        }
    };
    std::fs::create_dir_all(&scratch_root).map_err(|e| PipelineError::io(&scratch_root, e))?;

    let job = FileJob {
        cfg,
        services,
        check,
        scratch: &scratch_root,
        prompt_overhead: prompt_overhead(check),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    let results: Vec<FileResult> = pool.install(|| {
        files
            .into_par_iter()
            .map(|(file, vs)| job.run(&file, vs))
            .collect()
    });

    let patch_dir = cfg.out_dir.join("patches").join(file_slug(&check.check_id));
    let mut rows = Vec::with_capacity(results.len());
    for FileResult { mut row, scored } in results {
        if row.error.is_none() {
            let written = write_patch_set(&row.file, &scored, &patch_dir, cfg.include_rejected)
                .map_err(|e| PipelineError::io(&patch_dir, e));
            match written {
                Ok(_) if cfg.dump_prompts.is_some() => {
                    write_transcripts(&row.file, &scored, &patch_dir)
                }
                Ok(_) => {}
                Err(e) => row.error = Some(e.to_string()),
            }
        }
        rows.push(row);
    }
    if cfg.work_dir.is_some() && !cfg.keep_work {
        let _ = std::fs::remove_dir_all(&scratch_root);
    }
    Ok(CheckReport::new(
        &check.check_id,
        &check.tool_name,
        check.display_title(),
        rows,
    ))
}

fn write_transcripts(file: &str, scored: &[ScoredRevision], dir: &Path) {
    for s in scored {
        let mut body = s.transcript.prompt.clone();
        for (i, r) in s.transcript.responses.iter().enumerate() {
            let text = match r {
                Ok(t) => t.clone(),
                Err(e) => format!("<request failed: {e}>"),
            };
            body.push_str(&format!("\n--- response {} ---\n{text}\n", i + 1));
        }
        let name = patch_file_name(file, s).replace(".patch", ".ranker.txt");
        write_dump(dir, &name, &body);
    }
}

/// Runs one check and writes `report.json` and `report.md` to the output
/// directory.
pub fn run_pipeline(
    cfg: &RunConfig,
    services: &Services,
    check: &CheckSpec,
) -> Result<PipelineReport, PipelineError> {
    let report = PipelineReport::new(vec![run_check(cfg, services, check)?]);
    emit_report(
        &report,
        &[ReportFormatKind::Json, ReportFormatKind::Markdown],
        &cfg.out_dir,
    )
    .map_err(|e| PipelineError::io(&cfg.out_dir, e))?;
    Ok(report)
}

/// Runs every catalog check in id order into one report.
pub fn run_all(
    cfg: &RunConfig,
    services: &Services,
    catalog: &Catalog,
) -> Result<PipelineReport, PipelineError> {
    let checks = catalog
        .iter()
        .map(|check| run_check(cfg, services, check))
        .collect::<Result<Vec<_>, _>>()?;
    let report = PipelineReport::new(checks);
    emit_report(
        &report,
        &[ReportFormatKind::Json, ReportFormatKind::Markdown],
        &cfg.out_dir,
    )
    .map_err(|e| PipelineError::io(&cfg.out_dir, e))?;
    Ok(report)
}

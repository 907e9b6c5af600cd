//! Analyzer-guided code revision: static-analysis findings are turned into
//! block-sized prompts, the model's revisions are patched back, screened,
//! re-analyzed and ranked.

pub mod analysis;
pub mod catalog;
pub mod context;
pub mod diff;
pub mod gateway;
pub mod lang;
pub mod pipeline;
pub mod prompt;
pub mod ranker;
pub mod revision;
pub mod validator;

pub use analysis::{AnalysisError, AnalysisReport, AnalyzerAdapter, Violation};
pub use catalog::{get_check, load_catalog, Catalog, CatalogError, CheckSpec};
pub use context::{build_block_index, cover_violations, BlockIndex, CodeBlock, PromptUnit};
pub use gateway::{CompletionBackend, CompletionRequest, SamplingPlan};
pub use lang::Language;
pub use pipeline::{
    run_all, run_check, run_pipeline, ConfigFile, PipelineError, PipelineReport, RunConfig,
    Services,
};
pub use ranker::{FileClass, ScoredRevision};
pub use revision::CandidateRevision;

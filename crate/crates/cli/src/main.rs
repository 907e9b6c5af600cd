//! `core`: analyzer-guided code revision from the command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use reviser_core::analysis::{AnalyzerAdapter, ToyAdapter, ToyRule};
use reviser_core::catalog::{get_check, load_catalog, Catalog};
use reviser_core::gateway::SamplingPlan;
use reviser_core::pipeline::{
    run_all, run_pipeline, ConfigFile, PipelineReport, RunConfig, Services,
};

const EXIT_OK: u8 = 0;
/// Configuration, catalog or analyzer failure before any file was processed.
const EXIT_FATAL: u8 = 1;
/// The run finished but some files failed with infrastructure errors.
const EXIT_INFRA: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "core",
    version,
    about = "Fix static-analysis findings with LLM-proposed, analyzer-validated and ranked revisions"
)]
struct Cli {
    /// More logging (-v info, -vv debug); RUST_LOG overrides
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one check over a corpus
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Check id from the catalog
        #[arg(long)]
        check: String,
    },
    /// Run every catalog check over a corpus
    RunAll {
        #[command(flatten)]
        common: RunArgs,
    },
    /// Re-render a saved report.json
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// Built-in line-pattern analyzer writing SARIF (rules from a config's [[analyzer.rule]])
    ToyAnalyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        check: String,
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config with [llm], [context], [analyzer] and [syntax]
    #[arg(long)]
    config: PathBuf,
    /// Check catalog (defaults to the config's `catalog`)
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated temperature:count pairs
    #[arg(long, default_value = "0:1,0.75:6,1.0:3")]
    samples_plan: SamplingPlan,
    /// Scripted responses instead of a live model
    #[arg(long)]
    mock_llm: Option<PathBuf>,
    /// Record/replay cache (JSON lines)
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Write proposer prompts here and ranker transcripts beside patches
    #[arg(long)]
    dump_prompts: Option<PathBuf>,
    /// Parent directory for candidate scratch workspaces
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// Keep scratch workspaces after the run
    #[arg(long)]
    keep_work: bool,
    /// Also write patches for files without an accepted revision
    #[arg(long)]
    include_rejected: bool,
    /// Files processed in parallel (default: CPU count)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Md,
    Json,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init()
        .ok();
}

fn setup(args: &RunArgs) -> Result<(RunConfig, Services, Catalog)> {
    let file = ConfigFile::load(&args.config)?;
    let catalog_path = args
        .catalog
        .clone()
        .or_else(|| file.catalog.clone())
        .context("no catalog: pass --catalog or set `catalog` in the config")?;
    let catalog = load_catalog(&catalog_path)?;

    let mut cfg = RunConfig::new(&args.corpus, &args.out).with_file_settings(&file);
    cfg.plan = args.samples_plan.clone();
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.dump_prompts = args.dump_prompts.clone();
    cfg.include_rejected = args.include_rejected;
    cfg.keep_work = args.keep_work;
    cfg.work_dir = match (&args.work_dir, args.keep_work) {
        (Some(d), _) => Some(d.clone()),
        (None, true) => Some(args.out.join("work")),
        (None, false) => None,
    };
    cfg.validate()?;

    let services = Services {
        analyzer: file.analyzer()?,
        syntax: file.syntax_checker(),
        llm: file.backend(args.mock_llm.as_deref(), args.replay.as_deref())?,
    };
    Ok((cfg, services, catalog))
}

fn finish(report: &PipelineReport, out: &Path) -> u8 {
    let md = report.to_markdown();
    let summary = md.split("\n## ").next().unwrap_or(&md);
    print!("{summary}");
    println!("\nreport: {}", out.join("report.json").display());
    let errors = report.infrastructure_errors();
    if errors > 0 {
        eprintln!("{errors} file(s) failed with infrastructure errors");
        EXIT_INFRA
    } else {
        EXIT_OK
    }
}

fn toy_analyze(config: &Path, check: &str, workspace: &Path, out: &Path) -> Result<()> {
    let file = ConfigFile::load(config)?;
    let rules = file
        .analyzer
        .rules
        .iter()
        .map(|r| {
            let rule = ToyRule::new(&r.id, &r.pattern)?;
            Ok(match &r.message {
                Some(m) => rule.with_message(m),
                None => rule,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rules.is_empty() {
        bail!("{} has no [[analyzer.rule]] entries", config.display());
    }
    let report = ToyAdapter::new(rules).run(check, workspace)?;
    let results: Vec<_> = report
        .violations
        .iter()
        .map(|v| {
            json!({
                "ruleId": v.rule_id,
                "message": { "text": v.message },
                "locations": [{
                    "physicalLocation": {
                        "artifactLocation": { "uri": v.file },
                        "region": { "startLine": v.start_line, "endLine": v.end_line }
                    }
                }]
            })
        })
        .collect();
    let sarif = json!({
        "version": "2.1.0",
        "runs": [{ "tool": { "driver": { "name": "toy" } }, "results": results }]
    });
    std::fs::write(out, serde_json::to_string_pretty(&sarif)?)
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn render_report(input: &Path, format: Format) -> Result<String> {
    let text =
        std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let report = PipelineReport::from_json(&text).map_err(anyhow::Error::msg)?;
    Ok(match format {
        Format::Md => report.to_markdown(),
        Format::Json => report.to_json(),
    })
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run { common, check } => {
            let (cfg, services, catalog) = setup(&common)?;
            let spec = get_check(&catalog, &check)?;
            let report = run_pipeline(&cfg, &services, spec)?;
            Ok(finish(&report, &cfg.out_dir))
        }
        Command::RunAll { common } => {
            let (cfg, services, catalog) = setup(&common)?;
            let report = run_all(&cfg, &services, &catalog)?;
            Ok(finish(&report, &cfg.out_dir))
        }
        Command::Report { input, format } => {
            print!("{}", render_report(&input, format)?);
            Ok(EXIT_OK)
        }
        Command::ToyAnalyze {
            config,
            check,
            workspace,
            out,
        } => {
            toy_analyze(&config, &check, &workspace, &out)?;
            Ok(EXIT_OK)
        }
    }
}

/// The error and its causes, skipping causes the library already folded
/// into the message above them.
fn error_chain(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    init_logging(cli.verbose);
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            EXIT_FATAL
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

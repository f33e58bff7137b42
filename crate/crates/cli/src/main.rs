//! `xchain-audit`: layered security audit of cross-chain bridge contracts.

mod config;
mod io;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use xchain_audit_core::callgraph::{extract_transaction_nodes, TransactionNode};
use xchain_audit_core::frontend::{to_document, CanonicalAst};
use xchain_audit_core::orchestrator::CacheMode;
use xchain_audit_core::pipeline::{run_audit, Clock, NullClock, SystemClock};
use xchain_audit_core::report::{
    build_report, compute_metrics, predictions_from_report, render_report, Adjudication, AuditReport, ExactFieldMatcher,
    GroundTruth, Metrics, ReportFormat,
};
use xchain_audit_core::semantic::{build_kb, retrieve, seed_patterns, KnowledgeBase, KnowledgePattern};
use xchain_audit_core::taint::slice::slice_with;
use xchain_audit_core::taint::{reformat, TaintModel};

use crate::config::{CacheSetting, RunConfig};
use crate::io::{emit, load_codebase, pretty, project_name, read_json};

const EXIT_FINDINGS: u8 = 1;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "xchain-audit", version, about = "Layered security audit of cross-chain bridge contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full layered audit and write report.json, report.md and graph.json to --out.
    Audit(AuditArgs),
    /// Emit the transaction flows found from event anchors.
    Extract(ExtractArgs),
    /// Slice one transaction flow for the given parameters.
    Slice(SliceArgs),
    /// Emit the canonical AST document of a codebase.
    Parse(ParseArgs),
    /// Build or query a bypass-pattern knowledge base.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Score a report against ground-truth audit points, or metrics from raw counts.
    Eval(EvalArgs),
    /// Re-render a saved report.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Check a run configuration.
    #[command(subcommand)]
    Config(ConfigCommand),
    /// Inspect or clear the provider transcript cache.
    #[command(subcommand)]
    Cache(CacheCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// Versioned JSON document.
    Document,
    Markdown,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Document => ReportFormat::Document,
            Format::Markdown => ReportFormat::Markdown,
            Format::Text => ReportFormat::Text,
        }
    }
}

#[derive(Args)]
struct AuditArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source directory, single .sol file or AST document.
    #[arg(long)]
    codebase: PathBuf,
    /// Knowledge base file; the bundled seed patterns when absent.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Transcript cache; hits are replayed, misses recorded. Layer times are zeroed.
    #[arg(long, env = "GOATX_CACHE_DIR")]
    replay_cache: Option<PathBuf>,
    /// Fail on a cache miss instead of calling the provider.
    #[arg(long, requires = "replay_cache")]
    replay_only: bool,
    /// Static layers only; no provider calls.
    #[arg(long)]
    dry_run: bool,
    /// Summary printed to stdout.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Generators sampled per node; overrides the config.
    #[arg(long = "k-G")]
    k_g: Option<usize>,
    /// Evaluator score (0-100) a finding needs to survive.
    #[arg(long)]
    confidence_threshold: Option<u8>,
    /// Attempts per provider call, including the first.
    #[arg(long)]
    max_attempts: Option<u32>,
    /// Patterns retrieved per Layer 5 query.
    #[arg(long)]
    top_k: Option<usize>,
    /// Concurrent provider calls.
    #[arg(long)]
    in_flight_cap: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    codebase: PathBuf,
    /// Supplies event_patterns.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    codebase: PathBuf,
    /// A transaction-flow document, or the array `extract` writes.
    #[arg(long)]
    node: PathBuf,
    /// Selects the flow when --node holds several.
    #[arg(long)]
    entrypoint: Option<String>,
    /// Seed parameter name; repeatable.
    #[arg(long = "param", required = true)]
    params: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    codebase: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KbCommand {
    /// Embed pattern sources into a knowledge-base file.
    Build {
        /// JSON array of patterns; the bundled seed patterns when absent.
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// Supplies the embedder.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ad-hoc retrieval against a knowledge base.
    Query {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Minimum similarity; the configured kb_similarity when absent.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, requires = "truth", required_unless_present = "counts")]
    report: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, requires = "report")]
    adjudication: Option<PathBuf>,
    /// `tp,fn,fp` instead of a report.
    #[arg(long, conflicts_with_all = ["report", "truth"])]
    counts: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: EvalFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalFormat {
    Document,
    Text,
}

#[derive(Subcommand)]
enum ReportCommand {
    Render {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Parse the file and build every binding it declares.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    List {
        #[arg(long, env = "GOATX_CACHE_DIR")]
        dir: PathBuf,
    },
    /// Remove cached transcripts; other files are left alone.
    Clear {
        #[arg(long, env = "GOATX_CACHE_DIR")]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Audit(a) => audit(a),
        Command::Extract(a) => extract(a).map(|_| 0),
        Command::Slice(a) => slice(a).map(|_| 0),
        Command::Parse(a) => {
            let ast = load_codebase(&a.codebase)?;
            emit(a.out.as_deref(), &pretty(&to_document(&ast))).map(|_| 0)
        }
        Command::Kb(k) => kb(k).map(|_| 0),
        Command::Eval(a) => eval(a).map(|_| 0),
        Command::Report(ReportCommand::Render { report, format, out }) => {
            let r = AuditReport::from_json(&std::fs::read_to_string(&report)?)?;
            emit(out.as_deref(), &render_report(&r, format.into())).map(|_| 0)
        }
        Command::Config(ConfigCommand::Validate { config }) => {
            let rc = RunConfig::load(&config)?;
            rc.pipeline(false, None)?;
            println!(
                "ok: {} generator(s), evaluator {}, k_G {}",
                rc.ensemble.len(),
                rc.evaluator.as_ref().map_or("-", |b| b.name.as_str()),
                rc.k_g
            );
            Ok(0)
        }
        Command::Cache(c) => cache(c).map(|_| 0),
    }
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn load_kb(path: Option<&Path>, rc: &RunConfig) -> Result<KnowledgeBase> {
    match path {
        Some(p) => KnowledgeBase::load(p).with_context(|| format!("knowledge base {}", p.display())),
        None => Ok(build_kb(rc.embedder().as_ref(), seed_patterns())?),
    }
}

fn audit(a: AuditArgs) -> Result<u8> {
    let mut rc = run_config(a.config.as_deref())?;
    if let Some(v) = a.k_g {
        rc.k_g = v;
    }
    if let Some(v) = a.confidence_threshold {
        rc.confidence_threshold = v;
    }
    if let Some(v) = a.max_attempts {
        rc.max_attempts = v;
    }
    if let Some(v) = a.top_k {
        rc.top_k = v;
    }
    if let Some(v) = a.in_flight_cap {
        rc.in_flight_cap = v;
    }
    let cache = a.replay_cache.as_ref().map(|dir| CacheSetting {
        dir: dir.clone(),
        mode: if a.replay_only { CacheMode::ReplayOnly } else { CacheMode::Record },
    });
    let cfg = rc.pipeline(a.dry_run, cache.as_ref())?;
    let ast = load_codebase(&a.codebase)?;
    let embedder = rc.embedder();
    let kb = load_kb(a.kb.as_deref(), &rc)?;
    let clock: Box<dyn Clock> = if cache.is_some() { Box::new(NullClock) } else { Box::new(SystemClock::default()) };
    let outcome = run_audit(&ast, &cfg, &kb, embedder.as_ref(), clock.as_ref())?;
    let project = rc.project_id.clone().unwrap_or_else(|| project_name(&a.codebase));
    let report = build_report(&project, &outcome, &rc.prices());

    let report_json = report.to_json();
    emit(Some(&a.out.join("report.json")), &report_json)?;
    emit(Some(&a.out.join("report.md")), &render_report(&report, ReportFormat::Markdown))?;
    emit(Some(&a.out.join("graph.json")), &pretty(&outcome))?;
    emit(None, &render_report(&report, a.format.into()))?;

    let bypasses: usize = report.transaction_flows.iter().map(|f| f.bypasses.len()).sum();
    Ok(if bypasses > 0 { EXIT_FINDINGS } else { 0 })
}

fn extract(a: ExtractArgs) -> Result<()> {
    let rc = run_config(a.config.as_deref())?;
    let ast = load_codebase(&a.codebase)?;
    let ex = extract_transaction_nodes(&ast, &rc.event_patterns)?;
    for d in &ex.diagnostics {
        eprintln!("{d}");
    }
    emit(a.out.as_deref(), &pretty(&ex.nodes))
}

fn pick_node(doc: serde_json::Value, entrypoint: Option<&str>) -> Result<TransactionNode> {
    let nodes: Vec<TransactionNode> = match doc {
        serde_json::Value::Array(_) => serde_json::from_value(doc)?,
        other => vec![serde_json::from_value(other)?],
    };
    let mut hits: Vec<TransactionNode> = match entrypoint {
        Some(e) => nodes.into_iter().filter(|n| n.entrypoint.0 == e).collect(),
        None => nodes,
    };
    match hits.len() {
        1 => Ok(hits.remove(0)),
        0 => bail!("no transaction flow matches"),
        n => bail!("{n} transaction flows match; pick one with --entrypoint"),
    }
}

fn slice_one(ast: &CanonicalAst, node: &TransactionNode, params: &[String]) -> Result<serde_json::Value> {
    let model = TaintModel::build(ast, &node.members)?;
    let mut out = Vec::new();
    for p in params {
        let seeds = model.seeds_for(&node.entrypoint, p)?;
        let taint = model.propagate(&seeds)?;
        let s = slice_with(&model, ast, &taint);
        out.push(json!({
            "parameter": p,
            "slice_text": reformat(&s),
            "covered_node_ids": s.covered_node_ids,
            "token_estimate": s.token_estimate,
        }));
    }
    Ok(serde_json::Value::Array(out))
}

fn slice(a: SliceArgs) -> Result<()> {
    let ast = load_codebase(&a.codebase)?;
    let node = pick_node(read_json(&a.node)?, a.entrypoint.as_deref())?;
    let unique: Vec<String> = a.params.iter().collect::<BTreeSet<_>>().into_iter().cloned().collect();
    emit(a.out.as_deref(), &pretty(&slice_one(&ast, &node, &unique)?))
}

fn kb(k: KbCommand) -> Result<()> {
    match k {
        KbCommand::Build { patterns, config, out } => {
            let rc = run_config(config.as_deref())?;
            let pats: Vec<KnowledgePattern> = match patterns {
                Some(p) => read_json(&p)?,
                None => seed_patterns(),
            };
            let kb = build_kb(rc.embedder().as_ref(), pats)?;
            emit(Some(&out), &kb.to_json())?;
            eprintln!("{} patterns, {} dims -> {}", kb.len(), kb.dims, out.display());
            Ok(())
        }
        KbCommand::Query {
            kb,
            text,
            file,
            config,
            threshold,
            top_k,
        } => {
            let rc = run_config(config.as_deref())?;
            let kb = KnowledgeBase::load(&kb)?;
            let query = match (text, file) {
                (Some(t), _) => t,
                (None, Some(f)) => std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?,
                (None, None) => unreachable!("clap requires one"),
            };
            let hits = retrieve(
                &kb,
                rc.embedder().as_ref(),
                &query,
                threshold.unwrap_or(rc.kb_similarity),
                top_k.unwrap_or(rc.top_k),
            )?;
            emit(None, &pretty(&hits))
        }
    }
}

fn parse_counts(s: &str) -> Result<(u64, u64, u64)> {
    let v: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!("--counts {s:?}: {e}"))?;
    match v[..] {
        [tp, fn_, fp] => Ok((tp, fn_, fp)),
        _ => bail!("--counts takes tp,fn,fp"),
    }
}

fn metrics_text(m: &Metrics) -> String {
    let mut s = format!(
        "tp {} fn {} fp {}\nrecall {}\nprecision {}\nf1 {}\n",
        m.tp, m.fn_, m.fp, m.display.recall, m.display.precision, m.display.f1
    );
    if m.zero_division {
        s.push_str("note: zero denominator, affected metrics reported as 0\n");
    }
    s
}

fn eval(a: EvalArgs) -> Result<()> {
    let (doc, text) = match (&a.counts, &a.report, &a.truth) {
        (Some(c), _, _) => {
            let (tp, fn_, fp) = parse_counts(c)?;
            let m = Metrics::from_counts(tp, fn_, fp);
            (pretty(&m), metrics_text(&m))
        }
        (None, Some(r), Some(t)) => {
            let report = AuditReport::from_json(&std::fs::read_to_string(r)?)?;
            let truth: GroundTruth = read_json(t)?;
            let adj: Option<Adjudication> = a.adjudication.as_deref().map(read_json).transpose()?;
            let e = compute_metrics(&predictions_from_report(&report), &truth, &ExactFieldMatcher, adj.as_ref())?;
            let mut text = metrics_text(&e.metrics);
            for p in &e.points {
                text.push_str(&format!("{} {:?}\n", p.point_id, p.verdict));
            }
            text.push_str(&format!("unscored predictions {}\n", e.unscored));
            (pretty(&e), text)
        }
        _ => bail!("eval needs --counts, or --report with --truth"),
    };
    emit(a.out.as_deref(), if a.format == EvalFormat::Document { &doc } else { &text })
}

/// Transcript files are `<64 hex>.json`.
fn transcripts(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        let is_transcript = p.extension().is_some_and(|x| x == "json")
            && p.file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit()));
        if is_transcript && p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn cache(c: CacheCommand) -> Result<()> {
    match c {
        CacheCommand::List { dir } => {
            let files = transcripts(&dir)?;
            let mut bytes = 0u64;
            for f in &files {
                let len = f.metadata()?.len();
                bytes += len;
                println!("{} {len}", f.file_name().unwrap().to_string_lossy());
            }
            eprintln!("{} transcript(s), {bytes} bytes", files.len());
        }
        CacheCommand::Clear { dir } => {
            let files = transcripts(&dir)?;
            for f in &files {
                std::fs::remove_file(f).with_context(|| format!("removing {}", f.display()))?;
            }
            eprintln!("removed {} transcript(s)", files.len());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn counts_parse() {
        assert_eq!(parse_counts("270, 24,25").unwrap(), (270, 24, 25));
        assert!(parse_counts("1,2").is_err());
        assert!(parse_counts("a,b,c").is_err());
    }
}

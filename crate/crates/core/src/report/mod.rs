//! Audit report assembly, rendering, usage accounting and evaluation metrics.

pub mod metrics;
pub mod usage;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use metrics::{
    compute_metrics, predictions_from_report, Adjudication, AuditPoint, Evaluation, ExactFieldMatcher, GroundTruth,
    Matcher, Metrics, MetricsError, PointLayer, Prediction, Verdict,
};
pub use usage::{account_usage, cost_display, Price, PriceTable, UsageRecord, UsageSummary};

use crate::orchestrator::AuditThought;
use crate::pipeline::{AuditGraph, AuditOutcome, PrunedNode};

pub const REPORT_SCHEMA_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("unsupported report schema version {0}")]
    SchemaVersion(String),
    #[error("unknown format {0} (expected json, document or text)")]
    UnknownFormat(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingFinding {
    pub thought_id: String,
    pub property_name: String,
    pub parameter_name: Option<String>,
    pub code_location: Option<String>,
    pub score: u8,
    pub provenance: Vec<String>,
    /// Thought ids from this finding's thought up to the root.
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub thought_id: String,
    pub parameter: String,
    pub properties: Vec<String>,
    pub covered_nodes: usize,
    pub token_estimate: u64,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFinding {
    pub thought_id: String,
    pub parameter: String,
    pub rule_id: String,
    pub checklist_item: u64,
    pub checklist_text: String,
    pub status: String,
    pub snippet: Option<String>,
    pub score: u8,
    pub provenance: Vec<String>,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BypassFinding {
    pub thought_id: String,
    pub parameter: String,
    pub bypass_title: String,
    pub preconditions: Vec<String>,
    pub steps: Vec<String>,
    pub poc_sketch: String,
    pub severity: String,
    pub retrieved_patterns: Vec<String>,
    pub score: u8,
    pub provenance: Vec<String>,
    pub path: Vec<String>,
}

/// Everything derived from one transaction node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionFlow {
    pub thought_id: String,
    pub entrypoint: String,
    pub anchor_event: String,
    pub side_hint: String,
    pub members: Vec<String>,
    pub mappings: Vec<MappingFinding>,
    pub slices: Vec<SliceSummary>,
    pub rule_findings: Vec<RuleFinding>,
    pub bypasses: Vec<BypassFinding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: String,
    pub project_id: String,
    pub transaction_flows: Vec<TransactionFlow>,
    pub pruned_subtrees: Vec<PrunedNode>,
    pub diagnostics: Vec<String>,
    pub usage: UsageSummary,
}

fn s(v: &Value) -> String {
    v.as_str().unwrap_or_default().to_string()
}

fn opt_s(v: &Value) -> Option<String> {
    v.as_str().map(str::to_string)
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array().into_iter().flatten().filter_map(|x| x.as_str().map(str::to_string)).collect()
}

fn score(v: &Value, fallback: u8) -> u8 {
    v["score"].as_u64().map_or(fallback, |n| n.min(100) as u8)
}

fn provenance(v: &Value, fallback: &[String]) -> Vec<String> {
    match v["provenance"].as_array() {
        Some(_) => strings(&v["provenance"]),
        None => fallback.to_vec(),
    }
}

fn descendants<'a>(g: &'a AuditGraph, of: &'a AuditThought, layer: u8) -> Vec<&'a AuditThought> {
    let mut frontier = vec![of];
    for _ in of.layer..layer {
        frontier = frontier.into_iter().flat_map(|t| g.children(&t.thought_id)).collect();
    }
    frontier
}

fn flow(g: &AuditGraph, tx: &AuditThought) -> TransactionFlow {
    let c = &tx.content;
    let mut f = TransactionFlow {
        thought_id: tx.thought_id.clone(),
        entrypoint: s(&c["entrypoint"]),
        anchor_event: s(&c["anchor_event"]),
        side_hint: s(&c["side_hint"]),
        members: strings(&c["members"]),
        mappings: Vec::new(),
        slices: Vec::new(),
        rule_findings: Vec::new(),
        bypasses: Vec::new(),
    };
    for t in descendants(g, tx, 2) {
        let path = g.path_to_root(&t.thought_id);
        for m in t.content["mappings"].as_array().into_iter().flatten() {
            f.mappings.push(MappingFinding {
                thought_id: t.thought_id.clone(),
                property_name: s(&m["property_name"]),
                parameter_name: opt_s(&m["parameter_name"]),
                code_location: opt_s(&m["code_location"]),
                score: score(m, t.score),
                provenance: provenance(m, &t.provenance),
                path: path.clone(),
            });
        }
    }
    for t in descendants(g, tx, 3) {
        let c = &t.content;
        f.slices.push(SliceSummary {
            thought_id: t.thought_id.clone(),
            parameter: s(&c["parameter"]),
            properties: strings(&c["properties"]),
            covered_nodes: c["covered_node_ids"].as_array().map_or(0, Vec::len),
            token_estimate: c["token_estimate"].as_u64().unwrap_or(0),
            path: g.path_to_root(&t.thought_id),
        });
    }
    for t in descendants(g, tx, 4) {
        let path = g.path_to_root(&t.thought_id);
        for r in t.content["findings"].as_array().into_iter().flatten() {
            f.rule_findings.push(RuleFinding {
                thought_id: t.thought_id.clone(),
                parameter: s(&t.content["parameter"]),
                rule_id: s(&r["rule_id"]),
                checklist_item: r["checklist_item"].as_u64().unwrap_or(0),
                checklist_text: s(&r["checklist_text"]),
                status: s(&r["status"]),
                snippet: opt_s(&r["snippet"]),
                score: score(r, t.score),
                provenance: provenance(r, &t.provenance),
                path: path.clone(),
            });
        }
    }
    for t in descendants(g, tx, 5) {
        let path = g.path_to_root(&t.thought_id);
        for b in t.content["bypasses"].as_array().into_iter().flatten() {
            f.bypasses.push(BypassFinding {
                thought_id: t.thought_id.clone(),
                parameter: s(&t.content["parameter"]),
                bypass_title: s(&b["bypass_title"]),
                preconditions: strings(&b["preconditions"]),
                steps: strings(&b["steps"]),
                poc_sketch: s(&b["poc_sketch"]),
                severity: s(&b["severity"]),
                retrieved_patterns: strings(&t.content["retrieved_patterns"]),
                score: score(b, t.score),
                provenance: provenance(b, &t.provenance),
                path: path.clone(),
            });
        }
    }
    f
}

pub fn build_report(project_id: &str, outcome: &AuditOutcome, prices: &PriceTable) -> AuditReport {
    let records: Vec<UsageRecord> = outcome.calls.iter().map(UsageRecord::from).collect();
    let mut usage = account_usage(&records, prices);
    usage.layers = outcome.layer_times.clone();
    let g = &outcome.graph;
    AuditReport {
        schema_version: REPORT_SCHEMA_VERSION.into(),
        project_id: project_id.into(),
        transaction_flows: g.layer(1).map(|t| flow(g, t)).collect(),
        pruned_subtrees: g.pruned.clone(),
        diagnostics: g.diagnostics.clone(),
        usage,
    }
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let r: AuditReport = serde_json::from_str(text)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ReportError::SchemaVersion(r.schema_version));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// The versioned JSON report document.
    Document,
    Markdown,
    /// Compact line-oriented summary.
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "document" | "json" => Ok(ReportFormat::Document),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "text" => Ok(ReportFormat::Text),
            other => Err(ReportError::UnknownFormat(other.into())),
        }
    }
}

pub fn render_report(r: &AuditReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Document => r.to_json(),
        ReportFormat::Markdown => render_markdown(r),
        ReportFormat::Text => render_text(r),
    }
}

fn path_str(p: &[String]) -> String {
    p.join(" <- ")
}

fn code(s: &Option<String>) -> String {
    s.as_deref().map_or_else(|| "-".to_string(), |c| format!("`{}`", c.replace('`', "'")))
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|")
}

// writes to a String cannot fail
fn render_markdown(r: &AuditReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "# Audit report: {}\n", r.project_id);
    let bypasses: usize = r.transaction_flows.iter().map(|f| f.bypasses.len()).sum();
    let missing: usize = r
        .transaction_flows
        .iter()
        .flat_map(|f| &f.rule_findings)
        .filter(|x| x.status == "missing")
        .count();
    let _ = writeln!(
        o,
        "{} transaction flows, {} missing checks, {} bypass hypotheses, {} pruned subtrees.\n",
        r.transaction_flows.len(),
        missing,
        bypasses,
        r.pruned_subtrees.len()
    );
    for f in &r.transaction_flows {
        let _ = writeln!(o, "## {} ({})\n", f.entrypoint, f.thought_id);
        let _ = writeln!(o, "- anchor event: `{}`", f.anchor_event);
        let _ = writeln!(o, "- side: {}", f.side_hint);
        let _ = writeln!(o, "- functions: {}\n", f.members.join(", "));
        if !f.mappings.is_empty() {
            let _ = writeln!(o, "### Property mapping\n");
            let _ = writeln!(o, "| property | parameter | location | score | thought |");
            let _ = writeln!(o, "|---|---|---|---|---|");
            for m in &f.mappings {
                let _ = writeln!(
                    o,
                    "| {} | {} | {} | {} | {} |",
                    m.property_name,
                    m.parameter_name.as_deref().unwrap_or("-"),
                    cell(&code(&m.code_location)),
                    m.score,
                    m.thought_id
                );
            }
            o.push('\n');
        }
        if !f.rule_findings.is_empty() {
            let _ = writeln!(o, "### Constraint checks\n");
            let _ = writeln!(o, "| parameter | rule | item | status | evidence | score | thought |");
            let _ = writeln!(o, "|---|---|---|---|---|---|---|");
            for x in &f.rule_findings {
                let _ = writeln!(
                    o,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    x.parameter,
                    x.rule_id,
                    x.checklist_item,
                    x.status,
                    cell(&code(&x.snippet)),
                    x.score,
                    x.thought_id
                );
            }
            o.push('\n');
        }
        if !f.bypasses.is_empty() {
            let _ = writeln!(o, "### Bypass hypotheses\n");
            for b in &f.bypasses {
                let _ = writeln!(o, "#### {} [{}, score {}]\n", b.bypass_title, b.severity, b.score);
                let _ = writeln!(o, "- parameter: {}", b.parameter);
                let _ = writeln!(o, "- path: {}", path_str(&b.path));
                let _ = writeln!(o, "- models: {}", b.provenance.join(", "));
                if !b.retrieved_patterns.is_empty() {
                    let _ = writeln!(o, "- patterns: {}", b.retrieved_patterns.join(", "));
                }
                let _ = writeln!(o, "\nPreconditions:\n");
                for p in &b.preconditions {
                    let _ = writeln!(o, "- {p}");
                }
                let _ = writeln!(o, "\nSteps:\n");
                for (i, st) in b.steps.iter().enumerate() {
                    let _ = writeln!(o, "{}. {st}", i + 1);
                }
                let _ = writeln!(o, "\n```\n{}\n```\n", b.poc_sketch);
            }
        }
    }
    if !r.pruned_subtrees.is_empty() {
        let _ = writeln!(o, "## Pruned subtrees\n");
        for p in &r.pruned_subtrees {
            let _ = writeln!(o, "- {} at layer {}: {}", p.parent_id, p.layer, p.reason);
        }
        o.push('\n');
    }
    if !r.diagnostics.is_empty() {
        let _ = writeln!(o, "## Diagnostics\n");
        for d in &r.diagnostics {
            let _ = writeln!(o, "- {d}");
        }
        o.push('\n');
    }
    let u = &r.usage;
    let _ = writeln!(o, "## Usage\n");
    let _ = writeln!(o, "| model | calls | input tokens | output tokens | cost |");
    let _ = writeln!(o, "|---|---|---|---|---|");
    for b in &u.bindings {
        let _ = writeln!(
            o,
            "| {} | {} | {} | {} | {} |",
            b.binding,
            b.calls,
            b.input_tokens,
            b.output_tokens,
            cost_display(b.cost_usd)
        );
    }
    let _ = writeln!(
        o,
        "| total | {} | {} | {} | {} |",
        u.calls, u.input_tokens, u.output_tokens, u.cost_display
    );
    if !u.unpriced.is_empty() {
        let _ = writeln!(o, "\nNo price configured for: {}.", u.unpriced.join(", "));
    }
    o
}

fn render_text(r: &AuditReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "project {}", r.project_id);
    for f in &r.transaction_flows {
        let _ = writeln!(o, "flow {} {} [{}] event {}", f.thought_id, f.entrypoint, f.side_hint, f.anchor_event);
        for m in &f.mappings {
            let _ = writeln!(
                o,
                "  map {} -> {} ({})",
                m.property_name,
                m.parameter_name.as_deref().unwrap_or("none"),
                m.score
            );
        }
        for x in &f.rule_findings {
            let _ = writeln!(
                o,
                "  check {} {}#{} {} ({})",
                x.parameter, x.rule_id, x.checklist_item, x.status, x.score
            );
        }
        for b in &f.bypasses {
            let _ = writeln!(o, "  bypass [{}] {} ({}) {}", b.severity, b.bypass_title, b.score, path_str(&b.path));
        }
    }
    for p in &r.pruned_subtrees {
        let _ = writeln!(o, "pruned {} layer {}: {}", p.parent_id, p.layer, p.reason);
    }
    let u = &r.usage;
    let _ = writeln!(
        o,
        "usage calls {} input {} output {} cost {}",
        u.calls, u.input_tokens, u.output_tokens, u.cost_display
    );
    o
}

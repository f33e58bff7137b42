//! The five-layer audit: static extraction, property mapping, slicing,
//! constraint checking and bypass exploration, assembled into a graph.

pub mod offline;
pub mod prompts;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use offline::OfflineProvider;

use crate::callgraph::{build_call_graph, default_event_patterns, extract_transaction_nodes, CallGraph, EventPattern, SideHint, TransactionNode};
use crate::frontend::CanonicalAst;
use crate::orchestrator::{
    aggregate, evaluate, generate, AuditThought, CallLog, CallRecord, CallScope, LayerSchema, ModelBinding, Prompt,
    RuleShape, DEFAULT_CONFIDENCE, DEFAULT_K_G,
};
use crate::semantic::{retrieve, similarity, state_context, Embedder, KnowledgeBase};
use crate::taint::slice::slice_with;
use crate::taint::{reformat, TaintModel};
use crate::verification::{catalog_entries, properties_for_side, PropertySpec, Side};

pub const STATIC_ANALYSIS: &str = "static-analysis";
pub const ROOT_ID: &str = "L0#0";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("codebase has no source files")]
    EmptyCodebase,
    #[error(transparent)]
    CallGraph(#[from] crate::callgraph::CallGraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub confidence: u8,
    pub prune_sim: f64,
    pub kb_sim: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            confidence: DEFAULT_CONFIDENCE,
            prune_sim: 0.85,
            kb_sim: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub event_patterns: Vec<EventPattern>,
    pub ensemble: Vec<ModelBinding>,
    pub evaluator: Option<ModelBinding>,
    pub k_g: usize,
    pub thresholds: Thresholds,
    pub top_k: usize,
    pub in_flight_cap: usize,
    /// Run Layer 1 only, without any provider call.
    pub dry_run: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            event_patterns: default_event_patterns(),
            ensemble: Vec::new(),
            evaluator: None,
            k_g: DEFAULT_K_G,
            thresholds: Thresholds::default(),
            top_k: crate::semantic::kb::DEFAULT_TOP_K,
            in_flight_cap: 8,
            dry_run: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        let t = &self.thresholds;
        if t.confidence > 100 {
            return err(format!("confidence threshold {} outside 0..=100", t.confidence));
        }
        for (k, v) in [("prune_sim", t.prune_sim), ("kb_sim", t.kb_sim)] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{k} {v} outside [0, 1]"));
            }
        }
        if self.in_flight_cap == 0 {
            return err("in_flight_cap must be at least 1".into());
        }
        if self.event_patterns.is_empty() {
            return err("no event patterns".into());
        }
        if self.dry_run {
            return Ok(());
        }
        if self.k_g == 0 || self.k_g > self.ensemble.len() {
            return err(format!("k_G {} must be within 1..={} (ensemble size)", self.k_g, self.ensemble.len()));
        }
        if self.evaluator.is_none() {
            return err("exactly one evaluator binding is required".into());
        }
        for b in self.ensemble.iter().chain(&self.evaluator) {
            b.sampling.validate().map_err(|e| PipelineError::Config(format!("{}: {e}", b.name)))?;
            if b.max_attempts == 0 {
                return err(format!("{}: max_attempts must be at least 1", b.name));
            }
        }
        Ok(())
    }
}

/// Milliseconds since an arbitrary origin.
pub trait Clock: Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Always zero; used for replayable runs.
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedNode {
    pub parent_id: String,
    /// Layer whose operator pruned it.
    pub layer: u8,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditGraph {
    pub nodes: BTreeMap<String, AuditThought>,
    pub edges: BTreeSet<(String, String)>,
    pub layer_index: BTreeMap<u8, Vec<String>>,
    pub pruned: Vec<PrunedNode>,
    pub diagnostics: Vec<String>,
}

impl AuditGraph {
    pub fn layer(&self, t: u8) -> impl Iterator<Item = &AuditThought> {
        self.layer_index
            .get(&t)
            .into_iter()
            .flatten()
            .filter_map(|id| self.nodes.get(id))
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a AuditThought> + 'a {
        self.edges
            .iter()
            .filter(move |(p, _)| p == id)
            .filter_map(|(_, c)| self.nodes.get(c))
    }

    /// Ancestor chain from `id` up to the root, inclusive.
    pub fn path_to_root(&self, id: &str) -> Vec<String> {
        let mut out = vec![id.to_string()];
        let mut cur = self.nodes.get(id);
        while let Some(p) = cur.and_then(|t| t.parent_id.as_ref()) {
            out.push(p.clone());
            cur = self.nodes.get(p);
        }
        out
    }

    fn insert(&mut self, t: AuditThought) {
        if let Some(p) = &t.parent_id {
            self.edges.insert((p.clone(), t.thought_id.clone()));
        }
        self.layer_index.entry(t.layer).or_default().push(t.thought_id.clone());
        self.nodes.insert(t.thought_id.clone(), t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTime {
    pub layer: u8,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditOutcome {
    pub graph: AuditGraph,
    pub calls: Vec<CallRecord>,
    pub layer_times: Vec<LayerTime>,
}

/// Produced for one parent by one layer, before ids are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct Child {
    pub content: Value,
    pub score: u8,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeResult {
    Children(Vec<Child>),
    Pruned(String),
}

/// Side-specific inputs shared by the layers.
fn side_props(side: SideHint) -> Vec<PropertySpec> {
    match side {
        SideHint::Source => properties_for_side(Side::Source),
        SideHint::Destination => properties_for_side(Side::Destination),
        SideHint::Unknown => {
            let mut all = properties_for_side(Side::Source);
            for p in properties_for_side(Side::Destination) {
                if !all.iter().any(|q| q.name == p.name) {
                    all.push(p);
                }
            }
            all
        }
    }
}

fn side_rules(side: SideHint) -> Vec<crate::verification::CatalogEntry> {
    catalog_entries()
        .into_iter()
        .filter(|e| match side {
            SideHint::Source => e.side == Side::Source,
            SideHint::Destination => e.side == Side::Destination,
            SideHint::Unknown => true,
        })
        .collect()
}

fn str_of<'v>(v: &'v Value, key: &str) -> &'v str {
    v[key].as_str().unwrap_or_default()
}

/// Runs layers over one codebase with one configuration.
pub struct Auditor<'a> {
    pub ast: &'a CanonicalAst,
    pub cfg: &'a PipelineConfig,
    pub kb: &'a KnowledgeBase,
    pub embedder: &'a dyn Embedder,
    pub log: CallLog,
    graph: CallGraph,
    tx_nodes: Vec<TransactionNode>,
}

impl<'a> Auditor<'a> {
    pub fn new(
        ast: &'a CanonicalAst,
        cfg: &'a PipelineConfig,
        kb: &'a KnowledgeBase,
        embedder: &'a dyn Embedder,
    ) -> Result<Self, PipelineError> {
        cfg.validate()?;
        if ast.files.is_empty() {
            return Err(PipelineError::EmptyCodebase);
        }
        Ok(Auditor {
            ast,
            cfg,
            kb,
            embedder,
            log: CallLog::default(),
            graph: build_call_graph(ast),
            tx_nodes: Vec::new(),
        })
    }

    pub fn root(&self) -> AuditThought {
        let files: Vec<&str> = self.ast.files.iter().map(|f| f.file_id.as_str()).collect();
        AuditThought {
            thought_id: ROOT_ID.into(),
            layer: 0,
            parent_id: None,
            content: json!({ "kind": "codebase", "files": files, "contracts": self.ast.contracts().count() }),
            score: 100,
            provenance: vec![STATIC_ANALYSIS.into()],
        }
    }

    fn tx(&self, content: &Value) -> Option<&TransactionNode> {
        content["tx_index"].as_u64().and_then(|i| self.tx_nodes.get(i as usize))
    }

    /// Layer 1 needs `&mut self` to remember the extracted nodes.
    pub fn extract(&mut self) -> Result<(NodeResult, Vec<String>), PipelineError> {
        let ex = extract_transaction_nodes(self.ast, &self.cfg.event_patterns)?;
        self.tx_nodes = ex.nodes;
        let children = self
            .tx_nodes
            .iter()
            .enumerate()
            .map(|(i, n)| Child {
                content: json!({
                    "kind": "transaction_node",
                    "tx_index": i,
                    "entrypoint": n.entrypoint,
                    "anchor_event": n.anchor_event,
                    "side_hint": n.side_hint,
                    "members": n.members,
                    "anchor_functions": n.anchor_functions,
                    "code_text": n.code_text,
                }),
                score: 100,
                provenance: vec![STATIC_ANALYSIS.into()],
            })
            .collect();
        Ok((NodeResult::Children(children), ex.diagnostics))
    }

    /// Layers 2 to 5 for one parent.
    pub fn run_node(&self, t: u8, parent: &AuditThought) -> NodeResult {
        let Some(tx) = self.tx(&parent.content) else {
            return NodeResult::Pruned("parent carries no transaction node".into());
        };
        match t {
            2 => self.map_properties(parent, tx),
            3 => self.slice_parameters(parent, tx),
            4 => self.check_constraints(parent, tx),
            5 => self.find_bypasses(parent, tx),
            _ => NodeResult::Pruned(format!("layer {t} has no per-node operator")),
        }
    }

    /// Layers 2..=5 over all parents, concurrently, results in parent order.
    pub fn run_layer(&self, t: u8, parents: &[AuditThought]) -> Vec<NodeResult> {
        parents.par_iter().map(|p| self.run_node(t, p)).collect()
    }

    fn scope<'s>(&'s self, t: u8, node: &'s str) -> CallScope<'s> {
        CallScope {
            log: &self.log,
            layer: t,
            node,
        }
    }

    fn text_sim(&self, a: &str, b: &str) -> f64 {
        match (self.embedder.embed(a), self.embedder.embed(b)) {
            (Ok(x), Ok(y)) => similarity(&x, &y).unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// generate → aggregate → evaluate. `merge_group` limits similarity
    /// merging to findings about the same subject; `sem_text` is what gets
    /// embedded; `eval_group` picks one finding per group.
    #[allow(clippy::too_many_arguments)]
    fn llm_step(
        &self,
        t: u8,
        node: &str,
        prompt: &Prompt,
        schema: &LayerSchema,
        merge_group: &(dyn Fn(&Value) -> String + Sync),
        sem_text: &(dyn Fn(&Value) -> String + Sync),
        eval_group: &dyn Fn(&Value) -> String,
    ) -> Result<Vec<(Value, u8, Vec<String>)>, String> {
        let scope = self.scope(t, node);
        let generation =
            generate(scope, prompt, &self.cfg.ensemble, self.cfg.k_g, schema).map_err(|e| e.to_string())?;
        let sim = |a: &Value, b: &Value| {
            if merge_group(a) != merge_group(b) {
                return 0.0;
            }
            self.text_sim(&sem_text(a), &sem_text(b))
        };
        let merged =
            aggregate(&generation.candidates, &sim, self.cfg.thresholds.prune_sim).map_err(|e| e.to_string())?;
        let evaluator = self.cfg.evaluator.as_ref().expect("validated");
        match evaluate(scope, &merged, prompt, evaluator, self.cfg.thresholds.confidence, eval_group) {
            Ok(e) => Ok(e.selected.into_iter().map(|s| (s.content, s.score, s.provenance)).collect()),
            Err(p) => Err(p.to_string()),
        }
    }

    fn map_properties(&self, parent: &AuditThought, tx: &TransactionNode) -> NodeResult {
        let Some(entry) = self.ast.function(&tx.entrypoint) else {
            return NodeResult::Pruned(format!("unknown entrypoint {}", tx.entrypoint));
        };
        let props = side_props(tx.side_hint);
        let schema = LayerSchema::Mapping {
            properties: props.iter().map(|p| p.name.clone()).collect(),
            input: tx.code_text.clone(),
        };
        let params: Vec<Value> = entry
            .function
            .params
            .iter()
            .map(|p| json!({ "name": p.name, "type": p.declared_type }))
            .collect();
        let ctx = json!({
            "entrypoint": tx.entrypoint,
            "side": tx.side_hint,
            "anchor_event": tx.anchor_event,
            "parameters": params,
            "properties": props,
            "code": tx.code_text,
        });
        let prompt = prompts::mapping_prompt(&schema, &ctx);
        let by_prop = |v: &Value| str_of(v, "property_name").to_string();
        let text = |v: &Value| format!("{} {}", str_of(v, "parameter_name"), str_of(v, "code_location"));
        match self.llm_step(2, &parent.thought_id, &prompt, &schema, &by_prop, &text, &by_prop) {
            Err(reason) => NodeResult::Pruned(reason),
            Ok(selected) => {
                let score = selected.iter().map(|s| s.1).max().unwrap_or(0);
                let mut provenance = Vec::new();
                let mappings: Vec<Value> = selected
                    .into_iter()
                    .map(|(mut c, s, p)| {
                        for q in &p {
                            if !provenance.contains(q) {
                                provenance.push(q.clone());
                            }
                        }
                        c["score"] = json!(s);
                        c["provenance"] = json!(p);
                        c
                    })
                    .collect();
                NodeResult::Children(vec![Child {
                    content: json!({
                        "kind": "mappings",
                        "tx_index": parent.content["tx_index"],
                        "entrypoint": tx.entrypoint,
                        "side_hint": tx.side_hint,
                        "mappings": mappings,
                    }),
                    score,
                    provenance,
                }])
            }
        }
    }

    fn slice_parameters(&self, parent: &AuditThought, tx: &TransactionNode) -> NodeResult {
        // distinct mapped parameters, first-seen order
        let mut params: Vec<(String, Vec<String>)> = Vec::new();
        for m in parent.content["mappings"].as_array().into_iter().flatten() {
            let Some(p) = m["parameter_name"].as_str() else { continue };
            let prop = str_of(m, "property_name").to_string();
            match params.iter_mut().find(|(q, _)| q == p) {
                Some((_, props)) => props.push(prop),
                None => params.push((p.to_string(), vec![prop])),
            }
        }
        if params.is_empty() {
            return NodeResult::Pruned("no mapped parameters".into());
        }
        let model = match TaintModel::build(self.ast, &tx.members) {
            Ok(m) => m,
            Err(e) => return NodeResult::Pruned(e.to_string()),
        };
        let mut children = Vec::new();
        let mut notes = Vec::new();
        for (param, props) in params {
            let seeds = match model.seeds_for(&tx.entrypoint, &param) {
                Ok(s) => s,
                Err(e) => {
                    notes.push(format!("{param}: {e}"));
                    continue;
                }
            };
            let taint = match model.propagate(&seeds) {
                Ok(t) => t,
                Err(e) => {
                    notes.push(format!("{param}: {e}"));
                    continue;
                }
            };
            let s = slice_with(&model, self.ast, &taint);
            if s.is_empty() {
                notes.push(format!("{param}: empty slice"));
                continue;
            }
            children.push(Child {
                content: json!({
                    "kind": "slice",
                    "tx_index": parent.content["tx_index"],
                    "entrypoint": tx.entrypoint,
                    "side_hint": tx.side_hint,
                    "parameter": param,
                    "properties": props,
                    "slice_text": reformat(&s),
                    "covered_node_ids": s.covered_node_ids,
                    "token_estimate": s.token_estimate,
                }),
                score: 100,
                provenance: vec![STATIC_ANALYSIS.into()],
            });
        }
        if children.is_empty() {
            return NodeResult::Pruned(format!("no slice produced: {}", notes.join("; ")));
        }
        NodeResult::Children(children)
    }

    fn check_constraints(&self, parent: &AuditThought, tx: &TransactionNode) -> NodeResult {
        let c = &parent.content;
        let slice_text = str_of(c, "slice_text");
        let rules = side_rules(tx.side_hint);
        let schema = LayerSchema::Constraint {
            rules: rules
                .iter()
                .map(|r| RuleShape {
                    rule_id: r.rule_id.clone(),
                    checklist_len: r.checklist.len(),
                })
                .collect(),
            input: slice_text.to_string(),
        };
        let rules_json: Value = rules
            .iter()
            .map(|r| json!({ "rule_id": r.rule_id, "title": r.title, "dimension": r.dimension, "checklist": r.checklist }))
            .collect();
        let props: Vec<String> = c["properties"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|p| p.as_str().map(str::to_string))
            .collect();
        let ctx = prompts::constraint_context(
            tx.entrypoint.as_str(),
            tx.side_hint.as_str(),
            str_of(c, "parameter"),
            &props,
            &rules_json,
            slice_text,
        );
        let prompt = prompts::constraint_prompt(&schema, &ctx);
        let item_key = |v: &Value| format!("{}#{}", str_of(v, "rule_id"), v["checklist_item"]);
        let text = |v: &Value| format!("{} {}", str_of(v, "status"), str_of(v, "snippet"));
        match self.llm_step(4, &parent.thought_id, &prompt, &schema, &item_key, &text, &item_key) {
            Err(reason) => NodeResult::Pruned(reason),
            Ok(selected) => {
                let score = selected.iter().map(|s| s.1).max().unwrap_or(0);
                let mut provenance: Vec<String> = Vec::new();
                let findings: Vec<Value> = selected
                    .into_iter()
                    .map(|(mut f, s, p)| {
                        for q in &p {
                            if !provenance.contains(q) {
                                provenance.push(q.clone());
                            }
                        }
                        let text = rules
                            .iter()
                            .find(|r| r.rule_id == str_of(&f, "rule_id"))
                            .and_then(|r| {
                                f["checklist_item"].as_u64().and_then(|i| r.checklist.get(i as usize - 1))
                            })
                            .cloned()
                            .unwrap_or_default();
                        f["checklist_text"] = json!(text);
                        f["score"] = json!(s);
                        f["provenance"] = json!(p);
                        f
                    })
                    .collect();
                NodeResult::Children(vec![Child {
                    content: json!({
                        "kind": "rule_findings",
                        "tx_index": c["tx_index"],
                        "entrypoint": tx.entrypoint,
                        "side_hint": tx.side_hint,
                        "parameter": c["parameter"],
                        "slice_text": slice_text,
                        "findings": findings,
                    }),
                    score,
                    provenance,
                }])
            }
        }
    }

    fn find_bypasses(&self, parent: &AuditThought, tx: &TransactionNode) -> NodeResult {
        let c = &parent.content;
        let slice_text = str_of(c, "slice_text");
        let state = match state_context(&tx.entrypoint, self.ast, &self.graph) {
            Ok(s) => s,
            Err(e) => return NodeResult::Pruned(e.to_string()),
        };
        let knowledge = match retrieve(self.kb, self.embedder, slice_text, self.cfg.thresholds.kb_sim, self.cfg.top_k) {
            Ok(k) => k,
            Err(e) => return NodeResult::Pruned(format!("knowledge retrieval: {e}")),
        };
        let knowledge_json: Vec<Value> = knowledge
            .iter()
            .map(|k| {
                let mut v = serde_json::to_value(&k.pattern).expect("serialisable");
                v["score"] = json!(k.score);
                v
            })
            .collect();
        let constraints: Vec<Value> = c["findings"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|f| {
                json!({
                    "rule_id": f["rule_id"],
                    "checklist_item": f["checklist_item"],
                    "checklist_text": f["checklist_text"],
                    "status": f["status"],
                    "snippet": f["snippet"],
                })
            })
            .collect();
        let ctx = json!({
            "entrypoint": tx.entrypoint,
            "side": tx.side_hint,
            "parameter": c["parameter"],
            "constraints": constraints,
            "state_context": state,
            "knowledge": knowledge_json,
            "slice": slice_text,
        });
        let schema = LayerSchema::Bypass;
        let prompt = prompts::bypass_prompt(&schema, &ctx, self.cfg.k_g);
        let all = |_: &Value| String::new();
        let text = |v: &Value| {
            let steps: Vec<&str> = v["steps"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
            format!("{} {}", str_of(v, "bypass_title"), steps.join(" "))
        };
        let each = |v: &Value| crate::orchestrator::structural_key(v);
        match self.llm_step(5, &parent.thought_id, &prompt, &schema, &all, &text, &each) {
            Err(reason) => NodeResult::Pruned(reason),
            Ok(selected) => {
                let score = selected.iter().map(|s| s.1).max().unwrap_or(0);
                let mut provenance: Vec<String> = Vec::new();
                let bypasses: Vec<Value> = selected
                    .into_iter()
                    .map(|(mut b, s, p)| {
                        for q in &p {
                            if !provenance.contains(q) {
                                provenance.push(q.clone());
                            }
                        }
                        b["score"] = json!(s);
                        b["provenance"] = json!(p);
                        b
                    })
                    .collect();
                NodeResult::Children(vec![Child {
                    content: json!({
                        "kind": "bypasses",
                        "tx_index": c["tx_index"],
                        "entrypoint": tx.entrypoint,
                        "side_hint": tx.side_hint,
                        "parameter": c["parameter"],
                        "retrieved_patterns": knowledge.iter().map(|k| k.pattern.pattern_id.clone()).collect::<Vec<_>>(),
                        "state_vars": state.state_vars.iter().map(|v| v.name.clone()).collect::<Vec<_>>(),
                        "bypasses": bypasses,
                    }),
                    score,
                    provenance,
                }])
            }
        }
    }
}

/// Drive the root through all layers; layers are barriers, nodes within a
/// layer run concurrently under `in_flight_cap`.
pub fn run_audit(
    ast: &CanonicalAst,
    cfg: &PipelineConfig,
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    clock: &dyn Clock,
) -> Result<AuditOutcome, PipelineError> {
    let mut auditor = Auditor::new(ast, cfg, kb, embedder)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.in_flight_cap)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut graph = AuditGraph::default();
    let root = auditor.root();
    graph.insert(root.clone());
    let mut times = Vec::new();

    let start = clock.now_ms();
    let (l1, diags) = auditor.extract()?;
    graph.diagnostics.extend(diags);
    let mut frontier = attach(&mut graph, 1, &[root], vec![l1]);
    times.push(LayerTime {
        layer: 1,
        wall_ms: clock.now_ms().saturating_sub(start),
    });

    let last = if cfg.dry_run { 1 } else { 5 };
    for t in 2..=last {
        let start = clock.now_ms();
        let results = pool.install(|| auditor.run_layer(t, &frontier));
        frontier = attach(&mut graph, t, &frontier, results);
        times.push(LayerTime {
            layer: t,
            wall_ms: clock.now_ms().saturating_sub(start),
        });
    }
    Ok(AuditOutcome {
        graph,
        calls: auditor.log.records(),
        layer_times: times,
    })
}

/// Barrier join: assign `L{t}#{i}` ids in parent order.
fn attach(graph: &mut AuditGraph, t: u8, parents: &[AuditThought], results: Vec<NodeResult>) -> Vec<AuditThought> {
    let mut next = Vec::new();
    let mut idx = graph.layer_index.get(&t).map_or(0, Vec::len);
    for (parent, r) in parents.iter().zip(results) {
        match r {
            NodeResult::Pruned(reason) => graph.pruned.push(PrunedNode {
                parent_id: parent.thought_id.clone(),
                layer: t,
                reason,
            }),
            NodeResult::Children(children) => {
                for c in children {
                    let th = AuditThought {
                        thought_id: format!("L{t}#{idx}"),
                        layer: t,
                        parent_id: Some(parent.thought_id.clone()),
                        content: c.content,
                        score: c.score,
                        provenance: c.provenance,
                    };
                    idx += 1;
                    graph.insert(th.clone());
                    next.push(th);
                }
            }
        }
    }
    next
}

//! Generation, aggregation and evaluation over an ensemble of chat models,
//! with schema validation and bounded self-correction.

pub mod provider;
pub mod schema;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use provider::{
    key_env_var, write_atomic, CacheMode, CachedProvider, ChatMessage, ChatProvider, ChatRequest, ChatResponse,
    HttpProvider, ProviderError, Sampling, ScriptedProvider, Usage,
};
pub use schema::{collapse_ws, grounded, validate_output, ErrorReport, LayerSchema, RuleShape, Violation};

use crate::semantic::EmbeddingVector;

pub const CORRECTION_TEMPLATE: &str = "[System Error]: The previous generation failed with error: {error_msg}. Please strictly follow the format requirements, ensure the output is valid JSON, and the required fields contain valid and correct information.";

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_K_G: usize = 3;
pub const DEFAULT_CONFIDENCE: u8 = 60;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("all producers failed: {}", discard_summary(.0))]
    AllProducersFailed(Vec<Discard>),
    #[error("aggregate called with no candidates")]
    EmptyInput,
    #[error("invalid orchestration config: {0}")]
    InvalidConfig(String),
}

fn discard_summary(d: &[Discard]) -> String {
    d.iter()
        .map(|x| format!("{} after {} attempt(s): {}", x.producer, x.attempts, x.last_error))
        .collect::<Vec<_>>()
        .join(" | ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Aggregator,
    Evaluator,
}

#[derive(Clone)]
pub struct ModelBinding {
    pub name: String,
    pub model: String,
    pub role: Role,
    pub sampling: Sampling,
    /// Total attempts per request, first try included.
    pub max_attempts: u32,
    pub provider: Arc<dyn ChatProvider>,
}

impl std::fmt::Debug for ModelBinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelBinding")
            .field("name", &self.name)
            .field("model", &self.model)
            .field("role", &self.role)
            .field("provider", &self.provider.name())
            .finish()
    }
}

impl ModelBinding {
    pub fn new(name: &str, role: Role, provider: Arc<dyn ChatProvider>) -> Self {
        ModelBinding {
            name: name.to_string(),
            model: name.to_string(),
            role,
            sampling: Sampling::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            provider,
        }
    }
}

/// A rendered prompt. The user message ends in a `TASK:` line and a fenced
/// JSON `CONTEXT:` block so responders can recover the structured input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub task: String,
    pub system: String,
    pub user: String,
}

const CONTEXT_OPEN: &str = "CONTEXT:\n```json\n";

impl Prompt {
    pub fn new(task: &str, system: &str, instructions: &str, context: &Value) -> Self {
        let ctx = serde_json::to_string_pretty(context).expect("serialisable");
        Prompt {
            task: task.to_string(),
            system: system.to_string(),
            user: format!("{instructions}\n\nTASK: {task}\n{CONTEXT_OPEN}{ctx}\n```\n"),
        }
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![ChatMessage::system(&self.system), ChatMessage::user(&self.user)]
    }

    /// The original prompt followed by the correction template.
    pub fn corrected(&self, error: &ErrorReport) -> Prompt {
        Prompt {
            user: format!("{}\n{}", self.user, correction_message(error)),
            ..self.clone()
        }
    }
}

pub fn correction_message(error: &ErrorReport) -> String {
    CORRECTION_TEMPLATE.replace("{error_msg}", &error.to_string())
}

/// Recover `(task, context)` from a user message built by [`Prompt::new`].
pub fn parse_context(user: &str) -> Option<(String, Value)> {
    let task_at = user.find("\nTASK: ")?;
    let rest = &user[task_at + 7..];
    let (task, rest) = rest.split_once('\n')?;
    let body = rest.strip_prefix(CONTEXT_OPEN)?;
    let end = body.find("\n```")?;
    Some((task.to_string(), serde_json::from_str(&body[..end]).ok()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallOutcome {
    Ok,
    Invalid,
    Failed,
}

/// One provider call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub layer: u8,
    pub node: String,
    pub binding: String,
    pub role: Role,
    /// Finding index for evaluator calls, 0 otherwise.
    pub item: usize,
    pub attempt: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Token counts estimated as ceil(chars / 4).
    pub estimated: bool,
    pub outcome: CallOutcome,
}

#[derive(Debug, Default)]
pub struct CallLog {
    records: Mutex<Vec<CallRecord>>,
}

impl CallLog {
    pub fn push(&self, r: CallRecord) {
        self.records.lock().unwrap().push(r);
    }

    /// Records in a canonical order independent of thread scheduling.
    pub fn records(&self) -> Vec<CallRecord> {
        let mut v = self.records.lock().unwrap().clone();
        v.sort_by(|a, b| {
            (a.layer, &a.node, a.role, &a.binding, a.item, a.attempt).cmp(&(
                b.layer, &b.node, b.role, &b.binding, b.item, b.attempt,
            ))
        });
        v
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where calls are being made from, for accounting.
#[derive(Debug, Clone, Copy)]
pub struct CallScope<'a> {
    pub log: &'a CallLog,
    pub layer: u8,
    pub node: &'a str,
}

fn query(
    scope: CallScope<'_>,
    binding: &ModelBinding,
    prompt: &Prompt,
    item: usize,
    attempt: u32,
) -> Result<String, ProviderError> {
    let req = ChatRequest {
        model: binding.model.clone(),
        messages: prompt.messages(),
        sampling: binding.sampling,
    };
    let res = binding.provider.complete(&req);
    let (input_tokens, output_tokens, estimated) = match &res {
        Ok(ChatResponse { usage: Some(u), .. }) => (u.input_tokens, u.output_tokens, false),
        Ok(r) => (
            req.prompt_chars().div_ceil(4) as u64,
            r.text.chars().count().div_ceil(4) as u64,
            true,
        ),
        Err(_) => (0, 0, true),
    };
    scope.log.push(CallRecord {
        layer: scope.layer,
        node: scope.node.to_string(),
        binding: binding.name.clone(),
        role: binding.role,
        item,
        attempt,
        input_tokens,
        output_tokens,
        estimated,
        outcome: if res.is_ok() { CallOutcome::Ok } else { CallOutcome::Failed },
    });
    res.map(|r| r.text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub producer: String,
    pub attempts: u32,
    pub last_error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discarded;

/// Re-query with the correction template appended to the original prompt.
/// `attempts_left` counts remaining provider calls for this request.
pub fn self_correct(
    scope: CallScope<'_>,
    binding: &ModelBinding,
    original: &Prompt,
    error: &ErrorReport,
    attempts_left: u32,
) -> Result<Result<String, ProviderError>, Discarded> {
    correct_item(scope, binding, original, error, attempts_left, 0)
}

fn correct_item(
    scope: CallScope<'_>,
    binding: &ModelBinding,
    original: &Prompt,
    error: &ErrorReport,
    attempts_left: u32,
    item: usize,
) -> Result<Result<String, ProviderError>, Discarded> {
    if attempts_left == 0 {
        return Err(Discarded);
    }
    let attempt = binding.max_attempts.max(1).saturating_sub(attempts_left) + 1;
    Ok(query(scope, binding, &original.corrected(error), item, attempt))
}

/// Query until the output validates or the budget runs out. Transport
/// failures resend the original prompt since there is no output to
/// correct; validation failures go through [`self_correct`].
fn run_validated(
    scope: CallScope<'_>,
    binding: &ModelBinding,
    prompt: &Prompt,
    schema: &LayerSchema,
    item: usize,
) -> Result<(Vec<Value>, String, u32), Discard> {
    let budget = binding.max_attempts.max(1);
    let discard = |attempts, last_error: String| Discard {
        producer: binding.name.clone(),
        attempts,
        last_error,
    };
    let mut attempts = 1;
    let mut res = query(scope, binding, prompt, item, attempts);
    loop {
        match res {
            Ok(raw) => match validate_output(&raw, schema) {
                Ok(f) => return Ok((f, raw, attempts)),
                Err(report) => {
                    mark_invalid(scope, binding, item, attempts);
                    match correct_item(scope, binding, prompt, &report, budget - attempts, item) {
                        Ok(r) => res = r,
                        Err(Discarded) => return Err(discard(attempts, report.to_string())),
                    }
                }
            },
            Err(e) => {
                tracing::debug!(binding = %binding.name, error = %e, "provider call failed");
                if attempts >= budget {
                    return Err(discard(attempts, e.to_string()));
                }
                res = query(scope, binding, prompt, item, attempts + 1);
            }
        }
        attempts += 1;
    }
}

fn mark_invalid(scope: CallScope<'_>, binding: &ModelBinding, item: usize, attempt: u32) {
    let mut g = scope.log.records.lock().unwrap();
    if let Some(r) = g.iter_mut().rev().find(|r| {
        r.layer == scope.layer
            && r.node == scope.node
            && r.binding == binding.name
            && r.role == binding.role
            && r.item == item
            && r.attempt == attempt
    }) {
        r.outcome = CallOutcome::Invalid;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThoughtCandidate {
    pub layer: u8,
    pub producer: String,
    pub payload: Vec<Value>,
    pub raw_text: String,
    pub confidence: Option<u8>,
    pub embedding: Option<EmbeddingVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generation {
    /// In ensemble order.
    pub candidates: Vec<ThoughtCandidate>,
    pub discards: Vec<Discard>,
    /// `(producer, attempts used)` for every producer queried.
    pub attempts: Vec<(String, u32)>,
}

/// Query the first `k_g` bindings in parallel; each response is validated
/// and self-corrected within the binding's budget, failures are discarded.
pub fn generate(
    scope: CallScope<'_>,
    prompt: &Prompt,
    ensemble: &[ModelBinding],
    k_g: usize,
    schema: &LayerSchema,
) -> Result<Generation, OrchestratorError> {
    if k_g == 0 || ensemble.len() < k_g {
        return Err(OrchestratorError::InvalidConfig(format!(
            "k_G = {k_g} needs 1 <= k_G <= ensemble size {}",
            ensemble.len()
        )));
    }
    let results: Vec<_> = ensemble[..k_g]
        .par_iter()
        .map(|b| (b, run_validated(scope, b, prompt, schema, 0)))
        .collect();
    let mut out = Generation {
        candidates: Vec::new(),
        discards: Vec::new(),
        attempts: Vec::new(),
    };
    for (b, r) in results {
        match r {
            Ok((payload, raw_text, attempts)) => {
                out.attempts.push((b.name.clone(), attempts));
                out.candidates.push(ThoughtCandidate {
                    layer: schema.layer(),
                    producer: b.name.clone(),
                    payload,
                    raw_text,
                    confidence: None,
                    embedding: None,
                });
            }
            Err(d) => {
                tracing::warn!(producer = %d.producer, attempts = d.attempts, error = %d.last_error, "candidate discarded");
                out.attempts.push((b.name.clone(), d.attempts));
                out.discards.push(d);
            }
        }
    }
    if out.candidates.is_empty() {
        return Err(OrchestratorError::AllProducersFailed(out.discards));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedFinding {
    pub content: Value,
    /// Producers in ensemble order.
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedCandidate {
    pub layer: u8,
    pub findings: Vec<MergedFinding>,
}

/// Canonical text of a finding: sorted keys, strings lower-cased with
/// whitespace collapsed.
pub fn structural_key(v: &Value) -> String {
    fn norm(v: &Value) -> Value {
        match v {
            Value::String(s) => Value::String(collapse_ws(s).to_lowercase()),
            Value::Array(a) => Value::Array(a.iter().map(norm).collect()),
            Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), norm(v))).collect()),
            other => other.clone(),
        }
    }
    norm(v).to_string()
}

fn union_into(into: &mut Vec<String>, from: &[String]) {
    for p in from {
        if !into.contains(p) {
            into.push(p.clone());
        }
    }
}

/// Merge equal findings by structural key, then merge findings whose
/// similarity to an earlier kept finding is ≥ `threshold`. Candidates with
/// empty payloads contribute nothing.
pub fn aggregate(
    candidates: &[ThoughtCandidate],
    similarity: &dyn Fn(&Value, &Value) -> f64,
    threshold: f64,
) -> Result<MergedCandidate, OrchestratorError> {
    let Some(first) = candidates.first() else {
        return Err(OrchestratorError::EmptyInput);
    };
    let mut structural: Vec<MergedFinding> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for c in candidates.iter().filter(|c| !c.payload.is_empty()) {
        for f in &c.payload {
            let key = structural_key(f);
            match index.get(&key) {
                Some(&i) => union_into(&mut structural[i].provenance, std::slice::from_ref(&c.producer)),
                None => {
                    index.insert(key, structural.len());
                    structural.push(MergedFinding {
                        content: f.clone(),
                        provenance: vec![c.producer.clone()],
                    });
                }
            }
        }
    }
    let mut kept: Vec<MergedFinding> = Vec::new();
    for f in structural {
        match kept.iter_mut().find(|k| similarity(&k.content, &f.content) >= threshold) {
            Some(k) => union_into(&mut k.provenance, &f.provenance),
            None => kept.push(f),
        }
    }
    Ok(MergedCandidate {
        layer: first.layer,
        findings: kept,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFinding {
    pub content: Value,
    pub provenance: Vec<String>,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Best finding of every group that reached the threshold, in first-seen group order.
    pub selected: Vec<ScoredFinding>,
    /// Score of every merged finding, in order.
    pub scores: Vec<u8>,
    /// Maximum assigned score.
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Pruned {
    NoFindings,
    BelowThreshold { best: u8, threshold: u8 },
    EvaluatorFailed { error: String },
}

impl std::fmt::Display for Pruned {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pruned::NoFindings => f.write_str("no findings to evaluate"),
            Pruned::BelowThreshold { best, threshold } => write!(f, "best score {best} below threshold {threshold}"),
            Pruned::EvaluatorFailed { error } => write!(f, "evaluator failed: {error}"),
        }
    }
}

pub const EVALUATOR_SYSTEM: &str = "You are a senior smart contract security reviewer acting as the evaluator. \
Judge one candidate finding against the task context and score how correct and well supported it is.";

/// The evaluator prompt for one finding of a layer task.
pub fn evaluator_prompt(layer_prompt: &Prompt, finding: &Value) -> Prompt {
    let context = parse_context(&layer_prompt.user).map_or(Value::Null, |(_, c)| c);
    Prompt::new(
        "evaluate",
        EVALUATOR_SYSTEM,
        &format!(
            "Score the candidate finding produced for the task `{}` from 0 (wrong or unsupported) to 100 \
(certainly correct and fully supported by the code). {}",
            layer_prompt.task,
            LayerSchema::Score.format_instructions()
        ),
        &serde_json::json!({ "layer_task": layer_prompt.task, "task_context": context, "finding": finding }),
    )
}

/// Score each merged finding independently with the single evaluator, keep
/// the argmax of every `group_key` group (first wins ties) when it reaches
/// `threshold`, and prune when none does.
pub fn evaluate(
    scope: CallScope<'_>,
    merged: &MergedCandidate,
    layer_prompt: &Prompt,
    evaluator: &ModelBinding,
    threshold: u8,
    group_key: &dyn Fn(&Value) -> String,
) -> Result<Evaluation, Pruned> {
    if merged.findings.is_empty() {
        return Err(Pruned::NoFindings);
    }
    let results: Vec<Result<u8, Discard>> = merged
        .findings
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let p = evaluator_prompt(layer_prompt, &f.content);
            run_validated(scope, evaluator, &p, &LayerSchema::Score, i)
                .map(|(v, _, _)| v[0]["score"].as_u64().unwrap_or(0) as u8)
        })
        .collect();
    let mut scores = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(s) => scores.push(s),
            Err(d) => return Err(Pruned::EvaluatorFailed { error: d.last_error }),
        }
    }
    let best = *scores.iter().max().expect("non-empty");
    let mut groups: Vec<(String, usize)> = Vec::new();
    for (i, f) in merged.findings.iter().enumerate() {
        let k = group_key(&f.content);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, top)) if scores[i] > scores[*top] => *top = i,
            Some(_) => {}
            None => groups.push((k, i)),
        }
    }
    let selected: Vec<ScoredFinding> = groups
        .into_iter()
        .filter(|(_, i)| scores[*i] >= threshold)
        .map(|(_, i)| ScoredFinding {
            content: merged.findings[i].content.clone(),
            provenance: merged.findings[i].provenance.clone(),
            score: scores[i],
        })
        .collect();
    if selected.is_empty() {
        return Err(Pruned::BelowThreshold { best, threshold });
    }
    Ok(Evaluation {
        selected,
        scores,
        score: best,
    })
}

/// One node of the audit graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditThought {
    pub thought_id: String,
    pub layer: u8,
    pub parent_id: Option<String>,
    pub content: Value,
    pub score: u8,
    pub provenance: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted(name: &str, role: Role, script: Vec<&str>) -> (ModelBinding, Arc<ScriptedProvider>) {
        let p = Arc::new(ScriptedProvider::new(name, script.into_iter().map(|s| Ok(s.to_string())).collect()));
        (ModelBinding::new(name, role, p.clone()), p)
    }

    fn prompt() -> Prompt {
        Prompt::new("t", "sys", "do it", &serde_json::json!({ "k": [1, 2] }))
    }

    #[test]
    fn context_round_trips_through_prompt() {
        let p = prompt().corrected(&ErrorReport::single("$", "bad"));
        let (task, ctx) = parse_context(&p.user).unwrap();
        assert_eq!(task, "t");
        assert_eq!(ctx["k"][1], 2);
        assert!(p.user.contains("ensure the output is valid JSON"));
    }

    #[test]
    fn self_correct_zero_budget_discards() {
        let log = CallLog::default();
        let scope = CallScope {
            log: &log,
            layer: 5,
            node: "n",
        };
        let (b, p) = scripted("m", Role::Generator, vec!["[]"]);
        assert_eq!(
            self_correct(scope, &b, &prompt(), &ErrorReport::single("$", "x"), 0),
            Err(Discarded)
        );
        assert_eq!(p.calls(), 0);
    }

    #[test]
    fn correction_then_success() {
        let log = CallLog::default();
        let scope = CallScope {
            log: &log,
            layer: 5,
            node: "n",
        };
        let (b, p) = scripted("m", Role::Generator, vec!["oops", "[]"]);
        let (f, _, attempts) = run_validated(scope, &b, &prompt(), &LayerSchema::Bypass, 0).unwrap();
        assert!(f.is_empty());
        assert_eq!(attempts, 2);
        let reqs = p.requests();
        assert!(reqs[1].messages[1].content.starts_with(&prompt().user));
        assert!(reqs[1].messages[1].content.contains("[System Error]: The previous generation failed with error: $: not valid JSON"));
        let outcomes: Vec<_> = log.records().iter().map(|r| r.outcome).collect();
        assert_eq!(outcomes, [CallOutcome::Invalid, CallOutcome::Ok]);
    }

    #[test]
    fn aggregate_structural_and_similarity() {
        let c = |producer: &str, titles: &[&str]| ThoughtCandidate {
            layer: 5,
            producer: producer.into(),
            payload: titles.iter().map(|t| serde_json::json!({ "t": t })).collect(),
            raw_text: String::new(),
            confidence: None,
            embedding: None,
        };
        let zero = |_: &Value, _: &Value| 0.0;
        let m = aggregate(&[c("a", &["x"]), c("b", &["X "]), c("c", &[])], &zero, 0.85).unwrap();
        assert_eq!(m.findings.len(), 1);
        assert_eq!(m.findings[0].provenance, ["a", "b"]);
        let high = |_: &Value, _: &Value| 0.9;
        let m = aggregate(&[c("a", &["x"]), c("b", &["y"])], &high, 0.85).unwrap();
        assert_eq!(m.findings.len(), 1);
        assert!(matches!(aggregate(&[], &zero, 0.85), Err(OrchestratorError::EmptyInput)));
    }

    fn merged(n: usize) -> MergedCandidate {
        MergedCandidate {
            layer: 5,
            findings: (0..n)
                .map(|i| MergedFinding {
                    content: serde_json::json!({ "i": i }),
                    provenance: vec!["a".into()],
                })
                .collect(),
        }
    }

    fn eval_with(scores: &[u8], group: &dyn Fn(&Value) -> String) -> Result<Evaluation, Pruned> {
        let log = CallLog::default();
        let scope = CallScope {
            log: &log,
            layer: 5,
            node: "n",
        };
        let s: Vec<u8> = scores.to_vec();
        let p = Arc::new(ScriptedProvider::from_fn("ev", move |req| {
            let (_, ctx) = parse_context(&req.messages[1].content).unwrap();
            let i = ctx["finding"]["i"].as_u64().unwrap() as usize;
            Ok(format!("{{\"score\": {}}}", s[i]))
        }));
        let ev = ModelBinding::new("ev", Role::Evaluator, p);
        evaluate(scope, &merged(scores.len()), &prompt(), &ev, 60, group)
    }

    #[test]
    fn evaluate_argmax_ties_and_threshold() {
        let one = |_: &Value| String::new();
        let e = eval_with(&[72, 85, 60], &one).unwrap();
        assert_eq!((e.score, e.selected.len(), e.selected[0].content["i"].as_u64()), (85, 1, Some(1)));
        let e = eval_with(&[80, 80], &one).unwrap();
        assert_eq!(e.selected[0].content["i"], 0);
        assert_eq!(eval_with(&[10, 59], &one), Err(Pruned::BelowThreshold { best: 59, threshold: 60 }));
        let each = |v: &Value| v["i"].to_string();
        let e = eval_with(&[61, 20, 90], &each).unwrap();
        let kept: Vec<u8> = e.selected.iter().map(|s| s.score).collect();
        assert_eq!(kept, [61, 90]);
    }
}

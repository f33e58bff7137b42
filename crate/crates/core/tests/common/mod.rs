#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use xchain_audit_core::frontend::{parse_codebase, CanonicalAst, FunctionId};
use xchain_audit_core::report::UsageRecord;

pub mod bridge;
pub mod predicates;
pub mod slicing;

/// The core crate directory, also when this module is shared with another
/// crate's tests.
pub fn core_dir() -> PathBuf {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    if here.join("fixtures").is_dir() {
        here.to_path_buf()
    } else {
        here.join("../core")
    }
}

pub fn fixture_dir(name: &str) -> PathBuf {
    core_dir().join("fixtures").join(name)
}

/// `(file name, bytes)` of every `.sol` file in a fixture directory, sorted.
pub fn fixture_sources(name: &str) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(fixture_dir(name))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "sol"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

pub fn fixture_ast(name: &str) -> CanonicalAst {
    parse_codebase(&fixture_sources(name)).unwrap()
}

pub fn fid(s: &str) -> FunctionId {
    FunctionId::from(s)
}

/// Random straight-line-and-branch program together with the statement
/// and call structure the generator used to write it.
pub struct GenProgram {
    pub source: String,
    pub functions: Vec<FunctionId>,
    /// Variable keys of every statement and branch condition.
    pub units: Vec<BTreeSet<String>>,
    /// argument key → parameter key
    pub arg_edges: Vec<(String, String)>,
    /// callee return-expression keys → call-site assignment target
    pub ret_edges: Vec<(BTreeSet<String>, String)>,
    pub params: Vec<String>,
    pub statements: usize,
}

pub const GEN_FILE: &str = "g.sol";

struct FnGen {
    idx: usize,
    params: Vec<String>,
    n_locals: usize,
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    n_fns: usize,
    n_params: Vec<usize>,
    state: Vec<String>,
    budget: usize,
    units: Vec<BTreeSet<String>>,
    arg_edges: Vec<(String, String)>,
    // (callee, target key)
    calls: Vec<(usize, String)>,
    returns: Vec<BTreeSet<String>>,
}

fn local_key(f: usize, name: &str) -> String {
    format!("{GEN_FILE}::G::f{f}::{name}")
}

fn state_key(name: &str) -> String {
    format!("state:{GEN_FILE}::G::{name}")
}

impl<R: Rng> Gen<'_, R> {
    fn key(&self, f: &FnGen, name: &str) -> String {
        if self.state.iter().any(|s| s == name) {
            state_key(name)
        } else {
            local_key(f.idx, name)
        }
    }

    /// A variable or a literal; returns (text, key).
    fn operand(&mut self, f: &FnGen, pool: &[String]) -> (String, Option<String>) {
        if self.rng.gen_bool(0.15) {
            (self.rng.gen_range(0..100u32).to_string(), None)
        } else {
            let v = pool.choose(self.rng).unwrap().clone();
            let k = self.key(f, &v);
            (v, Some(k))
        }
    }

    fn binop(&mut self, f: &FnGen, pool: &[String], ops: &[&str]) -> (String, BTreeSet<String>) {
        let (a, ka) = self.operand(f, pool);
        let (b, kb) = self.operand(f, pool);
        let op = ops.choose(self.rng).unwrap();
        (format!("{a} {op} {b}"), ka.into_iter().chain(kb).collect())
    }

    fn block(&mut self, f: &mut FnGen, pool: &mut Vec<String>, depth: usize, indent: usize, out: &mut String) {
        let n = self.rng.gen_range(1..=4);
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            self.budget -= 1;
            let pad = " ".repeat(indent);
            match self.rng.gen_range(0..10) {
                0 | 1 => {
                    let target = pool.choose(self.rng).unwrap().clone();
                    let (e, mut keys) = self.binop(f, pool, &["+", "-", "*"]);
                    keys.insert(self.key(f, &target));
                    out.push_str(&format!("{pad}{target} = {e};\n"));
                    self.units.push(keys);
                }
                2 | 3 => {
                    let name = format!("l{}", f.n_locals);
                    f.n_locals += 1;
                    let (e, mut keys) = self.binop(f, pool, &["+", "*", "/"]);
                    keys.insert(local_key(f.idx, &name));
                    out.push_str(&format!("{pad}uint256 {name} = {e};\n"));
                    self.units.push(keys);
                    pool.push(name);
                }
                4 | 5 if self.n_fns > 1 => {
                    let mut callee = self.rng.gen_range(0..self.n_fns);
                    if callee == f.idx {
                        callee = (callee + 1) % self.n_fns;
                    }
                    let mut args = Vec::new();
                    let mut keys = BTreeSet::new();
                    for q in 0..self.n_params[callee] {
                        let (a, k) = self.operand(f, pool);
                        if let Some(k) = k {
                            self.arg_edges.push((k.clone(), local_key(callee, &format!("p{callee}_{q}"))));
                            keys.insert(k);
                        }
                        args.push(a);
                    }
                    let target_key;
                    if self.rng.gen_bool(0.5) {
                        let name = format!("l{}", f.n_locals);
                        f.n_locals += 1;
                        target_key = local_key(f.idx, &name);
                        out.push_str(&format!("{pad}uint256 {name} = f{callee}({});\n", args.join(", ")));
                        pool.push(name);
                    } else {
                        let target = pool.choose(self.rng).unwrap().clone();
                        target_key = self.key(f, &target);
                        out.push_str(&format!("{pad}{target} = f{callee}({});\n", args.join(", ")));
                    }
                    keys.insert(target_key.clone());
                    self.units.push(keys);
                    self.calls.push((callee, target_key));
                }
                6 if depth < 2 => {
                    let (c, keys) = self.binop(f, pool, &[">", "<", "=="]);
                    let kw = if self.rng.gen_bool(0.7) { "if" } else { "while" };
                    out.push_str(&format!("{pad}{kw} ({c}) {{\n"));
                    self.units.push(keys);
                    let mut inner = pool.clone();
                    self.block(f, &mut inner, depth + 1, indent + 4, out);
                    if kw == "if" && self.rng.gen_bool(0.3) {
                        out.push_str(&format!("{pad}}} else {{\n"));
                        let mut inner = pool.clone();
                        self.block(f, &mut inner, depth + 1, indent + 4, out);
                    }
                    out.push_str(&format!("{pad}}}\n"));
                }
                7 => {
                    let (c, keys) = self.binop(f, pool, &[">", "!="]);
                    out.push_str(&format!("{pad}require({c}, \"check\");\n"));
                    self.units.push(keys);
                }
                _ => {
                    let (a, ka) = self.operand(f, pool);
                    let (b, kb) = self.operand(f, pool);
                    out.push_str(&format!("{pad}emit Ev({a}, {b});\n"));
                    self.units.push(ka.into_iter().chain(kb).collect());
                }
            }
        }
    }
}

/// Generate a program of at most `max_statements` statements.
pub fn gen_program<R: Rng>(rng: &mut R, max_statements: usize) -> GenProgram {
    let n_fns = rng.gen_range(2..=4);
    let n_params: Vec<usize> = (0..n_fns).map(|_| rng.gen_range(1..=3)).collect();
    let state: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("s{i}")).collect();
    let mut g = Gen {
        rng,
        n_fns,
        n_params: n_params.clone(),
        state: state.clone(),
        // leave room for one return per function
        budget: max_statements - n_fns,
        units: Vec::new(),
        arg_edges: Vec::new(),
        calls: Vec::new(),
        returns: vec![BTreeSet::new(); n_fns],
    };
    let mut src = String::from("contract G {\n");
    for s in &state {
        src.push_str(&format!("    uint256 {s};\n"));
    }
    src.push_str("    event Ev(uint256 a, uint256 b);\n");
    let mut all_params = Vec::new();
    for i in 0..n_fns {
        let params: Vec<String> = (0..n_params[i]).map(|q| format!("p{i}_{q}")).collect();
        all_params.extend(params.iter().map(|p| local_key(i, p)));
        let decl: Vec<String> = params.iter().map(|p| format!("uint256 {p}")).collect();
        src.push_str(&format!("\n    function f{i}({}) public returns (uint256) {{\n", decl.join(", ")));
        let mut f = FnGen {
            idx: i,
            params: params.clone(),
            n_locals: 0,
        };
        let mut pool: Vec<String> = params.iter().chain(&state).cloned().collect();
        g.block(&mut f, &mut pool, 0, 8, &mut src);
        let (e, keys) = g.binop(&f, &pool, &["+", "*"]);
        src.push_str(&format!("        return {e};\n    }}\n"));
        g.units.push(keys.clone());
        g.returns[i] = keys;
    }
    src.push_str("}\n");
    let ret_edges = g
        .calls
        .iter()
        .map(|(callee, target)| (g.returns[*callee].clone(), target.clone()))
        .collect();
    let statements = max_statements - g.budget;
    GenProgram {
        source: src,
        functions: (0..n_fns).map(|i| FunctionId(format!("{GEN_FILE}::G::f{i}"))).collect(),
        units: g.units,
        arg_edges: g.arg_edges,
        ret_edges,
        params: all_params,
        statements,
    }
}

/// Reachability over the statement/identifier incidence graph plus the
/// argument→parameter and return→target edges.
pub fn closure_oracle(p: &GenProgram, seeds: &BTreeSet<String>) -> BTreeSet<String> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for u in &p.units {
        for a in u {
            for b in u {
                adj.entry(a).or_default().insert(b);
            }
        }
    }
    for (a, param) in &p.arg_edges {
        adj.entry(a).or_default().insert(param);
    }
    for (rets, target) in &p.ret_edges {
        for r in rets {
            adj.entry(r).or_default().insert(target);
        }
    }
    let mut seen: BTreeSet<String> = seeds.clone();
    let mut queue: VecDeque<String> = seeds.iter().cloned().collect();
    while let Some(k) = queue.pop_front() {
        for n in adj.get(k.as_str()).into_iter().flatten() {
            if seen.insert(n.to_string()) {
                queue.push_back(n.to_string());
            }
        }
    }
    seen
}

/// Per-call records whose totals are 62,208 input and 8,543 output tokens
/// across the three reference-priced models.
pub fn published_usage_records() -> Vec<UsageRecord> {
    // per-model totals split over several calls
    let split = |b: &str, parts: &[(u64, u64)]| -> Vec<UsageRecord> {
        parts
            .iter()
            .map(|&(i, o)| UsageRecord {
                binding: b.into(),
                input_tokens: i,
                output_tokens: o,
                estimated: false,
            })
            .collect()
    };
    let mut v = split("deepseek-v3.2", &[(10_000, 1_500), (12_000, 1_500), (8_000, 1_000)]);
    v.extend(split("gpt-4o-mini", &[(15_000, 2_000), (5_000, 1_000)]));
    v.extend(split("gemini-2.5-flash", &[(6_104, 800), (6_104, 743)]));
    v
}

pub mod audit {
    use std::sync::Arc;

    use xchain_audit_core::orchestrator::{ChatProvider, ChatRequest, ModelBinding, ProviderError, Role, ScriptedProvider};
    use xchain_audit_core::pipeline::{OfflineProvider, PipelineConfig};
    use xchain_audit_core::semantic::{build_kb, seed_patterns, HashEmbedder, KnowledgeBase};

    pub const GENERATORS: [&str; 3] = ["gen-a", "gen-b", "gen-c"];

    pub fn offline(name: &str, role: Role) -> ModelBinding {
        ModelBinding::new(name, role, Arc::new(OfflineProvider::new(name)))
    }

    /// Offline generators with an evaluator that defers to the offline
    /// heuristic unless `override_score` returns a score for the request.
    pub fn config_with_evaluator<F>(override_score: F) -> PipelineConfig
    where
        F: Fn(&ChatRequest) -> Option<u8> + Send + Sync + 'static,
    {
        let inner = OfflineProvider::new("judge");
        let judge = ScriptedProvider::from_fn("judge", move |req| -> Result<String, ProviderError> {
            match override_score(req) {
                Some(s) => Ok(format!("{{\"score\": {s}}}")),
                None => inner.complete(req).map(|r| r.text),
            }
        });
        PipelineConfig {
            ensemble: GENERATORS.iter().map(|n| offline(n, Role::Generator)).collect(),
            evaluator: Some(ModelBinding::new("judge", Role::Evaluator, Arc::new(judge))),
            ..Default::default()
        }
    }

    pub fn offline_config() -> PipelineConfig {
        config_with_evaluator(|_| None)
    }

    pub fn seed_kb() -> (HashEmbedder, KnowledgeBase) {
        let e = HashEmbedder::default();
        let kb = build_kb(&e, seed_patterns()).unwrap();
        (e, kb)
    }

    /// `(task, context)` of the evaluator request's layer prompt.
    pub fn evaluated_task(req: &ChatRequest) -> (String, serde_json::Value) {
        let user = &req.messages.last().unwrap().content;
        let (_, ctx) = xchain_audit_core::orchestrator::parse_context(user).unwrap();
        (ctx["layer_task"].as_str().unwrap_or_default().to_string(), ctx)
    }
}

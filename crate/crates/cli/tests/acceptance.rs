//! Acceptance gate: one PASS/FAIL line per criterion, then a single verdict.
//!
//! `XCHAIN_AUDIT_BLESS=1` rewrites the golden report instead of comparing.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use xchain_audit_core::callgraph::TransactionNode;
use xchain_audit_core::orchestrator::{
    generate, CallLog, CallScope, LayerSchema, ModelBinding, Prompt, Role, ScriptedProvider, DEFAULT_K_G,
    DEFAULT_MAX_ATTEMPTS,
};
use xchain_audit_core::pipeline::prompts::TASK_MAP;
use xchain_audit_core::pipeline::{run_audit, NullClock, Thresholds};
use xchain_audit_core::report::{account_usage, Metrics, PriceTable, UsageSummary};
use xchain_audit_core::semantic::{
    build_kb, prune_vectors, retrieve, seed_patterns, similarity, Embedder, EmbeddingVector, HashEmbedder,
    KnowledgeBase,
};

const EXTRACT_BUDGET: Duration = Duration::from_secs(1);
const END_TO_END_BUDGET: Duration = Duration::from_secs(30);
const MIN_TAINT_PROGRAMS: usize = 20;
const MIN_PREDICATE_STATES: usize = 10_000;
const SELF_SIMILARITY_TOL: f64 = 1e-6;
const F1_IDENTITY_TOL: f64 = 1e-9;
const COST_TOL_USD: f64 = 0.01;
const PUBLISHED_COST_USD: f64 = 0.02;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_xchain-audit")
}

fn cli_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

fn offline_config() -> PathBuf {
    cli_dir().join("tests/data/offline.toml")
}

fn golden_report() -> PathBuf {
    cli_dir().join("tests/golden/bridge_report.json")
}

/// Runs the binary with proxies pointed at a closed port, so an attempted
/// network call would fail instead of silently succeeding.
fn xchain(args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .env_remove("GOATX_CACHE_DIR")
        .env("HTTP_PROXY", "http://127.0.0.1:9")
        .env("HTTPS_PROXY", "http://127.0.0.1:9")
        .env("ALL_PROXY", "http://127.0.0.1:9")
        .output()
        .expect("binary runs")
}

fn audit_into(out: &Path, cache: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec![
        "audit",
        "--config",
        offline_config().to_str().unwrap(),
        "--codebase",
        common::fixture_dir("bridge").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--replay-cache",
        cache.to_str().unwrap(),
        "--format",
        "document",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    xchain(&refs)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn c1_static_extraction() -> String {
    let t0 = Instant::now();
    let out = xchain(&["extract", "--codebase", common::fixture_dir("bridge").to_str().unwrap()]);
    let elapsed = t0.elapsed();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let nodes: Vec<TransactionNode> = serde_json::from_slice(&out.stdout).unwrap();
    common::bridge::check_nodes(&nodes);
    common::bridge::check_reach(&common::fixture_ast("bridge"), &nodes);
    assert!(elapsed < EXTRACT_BUDGET, "extract took {elapsed:?}");
    format!("{} flows match the hand-derived set and brute-force reach; {elapsed:.0?}", nodes.len())
}

fn c2_taint_fixed_point() -> String {
    let cases = 2 * MIN_TAINT_PROGRAMS;
    common::slicing::check_closure_oracle(cases);
    common::slicing::check_fixed_point(MIN_TAINT_PROGRAMS);
    format!("{cases}/{cases} programs equal the closure oracle; {MIN_TAINT_PROGRAMS} traces idempotent and monotone")
}

fn c3_slicing_contract() -> String {
    let slices = common::slicing::check_condition_context();
    let files = common::slicing::check_corpus_round_trip();
    format!("{slices} fixture slices keep their condition stacks; {files} corpus files round-trip")
}

fn c4_predicate_truth_tables() -> String {
    let states = common::predicates::check_truth_tables();
    assert!(states >= MIN_PREDICATE_STATES, "{states} states");
    let mutations = common::predicates::check_single_conjunct_mutation();
    let accepted = common::predicates::check_replay();
    common::predicates::check_forged_signature();
    format!("{states} states agree; {mutations} single-conjunct mutations flip; {accepted} keys relayed once each")
}

fn c5_orchestrator_bounds() -> String {
    // byte-identical replay through the CLI
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let first = audit_into(&a, &cache, &[]);
    let second = audit_into(&b, &cache, &[]);
    let third = audit_into(&c, &cache, &["--replay-only"]);
    for o in [&first, &second, &third] {
        assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_eq!(dir_bytes(&a), dir_bytes(&c));

    // exactly k_G candidates from four willing producers
    let valid = json!([{
        "bypass_title": "replay",
        "preconditions": ["p"],
        "steps": ["s"],
        "poc_sketch": "x()",
        "severity": "high",
    }])
    .to_string();
    let producers: Vec<Arc<ScriptedProvider>> = (0..4)
        .map(|i| Arc::new(ScriptedProvider::new(&format!("m{i}"), vec![Ok(valid.clone())])))
        .collect();
    let ensemble: Vec<ModelBinding> = producers
        .iter()
        .enumerate()
        .map(|(i, p)| ModelBinding::new(&format!("m{i}"), Role::Generator, p.clone()))
        .collect();
    let prompt = Prompt::new("find-bypasses", "system", "Find bypasses.", &json!({}));
    let log = CallLog::default();
    let scope = CallScope {
        log: &log,
        layer: 5,
        node: "L4#0",
    };
    let g = generate(scope, &prompt, &ensemble, DEFAULT_K_G, &LayerSchema::Bypass).unwrap();
    assert_eq!(g.candidates.len(), 3);
    assert_eq!(producers[3].calls(), 0);

    // a producer that never validates is discarded after max_attempts
    let bad = Arc::new(ScriptedProvider::from_fn("bad", |_| Ok("not json".into())));
    let good = Arc::new(ScriptedProvider::new("good", vec![Ok(valid.clone())]));
    let ensemble = vec![
        ModelBinding::new("bad", Role::Generator, bad.clone()),
        ModelBinding::new("good", Role::Generator, good),
    ];
    let log = CallLog::default();
    let scope = CallScope {
        log: &log,
        layer: 5,
        node: "L4#0",
    };
    let g = generate(scope, &prompt, &ensemble, 2, &LayerSchema::Bypass).unwrap();
    assert_eq!(bad.calls(), DEFAULT_MAX_ATTEMPTS as usize);
    assert_eq!(g.discards.len(), 1);

    // mappings scored 59 are pruned and nothing below them is generated
    let threshold = Thresholds::default().confidence;
    let cfg = common::audit::config_with_evaluator(move |req| {
        (common::audit::evaluated_task(req).0 == TASK_MAP).then_some(threshold - 1)
    });
    let (e, kb) = common::audit::seed_kb();
    let out = run_audit(&common::fixture_ast("bridge"), &cfg, &kb, &e, &NullClock).unwrap();
    assert_eq!(out.graph.pruned.len(), 3);
    assert!((2..=5).all(|t| out.graph.layer(t).count() == 0));
    assert!(out.calls.iter().all(|c| c.layer == 2));
    format!(
        "replay runs byte-identical ({} files); k_G = {DEFAULT_K_G}; discard after {DEFAULT_MAX_ATTEMPTS}; score {} pruned 3 subtrees",
        dir_bytes(&a).len(),
        threshold - 1
    )
}

fn at_cos(c: f64) -> EmbeddingVector {
    EmbeddingVector(vec![c, (1.0 - c * c).sqrt(), 0.0])
}

fn c6_similarity_numerics() -> String {
    let e = HashEmbedder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet: Vec<char> = "abcdefghij_(){};= 0123".chars().collect();
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let len = rng.gen_range(1..80);
        let text: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        if let Ok(v) = e.embed(&text) {
            worst = worst.max((similarity(&v, &v).unwrap() - 1.0).abs());
        }
    }
    assert!(worst <= SELF_SIMILARITY_TOL, "self-similarity off by {worst}");

    let t = Thresholds::default();
    assert_eq!(prune_vectors(&[at_cos(1.0), at_cos(0.84)], t.prune_sim).unwrap(), [0, 1]);
    assert_eq!(prune_vectors(&[at_cos(1.0), at_cos(0.85)], t.prune_sim).unwrap(), [0]);
    assert_eq!(prune_vectors(&[at_cos(1.0), at_cos(0.99)], t.prune_sim).unwrap(), [0]);

    let kb = build_kb(&e, seed_patterns()).unwrap();
    let queries = [
        "require(!processed[txHash]); processed[txHash] = true;",
        "IBridgeToken(token).mint(to, amount);",
        "(bool ok, ) = target.call(data); require(ok);",
        "nonce signature verify relayer",
    ];
    let mut excluded = 0;
    for q in queries {
        let all = retrieve(&kb, &e, q, 0.0, kb.len()).unwrap();
        let kept = retrieve(&kb, &e, q, t.kb_sim, kb.len()).unwrap();
        assert!(kept.iter().all(|r| r.score >= t.kb_sim));
        let expected: Vec<_> = all.iter().filter(|r| r.score >= t.kb_sim).collect();
        assert_eq!(kept.len(), expected.len());
        excluded += all.len() - kept.len();
    }
    assert!(excluded > 0, "no query exercised the retrieval threshold");

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("kb.json");
    std::fs::write(&path, kb.to_json()).unwrap();
    let loaded = KnowledgeBase::load(&path).unwrap();
    for q in queries {
        let a = retrieve(&kb, &e, q, 0.0, kb.len()).unwrap();
        let b = retrieve(&loaded, &e, q, 0.0, kb.len()).unwrap();
        let bits = |v: &[xchain_audit_core::semantic::Retrieved]| -> Vec<(String, u64)> {
            v.iter().map(|r| (r.pattern.pattern_id.clone(), r.score.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
    format!("self-similarity within {worst:.1e}; 0.84 kept, 0.85 pruned; {excluded} hits below 0.5 excluded; KB reload bit-exact")
}

fn c7_metric_arithmetic() -> String {
    let shown = |m: &Metrics| (m.display.recall.clone(), m.display.precision.clone(), m.display.f1.clone());
    let s = |a: &str, b: &str, c: &str| (a.to_string(), b.to_string(), c.to_string());
    assert_eq!(shown(&Metrics::from_counts(270, 24, 25)), s("0.92", "0.92", "0.92"));
    assert_eq!(shown(&Metrics::from_counts(19, 1, 4)), s("0.95", "0.83", "0.88"));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let m = Metrics::from_counts(rng.gen_range(1..10_000), rng.gen_range(0..10_000), rng.gen_range(0..10_000));
        let harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        worst = worst.max((m.f1 - harmonic).abs());
    }
    assert!(worst <= F1_IDENTITY_TOL, "F1 identity off by {worst}");

    // the CLI prints the same
    let out = xchain(&["eval", "--counts", "270,24,25"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("recall 0.92"));
    format!("270/24/25 -> 0.92/0.92/0.92; 19/1/4 -> 0.95/0.83/0.88; F1 identity within {worst:.1e}")
}

fn c8_cost_accounting() -> String {
    let records = common::published_usage_records();
    let prices = PriceTable::reference();
    let s = account_usage(&records, &prices);
    assert_eq!((s.input_tokens, s.output_tokens), (62_208, 8_543));
    assert_eq!(s.cost_display, "$0.02");
    assert!((s.cost_usd - PUBLISHED_COST_USD).abs() <= COST_TOL_USD);
    // the price table is documented in the repository
    let doc = std::fs::read_to_string(cli_dir().join("../../docs/pricing.md")).expect("docs/pricing.md");
    for (model, p) in &prices.0 {
        assert!(doc.contains(model.as_str()), "{model} undocumented");
        assert!(doc.contains(&format!("{:.2}", p.input_per_mtok)), "{model} input price undocumented");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let mut shuffled = records.clone();
        for r in &mut shuffled {
            r.input_tokens = rng.gen_range(0..100_000);
            r.output_tokens = rng.gen_range(0..20_000);
        }
        let cut = rng.gen_range(0..=shuffled.len());
        let whole = account_usage(&shuffled, &prices);
        let parts: [UsageSummary; 2] =
            [account_usage(&shuffled[..cut], &prices), account_usage(&shuffled[cut..], &prices)];
        assert_eq!(whole.input_tokens, parts[0].input_tokens + parts[1].input_tokens);
        assert_eq!(whole.output_tokens, parts[0].output_tokens + parts[1].output_tokens);
        assert!((whole.cost_usd - parts[0].cost_usd - parts[1].cost_usd).abs() < 1e-12);
    }
    format!("62,208 in / 8,543 out -> {} (${:.4}); additive over 200 random partitions", s.cost_display, s.cost_usd)
}

fn c9_golden_end_to_end() -> String {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let t0 = Instant::now();
    let run = audit_into(&out, &tmp.path().join("cache"), &[]);
    let elapsed = t0.elapsed();
    assert_eq!(run.status.code(), Some(1), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(elapsed < END_TO_END_BUDGET, "audit took {elapsed:?}");
    let report = std::fs::read(out.join("report.json")).unwrap();

    // every call went to an offline responder and none failed in transport
    let graph: Value = serde_json::from_slice(&std::fs::read(out.join("graph.json")).unwrap()).unwrap();
    let calls = graph["calls"].as_array().unwrap();
    assert!(!calls.is_empty());
    let bindings: BTreeSet<&str> = calls.iter().map(|c| c["binding"].as_str().unwrap()).collect();
    assert_eq!(bindings, BTreeSet::from(["gen-a", "gen-b", "gen-c", "judge"]));
    assert!(calls.iter().all(|c| c["outcome"] != "failed"));

    if std::env::var_os("XCHAIN_AUDIT_BLESS").is_some() {
        std::fs::write(golden_report(), &report).unwrap();
        return format!("golden report rewritten ({} bytes)", report.len());
    }
    let golden = std::fs::read(golden_report()).expect("golden report present");
    assert!(report == golden, "report differs from the golden snapshot");
    format!("report.json byte-exact with golden ({} bytes, {} calls, no network); {elapsed:.1?}", report.len(), calls.len())
}

fn main() {
    let criteria: [(&str, fn() -> String); 9] = [
        ("static extraction oracle", c1_static_extraction),
        ("taint fixed-point equivalence", c2_taint_fixed_point),
        ("slicing contract", c3_slicing_contract),
        ("predicate truth tables", c4_predicate_truth_tables),
        ("orchestrator determinism and bounds", c5_orchestrator_bounds),
        ("similarity and pruning numerics", c6_similarity_numerics),
        ("metric arithmetic reproduction", c7_metric_arithmetic),
        ("cost accounting", c8_cost_accounting),
        ("full scripted end-to-end", c9_golden_end_to_end),
    ];
    let default_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => println!("PASS {n} {name}: {detail}"),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into());
                println!("FAIL {n} {name}: {msg}");
                failed.push(n);
            }
        }
    }
    std::panic::set_hook(default_hook);
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

//! Taint fixed-point and slicing checks, and the reconstruct round trip over
//! the fixture corpus.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use xchain_audit_core::callgraph::{default_event_patterns, extract_transaction_nodes};
use xchain_audit_core::frontend::render::render_file;
use xchain_audit_core::frontend::schema::to_document;
use xchain_audit_core::frontend::{parse_codebase, parse_source, CanonicalAst, NodeKind};
use xchain_audit_core::taint::{slice, ItemKind, TaintModel};

use super::{closure_oracle, core_dir, fixture_ast, fixture_sources, gen_program, GenProgram, GEN_FILE};

pub fn gen_ast(p: &GenProgram) -> CanonicalAst {
    CanonicalAst::new(vec![parse_source(&p.source, GEN_FILE).unwrap()])
}

/// Propagation equals the reachability oracle on `cases` generated programs
/// of at most 50 statements.
pub fn check_closure_oracle(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..cases {
        let p = gen_program(&mut rng, 50);
        assert!(p.statements <= 50);
        let ast = gen_ast(&p);
        assert_eq!(ast.opaque_count(), 0, "case {case}:\n{}", p.source);
        let model = TaintModel::build(&ast, &p.functions).unwrap();
        let seed = BTreeSet::from([p.params[case % p.params.len()].clone()]);
        let got = model.propagate(&seed).unwrap();
        assert_eq!(got.tainted, closure_oracle(&p, &seed), "case {case}:\n{}", p.source);
    }
}

/// Iteration traces grow monotonically, stay within the rule bound, and
/// re-propagating the fixed point changes nothing.
pub fn check_fixed_point(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..cases {
        let p = gen_program(&mut rng, 40);
        let ast = gen_ast(&p);
        let model = TaintModel::build(&ast, &p.functions).unwrap();
        let seed = BTreeSet::from([p.params[0].clone()]);
        let (t, trace) = model.propagate_traced(&seed).unwrap();
        for w in trace.windows(2) {
            assert!(w[0].is_subset(&w[1]));
        }
        let keys: BTreeSet<&String> = model.rules.iter().flat_map(|r| r.to.iter()).collect();
        let units = model.node_keys.len().max(1);
        assert!(trace.len() <= units * keys.len().max(1) + 2);
        let again = model.propagate(&t.tainted).unwrap();
        assert_eq!(again.tainted, t.tainted);
    }
}

/// On every bridge flow and seed: each tainted statement is covered, and
/// each item's enclosing headers were emitted before it as conditions.
/// Returns the number of slices checked.
pub fn check_condition_context() -> usize {
    let ast = fixture_ast("bridge");
    let ex = extract_transaction_nodes(&ast, &default_event_patterns()).unwrap();
    let mut checked = 0;
    for node in &ex.nodes {
        let model = TaintModel::build(&ast, &node.members).unwrap();
        for name in ["amount", "to", "signature", "token"] {
            let Ok(seeds) = model.seeds_for(&node.entrypoint, name) else { continue };
            let t = model.propagate(&seeds).unwrap();
            let s = slice(&ast, &node.members, &t).unwrap();
            for id in &model.callables {
                let f = ast.function(id).unwrap();
                let Some(body) = &f.function.body else { continue };
                for n in body.walk() {
                    if n.kind.is_statement() && n.kind != NodeKind::Block && model.is_tainted(&n.id, &t) {
                        assert!(s.covered_node_ids.contains(&n.id), "{} missing {}", node.entrypoint, n.id);
                    }
                }
            }
            for (i, item) in s.items.iter().enumerate() {
                for (depth, ctx) in item.context.iter().enumerate() {
                    assert!(s.items[..i]
                        .iter()
                        .any(|c| c.kind == ItemKind::Condition && &c.code == ctx && c.context.len() == depth));
                }
            }
            checked += 1;
        }
    }
    checked
}

/// Every fixture source plus the golden `.sol` files.
pub fn corpus() -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for dir in ["bridge", "minimal"] {
        out.extend(fixture_sources(dir));
    }
    for e in std::fs::read_dir(core_dir().join("tests/golden")).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "sol") {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
        }
    }
    out
}

/// The exported document minus byte offsets, which legitimately move when
/// the source is reformatted.
pub fn shape(ast: &CanonicalAst) -> Value {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                for k in ["start", "end", "span"] {
                    m.remove(k);
                }
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut d = to_document(ast);
    strip(&mut d);
    d
}

pub fn reconstruct_and_reparse(ast: &CanonicalAst) -> CanonicalAst {
    let rendered: Vec<(String, Vec<u8>)> =
        ast.files.iter().map(|f| (f.file_id.clone(), render_file(f).into_bytes())).collect();
    parse_codebase(&rendered).unwrap()
}

/// Parse → reconstruct → parse keeps the structure of every corpus file, and
/// a second reconstruction is a fixed point. Returns the number of files.
pub fn check_corpus_round_trip() -> usize {
    let sources = corpus();
    for (name, bytes) in &sources {
        let ast = parse_codebase(&[(name.clone(), bytes.clone())]).unwrap();
        assert!(ast.files[0].diagnostics.is_empty(), "{name}: {:?}", ast.files[0].diagnostics);
        let again = reconstruct_and_reparse(&ast);
        assert_eq!(shape(&ast), shape(&again), "{name} changed shape after reconstruction");
        assert_eq!(render_file(&ast.files[0]), render_file(&again.files[0]), "{name}");
    }
    sources.len()
}

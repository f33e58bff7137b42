//! Report assembly, rendering, usage accounting and metric arithmetic.

mod common;

use std::collections::BTreeSet;

use common::audit::*;
use common::{fixture_ast, published_usage_records};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use xchain_audit_core::pipeline::{run_audit, AuditOutcome, NullClock};
use xchain_audit_core::report::*;

fn outcome() -> AuditOutcome {
    let (e, kb) = seed_kb();
    run_audit(&fixture_ast("bridge"), &offline_config(), &kb, &e, &NullClock).unwrap()
}

#[test]
fn every_finding_thought_lands_in_exactly_one_flow() {
    let out = outcome();
    let r = build_report("bridge", &out, &PriceTable::reference());
    assert_eq!(r.transaction_flows.len(), 3);
    for t in [2u8, 4, 5] {
        let ids: BTreeSet<&str> = out.graph.layer(t).map(|n| n.thought_id.as_str()).collect();
        let mut seen = Vec::new();
        for f in &r.transaction_flows {
            let mut in_flow: BTreeSet<&str> = BTreeSet::new();
            match t {
                2 => in_flow.extend(f.mappings.iter().map(|m| m.thought_id.as_str())),
                4 => in_flow.extend(f.rule_findings.iter().map(|m| m.thought_id.as_str())),
                _ => in_flow.extend(f.bypasses.iter().map(|m| m.thought_id.as_str())),
            }
            seen.extend(in_flow);
        }
        let unique: BTreeSet<&str> = seen.iter().copied().collect();
        assert_eq!(unique.len(), seen.len(), "layer {t} thought in two flows");
        assert_eq!(unique, ids, "layer {t}");
    }
    for f in &r.transaction_flows {
        for b in &f.bypasses {
            assert_eq!(b.path.first().unwrap(), &b.thought_id);
            assert_eq!(b.path.last().unwrap(), "L0#0");
            assert!(b.path.contains(&f.thought_id));
            assert!(!b.provenance.is_empty());
        }
    }
}

#[test]
fn report_round_trips_and_keeps_metric_inputs() {
    let r = build_report("bridge", &outcome(), &PriceTable::reference());
    let text = r.to_json();
    let back = AuditReport::from_json(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json(), text);
    assert_eq!(predictions_from_report(&back), predictions_from_report(&r));
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["schema_version"] = json!("2");
    assert!(matches!(AuditReport::from_json(&doc.to_string()), Err(ReportError::SchemaVersion(_))));
}

#[test]
fn usage_in_report_matches_call_log() {
    let out = outcome();
    let r = build_report("bridge", &out, &PriceTable::reference());
    assert_eq!(r.usage.calls as usize, out.calls.len());
    assert_eq!(r.usage.input_tokens, out.calls.iter().map(|c| c.input_tokens).sum::<u64>());
    assert_eq!(r.usage.bindings.iter().map(|b| b.binding.as_str()).collect::<Vec<_>>(), ["gen-a", "gen-b", "gen-c", "judge"]);
    assert_eq!(r.usage.unpriced.len(), 4);
    assert_eq!(r.usage.layers.len(), 5);
}

#[test]
fn renderings_cover_flows_and_usage() {
    let r = build_report("bridge", &outcome(), &PriceTable::reference());
    let doc = render_report(&r, ReportFormat::Markdown);
    assert!(doc.starts_with("# Audit report: bridge\n"));
    for f in &r.transaction_flows {
        assert!(doc.contains(&format!("## {} ({})", f.entrypoint, f.thought_id)));
    }
    assert!(doc.contains("## Usage"));
    let text = render_report(&r, ReportFormat::Text);
    assert_eq!(text.lines().filter(|l| l.starts_with("flow ")).count(), 3);
    assert_eq!(render_report(&r, ReportFormat::Document), r.to_json());
    assert_eq!("json".parse::<ReportFormat>().unwrap(), ReportFormat::Document);
    assert!("pdf".parse::<ReportFormat>().is_err());
}

#[test]
fn published_cost_row_is_reproduced() {
    let s = account_usage(&published_usage_records(), &PriceTable::reference());
    assert_eq!((s.input_tokens, s.output_tokens), (62_208, 8_543));
    assert!((s.cost_usd - 0.0224).abs() < 1e-4, "{}", s.cost_usd);
    assert_eq!(s.cost_display, "$0.02");
    assert!(s.unpriced.is_empty());
}

proptest! {
    #[test]
    fn usage_is_additive_over_partitions(seed in any::<u64>(), cut in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut recs = published_usage_records();
        for r in &mut recs {
            r.input_tokens = rng.gen_range(0..50_000);
            r.output_tokens = rng.gen_range(0..9_000);
        }
        let cut = cut.min(recs.len());
        let prices = PriceTable::reference();
        let whole = account_usage(&recs, &prices);
        let a = account_usage(&recs[..cut], &prices);
        let b = account_usage(&recs[cut..], &prices);
        prop_assert_eq!(whole.input_tokens, a.input_tokens + b.input_tokens);
        prop_assert_eq!(whole.output_tokens, a.output_tokens + b.output_tokens);
        prop_assert_eq!(whole.calls, a.calls + b.calls);
        prop_assert!((whole.cost_usd - (a.cost_usd + b.cost_usd)).abs() < 1e-12);
    }
}

#[test]
fn f1_is_the_harmonic_mean_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1_000 {
        let (tp, fn_, fp) = (rng.gen_range(1..5_000u64), rng.gen_range(0..5_000u64), rng.gen_range(0..5_000u64));
        let m = Metrics::from_counts(tp, fn_, fp);
        let harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        assert!((m.f1 - harmonic).abs() <= 1e-9, "{tp} {fn_} {fp}");
        assert!(!m.zero_division);
    }
}

#[test]
fn ground_truth_against_offline_report() {
    let r = build_report("bridge", &outcome(), &PriceTable::reference());
    let in_ = "Router.sol::Router::swapIn";
    let truth = GroundTruth {
        points: vec![
            AuditPoint {
                point_id: "map-amount".into(),
                layer: PointLayer::Mapping,
                expected: json!({ "entrypoint": in_, "property_name": "amount", "parameter_name": "amount" }),
                allow_none: false,
            },
            AuditPoint {
                point_id: "map-nonce".into(),
                layer: PointLayer::Mapping,
                expected: json!({ "entrypoint": in_, "property_name": "nonce", "parameter_name": "txHash" }),
                allow_none: false,
            },
            AuditPoint {
                point_id: "pd2-unused".into(),
                layer: PointLayer::Rule,
                expected: json!({ "entrypoint": in_, "rule_id": "Pd2", "checklist_item": 1, "status": "implemented" }),
                allow_none: false,
            },
        ],
    };
    let e = compute_metrics(&predictions_from_report(&r), &truth, &ExactFieldMatcher, None).unwrap();
    let verdicts: Vec<(&str, Verdict)> = e.points.iter().map(|p| (p.point_id.as_str(), p.verdict)).collect();
    assert_eq!(
        verdicts,
        [("map-amount", Verdict::Tp), ("map-nonce", Verdict::Tp), ("pd2-unused", Verdict::Tp)]
    );
}

//! Parse → reconstruct → parse and export → ingest round trips over every
//! fixture source.

mod common;

use common::slicing::{check_corpus_round_trip, corpus, reconstruct_and_reparse, shape};
use common::{gen_program, GEN_FILE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use xchain_audit_core::frontend::schema::{ingest_document, to_document};
use xchain_audit_core::frontend::parse_codebase;

#[test]
fn corpus_reconstruct_round_trip() {
    assert!(check_corpus_round_trip() >= 8);
}

#[test]
fn corpus_document_round_trip() {
    let ast = parse_codebase(&corpus()).unwrap();
    let doc = to_document(&ast);
    let back = ingest_document(&doc).unwrap();
    assert_eq!(back, ast);
    let text = serde_json::to_string(&doc).unwrap();
    assert_eq!(to_document(&back), serde_json::from_str::<Value>(&text).unwrap());
}

#[test]
fn generated_programs_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let p = gen_program(&mut rng, 50);
        let ast = parse_codebase(&[(GEN_FILE.to_string(), p.source.into_bytes())]).unwrap();
        assert_eq!(shape(&ast), shape(&reconstruct_and_reparse(&ast)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_codebase(&[("x.sol".to_string(), bytes)]);
    }

    #[test]
    fn truncated_fixture_is_tolerated(cut in 0usize..2400) {
        let (name, bytes) = corpus().into_iter().find(|(n, _)| n == "Router.sol").unwrap();
        let cut = cut.min(bytes.len());
        let text = String::from_utf8_lossy(&bytes[..cut]).into_owned();
        prop_assert!(parse_codebase(&[(name, text.into_bytes())]).is_ok());
    }
}

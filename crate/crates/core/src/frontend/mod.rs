//! Solidity front-end: tolerant parser, canonical AST, schema ingestion.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod render;
pub mod schema;

use rayon::prelude::*;
use regex::Regex;

pub use ast::*;
pub use parser::{parse_bytes, parse_expression, parse_source, parse_statements};
pub use schema::{ingest_document, ingest_file, ingest_json_str, to_document};

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("{file_id}: invalid source encoding: {reason}")]
    Lex { file_id: String, reason: String },
    #[error("file id must be non-empty")]
    EmptyFileId,
    #[error("schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("invalid pattern {regex:?}: {reason}")]
    InvalidPattern { regex: String, reason: String },
}

/// Parse several `(file_id, bytes)` sources in parallel; output keeps input order.
pub fn parse_codebase(sources: &[(String, Vec<u8>)]) -> Result<CanonicalAst, FrontendError> {
    let files = sources
        .par_iter()
        .map(|(id, bytes)| parse_bytes(bytes, id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CanonicalAst::new(files))
}

pub fn compile_patterns(patterns: &[String]) -> Result<Vec<Regex>, FrontendError> {
    patterns
        .iter()
        .map(|p| {
            Regex::new(p).map_err(|e| FrontendError::InvalidPattern {
                regex: p.clone(),
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Functions emitting an event whose name matches any pattern.
///
/// One entry per (function, event), ordered by file, contract, function and
/// position of the first matching emit. Modifier bodies are not scanned here.
pub fn find_emit_sites(
    ast: &CanonicalAst,
    patterns: &[String],
) -> Result<Vec<(FunctionId, String)>, FrontendError> {
    let regexes = compile_patterns(patterns)?;
    let mut out = Vec::new();
    for f in ast.functions() {
        let Some(body) = &f.function.body else { continue };
        let mut seen: Vec<&str> = Vec::new();
        for node in body.walk() {
            if node.kind != NodeKind::EmitStatement {
                continue;
            }
            let Some(event) = node.attr("event") else { continue };
            if seen.contains(&event) || !regexes.iter().any(|r| r.is_match(event)) {
                continue;
            }
            seen.push(event);
            out.push((f.function.qualified_id.clone(), event.to_string()));
        }
    }
    Ok(out)
}

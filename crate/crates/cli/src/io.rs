//! Codebase loading and output files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use walkdir::WalkDir;
use xchain_audit_core::frontend::{ingest_json_str, parse_codebase, CanonicalAst};
use xchain_audit_core::orchestrator::write_atomic;

/// `.sol` files under `dir`, keyed by `/`-separated relative path, sorted.
pub fn read_sources(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry?;
        let p = entry.path();
        if !entry.file_type().is_file() || p.extension().is_none_or(|x| x != "sol") {
            continue;
        }
        let rel = p.strip_prefix(dir).unwrap_or(p);
        let id = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.push((id, std::fs::read(p).with_context(|| format!("reading {}", p.display()))?));
    }
    Ok(out)
}

/// A directory of sources, a single `.sol` file, or an exported AST document.
pub fn load_codebase(path: &Path) -> Result<CanonicalAst> {
    if path.is_dir() {
        let sources = read_sources(path)?;
        if sources.is_empty() {
            bail!("no .sol files under {}", path.display());
        }
        return Ok(parse_codebase(&sources)?);
    }
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match path.extension().and_then(|x| x.to_str()) {
        Some("json") => Ok(ingest_json_str(&String::from_utf8(bytes)?)?),
        _ => {
            let name = path.file_name().map_or_else(|| "input.sol".into(), |n| n.to_string_lossy().into_owned());
            Ok(parse_codebase(&[(name, bytes)])?)
        }
    }
}

/// Name of the codebase directory or file stem.
pub fn project_name(path: &Path) -> String {
    let p = if path.is_dir() { path.file_name() } else { path.file_stem() };
    p.map_or_else(|| "project".into(), |s| s.to_string_lossy().into_owned())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Atomic write to `out`, or stdout when absent.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            let mut o = std::io::stdout().lock();
            o.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                o.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

pub fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

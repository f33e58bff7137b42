//! Flat inner-product index of bypass knowledge patterns.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{similarity, Embedder, EmbeddingVector, SemanticError};

pub const KB_SCHEMA_VERSION: &str = "1";
pub const DEFAULT_KB_THRESHOLD: f64 = 0.5;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternCategory {
    StateConfig,
    SingleChainVuln,
    Other,
}

/// Pattern as authored; `embedding` is filled in by [`build_kb`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePattern {
    pub pattern_id: String,
    pub title: String,
    pub bypass_principle: String,
    pub root_cause: String,
    pub category: PatternCategory,
    /// Embedded for retrieval only, never placed in a prompt.
    pub exemplar_snippet: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

/// Prompt-facing projection of a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternBrief {
    pub pattern_id: String,
    pub title: String,
    pub bypass_principle: String,
    pub root_cause: String,
    pub category: PatternCategory,
}

impl KnowledgePattern {
    pub fn brief(&self) -> PatternBrief {
        PatternBrief {
            pattern_id: self.pattern_id.clone(),
            title: self.title.clone(),
            bypass_principle: self.bypass_principle.clone(),
            root_cause: self.root_cause.clone(),
            category: self.category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub schema_version: String,
    pub dims: usize,
    pub patterns: Vec<KnowledgePattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retrieved {
    pub pattern: PatternBrief,
    pub score: f64,
}

const SEED: &str = include_str!("../../data/seed_patterns.json");

/// The bundled seed corpus, without embeddings.
pub fn seed_patterns() -> Vec<KnowledgePattern> {
    serde_json::from_str(SEED).expect("bundled seed patterns are valid")
}

pub fn build_kb(embedder: &dyn Embedder, patterns: Vec<KnowledgePattern>) -> Result<KnowledgeBase, SemanticError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(patterns.len());
    for mut p in patterns {
        if !seen.insert(p.pattern_id.clone()) {
            return Err(SemanticError::DuplicatePatternId(p.pattern_id));
        }
        p.embedding = Some(embedder.embed(&p.exemplar_snippet)?);
        out.push(p);
    }
    Ok(KnowledgeBase {
        schema_version: KB_SCHEMA_VERSION.into(),
        dims: embedder.dims(),
        patterns: out,
    })
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SemanticError> {
        let kb: KnowledgeBase =
            serde_json::from_str(text).map_err(|e| SemanticError::KnowledgeBase(e.to_string()))?;
        if kb.schema_version != KB_SCHEMA_VERSION {
            return Err(SemanticError::KnowledgeBase(format!(
                "unsupported schema_version {}",
                kb.schema_version
            )));
        }
        let mut seen = BTreeSet::new();
        for p in &kb.patterns {
            if !seen.insert(&p.pattern_id) {
                return Err(SemanticError::DuplicatePatternId(p.pattern_id.clone()));
            }
            match &p.embedding {
                Some(e) if e.dims() == kb.dims => {}
                Some(e) => return Err(SemanticError::DimMismatch(kb.dims, e.dims())),
                None => {
                    return Err(SemanticError::KnowledgeBase(format!(
                        "pattern {} has no embedding",
                        p.pattern_id
                    )))
                }
            }
        }
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self, SemanticError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Exhaustive scan; keeps scores ≥ `threshold`, ordered by score desc then
/// pattern id asc, truncated to `top_k`.
pub fn retrieve(
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    query: &str,
    threshold: f64,
    top_k: usize,
) -> Result<Vec<Retrieved>, SemanticError> {
    if kb.is_empty() || top_k == 0 {
        return Ok(Vec::new());
    }
    let q = embedder.embed(query)?;
    if q.dims() != kb.dims {
        return Err(SemanticError::DimMismatch(kb.dims, q.dims()));
    }
    let mut scored = Vec::new();
    for p in &kb.patterns {
        let Some(e) = &p.embedding else { continue };
        let s = similarity(&q, e)?;
        if s >= threshold {
            scored.push((s, p));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.pattern_id.cmp(&b.1.pattern_id)));
    Ok(scored
        .into_iter()
        .take(top_k)
        .map(|(score, p)| Retrieved {
            pattern: p.brief(),
            score,
        })
        .collect())
}

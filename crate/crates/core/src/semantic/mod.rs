//! Embeddings, similarity pruning, bypass-knowledge retrieval and state context.

pub mod kb;
pub mod state;

use serde::{Deserialize, Serialize};

pub use kb::{build_kb, retrieve, seed_patterns, KnowledgeBase, KnowledgePattern, PatternCategory, Retrieved};
pub use state::{state_context, StateContext, StateVarInfo};

pub const DEFAULT_DIMS: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum SemanticError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("duplicate pattern id {0}")]
    DuplicatePatternId(String),
    #[error("knowledge base: {0}")]
    KnowledgeBase(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown function {0}")]
    UnknownFunction(String),
}

/// L2-normalised embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    /// Normalise raw values; an all-zero vector stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector(values)
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dims(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, SemanticError>;
}

/// Deterministic token n-gram feature hashing (FNV-1a), unigrams and
/// bigrams, raw counts, then L2 normalisation.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dims: usize,
}

impl HashEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0);
        HashEmbedder { dims }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(DEFAULT_DIMS)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Lower-cased word tokens plus single punctuation characters.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            cur.extend(c.to_lowercase());
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

impl Embedder for HashEmbedder {
    fn name(&self) -> &str {
        "feature-hash"
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, SemanticError> {
        let toks = tokens(text);
        if toks.is_empty() {
            return Err(SemanticError::EmptyText);
        }
        let mut v = vec![0.0; self.dims];
        let dims = self.dims as u64;
        for t in &toks {
            v[(fnv1a(t.as_bytes()) % dims) as usize] += 1.0;
        }
        for w in toks.windows(2) {
            let bigram = format!("{}\u{1f}{}", w[0], w[1]);
            v[(fnv1a(bigram.as_bytes()) % dims) as usize] += 1.0;
        }
        Ok(EmbeddingVector::normalized(v))
    }
}

/// Embeddings from an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub dims: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, dims: usize) -> Self {
        HttpEmbedder {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            dims,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> &str {
        &self.model
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, SemanticError> {
        if text.trim().is_empty() {
            return Err(SemanticError::EmptyText);
        }
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .json(&serde_json::json!({ "model": self.model, "input": text }));
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let unavailable = |e: String| SemanticError::ProviderUnavailable(e);
        let body: serde_json::Value = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| unavailable(e.to_string()))?
            .json()
            .map_err(|e| unavailable(e.to_string()))?;
        let values: Vec<f64> = body["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| unavailable("response has no data[0].embedding".into()))?
            .iter()
            .filter_map(|v| v.as_f64())
            .collect();
        if values.len() != self.dims {
            return Err(SemanticError::DimMismatch(self.dims, values.len()));
        }
        Ok(EmbeddingVector::normalized(values))
    }
}

/// Dot product of two normalised vectors.
pub fn similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SemanticError> {
    if a.dims() != b.dims() {
        return Err(SemanticError::DimMismatch(a.dims(), b.dims()));
    }
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum())
}

/// Greedy first-kept scan: keep an item iff its similarity to every kept
/// item is below `threshold`. Returns retained indices in input order.
pub fn prune_vectors(vectors: &[EmbeddingVector], threshold: f64) -> Result<Vec<usize>, SemanticError> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let mut keep = true;
        for &k in &kept {
            if similarity(v, &vectors[k])? >= threshold {
                keep = false;
                break;
            }
        }
        if keep {
            kept.push(i);
        }
    }
    Ok(kept)
}

pub fn prune_candidates(
    embedder: &dyn Embedder,
    snippets: &[&str],
    threshold: f64,
) -> Result<Vec<usize>, SemanticError> {
    let vs = snippets.iter().map(|s| embedder.embed(s)).collect::<Result<Vec<_>, _>>()?;
    prune_vectors(&vs, threshold)
}

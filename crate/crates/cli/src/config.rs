//! TOML run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use xchain_audit_core::callgraph::{default_event_patterns, EventPattern};
use xchain_audit_core::orchestrator::{
    key_env_var, CacheMode, CachedProvider, ChatProvider, HttpProvider, ModelBinding, Role, Sampling,
    DEFAULT_CONFIDENCE, DEFAULT_K_G, DEFAULT_MAX_ATTEMPTS,
};
use xchain_audit_core::pipeline::{OfflineProvider, PipelineConfig, Thresholds};
use xchain_audit_core::report::{Price, PriceTable};
use xchain_audit_core::semantic::kb::DEFAULT_TOP_K;
use xchain_audit_core::semantic::{Embedder, HashEmbedder, HttpEmbedder, DEFAULT_DIMS};

pub const CONFIG_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Built-in deterministic responder; never touches the network.
    Offline,
    /// OpenAI-compatible chat completions endpoint.
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindingConfig {
    pub name: String,
    /// Model id sent to the endpoint; defaults to `name`.
    pub model: Option<String>,
    pub provider: ProviderKind,
    pub base_url: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    pub max_attempts: Option<u32>,
    pub sampling: Option<Sampling>,
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hash,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    #[serde(default = "default_dims")]
    pub dims: usize,
    pub name: Option<String>,
    pub model: Option<String>,
    pub base_url: Option<String>,
}

fn default_dims() -> usize {
    DEFAULT_DIMS
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Hash,
            dims: DEFAULT_DIMS,
            name: None,
            model: None,
            base_url: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: String,
    pub project_id: Option<String>,
    #[serde(rename = "k_G", default = "default_k_g")]
    pub k_g: usize,
    #[serde(default = "default_confidence")]
    pub confidence_threshold: u8,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_prune")]
    pub prune_similarity: f64,
    #[serde(default = "default_kb_sim")]
    pub kb_similarity: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_cap")]
    pub in_flight_cap: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub ensemble: Vec<BindingConfig>,
    pub evaluator: Option<BindingConfig>,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default = "default_event_patterns")]
    pub event_patterns: Vec<EventPattern>,
    /// USD per million tokens, keyed by binding name. Absent: reference table.
    pub prices: Option<BTreeMap<String, Price>>,
}

fn default_k_g() -> usize {
    DEFAULT_K_G
}
fn default_confidence() -> u8 {
    DEFAULT_CONFIDENCE
}
fn default_max_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}
fn default_prune() -> f64 {
    Thresholds::default().prune_sim
}
fn default_kb_sim() -> f64 {
    Thresholds::default().kb_sim
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K
}
fn default_cap() -> usize {
    8
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str(&format!("config_version = \"{CONFIG_VERSION}\"")).expect("defaults parse")
    }
}

/// How provider calls are cached.
#[derive(Debug, Clone)]
pub struct CacheSetting {
    pub dir: PathBuf,
    pub mode: CacheMode,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.config_version != CONFIG_VERSION {
            bail!("unsupported config_version {:?} (expected {CONFIG_VERSION:?})", cfg.config_version);
        }
        let mut names = std::collections::BTreeSet::new();
        for b in cfg.ensemble.iter().chain(&cfg.evaluator) {
            if !names.insert(b.name.as_str()) {
                bail!("binding name {:?} used twice", b.name);
            }
            if b.provider == ProviderKind::Http && b.base_url.is_none() {
                bail!("binding {:?}: http provider needs base_url", b.name);
            }
        }
        if cfg.embedder.kind == EmbedderKind::Http && (cfg.embedder.base_url.is_none() || cfg.embedder.model.is_none()) {
            bail!("http embedder needs base_url and model");
        }
        if cfg.embedder.dims == 0 {
            bail!("embedder dims must be at least 1");
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn prices(&self) -> PriceTable {
        match &self.prices {
            Some(p) => PriceTable(p.clone()),
            None => PriceTable::reference(),
        }
    }

    fn binding(&self, b: &BindingConfig, role: Role, cache: Option<&CacheSetting>) -> Result<ModelBinding> {
        let provider: Arc<dyn ChatProvider> = match b.provider {
            ProviderKind::Offline => Arc::new(OfflineProvider::new(&b.name)),
            ProviderKind::Http => {
                let url = b.base_url.as_deref().unwrap_or_default();
                let timeout = Duration::from_secs(b.timeout_secs);
                match HttpProvider::from_env(&b.name, url, timeout) {
                    Ok(p) => Arc::new(p),
                    // replay-only runs never reach the endpoint
                    Err(_) if cache.is_some_and(|c| c.mode == CacheMode::ReplayOnly) => {
                        Arc::new(OfflineProvider::new(&b.name))
                    }
                    Err(e) => return Err(e).with_context(|| format!("binding {:?}", b.name)),
                }
            }
        };
        let provider: Arc<dyn ChatProvider> = match cache {
            Some(c) => Arc::new(CachedProvider::new(provider, &c.dir, c.mode)),
            None => provider,
        };
        Ok(ModelBinding {
            name: b.name.clone(),
            model: b.model.clone().unwrap_or_else(|| b.name.clone()),
            role,
            sampling: b.sampling.unwrap_or(self.sampling),
            max_attempts: b.max_attempts.unwrap_or(self.max_attempts),
            provider,
        })
    }

    /// Pipeline configuration; providers are only instantiated when the run
    /// will call them.
    pub fn pipeline(&self, dry_run: bool, cache: Option<&CacheSetting>) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            event_patterns: self.event_patterns.clone(),
            k_g: self.k_g,
            thresholds: Thresholds {
                confidence: self.confidence_threshold,
                prune_sim: self.prune_similarity,
                kb_sim: self.kb_similarity,
            },
            top_k: self.top_k,
            in_flight_cap: self.in_flight_cap,
            dry_run,
            ..Default::default()
        };
        if !dry_run {
            for b in &self.ensemble {
                cfg.ensemble.push(self.binding(b, Role::Generator, cache)?);
            }
            if let Some(b) = &self.evaluator {
                cfg.evaluator = Some(self.binding(b, Role::Evaluator, cache)?);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn embedder(&self) -> Box<dyn Embedder> {
        let e = &self.embedder;
        match e.kind {
            EmbedderKind::Hash => Box::new(HashEmbedder::new(e.dims)),
            EmbedderKind::Http => {
                let name = e.name.as_deref().or(e.model.as_deref()).unwrap_or("embedder");
                let key = std::env::var(key_env_var(name)).ok();
                Box::new(HttpEmbedder::new(
                    e.base_url.as_deref().unwrap_or_default(),
                    e.model.as_deref().unwrap_or_default(),
                    key,
                    e.dims,
                ))
            }
        }
    }
}

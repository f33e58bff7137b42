//! Token and cost accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::orchestrator::CallRecord;
use crate::pipeline::LayerTime;

/// USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input_per_mtok: f64,
    pub output_per_mtok: f64,
}

/// Binding name → price.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, Price>);

impl PriceTable {
    /// List prices documented in `docs/pricing.md`.
    pub fn reference() -> Self {
        let p = |i, o| Price {
            input_per_mtok: i,
            output_per_mtok: o,
        };
        PriceTable(BTreeMap::from([
            ("deepseek-v3.2".to_string(), p(0.28, 0.42)),
            ("gpt-4o-mini".to_string(), p(0.15, 0.60)),
            ("gemini-2.5-flash".to_string(), p(0.30, 2.50)),
        ]))
    }
}

/// Minimal per-call usage, convertible from [`CallRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub binding: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub estimated: bool,
}

impl From<&CallRecord> for UsageRecord {
    fn from(r: &CallRecord) -> Self {
        UsageRecord {
            binding: r.binding.clone(),
            input_tokens: r.input_tokens,
            output_tokens: r.output_tokens,
            estimated: r.estimated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingUsage {
    pub binding: String,
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub estimated_calls: u64,
    pub cost_usd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub layers: Vec<LayerTime>,
    /// Sorted by binding name.
    pub bindings: Vec<BindingUsage>,
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    /// Cost rounded to cents, e.g. `"$0.02"`.
    pub cost_display: String,
    /// Bindings with no price entry; their cost counts as zero.
    pub unpriced: Vec<String>,
}

pub fn cost_display(usd: f64) -> String {
    format!("${usd:.2}")
}

fn cost(p: Option<&Price>, input: u64, output: u64) -> f64 {
    p.map_or(0.0, |p| (input as f64 * p.input_per_mtok + output as f64 * p.output_per_mtok) / 1e6)
}

/// Exact token sums per binding; cost is Σ tokens × unit price.
pub fn account_usage(records: &[UsageRecord], prices: &PriceTable) -> UsageSummary {
    let mut per: BTreeMap<&str, (u64, u64, u64, u64)> = BTreeMap::new();
    for r in records {
        let e = per.entry(&r.binding).or_default();
        e.0 += 1;
        e.1 += r.input_tokens;
        e.2 += r.output_tokens;
        e.3 += u64::from(r.estimated);
    }
    let mut s = UsageSummary::default();
    for (b, (calls, i, o, est)) in per {
        let price = prices.0.get(b);
        if price.is_none() {
            s.unpriced.push(b.to_string());
        }
        let c = cost(price, i, o);
        s.bindings.push(BindingUsage {
            binding: b.to_string(),
            calls,
            input_tokens: i,
            output_tokens: o,
            estimated_calls: est,
            cost_usd: c,
        });
        s.calls += calls;
        s.input_tokens += i;
        s.output_tokens += o;
    }
    // total from summed tokens per binding, independent of record order
    s.cost_usd = s.bindings.iter().fold(0.0, |acc, b| acc + b.cost_usd);
    s.cost_display = cost_display(s.cost_usd);
    s
}

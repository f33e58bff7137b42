//! Audit-point evaluation: recall, precision and F1 against ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AuditReport;
use crate::orchestrator::collapse_ws;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("duplicate point id {0}")]
    DuplicatePointId(String),
    #[error("adjudication names unknown point {0}")]
    UnknownPoint(String),
    #[error("point {0}: {1}")]
    InvalidPoint(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLayer {
    Mapping,
    Rule,
    Bypass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub point_id: String,
    pub layer: PointLayer,
    /// Mapping: `{entrypoint, property_name, parameter_name|null}`;
    /// rule: `{entrypoint, rule_id, checklist_item, status}`;
    /// bypass: `{entrypoint, bypass_title}`, title omitted when `allow_none`.
    pub expected: Value,
    /// The expectation is that nothing is reported for this subject.
    #[serde(default)]
    pub allow_none: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub points: Vec<AuditPoint>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let mut seen = BTreeSet::new();
        for p in &self.points {
            if !seen.insert(&p.point_id) {
                return Err(MetricsError::DuplicatePointId(p.point_id.clone()));
            }
            if !p.expected["entrypoint"].is_string() {
                return Err(MetricsError::InvalidPoint(p.point_id.clone(), "expected.entrypoint missing".into()));
            }
        }
        Ok(())
    }
}

/// One predicted fact extracted from a report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Prediction {
    pub layer: PointLayer,
    /// What the prediction is about, e.g. `(entrypoint, property)`.
    pub subject: Vec<String>,
    /// Predicted value; `None` for an explicit "no link" prediction.
    pub value: Option<String>,
}

fn norm(s: &str) -> String {
    collapse_ws(s).to_lowercase()
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Distinct predictions in a report, sorted.
pub fn predictions_from_report(r: &AuditReport) -> Vec<Prediction> {
    let mut out = BTreeSet::new();
    for f in &r.transaction_flows {
        let ep = f.entrypoint.clone();
        for m in &f.mappings {
            out.insert(Prediction {
                layer: PointLayer::Mapping,
                subject: vec![ep.clone(), m.property_name.clone()],
                value: m.parameter_name.clone(),
            });
        }
        for rf in &f.rule_findings {
            out.insert(Prediction {
                layer: PointLayer::Rule,
                subject: vec![ep.clone(), rf.rule_id.clone(), rf.checklist_item.to_string()],
                value: Some(rf.status.clone()),
            });
        }
        for b in &f.bypasses {
            out.insert(Prediction {
                layer: PointLayer::Bypass,
                subject: vec![ep.clone()],
                value: Some(norm(&b.bypass_title)),
            });
        }
    }
    out.into_iter().collect()
}

/// Decides what a point is about and whether a prediction satisfies it.
pub trait Matcher {
    fn subject(&self, p: &AuditPoint) -> Vec<String>;
    /// `None` when the point expects no link.
    fn expected_value(&self, p: &AuditPoint) -> Option<String>;
    fn matches(&self, expected: &str, predicted: &str) -> bool;
}

/// Field equality after whitespace and case normalisation.
pub struct ExactFieldMatcher;

impl Matcher for ExactFieldMatcher {
    fn subject(&self, p: &AuditPoint) -> Vec<String> {
        let e = &p.expected;
        let ep = text(&e["entrypoint"]);
        match p.layer {
            PointLayer::Mapping => vec![ep, text(&e["property_name"])],
            PointLayer::Rule => vec![ep, text(&e["rule_id"]), text(&e["checklist_item"])],
            PointLayer::Bypass => vec![ep],
        }
    }

    fn expected_value(&self, p: &AuditPoint) -> Option<String> {
        if p.allow_none {
            return None;
        }
        let field = match p.layer {
            PointLayer::Mapping => "parameter_name",
            PointLayer::Rule => "status",
            PointLayer::Bypass => "bypass_title",
        };
        p.expected[field].as_str().map(norm)
    }

    fn matches(&self, expected: &str, predicted: &str) -> bool {
        norm(expected) == norm(predicted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Tp,
    Fn,
}

/// Human verdicts overriding the mechanical ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    #[serde(default)]
    pub points: BTreeMap<String, Verdict>,
    /// Replaces the mechanical false-positive count when set.
    #[serde(default)]
    pub false_positives: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDisplay {
    pub recall: String,
    pub precision: String,
    pub f1: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub display: MetricsDisplay,
    /// A denominator was zero and the affected metric was set to 0.
    pub zero_division: bool,
}

fn ratio(n: u64, d: u64, flag: &mut bool) -> f64 {
    if d == 0 {
        *flag = true;
        0.0
    } else {
        n as f64 / d as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: u64, fn_: u64, fp: u64) -> Metrics {
        let mut zero = false;
        let recall = ratio(tp, tp + fn_, &mut zero);
        let precision = ratio(tp, tp + fp, &mut zero);
        // 2PR/(P+R) with P, R expanded
        let f1 = ratio(2 * tp, 2 * tp + fn_ + fp, &mut zero);
        Metrics {
            tp,
            fn_,
            fp,
            recall,
            precision,
            f1,
            display: MetricsDisplay {
                recall: format!("{recall:.2}"),
                precision: format!("{precision:.2}"),
                f1: format!("{f1:.2}"),
            },
            zero_division: zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointVerdict {
    pub point_id: String,
    pub verdict: Verdict,
    pub adjudicated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub points: Vec<PointVerdict>,
    /// Predictions counted as false positives.
    pub false_positives: Vec<Prediction>,
    /// Predictions about subjects no point covers; not scored.
    pub unscored: usize,
}

/// A point is TP when a prediction on its subject matches the expected
/// value, or when it expects no link and no non-empty prediction exists.
/// A non-empty prediction on an annotated subject that satisfies no point
/// is a false positive.
pub fn compute_metrics(
    predictions: &[Prediction],
    truth: &GroundTruth,
    matcher: &dyn Matcher,
    adjudication: Option<&Adjudication>,
) -> Result<Evaluation, MetricsError> {
    truth.validate()?;
    if let Some(a) = adjudication {
        for id in a.points.keys() {
            if !truth.points.iter().any(|p| &p.point_id == id) {
                return Err(MetricsError::UnknownPoint(id.clone()));
            }
        }
    }
    let mut subjects: BTreeSet<(PointLayer, Vec<String>)> = BTreeSet::new();
    let mut used = vec![false; predictions.len()];
    let mut points = Vec::new();
    let (mut tp, mut fn_) = (0, 0);
    for p in &truth.points {
        let subject = matcher.subject(p);
        subjects.insert((p.layer, subject.clone()));
        let on_subject: Vec<usize> = predictions
            .iter()
            .enumerate()
            .filter(|(_, q)| q.layer == p.layer && q.subject == subject)
            .map(|(i, _)| i)
            .collect();
        let mechanical = match matcher.expected_value(p) {
            Some(exp) => match on_subject
                .iter()
                .find(|&&i| predictions[i].value.as_deref().is_some_and(|v| matcher.matches(&exp, v)))
            {
                Some(&i) => {
                    used[i] = true;
                    Verdict::Tp
                }
                None => Verdict::Fn,
            },
            None => {
                if on_subject.iter().all(|&i| predictions[i].value.is_none()) {
                    Verdict::Tp
                } else {
                    Verdict::Fn
                }
            }
        };
        let over = adjudication.and_then(|a| a.points.get(&p.point_id)).copied();
        let verdict = over.unwrap_or(mechanical);
        match verdict {
            Verdict::Tp => tp += 1,
            Verdict::Fn => fn_ += 1,
        }
        points.push(PointVerdict {
            point_id: p.point_id.clone(),
            verdict,
            adjudicated: over.is_some(),
        });
    }
    let mut false_positives = Vec::new();
    let mut unscored = 0;
    for (i, q) in predictions.iter().enumerate() {
        if q.value.is_none() || used[i] {
            continue;
        }
        if subjects.contains(&(q.layer, q.subject.clone())) {
            false_positives.push(q.clone());
        } else {
            unscored += 1;
        }
    }
    let fp = adjudication
        .and_then(|a| a.false_positives)
        .unwrap_or(false_positives.len() as u64);
    Ok(Evaluation {
        metrics: Metrics::from_counts(tp, fn_, fp),
        points,
        false_positives,
        unscored,
    })
}

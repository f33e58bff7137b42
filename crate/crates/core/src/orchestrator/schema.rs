//! Layer payload schemas and output validation, including grounding of
//! quoted code against the layer input.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SEVERITIES: [&str; 4] = ["critical", "high", "medium", "low"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub violations: Vec<Violation>,
}

impl ErrorReport {
    pub fn single(path: &str, message: impl Into<String>) -> Self {
        ErrorReport {
            violations: vec![Violation {
                path: path.into(),
                message: message.into(),
            }],
        }
    }

    fn push(&mut self, path: String, message: impl Into<String>) {
        self.violations.push(Violation {
            path,
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

/// Checklist arity of one rule offered to Layer 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleShape {
    pub rule_id: String,
    pub checklist_len: usize,
}

/// What a response must look like; carries the input it must be grounded in.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSchema {
    /// Layer 2: `[{property_name, parameter_name|null, code_location|null}]`
    Mapping { properties: Vec<String>, input: String },
    /// Layer 4: `[{rule_id, checklist_item, status, snippet|null}]`
    Constraint { rules: Vec<RuleShape>, input: String },
    /// Layer 5: `[{bypass_title, preconditions, steps, poc_sketch, severity}]`
    Bypass,
    /// Evaluator: `{score, rationale?}`
    Score,
}

impl LayerSchema {
    pub fn layer(&self) -> u8 {
        match self {
            LayerSchema::Mapping { .. } => 2,
            LayerSchema::Constraint { .. } => 4,
            LayerSchema::Bypass => 5,
            LayerSchema::Score => 0,
        }
    }

    /// Human-readable format contract placed in prompts.
    pub fn format_instructions(&self) -> &'static str {
        match self {
            LayerSchema::Mapping { .. } => concat!(
                "Respond with a JSON array only. One object per security property: ",
                "{\"property_name\": string, \"parameter_name\": string or null, \"code_location\": string or null}. ",
                "code_location must be a line copied verbatim from the code; use null for both fields when no parameter carries the property."
            ),
            LayerSchema::Constraint { .. } => concat!(
                "Respond with a JSON array only. One object per checklist item: ",
                "{\"rule_id\": string, \"checklist_item\": 1-based integer, \"status\": \"implemented\" or \"missing\", \"snippet\": string or null}. ",
                "snippet must be copied verbatim from the code and is required when status is implemented."
            ),
            LayerSchema::Bypass => concat!(
                "Respond with a JSON array only, possibly empty. One object per bypass: ",
                "{\"bypass_title\": string, \"preconditions\": [string], \"steps\": [string], \"poc_sketch\": string, ",
                "\"severity\": \"critical\" | \"high\" | \"medium\" | \"low\"}."
            ),
            LayerSchema::Score => concat!(
                "Respond with a JSON object only: {\"score\": integer from 0 to 100, \"rationale\": string}."
            ),
        }
    }
}

/// Whitespace runs collapsed to one space, trimmed.
pub fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Verbatim containment modulo whitespace layout.
pub fn grounded(snippet: &str, input: &str) -> bool {
    let s = collapse_ws(snippet);
    !s.is_empty() && collapse_ws(input).contains(&s)
}

/// Strips a surrounding Markdown code fence if present.
fn unfence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

pub fn parse_json(raw: &str) -> Result<Value, ErrorReport> {
    serde_json::from_str(unfence(raw)).map_err(|e| ErrorReport::single("$", format!("not valid JSON: {e}")))
}

struct Ctx<'a> {
    report: &'a mut ErrorReport,
    obj: &'a Map<String, Value>,
    path: String,
}

impl Ctx<'_> {
    fn nonempty_str(&mut self, key: &str) -> Option<String> {
        match self.obj.get(key) {
            Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
            Some(Value::String(_)) => {
                self.report.push(format!("{}.{key}", self.path), "must not be blank");
                None
            }
            None => {
                self.report.push(format!("{}.{key}", self.path), "missing required field");
                None
            }
            Some(_) => {
                self.report.push(format!("{}.{key}", self.path), "must be a string");
                None
            }
        }
    }

    /// `Ok(None)` for explicit null; missing counts as a violation.
    fn nullable_str(&mut self, key: &str) -> Result<Option<String>, ()> {
        match self.obj.get(key) {
            Some(Value::Null) => Ok(None),
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(Some(s.clone())),
            Some(Value::String(_)) => {
                self.report.push(format!("{}.{key}", self.path), "must be null or a non-blank string");
                Err(())
            }
            None => {
                self.report.push(format!("{}.{key}", self.path), "missing required field");
                Err(())
            }
            Some(_) => {
                self.report.push(format!("{}.{key}", self.path), "must be a string or null");
                Err(())
            }
        }
    }

    fn str_list(&mut self, key: &str) -> Option<Vec<String>> {
        let path = format!("{}.{key}", self.path);
        let Some(v) = self.obj.get(key) else {
            self.report.push(path, "missing required field");
            return None;
        };
        let items: Option<Vec<String>> = match v {
            Value::Array(a) if !a.is_empty() => a
                .iter()
                .map(|x| x.as_str().filter(|s| !s.trim().is_empty()).map(str::to_string))
                .collect(),
            Value::String(s) if !s.trim().is_empty() => Some(vec![s.clone()]),
            _ => None,
        };
        if items.is_none() {
            self.report.push(path, "must be a non-empty list of non-blank strings");
        }
        items
    }

    fn ground(&mut self, key: &str, snippet: &str, input: &str) {
        if !grounded(snippet, input) {
            self.report.push(
                format!("{}.{key}", self.path),
                format!("quoted code {snippet:?} does not occur in the input"),
            );
        }
    }
}

/// Validate a model response. On success returns the normalised findings
/// (schema fields only); for [`LayerSchema::Score`] a single `{score}` object.
pub fn validate_output(raw: &str, schema: &LayerSchema) -> Result<Vec<Value>, ErrorReport> {
    let doc = parse_json(raw)?;
    let mut report = ErrorReport::default();
    if let LayerSchema::Score = schema {
        let Value::Object(obj) = &doc else {
            return Err(ErrorReport::single("$", "expected a JSON object"));
        };
        match obj.get("score").and_then(Value::as_u64) {
            Some(s) if s <= 100 => return Ok(vec![serde_json::json!({ "score": s })]),
            Some(_) => report.push("$.score".into(), "must be within 0..=100"),
            None if obj.contains_key("score") => report.push("$.score".into(), "must be a non-negative integer"),
            None => report.push("$.score".into(), "missing required field"),
        }
        return Err(report);
    }
    let items = match &doc {
        Value::Array(a) => a,
        Value::Object(o) => match o.get("findings") {
            Some(Value::Array(a)) => a,
            _ => return Err(ErrorReport::single("$", "expected a JSON array of findings")),
        },
        _ => return Err(ErrorReport::single("$", "expected a JSON array of findings")),
    };
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("$[{i}]");
        let Value::Object(obj) = item else {
            report.push(path, "expected an object");
            continue;
        };
        let before = report.violations.len();
        let mut c = Ctx {
            report: &mut report,
            obj,
            path,
        };
        let normalised = match schema {
            LayerSchema::Mapping { properties, input } => {
                let prop = c.nonempty_str("property_name");
                if let Some(p) = &prop {
                    if !properties.contains(p) {
                        c.report.push(format!("{}.property_name", c.path), format!("unknown property {p:?}"));
                    }
                }
                let param = c.nullable_str("parameter_name");
                let loc = c.nullable_str("code_location");
                if let (Ok(Some(p)), _) = (&param, &loc) {
                    if !input.contains(p.as_str()) {
                        c.report.push(
                            format!("{}.parameter_name", c.path),
                            format!("{p:?} does not occur in the input"),
                        );
                    }
                }
                match (&param, &loc) {
                    (Ok(Some(_)), Ok(None)) => c.report.push(
                        format!("{}.code_location", c.path),
                        "required when parameter_name is set",
                    ),
                    (_, Ok(Some(l))) => c.ground("code_location", l, input),
                    _ => {}
                }
                serde_json::json!({
                    "property_name": prop,
                    "parameter_name": param.ok().flatten(),
                    "code_location": loc.ok().flatten(),
                })
            }
            LayerSchema::Constraint { rules, input } => {
                let rule_id = c.nonempty_str("rule_id");
                let shape = rule_id.as_ref().and_then(|r| rules.iter().find(|s| &s.rule_id == r));
                if let (Some(r), None) = (&rule_id, shape) {
                    c.report.push(format!("{}.rule_id", c.path), format!("unknown rule {r:?}"));
                }
                let item_no = match c.obj.get("checklist_item").map(Value::as_u64) {
                    None => {
                        c.report.push(format!("{}.checklist_item", c.path), "missing required field");
                        None
                    }
                    Some(None) => {
                        c.report.push(format!("{}.checklist_item", c.path), "must be a positive integer");
                        None
                    }
                    Some(Some(n)) => {
                        if let Some(s) = shape {
                            if n == 0 || n as usize > s.checklist_len {
                                c.report.push(
                                    format!("{}.checklist_item", c.path),
                                    format!("must be within 1..={}", s.checklist_len),
                                );
                            }
                        }
                        Some(n)
                    }
                };
                let status = c.nonempty_str("status");
                if let Some(s) = &status {
                    if s != "implemented" && s != "missing" {
                        c.report.push(format!("{}.status", c.path), "must be \"implemented\" or \"missing\"");
                    }
                }
                let snippet = c.nullable_str("snippet");
                match (&status, &snippet) {
                    (Some(s), Ok(None)) if s == "implemented" => {
                        c.report.push(format!("{}.snippet", c.path), "required when status is implemented")
                    }
                    (_, Ok(Some(sn))) => c.ground("snippet", sn, input),
                    _ => {}
                }
                serde_json::json!({
                    "rule_id": rule_id,
                    "checklist_item": item_no,
                    "status": status,
                    "snippet": snippet.ok().flatten(),
                })
            }
            LayerSchema::Bypass => {
                let title = c.nonempty_str("bypass_title");
                let pre = c.str_list("preconditions");
                let steps = c.str_list("steps");
                let poc = c.nonempty_str("poc_sketch");
                let sev = c.nonempty_str("severity").map(|s| s.to_ascii_lowercase());
                if let Some(s) = &sev {
                    if !SEVERITIES.contains(&s.as_str()) {
                        c.report.push(format!("{}.severity", c.path), format!("must be one of {SEVERITIES:?}"));
                    }
                }
                serde_json::json!({
                    "bypass_title": title,
                    "preconditions": pre,
                    "steps": steps,
                    "poc_sketch": poc,
                    "severity": sev,
                })
            }
            LayerSchema::Score => unreachable!(),
        };
        if report.violations.len() == before {
            out.push(normalised);
        }
    }
    if report.is_empty() {
        Ok(out)
    } else {
        Err(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INPUT: &str = "function swapOut(address to, uint256 amount) external {\n    require(amount > 0, \"zero\");\n}";

    fn mapping() -> LayerSchema {
        LayerSchema::Mapping {
            properties: vec!["amount".into(), "receiver".into()],
            input: INPUT.into(),
        }
    }

    #[test]
    fn valid_mapping_passes() {
        let raw = r#"```json
[{"property_name": "amount", "parameter_name": "amount", "code_location": "require(amount >   0, \"zero\");"},
 {"property_name": "receiver", "parameter_name": null, "code_location": null}]
```"#;
        let out = validate_output(raw, &mapping()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1]["parameter_name"], Value::Null);
    }

    #[test]
    fn missing_field_is_named() {
        let err = validate_output(r#"[{"property_name": "amount", "code_location": null}]"#, &mapping()).unwrap_err();
        assert_eq!(err.violations[0].path, "$[0].parameter_name");
        assert_eq!(err.violations[0].message, "missing required field");
    }

    #[test]
    fn ungrounded_snippet_rejected() {
        let raw = r#"[{"property_name": "amount", "parameter_name": "amount", "code_location": "require(amount >= 1);"}]"#;
        let err = validate_output(raw, &mapping()).unwrap_err();
        assert!(err.to_string().contains("does not occur in the input"));
    }

    #[test]
    fn constraint_enums_and_ranges() {
        let schema = LayerSchema::Constraint {
            rules: vec![RuleShape {
                rule_id: "Ps1".into(),
                checklist_len: 3,
            }],
            input: INPUT.into(),
        };
        let raw = r#"[{"rule_id": "Ps1", "checklist_item": 4, "status": "maybe", "snippet": null}]"#;
        let err = validate_output(raw, &schema).unwrap_err();
        let paths: Vec<_> = err.violations.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, ["$[0].checklist_item", "$[0].status"]);
        let ok = r#"[{"rule_id": "Ps1", "checklist_item": 1, "status": "implemented", "snippet": "require(amount > 0, \"zero\");"}]"#;
        assert!(validate_output(ok, &schema).is_ok());
    }

    #[test]
    fn score_bounds() {
        assert_eq!(validate_output("{\"score\": 85}", &LayerSchema::Score).unwrap()[0]["score"], 85);
        assert!(validate_output("{\"score\": 101}", &LayerSchema::Score).is_err());
        assert!(validate_output("not json", &LayerSchema::Score).is_err());
    }

    #[test]
    fn empty_bypass_list_is_valid() {
        assert_eq!(validate_output("[]", &LayerSchema::Bypass).unwrap().len(), 0);
    }
}

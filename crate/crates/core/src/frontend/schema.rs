//! Canonical AST document: export and validating ingestion.
//!
//! Layout: `{schema_version: "1", files: [SourceUnit...]}`. Every node is
//! `{id, kind, attrs, children}`. Declaration nodes may carry structured attr
//! values (arrays, booleans); statement and expression attrs are strings.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use super::ast::*;
use super::parser::qualify;
use super::FrontendError;

pub const SCHEMA_VERSION: &str = "1";

pub fn to_document(ast: &CanonicalAst) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "files": ast.files.iter().map(file_to_node).collect::<Vec<_>>(),
    })
}

pub fn file_to_node(f: &SourceFile) -> Value {
    let diags: Vec<Value> = f
        .diagnostics
        .iter()
        .map(|d| json!({"start": d.start, "end": d.end, "message": d.message}))
        .collect();
    decl_node(
        &f.node_id,
        NodeKind::SourceUnit,
        json!({"file_id": f.file_id, "diagnostics": diags}),
        f.contracts.iter().map(contract_to_node).collect(),
    )
}

fn decl_node(id: &NodeId, kind: NodeKind, attrs: Value, children: Vec<Value>) -> Value {
    json!({"id": id, "kind": kind.name(), "attrs": attrs, "children": children})
}

fn body_node(n: &AstNode) -> Value {
    json!({
        "id": n.id,
        "kind": n.kind.name(),
        "attrs": n.attrs,
        "children": n.children.iter().map(body_node).collect::<Vec<_>>(),
    })
}

fn contract_to_node(c: &ContractDecl) -> Value {
    let mut children: Vec<Value> = Vec::new();
    children.extend(c.state_vars.iter().map(state_var_to_node));
    children.extend(c.events.iter().map(event_to_node));
    children.extend(c.modifiers.iter().chain(&c.functions).map(function_to_node));
    decl_node(
        &c.node_id,
        NodeKind::ContractDef,
        json!({
            "name": c.name,
            "contract_kind": c.kind.as_str(),
            "inherits": c.inherits,
            "using_for": c.using_for,
        }),
        children,
    )
}

fn state_var_to_node(v: &StateVarDecl) -> Value {
    let mut attrs = json!({
        "name": v.name,
        "type": v.declared_type,
        "specifiers": v.specifiers,
    });
    if let Some(t) = &v.initializer_text {
        attrs["initializer_text"] = json!(t);
    }
    decl_node(
        &v.node_id,
        NodeKind::StateVarDecl,
        attrs,
        v.initializer.iter().map(body_node).collect(),
    )
}

fn param_node(p: &Param) -> Value {
    let mut attrs = json!({"name": p.name, "type": p.declared_type});
    if let Some(loc) = &p.location {
        attrs["location"] = json!(loc);
    }
    decl_node(&p.node_id, NodeKind::VarDeclStmt, attrs, vec![])
}

fn param_list_node(id: &NodeId, params: &[Param]) -> Value {
    decl_node(
        id,
        NodeKind::ParamList,
        json!({}),
        params.iter().map(param_node).collect(),
    )
}

fn event_to_node(e: &EventDecl) -> Value {
    decl_node(
        &e.node_id,
        NodeKind::EventDecl,
        json!({"name": e.name, "anonymous": e.anonymous}),
        vec![param_list_node(&e.param_list_id, &e.params)],
    )
}

fn function_to_node(f: &FunctionDecl) -> Value {
    let modifiers: Vec<Value> = f
        .modifiers
        .iter()
        .map(|m| {
            json!({
                "name": m.name,
                "args": m.args.as_ref().map(|a| a.iter().map(body_node).collect::<Vec<_>>()),
            })
        })
        .collect();
    let mut attrs = json!({
        "name": f.name,
        "function_kind": f.kind.as_str(),
        "visibility": f.visibility.as_str(),
        "virtual": f.is_virtual,
        "override": f.overrides,
        "modifiers": modifiers,
    });
    if let Some(m) = &f.mutability {
        attrs["mutability"] = json!(m);
    }
    let mut children = vec![
        param_list_node(&f.param_list_ids.0, &f.params),
        param_list_node(&f.param_list_ids.1, &f.returns),
    ];
    if let Some(b) = &f.body {
        children.push(body_node(b));
    }
    decl_node(&f.node_id, NodeKind::FunctionDef, attrs, children)
}

// ---- ingestion -----------------------------------------------------------

struct Ingest {
    seen_ids: BTreeSet<String>,
}

fn err(path: &str, reason: impl Into<String>) -> FrontendError {
    FrontendError::Schema {
        path: path.to_string(),
        reason: reason.into(),
    }
}

/// The generic parts of a node, checked.
struct RawNode<'v> {
    path: String,
    id: NodeId,
    kind: NodeKind,
    attrs: &'v Map<String, Value>,
    children: &'v [Value],
}

impl<'v> RawNode<'v> {
    fn child_path(&self, i: usize) -> String {
        format!("{}.children[{i}]", self.path)
    }

    fn attr_path(&self, key: &str) -> String {
        format!("{}.attrs.{key}", self.path)
    }

    fn str_attr(&self, key: &str) -> Result<String, FrontendError> {
        match self.attrs.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(err(&self.attr_path(key), "expected string")),
            None => Err(err(&self.attr_path(key), "missing required attribute")),
        }
    }

    fn opt_str_attr(&self, key: &str) -> Result<Option<String>, FrontendError> {
        match self.attrs.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(err(&self.attr_path(key), "expected string")),
        }
    }

    fn bool_attr(&self, key: &str) -> Result<bool, FrontendError> {
        match self.attrs.get(key) {
            None => Ok(false),
            Some(Value::Bool(b)) => Ok(*b),
            Some(_) => Err(err(&self.attr_path(key), "expected boolean")),
        }
    }

    fn str_list_attr(&self, key: &str) -> Result<Vec<String>, FrontendError> {
        match self.attrs.get(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| err(&format!("{}[{i}]", self.attr_path(key)), "expected string"))
                })
                .collect(),
            Some(_) => Err(err(&self.attr_path(key), "expected array")),
        }
    }

    fn expect_kind(&self, kind: NodeKind) -> Result<(), FrontendError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(err(
                &format!("{}.kind", self.path),
                format!("expected {kind}, found {}", self.kind),
            ))
        }
    }
}

impl Ingest {
    fn raw<'v>(&mut self, v: &'v Value, path: &str) -> Result<RawNode<'v>, FrontendError> {
        let obj = v.as_object().ok_or_else(|| err(path, "node must be an object"))?;
        let id = match obj.get("id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(_) => return Err(err(&format!("{path}.id"), "expected non-empty string")),
            None => return Err(err(&format!("{path}.id"), "missing required field")),
        };
        if !self.seen_ids.insert(id.clone()) {
            return Err(err(&format!("{path}.id"), format!("duplicate node id {id}")));
        }
        let kind = match obj.get("kind") {
            Some(Value::String(s)) => NodeKind::from_name(s)
                .ok_or_else(|| err(&format!("{path}.kind"), format!("unknown kind {s}")))?,
            Some(_) => return Err(err(&format!("{path}.kind"), "expected string")),
            None => return Err(err(&format!("{path}.kind"), "missing required field")),
        };
        let attrs = match obj.get("attrs") {
            Some(Value::Object(m)) => m,
            Some(_) => return Err(err(&format!("{path}.attrs"), "expected object")),
            None => return Err(err(&format!("{path}.attrs"), "missing required field")),
        };
        let children = match obj.get("children") {
            Some(Value::Array(c)) => c.as_slice(),
            Some(_) => return Err(err(&format!("{path}.children"), "expected array")),
            None => return Err(err(&format!("{path}.children"), "missing required field")),
        };
        Ok(RawNode {
            path: path.to_string(),
            id: NodeId(id),
            kind,
            attrs,
            children,
        })
    }

    fn body(&mut self, v: &Value, path: &str) -> Result<AstNode, FrontendError> {
        let raw = self.raw(v, path)?;
        let mut attrs = BTreeMap::new();
        for (k, val) in raw.attrs {
            let s = val
                .as_str()
                .ok_or_else(|| err(&raw.attr_path(k), "expected string"))?;
            attrs.insert(k.clone(), s.to_string());
        }
        let mut children = Vec::with_capacity(raw.children.len());
        for (i, c) in raw.children.iter().enumerate() {
            children.push(self.body(c, &raw.child_path(i))?);
        }
        let node = AstNode {
            id: raw.id,
            kind: raw.kind,
            attrs,
            children,
        };
        check_body_node(&node, path)?;
        Ok(node)
    }

    fn file(&mut self, v: &Value, path: &str) -> Result<SourceFile, FrontendError> {
        let raw = self.raw(v, path)?;
        raw.expect_kind(NodeKind::SourceUnit)?;
        let file_id = raw.str_attr("file_id")?;
        if file_id.is_empty() {
            return Err(err(&raw.attr_path("file_id"), "must be non-empty"));
        }
        let mut diagnostics = Vec::new();
        if let Some(d) = raw.attrs.get("diagnostics") {
            let items = d
                .as_array()
                .ok_or_else(|| err(&raw.attr_path("diagnostics"), "expected array"))?;
            for (i, item) in items.iter().enumerate() {
                let p = format!("{}[{i}]", raw.attr_path("diagnostics"));
                let diag: Diagnostic = serde_json::from_value(item.clone())
                    .map_err(|e| err(&p, e.to_string()))?;
                diagnostics.push(diag);
            }
        }
        let mut contracts: Vec<ContractDecl> = Vec::new();
        for (i, c) in raw.children.iter().enumerate() {
            let cp = raw.child_path(i);
            let contract = self.contract(c, &cp)?;
            if contracts.iter().any(|o| o.name == contract.name) {
                return Err(err(&cp, format!("duplicate contract name {}", contract.name)));
            }
            contracts.push(contract);
        }
        let mut file = SourceFile {
            file_id,
            node_id: raw.id,
            contracts,
            diagnostics,
        };
        qualify(&mut file);
        Ok(file)
    }

    fn contract(&mut self, v: &Value, path: &str) -> Result<ContractDecl, FrontendError> {
        let raw = self.raw(v, path)?;
        raw.expect_kind(NodeKind::ContractDef)?;
        let kind_text = raw.str_attr("contract_kind")?;
        let kind = ContractKind::parse(&kind_text)
            .ok_or_else(|| err(&raw.attr_path("contract_kind"), format!("unknown kind {kind_text}")))?;
        let mut c = ContractDecl {
            node_id: raw.id.clone(),
            name: raw.str_attr("name")?,
            kind,
            inherits: raw.str_list_attr("inherits")?,
            using_for: raw.str_list_attr("using_for")?,
            state_vars: Vec::new(),
            functions: Vec::new(),
            modifiers: Vec::new(),
            events: Vec::new(),
        };
        for (i, child) in raw.children.iter().enumerate() {
            let cp = raw.child_path(i);
            let kind = child.get("kind").and_then(Value::as_str);
            match kind {
                Some("StateVarDecl") => c.state_vars.push(self.state_var(child, &cp)?),
                Some("EventDecl") => c.events.push(self.event(child, &cp)?),
                Some("FunctionDef") => {
                    let f = self.function(child, &cp)?;
                    if f.kind == FunctionKind::Modifier {
                        c.modifiers.push(f);
                    } else {
                        c.functions.push(f);
                    }
                }
                _ => {
                    // let raw() report missing/unknown kinds with the right path
                    let r = self.raw(child, &cp)?;
                    return Err(err(
                        &format!("{cp}.kind"),
                        format!("{} not allowed inside ContractDef", r.kind),
                    ));
                }
            }
        }
        Ok(c)
    }

    fn state_var(&mut self, v: &Value, path: &str) -> Result<StateVarDecl, FrontendError> {
        let raw = self.raw(v, path)?;
        raw.expect_kind(NodeKind::StateVarDecl)?;
        if raw.children.len() > 1 {
            return Err(err(&format!("{path}.children"), "at most one initializer"));
        }
        let initializer = match raw.children.first() {
            Some(c) => Some(self.body(c, &raw.child_path(0))?),
            None => None,
        };
        Ok(StateVarDecl {
            node_id: raw.id.clone(),
            qualified_id: String::new(),
            name: raw.str_attr("name")?,
            declared_type: raw.str_attr("type")?,
            specifiers: raw.str_list_attr("specifiers")?,
            initializer_text: raw.opt_str_attr("initializer_text")?,
            initializer,
            owning_contract: String::new(),
        })
    }

    fn param_list(&mut self, v: &Value, path: &str) -> Result<(NodeId, Vec<Param>), FrontendError> {
        let raw = self.raw(v, path)?;
        raw.expect_kind(NodeKind::ParamList)?;
        let mut params = Vec::new();
        for (i, c) in raw.children.iter().enumerate() {
            let p = self.raw(c, &raw.child_path(i))?;
            p.expect_kind(NodeKind::VarDeclStmt)?;
            params.push(Param {
                node_id: p.id.clone(),
                name: p.opt_str_attr("name")?.unwrap_or_default(),
                declared_type: p.str_attr("type")?,
                location: p.opt_str_attr("location")?,
            });
        }
        Ok((raw.id, params))
    }

    fn event(&mut self, v: &Value, path: &str) -> Result<EventDecl, FrontendError> {
        let raw = self.raw(v, path)?;
        raw.expect_kind(NodeKind::EventDecl)?;
        let Some(list) = raw.children.first() else {
            return Err(err(&format!("{path}.children"), "missing ParamList"));
        };
        let (param_list_id, params) = self.param_list(list, &raw.child_path(0))?;
        Ok(EventDecl {
            node_id: raw.id.clone(),
            name: raw.str_attr("name")?,
            params,
            anonymous: raw.bool_attr("anonymous")?,
            param_list_id,
        })
    }

    fn function(&mut self, v: &Value, path: &str) -> Result<FunctionDecl, FrontendError> {
        let raw = self.raw(v, path)?;
        raw.expect_kind(NodeKind::FunctionDef)?;
        let kind_text = raw.str_attr("function_kind")?;
        let kind = FunctionKind::parse(&kind_text)
            .ok_or_else(|| err(&raw.attr_path("function_kind"), format!("unknown kind {kind_text}")))?;
        let vis_text = raw.str_attr("visibility")?;
        let visibility = Visibility::parse(&vis_text)
            .ok_or_else(|| err(&raw.attr_path("visibility"), format!("invalid visibility {vis_text}")))?;
        if raw.children.len() < 2 || raw.children.len() > 3 {
            return Err(err(
                &format!("{path}.children"),
                "expected [ParamList, ParamList, Block?]",
            ));
        }
        let params = self.param_list(&raw.children[0], &raw.child_path(0))?;
        let returns = self.param_list(&raw.children[1], &raw.child_path(1))?;
        let body = match raw.children.get(2) {
            Some(b) => {
                let node = self.body(b, &raw.child_path(2))?;
                if node.kind != NodeKind::Block {
                    return Err(err(&format!("{}.kind", raw.child_path(2)), "body must be a Block"));
                }
                Some(node)
            }
            None => None,
        };
        let mut modifiers = Vec::new();
        if let Some(m) = raw.attrs.get("modifiers") {
            let items = m
                .as_array()
                .ok_or_else(|| err(&raw.attr_path("modifiers"), "expected array"))?;
            for (i, item) in items.iter().enumerate() {
                let mp = format!("{}[{i}]", raw.attr_path("modifiers"));
                let name = item
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| err(&format!("{mp}.name"), "missing required field"))?;
                let args = match item.get("args") {
                    None | Some(Value::Null) => None,
                    Some(Value::Array(a)) => {
                        let mut out = Vec::new();
                        for (j, arg) in a.iter().enumerate() {
                            out.push(self.body(arg, &format!("{mp}.args[{j}]"))?);
                        }
                        Some(out)
                    }
                    Some(_) => return Err(err(&format!("{mp}.args"), "expected array or null")),
                };
                modifiers.push(ModifierInvocation {
                    name: name.to_string(),
                    args,
                });
            }
        }
        Ok(FunctionDecl {
            node_id: raw.id.clone(),
            qualified_id: FunctionId(String::new()),
            name: raw.str_attr("name")?,
            kind,
            params: params.1,
            returns: returns.1,
            visibility,
            mutability: raw.opt_str_attr("mutability")?,
            is_virtual: raw.bool_attr("virtual")?,
            overrides: raw.bool_attr("override")?,
            modifiers,
            body,
            emitted_events: Vec::new(),
            param_list_ids: (params.0, returns.0),
        })
    }
}

/// Kind-specific shape rules for statement/expression nodes.
fn check_body_node(n: &AstNode, path: &str) -> Result<(), FrontendError> {
    let need = |key: &str| -> Result<(), FrontendError> {
        if n.attrs.contains_key(key) {
            Ok(())
        } else {
            Err(err(&format!("{path}.attrs.{key}"), "missing required attribute"))
        }
    };
    let arity = |lo: usize, hi: usize| -> Result<(), FrontendError> {
        if (lo..=hi).contains(&n.children.len()) {
            Ok(())
        } else {
            Err(err(
                &format!("{path}.children"),
                format!("{} expects {lo}..={hi} children, found {}", n.kind, n.children.len()),
            ))
        }
    };
    let index = |key: &str| -> Result<(), FrontendError> {
        need(key)?;
        match n.attr(key).and_then(|v| v.parse::<usize>().ok()) {
            Some(i) if i < n.children.len() => Ok(()),
            _ => Err(err(&format!("{path}.attrs.{key}"), "not a valid child index")),
        }
    };
    match n.kind {
        NodeKind::SourceUnit
        | NodeKind::ContractDef
        | NodeKind::StateVarDecl
        | NodeKind::EventDecl
        | NodeKind::FunctionDef
        | NodeKind::ParamList => {
            return Err(err(
                &format!("{path}.kind"),
                format!("{} not allowed in a body", n.kind),
            ))
        }
        NodeKind::Block => {
            for (i, c) in n.children.iter().enumerate() {
                if !c.kind.is_statement() {
                    return Err(err(
                        &format!("{path}.children[{i}].kind"),
                        format!("{} is not a statement", c.kind),
                    ));
                }
            }
        }
        NodeKind::If | NodeKind::For | NodeKind::While => {
            index("condition")?;
            index("body")?;
            if n.kind == NodeKind::If && n.attrs.contains_key("else") {
                index("else")?;
            }
            if n.kind == NodeKind::For {
                for k in ["init", "update"] {
                    if n.attrs.contains_key(k) {
                        index(k)?;
                    }
                }
            }
        }
        NodeKind::ExprStmt => arity(1, 1)?,
        NodeKind::VarDeclStmt => {
            need("name")?;
            need("type")?;
            arity(0, 1)?;
        }
        NodeKind::Assignment => {
            need("operator")?;
            arity(2, 2)?;
        }
        NodeKind::BinaryOp => {
            need("operator")?;
            arity(2, 2)?;
        }
        NodeKind::UnaryOp => {
            need("operator")?;
            arity(1, 1)?;
        }
        NodeKind::FunctionCall => {
            need("callee")?;
            arity(1, usize::MAX)?;
        }
        NodeKind::MemberAccess => {
            need("member")?;
            arity(1, 1)?;
        }
        NodeKind::Identifier => {
            need("name")?;
            arity(0, 0)?;
        }
        NodeKind::Literal => {
            need("value")?;
            arity(0, 0)?;
        }
        NodeKind::EmitStatement => need("event")?,
        NodeKind::Return => arity(0, 1)?,
        NodeKind::Opaque => {
            need("text")?;
            arity(0, 0)?;
        }
    }
    Ok(())
}

/// Ingest a single SourceUnit node.
pub fn ingest_file(doc: &Value) -> Result<SourceFile, FrontendError> {
    Ingest {
        seen_ids: BTreeSet::new(),
    }
    .file(doc, "$")
}

/// Ingest a whole document; node ids must be unique across all files.
pub fn ingest_document(doc: &Value) -> Result<CanonicalAst, FrontendError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| err("$", "document must be an object"))?;
    match obj.get("schema_version") {
        Some(Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(v) => {
            return Err(err(
                "$.schema_version",
                format!("unsupported version {v}, expected \"{SCHEMA_VERSION}\""),
            ))
        }
        None => return Err(err("$.schema_version", "missing required field")),
    }
    let files = obj
        .get("files")
        .ok_or_else(|| err("$.files", "missing required field"))?
        .as_array()
        .ok_or_else(|| err("$.files", "expected array"))?;
    let mut ingest = Ingest {
        seen_ids: BTreeSet::new(),
    };
    let mut out = Vec::new();
    let mut file_ids = BTreeSet::new();
    for (i, f) in files.iter().enumerate() {
        let path = format!("$.files[{i}]");
        let file = ingest.file(f, &path)?;
        if !file_ids.insert(file.file_id.clone()) {
            return Err(err(&format!("{path}.attrs.file_id"), "duplicate file_id"));
        }
        out.push(file);
    }
    Ok(CanonicalAst::new(out))
}

/// Ingest from JSON text.
pub fn ingest_json_str(text: &str) -> Result<CanonicalAst, FrontendError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| err("$", e.to_string()))?;
    ingest_document(&doc)
}

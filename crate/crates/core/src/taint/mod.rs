//! Bidirectional inter-procedural taint propagation and context-aware slicing.

mod keys;
pub mod slice;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::callgraph::{Resolution, Resolver};
use crate::frontend::lexer::{tokenize, TokenKind};
use crate::frontend::{AstNode, CanonicalAst, FunctionId, FunctionRef, NodeId, NodeKind};
use keys::KeyCtx;
pub use slice::{reconstruct, reformat, slice, ItemKind, Slice, SliceFunction, SliceItem};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaintError {
    #[error("seed {0:?} matches no declaration in scope")]
    UnknownSeed(String),
    #[error("function {0} is not in the codebase")]
    UnknownFunction(FunctionId),
    #[error("seed set is empty")]
    EmptySeeds,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintSet {
    pub tainted: BTreeSet<String>,
    pub seeds: BTreeSet<String>,
}

impl TaintSet {
    pub fn contains(&self, key: &str) -> bool {
        self.tainted.contains(key)
    }

    fn touches(&self, keys: &BTreeSet<String>) -> bool {
        keys.iter().any(|k| self.tainted.contains(k))
    }
}

/// `from ∩ T ≠ ∅ ⟹ to ⊆ T`. A statement is the rule with `from == to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub from: BTreeSet<String>,
    pub to: BTreeSet<String>,
    pub origin: RuleOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOrigin {
    Statement,
    Argument,
    Return,
}

/// Propagation rules and per-node key sets of one analysis scope.
#[derive(Debug, Clone)]
pub struct TaintModel {
    /// Functions and the modifiers they invoke, in codebase order.
    pub callables: Vec<FunctionId>,
    pub rules: Vec<Rule>,
    /// Keys mentioned by each statement, condition header or modifier invocation.
    pub node_keys: BTreeMap<NodeId, BTreeSet<String>>,
    /// Every key that may be used as a seed, with its display name.
    pub declared: BTreeMap<String, String>,
}

impl TaintModel {
    pub fn build(ast: &CanonicalAst, scope: &[FunctionId]) -> Result<TaintModel, TaintError> {
        let resolver = Resolver::new(ast);
        let refs = scope_refs(ast, &resolver, scope)?;
        let ids: BTreeSet<&FunctionId> = refs.iter().map(|f| &f.function.qualified_id).collect();

        let mut model = TaintModel {
            callables: refs.iter().map(|f| f.function.qualified_id.clone()).collect(),
            rules: Vec::new(),
            node_keys: BTreeMap::new(),
            declared: BTreeMap::new(),
        };

        // signature cache: callable → parameter keys; return-value keys
        let mut params: BTreeMap<&FunctionId, Vec<Option<String>>> = BTreeMap::new();
        let mut returns: BTreeMap<&FunctionId, BTreeSet<String>> = BTreeMap::new();
        for f in &refs {
            let ctx = KeyCtx::new(&resolver, *f);
            let func = f.function;
            params.insert(
                &func.qualified_id,
                func.params
                    .iter()
                    .map(|p| (!p.name.is_empty()).then(|| ctx.local_key(&p.name)))
                    .collect(),
            );
            let mut ret = BTreeSet::new();
            for r in func.returns.iter().filter(|r| !r.name.is_empty()) {
                ret.insert(ctx.local_key(&r.name));
            }
            if let Some(body) = &func.body {
                for n in body.walk().filter(|n| n.kind == NodeKind::Return) {
                    n.children.iter().for_each(|c| ctx.keys_of(c, &mut ret));
                }
            }
            returns.insert(&func.qualified_id, ret);

            for p in func.params.iter().chain(&func.returns).filter(|p| !p.name.is_empty()) {
                model.declared.insert(ctx.local_key(&p.name), p.name.clone());
            }
            if let Some(body) = &func.body {
                for n in body.walk().filter(|n| n.kind == NodeKind::VarDeclStmt) {
                    if let Some(name) = n.attr("name") {
                        model.declared.insert(ctx.local_key(name), name.to_string());
                    }
                }
            }
            for (file, c) in resolver.lineage(f.file, f.contract) {
                for v in &c.state_vars {
                    model
                        .declared
                        .insert(format!("state:{}::{}::{}", file.file_id, c.name, v.name), v.name.clone());
                }
            }
        }

        for f in &refs {
            let ctx = KeyCtx::new(&resolver, *f);
            let mut b = RuleBuilder {
                ctx: &ctx,
                resolver: &resolver,
                scope: &ids,
                params: &params,
                returns: &returns,
                model: &mut model,
            };
            b.modifier_invocations();
            if let Some(body) = &f.function.body {
                b.stmt(body);
            }
        }

        // member paths and globals become seedable once mentioned
        let mentioned: Vec<String> = model.node_keys.values().flatten().cloned().collect();
        for k in mentioned {
            if !model.declared.contains_key(&k) && (k.starts_with("global:") || k.contains('.')) {
                let name = display_name(&k);
                model.declared.insert(k, name);
            }
        }
        Ok(model)
    }

    /// Taint to the fixed point; also returns T after every pass, starting
    /// with the seed set.
    pub fn propagate_traced(&self, seeds: &BTreeSet<String>) -> Result<(TaintSet, Vec<BTreeSet<String>>), TaintError> {
        if seeds.is_empty() {
            return Err(TaintError::EmptySeeds);
        }
        if let Some(s) = seeds.iter().find(|s| !self.declared.contains_key(*s)) {
            return Err(TaintError::UnknownSeed(s.clone()));
        }
        let mut t = TaintSet {
            tainted: seeds.clone(),
            seeds: seeds.clone(),
        };
        let mut trace = vec![t.tainted.clone()];
        loop {
            let before = t.tainted.len();
            for r in &self.rules {
                if t.touches(&r.from) {
                    t.tainted.extend(r.to.iter().cloned());
                }
            }
            trace.push(t.tainted.clone());
            if t.tainted.len() == before {
                break;
            }
        }
        Ok((t, trace))
    }

    pub fn propagate(&self, seeds: &BTreeSet<String>) -> Result<TaintSet, TaintError> {
        self.propagate_traced(seeds).map(|(t, _)| t)
    }

    /// Seed keys whose display name equals `name` (a parameter, local,
    /// state variable or member path such as `msg.sender`).
    pub fn seeds_named(&self, name: &str) -> Result<BTreeSet<String>, TaintError> {
        let out: BTreeSet<String> = self
            .declared
            .iter()
            .filter(|(_, n)| n.as_str() == name)
            .map(|(k, _)| k.clone())
            .collect();
        if out.is_empty() {
            Err(TaintError::UnknownSeed(name.to_string()))
        } else {
            Ok(out)
        }
    }

    /// Seeds for a parameter name as mapped on an entrypoint: the
    /// entrypoint's own declaration when it has one, otherwise every
    /// same-named declaration in scope.
    pub fn seeds_for(&self, entry: &FunctionId, name: &str) -> Result<BTreeSet<String>, TaintError> {
        let own = format!("{entry}::{name}");
        if self.declared.contains_key(&own) {
            return Ok(BTreeSet::from([own]));
        }
        self.seeds_named(name)
    }

    pub fn is_tainted(&self, node: &NodeId, t: &TaintSet) -> bool {
        self.node_keys.get(node).is_some_and(|k| t.touches(k))
    }
}

/// Convenience wrapper: build the model for `scope` and propagate `seeds`.
pub fn propagate_taint(
    ast: &CanonicalAst,
    scope: &[FunctionId],
    seeds: &BTreeSet<String>,
) -> Result<TaintSet, TaintError> {
    TaintModel::build(ast, scope)?.propagate(seeds)
}

fn display_name(key: &str) -> String {
    if let Some(g) = key.strip_prefix("global:") {
        return g.to_string();
    }
    // `<fn or contract>::name[.path]`
    match key.rfind("::") {
        Some(i) => key[i + 2..].to_string(),
        None => key.to_string(),
    }
}

/// Scope functions plus the modifiers they invoke, deduplicated, in codebase order.
fn scope_refs<'a>(
    ast: &'a CanonicalAst,
    resolver: &Resolver<'a>,
    scope: &[FunctionId],
) -> Result<Vec<FunctionRef<'a>>, TaintError> {
    let mut wanted: BTreeSet<FunctionId> = BTreeSet::new();
    for id in scope {
        let f = ast.function(id).ok_or_else(|| TaintError::UnknownFunction(id.clone()))?;
        wanted.insert(id.clone());
        for m in resolver.modifiers_of(&f) {
            wanted.insert(m.function.qualified_id.clone());
        }
    }
    Ok(ast
        .callables()
        .filter(|f| wanted.contains(&f.function.qualified_id))
        .collect())
}

struct RuleBuilder<'m, 'r, 'a> {
    ctx: &'m KeyCtx<'r, 'a>,
    resolver: &'m Resolver<'a>,
    scope: &'m BTreeSet<&'m FunctionId>,
    params: &'m BTreeMap<&'m FunctionId, Vec<Option<String>>>,
    returns: &'m BTreeMap<&'m FunctionId, BTreeSet<String>>,
    model: &'m mut TaintModel,
}

impl<'a> RuleBuilder<'_, '_, 'a> {
    fn unit(&mut self, id: &NodeId, keys: BTreeSet<String>) {
        if !keys.is_empty() {
            self.model.rules.push(Rule {
                from: keys.clone(),
                to: keys.clone(),
                origin: RuleOrigin::Statement,
            });
        }
        self.model.node_keys.entry(id.clone()).or_default().extend(keys);
    }

    fn modifier_invocations(&mut self) {
        let f = self.ctx.f;
        for inv in &f.function.modifiers {
            let Some(args) = &inv.args else { continue };
            let mut keys = BTreeSet::new();
            args.iter().for_each(|a| self.ctx.keys_of(a, &mut keys));
            if let Some(first) = args.first() {
                self.unit(&first.id, keys);
            }
            let Some(m) = self.resolver.modifier(&f, &inv.name) else { continue };
            let arg_keys: Vec<BTreeSet<String>> = args.iter().map(|a| self.keys(a)).collect();
            self.map_args(&m.function.qualified_id, &arg_keys);
        }
    }

    fn keys(&self, n: &AstNode) -> BTreeSet<String> {
        let mut k = BTreeSet::new();
        self.ctx.keys_of(n, &mut k);
        k
    }

    fn stmt(&mut self, node: &'a AstNode) {
        match node.kind {
            NodeKind::Block => node.children.iter().for_each(|c| self.stmt(c)),
            NodeKind::If | NodeKind::While | NodeKind::For => {
                let mut keys = BTreeSet::new();
                if let Some(c) = node.condition() {
                    self.ctx.keys_of(c, &mut keys);
                    self.calls(c, node);
                }
                if let Some(u) = node.for_update() {
                    self.ctx.keys_of(u, &mut keys);
                    self.calls(u, node);
                }
                if let Some(i) = node.for_init() {
                    self.ctx.keys_of(i, &mut keys);
                    self.calls(i, i);
                }
                self.unit(&node.id, keys);
                if let Some(b) = node.body() {
                    self.stmt(b);
                }
                if let Some(e) = node.else_branch() {
                    self.stmt(e);
                }
            }
            _ => {
                let keys = self.keys(node);
                self.unit(&node.id, keys);
                self.calls(node, node);
            }
        }
    }

    /// Argument and return rules for every call inside `root`; `stmt` is
    /// the statement that receives return values.
    fn calls(&mut self, root: &'a AstNode, stmt: &'a AstNode) {
        for n in root.walk() {
            match n.kind {
                NodeKind::FunctionCall => {
                    let res = self.resolver.resolve_call(&self.ctx.f, n);
                    let callee = n.children.first();
                    let args: Vec<BTreeSet<String>> = n.children.iter().skip(1).map(|a| self.keys(a)).collect();
                    let receiver = callee
                        .filter(|c| c.kind == NodeKind::MemberAccess)
                        .and_then(|c| c.children.first())
                        .map(|b| self.keys(b));
                    self.apply(&res, stmt, |params_len| {
                        if params_len == args.len() + 1 {
                            if let Some(r) = &receiver {
                                // using-for call: the receiver binds to the first parameter
                                let mut shifted = vec![r.clone()];
                                shifted.extend(args.iter().cloned());
                                return shifted;
                            }
                        }
                        args.clone()
                    });
                }
                NodeKind::Opaque => {
                    let text = n.attr("text").unwrap_or("");
                    let targets = self.resolver.resolve_opaque(&self.ctx.f, text);
                    for t in targets {
                        let name = t.as_str().split('(').next().unwrap_or("").rsplit("::").next().unwrap_or("").to_string();
                        let arg_keys: Vec<BTreeSet<String>> = opaque_call_args(text, &name)
                            .iter()
                            .map(|a| {
                                let mut k = BTreeSet::new();
                                self.ctx.keys_of_text(a, &mut k);
                                k
                            })
                            .collect();
                        let res = Resolution {
                            targets: vec![t],
                            dangling: None,
                        };
                        self.apply(&res, stmt, |_| arg_keys.clone());
                    }
                }
                _ => {}
            }
        }
    }

    fn apply(&mut self, res: &Resolution, stmt: &AstNode, args_for: impl Fn(usize) -> Vec<BTreeSet<String>>) {
        for target in res.targets.iter().filter(|t| self.scope.contains(t)) {
            let n_params = self.params.get(target).map_or(0, Vec::len);
            self.map_args(target, &args_for(n_params));
            let ret = self.returns.get(target).cloned().unwrap_or_default();
            let mut to = BTreeSet::new();
            self.ctx.assignment_targets(stmt, &mut to);
            if !ret.is_empty() && !to.is_empty() {
                self.model.rules.push(Rule {
                    from: ret,
                    to,
                    origin: RuleOrigin::Return,
                });
            }
        }
    }

    fn map_args(&mut self, target: &FunctionId, args: &[BTreeSet<String>]) {
        let Some(params) = self.params.get(target) else { return };
        for (a, p) in args.iter().zip(params) {
            if let Some(p) = p {
                if !a.is_empty() {
                    self.model.rules.push(Rule {
                        from: a.clone(),
                        to: BTreeSet::from([p.clone()]),
                        origin: RuleOrigin::Argument,
                    });
                }
            }
        }
    }
}

/// Argument texts of the first `name(...)` call written in raw text.
fn opaque_call_args(text: &str, name: &str) -> Vec<String> {
    let toks: Vec<_> = tokenize(text).into_iter().filter(|t| t.kind != TokenKind::Eof).collect();
    let Some(start) = toks
        .windows(2)
        .position(|w| w[0].kind == TokenKind::Ident && w[0].text == name && w[1].is("("))
    else {
        return Vec::new();
    };
    let mut args = Vec::new();
    let mut depth = 0usize;
    let mut cur_start: Option<usize> = None;
    for t in &toks[start + 1..] {
        match t.text {
            "(" | "[" | "{" => {
                depth += 1;
                if depth == 1 {
                    continue;
                }
            }
            ")" | "]" | "}" => {
                depth -= 1;
                if depth == 0 {
                    if let Some(s) = cur_start.take() {
                        args.push(text[s..t.start].trim().to_string());
                    }
                    break;
                }
            }
            "," if depth == 1 => {
                if let Some(s) = cur_start.take() {
                    args.push(text[s..t.start].trim().to_string());
                }
                continue;
            }
            _ => {}
        }
        if cur_start.is_none() {
            cur_start = Some(t.start);
        }
    }
    args
}

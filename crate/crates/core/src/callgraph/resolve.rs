//! Name-level call resolution over the canonical AST.
//!
//! Contract names resolve within the caller's file first, then codebase-wide.
//! Inherited members are searched in breadth-first order of the inherits
//! lists. Calls through interfaces (or bodiless declarations) fan out to every
//! implementing contract.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::frontend::lexer::{is_elementary_type, is_keyword, tokenize, TokenKind};
use crate::frontend::{AstNode, CanonicalAst, ContractDecl, ContractKind, FunctionId, FunctionRef, NodeKind, SourceFile};

/// Free functions and type-like callees that never produce edges.
const BUILTIN_CALLS: &[&str] = &[
    "require", "assert", "revert", "keccak256", "sha256", "ripemd160", "ecrecover", "addmod",
    "mulmod", "selfdestruct", "blockhash", "gasleft", "type", "payable", "address",
];

/// Members on builtin values (`addr.call`, `abi.encode`, `arr.push`, ...).
const BUILTIN_MEMBERS: &[&str] = &[
    "call", "delegatecall", "staticcall", "transfer", "send", "push", "pop", "encode",
    "encodePacked", "encodeWithSelector", "encodeWithSignature", "encodeCall", "decode", "concat",
    "selector", "length", "code", "codehash", "balance",
];

const BUILTIN_BASES: &[&str] = &["msg", "abi", "block", "tx", "string", "bytes"];

/// Outcome of resolving one call site.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Resolution {
    pub targets: Vec<FunctionId>,
    /// Callee text when the call could not be resolved and is not a builtin.
    pub dangling: Option<String>,
}

impl Resolution {
    fn builtin() -> Self {
        Resolution::default()
    }

    fn to(targets: Vec<FunctionId>) -> Self {
        Resolution {
            targets,
            dangling: None,
        }
    }

    fn dangling(text: &str) -> Self {
        Resolution {
            targets: Vec::new(),
            dangling: Some(text.to_string()),
        }
    }
}

pub struct Resolver<'a> {
    ast: &'a CanonicalAst,
    by_name: BTreeMap<&'a str, Vec<(&'a SourceFile, &'a ContractDecl)>>,
}

impl<'a> Resolver<'a> {
    pub fn new(ast: &'a CanonicalAst) -> Self {
        let mut by_name: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for (f, c) in ast.contracts() {
            by_name.entry(c.name.as_str()).or_default().push((f, c));
        }
        Resolver { ast, by_name }
    }

    pub fn ast(&self) -> &'a CanonicalAst {
        self.ast
    }

    /// Contract by name, preferring the given file.
    pub fn contract(&self, from_file: &str, name: &str) -> Option<(&'a SourceFile, &'a ContractDecl)> {
        let name = name.rsplit('.').next().unwrap_or(name);
        let candidates = self.by_name.get(name)?;
        candidates
            .iter()
            .find(|(f, _)| f.file_id == from_file)
            .or_else(|| candidates.first())
            .copied()
    }

    /// The contract followed by its ancestors, breadth-first in inherits order.
    pub fn lineage(&self, file: &'a SourceFile, contract: &'a ContractDecl) -> Vec<(&'a SourceFile, &'a ContractDecl)> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([(file, contract)]);
        while let Some((f, c)) = queue.pop_front() {
            if !seen.insert((f.file_id.as_str(), c.name.as_str())) {
                continue;
            }
            out.push((f, c));
            for parent in &c.inherits {
                if let Some(p) = self.contract(&f.file_id, parent) {
                    queue.push_back(p);
                }
            }
        }
        out
    }

    fn is_type_name(&self, from_file: &str, name: &str) -> bool {
        self.contract(from_file, name).is_some()
    }

    /// Non-interface contracts that inherit (transitively) from `target`.
    fn implementers(&self, target: &ContractDecl) -> Vec<(&'a SourceFile, &'a ContractDecl)> {
        self.ast
            .contracts()
            .filter(|(f, c)| {
                c.kind != ContractKind::Interface
                    && !std::ptr::eq(*c, target)
                    && self
                        .lineage(f, c)
                        .iter()
                        .skip(1)
                        .any(|(_, a)| std::ptr::eq(*a, target))
            })
            .collect()
    }

    /// First contract in the lineage declaring `name` with matching arity;
    /// all matching overloads in that contract.
    fn lookup_in_lineage(
        &self,
        file: &'a SourceFile,
        contract: &'a ContractDecl,
        name: &str,
        arity: Option<usize>,
        skip_self: bool,
    ) -> Vec<FunctionRef<'a>> {
        for (f, c) in self.lineage(file, contract).into_iter().skip(usize::from(skip_self)) {
            let found: Vec<FunctionRef<'a>> = c
                .functions
                .iter()
                .filter(|func| func.name == name && arity.map_or(true, |n| func.params.len() == n))
                .map(|function| FunctionRef {
                    file: f,
                    contract: c,
                    function,
                })
                .collect();
            if !found.is_empty() {
                return found;
            }
        }
        Vec::new()
    }

    /// Targets of `name(...)` called on a value of contract type `ty`.
    fn resolve_in_type(
        &self,
        file: &'a SourceFile,
        ty: &'a ContractDecl,
        name: &str,
        arity: Option<usize>,
    ) -> Vec<FunctionId> {
        let declared = self.lookup_in_lineage(file, ty, name, arity, false);
        let abstract_target =
            ty.kind == ContractKind::Interface || declared.iter().any(|f| f.function.body.is_none());
        if abstract_target {
            let mut out: Vec<FunctionId> = Vec::new();
            for (f, c) in self.implementers(ty) {
                for r in self.lookup_in_lineage(f, c, name, arity, false) {
                    if r.function.body.is_some() && !out.contains(&r.function.qualified_id) {
                        out.push(r.function.qualified_id.clone());
                    }
                }
            }
            if !out.is_empty() {
                return out;
            }
        }
        declared.into_iter().map(|f| f.function.qualified_id.clone()).collect()
    }

    /// Modifier definition invoked by name from `ctx`.
    pub fn modifier(&self, ctx: &FunctionRef<'a>, name: &str) -> Option<FunctionRef<'a>> {
        for (f, c) in self.lineage(ctx.file, ctx.contract) {
            if let Some(m) = c.modifier(name) {
                return Some(FunctionRef {
                    file: f,
                    contract: c,
                    function: m,
                });
            }
        }
        None
    }

    /// Modifiers actually invoked by a function, in invocation order.
    pub fn modifiers_of(&self, ctx: &FunctionRef<'a>) -> Vec<FunctionRef<'a>> {
        ctx.function
            .modifiers
            .iter()
            .filter_map(|m| self.modifier(ctx, &m.name))
            .collect()
    }

    /// Declared type of a variable visible in `ctx`.
    pub fn variable_type(&self, ctx: &FunctionRef<'a>, name: &str) -> Option<&'a str> {
        let f = ctx.function;
        if let Some(p) = f.params.iter().chain(&f.returns).find(|p| p.name == name) {
            return Some(&p.declared_type);
        }
        if let Some(body) = &f.body {
            if let Some(decl) = body
                .walk()
                .find(|n| n.kind == NodeKind::VarDeclStmt && n.attr("name") == Some(name))
            {
                return decl.attr("type");
            }
        }
        self.lineage(ctx.file, ctx.contract)
            .into_iter()
            .find_map(|(_, c)| c.state_var(name))
            .map(|v| v.declared_type.as_str())
    }

    /// Static type of an expression, when it names a contract-like type.
    fn expr_type(&self, ctx: &FunctionRef<'a>, expr: &'a AstNode) -> Option<String> {
        match expr.kind {
            NodeKind::Identifier => {
                let name = expr.attr("name")?;
                if let Some(t) = self.variable_type(ctx, name) {
                    Some(t.to_string())
                } else if self.is_type_name(&ctx.file.file_id, name) {
                    Some(name.to_string())
                } else {
                    None
                }
            }
            NodeKind::FunctionCall => {
                let callee = expr.children.first()?;
                match callee.kind {
                    NodeKind::Identifier => {
                        let name = callee.attr("name")?;
                        (self.is_type_name(&ctx.file.file_id, name)).then(|| name.to_string())
                    }
                    NodeKind::UnaryOp if callee.attr("operator") == Some("new") => {
                        callee.children.first()?.attr("name").map(str::to_string)
                    }
                    _ => None,
                }
            }
            NodeKind::BinaryOp if expr.attr("operator") == Some("[]") => {
                let base = self.expr_type(ctx, expr.children.first()?)?;
                element_type(&base)
            }
            _ => None,
        }
    }

    /// Resolve a FunctionCall node occurring in `ctx` (a function or modifier).
    pub fn resolve_call(&self, ctx: &FunctionRef<'a>, call: &'a AstNode) -> Resolution {
        debug_assert_eq!(call.kind, NodeKind::FunctionCall);
        let Some(callee) = call.children.first() else {
            return Resolution::builtin();
        };
        let arity = call.children.len() - 1;
        let text = call.attr("callee").unwrap_or("");
        match callee.kind {
            NodeKind::Identifier => {
                let name = callee.attr("name").unwrap_or("");
                self.resolve_identifier_call(ctx, name, Some(arity), text)
            }
            NodeKind::MemberAccess => {
                let member = callee.attr("member").unwrap_or("");
                let Some(base) = callee.children.first() else {
                    return Resolution::dangling(text);
                };
                self.resolve_member_call(ctx, base, member, arity, text)
            }
            // `new Foo(...)`, `(cond ? a : b)(...)` and the like
            _ => Resolution::builtin(),
        }
    }

    fn resolve_identifier_call(
        &self,
        ctx: &FunctionRef<'a>,
        name: &str,
        arity: Option<usize>,
        text: &str,
    ) -> Resolution {
        if BUILTIN_CALLS.contains(&name)
            || is_elementary_type(name)
            || self.is_type_name(&ctx.file.file_id, name)
        {
            return Resolution::builtin();
        }
        let found = self.lookup_in_lineage(ctx.file, ctx.contract, name, arity, false);
        if !found.is_empty() {
            return Resolution::to(found.into_iter().map(|f| f.function.qualified_id.clone()).collect());
        }
        let is_event = self
            .lineage(ctx.file, ctx.contract)
            .iter()
            .any(|(_, c)| c.events.iter().any(|e| e.name == name));
        // Capitalised callees are conversions to unknown types or struct constructors.
        if is_event || name.starts_with(|c: char| c.is_ascii_uppercase()) {
            return Resolution::builtin();
        }
        Resolution::dangling(text)
    }

    fn resolve_member_call(
        &self,
        ctx: &FunctionRef<'a>,
        base: &'a AstNode,
        member: &str,
        arity: usize,
        text: &str,
    ) -> Resolution {
        if base.kind == NodeKind::Identifier {
            match base.attr("name").unwrap_or("") {
                "super" => {
                    let found = self.lookup_in_lineage(ctx.file, ctx.contract, member, Some(arity), true);
                    return Resolution::to(found.into_iter().map(|f| f.function.qualified_id.clone()).collect());
                }
                "this" => {
                    return Resolution::to(self.resolve_in_type(ctx.file, ctx.contract, member, Some(arity)));
                }
                b if BUILTIN_BASES.contains(&b) => return Resolution::builtin(),
                _ => {}
            }
        }
        if let Some(ty) = self.expr_type(ctx, base) {
            if let Some((f, c)) = self.contract(&ctx.file.file_id, strip_location(&ty)) {
                let targets = self.resolve_in_type(f, c, member, Some(arity));
                return if targets.is_empty() {
                    Resolution::dangling(text)
                } else {
                    Resolution::to(targets)
                };
            }
        }
        // `using L for T`: the base becomes the first argument
        let mut via_library = Vec::new();
        for (f, c) in self.lineage(ctx.file, ctx.contract) {
            for lib in &c.using_for {
                if let Some((lf, lc)) = self.contract(&f.file_id, lib) {
                    for r in self.lookup_in_lineage(lf, lc, member, Some(arity + 1), false) {
                        if !via_library.contains(&r.function.qualified_id) {
                            via_library.push(r.function.qualified_id.clone());
                        }
                    }
                }
            }
        }
        if !via_library.is_empty() {
            return Resolution::to(via_library);
        }
        let converted_to_unknown = base.kind == NodeKind::FunctionCall
            && base.children.first().is_some_and(|c| {
                c.kind == NodeKind::Identifier
                    && c.attr("name").is_some_and(|n| !BUILTIN_CALLS.contains(&n) && !is_elementary_type(n))
            });
        if !converted_to_unknown && BUILTIN_MEMBERS.contains(&member) {
            return Resolution::builtin();
        }
        Resolution::dangling(text)
    }

    /// Calls recognisable inside Opaque text: `name(` and `Type.name(`.
    /// Only resolvable targets are returned; Opaque text never dangles.
    pub fn resolve_opaque(&self, ctx: &FunctionRef<'a>, text: &str) -> Vec<FunctionId> {
        let toks = tokenize(text);
        let mut out = Vec::new();
        for (i, t) in toks.iter().enumerate() {
            if t.kind != TokenKind::Ident || is_keyword(t.text) || !toks.get(i + 1).is_some_and(|n| n.is("(")) {
                continue;
            }
            let prev_dot = i > 0 && toks[i - 1].is(".");
            let targets = if prev_dot {
                let Some(base) = i.checked_sub(2).map(|j| toks[j]) else { continue };
                match self.contract(&ctx.file.file_id, base.text) {
                    Some((f, c)) if base.kind == TokenKind::Ident => self.resolve_in_type(f, c, t.text, None),
                    _ => continue,
                }
            } else {
                self.resolve_identifier_call(ctx, t.text, None, t.text).targets
            };
            for id in targets {
                if !out.contains(&id) {
                    out.push(id);
                }
            }
        }
        out
    }
}

fn strip_location(ty: &str) -> &str {
    ty.split_whitespace().next().unwrap_or(ty)
}

/// Value type of a mapping or element type of an array type.
fn element_type(ty: &str) -> Option<String> {
    if let Some(inner) = ty.strip_prefix("mapping(").and_then(|s| s.strip_suffix(')')) {
        // value type follows the top-level `=>`
        let mut depth = 0;
        let bytes = inner.as_bytes();
        for i in 0..bytes.len() {
            match bytes[i] {
                b'(' => depth += 1,
                b')' => depth -= 1,
                b'=' if depth == 0 && bytes.get(i + 1) == Some(&b'>') => {
                    return Some(inner[i + 2..].trim().to_string());
                }
                _ => {}
            }
        }
        return None;
    }
    if ty.ends_with(']') {
        let open = ty.rfind('[')?;
        return Some(ty[..open].to_string());
    }
    None
}

//! Scoped identifier keys.
//!
//! - locals, parameters and returns: `<function id>::<name>`
//! - state variables: `state:<file>::<Contract>::<name>` (declaring contract)
//! - builtin member paths: `global:msg.sender`
//! - member paths on a keyed root: `<root key>.<member>[.<member>...]`

use std::collections::BTreeSet;

use crate::callgraph::Resolver;
use crate::frontend::lexer::{is_elementary_type, is_keyword, tokenize, TokenKind};
use crate::frontend::{AstNode, FunctionRef, NodeKind};

/// Names that never denote a variable of the analysed code.
const BUILTIN_NAMES: &[&str] = &[
    "msg", "block", "tx", "abi", "this", "super", "now", "gasleft", "require", "assert", "revert",
    "keccak256", "sha256", "ripemd160", "ecrecover", "addmod", "mulmod", "type", "selfdestruct",
    "blockhash", "_", "address", "payable",
];

const GLOBAL_ROOTS: &[&str] = &["msg", "block", "tx"];

pub(crate) struct KeyCtx<'r, 'a> {
    pub resolver: &'r Resolver<'a>,
    pub f: FunctionRef<'a>,
    declared_locals: BTreeSet<&'a str>,
}

impl<'r, 'a> KeyCtx<'r, 'a> {
    pub fn new(resolver: &'r Resolver<'a>, f: FunctionRef<'a>) -> Self {
        let func = f.function;
        let mut declared_locals: BTreeSet<&str> = func
            .params
            .iter()
            .chain(&func.returns)
            .map(|p| p.name.as_str())
            .filter(|n| !n.is_empty())
            .collect();
        if let Some(body) = &func.body {
            for n in body.walk() {
                if n.kind == NodeKind::VarDeclStmt {
                    if let Some(name) = n.attr("name") {
                        declared_locals.insert(name);
                    }
                }
            }
        }
        KeyCtx {
            resolver,
            f,
            declared_locals,
        }
    }

    pub fn local_key(&self, name: &str) -> String {
        format!("{}::{name}", self.f.function.qualified_id)
    }

    /// Key of a bare identifier, or `None` for builtins and type names.
    ///
    /// Undeclared lower-case names are keyed as locals so that variables
    /// declared inside Opaque text (tuple declarations, assembly) line up with
    /// their structured uses.
    pub fn resolve_name(&self, name: &str) -> Option<String> {
        if self.declared_locals.contains(name) {
            return Some(self.local_key(name));
        }
        for (file, c) in self.resolver.lineage(self.f.file, self.f.contract) {
            if c.state_var(name).is_some() {
                return Some(format!("state:{}::{}::{name}", file.file_id, c.name));
            }
        }
        if BUILTIN_NAMES.contains(&name)
            || is_keyword(name)
            || is_elementary_type(name)
            || name.starts_with(|c: char| c.is_ascii_uppercase())
            || self.resolver.contract(&self.f.file.file_id, name).is_some()
        {
            return None;
        }
        Some(self.local_key(name))
    }

    /// Keys of every variable an expression or statement mentions.
    pub fn keys_of(&self, node: &AstNode, out: &mut BTreeSet<String>) {
        match node.kind {
            NodeKind::Identifier => {
                if let Some(k) = node.attr("name").and_then(|n| self.resolve_name(n)) {
                    out.insert(k);
                }
            }
            NodeKind::VarDeclStmt => {
                if let Some(name) = node.attr("name") {
                    out.insert(self.local_key(name));
                }
                node.children.iter().for_each(|c| self.keys_of(c, out));
            }
            NodeKind::MemberAccess => {
                if let Some(k) = self.path_key(node) {
                    out.insert(k);
                }
                if let Some(base) = node.children.first() {
                    self.keys_of(base, out);
                }
            }
            NodeKind::FunctionCall => {
                if let Some(callee) = node.children.first() {
                    match callee.kind {
                        NodeKind::Identifier => {}
                        NodeKind::UnaryOp if callee.attr("operator") == Some("new") => {}
                        NodeKind::MemberAccess => {
                            if let Some(base) = callee.children.first() {
                                self.keys_of(base, out);
                            }
                        }
                        _ => self.keys_of(callee, out),
                    }
                }
                node.children.iter().skip(1).for_each(|c| self.keys_of(c, out));
            }
            NodeKind::UnaryOp if node.attr("operator") == Some("new") => {}
            NodeKind::Opaque => self.keys_of_text(node.attr("text").unwrap_or(""), out),
            _ => node.children.iter().for_each(|c| self.keys_of(c, out)),
        }
    }

    /// `root.a.b` for a member chain rooted at a keyed identifier or a
    /// builtin global.
    fn path_key(&self, node: &AstNode) -> Option<String> {
        let mut members = Vec::new();
        let mut cur = node;
        while cur.kind == NodeKind::MemberAccess {
            members.push(cur.attr("member")?);
            cur = cur.children.first()?;
        }
        if cur.kind != NodeKind::Identifier {
            return None;
        }
        members.reverse();
        let root = cur.attr("name")?;
        let root_key = if GLOBAL_ROOTS.contains(&root) {
            format!("global:{root}")
        } else {
            self.resolve_name(root)?
        };
        Some(format!("{root_key}.{}", members.join(".")))
    }

    /// Keys of variables named in raw source text: identifiers that are not
    /// called, not member names and not type names.
    pub fn keys_of_text(&self, text: &str, out: &mut BTreeSet<String>) {
        let toks: Vec<_> = tokenize(text).into_iter().filter(|t| t.kind != TokenKind::Eof).collect();
        for (i, t) in toks.iter().enumerate() {
            if t.kind != TokenKind::Ident {
                continue;
            }
            let after_dot = i > 0 && toks[i - 1].is(".");
            let called = toks.get(i + 1).is_some_and(|n| n.is("("));
            if after_dot {
                // member of a global root, e.g. msg.sender
                if i >= 2 && toks[i - 2].kind == TokenKind::Ident && GLOBAL_ROOTS.contains(&toks[i - 2].text) {
                    out.insert(format!("global:{}.{}", toks[i - 2].text, t.text));
                }
                continue;
            }
            if called {
                continue;
            }
            if let Some(k) = self.resolve_name(t.text) {
                out.insert(k);
            }
        }
    }

    /// Keys the result of a call is written to, for the statement holding it.
    pub fn assignment_targets(&self, stmt: &AstNode, out: &mut BTreeSet<String>) {
        match stmt.kind {
            NodeKind::VarDeclStmt => {
                if let Some(name) = stmt.attr("name") {
                    out.insert(self.local_key(name));
                }
            }
            NodeKind::ExprStmt => {
                if let Some(a) = stmt.children.first().filter(|a| a.kind == NodeKind::Assignment) {
                    if let Some(lhs) = a.children.first() {
                        self.keys_of(lhs, out);
                    }
                }
            }
            NodeKind::Return => {
                for r in &self.f.function.returns {
                    if !r.name.is_empty() {
                        out.insert(self.local_key(&r.name));
                    }
                }
            }
            NodeKind::Opaque => self.keys_of(stmt, out),
            _ => {}
        }
    }
}

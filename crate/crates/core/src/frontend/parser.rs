//! Tolerant recursive-descent parser for the supported Solidity subset.
//!
//! Anything outside the subset degrades to an `Opaque` node carrying the raw
//! token text (statements) or is skipped with a file-level diagnostic
//! (contract members and top-level items). Parsing never fails on valid UTF-8.

use std::collections::BTreeMap;

use super::ast::*;
use super::lexer::{is_elementary_type, tokenize, Token, TokenKind};
use super::render::render_expr;
use super::FrontendError;

/// Parse raw bytes; the only hard failure is invalid UTF-8.
pub fn parse_bytes(bytes: &[u8], file_id: &str) -> Result<SourceFile, FrontendError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FrontendError::Lex {
        file_id: file_id.to_string(),
        reason: e.to_string(),
    })?;
    parse_source(text, file_id)
}

pub fn parse_source(text: &str, file_id: &str) -> Result<SourceFile, FrontendError> {
    if file_id.is_empty() {
        return Err(FrontendError::EmptyFileId);
    }
    let mut p = Parser {
        src: text,
        toks: tokenize(text),
        pos: 0,
        diags: Vec::new(),
    };
    let contracts = p.source_unit();
    let mut file = SourceFile {
        file_id: file_id.to_string(),
        node_id: NodeId(String::new()),
        contracts,
        diagnostics: p.diags,
    };
    finish_file(&mut file);
    Ok(file)
}

/// Assigns qualified ids, emitted events and preorder node ids.
pub(crate) fn finish_file(file: &mut SourceFile) {
    qualify(file);
    assign_ids(file);
}

/// Derived declaration fields: qualified ids, emitted events, owners.
pub(crate) fn qualify(file: &mut SourceFile) {
    let file_id = file.file_id.clone();
    for contract in &mut file.contracts {
        let cname = contract.name.clone();
        let names: Vec<String> = contract.functions.iter().map(|f| f.name.clone()).collect();
        for f in &mut contract.functions {
            let overloaded = names.iter().filter(|n| **n == f.name).count() > 1;
            f.qualified_id = if overloaded {
                FunctionId(format!(
                    "{file_id}::{cname}::{}({})",
                    f.name,
                    f.param_types().join(",")
                ))
            } else {
                FunctionId(format!("{file_id}::{cname}::{}", f.name))
            };
            f.emitted_events = emitted_events(f.body.as_ref());
        }
        for m in &mut contract.modifiers {
            m.qualified_id = FunctionId(format!("{file_id}::{cname}::{}", m.name));
            m.emitted_events = emitted_events(m.body.as_ref());
        }
        for v in &mut contract.state_vars {
            v.qualified_id = format!("{file_id}::{cname}::{}", v.name);
            v.owning_contract = cname.clone();
        }
    }
}

/// Preorder numbering in schema serialization order.
pub(crate) fn assign_ids(file: &mut SourceFile) {
    let mut counter = IdCounter {
        file_id: file.file_id.clone(),
        next: 0,
    };
    file.node_id = counter.next();
    for contract in &mut file.contracts {
        contract.node_id = counter.next();
        for v in &mut contract.state_vars {
            v.node_id = counter.next();
            if let Some(init) = &mut v.initializer {
                counter.tree(init);
            }
        }
        for e in &mut contract.events {
            e.node_id = counter.next();
            e.param_list_id = counter.next();
            for p in &mut e.params {
                p.node_id = counter.next();
            }
        }
        for f in contract.modifiers.iter_mut().chain(contract.functions.iter_mut()) {
            f.node_id = counter.next();
            f.param_list_ids.0 = counter.next();
            for p in &mut f.params {
                p.node_id = counter.next();
            }
            f.param_list_ids.1 = counter.next();
            for p in &mut f.returns {
                p.node_id = counter.next();
            }
            for m in &mut f.modifiers {
                for a in m.args.iter_mut().flatten() {
                    counter.tree(a);
                }
            }
            if let Some(body) = &mut f.body {
                counter.tree(body);
            }
        }
    }
}

struct IdCounter {
    file_id: String,
    next: u32,
}

impl IdCounter {
    fn next(&mut self) -> NodeId {
        let id = NodeId::new(&self.file_id, self.next);
        self.next += 1;
        id
    }

    fn tree(&mut self, node: &mut AstNode) {
        node.id = self.next();
        for c in &mut node.children {
            self.tree(c);
        }
    }
}

/// Parse failure at the current construct; callers rewind and recover.
#[derive(Debug)]
struct Fail;

type PResult<T> = Result<T, Fail>;

struct Parser<'s> {
    src: &'s str,
    toks: Vec<Token<'s>>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

pub(crate) fn node(kind: NodeKind, attrs: &[(&str, String)], children: Vec<AstNode>) -> AstNode {
    AstNode {
        id: NodeId(String::new()),
        kind,
        attrs: attrs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect::<BTreeMap<_, _>>(),
        children,
    }
}

// Binding powers; larger binds tighter.
const BP_ASSIGN: u8 = 1;
const BP_TERNARY: u8 = 2;
const BP_PREFIX: u8 = 14;

pub(crate) fn infix_bp(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 3,
        "&&" => 4,
        "==" | "!=" => 5,
        "<" | ">" | "<=" | ">=" => 6,
        "|" => 7,
        "^" => 8,
        "&" => 9,
        "<<" | ">>" | ">>>" => 10,
        "+" | "-" => 11,
        "*" | "/" | "%" => 12,
        "**" => 13,
        _ => return None,
    })
}

pub(crate) fn is_assign_op(op: &str) -> bool {
    matches!(
        op,
        "=" | "+=" | "-=" | "*=" | "/=" | "%=" | "|=" | "&=" | "^=" | "<<=" | ">>=" | ">>>="
    )
}

const SUBDENOMINATIONS: &[&str] = &[
    "wei", "gwei", "ether", "seconds", "minutes", "hours", "days", "weeks",
];

impl<'s> Parser<'s> {
    fn peek(&self) -> Token<'s> {
        self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> Token<'s> {
        self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is(text)
    }

    fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    fn bump(&mut self) -> Token<'s> {
        let t = self.peek();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<()> {
        if self.eat(text) {
            Ok(())
        } else {
            Err(Fail)
        }
    }

    fn ident(&mut self) -> PResult<&'s str> {
        let t = self.peek();
        if t.kind == TokenKind::Ident {
            self.bump();
            Ok(t.text)
        } else {
            Err(Fail)
        }
    }

    fn diag(&mut self, start_tok: usize, message: &str) {
        let start = self.toks[start_tok].start;
        let end = self.toks[self.pos.saturating_sub(1).max(start_tok)].end;
        self.diags.push(Diagnostic {
            start,
            end,
            message: message.to_string(),
        });
    }

    /// Token text from `from` up to the current position, keeping a single
    /// space wherever the source had whitespace or comments.
    fn text_since(&self, from: usize) -> String {
        let mut out = String::new();
        for i in from..self.pos {
            let t = self.toks[i];
            if i > from && self.toks[i - 1].end < t.start {
                out.push(' ');
            }
            out.push_str(t.text);
        }
        out
    }

    /// Skip one item: up to and including `;` at depth zero, or through a
    /// balanced `{...}` group. Stops before an unmatched `}`.
    fn skip_item(&mut self) {
        let mut depth = 0i32;
        let start = self.pos;
        while !self.at_eof() {
            let t = self.peek();
            if t.is("}") && depth == 0 {
                if self.pos == start {
                    self.bump();
                }
                return;
            }
            self.bump();
            match t.text {
                "(" | "[" | "{" if t.kind == TokenKind::Punct => depth += 1,
                ")" | "]" if t.kind == TokenKind::Punct => depth -= 1,
                "}" if t.kind == TokenKind::Punct => {
                    depth -= 1;
                    if depth <= 0 && !self.continues_compound() {
                        return;
                    }
                }
                ";" if depth <= 0 && t.kind == TokenKind::Punct => return,
                _ => {}
            }
        }
    }

    fn continues_compound(&self) -> bool {
        ["catch", "else", "while", "returns"]
            .iter()
            .any(|k| self.at(k))
    }

    // ---- top level -------------------------------------------------------

    fn source_unit(&mut self) -> Vec<ContractDecl> {
        let mut contracts = Vec::new();
        while !self.at_eof() {
            let start = self.pos;
            let t = self.peek();
            let kind = match t.text {
                "contract" => Some(ContractKind::Contract),
                "interface" => Some(ContractKind::Interface),
                "library" => Some(ContractKind::Library),
                "abstract" if self.peek_at(1).is("contract") => Some(ContractKind::Abstract),
                _ => None,
            };
            if let Some(kind) = kind {
                match self.contract(kind) {
                    Ok(c) => {
                        if contracts.iter().any(|o: &ContractDecl| o.name == c.name) {
                            self.diag(start, "duplicate contract name in file; skipped");
                        } else {
                            contracts.push(c);
                        }
                    }
                    Err(Fail) => {
                        self.pos = start;
                        self.skip_item();
                        self.diag(start, "unparseable contract declaration skipped");
                    }
                }
                continue;
            }
            match t.text {
                "pragma" | "import" | "using" | "error" | "event" | "type" | "struct" | "enum" => {
                    self.skip_item()
                }
                _ => {
                    self.skip_item();
                    self.diag(start, "unsupported top-level item skipped");
                }
            }
        }
        contracts
    }

    fn contract(&mut self, kind: ContractKind) -> PResult<ContractDecl> {
        if kind == ContractKind::Abstract {
            self.bump();
        }
        self.bump();
        let name = self.ident()?.to_string();
        let mut inherits = Vec::new();
        if self.eat("is") {
            loop {
                let mut path = self.ident()?.to_string();
                while self.eat(".") {
                    path.push('.');
                    path.push_str(self.ident()?);
                }
                if self.at("(") {
                    self.skip_balanced()?;
                }
                inherits.push(path);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect("{")?;
        let mut contract = ContractDecl {
            node_id: NodeId(String::new()),
            name,
            kind,
            inherits,
            using_for: Vec::new(),
            state_vars: Vec::new(),
            functions: Vec::new(),
            modifiers: Vec::new(),
            events: Vec::new(),
        };
        loop {
            if self.eat("}") {
                break;
            }
            if self.at_eof() {
                self.diag(self.pos.saturating_sub(1), "unterminated contract body");
                break;
            }
            let start = self.pos;
            if self.member(&mut contract).is_err() {
                self.pos = start;
                self.skip_item();
                self.diag(start, "unparseable contract member skipped");
            }
        }
        Ok(contract)
    }

    fn skip_balanced(&mut self) -> PResult<()> {
        let open = self.bump();
        let close = match open.text {
            "(" => ")",
            "[" => "]",
            "{" => "}",
            _ => return Err(Fail),
        };
        let mut depth = 1;
        while depth > 0 {
            if self.at_eof() {
                return Err(Fail);
            }
            let t = self.bump();
            if t.kind == TokenKind::Punct {
                if t.text == open.text {
                    depth += 1;
                } else if t.text == close {
                    depth -= 1;
                }
            }
        }
        Ok(())
    }

    fn member(&mut self, contract: &mut ContractDecl) -> PResult<()> {
        let t = self.peek();
        match t.text {
            "function" | "constructor" | "fallback" | "receive" if t.kind == TokenKind::Ident => {
                let f = self.function(contract.kind)?;
                contract.functions.push(f);
            }
            "modifier" => {
                let m = self.modifier_def()?;
                contract.modifiers.push(m);
            }
            "event" => {
                let e = self.event()?;
                contract.events.push(e);
            }
            "using" => {
                self.bump();
                let mut path = self.ident()?.to_string();
                while self.eat(".") {
                    path.push('.');
                    path.push_str(self.ident()?);
                }
                self.skip_item();
                if !contract.using_for.contains(&path) {
                    contract.using_for.push(path);
                }
            }
            "struct" | "enum" | "error" | "type" => self.skip_item(),
            _ => {
                let v = self.state_var()?;
                contract.state_vars.push(v);
            }
        }
        Ok(())
    }

    // ---- declarations ----------------------------------------------------

    fn type_name(&mut self) -> PResult<String> {
        let start = self.pos;
        let t = self.peek();
        if t.is("mapping") {
            self.bump();
            self.expect("(")?;
            self.type_name()?;
            if self.peek().kind == TokenKind::Ident && !self.at("=>") {
                self.bump();
            }
            self.expect("=>")?;
            self.type_name()?;
            if self.peek().kind == TokenKind::Ident {
                self.bump();
            }
            self.expect(")")?;
        } else if t.is("function") {
            return Err(Fail);
        } else if t.kind == TokenKind::Ident {
            self.bump();
            if t.text == "address" && self.at("payable") {
                self.bump();
            }
            if !is_elementary_type(t.text) {
                while self.at(".") && self.peek_at(1).kind == TokenKind::Ident {
                    self.bump();
                    self.bump();
                }
            }
        } else {
            return Err(Fail);
        }
        while self.at("[") {
            self.skip_balanced()?;
        }
        Ok(self.type_text(start))
    }

    /// Canonical type spelling: words separated by one space, `=>` spaced,
    /// everything else tight.
    fn type_text(&self, from: usize) -> String {
        let mut out = String::new();
        let mut prev: Option<Token<'_>> = None;
        for i in from..self.pos {
            let t = self.toks[i];
            if let Some(p) = prev {
                let wordy = |x: &Token<'_>| matches!(x.kind, TokenKind::Ident | TokenKind::Number);
                if (wordy(&p) && wordy(&t)) || t.is("=>") || p.is("=>") {
                    out.push(' ');
                }
            }
            out.push_str(t.text);
            prev = Some(t);
        }
        out
    }

    fn param_list(&mut self, allow_indexed: bool) -> PResult<Vec<Param>> {
        self.expect("(")?;
        let mut params = Vec::new();
        if self.eat(")") {
            return Ok(params);
        }
        loop {
            let declared_type = self.type_name()?;
            let mut location = None;
            loop {
                let t = self.peek();
                if matches!(t.text, "memory" | "storage" | "calldata") {
                    location = Some(t.text.to_string());
                    self.bump();
                } else if allow_indexed && t.is("indexed") {
                    self.bump();
                } else {
                    break;
                }
            }
            let name = if self.peek().kind == TokenKind::Ident {
                self.bump().text.to_string()
            } else {
                String::new()
            };
            params.push(Param {
                node_id: NodeId(String::new()),
                name,
                declared_type,
                location,
            });
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        Ok(params)
    }

    fn event(&mut self) -> PResult<EventDecl> {
        self.bump();
        let name = self.ident()?.to_string();
        let params = self.param_list(true)?;
        let anonymous = self.eat("anonymous");
        self.expect(";")?;
        Ok(EventDecl {
            node_id: NodeId(String::new()),
            name,
            params,
            anonymous,
            param_list_id: NodeId(String::new()),
        })
    }

    fn state_var(&mut self) -> PResult<StateVarDecl> {
        let declared_type = self.type_name()?;
        let mut specifiers = Vec::new();
        loop {
            let t = self.peek();
            match t.text {
                "public" | "private" | "internal" | "constant" | "immutable" | "transient" => {
                    specifiers.push(t.text.to_string());
                    self.bump();
                }
                "override" => {
                    specifiers.push("override".to_string());
                    self.bump();
                    if self.at("(") {
                        self.skip_balanced()?;
                    }
                }
                _ => break,
            }
        }
        let name = self.ident()?.to_string();
        let (initializer_text, initializer) = if self.eat("=") {
            let from = self.pos;
            let e = self.expr(0)?;
            let text = &self.src[self.toks[from].start..self.toks[self.pos - 1].end];
            (Some(text.to_string()), Some(e))
        } else {
            (None, None)
        };
        self.expect(";")?;
        Ok(StateVarDecl {
            node_id: NodeId(String::new()),
            qualified_id: String::new(),
            name,
            declared_type,
            specifiers,
            initializer_text,
            initializer,
            owning_contract: String::new(),
        })
    }

    fn function(&mut self, ckind: ContractKind) -> PResult<FunctionDecl> {
        let head = self.bump();
        let (kind, name) = match head.text {
            "constructor" => (FunctionKind::Constructor, "constructor".to_string()),
            "fallback" => (FunctionKind::Fallback, "fallback".to_string()),
            "receive" => (FunctionKind::Receive, "receive".to_string()),
            _ => {
                let t = self.peek();
                if t.is("(") {
                    (FunctionKind::Fallback, "fallback".to_string())
                } else {
                    let n = self.ident()?.to_string();
                    let k = match n.as_str() {
                        "receive" => FunctionKind::Receive,
                        "fallback" => FunctionKind::Fallback,
                        _ => FunctionKind::Function,
                    };
                    (k, n)
                }
            }
        };
        let params = self.param_list(false)?;
        let mut visibility = None;
        let mut mutability = None;
        let mut is_virtual = false;
        let mut overrides = false;
        let mut returns = Vec::new();
        let mut modifiers = Vec::new();
        loop {
            let t = self.peek();
            if t.is("{") || t.is(";") {
                break;
            }
            match t.text {
                "public" | "external" | "internal" | "private" => {
                    visibility = Visibility::parse(t.text);
                    self.bump();
                }
                "pure" | "view" | "payable" | "constant" => {
                    mutability = Some(t.text.to_string());
                    self.bump();
                }
                "virtual" => {
                    is_virtual = true;
                    self.bump();
                }
                "override" => {
                    overrides = true;
                    self.bump();
                    if self.at("(") {
                        self.skip_balanced()?;
                    }
                }
                "returns" => {
                    self.bump();
                    returns = self.param_list(false)?;
                }
                _ if t.kind == TokenKind::Ident => {
                    modifiers.push(self.modifier_invocation()?);
                }
                _ => return Err(Fail),
            }
        }
        let visibility = visibility.unwrap_or(match kind {
            FunctionKind::Constructor | FunctionKind::Modifier => Visibility::Internal,
            FunctionKind::Fallback | FunctionKind::Receive => Visibility::External,
            FunctionKind::Function if ckind == ContractKind::Interface => Visibility::External,
            FunctionKind::Function => Visibility::Public,
        });
        let body = if self.eat(";") {
            None
        } else {
            Some(self.block()?)
        };
        Ok(FunctionDecl {
            node_id: NodeId(String::new()),
            qualified_id: FunctionId(String::new()),
            name,
            kind,
            params,
            returns,
            visibility,
            mutability,
            is_virtual,
            overrides,
            modifiers,
            body,
            emitted_events: Vec::new(),
            param_list_ids: (NodeId(String::new()), NodeId(String::new())),
        })
    }

    fn modifier_invocation(&mut self) -> PResult<ModifierInvocation> {
        let mut name = self.ident()?.to_string();
        while self.eat(".") {
            name.push('.');
            name.push_str(self.ident()?);
        }
        let args = if self.at("(") {
            Some(self.call_args()?)
        } else {
            None
        };
        Ok(ModifierInvocation { name, args })
    }

    fn modifier_def(&mut self) -> PResult<FunctionDecl> {
        self.bump();
        let name = self.ident()?.to_string();
        let params = if self.at("(") {
            self.param_list(false)?
        } else {
            Vec::new()
        };
        let mut is_virtual = false;
        let mut overrides = false;
        loop {
            if self.eat("virtual") {
                is_virtual = true;
            } else if self.eat("override") {
                overrides = true;
                if self.at("(") {
                    self.skip_balanced()?;
                }
            } else {
                break;
            }
        }
        let body = if self.eat(";") {
            None
        } else {
            Some(self.block()?)
        };
        Ok(FunctionDecl {
            node_id: NodeId(String::new()),
            qualified_id: FunctionId(String::new()),
            name,
            kind: FunctionKind::Modifier,
            params,
            returns: Vec::new(),
            visibility: Visibility::Internal,
            mutability: None,
            is_virtual,
            overrides,
            modifiers: Vec::new(),
            body,
            emitted_events: Vec::new(),
            param_list_ids: (NodeId(String::new()), NodeId(String::new())),
        })
    }

    // ---- statements ------------------------------------------------------

    fn block(&mut self) -> PResult<AstNode> {
        self.expect("{")?;
        let mut stmts = Vec::new();
        loop {
            if self.eat("}") {
                break;
            }
            if self.at_eof() {
                self.diag(self.pos.saturating_sub(1), "unterminated block");
                break;
            }
            stmts.push(self.statement());
        }
        Ok(node(NodeKind::Block, &[], stmts))
    }

    /// A statement, degrading to Opaque on failure.
    fn statement(&mut self) -> AstNode {
        let start = self.pos;
        match self.try_statement() {
            Ok(n) => n,
            Err(Fail) => {
                self.pos = start;
                self.skip_item();
                node(NodeKind::Opaque, &[("text", self.text_since(start))], vec![])
            }
        }
    }

    fn try_statement(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        if t.kind == TokenKind::Punct {
            if t.text == "{" {
                return self.block();
            }
        } else if t.kind == TokenKind::Ident {
            match t.text {
                "if" => return self.if_stmt(),
                "for" => return self.for_stmt(),
                "while" => return self.while_stmt(),
                "return" => {
                    self.bump();
                    let children = if self.at(";") {
                        vec![]
                    } else {
                        vec![self.expr(0)?]
                    };
                    self.expect(";")?;
                    return Ok(node(NodeKind::Return, &[], children));
                }
                "emit" => return self.emit_stmt(),
                "unchecked" if self.peek_at(1).is("{") => {
                    self.bump();
                    let mut b = self.block()?;
                    b.attrs.insert("unchecked".into(), "true".into());
                    return Ok(b);
                }
                "revert" if self.peek_at(1).kind == TokenKind::Ident => {
                    self.bump();
                    let callee = node(NodeKind::Identifier, &[("name", "revert".into())], vec![]);
                    let err = self.expr(0)?;
                    self.expect(";")?;
                    let call = node(
                        NodeKind::FunctionCall,
                        &[("callee", "revert".into())],
                        vec![callee, err],
                    );
                    return Ok(node(NodeKind::ExprStmt, &[], vec![call]));
                }
                "do" | "assembly" | "try" | "break" | "continue" => return Err(Fail),
                _ => {}
            }
        }
        self.simple_statement()
    }

    /// Variable declaration or expression statement, including the `;`.
    fn simple_statement(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        if let Some(decl) = self.try_var_decl()? {
            return Ok(decl);
        }
        self.pos = start;
        let e = self.expr(0)?;
        self.expect(";")?;
        Ok(node(NodeKind::ExprStmt, &[], vec![e]))
    }

    fn try_var_decl(&mut self) -> PResult<Option<AstNode>> {
        let Ok(ty) = self.type_name() else {
            return Ok(None);
        };
        let mut location = None;
        let t = self.peek();
        if matches!(t.text, "memory" | "storage" | "calldata") && t.kind == TokenKind::Ident {
            location = Some(t.text.to_string());
            self.bump();
        }
        let t = self.peek();
        let next = self.peek_at(1);
        if t.kind != TokenKind::Ident || !(next.is("=") || next.is(";")) {
            return Ok(None);
        }
        self.bump();
        let mut attrs = vec![("name", t.text.to_string()), ("type", ty)];
        if let Some(loc) = location {
            attrs.push(("location", loc));
        }
        let children = if self.eat("=") {
            vec![self.expr(0)?]
        } else {
            vec![]
        };
        self.expect(";")?;
        Ok(Some(node(NodeKind::VarDeclStmt, &attrs, children)))
    }

    fn paren_condition(&mut self) -> PResult<AstNode> {
        self.expect("(")?;
        let c = self.expr(0)?;
        self.expect(")")?;
        Ok(c)
    }

    fn if_stmt(&mut self) -> PResult<AstNode> {
        self.bump();
        let cond = self.paren_condition()?;
        let then = self.statement();
        let mut attrs = vec![("condition", "0".to_string()), ("body", "1".to_string())];
        let mut children = vec![cond, then];
        if self.eat("else") {
            children.push(self.statement());
            attrs.push(("else", "2".to_string()));
        }
        Ok(node(NodeKind::If, &attrs, children))
    }

    fn while_stmt(&mut self) -> PResult<AstNode> {
        self.bump();
        let cond = self.paren_condition()?;
        let body = self.statement();
        Ok(node(
            NodeKind::While,
            &[("condition", "0".into()), ("body", "1".into())],
            vec![cond, body],
        ))
    }

    fn for_stmt(&mut self) -> PResult<AstNode> {
        self.bump();
        self.expect("(")?;
        let mut children = Vec::new();
        let mut attrs = Vec::new();
        if !self.eat(";") {
            let init = self.simple_statement()?;
            attrs.push(("init", children.len().to_string()));
            children.push(init);
        }
        let cond = if self.at(";") {
            node(NodeKind::Literal, &[("value", "true".into())], vec![])
        } else {
            self.expr(0)?
        };
        self.expect(";")?;
        attrs.push(("condition", children.len().to_string()));
        children.push(cond);
        if !self.at(")") {
            let update = self.expr(0)?;
            attrs.push(("update", children.len().to_string()));
            children.push(update);
        }
        self.expect(")")?;
        let body = self.statement();
        attrs.push(("body", children.len().to_string()));
        children.push(body);
        Ok(node(NodeKind::For, &attrs, children))
    }

    fn emit_stmt(&mut self) -> PResult<AstNode> {
        self.bump();
        let mut path = vec![self.ident()?.to_string()];
        while self.eat(".") {
            path.push(self.ident()?.to_string());
        }
        let args = self.call_args()?;
        self.expect(";")?;
        let event = path.pop().unwrap_or_default();
        let mut attrs = vec![("event", event)];
        if !path.is_empty() {
            attrs.push(("qualifier", path.join(".")));
        }
        Ok(node(NodeKind::EmitStatement, &attrs, args))
    }

    // ---- expressions -----------------------------------------------------

    fn call_args(&mut self) -> PResult<Vec<AstNode>> {
        self.expect("(")?;
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(args);
        }
        if self.at("{") {
            // named arguments
            return Err(Fail);
        }
        loop {
            args.push(self.expr(0)?);
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        Ok(args)
    }

    fn expr(&mut self, min_bp: u8) -> PResult<AstNode> {
        let start = self.pos;
        let mut lhs = self.prefix()?;
        loop {
            let t = self.peek();
            if t.kind != TokenKind::Punct {
                break;
            }
            if is_assign_op(t.text) {
                if BP_ASSIGN < min_bp {
                    break;
                }
                self.bump();
                let rhs = self.expr(BP_ASSIGN)?;
                lhs = node(
                    NodeKind::Assignment,
                    &[("operator", t.text.to_string())],
                    vec![lhs, rhs],
                );
                continue;
            }
            if t.text == "?" {
                if BP_TERNARY < min_bp {
                    break;
                }
                self.bump();
                self.expr(0)?;
                self.expect(":")?;
                self.expr(BP_TERNARY)?;
                lhs = node(NodeKind::Opaque, &[("text", self.text_since(start))], vec![]);
                continue;
            }
            let Some(bp) = infix_bp(t.text) else { break };
            if bp < min_bp {
                break;
            }
            self.bump();
            // `**` is right-associative
            let next_min = if t.text == "**" { bp } else { bp + 1 };
            let rhs = self.expr(next_min)?;
            lhs = node(
                NodeKind::BinaryOp,
                &[("operator", t.text.to_string())],
                vec![lhs, rhs],
            );
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        let is_prefix_op = (t.kind == TokenKind::Punct
            && matches!(t.text, "!" | "~" | "-" | "++" | "--"))
            || (t.kind == TokenKind::Ident && t.text == "delete");
        if is_prefix_op {
            self.bump();
            let operand = self.expr(BP_PREFIX)?;
            return Ok(node(
                NodeKind::UnaryOp,
                &[("operator", t.text.to_string()), ("prefix", "true".into())],
                vec![operand],
            ));
        }
        if t.is("new") {
            self.bump();
            let ty = self.type_name()?;
            let target = node(NodeKind::Identifier, &[("name", ty)], vec![]);
            let n = node(
                NodeKind::UnaryOp,
                &[("operator", "new".into()), ("prefix", "true".into())],
                vec![target],
            );
            return self.postfix(n);
        }
        let primary = self.primary()?;
        self.postfix(primary)
    }

    fn primary(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        match t.kind {
            TokenKind::Number => {
                self.bump();
                let mut value = t.text.to_string();
                let unit = self.peek();
                if unit.kind == TokenKind::Ident && SUBDENOMINATIONS.contains(&unit.text) {
                    self.bump();
                    value.push(' ');
                    value.push_str(unit.text);
                }
                Ok(node(NodeKind::Literal, &[("value", value)], vec![]))
            }
            TokenKind::Str | TokenKind::PrefixedStr => {
                self.bump();
                Ok(node(NodeKind::Literal, &[("value", t.text.to_string())], vec![]))
            }
            TokenKind::Ident => match t.text {
                "true" | "false" => {
                    self.bump();
                    Ok(node(NodeKind::Literal, &[("value", t.text.to_string())], vec![]))
                }
                // statement keywords cannot start an expression
                "if" | "for" | "while" | "return" | "emit" | "function" | "mapping"
                | "assembly" | "try" | "do" | "break" | "continue" | "else" => Err(Fail),
                _ => {
                    self.bump();
                    if is_elementary_type(t.text) && self.at("[") && self.peek_at(1).is("]") {
                        return Err(Fail);
                    }
                    Ok(node(NodeKind::Identifier, &[("name", t.text.to_string())], vec![]))
                }
            },
            TokenKind::Punct if t.text == "(" => {
                self.bump();
                let inner = self.expr(0)?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(Fail),
        }
    }

    fn postfix(&mut self, mut base: AstNode) -> PResult<AstNode> {
        loop {
            let t = self.peek();
            if t.kind != TokenKind::Punct {
                break;
            }
            match t.text {
                "." => {
                    self.bump();
                    let member = self.ident()?.to_string();
                    base = node(NodeKind::MemberAccess, &[("member", member)], vec![base]);
                }
                "[" => {
                    self.bump();
                    if self.at("]") || self.at(":") {
                        return Err(Fail);
                    }
                    let index = self.expr(0)?;
                    self.expect("]")?;
                    base = node(
                        NodeKind::BinaryOp,
                        &[("operator", "[]".into())],
                        vec![base, index],
                    );
                }
                "(" => {
                    let args = self.call_args()?;
                    let callee = render_expr(&base);
                    let mut children = Vec::with_capacity(args.len() + 1);
                    children.push(base);
                    children.extend(args);
                    base = node(NodeKind::FunctionCall, &[("callee", callee)], children);
                }
                "{" if self.peek_at(1).kind == TokenKind::Ident && self.peek_at(2).is(":") => {
                    // call options `{value: ...}`
                    return Err(Fail);
                }
                "++" | "--" => {
                    self.bump();
                    base = node(
                        NodeKind::UnaryOp,
                        &[("operator", t.text.to_string()), ("prefix", "false".into())],
                        vec![base],
                    );
                }
                _ => break,
            }
        }
        Ok(base)
    }
}

/// Parse a standalone statement list (used by tests and reformat checks).
pub fn parse_statements(text: &str, file_id: &str) -> Vec<AstNode> {
    let mut p = Parser {
        src: text,
        toks: tokenize(text),
        pos: 0,
        diags: Vec::new(),
    };
    let mut out = Vec::new();
    while !p.at_eof() {
        if p.at("}") {
            p.bump();
            continue;
        }
        out.push(p.statement());
    }
    let mut counter = IdCounter {
        file_id: file_id.to_string(),
        next: 0,
    };
    for n in &mut out {
        counter.tree(n);
    }
    out
}

/// Parse a single expression; `None` if the text is not one expression.
pub fn parse_expression(text: &str) -> Option<AstNode> {
    let mut p = Parser {
        src: text,
        toks: tokenize(text),
        pos: 0,
        diags: Vec::new(),
    };
    let e = p.expr(0).ok()?;
    p.at_eof().then_some(e)
}

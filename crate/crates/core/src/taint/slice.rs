//! Context-aware slicing over a taint set, and reformatting of slices into code.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{TaintError, TaintModel, TaintSet};
use crate::frontend::render::{render_contract_open, render_expr, render_function_header, render_header, render_stmt};
use crate::frontend::{AstNode, CanonicalAst, FunctionDecl, FunctionId, NodeId, NodeKind};

const INDENT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Condition,
    Statement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceItem {
    /// Index into [`Slice::functions`].
    pub function: usize,
    pub kind: ItemKind,
    pub code: String,
    /// Enclosing control headers, outermost first.
    pub context: Vec<String>,
    pub node_id: NodeId,
}

/// Function a group of items belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceFunction {
    pub id: FunctionId,
    pub contract_open: String,
    pub header: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub functions: Vec<SliceFunction>,
    pub items: Vec<SliceItem>,
    pub covered_node_ids: BTreeSet<NodeId>,
    /// ceil(chars / 4) of the reformatted text.
    pub token_estimate: usize,
}

impl Slice {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub fn token_estimate(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Source text of a statement or expression node.
pub fn reconstruct(node: &AstNode) -> String {
    if node.kind.is_statement() {
        render_stmt(node, 0)
    } else {
        render_expr(node)
    }
}

/// Source text of a whole function definition (header and body).
pub fn reconstruct_function(f: &FunctionDecl) -> String {
    crate::frontend::render::render_function(f, 0)
}

pub fn slice(ast: &CanonicalAst, scope: &[FunctionId], taint: &TaintSet) -> Result<Slice, TaintError> {
    let model = TaintModel::build(ast, scope)?;
    Ok(slice_with(&model, ast, taint))
}

/// Slice using a prebuilt model over the same scope.
pub fn slice_with(model: &TaintModel, ast: &CanonicalAst, taint: &TaintSet) -> Slice {
    let mut out = Slice::default();
    for id in &model.callables {
        let Some(f) = ast.function(id) else { continue };
        let Some(body) = &f.function.body else { continue };
        let mut ex = Extractor {
            model,
            taint,
            function: out.functions.len(),
            items: Vec::new(),
            covered: BTreeSet::new(),
        };
        ex.extract(body, &[], false);
        if ex.items.is_empty() {
            continue;
        }
        out.items.append(&mut ex.items);
        out.covered_node_ids.append(&mut ex.covered);
        out.functions.push(SliceFunction {
            id: id.clone(),
            contract_open: render_contract_open(f.contract),
            header: render_function_header(f.function),
        });
    }
    out.token_estimate = token_estimate(&reformat(&out));
    out
}

struct Extractor<'m> {
    model: &'m TaintModel,
    taint: &'m TaintSet,
    function: usize,
    items: Vec<SliceItem>,
    covered: BTreeSet<NodeId>,
}

impl Extractor<'_> {
    fn push(&mut self, kind: ItemKind, code: String, context: &[String], node: &AstNode) {
        self.covered.insert(node.id.clone());
        self.items.push(SliceItem {
            function: self.function,
            kind,
            code,
            context: context.to_vec(),
            node_id: node.id.clone(),
        });
    }

    /// Returns whether anything was emitted.
    fn extract(&mut self, node: &AstNode, ctx: &[String], force: bool) -> bool {
        let tainted = self.model.is_tainted(&node.id, self.taint);
        match node.kind {
            NodeKind::If | NodeKind::For | NodeKind::While => {
                let header = render_header(node);
                let mut any = self.branch(node, node.body(), header, ctx, tainted, force);
                if let Some(e) = node.else_branch() {
                    let cond = node.condition().map(render_expr).unwrap_or_default();
                    any |= self.branch(node, Some(e), format!("if (!({cond}))"), ctx, tainted, force);
                }
                any
            }
            NodeKind::Block => {
                let mut any = false;
                for s in &node.children {
                    any |= self.extract(s, ctx, force);
                }
                any
            }
            _ if tainted || force => {
                self.push(ItemKind::Statement, reconstruct(node), ctx, node);
                true
            }
            _ => false,
        }
    }

    fn branch(
        &mut self,
        node: &AstNode,
        body: Option<&AstNode>,
        header: String,
        ctx: &[String],
        tainted: bool,
        force: bool,
    ) -> bool {
        let mut inner = ctx.to_vec();
        inner.push(header.clone());
        // condition goes before its body's items; reserve the slot
        let slot = self.items.len();
        let sub = body.is_some_and(|b| self.extract(b, &inner, tainted || force));
        if sub || tainted || force {
            self.covered.insert(node.id.clone());
            self.items.insert(
                slot,
                SliceItem {
                    function: self.function,
                    kind: ItemKind::Condition,
                    code: header,
                    context: ctx.to_vec(),
                    node_id: node.id.clone(),
                },
            );
            true
        } else {
            false
        }
    }
}

/// Nest items inside their control headers with 4-space indentation,
/// opening each shared header prefix once. Functions are wrapped in their
/// contract; consecutive functions of one contract share the wrapper.
pub fn reformat(raw: &Slice) -> String {
    let mut out = String::new();
    let mut open_contract: Option<&str> = None;
    let mut idx = 0;
    while idx < raw.items.len() {
        let fi = raw.items[idx].function;
        let func = &raw.functions[fi];
        if open_contract != Some(func.contract_open.as_str()) {
            if open_contract.is_some() {
                out.push_str("}\n\n");
            }
            out.push_str(&func.contract_open);
            out.push('\n');
            open_contract = Some(&func.contract_open);
        } else {
            out.push('\n');
        }
        line(&mut out, INDENT, &format!("{} {{", func.header));
        let base = 2 * INDENT;
        let mut stack: Vec<&str> = Vec::new();
        while idx < raw.items.len() && raw.items[idx].function == fi {
            let item = &raw.items[idx];
            let mut target: Vec<&str> = item.context.iter().map(String::as_str).collect();
            if item.kind == ItemKind::Condition {
                target.push(&item.code);
            }
            let common = stack.iter().zip(&target).take_while(|(a, b)| a == b).count();
            while stack.len() > common {
                stack.pop();
                line(&mut out, base + stack.len() * INDENT, "}");
            }
            for h in &target[common..] {
                line(&mut out, base + stack.len() * INDENT, &format!("{h} {{"));
                stack.push(h);
            }
            if item.kind == ItemKind::Statement {
                line(&mut out, base + stack.len() * INDENT, &item.code);
            }
            idx += 1;
        }
        while !stack.is_empty() {
            stack.pop();
            line(&mut out, base + stack.len() * INDENT, "}");
        }
        line(&mut out, INDENT, "}");
    }
    if open_contract.is_some() {
        out.push_str("}\n");
    }
    out
}

fn line(out: &mut String, indent: usize, text: &str) {
    out.push_str(&" ".repeat(indent));
    out.push_str(text);
    out.push('\n');
}

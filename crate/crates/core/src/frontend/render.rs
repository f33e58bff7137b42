//! Canonical source rendering of AST nodes and declarations.
//!
//! Output reparses to a structurally equal tree: parentheses are inserted
//! from operator precedence, Opaque text is printed verbatim.

use super::ast::*;
use super::parser::infix_bp;

const INDENT: usize = 4;

/// Binding strength of an expression node, as used by the parser.
fn prec(node: &AstNode) -> u8 {
    match node.kind {
        NodeKind::Assignment => 1,
        NodeKind::Opaque => 2,
        NodeKind::BinaryOp => match node.attr("operator") {
            Some("[]") => 15,
            Some(op) => infix_bp(op).unwrap_or(0),
            None => 0,
        },
        NodeKind::UnaryOp => match (node.attr("operator"), node.attr("prefix")) {
            (Some("new"), _) => 15,
            (_, Some("false")) => 15,
            _ => 14,
        },
        NodeKind::FunctionCall | NodeKind::MemberAccess => 15,
        _ => 16,
    }
}

fn wrap(node: &AstNode, parens: bool) -> String {
    let s = render_expr(node);
    if parens {
        format!("({s})")
    } else {
        s
    }
}

fn child(node: &AstNode, i: usize) -> Option<&AstNode> {
    node.children.get(i)
}

/// Render an expression node.
pub fn render_expr(node: &AstNode) -> String {
    let attr = |k: &str| node.attr(k).unwrap_or("");
    match node.kind {
        NodeKind::Identifier => attr("name").to_string(),
        NodeKind::Literal => attr("value").to_string(),
        NodeKind::Opaque => attr("text").to_string(),
        NodeKind::BinaryOp => {
            let (Some(l), Some(r)) = (child(node, 0), child(node, 1)) else {
                return String::new();
            };
            let op = attr("operator");
            if op == "[]" {
                return format!("{}[{}]", wrap(l, prec(l) < 15), render_expr(r));
            }
            let p = prec(node);
            let (lp, rp) = if op == "**" {
                (prec(l) <= p, prec(r) < p)
            } else {
                (prec(l) < p, prec(r) <= p)
            };
            format!("{} {op} {}", wrap(l, lp), wrap(r, rp))
        }
        NodeKind::Assignment => {
            let (Some(l), Some(r)) = (child(node, 0), child(node, 1)) else {
                return String::new();
            };
            format!("{} {} {}", wrap(l, prec(l) <= 1), attr("operator"), render_expr(r))
        }
        NodeKind::UnaryOp => {
            let Some(operand) = child(node, 0) else {
                return String::new();
            };
            let op = attr("operator");
            if node.attr("prefix") == Some("false") {
                return format!("{}{op}", wrap(operand, prec(operand) < 15));
            }
            if op == "new" {
                return format!("new {}", render_expr(operand));
            }
            let inner = wrap(operand, prec(operand) < 14);
            let needs_space = op == "delete"
                || (op.starts_with('-') && inner.starts_with('-'))
                || (op.starts_with('+') && inner.starts_with('+'));
            if needs_space {
                format!("{op} {inner}")
            } else {
                format!("{op}{inner}")
            }
        }
        NodeKind::FunctionCall => {
            let Some(callee) = child(node, 0) else {
                return String::new();
            };
            let args: Vec<String> = node.children[1..].iter().map(render_expr).collect();
            format!("{}({})", wrap(callee, prec(callee) < 15), args.join(", "))
        }
        NodeKind::MemberAccess => {
            let Some(base) = child(node, 0) else {
                return String::new();
            };
            format!("{}.{}", wrap(base, prec(base) < 15), attr("member"))
        }
        // statements rendered in expression position (for headers)
        _ => render_stmt(node, 0),
    }
}

fn pad(indent: usize) -> String {
    " ".repeat(indent)
}

/// Render a statement. The first line carries no indentation; following
/// lines are indented absolutely relative to `indent`.
pub fn render_stmt(node: &AstNode, indent: usize) -> String {
    let attr = |k: &str| node.attr(k).unwrap_or("");
    match node.kind {
        NodeKind::Block => {
            let prefix = if node.attr("unchecked") == Some("true") {
                "unchecked "
            } else {
                ""
            };
            if node.children.is_empty() {
                return format!("{prefix}{{}}");
            }
            let mut out = format!("{prefix}{{\n");
            for s in &node.children {
                out.push_str(&pad(indent + INDENT));
                out.push_str(&render_stmt(s, indent + INDENT));
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push('}');
            out
        }
        NodeKind::If => {
            let mut out = format!(
                "if ({}) {}",
                node.condition().map(render_expr).unwrap_or_default(),
                node.body().map(|b| render_stmt(b, indent)).unwrap_or_default()
            );
            if let Some(e) = node.else_branch() {
                out.push_str(" else ");
                out.push_str(&render_stmt(e, indent));
            }
            out
        }
        NodeKind::While => format!(
            "while ({}) {}",
            node.condition().map(render_expr).unwrap_or_default(),
            node.body().map(|b| render_stmt(b, indent)).unwrap_or_default()
        ),
        NodeKind::For => {
            let init = node
                .for_init()
                .map(|i| render_stmt(i, indent))
                .unwrap_or_else(|| ";".to_string());
            let cond = node.condition().map(render_expr).unwrap_or_default();
            let update = node
                .for_update()
                .map(|u| format!(" {}", render_expr(u)))
                .unwrap_or_default();
            format!(
                "for ({init} {cond};{update}) {}",
                node.body().map(|b| render_stmt(b, indent)).unwrap_or_default()
            )
        }
        NodeKind::ExprStmt => format!(
            "{};",
            node.children.first().map(render_expr).unwrap_or_default()
        ),
        NodeKind::VarDeclStmt => {
            let mut out = attr("type").to_string();
            if let Some(loc) = node.attr("location") {
                out.push(' ');
                out.push_str(loc);
            }
            out.push(' ');
            out.push_str(attr("name"));
            if let Some(init) = node.children.first() {
                out.push_str(" = ");
                out.push_str(&render_expr(init));
            }
            out.push(';');
            out
        }
        NodeKind::EmitStatement => {
            let args: Vec<String> = node.children.iter().map(render_expr).collect();
            let name = match node.attr("qualifier") {
                Some(q) => format!("{q}.{}", attr("event")),
                None => attr("event").to_string(),
            };
            format!("emit {name}({});", args.join(", "))
        }
        NodeKind::Return => match node.children.first() {
            Some(e) => format!("return {};", render_expr(e)),
            None => "return;".to_string(),
        },
        NodeKind::Opaque => attr("text").to_string(),
        _ => render_expr(node),
    }
}

/// Text of a control node's header only (`if (c)`, `for (...)`, `while (c)`).
pub fn render_header(node: &AstNode) -> String {
    let cond = node.condition().map(render_expr).unwrap_or_default();
    match node.kind {
        NodeKind::If => format!("if ({cond})"),
        NodeKind::While => format!("while ({cond})"),
        NodeKind::For => {
            let init = node
                .for_init()
                .map(|i| render_stmt(i, 0))
                .unwrap_or_else(|| ";".to_string());
            let update = node
                .for_update()
                .map(|u| format!(" {}", render_expr(u)))
                .unwrap_or_default();
            format!("for ({init} {cond};{update})")
        }
        _ => render_stmt(node, 0),
    }
}

pub fn render_param(p: &Param) -> String {
    let mut out = p.declared_type.clone();
    if let Some(loc) = &p.location {
        out.push(' ');
        out.push_str(loc);
    }
    if !p.name.is_empty() {
        out.push(' ');
        out.push_str(&p.name);
    }
    out
}

fn param_list(params: &[Param]) -> String {
    params.iter().map(render_param).collect::<Vec<_>>().join(", ")
}

/// Function, constructor or modifier header without the body.
pub fn render_function_header(f: &FunctionDecl) -> String {
    let mut out = match f.kind {
        FunctionKind::Function => format!("function {}({})", f.name, param_list(&f.params)),
        FunctionKind::Modifier => format!("modifier {}({})", f.name, param_list(&f.params)),
        k => format!("{}({})", k.as_str(), param_list(&f.params)),
    };
    if f.kind != FunctionKind::Modifier
        && !(f.kind == FunctionKind::Constructor && f.visibility == Visibility::Internal)
    {
        out.push(' ');
        out.push_str(f.visibility.as_str());
    }
    if let Some(m) = &f.mutability {
        out.push(' ');
        out.push_str(m);
    }
    if f.is_virtual {
        out.push_str(" virtual");
    }
    if f.overrides {
        out.push_str(" override");
    }
    for m in &f.modifiers {
        out.push(' ');
        out.push_str(&m.name);
        if let Some(args) = &m.args {
            let args: Vec<String> = args.iter().map(render_expr).collect();
            out.push_str(&format!("({})", args.join(", ")));
        }
    }
    if !f.returns.is_empty() {
        out.push_str(&format!(" returns ({})", param_list(&f.returns)));
    }
    out
}

/// Header plus body (or `;` for declarations without a body).
pub fn render_function(f: &FunctionDecl, indent: usize) -> String {
    let head = render_function_header(f);
    match &f.body {
        Some(b) => format!("{head} {}", render_stmt(b, indent)),
        None => format!("{head};"),
    }
}

pub fn render_state_var(v: &StateVarDecl) -> String {
    let mut out = v.declared_type.clone();
    for s in &v.specifiers {
        out.push(' ');
        out.push_str(s);
    }
    out.push(' ');
    out.push_str(&v.name);
    if let Some(init) = &v.initializer_text {
        out.push_str(" = ");
        out.push_str(init);
    }
    out.push(';');
    out
}

pub fn render_event(e: &EventDecl) -> String {
    format!(
        "event {}({}){};",
        e.name,
        param_list(&e.params),
        if e.anonymous { " anonymous" } else { "" }
    )
}

/// `contract X is A {` style opening line.
pub fn render_contract_open(c: &ContractDecl) -> String {
    let kind = match c.kind {
        ContractKind::Abstract => "abstract contract",
        k => k.as_str(),
    };
    let mut out = format!("{kind} {}", c.name);
    if !c.inherits.is_empty() {
        out.push_str(" is ");
        out.push_str(&c.inherits.join(", "));
    }
    out.push_str(" {");
    out
}

pub fn render_contract(c: &ContractDecl) -> String {
    let mut members: Vec<String> = Vec::new();
    members.extend(c.using_for.iter().map(|l| format!("using {l} for *;")));
    members.extend(c.state_vars.iter().map(render_state_var));
    members.extend(c.events.iter().map(render_event));
    members.extend(
        c.modifiers
            .iter()
            .chain(&c.functions)
            .map(|f| render_function(f, INDENT)),
    );
    let mut out = render_contract_open(c);
    out.push('\n');
    for m in members {
        out.push_str(&pad(INDENT));
        out.push_str(&m);
        out.push('\n');
    }
    out.push('}');
    out
}

pub fn render_file(f: &SourceFile) -> String {
    let parts: Vec<String> = f.contracts.iter().map(render_contract).collect();
    let mut out = parts.join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

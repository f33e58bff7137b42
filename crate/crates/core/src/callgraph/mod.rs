//! Function call graph and event-anchored transaction extraction.

pub mod resolve;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::frontend::render::{render_contract_open, render_function};
use crate::frontend::{
    compile_patterns, find_emit_sites, AstNode, CanonicalAst, FrontendError, FunctionId, FunctionRef,
    NodeKind, Visibility,
};
pub use resolve::{Resolution, Resolver};

#[derive(Debug, thiserror::Error)]
pub enum CallGraphError {
    #[error("unknown function {0}")]
    UnknownFunction(FunctionId),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<FunctionId>,
    pub edges: BTreeSet<(FunctionId, FunctionId)>,
    /// (caller, unresolved callee text)
    pub dangling: BTreeSet<(FunctionId, String)>,
    pub visibility: BTreeMap<FunctionId, Visibility>,
}

impl CallGraph {
    pub fn callees<'s>(&'s self, f: &'s FunctionId) -> impl Iterator<Item = &'s FunctionId> + 's {
        self.edges
            .range((f.clone(), FunctionId(String::new()))..)
            .take_while(move |(a, _)| a == f)
            .map(|(_, b)| b)
    }

    pub fn add_edge(&mut self, from: FunctionId, to: FunctionId) {
        self.nodes.insert(from.clone());
        self.nodes.insert(to.clone());
        self.edges.insert((from, to));
    }
}

/// One syntactic call site reachable when executing a function, including
/// sites inside its inlined modifiers.
pub struct CallSite<'a> {
    /// Function or modifier whose body contains the site.
    pub context: FunctionRef<'a>,
    pub node: &'a AstNode,
    pub resolution: Resolution,
}

/// Every call site executed by `f`: its modifiers' arguments and bodies, then its own body.
pub fn call_sites<'a>(resolver: &Resolver<'a>, f: FunctionRef<'a>) -> Vec<CallSite<'a>> {
    let mut out = Vec::new();
    let visit = |ctx: FunctionRef<'a>, root: &'a AstNode, out: &mut Vec<CallSite<'a>>| {
        for n in root.walk() {
            match n.kind {
                NodeKind::FunctionCall => out.push(CallSite {
                    context: ctx,
                    node: n,
                    resolution: resolver.resolve_call(&ctx, n),
                }),
                NodeKind::Opaque => {
                    let targets = resolver.resolve_opaque(&ctx, n.attr("text").unwrap_or(""));
                    if !targets.is_empty() {
                        out.push(CallSite {
                            context: ctx,
                            node: n,
                            resolution: Resolution {
                                targets,
                                dangling: None,
                            },
                        });
                    }
                }
                _ => {}
            }
        }
    };
    for m in &f.function.modifiers {
        for arg in m.args.iter().flatten() {
            visit(f, arg, &mut out);
        }
    }
    for m in resolver.modifiers_of(&f) {
        if let Some(body) = &m.function.body {
            visit(m, body, &mut out);
        }
    }
    if let Some(body) = &f.function.body {
        visit(f, body, &mut out);
    }
    out
}

pub fn build_call_graph(ast: &CanonicalAst) -> CallGraph {
    let resolver = Resolver::new(ast);
    let mut g = CallGraph::default();
    for f in ast.functions() {
        g.nodes.insert(f.function.qualified_id.clone());
        g.visibility.insert(f.function.qualified_id.clone(), f.function.visibility);
    }
    for f in ast.functions() {
        let caller = &f.function.qualified_id;
        for site in call_sites(&resolver, f) {
            for t in site.resolution.targets {
                if g.nodes.contains(&t) {
                    g.edges.insert((caller.clone(), t));
                }
            }
            if let Some(d) = site.resolution.dangling {
                g.dangling.insert((caller.clone(), d));
            }
        }
    }
    g
}

/// Entrypoints (public/external) that reach any anchor, anchors included.
pub fn backward_closure(
    g: &CallGraph,
    anchors: &BTreeSet<FunctionId>,
) -> Result<BTreeSet<FunctionId>, CallGraphError> {
    let mut callers: BTreeMap<&FunctionId, Vec<&FunctionId>> = BTreeMap::new();
    for (a, b) in &g.edges {
        callers.entry(b).or_default().push(a);
    }
    let mut seen: BTreeSet<FunctionId> = BTreeSet::new();
    let mut queue: VecDeque<&FunctionId> = VecDeque::new();
    for a in anchors {
        if !g.nodes.contains(a) {
            return Err(CallGraphError::UnknownFunction(a.clone()));
        }
        if seen.insert(a.clone()) {
            queue.push_back(a);
        }
    }
    while let Some(n) = queue.pop_front() {
        for &c in callers.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(c.clone()) {
                queue.push_back(c);
            }
        }
    }
    Ok(seen
        .into_iter()
        .filter(|f| g.visibility.get(f).is_some_and(|v| v.is_entry()))
        .collect())
}

/// All functions reachable from `entry`, including itself.
pub fn forward_closure(g: &CallGraph, entry: &FunctionId) -> Result<BTreeSet<FunctionId>, CallGraphError> {
    if !g.nodes.contains(entry) {
        return Err(CallGraphError::UnknownFunction(entry.clone()));
    }
    let mut seen = BTreeSet::from([entry.clone()]);
    let mut queue = VecDeque::from([entry.clone()]);
    while let Some(n) = queue.pop_front() {
        for c in g.callees(&n) {
            if seen.insert(c.clone()) {
                queue.push_back(c.clone());
            }
        }
    }
    Ok(seen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideHint {
    Source,
    Destination,
    Unknown,
}

impl SideHint {
    pub fn as_str(self) -> &'static str {
        match self {
            SideHint::Source => "source",
            SideHint::Destination => "destination",
            SideHint::Unknown => "unknown",
        }
    }
}

/// An anchor-event regex labelled with the chain side it indicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPattern {
    pub pattern: String,
    pub side: SideHint,
}

/// Default anchors. Destination is listed first so that names such as
/// `TokensUnlocked` are not captured by the `lock` source pattern.
pub fn default_event_patterns() -> Vec<EventPattern> {
    vec![
        EventPattern {
            pattern: "(?i)(mint|unlock|withdraw|relay|swapin)".into(),
            side: SideHint::Destination,
        },
        EventPattern {
            pattern: "(?i)(lock|burn|deposit|send|swapout)".into(),
            side: SideHint::Source,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionNode {
    pub anchor_event: String,
    pub entrypoint: FunctionId,
    pub side_hint: SideHint,
    /// Forward closure of the entrypoint, in source order.
    pub members: Vec<FunctionId>,
    pub code_text: String,
    /// Functions in `members` that emit the anchor event.
    pub anchor_functions: Vec<FunctionId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub nodes: Vec<TransactionNode>,
    /// Non-fatal notes, e.g. no anchors found.
    pub diagnostics: Vec<String>,
}

pub const NO_ANCHORS_FOUND: &str = "NoAnchorsFound: no emitted event matches the configured patterns";

/// Layer-1 extraction: anchors, backward closure to entrypoints, forward closure per entrypoint.
pub fn extract_transaction_nodes(
    ast: &CanonicalAst,
    patterns: &[EventPattern],
) -> Result<Extraction, CallGraphError> {
    let texts: Vec<String> = patterns.iter().map(|p| p.pattern.clone()).collect();
    let regexes = compile_patterns(&texts)?;
    let sites = find_emit_sites(ast, &texts)?;
    if sites.is_empty() {
        return Ok(Extraction {
            nodes: Vec::new(),
            diagnostics: vec![NO_ANCHORS_FOUND.to_string()],
        });
    }
    let g = build_call_graph(ast);
    let order: BTreeMap<&FunctionId, usize> = ast
        .functions()
        .enumerate()
        .map(|(i, f)| (&f.function.qualified_id, i))
        .collect();
    let by_order = |ids: BTreeSet<FunctionId>| {
        let mut v: Vec<FunctionId> = ids.into_iter().collect();
        v.sort_by_key(|id| order.get(id).copied().unwrap_or(usize::MAX));
        v
    };

    let mut nodes: Vec<TransactionNode> = Vec::new();
    for (anchor_fn, event) in &sites {
        let side = regexes
            .iter()
            .zip(patterns)
            .find(|(r, _)| r.is_match(event))
            .map_or(SideHint::Unknown, |(_, p)| p.side);
        let entries = by_order(backward_closure(&g, &BTreeSet::from([anchor_fn.clone()]))?);
        for entry in entries {
            if let Some(existing) = nodes
                .iter_mut()
                .find(|n| n.entrypoint == entry && &n.anchor_event == event)
            {
                if !existing.anchor_functions.contains(anchor_fn) {
                    existing.anchor_functions.push(anchor_fn.clone());
                }
                continue;
            }
            let members = by_order(forward_closure(&g, &entry)?);
            nodes.push(TransactionNode {
                anchor_event: event.clone(),
                entrypoint: entry,
                side_hint: side,
                code_text: code_text(ast, &members),
                members,
                anchor_functions: vec![anchor_fn.clone()],
            });
        }
    }
    Ok(Extraction {
        nodes,
        diagnostics: Vec::new(),
    })
}

/// Reconstructed source of the members (and modifiers they use), grouped
/// per contract in source order.
pub fn code_text(ast: &CanonicalAst, members: &[FunctionId]) -> String {
    let resolver = Resolver::new(ast);
    let mut wanted: BTreeSet<&FunctionId> = members.iter().collect();
    for id in members {
        if let Some(f) = ast.function(id) {
            for m in resolver.modifiers_of(&f) {
                wanted.insert(&m.function.qualified_id);
            }
        }
    }
    let mut blocks = Vec::new();
    for (_, c) in ast.contracts() {
        let parts: Vec<String> = c
            .modifiers
            .iter()
            .chain(&c.functions)
            .filter(|f| wanted.contains(&f.qualified_id))
            .map(|f| format!("    {}", render_function(f, 4)))
            .collect();
        if !parts.is_empty() {
            blocks.push(format!("{}\n{}\n}}", render_contract_open(c), parts.join("\n\n")));
        }
    }
    let mut out = blocks.join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

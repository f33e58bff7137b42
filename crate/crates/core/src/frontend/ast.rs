//! Canonical syntax tree shared by every analysis stage.
//!
//! Declarations (files, contracts, functions, state variables, events) are
//! typed; statement and expression bodies use the generic [`AstNode`] tree
//! whose kinds come from the closed [`NodeKind`] set.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Stable node identifier, `"<file_id>#<preorder index>"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(file_id: &str, index: u32) -> Self {
        NodeId(format!("{file_id}#{index}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Preorder index within the owning file, used for source ordering.
    pub fn index(&self) -> u32 {
        self.0
            .rsplit_once('#')
            .and_then(|(_, n)| n.parse().ok())
            .unwrap_or(u32::MAX)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fully qualified function id, `file_id::Contract::name`.
///
/// Overloaded names get the parameter type list appended so ids stay unique.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionId(pub String);

impl FunctionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `Contract::name` without the file prefix.
    pub fn short(&self) -> &str {
        match self.0.find("::") {
            Some(i) => &self.0[i + 2..],
            None => &self.0,
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FunctionId {
    fn from(s: &str) -> Self {
        FunctionId(s.to_string())
    }
}

/// The closed set of node kinds accepted by the canonical schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    SourceUnit,
    ContractDef,
    StateVarDecl,
    EventDecl,
    FunctionDef,
    ParamList,
    Block,
    If,
    For,
    While,
    ExprStmt,
    VarDeclStmt,
    Assignment,
    BinaryOp,
    UnaryOp,
    FunctionCall,
    MemberAccess,
    Identifier,
    Literal,
    EmitStatement,
    Return,
    Opaque,
}

impl NodeKind {
    pub const ALL: [NodeKind; 22] = [
        NodeKind::SourceUnit,
        NodeKind::ContractDef,
        NodeKind::StateVarDecl,
        NodeKind::EventDecl,
        NodeKind::FunctionDef,
        NodeKind::ParamList,
        NodeKind::Block,
        NodeKind::If,
        NodeKind::For,
        NodeKind::While,
        NodeKind::ExprStmt,
        NodeKind::VarDeclStmt,
        NodeKind::Assignment,
        NodeKind::BinaryOp,
        NodeKind::UnaryOp,
        NodeKind::FunctionCall,
        NodeKind::MemberAccess,
        NodeKind::Identifier,
        NodeKind::Literal,
        NodeKind::EmitStatement,
        NodeKind::Return,
        NodeKind::Opaque,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::SourceUnit => "SourceUnit",
            NodeKind::ContractDef => "ContractDef",
            NodeKind::StateVarDecl => "StateVarDecl",
            NodeKind::EventDecl => "EventDecl",
            NodeKind::FunctionDef => "FunctionDef",
            NodeKind::ParamList => "ParamList",
            NodeKind::Block => "Block",
            NodeKind::If => "If",
            NodeKind::For => "For",
            NodeKind::While => "While",
            NodeKind::ExprStmt => "ExprStmt",
            NodeKind::VarDeclStmt => "VarDeclStmt",
            NodeKind::Assignment => "Assignment",
            NodeKind::BinaryOp => "BinaryOp",
            NodeKind::UnaryOp => "UnaryOp",
            NodeKind::FunctionCall => "FunctionCall",
            NodeKind::MemberAccess => "MemberAccess",
            NodeKind::Identifier => "Identifier",
            NodeKind::Literal => "Literal",
            NodeKind::EmitStatement => "EmitStatement",
            NodeKind::Return => "Return",
            NodeKind::Opaque => "Opaque",
        }
    }

    pub fn from_name(name: &str) -> Option<NodeKind> {
        NodeKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Kinds that may appear directly inside a Block.
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            NodeKind::Block
                | NodeKind::If
                | NodeKind::For
                | NodeKind::While
                | NodeKind::ExprStmt
                | NodeKind::VarDeclStmt
                | NodeKind::EmitStatement
                | NodeKind::Return
                | NodeKind::Opaque
        )
    }

    pub fn is_control(self) -> bool {
        matches!(self, NodeKind::If | NodeKind::For | NodeKind::While)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Statement/expression node.
///
/// Attribute conventions per kind:
/// - `Identifier`: `name`
/// - `Literal`: `value` (raw source text)
/// - `BinaryOp`: `operator`; index access uses operator `[]`
/// - `UnaryOp`: `operator`, `prefix` (`"true"`/`"false"`)
/// - `Assignment`: `operator` (`=`, `+=`, ...)
/// - `FunctionCall`: `callee` (rendered callee text); child 0 is the callee
///   expression, the rest are arguments
/// - `MemberAccess`: `member`; child 0 is the base expression
/// - `If`: `condition`, `body`, optional `else` (child indices)
/// - `For`: `condition`, `body`, optional `init`, `update` (child indices)
/// - `While`: `condition`, `body`
/// - `VarDeclStmt`: `name`, `type`, optional `location`; optional child 0
///   is the initializer
/// - `EmitStatement`: `event`; children are the arguments
/// - `Block`: optional `unchecked`
/// - `Opaque`: `text`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub attrs: BTreeMap<String, String>,
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }

    fn child_at(&self, key: &str) -> Option<&AstNode> {
        self.attr(key)
            .and_then(|i| i.parse::<usize>().ok())
            .and_then(|i| self.children.get(i))
    }

    /// Condition child of an If/For/While node.
    pub fn condition(&self) -> Option<&AstNode> {
        self.child_at("condition")
    }

    /// Body child of an If/For/While node.
    pub fn body(&self) -> Option<&AstNode> {
        self.child_at("body")
    }

    pub fn else_branch(&self) -> Option<&AstNode> {
        self.child_at("else")
    }

    pub fn for_init(&self) -> Option<&AstNode> {
        self.child_at("init")
    }

    pub fn for_update(&self) -> Option<&AstNode> {
        self.child_at("update")
    }

    /// Preorder walk over this node and all descendants.
    pub fn walk(&self) -> Walk<'_> {
        Walk { stack: vec![self] }
    }

    /// Structural equality ignoring node ids.
    pub fn same_shape(&self, other: &AstNode) -> bool {
        self.kind == other.kind
            && self.attrs == other.attrs
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.same_shape(b))
    }
}

pub struct Walk<'a> {
    stack: Vec<&'a AstNode>,
}

impl<'a> Iterator for Walk<'a> {
    type Item = &'a AstNode;

    fn next(&mut self) -> Option<&'a AstNode> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    External,
    Internal,
    Private,
}

impl Visibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Visibility::Public => "public",
            Visibility::External => "external",
            Visibility::Internal => "internal",
            Visibility::Private => "private",
        }
    }

    pub fn parse(s: &str) -> Option<Visibility> {
        match s {
            "public" => Some(Visibility::Public),
            "external" => Some(Visibility::External),
            "internal" => Some(Visibility::Internal),
            "private" => Some(Visibility::Private),
            _ => None,
        }
    }

    /// Callable from outside the contract.
    pub fn is_entry(self) -> bool {
        matches!(self, Visibility::Public | Visibility::External)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    Contract,
    Interface,
    Library,
    Abstract,
}

impl ContractKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContractKind::Contract => "contract",
            ContractKind::Interface => "interface",
            ContractKind::Library => "library",
            ContractKind::Abstract => "abstract",
        }
    }

    pub fn parse(s: &str) -> Option<ContractKind> {
        match s {
            "contract" => Some(ContractKind::Contract),
            "interface" => Some(ContractKind::Interface),
            "library" => Some(ContractKind::Library),
            "abstract" => Some(ContractKind::Abstract),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    Function,
    Constructor,
    Fallback,
    Receive,
    Modifier,
}

impl FunctionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FunctionKind::Function => "function",
            FunctionKind::Constructor => "constructor",
            FunctionKind::Fallback => "fallback",
            FunctionKind::Receive => "receive",
            FunctionKind::Modifier => "modifier",
        }
    }

    pub fn parse(s: &str) -> Option<FunctionKind> {
        match s {
            "function" => Some(FunctionKind::Function),
            "constructor" => Some(FunctionKind::Constructor),
            "fallback" => Some(FunctionKind::Fallback),
            "receive" => Some(FunctionKind::Receive),
            "modifier" => Some(FunctionKind::Modifier),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub node_id: NodeId,
    /// Empty for unnamed parameters.
    pub name: String,
    pub declared_type: String,
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifierInvocation {
    pub name: String,
    /// `None` when written without parentheses.
    pub args: Option<Vec<AstNode>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub node_id: NodeId,
    pub qualified_id: FunctionId,
    pub name: String,
    pub kind: FunctionKind,
    pub params: Vec<Param>,
    pub returns: Vec<Param>,
    pub visibility: Visibility,
    pub mutability: Option<String>,
    pub is_virtual: bool,
    pub overrides: bool,
    pub modifiers: Vec<ModifierInvocation>,
    pub body: Option<AstNode>,
    pub emitted_events: Vec<String>,
    /// Node ids of the two parameter lists (params, returns).
    pub param_list_ids: (NodeId, NodeId),
}

impl FunctionDecl {
    pub fn modifier_names(&self) -> impl Iterator<Item = &str> {
        self.modifiers.iter().map(|m| m.name.as_str())
    }

    pub fn param_types(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.declared_type.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVarDecl {
    pub node_id: NodeId,
    pub qualified_id: String,
    pub name: String,
    pub declared_type: String,
    /// Specifier keywords in source order (`public`, `constant`, ...).
    pub specifiers: Vec<String>,
    pub initializer_text: Option<String>,
    pub initializer: Option<AstNode>,
    pub owning_contract: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDecl {
    pub node_id: NodeId,
    pub name: String,
    pub params: Vec<Param>,
    pub anonymous: bool,
    pub param_list_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractDecl {
    pub node_id: NodeId,
    pub name: String,
    pub kind: ContractKind,
    pub inherits: Vec<String>,
    /// Libraries attached with `using L for T`.
    pub using_for: Vec<String>,
    pub state_vars: Vec<StateVarDecl>,
    pub functions: Vec<FunctionDecl>,
    pub modifiers: Vec<FunctionDecl>,
    pub events: Vec<EventDecl>,
}

impl ContractDecl {
    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn modifier(&self, name: &str) -> Option<&FunctionDecl> {
        self.modifiers.iter().find(|f| f.name == name)
    }

    pub fn state_var(&self, name: &str) -> Option<&StateVarDecl> {
        self.state_vars.iter().find(|v| v.name == name)
    }
}

/// A byte range the parser could not structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub start: usize,
    pub end: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub file_id: String,
    pub node_id: NodeId,
    pub contracts: Vec<ContractDecl>,
    pub diagnostics: Vec<Diagnostic>,
}

impl SourceFile {
    /// Number of Opaque nodes anywhere in the file.
    pub fn opaque_count(&self) -> usize {
        let bodies = self.contracts.iter().flat_map(|c| {
            c.functions
                .iter()
                .chain(&c.modifiers)
                .filter_map(|f| f.body.as_ref())
                .chain(c.state_vars.iter().filter_map(|v| v.initializer.as_ref()))
        });
        bodies
            .flat_map(|b| b.walk())
            .filter(|n| n.kind == NodeKind::Opaque)
            .count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalAst {
    pub files: Vec<SourceFile>,
}

/// A function located inside the codebase.
#[derive(Debug, Clone, Copy)]
pub struct FunctionRef<'a> {
    pub file: &'a SourceFile,
    pub contract: &'a ContractDecl,
    pub function: &'a FunctionDecl,
}

impl CanonicalAst {
    pub fn new(files: Vec<SourceFile>) -> Self {
        CanonicalAst { files }
    }

    pub fn contracts(&self) -> impl Iterator<Item = (&SourceFile, &ContractDecl)> {
        self.files
            .iter()
            .flat_map(|f| f.contracts.iter().map(move |c| (f, c)))
    }

    /// All functions (not modifiers), in file, contract, source order.
    pub fn functions(&self) -> impl Iterator<Item = FunctionRef<'_>> {
        self.contracts().flat_map(|(file, contract)| {
            contract.functions.iter().map(move |function| FunctionRef {
                file,
                contract,
                function,
            })
        })
    }

    /// Functions and modifiers.
    pub fn callables(&self) -> impl Iterator<Item = FunctionRef<'_>> {
        self.contracts().flat_map(|(file, contract)| {
            contract
                .functions
                .iter()
                .chain(&contract.modifiers)
                .map(move |function| FunctionRef {
                    file,
                    contract,
                    function,
                })
        })
    }

    pub fn function(&self, id: &FunctionId) -> Option<FunctionRef<'_>> {
        self.callables().find(|f| &f.function.qualified_id == id)
    }

    /// First contract with this name, searching files in order.
    pub fn contract_named(&self, name: &str) -> Option<(&SourceFile, &ContractDecl)> {
        self.contracts().find(|(_, c)| c.name == name)
    }

    pub fn opaque_count(&self) -> usize {
        self.files.iter().map(SourceFile::opaque_count).sum()
    }
}

/// Collects event names emitted anywhere in `body`, in source order, deduplicated.
pub fn emitted_events(body: Option<&AstNode>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    if let Some(body) = body {
        for node in body.walk() {
            if node.kind == NodeKind::EmitStatement {
                if let Some(ev) = node.attr("event") {
                    if !out.iter().any(|e| e == ev) {
                        out.push(ev.to_string());
                    }
                }
            }
        }
    }
    out
}

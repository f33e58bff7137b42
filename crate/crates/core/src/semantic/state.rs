//! State variables touched by a function and its forward closure.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SemanticError;
use crate::callgraph::{forward_closure, CallGraph};
use crate::frontend::{CanonicalAst, FunctionId};
use crate::taint::TaintModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVarInfo {
    pub name: String,
    pub declared_type: String,
    pub initializer_text: Option<String>,
    pub owning_contract: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateContext {
    pub function_id: FunctionId,
    pub state_vars: Vec<StateVarInfo>,
}

/// `state:<file>::<Contract>::<name>[.path]` → `(file, contract, name)`.
fn split_state_key(key: &str) -> Option<(&str, &str, &str)> {
    let rest = key.strip_prefix("state:")?;
    let (head, tail) = rest.rsplit_once("::")?;
    let name = tail.split('.').next()?;
    let (file, contract) = head.rsplit_once("::")?;
    Some((file, contract, name))
}

/// Listed in declaration order across the codebase.
pub fn state_context(
    function_id: &FunctionId,
    ast: &CanonicalAst,
    graph: &CallGraph,
) -> Result<StateContext, SemanticError> {
    if ast.function(function_id).is_none() {
        return Err(SemanticError::UnknownFunction(function_id.to_string()));
    }
    let closure: Vec<FunctionId> = forward_closure(graph, function_id)
        .map_err(|_| SemanticError::UnknownFunction(function_id.to_string()))?
        .into_iter()
        .collect();
    let model = TaintModel::build(ast, &closure).map_err(|e| SemanticError::UnknownFunction(e.to_string()))?;
    let referenced: BTreeSet<(&str, &str, &str)> = model
        .node_keys
        .values()
        .flatten()
        .filter_map(|k| split_state_key(k))
        .collect();
    let mut state_vars = Vec::new();
    for (file, c) in ast.contracts() {
        for v in &c.state_vars {
            if referenced.contains(&(file.file_id.as_str(), c.name.as_str(), v.name.as_str())) {
                state_vars.push(StateVarInfo {
                    name: v.name.clone(),
                    declared_type: v.declared_type.clone(),
                    initializer_text: v.initializer_text.clone(),
                    owning_contract: v.owning_contract.clone(),
                });
            }
        }
    }
    Ok(StateContext {
        function_id: function_id.clone(),
        state_vars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::callgraph::build_call_graph;
    use crate::frontend::parse_source;

    const SRC: &str = r#"
contract Base {
    address public owner = address(0x1234);
    uint256 fee;
    function _charge(uint256 a) internal returns (uint256) { return a - fee; }
}
contract Bridge is Base {
    uint256 limit = 10;
    mapping(uint256 => bool) used;
    function pure_(uint256 a) public returns (uint256) { return a + 1; }
    function go(uint256 n, uint256 a) public {
        require(msg.sender == owner, "owner");
        used[n] = true;
        _charge(a);
    }
}
"#;

    fn setup() -> (CanonicalAst, CallGraph) {
        let ast = CanonicalAst::new(vec![parse_source(SRC, "s.sol").unwrap()]);
        let g = build_call_graph(&ast);
        (ast, g)
    }

    #[test]
    fn no_state_gives_empty_context() {
        let (ast, g) = setup();
        let c = state_context(&FunctionId::from("s.sol::Bridge::pure_"), &ast, &g).unwrap();
        assert!(c.state_vars.is_empty());
    }

    #[test]
    fn closure_spans_contracts_with_initialisers() {
        let (ast, g) = setup();
        let c = state_context(&FunctionId::from("s.sol::Bridge::go"), &ast, &g).unwrap();
        let got: Vec<(&str, Option<&str>, &str)> = c
            .state_vars
            .iter()
            .map(|v| (v.name.as_str(), v.initializer_text.as_deref(), v.owning_contract.as_str()))
            .collect();
        assert_eq!(
            got,
            [("owner", Some("address(0x1234)"), "Base"), ("fee", None, "Base"), ("used", None, "Bridge")]
        );
    }

    #[test]
    fn unknown_function_rejected() {
        let (ast, g) = setup();
        assert!(matches!(
            state_context(&FunctionId::from("s.sol::Bridge::nope"), &ast, &g),
            Err(SemanticError::UnknownFunction(_))
        ));
    }
}

//! Layer prompts.

use serde_json::{json, Value};

use crate::orchestrator::{LayerSchema, Prompt};

pub const TASK_MAP: &str = "map-properties";
pub const TASK_CHECK: &str = "check-constraints";
pub const TASK_BYPASS: &str = "find-bypasses";

pub const AUDITOR_SYSTEM: &str = "You are a smart contract security auditor specialising in cross-chain bridges. \
Answer strictly from the code you are given.";

pub const ATTACKER_SYSTEM: &str = "You act as an attacker targeting a cross-chain bridge. \
Your goal is to find execution paths that move value while defeating the bridge's security checks.";

pub fn mapping_prompt(schema: &LayerSchema, context: &Value) -> Prompt {
    Prompt::new(
        TASK_MAP,
        AUDITOR_SYSTEM,
        &format!(
            "The code below is the forward closure of one cross-chain entrypoint. For every security property listed \
in the context, identify the entrypoint parameter that carries it and a line of code where it is used. {}",
            schema.format_instructions()
        ),
        context,
    )
}

pub fn constraint_prompt(schema: &LayerSchema, context: &Value) -> Prompt {
    Prompt::new(
        TASK_CHECK,
        AUDITOR_SYSTEM,
        &format!(
            "The code below is a parameter-specific slice with every enclosing condition kept. For each rule and each \
of its checklist items, decide whether the slice implements the check, and quote the implementing code when it does. {}",
            schema.format_instructions()
        ),
        context,
    )
}

pub fn bypass_prompt(schema: &LayerSchema, context: &Value, k_g: usize) -> Prompt {
    Prompt::new(
        TASK_BYPASS,
        ATTACKER_SYSTEM,
        &format!(
            "Act as an attacker. You are one of {k_g} independent analysts. Using the implemented and missing \
constraints, the state variables with their initial values and the reference bypass principles, describe concrete \
ways to defeat the constraints of this entrypoint. Consider misconfigured state and ordinary single-chain flaws that \
make an implemented check ineffective. Report nothing rather than speculate. {}",
            schema.format_instructions()
        ),
        context,
    )
}

/// Layer-4 context object.
pub fn constraint_context(entry: &str, side: &str, parameter: &str, properties: &[String], rules: &Value, slice: &str) -> Value {
    json!({
        "entrypoint": entry,
        "side": side,
        "parameter": parameter,
        "properties": properties,
        "rules": rules,
        "slice": slice,
    })
}

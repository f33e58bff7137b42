//! Cross-chain message vocabulary, predicate catalog, reference evaluator
//! and natural-language rule renderer.

pub mod predicates;
pub mod render;
pub mod types;

pub use predicates::{
    atomic_sides, conjuncts_of, eval_conjunct, eval_conjuncts, eval_predicate, execution_condition, relay_message, Conjunct,
    Dimension, PredicateId,
};
pub use render::{
    catalog_document, catalog_entries, properties_for_side, render_catalog, render_predicate_nl, rule_ids,
    CatalogEntry, PropertySpec, RenderedRule,
};
pub use types::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerificationError {
    #[error("predicate {predicate} cannot be evaluated on the {} side", side.as_str())]
    SideMismatch { predicate: String, side: Side },
    #[error("destination property set has an empty signature")]
    MissingSignature,
    #[error("invalid hex value {value:?}: {reason}")]
    InvalidHex { value: String, reason: String },
    #[error("invalid property: {0}")]
    InvalidProperty(String),
}

//! Natural-language rendering of the predicate catalog.

use serde::{Deserialize, Serialize};

use super::predicates::{conjuncts_of, Conjunct, PredicateId};
use super::types::Side;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedRule {
    pub rule_id: String,
    pub title: String,
    pub description: String,
    pub checklist: Vec<String>,
}

/// One row of the exported catalog document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub rule_id: String,
    pub side: Side,
    pub dimension: String,
    pub title: String,
    pub checklist: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub description: String,
    pub expected_role: String,
}

fn conjunct_sentence(c: Conjunct, side: Side) -> &'static str {
    use Conjunct::*;
    match (c, side) {
        (ReceiverNonZero, _) => "The receiver address of the message is checked to be different from the zero address.",
        (AmountPositive, _) => "The transferred token amount is checked to be strictly greater than zero.",
        (DestinationNotCurrentChain, _) => {
            "The destination chain id is checked to differ from the id of the chain executing the contract."
        }
        (DestinationIsCurrentChain, _) => {
            "The destination chain id in the message is checked to equal the id of the chain executing the contract."
        }
        (TokenWhitelisted, _) => "The token being bridged is checked against the protocol's address whitelist.",
        (NonceIsNext, _) => "The message nonce is checked to equal the next expected nonce recorded for the sender.",
        (DestinationChainSupported, _) => "The destination chain is checked to belong to the set of supported chains.",
        (NonceUnused, _) => {
            "The pair of source chain id and nonce is checked to be unused before the message is executed, and is marked used afterwards."
        }
        (SourceChainSupported, _) => "The source chain of the message is checked to belong to the set of supported chains.",
        (ValidProof, _) => {
            "The signature or proof attached to the message is verified against the full message contents before any asset is released."
        }
        (ExtAddrWhitelisted, Side::Source) => {
            "Any external contract called during the source-side transfer is checked against the address whitelist."
        }
        (ExtAddrWhitelisted, Side::Destination) => {
            "Any external contract called during the destination-side execution is checked against the address whitelist."
        }
        (ExtFuncWhitelisted, Side::Source) => {
            "The function selector of any external call made on the source side is checked against the function whitelist."
        }
        (ExtFuncWhitelisted, Side::Destination) => {
            "The function selector of any external call made on the destination side is checked against the function whitelist."
        }
        (LockedCorrect, _) => {
            "The sender's token balance is checked to decrease by exactly the stated amount once assets are locked or burnt."
        }
        (MinExecutionBounded, _) => {
            "The amount the user actually receives from any swap is checked to be at least the agreed minimum output."
        }
        (ReferencePriceBounded, _) => {
            "The execution price of any swap is checked to stay within the allowed deviation from a reference price."
        }
        (UnlockedCorrect, _) => {
            "The receiver's balance of the registered counterpart token is checked to increase by exactly the stated amount once assets are unlocked or minted."
        }
    }
}

fn title_and_description(pid: PredicateId) -> (&'static str, &'static str) {
    match pid {
        PredicateId::Ps1 => (
            "Source-side message integrity",
            "Before a transfer is accepted on the source chain, the request parameters must be well formed so that malformed or empty transfers are rejected.",
        ),
        PredicateId::Pd1 => (
            "Destination-side message integrity",
            "Before a message is executed on the destination chain, its parameters must be well formed and it must be addressed to this chain.",
        ),
        PredicateId::Ps2 => (
            "Source-side message authenticity",
            "The source chain must only emit messages for approved tokens and supported chains, each with a fresh sequential nonce.",
        ),
        PredicateId::Pd2 => (
            "Destination-side message authenticity",
            "The destination chain must only execute messages that come from a supported chain, carry a valid proof and have never been executed before.",
        ),
        PredicateId::Ps3 => (
            "Source-side execution safety",
            "Execution on the source chain must not make arbitrary external calls, must move exactly the stated amount and must bound swap slippage.",
        ),
        PredicateId::Pd3 => (
            "Destination-side execution safety",
            "Execution on the destination chain must not make arbitrary external calls and must credit the receiver with exactly the stated amount of the registered asset.",
        ),
        _ => ("", ""),
    }
}

fn atomic_text(pid: PredicateId) -> (&'static str, &'static str) {
    match pid {
        PredicateId::ChainId => ("Chain id", "The identifier of the chain the contract runs on."),
        PredicateId::ZeroAddr => ("Zero address", "The all-zero address, never a valid receiver."),
        PredicateId::SupportedChains => ("Supported chains", "The set of chains the protocol supports."),
        PredicateId::Balance => ("Balance", "An address's token balance, sufficient to cover the transferred amount."),
        PredicateId::NonceNext => ("Next nonce", "The source chain's next expected nonce for each sender."),
        PredicateId::NonceUnused => ("Unused nonce", "The nonce on the destination chain has not been used yet."),
        PredicateId::Whitelist => ("Address and function whitelist", "Approved external contracts and function selectors."),
        PredicateId::ValidProof => ("Valid proof", "The signature over the message is verified for integrity and correctness."),
        PredicateId::AssetMap => ("Asset registry", "The secure registry mapping a token to its counterpart on another chain."),
        PredicateId::LockedCorrect => ("Lock accounting", "The balance changes correctly after source assets are locked or burnt."),
        PredicateId::UnlockedCorrect => {
            ("Unlock accounting", "The balance changes correctly after destination assets are unlocked or minted.")
        }
        PredicateId::MinExecutionBounded => {
            ("Minimum execution", "The user's received amount is bounded by a minimum execution threshold.")
        }
        PredicateId::ReferencePriceBounded => (
            "Reference price",
            "The execution price deviation is bounded against a protocol-defined or external reference price.",
        ),
        _ => ("", ""),
    }
}

/// Fixed prose for a catalog predicate. Composite checklists map 1:1 to
/// their conjuncts; atomics get a single-item checklist.
pub fn render_predicate_nl(pid: PredicateId) -> RenderedRule {
    if let (Some(side), true) = (pid.side(), pid.is_composite()) {
        let (title, description) = title_and_description(pid);
        return RenderedRule {
            rule_id: pid.as_str().to_string(),
            title: title.to_string(),
            description: description.to_string(),
            checklist: conjuncts_of(pid)
                .iter()
                .map(|c| conjunct_sentence(*c, side).to_string())
                .collect(),
        };
    }
    let (title, description) = atomic_text(pid);
    RenderedRule {
        rule_id: pid.as_str().to_string(),
        title: title.to_string(),
        description: description.to_string(),
        checklist: vec![description.to_string()],
    }
}

/// Rendered rules for the six composites.
pub fn render_catalog() -> Vec<RenderedRule> {
    PredicateId::COMPOSITES.iter().map(|p| render_predicate_nl(*p)).collect()
}

pub fn catalog_entries() -> Vec<CatalogEntry> {
    PredicateId::COMPOSITES
        .iter()
        .map(|&pid| {
            let r = render_predicate_nl(pid);
            CatalogEntry {
                rule_id: r.rule_id,
                side: pid.side().expect("composite"),
                dimension: pid.dimension().expect("composite").as_str().to_string(),
                title: r.title,
                checklist: r.checklist,
            }
        })
        .collect()
}

/// Catalog as a JSON document.
pub fn catalog_document() -> serde_json::Value {
    serde_json::json!({ "rules": catalog_entries() })
}

/// Rule ids accepted in findings.
pub fn rule_ids() -> Vec<&'static str> {
    PredicateId::COMPOSITES.iter().map(|p| p.as_str()).collect()
}

const MESSAGE_FIELDS: [(&str, &str, &str); 7] = [
    (
        "source_chain_id",
        "Identifier of the chain the transfer originates from.",
        "message field s_c",
    ),
    ("sender", "Address that initiates the transfer on the source chain.", "message field s_s"),
    (
        "destination_chain_id",
        "Identifier of the chain the transfer is delivered to.",
        "message field d_c",
    ),
    (
        "receiver",
        "Address that receives the assets on the destination chain.",
        "message field d_r",
    ),
    ("token", "Address of the token being transferred.", "message field t"),
    ("amount", "Quantity of tokens transferred, in base units.", "message field a"),
    (
        "nonce",
        "Sequence number that makes each message unique and prevents replay.",
        "message field n",
    ),
];

/// Field inventory of one side's property set, for prompt construction.
pub fn properties_for_side(side: Side) -> Vec<PropertySpec> {
    let mut out: Vec<PropertySpec> = MESSAGE_FIELDS
        .iter()
        .map(|(n, d, r)| PropertySpec {
            name: n.to_string(),
            description: d.to_string(),
            expected_role: r.to_string(),
        })
        .collect();
    let extra: [(&str, &str, &str); 3] = match side {
        Side::Source => [
            (
                "external_call_target",
                "Address of any external contract invoked while the source-side transfer executes.",
                "s_extAddr",
            ),
            (
                "external_call_selector",
                "Function selector of any external call made during the source-side transfer.",
                "s_extFunc",
            ),
            (
                "slippage",
                "Swap bounds: minimum output amount and maximum deviation from a reference price.",
                "slippage",
            ),
        ],
        Side::Destination => [
            (
                "external_call_target",
                "Address of any external contract invoked while the destination-side message executes.",
                "d_extAddr",
            ),
            (
                "external_call_selector",
                "Function selector of any external call made during destination-side execution.",
                "d_extFunc",
            ),
            (
                "signature",
                "Proof or signature attesting that the message was authorised on the source chain.",
                "signature",
            ),
        ],
    };
    out.extend(extra.iter().map(|(n, d, r)| PropertySpec {
        name: n.to_string(),
        description: d.to_string(),
        expected_role: r.to_string(),
    }));
    out
}

//! Hand-derived Layer-1 oracle for the bridge fixture and a Warshall
//! reachability check independent of the library's traversal.

use std::collections::{BTreeMap, BTreeSet};

use xchain_audit_core::callgraph::{build_call_graph, SideHint, TransactionNode};
use xchain_audit_core::frontend::{CanonicalAst, FunctionId};

use super::fid;

pub const SWAP_IN: &str = "Router.sol::Router::swapIn";
pub const SWAP_OUT: &str = "Router.sol::Router::swapOut";
pub const SWAP_OUT_FOR: &str = "Router.sol::Router::swapOutFor";
pub const INNER_SWAP_OUT: &str = "Router.sol::Router::_swapOut";
pub const MINT: &str = "BridgeToken.sol::BridgeToken::mint";
pub const BURN: &str = "BridgeToken.sol::BridgeToken::burn";
pub const INNER_BURN: &str = "BridgeToken.sol::BridgeToken::_burn";
pub const FEE: &str = "FeeManager.sol::FeeManager::computeFee";
pub const USE_NONCE: &str = "BridgeBase.sol::BridgeBase::_useNonce";
pub const VERIFY: &str = "SignatureVerifier.sol::SignatureVerifier::verify";
pub const SPLIT: &str = "SignatureVerifier.sol::SignatureVerifier::splitSignature";

pub fn set(ids: &[&str]) -> BTreeSet<FunctionId> {
    ids.iter().map(|s| fid(s)).collect()
}

/// Read off the fixture sources: interface calls on `IBridgeToken` reach the
/// one implementing contract; `feeManager` is typed `FeeManager`; the
/// unresolvable `IERC20Like` call dangles.
pub fn expected_edges() -> BTreeSet<(FunctionId, FunctionId)> {
    [
        (SWAP_OUT, INNER_SWAP_OUT),
        (SWAP_OUT_FOR, INNER_SWAP_OUT),
        (INNER_SWAP_OUT, FEE),
        (INNER_SWAP_OUT, BURN),
        (INNER_SWAP_OUT, MINT),
        (INNER_SWAP_OUT, USE_NONCE),
        (BURN, INNER_BURN),
        (SWAP_IN, VERIFY),
        (SWAP_IN, MINT),
        (VERIFY, SPLIT),
    ]
    .into_iter()
    .map(|(a, b)| (fid(a), fid(b)))
    .collect()
}

/// (anchor event, entrypoint, side, members, anchor functions)
pub fn expected_nodes() -> Vec<(&'static str, &'static str, SideHint, BTreeSet<FunctionId>, BTreeSet<FunctionId>)> {
    let out_members = |entry| set(&[entry, INNER_SWAP_OUT, FEE, BURN, INNER_BURN, MINT, USE_NONCE]);
    vec![
        ("SwapIn", SWAP_IN, SideHint::Destination, set(&[SWAP_IN, VERIFY, SPLIT, MINT]), set(&[SWAP_IN])),
        ("SwapOut", SWAP_OUT, SideHint::Source, out_members(SWAP_OUT), set(&[INNER_SWAP_OUT])),
        ("SwapOut", SWAP_OUT_FOR, SideHint::Source, out_members(SWAP_OUT_FOR), set(&[INNER_SWAP_OUT])),
    ]
}

/// Warshall closure over an edge list; independent of the library's BFS.
pub fn brute_force_reach(nodes: &[FunctionId], edges: &BTreeSet<(FunctionId, FunctionId)>) -> BTreeMap<FunctionId, BTreeSet<FunctionId>> {
    let idx: BTreeMap<&FunctionId, usize> = nodes.iter().enumerate().map(|(i, f)| (f, i)).collect();
    let n = nodes.len();
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for (a, b) in edges {
        r[idx[a]][idx[b]] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    nodes
        .iter()
        .enumerate()
        .map(|(i, f)| (f.clone(), (0..n).filter(|&j| r[i][j]).map(|j| nodes[j].clone()).collect()))
        .collect()
}

/// Extracted nodes equal the hand-derived set, in order.
pub fn check_nodes(nodes: &[TransactionNode]) {
    let got: Vec<_> = nodes
        .iter()
        .map(|n| {
            (
                n.anchor_event.as_str(),
                n.entrypoint.0.as_str(),
                n.side_hint,
                n.members.iter().cloned().collect::<BTreeSet<_>>(),
                n.anchor_functions.iter().cloned().collect::<BTreeSet<_>>(),
            )
        })
        .collect();
    assert_eq!(got, expected_nodes());
}

/// Members are exactly the brute-force reachable set of the entrypoint.
pub fn check_reach(ast: &CanonicalAst, nodes: &[TransactionNode]) {
    let g = build_call_graph(ast);
    let all: Vec<FunctionId> = g.nodes.iter().cloned().collect();
    let reach = brute_force_reach(&all, &g.edges);
    for n in nodes {
        let members: BTreeSet<_> = n.members.iter().cloned().collect();
        assert_eq!(members, reach[&n.entrypoint], "{}", n.entrypoint);
        for a in &n.anchor_functions {
            assert!(members.contains(a));
        }
    }
}

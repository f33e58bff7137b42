//! Predicate catalog and reference evaluator.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use super::types::*;
use super::VerificationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredicateId {
    // composites
    Ps1,
    Ps2,
    Ps3,
    Pd1,
    Pd2,
    Pd3,
    // atomics
    ChainId,
    ZeroAddr,
    SupportedChains,
    Balance,
    NonceNext,
    NonceUnused,
    /// Address and function whitelist, one catalog row.
    Whitelist,
    ValidProof,
    AssetMap,
    LockedCorrect,
    UnlockedCorrect,
    MinExecutionBounded,
    ReferencePriceBounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Integrity,
    Authenticity,
    Safety,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Integrity => "integrity",
            Dimension::Authenticity => "authenticity",
            Dimension::Safety => "safety",
        }
    }
}

impl PredicateId {
    pub const COMPOSITES: [PredicateId; 6] = [
        PredicateId::Ps1,
        PredicateId::Ps2,
        PredicateId::Ps3,
        PredicateId::Pd1,
        PredicateId::Pd2,
        PredicateId::Pd3,
    ];

    pub const ATOMICS: [PredicateId; 13] = [
        PredicateId::ChainId,
        PredicateId::ZeroAddr,
        PredicateId::SupportedChains,
        PredicateId::Balance,
        PredicateId::NonceNext,
        PredicateId::NonceUnused,
        PredicateId::Whitelist,
        PredicateId::ValidProof,
        PredicateId::AssetMap,
        PredicateId::LockedCorrect,
        PredicateId::UnlockedCorrect,
        PredicateId::MinExecutionBounded,
        PredicateId::ReferencePriceBounded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PredicateId::Ps1 => "Ps1",
            PredicateId::Ps2 => "Ps2",
            PredicateId::Ps3 => "Ps3",
            PredicateId::Pd1 => "Pd1",
            PredicateId::Pd2 => "Pd2",
            PredicateId::Pd3 => "Pd3",
            PredicateId::ChainId => "ChainId",
            PredicateId::ZeroAddr => "ZeroAddr",
            PredicateId::SupportedChains => "SupportedChains",
            PredicateId::Balance => "Balance",
            PredicateId::NonceNext => "NonceNext",
            PredicateId::NonceUnused => "NonceUnused",
            PredicateId::Whitelist => "Whitelist",
            PredicateId::ValidProof => "ValidProof",
            PredicateId::AssetMap => "AssetMap",
            PredicateId::LockedCorrect => "LockedCorrect",
            PredicateId::UnlockedCorrect => "UnlockedCorrect",
            PredicateId::MinExecutionBounded => "MinExecutionBounded",
            PredicateId::ReferencePriceBounded => "ReferencePriceBounded",
        }
    }

    pub fn parse(s: &str) -> Option<PredicateId> {
        PredicateId::COMPOSITES
            .iter()
            .chain(&PredicateId::ATOMICS)
            .copied()
            .find(|p| p.as_str() == s)
    }

    pub fn is_composite(self) -> bool {
        PredicateId::COMPOSITES.contains(&self)
    }

    /// Side of a composite; atomics report `None` (see [`atomic_sides`]).
    pub fn side(self) -> Option<Side> {
        match self {
            PredicateId::Ps1 | PredicateId::Ps2 | PredicateId::Ps3 => Some(Side::Source),
            PredicateId::Pd1 | PredicateId::Pd2 | PredicateId::Pd3 => Some(Side::Destination),
            _ => None,
        }
    }

    pub fn dimension(self) -> Option<Dimension> {
        match self {
            PredicateId::Ps1 | PredicateId::Pd1 => Some(Dimension::Integrity),
            PredicateId::Ps2 | PredicateId::Pd2 => Some(Dimension::Authenticity),
            PredicateId::Ps3 | PredicateId::Pd3 => Some(Dimension::Safety),
            _ => None,
        }
    }

    /// Composites for one side, in integrity, authenticity, safety order.
    pub fn composites_for(side: Side) -> [PredicateId; 3] {
        match side {
            Side::Source => [PredicateId::Ps1, PredicateId::Ps2, PredicateId::Ps3],
            Side::Destination => [PredicateId::Pd1, PredicateId::Pd2, PredicateId::Pd3],
        }
    }
}

/// Sides on which an atomic predicate is meaningful.
pub fn atomic_sides(pid: PredicateId) -> &'static [Side] {
    use PredicateId::*;
    match pid {
        NonceNext | Balance | LockedCorrect | MinExecutionBounded | ReferencePriceBounded => &[Side::Source],
        NonceUnused | ValidProof | UnlockedCorrect => &[Side::Destination],
        _ if pid.is_composite() => match pid.side() {
            Some(Side::Source) => &[Side::Source],
            _ => &[Side::Destination],
        },
        _ => &[Side::Source, Side::Destination],
    }
}

/// One conjunct of a composite predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Conjunct {
    ReceiverNonZero,
    AmountPositive,
    DestinationNotCurrentChain,
    DestinationIsCurrentChain,
    TokenWhitelisted,
    NonceIsNext,
    DestinationChainSupported,
    NonceUnused,
    SourceChainSupported,
    ValidProof,
    ExtAddrWhitelisted,
    ExtFuncWhitelisted,
    LockedCorrect,
    MinExecutionBounded,
    ReferencePriceBounded,
    UnlockedCorrect,
}

/// Conjuncts of a composite, in definition order.
pub fn conjuncts_of(pid: PredicateId) -> &'static [Conjunct] {
    use Conjunct::*;
    match pid {
        PredicateId::Ps1 => &[ReceiverNonZero, AmountPositive, DestinationNotCurrentChain],
        PredicateId::Pd1 => &[ReceiverNonZero, AmountPositive, DestinationIsCurrentChain],
        PredicateId::Ps2 => &[TokenWhitelisted, NonceIsNext, DestinationChainSupported],
        PredicateId::Pd2 => &[NonceUnused, SourceChainSupported, ValidProof],
        PredicateId::Ps3 => &[
            ExtAddrWhitelisted,
            ExtFuncWhitelisted,
            LockedCorrect,
            MinExecutionBounded,
            ReferencePriceBounded,
        ],
        PredicateId::Pd3 => &[ExtAddrWhitelisted, ExtFuncWhitelisted, UnlockedCorrect],
        _ => &[],
    }
}

fn slippage_min_out(s: &SourcePropertySet, state: &ChainState) -> bool {
    state.swap.map_or(true, |x| x.actual_out >= s.slippage.min_out)
}

fn slippage_price(s: &SourcePropertySet, state: &ChainState) -> bool {
    state.swap.map_or(true, |x| {
        price_within(x.exec_price, s.slippage.reference_price, s.slippage.max_deviation_bps)
    })
}

fn locked_correct(state: &ChainState, sender: Address, token: Address, amount: u128) -> bool {
    state.delta(sender, token) == -BigInt::from(amount)
}

fn unlocked_correct(state: &ChainState, receiver: Address, token: Option<Address>, amount: u128) -> bool {
    token.is_some_and(|t| state.delta(receiver, t) == BigInt::from(amount))
}

/// Evaluate a single conjunct. Fails with `SideMismatch` when the conjunct
/// belongs to the other side.
pub fn eval_conjunct(c: Conjunct, props: SideProps<'_>, state: &ChainState) -> Result<bool, VerificationError> {
    use Conjunct::*;
    let m = props.message();
    let mismatch = || VerificationError::SideMismatch {
        predicate: format!("{c:?}"),
        side: props.side(),
    };
    Ok(match (c, props) {
        (ReceiverNonZero, _) => m.d_r != Address::ZERO,
        (AmountPositive, _) => m.a > 0,
        (DestinationNotCurrentChain, SideProps::Source(_)) => m.d_c != state.chain_id,
        (DestinationIsCurrentChain, SideProps::Destination(_)) => m.d_c == state.chain_id,
        (TokenWhitelisted, SideProps::Source(_)) => state.addr_whitelist.contains(&m.t),
        (NonceIsNext, SideProps::Source(_)) => m.n == state.nonce_next_of(m.s_s),
        (DestinationChainSupported, SideProps::Source(_)) => state.supported_chains.contains(&m.d_c),
        (NonceUnused, SideProps::Destination(_)) => state.nonce_unused(m.s_c, m.n),
        (SourceChainSupported, SideProps::Destination(_)) => state.supported_chains.contains(&m.s_c),
        (ValidProof, SideProps::Destination(d)) => {
            if d.signature.is_empty() {
                return Err(VerificationError::MissingSignature);
            }
            state.proof_verifier.verify(m, &d.signature)
        }
        (ExtAddrWhitelisted, SideProps::Source(s)) => state.addr_whitelist.contains(&s.s_ext_addr),
        (ExtAddrWhitelisted, SideProps::Destination(d)) => state.addr_whitelist.contains(&d.d_ext_addr),
        (ExtFuncWhitelisted, SideProps::Source(s)) => state.func_whitelist.contains(&s.s_ext_func),
        (ExtFuncWhitelisted, SideProps::Destination(d)) => state.func_whitelist.contains(&d.d_ext_func),
        (LockedCorrect, SideProps::Source(_)) => locked_correct(state, m.s_s, m.t, m.a),
        (MinExecutionBounded, SideProps::Source(s)) => slippage_min_out(s, state),
        (ReferencePriceBounded, SideProps::Source(s)) => slippage_price(s, state),
        (UnlockedCorrect, SideProps::Destination(_)) => {
            unlocked_correct(state, m.d_r, state.mapped_asset(m.d_c, m.t), m.a)
        }
        _ => return Err(mismatch()),
    })
}

/// Per-conjunct truth values of a composite.
pub fn eval_conjuncts(
    pid: PredicateId,
    props: SideProps<'_>,
    state: &ChainState,
) -> Result<Vec<(Conjunct, bool)>, VerificationError> {
    check_side(pid, props)?;
    conjuncts_of(pid)
        .iter()
        .map(|&c| eval_conjunct(c, props, state).map(|v| (c, v)))
        .collect()
}

fn check_side(pid: PredicateId, props: SideProps<'_>) -> Result<(), VerificationError> {
    if atomic_sides(pid).contains(&props.side()) {
        Ok(())
    } else {
        Err(VerificationError::SideMismatch {
            predicate: pid.as_str().to_string(),
            side: props.side(),
        })
    }
}

/// Evaluate any catalog predicate against a property set and chain state.
///
/// Atomic predicates are evaluated over the message fields they guard on
/// that side (e.g. `ChainId` is `d_c ≠ ChainId()` on the source side and
/// `d_c = ChainId()` on the destination side).
pub fn eval_predicate(pid: PredicateId, props: SideProps<'_>, state: &ChainState) -> Result<bool, VerificationError> {
    check_side(pid, props)?;
    if pid.is_composite() {
        let parts = eval_conjuncts(pid, props, state)?;
        return Ok(parts.iter().all(|(_, v)| *v));
    }
    let m = props.message();
    let src = matches!(props, SideProps::Source(_));
    let c = |c: Conjunct| eval_conjunct(c, props, state);
    Ok(match pid {
        PredicateId::ChainId if src => c(Conjunct::DestinationNotCurrentChain)?,
        PredicateId::ChainId => c(Conjunct::DestinationIsCurrentChain)?,
        PredicateId::ZeroAddr => c(Conjunct::ReceiverNonZero)?,
        PredicateId::SupportedChains if src => c(Conjunct::DestinationChainSupported)?,
        PredicateId::SupportedChains => c(Conjunct::SourceChainSupported)?,
        PredicateId::Balance => state.balance(m.s_s, m.t) >= m.a,
        PredicateId::NonceNext => c(Conjunct::NonceIsNext)?,
        PredicateId::NonceUnused => c(Conjunct::NonceUnused)?,
        PredicateId::Whitelist => c(Conjunct::ExtAddrWhitelisted)? && c(Conjunct::ExtFuncWhitelisted)?,
        PredicateId::ValidProof => c(Conjunct::ValidProof)?,
        PredicateId::AssetMap => state.mapped_asset(m.d_c, m.t).is_some(),
        PredicateId::LockedCorrect => c(Conjunct::LockedCorrect)?,
        PredicateId::UnlockedCorrect => c(Conjunct::UnlockedCorrect)?,
        PredicateId::MinExecutionBounded => c(Conjunct::MinExecutionBounded)?,
        PredicateId::ReferencePriceBounded => c(Conjunct::ReferencePriceBounded)?,
        _ => unreachable!("composites handled above"),
    })
}

/// The side's execution condition: conjunction of its three composites.
/// All three are evaluated so errors surface regardless of earlier results.
pub fn execution_condition(side: Side, props: SideProps<'_>, state: &ChainState) -> Result<bool, VerificationError> {
    if props.side() != side {
        return Err(VerificationError::SideMismatch {
            predicate: "execution_condition".into(),
            side: props.side(),
        });
    }
    let mut all = true;
    for pid in PredicateId::composites_for(side) {
        all &= eval_predicate(pid, props, state)?;
    }
    Ok(all)
}

/// Destination-side acceptance: when the authenticity composite holds the
/// message's `(source chain, nonce)` is consumed. Returns whether it was accepted.
pub fn relay_message(state: &mut ChainState, d: &DestPropertySet) -> Result<bool, VerificationError> {
    let ok = eval_predicate(PredicateId::Pd2, SideProps::Destination(d), state)?;
    if ok {
        state.used_nonces.insert((d.m.s_c, d.m.n));
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn msg() -> CrossChainMessage {
        CrossChainMessage {
            s_c: 1,
            s_s: Address::from_low_u8(1),
            d_c: 2,
            d_r: Address::from_low_u8(2),
            t: Address::from_low_u8(3),
            a: 5,
            n: 0,
        }
    }

    fn state(chain: u64) -> ChainState {
        ChainState::new(chain, Arc::new(KeyedHashVerifier::new(b"k".to_vec())))
    }

    fn src(m: CrossChainMessage) -> SourcePropertySet {
        SourcePropertySet {
            m,
            s_ext_addr: Address::from_low_u8(9),
            s_ext_func: Selector::from_low_u8(1),
            slippage: SlippageSpec::new(0, Price::new(1, 1).unwrap(), 100).unwrap(),
        }
    }

    #[test]
    fn ps1_rejects_zero_receiver_and_zero_amount() {
        let st = state(1);
        let zero_recv = src(CrossChainMessage { d_r: Address::ZERO, ..msg() });
        assert!(!eval_predicate(PredicateId::Ps1, SideProps::Source(&zero_recv), &st).unwrap());
        let zero_amt = src(CrossChainMessage { a: 0, ..msg() });
        assert!(!eval_predicate(PredicateId::Ps1, SideProps::Source(&zero_amt), &st).unwrap());
        assert!(eval_predicate(PredicateId::Ps1, SideProps::Source(&src(msg())), &st).unwrap());
    }

    #[test]
    fn pd1_holds_on_destination_chain() {
        let st = state(2);
        let d = DestPropertySet {
            m: msg(),
            d_ext_addr: Address::from_low_u8(9),
            d_ext_func: Selector::from_low_u8(1),
            signature: vec![],
        };
        assert!(eval_predicate(PredicateId::Pd1, SideProps::Destination(&d), &st).unwrap());
    }

    #[test]
    fn side_mismatch_and_missing_signature() {
        let st = state(2);
        let s = src(msg());
        assert!(matches!(
            eval_predicate(PredicateId::Pd1, SideProps::Source(&s), &st),
            Err(VerificationError::SideMismatch { .. })
        ));
        assert!(matches!(
            eval_predicate(PredicateId::ValidProof, SideProps::Source(&s), &st),
            Err(VerificationError::SideMismatch { .. })
        ));
        let d = DestPropertySet {
            m: msg(),
            d_ext_addr: Address::ZERO,
            d_ext_func: Selector::default(),
            signature: vec![],
        };
        assert!(matches!(
            eval_predicate(PredicateId::Pd2, SideProps::Destination(&d), &st),
            Err(VerificationError::MissingSignature)
        ));
    }

    #[test]
    fn conjunct_counts() {
        let counts: Vec<usize> = PredicateId::COMPOSITES.iter().map(|p| conjuncts_of(*p).len()).collect();
        assert_eq!(counts, [3, 3, 5, 3, 3, 3]);
    }

    #[test]
    fn locked_correct_uses_balance_delta() {
        let mut st = state(1);
        let m = msg();
        st.balances.insert((m.s_s, m.t), 100);
        st.post_balances.insert((m.s_s, m.t), 95);
        let s = src(m);
        assert!(eval_predicate(PredicateId::LockedCorrect, SideProps::Source(&s), &st).unwrap());
        st.post_balances.insert((m.s_s, m.t), 96);
        assert!(!eval_predicate(PredicateId::LockedCorrect, SideProps::Source(&s), &st).unwrap());
    }

    #[test]
    fn unlocked_correct_uses_mapped_asset_and_receiver() {
        let mut st = state(2);
        let m = msg();
        let mapped = Address::from_low_u8(30);
        let d = DestPropertySet {
            m,
            d_ext_addr: Address::ZERO,
            d_ext_func: Selector::default(),
            signature: vec![1],
        };
        st.post_balances.insert((m.d_r, mapped), 5);
        assert!(!eval_predicate(PredicateId::UnlockedCorrect, SideProps::Destination(&d), &st).unwrap());
        st.asset_map.insert((m.d_c, m.t), mapped);
        assert!(eval_predicate(PredicateId::UnlockedCorrect, SideProps::Destination(&d), &st).unwrap());
    }
}

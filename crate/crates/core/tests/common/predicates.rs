//! Predicate oracle: enumerated states, an independent evaluator built
//! from raw field values, conjunct mutation and relay replay.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xchain_audit_core::verification::*;

pub const CHAIN: u64 = 1;
pub const KEY: &[u8] = b"relayer-key";

pub fn a(n: u8) -> Address {
    Address::from_low_u8(n)
}

pub fn verifier() -> KeyedHashVerifier {
    KeyedHashVerifier::new(KEY.to_vec())
}

pub fn base_state(chain: u64) -> ChainState {
    ChainState::new(chain, Arc::new(verifier()))
}

/// Raw field values one enumerated source case is built from.
#[derive(Clone, Copy, Debug)]
pub struct SrcCase {
    pub d_r: Address,
    pub amount: u128,
    pub d_c: u64,
    pub token: Address,
    pub nonce: u64,
    pub ext_addr: Address,
    pub ext_func: Selector,
    pub post: u128,
    pub swap: Option<(u128, Price)>,
}

pub const SENDER: u8 = 10;
pub const WL_TOKEN: u8 = 20;
pub const WL_EXT: u8 = 30;
pub const PRE: u128 = 10;
pub const MIN_OUT: u128 = 5;

pub fn src_cases() -> Vec<SrcCase> {
    let mut out = Vec::new();
    let swaps = [
        None,
        Some((4, Price { num: 1, den: 1 })),
        Some((6, Price { num: 1, den: 1 })),
        Some((6, Price { num: 2, den: 1 })),
        Some((6, Price { num: 1001, den: 1000 })),
    ];
    for d_r in [Address::ZERO, a(1)] {
        for amount in [0u128, 1, 5] {
            for d_c in [1u64, 2, 3] {
                for token in [a(WL_TOKEN), a(21)] {
                    for nonce in [0u64, 1, 2] {
                        for ext_addr in [a(WL_EXT), a(31)] {
                            for ext_func in [Selector::from_low_u8(1), Selector::from_low_u8(2)] {
                                for post in [PRE - amount, PRE - 1, PRE] {
                                    for swap in swaps {
                                        out.push(SrcCase {
                                            d_r,
                                            amount,
                                            d_c,
                                            token,
                                            nonce,
                                            ext_addr,
                                            ext_func,
                                            post,
                                            swap,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn src_build(c: &SrcCase) -> (SourcePropertySet, ChainState) {
    let m = CrossChainMessage {
        s_c: CHAIN,
        s_s: a(SENDER),
        d_c: c.d_c,
        d_r: c.d_r,
        t: c.token,
        a: c.amount,
        n: c.nonce,
    };
    let props = SourcePropertySet {
        m,
        s_ext_addr: c.ext_addr,
        s_ext_func: c.ext_func,
        slippage: SlippageSpec::new(MIN_OUT, Price::new(1, 1).unwrap(), 100).unwrap(),
    };
    let mut st = base_state(CHAIN);
    st.supported_chains.insert(2);
    st.addr_whitelist.extend([a(WL_TOKEN), a(WL_EXT)]);
    st.func_whitelist.insert(Selector::from_low_u8(1));
    st.nonce_next.insert(a(SENDER), 1);
    st.balances.insert((a(SENDER), c.token), PRE);
    st.post_balances.insert((a(SENDER), c.token), c.post);
    st.swap = c.swap.map(|(actual_out, exec_price)| SwapExecution { actual_out, exec_price });
    (props, st)
}

/// Source composites straight from their defining conjunctions, using raw
/// case values only.
pub fn src_oracle(c: &SrcCase) -> [bool; 3] {
    let ps1 = c.d_r != Address::ZERO && c.amount > 0 && c.d_c != CHAIN;
    let ps2 = c.token == a(WL_TOKEN) && c.nonce == 1 && c.d_c == 2;
    let whitelisted = c.ext_addr == a(WL_EXT) && c.ext_func == Selector::from_low_u8(1);
    let locked = c.post as i128 - PRE as i128 == -(c.amount as i128);
    let (min_ok, price_ok) = match c.swap {
        None => (true, true),
        Some((out, p)) => {
            let dev = (p.num as f64 / p.den as f64 - 1.0).abs();
            (out >= MIN_OUT, dev <= 100.0 / 10_000.0 + 1e-12)
        }
    };
    [ps1, ps2, whitelisted && locked && min_ok && price_ok]
}

#[derive(Clone, Copy, Debug)]
pub struct DstCase {
    pub d_r: Address,
    pub amount: u128,
    pub d_c: u64,
    pub s_c: u64,
    pub nonce: u64,
    pub used: bool,
    pub signed: bool,
    pub ext_addr: Address,
    pub ext_func: Selector,
    pub mapped: bool,
    pub post: u128,
}

pub const DST_CHAIN: u64 = 2;
pub const SRC_OK: u64 = 7;
pub const MAPPED: u8 = 40;

pub fn dst_cases() -> Vec<DstCase> {
    let mut out = Vec::new();
    for d_r in [Address::ZERO, a(1)] {
        for amount in [0u128, 1, 5] {
            for d_c in [1u64, 2, 3] {
                for s_c in [SRC_OK, 8] {
                    for nonce in [0u64, 1] {
                        for used in [false, true] {
                            for signed in [false, true] {
                                for ext_addr in [a(WL_EXT), a(31)] {
                                    for ext_func in [Selector::from_low_u8(1), Selector::from_low_u8(2)] {
                                        for mapped in [false, true] {
                                            for post in [amount, amount + 1, 0] {
                                                out.push(DstCase {
                                                    d_r,
                                                    amount,
                                                    d_c,
                                                    s_c,
                                                    nonce,
                                                    used,
                                                    signed,
                                                    ext_addr,
                                                    ext_func,
                                                    mapped,
                                                    post,
                                                });
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn dst_build(c: &DstCase) -> (DestPropertySet, ChainState) {
    let m = CrossChainMessage {
        s_c: c.s_c,
        s_s: a(SENDER),
        d_c: c.d_c,
        d_r: c.d_r,
        t: a(WL_TOKEN),
        a: c.amount,
        n: c.nonce,
    };
    let signature = if c.signed { verifier().sign(&m) } else { vec![0xab; 32] };
    let props = DestPropertySet {
        m,
        d_ext_addr: c.ext_addr,
        d_ext_func: c.ext_func,
        signature,
    };
    let mut st = base_state(DST_CHAIN);
    st.supported_chains.insert(SRC_OK);
    st.addr_whitelist.insert(a(WL_EXT));
    st.func_whitelist.insert(Selector::from_low_u8(1));
    if c.used {
        st.used_nonces.insert((c.s_c, c.nonce));
    }
    if c.mapped {
        st.asset_map.insert((c.d_c, a(WL_TOKEN)), a(MAPPED));
    }
    st.post_balances.insert((c.d_r, a(MAPPED)), c.post);
    (props, st)
}

pub fn dst_oracle(c: &DstCase) -> [bool; 3] {
    let pd1 = c.d_r != Address::ZERO && c.amount > 0 && c.d_c == DST_CHAIN;
    let pd2 = !c.used && c.s_c == SRC_OK && c.signed;
    let unlocked = c.mapped && c.post == c.amount;
    let pd3 = c.ext_addr == a(WL_EXT) && c.ext_func == Selector::from_low_u8(1) && unlocked;
    [pd1, pd2, pd3]
}

/// Every composite against the raw-field oracle; returns the number of states.
pub fn check_truth_tables() -> usize {
    let src = src_cases();
    let dst = dst_cases();
    assert!(src.len() + dst.len() >= 10_000, "{} states", src.len() + dst.len());
    let mut truths = [0usize; 6];
    for c in &src {
        let (p, st) = src_build(c);
        let want = src_oracle(c);
        for (i, pid) in PredicateId::composites_for(Side::Source).into_iter().enumerate() {
            let got = eval_predicate(pid, SideProps::Source(&p), &st).unwrap();
            assert_eq!(got, want[i], "{pid:?} on {c:?}");
            truths[i] += usize::from(got);
        }
        assert_eq!(
            execution_condition(Side::Source, SideProps::Source(&p), &st).unwrap(),
            want.iter().all(|b| *b)
        );
    }
    for c in &dst {
        let (p, st) = dst_build(c);
        let want = dst_oracle(c);
        for (i, pid) in PredicateId::composites_for(Side::Destination).into_iter().enumerate() {
            let got = eval_predicate(pid, SideProps::Destination(&p), &st).unwrap();
            assert_eq!(got, want[i], "{pid:?} on {c:?}");
            truths[3 + i] += usize::from(got);
        }
    }
    // every composite is exercised both ways
    for (i, n) in truths.iter().enumerate() {
        assert!(*n > 0, "composite {i} never true");
    }
    src.len() + dst.len()
}

pub fn mutate(c: Conjunct, side: &mut MutTarget<'_>) {
    use Conjunct::*;
    match side {
        MutTarget::Src(p, st) => match c {
            ReceiverNonZero => p.m.d_r = Address::ZERO,
            AmountPositive => p.m.a = 0,
            DestinationNotCurrentChain => p.m.d_c = st.chain_id,
            TokenWhitelisted => {
                st.addr_whitelist.remove(&p.m.t);
            }
            NonceIsNext => {
                *st.nonce_next.entry(p.m.s_s).or_default() += 1;
            }
            DestinationChainSupported => {
                st.supported_chains.remove(&p.m.d_c);
            }
            ExtAddrWhitelisted => {
                st.addr_whitelist.remove(&p.s_ext_addr);
            }
            ExtFuncWhitelisted => {
                st.func_whitelist.remove(&p.s_ext_func);
            }
            LockedCorrect => {
                *st.post_balances.get_mut(&(p.m.s_s, p.m.t)).unwrap() += 1;
            }
            MinExecutionBounded => {
                let s = st.swap.get_or_insert(SwapExecution {
                    actual_out: 0,
                    exec_price: p.slippage.reference_price,
                });
                s.actual_out = p.slippage.min_out - 1;
            }
            ReferencePriceBounded => {
                let s = st.swap.get_or_insert(SwapExecution {
                    actual_out: p.slippage.min_out,
                    exec_price: p.slippage.reference_price,
                });
                s.exec_price = Price::new(3, 1).unwrap();
            }
            other => panic!("{other:?} is not a source conjunct"),
        },
        MutTarget::Dst(p, st) => match c {
            ReceiverNonZero => p.m.d_r = Address::ZERO,
            AmountPositive => p.m.a = 0,
            DestinationIsCurrentChain => p.m.d_c = st.chain_id + 1,
            NonceUnused => {
                st.used_nonces.insert((p.m.s_c, p.m.n));
            }
            SourceChainSupported => {
                st.supported_chains.remove(&p.m.s_c);
            }
            ValidProof => p.signature[0] ^= 1,
            ExtAddrWhitelisted => {
                st.addr_whitelist.remove(&p.d_ext_addr);
            }
            ExtFuncWhitelisted => {
                st.func_whitelist.remove(&p.d_ext_func);
            }
            UnlockedCorrect => {
                let asset = st.mapped_asset(p.m.d_c, p.m.t).unwrap();
                *st.post_balances.entry((p.m.d_r, asset)).or_default() += 1;
            }
            other => panic!("{other:?} is not a destination conjunct"),
        },
    }
}

pub enum MutTarget<'a> {
    Src(&'a mut SourcePropertySet, &'a mut ChainState),
    Dst(&'a mut DestPropertySet, &'a mut ChainState),
}

/// Falsifying one conjunct of a true composite falsifies exactly that
/// conjunct and the composite; returns the number of mutations.
pub fn check_single_conjunct_mutation() -> usize {
    let mut checked = 0;
    for c in src_cases() {
        let (p0, st0) = src_build(&c);
        for pid in PredicateId::composites_for(Side::Source) {
            if !eval_predicate(pid, SideProps::Source(&p0), &st0).unwrap() {
                continue;
            }
            for &conj in conjuncts_of(pid) {
                let (mut p, mut st) = (p0, st0.clone());
                mutate(conj, &mut MutTarget::Src(&mut p, &mut st));
                let parts = eval_conjuncts(pid, SideProps::Source(&p), &st).unwrap();
                let falsified: Vec<Conjunct> = parts.iter().filter(|(_, v)| !v).map(|(c, _)| *c).collect();
                assert_eq!(falsified, [conj], "{pid:?} mutating {conj:?} on {c:?}");
                assert!(!eval_predicate(pid, SideProps::Source(&p), &st).unwrap());
                checked += 1;
            }
        }
    }
    for c in dst_cases() {
        let (p0, st0) = dst_build(&c);
        for pid in PredicateId::composites_for(Side::Destination) {
            if !eval_predicate(pid, SideProps::Destination(&p0), &st0).unwrap() {
                continue;
            }
            for &conj in conjuncts_of(pid) {
                let (mut p, mut st) = (p0.clone(), st0.clone());
                mutate(conj, &mut MutTarget::Dst(&mut p, &mut st));
                let parts = eval_conjuncts(pid, SideProps::Destination(&p), &st).unwrap();
                let falsified: Vec<Conjunct> = parts.iter().filter(|(_, v)| !v).map(|(c, _)| *c).collect();
                assert_eq!(falsified, [conj], "{pid:?} mutating {conj:?} on {c:?}");
                assert!(!eval_predicate(pid, SideProps::Destination(&p), &st).unwrap());
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "only {checked} mutations");
    checked
}

/// 2000 random relays over 80 (chain, nonce) keys; returns accepted relays.
pub fn check_replay() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut st = base_state(DST_CHAIN);
    st.supported_chains.extend([SRC_OK, 9]);
    let mut accepted = BTreeSet::new();
    let mut sent = 0;
    for _ in 0..2_000 {
        let m = CrossChainMessage {
            s_c: [SRC_OK, 9][rng.gen_range(0..2)],
            s_s: a(SENDER),
            d_c: DST_CHAIN,
            d_r: a(1),
            t: a(WL_TOKEN),
            a: rng.gen_range(1..4),
            n: rng.gen_range(0..40),
        };
        let d = DestPropertySet {
            m,
            d_ext_addr: a(WL_EXT),
            d_ext_func: Selector::from_low_u8(1),
            signature: verifier().sign(&m),
        };
        sent += 1;
        if relay_message(&mut st, &d).unwrap() {
            assert!(accepted.insert((m.s_c, m.n)), "({}, {}) accepted twice", m.s_c, m.n);
        }
    }
    // 80 distinct keys; 2000 draws cover them all
    assert_eq!(sent, 2_000);
    assert_eq!(accepted.len(), 80);
    assert_eq!(st.used_nonces.len(), 80);
    accepted.len()
}

pub fn check_forged_signature() {
    let mut st = base_state(DST_CHAIN);
    st.supported_chains.insert(SRC_OK);
    let m = CrossChainMessage {
        s_c: SRC_OK,
        s_s: a(SENDER),
        d_c: DST_CHAIN,
        d_r: a(1),
        t: a(WL_TOKEN),
        a: 1,
        n: 3,
    };
    let mut d = DestPropertySet {
        m,
        d_ext_addr: a(WL_EXT),
        d_ext_func: Selector::from_low_u8(1),
        signature: KeyedHashVerifier::new(b"other".to_vec()).sign(&m),
    };
    assert!(!relay_message(&mut st, &d).unwrap());
    assert!(st.used_nonces.is_empty());
    d.signature = verifier().sign(&m);
    assert!(relay_message(&mut st, &d).unwrap());
    assert!(!relay_message(&mut st, &d).unwrap());
}

//! Message, property-set and chain-state value types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::VerificationError;

macro_rules! hex_bytes {
    ($name:ident, $n:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $n]);

        impl $name {
            pub fn from_hex(s: &str) -> Result<Self, VerificationError> {
                let raw = s.strip_prefix("0x").unwrap_or(s);
                let bytes = hex::decode(raw).map_err(|e| VerificationError::InvalidHex {
                    value: s.to_string(),
                    reason: e.to_string(),
                })?;
                let arr: [u8; $n] = bytes.try_into().map_err(|_| VerificationError::InvalidHex {
                    value: s.to_string(),
                    reason: format!("expected {} bytes", $n),
                })?;
                Ok($name(arr))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(self, f)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_bytes!(Address, 20);
hex_bytes!(Selector, 4);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    /// Address whose last byte is `n`; handy for enumerated test states.
    pub fn from_low_u8(n: u8) -> Address {
        let mut a = [0u8; 20];
        a[19] = n;
        Address(a)
    }
}

impl Selector {
    pub fn from_low_u8(n: u8) -> Selector {
        Selector([0, 0, 0, n])
    }
}

/// The message carried between chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrossChainMessage {
    /// Source chain id.
    pub s_c: u64,
    /// Sender.
    pub s_s: Address,
    /// Destination chain id.
    pub d_c: u64,
    /// Receiver.
    pub d_r: Address,
    /// Token.
    pub t: Address,
    /// Amount in base units.
    pub a: u128,
    pub n: u64,
}

impl CrossChainMessage {
    /// Fixed-width big-endian encoding of all seven fields.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 20 + 8 + 20 + 20 + 16 + 8);
        out.extend_from_slice(&self.s_c.to_be_bytes());
        out.extend_from_slice(&self.s_s.0);
        out.extend_from_slice(&self.d_c.to_be_bytes());
        out.extend_from_slice(&self.d_r.0);
        out.extend_from_slice(&self.t.0);
        out.extend_from_slice(&self.a.to_be_bytes());
        out.extend_from_slice(&self.n.to_be_bytes());
        out
    }
}

/// Exact non-negative rational `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Price {
    pub num: u128,
    pub den: u128,
}

impl Price {
    pub fn new(num: u128, den: u128) -> Result<Price, VerificationError> {
        if den == 0 {
            return Err(VerificationError::InvalidProperty("price denominator is zero".into()));
        }
        Ok(Price { num, den })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlippageSpec {
    pub min_out: u128,
    pub reference_price: Price,
    pub max_deviation_bps: u32,
}

impl SlippageSpec {
    pub fn new(min_out: u128, reference_price: Price, max_deviation_bps: u32) -> Result<Self, VerificationError> {
        let s = SlippageSpec {
            min_out,
            reference_price,
            max_deviation_bps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), VerificationError> {
        if self.max_deviation_bps > 10_000 {
            return Err(VerificationError::InvalidProperty(format!(
                "max_deviation_bps {} outside [0, 10000]",
                self.max_deviation_bps
            )));
        }
        if self.reference_price.den == 0 {
            return Err(VerificationError::InvalidProperty("price denominator is zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePropertySet {
    pub m: CrossChainMessage,
    pub s_ext_addr: Address,
    pub s_ext_func: Selector,
    pub slippage: SlippageSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DestPropertySet {
    pub m: CrossChainMessage,
    pub d_ext_addr: Address,
    pub d_ext_func: Selector,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Destination,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Source => "source",
            Side::Destination => "destination",
        }
    }
}

/// Borrowed view of either side's property set.
#[derive(Debug, Clone, Copy)]
pub enum SideProps<'a> {
    Source(&'a SourcePropertySet),
    Destination(&'a DestPropertySet),
}

impl SideProps<'_> {
    pub fn side(&self) -> Side {
        match self {
            SideProps::Source(_) => Side::Source,
            SideProps::Destination(_) => Side::Destination,
        }
    }

    pub fn message(&self) -> &CrossChainMessage {
        match self {
            SideProps::Source(p) => &p.m,
            SideProps::Destination(p) => &p.m,
        }
    }
}

/// Checks a message attestation.
pub trait ProofVerifier: Send + Sync {
    fn verify(&self, m: &CrossChainMessage, signature: &[u8]) -> bool;
}

/// Reference verifier: `signature == sha256(key || canonical_bytes(m))`.
#[derive(Debug, Clone)]
pub struct KeyedHashVerifier {
    key: Vec<u8>,
}

impl KeyedHashVerifier {
    pub fn new(key: impl Into<Vec<u8>>) -> Self {
        KeyedHashVerifier { key: key.into() }
    }

    pub fn sign(&self, m: &CrossChainMessage) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(&self.key);
        h.update(m.canonical_bytes());
        h.finalize().to_vec()
    }
}

impl ProofVerifier for KeyedHashVerifier {
    fn verify(&self, m: &CrossChainMessage, signature: &[u8]) -> bool {
        self.sign(m) == signature
    }
}

/// Outcome of a swap performed as part of the source-side transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapExecution {
    pub actual_out: u128,
    pub exec_price: Price,
}

/// Explicit chain-state model the predicates are evaluated against.
///
/// Missing map keys read as defaults: set membership false, balance 0,
/// next nonce 0, asset mapping absent.
#[derive(Clone)]
pub struct ChainState {
    pub chain_id: u64,
    pub supported_chains: BTreeSet<u64>,
    pub addr_whitelist: BTreeSet<Address>,
    pub func_whitelist: BTreeSet<Selector>,
    pub nonce_next: BTreeMap<Address, u64>,
    pub used_nonces: BTreeSet<(u64, u64)>,
    /// Balances before the transfer, keyed by (holder, token).
    pub balances: BTreeMap<(Address, Address), u128>,
    /// Balances after the transfer.
    pub post_balances: BTreeMap<(Address, Address), u128>,
    pub asset_map: BTreeMap<(u64, Address), Address>,
    /// `None` when no swap took place; slippage bounds then hold trivially.
    pub swap: Option<SwapExecution>,
    pub proof_verifier: Arc<dyn ProofVerifier>,
}

impl fmt::Debug for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainState")
            .field("chain_id", &self.chain_id)
            .field("supported_chains", &self.supported_chains)
            .field("addr_whitelist", &self.addr_whitelist)
            .field("func_whitelist", &self.func_whitelist)
            .field("nonce_next", &self.nonce_next)
            .field("used_nonces", &self.used_nonces)
            .field("balances", &self.balances)
            .field("post_balances", &self.post_balances)
            .field("asset_map", &self.asset_map)
            .field("swap", &self.swap)
            .finish_non_exhaustive()
    }
}

impl ChainState {
    pub fn new(chain_id: u64, proof_verifier: Arc<dyn ProofVerifier>) -> Self {
        ChainState {
            chain_id,
            supported_chains: BTreeSet::new(),
            addr_whitelist: BTreeSet::new(),
            func_whitelist: BTreeSet::new(),
            nonce_next: BTreeMap::new(),
            used_nonces: BTreeSet::new(),
            balances: BTreeMap::new(),
            post_balances: BTreeMap::new(),
            asset_map: BTreeMap::new(),
            swap: None,
            proof_verifier,
        }
    }

    pub fn balance(&self, holder: Address, token: Address) -> u128 {
        self.balances.get(&(holder, token)).copied().unwrap_or(0)
    }

    pub fn post_balance(&self, holder: Address, token: Address) -> u128 {
        self.post_balances.get(&(holder, token)).copied().unwrap_or(0)
    }

    /// post − pre for (holder, token).
    pub fn delta(&self, holder: Address, token: Address) -> BigInt {
        BigInt::from(self.post_balance(holder, token)) - BigInt::from(self.balance(holder, token))
    }

    pub fn nonce_next_of(&self, sender: Address) -> u64 {
        self.nonce_next.get(&sender).copied().unwrap_or(0)
    }

    pub fn nonce_unused(&self, chain: u64, nonce: u64) -> bool {
        !self.used_nonces.contains(&(chain, nonce))
    }

    pub fn mapped_asset(&self, chain: u64, token: Address) -> Option<Address> {
        self.asset_map.get(&(chain, token)).copied()
    }
}

/// `|exec − reference| / reference ≤ bps / 10000`, computed exactly.
/// A zero reference price never satisfies the bound.
pub fn price_within(exec: Price, reference: Price, max_deviation_bps: u32) -> bool {
    if reference.num == 0 || reference.den == 0 || exec.den == 0 {
        return false;
    }
    let en = BigUint::from(exec.num);
    let ed = BigUint::from(exec.den);
    let rn = BigUint::from(reference.num);
    let rd = BigUint::from(reference.den);
    let lhs_a = &en * &rd;
    let lhs_b = &rn * &ed;
    let diff = if lhs_a >= lhs_b { lhs_a - lhs_b } else { lhs_b - lhs_a };
    diff * BigUint::from(10_000u32) <= BigUint::from(max_deviation_bps) * ed * rn
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        let a = Address::from_low_u8(7);
        assert_eq!(Address::from_hex(&a.to_string()).unwrap(), a);
        assert!(Address::from_hex("0x12").is_err());
        let s: Selector = serde_json::from_str("\"0xa9059cbb\"").unwrap();
        assert_eq!(s.0, [0xa9, 0x05, 0x9c, 0xbb]);
    }

    #[test]
    fn price_deviation_is_exact() {
        let reference = Price::new(2, 1).unwrap();
        // 2.02 vs 2: deviation exactly 1%
        assert!(price_within(Price::new(202, 100).unwrap(), reference, 100));
        assert!(!price_within(Price::new(203, 100).unwrap(), reference, 100));
        assert!(price_within(Price::new(198, 100).unwrap(), reference, 100));
        assert!(!price_within(Price::new(1, 1).unwrap(), Price { num: 0, den: 1 }, 10_000));
    }

    #[test]
    fn slippage_bps_range() {
        assert!(SlippageSpec::new(1, Price::new(1, 1).unwrap(), 10_001).is_err());
        assert!(SlippageSpec::new(1, Price::new(1, 1).unwrap(), 10_000).is_ok());
    }

    #[test]
    fn keyed_hash_verifier() {
        let v = KeyedHashVerifier::new(b"k".to_vec());
        let m = CrossChainMessage {
            s_c: 1,
            s_s: Address::from_low_u8(1),
            d_c: 2,
            d_r: Address::from_low_u8(2),
            t: Address::from_low_u8(3),
            a: 10,
            n: 0,
        };
        let sig = v.sign(&m);
        assert!(v.verify(&m, &sig));
        assert!(!v.verify(&CrossChainMessage { a: 11, ..m }, &sig));
    }
}

//! Core domain types and the pool-state algebra.
//!
//! A pool's state at a cut `t` maps every address that deposited into or
//! withdrew from the pool to its signed balance, always a multiple of the
//! pool denomination. Linking two addresses merges their balances; folding
//! a whole link set gives the simplified state from which the simplified
//! anonymity set is read.
//!
//! Cuts are block heights and are inclusive: an event at exactly height `t`
//! counts towards the state at `t`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::unionfind::UnionFind;

/// A 20-byte account identifier, rendered as `0x` + 40 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address([u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    pub const fn from_bytes(bytes: [u8; 20]) -> Self {
        Address(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let digits = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .unwrap_or(s);
        if digits.len() != 40 {
            return Err(format!("expected 40 hex digits, found {}", digits.len()));
        }
        let mut bytes = [0u8; 20];
        hex::decode_to_slice(digits, &mut bytes).map_err(|e| e.to_string())?;
        Ok(Address(bytes))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A non-negative amount in the coin's smallest unit.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Amount(pub u128);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub fn value(self) -> u128 {
        self.0
    }

    /// `self` multiplied by `10^decimals`, e.g. whole coins to base units.
    pub fn scaled(units: u128, decimals: u32) -> Option<Amount> {
        10u128
            .checked_pow(decimals)
            .and_then(|s| units.checked_mul(s))
            .map(Amount)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Amount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("`{s}` is not a decimal integer"));
        }
        s.parse::<u128>().map(Amount).map_err(|e| e.to_string())
    }
}

impl std::ops::Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        Amount(iter.map(|a| a.0).sum())
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Logical timestamp: block height, then transaction index, then log index.
#[derive(
    Clone, Copy, Default, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct BlockNumber {
    pub height: u64,
    pub tx_index: u32,
    pub log_index: u32,
}

impl BlockNumber {
    pub const fn at(height: u64) -> Self {
        BlockNumber {
            height,
            tx_index: 0,
            log_index: 0,
        }
    }

    pub const fn new(height: u64, tx_index: u32, log_index: u32) -> Self {
        BlockNumber {
            height,
            tx_index,
            log_index,
        }
    }

    /// Whether this timestamp falls at or before the cut height `t`.
    pub fn within(&self, t: u64) -> bool {
        self.height <= t
    }
}

impl fmt::Display for BlockNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.height, self.tx_index, self.log_index)
    }
}

/// One movement of value between two addresses.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transfer {
    pub bn: BlockNumber,
    pub from: Address,
    pub to: Address,
    pub amt: Amount,
    pub coin: String,
    /// Contract-triggered transfer; carried through but not treated specially.
    #[serde(default)]
    pub internal: bool,
}

impl Transfer {
    pub fn new(bn: BlockNumber, from: Address, to: Address, amt: Amount, coin: &str) -> Self {
        Transfer {
            bn,
            from,
            to,
            amt,
            coin: coin.to_string(),
            internal: false,
        }
    }
}

/// A chain of transfers where each hop starts where the previous one ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flow {
    transfers: Vec<Transfer>,
}

impl Flow {
    pub fn new(transfers: Vec<Transfer>) -> Result<Self> {
        for pair in transfers.windows(2) {
            if pair[0].to != pair[1].from {
                return Err(Error::input(format!(
                    "flow breaks between {} and {}",
                    pair[0].to, pair[1].from
                )));
            }
            if pair[0].bn > pair[1].bn {
                return Err(Error::input("flow hops must be time-ordered"));
            }
        }
        Ok(Flow { transfers })
    }

    pub fn transfers(&self) -> &[Transfer] {
        &self.transfers
    }
}

/// A fixed-denomination pool.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolConfig {
    pub pool_id: String,
    pub coin: String,
    pub denomination: Amount,
    pub am_weight: u64,
    /// The pool's contract account, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract: Option<Address>,
}

impl PoolConfig {
    pub fn new(pool_id: &str, coin: &str, denomination: Amount, am_weight: u64) -> Result<Self> {
        let pool = PoolConfig {
            pool_id: pool_id.to_string(),
            coin: coin.to_string(),
            denomination,
            am_weight,
            contract: None,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn with_contract(mut self, contract: Address) -> Self {
        self.contract = Some(contract);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.denomination.0 == 0 {
            return Err(Error::input(format!(
                "pool {}: denomination must be positive",
                self.pool_id
            )));
        }
        if self.am_weight == 0 {
            return Err(Error::input(format!(
                "pool {}: anonymity-mining weight must be positive",
                self.pool_id
            )));
        }
        Ok(())
    }

    /// Denomination as a signed balance unit.
    pub fn unit(&self) -> i128 {
        self.denomination.0 as i128
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Deposit,
    Withdrawal,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Deposit => "deposit",
            EventKind::Withdrawal => "withdrawal",
        })
    }
}

/// A deposit into or a withdrawal from a pool.
///
/// `actor` is the depositor for deposits and the recipient for withdrawals;
/// `tx_sender` signed the transaction (the relayer, when one was used).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolEvent {
    pub pool_id: String,
    pub kind: EventKind,
    pub bn: BlockNumber,
    pub actor: Address,
    pub tx_sender: Address,
    #[serde(default)]
    pub relayer: Option<Address>,
}

impl PoolEvent {
    pub fn deposit(pool_id: &str, bn: BlockNumber, depositor: Address) -> Self {
        PoolEvent {
            pool_id: pool_id.to_string(),
            kind: EventKind::Deposit,
            bn,
            actor: depositor,
            tx_sender: depositor,
            relayer: None,
        }
    }

    /// A withdrawal signed by the recipient itself.
    pub fn withdrawal(pool_id: &str, bn: BlockNumber, recipient: Address) -> Self {
        Self::withdrawal_sent_by(pool_id, bn, recipient, recipient)
    }

    /// A withdrawal signed by an arbitrary non-relayer account.
    pub fn withdrawal_sent_by(
        pool_id: &str,
        bn: BlockNumber,
        recipient: Address,
        sender: Address,
    ) -> Self {
        PoolEvent {
            pool_id: pool_id.to_string(),
            kind: EventKind::Withdrawal,
            bn,
            actor: recipient,
            tx_sender: sender,
            relayer: None,
        }
    }

    pub fn relayed_withdrawal(
        pool_id: &str,
        bn: BlockNumber,
        recipient: Address,
        relayer: Address,
    ) -> Self {
        PoolEvent {
            pool_id: pool_id.to_string(),
            kind: EventKind::Withdrawal,
            bn,
            actor: recipient,
            tx_sender: relayer,
            relayer: Some(relayer),
        }
    }

    pub fn is_deposit(&self) -> bool {
        self.kind == EventKind::Deposit
    }

    pub fn is_withdrawal(&self) -> bool {
        self.kind == EventKind::Withdrawal
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.relayer) {
            (EventKind::Deposit, Some(_)) => Err(Error::input(format!(
                "deposit at {} carries a relayer",
                self.bn
            ))),
            (EventKind::Withdrawal, Some(r)) if r != self.tx_sender => Err(Error::input(format!(
                "relayed withdrawal at {} must be sent by its relayer",
                self.bn
            ))),
            _ => Ok(()),
        }
    }
}

/// Where a pool state's balances come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Replayed from observable events.
    #[default]
    Observed,
    /// Resolved against known note ownership (synthetic traces only).
    GroundTruth,
}

/// Address balances of one pool at a cut.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub entries: BTreeMap<Address, i128>,
    pub as_of: u64,
    #[serde(default)]
    pub provenance: Provenance,
}

impl PoolState {
    pub fn new(as_of: u64) -> Self {
        PoolState {
            entries: BTreeMap::new(),
            as_of,
            provenance: Provenance::Observed,
        }
    }

    pub fn balance(&self, address: &Address) -> i128 {
        self.entries.get(address).copied().unwrap_or(0)
    }

    pub fn total(&self) -> i128 {
        self.entries.values().sum()
    }

    /// Addresses with a strictly positive balance.
    pub fn positive(&self) -> BTreeSet<Address> {
        self.entries
            .iter()
            .filter(|(_, &b)| b > 0)
            .map(|(a, _)| *a)
            .collect()
    }

    /// The state restricted to nonzero balances.
    pub fn nonzero(&self) -> BTreeMap<Address, i128> {
        self.entries
            .iter()
            .filter(|(_, &b)| b != 0)
            .map(|(a, b)| (*a, *b))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Evidence that produced a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkSource {
    H2,
    H3,
    H4,
    H5,
    Airdrop,
    EnsTransfer,
    EnsSubdomain,
    Debank,
    Planted,
    Manual,
}

impl fmt::Display for LinkSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkSource::H2 => "h2",
            LinkSource::H3 => "h3",
            LinkSource::H4 => "h4",
            LinkSource::H5 => "h5",
            LinkSource::Airdrop => "airdrop",
            LinkSource::EnsTransfer => "ens-transfer",
            LinkSource::EnsSubdomain => "ens-subdomain",
            LinkSource::Debank => "debank",
            LinkSource::Planted => "planted",
            LinkSource::Manual => "manual",
        })
    }
}

/// An unordered same-owner (or distinct-owner) assertion about two addresses.
/// The smaller address is always stored first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkPair {
    pub a1: Address,
    pub a2: Address,
    pub source: LinkSource,
    pub polarity: Polarity,
}

impl LinkPair {
    pub fn new(x: Address, y: Address, source: LinkSource, polarity: Polarity) -> Result<Self> {
        if x == y {
            return Err(Error::input(format!("cannot link {x} to itself")));
        }
        let (a1, a2) = if x < y { (x, y) } else { (y, x) };
        Ok(LinkPair {
            a1,
            a2,
            source,
            polarity,
        })
    }

    pub fn positive(x: Address, y: Address, source: LinkSource) -> Result<Self> {
        Self::new(x, y, source, Polarity::Positive)
    }

    /// Address pair without provenance, for set algebra across sources.
    pub fn key(&self) -> (Address, Address) {
        (self.a1, self.a2)
    }

    pub fn contains(&self, a: &Address) -> bool {
        self.a1 == *a || self.a2 == *a
    }
}

fn check_pool(pool: &PoolConfig, events: &[PoolEvent]) -> Result<()> {
    match events.iter().find(|e| e.pool_id != pool.pool_id) {
        Some(e) => Err(Error::input(format!(
            "event at {} belongs to pool `{}`, expected `{}`",
            e.bn, e.pool_id, pool.pool_id
        ))),
        None => Ok(()),
    }
}

/// Signed balance of `address` in `pool` at cut `t`:
/// (deposits − withdrawals) × denomination, counting events at height ≤ t.
pub fn compute_balance(
    address: &Address,
    pool: &PoolConfig,
    events: &[PoolEvent],
    t: u64,
) -> Result<i128> {
    check_pool(pool, events)?;
    let unit = pool.unit();
    Ok(events
        .iter()
        .filter(|e| e.actor == *address && e.bn.within(t))
        .map(|e| if e.is_deposit() { unit } else { -unit })
        .sum())
}

/// Every address that deposited or withdrew at height ≤ t, with its balance.
pub fn pool_state(pool: &PoolConfig, events: &[PoolEvent], t: u64) -> Result<PoolState> {
    check_pool(pool, events)?;
    let unit = pool.unit();
    let mut state = PoolState::new(t);
    for e in events.iter().filter(|e| e.bn.within(t)) {
        let delta = if e.is_deposit() { unit } else { -unit };
        *state.entries.entry(e.actor).or_insert(0) += delta;
    }
    Ok(state)
}

/// Addresses with an event of `kind` at height ≤ t.
pub fn actors(events: &[PoolEvent], kind: EventKind, t: u64) -> BTreeSet<Address> {
    events
        .iter()
        .filter(|e| e.kind == kind && e.bn.within(t))
        .map(|e| e.actor)
        .collect()
}

/// Merge the balances of a linked pair into one entry keyed by the smaller
/// address. Absent addresses count as zero; the merged entry is kept even
/// when its balance is zero so totals stay checkable.
pub fn merge_pair(state: &PoolState, pair: &LinkPair) -> Result<PoolState> {
    if pair.a1 == pair.a2 {
        return Err(Error::input(format!(
            "cannot merge {} with itself",
            pair.a1
        )));
    }
    let mut merged = state.clone();
    merge_in_place(&mut merged, pair.a1, pair.a2);
    Ok(merged)
}

fn merge_in_place(state: &mut PoolState, x: Address, y: Address) {
    let bx = state.entries.remove(&x).unwrap_or(0);
    let by = state.entries.remove(&y).unwrap_or(0);
    state.entries.insert(x.min(y), bx + by);
}

/// Fold every positive link into the state. Links are resolved through
/// their current cluster representatives, so the result depends only on the
/// connected components of the link graph: each component ends up as one
/// entry keyed by its smallest address, holding the component's total.
pub fn simplify_state<'a, I>(state: &PoolState, links: I) -> Result<PoolState>
where
    I: IntoIterator<Item = &'a LinkPair>,
{
    let mut out = state.clone();
    let mut clusters = UnionFind::new();
    for link in links {
        if link.polarity == Polarity::Negative {
            return Err(Error::input(format!(
                "negative link ({}, {}) cannot simplify a pool state",
                link.a1, link.a2
            )));
        }
        if link.a1 == link.a2 {
            return Err(Error::input(format!(
                "cannot merge {} with itself",
                link.a1
            )));
        }
        let r1 = clusters.find(&link.a1);
        let r2 = clusters.find(&link.a2);
        if r1 != r2 {
            merge_in_place(&mut out, r1, r2);
            clusters.union(&r1, &r2);
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn addr(n: u8) -> Address {
        let mut b = [0u8; 20];
        b[19] = n;
        Address::from_bytes(b)
    }

    /// The 100-coin example pool: d1 deposits once, d2 twice, w1 withdraws once.
    pub fn p100() -> (PoolConfig, Vec<PoolEvent>, [Address; 3]) {
        let pool = PoolConfig::new("P100", "ETH", Amount(100), 400).unwrap();
        let (d1, d2, w1) = (addr(1), addr(2), addr(3));
        let events = vec![
            PoolEvent::deposit("P100", BlockNumber::at(10), d1),
            PoolEvent::deposit("P100", BlockNumber::at(11), d2),
            PoolEvent::deposit("P100", BlockNumber::at(12), d2),
            PoolEvent::relayed_withdrawal("P100", BlockNumber::at(13), w1, addr(200)),
        ];
        (pool, events, [d1, d2, w1])
    }
}

//! Queryable indexes over transfers and pool events.
//!
//! The index answers the questions the heuristics ask of the transfer graph:
//! who funded a depositor, where a withdrawer's coins went, and who sits `n`
//! coin hops upstream of a pool's deposits or downstream of its withdrawals.
//! Once built it is immutable and can be shared between threads.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{Address, Amount, BlockNumber, EventKind, PoolConfig, PoolEvent, Transfer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Contract,
    Exchange,
    Relayer,
    Malicious,
    UserAccount,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Contract => "contract",
            Label::Exchange => "exchange",
            Label::Relayer => "relayer",
            Label::Malicious => "malicious",
            Label::UserAccount => "user-account",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contract" => Ok(Label::Contract),
            "exchange" => Ok(Label::Exchange),
            "relayer" => Ok(Label::Relayer),
            "malicious" => Ok(Label::Malicious),
            "user-account" => Ok(Label::UserAccount),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// Address labels. Unlabeled addresses are plain user accounts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelBook {
    labels: BTreeMap<Address, BTreeSet<Label>>,
}

impl LabelBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, address: Address, label: Label) {
        self.labels.entry(address).or_default().insert(label);
    }

    pub fn labels(&self, address: &Address) -> BTreeSet<Label> {
        match self.labels.get(address) {
            Some(set) if !set.is_empty() => set.clone(),
            _ => BTreeSet::from([Label::UserAccount]),
        }
    }

    pub fn has(&self, address: &Address, label: Label) -> bool {
        self.labels(address).contains(&label)
    }

    /// An externally owned account that is neither a contract nor an exchange.
    pub fn is_user_account(&self, address: &Address) -> bool {
        let labels = self.labels(address);
        !labels.contains(&Label::Contract) && !labels.contains(&Label::Exchange)
    }

    pub fn is_relayer(&self, address: &Address) -> bool {
        self.has(address, Label::Relayer)
    }

    /// The most specific label, used to bucket flow volume.
    pub fn primary(&self, address: &Address) -> Label {
        *self
            .labels(address)
            .iter()
            .next()
            .expect("labels are never empty")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, &BTreeSet<Label>)> {
        self.labels.iter()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
struct TransferBook {
    outgoing: HashMap<Address, Vec<Transfer>>,
    incoming: HashMap<Address, Vec<Transfer>>,
    len: usize,
}

impl TransferBook {
    fn build(mut transfers: Vec<Transfer>, kind: &str) -> Result<Self> {
        let mut seen: HashMap<&Transfer, usize> = HashMap::new();
        for (pos, t) in transfers.iter().enumerate() {
            if let Some(first) = seen.insert(t, pos) {
                return Err(Error::Duplicate {
                    file: kind.to_string(),
                    line: pos + 1,
                    first: first + 1,
                });
            }
        }
        drop(seen);
        transfers.sort_by(|a, b| transfer_key(a).cmp(&transfer_key(b)));
        let mut book = TransferBook {
            len: transfers.len(),
            ..Default::default()
        };
        for t in transfers {
            book.outgoing.entry(t.from).or_default().push(t.clone());
            book.incoming.entry(t.to).or_default().push(t);
        }
        Ok(book)
    }

    fn outgoing(&self, a: &Address) -> &[Transfer] {
        self.outgoing.get(a).map(Vec::as_slice).unwrap_or(&[])
    }

    fn incoming(&self, a: &Address) -> &[Transfer] {
        self.incoming.get(a).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[allow(clippy::type_complexity)]
fn transfer_key(t: &Transfer) -> (BlockNumber, Address, Address, Amount, &str, bool) {
    (t.bn, t.from, t.to, t.amt, t.coin.as_str(), t.internal)
}

/// Sorted per-address transfer lists and per-pool event lists.
#[derive(Clone, Debug, Default)]
pub struct LedgerIndex {
    native: TransferBook,
    tokens: TransferBook,
    events: BTreeMap<String, Vec<PoolEvent>>,
    pool_txs: HashSet<(u64, u32)>,
    labels: LabelBook,
}

/// Build the index. Inputs may arrive in any order; exact duplicate records
/// are rejected with their position.
pub fn build_index(
    transfers: Vec<Transfer>,
    token_transfers: Vec<Transfer>,
    events: Vec<PoolEvent>,
    labels: LabelBook,
) -> Result<LedgerIndex> {
    let native = TransferBook::build(transfers, "transfers")?;
    let tokens = TransferBook::build(token_transfers, "token_transfers")?;

    let mut seen: HashMap<&PoolEvent, usize> = HashMap::new();
    for (pos, e) in events.iter().enumerate() {
        e.validate()?;
        if let Some(first) = seen.insert(e, pos) {
            return Err(Error::Duplicate {
                file: "pool_events".into(),
                line: pos + 1,
                first: first + 1,
            });
        }
    }
    drop(seen);

    let pool_txs = events
        .iter()
        .map(|e| (e.bn.height, e.bn.tx_index))
        .collect();
    let mut by_pool: BTreeMap<String, Vec<PoolEvent>> = BTreeMap::new();
    for e in events {
        by_pool.entry(e.pool_id.clone()).or_default().push(e);
    }
    for list in by_pool.values_mut() {
        list.sort_by(|a, b| {
            (a.bn, a.kind, a.actor, a.tx_sender, a.relayer).cmp(&(
                b.bn,
                b.kind,
                b.actor,
                b.tx_sender,
                b.relayer,
            ))
        });
    }
    Ok(LedgerIndex {
        native,
        tokens,
        events: by_pool,
        pool_txs,
        labels,
    })
}

/// Value claimed from the transfer graph to cover one pool event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlowCover {
    /// The deposit or withdrawal being covered.
    pub event: BlockNumber,
    /// Claimed transfers, the last one clipped to the residual it covers.
    pub claimed: Vec<Transfer>,
    /// Part of the denomination no transfer could cover.
    pub shortfall: Amount,
}

impl FlowCover {
    pub fn covered(&self) -> Amount {
        self.claimed.iter().map(|t| t.amt).sum()
    }
}

impl LedgerIndex {
    pub fn labels(&self) -> &LabelBook {
        &self.labels
    }

    pub fn events(&self, pool_id: &str) -> &[PoolEvent] {
        self.events.get(pool_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn pool_ids(&self) -> impl Iterator<Item = &str> {
        self.events.keys().map(String::as_str)
    }

    pub fn transfer_count(&self) -> usize {
        self.native.len
    }

    pub fn token_transfer_count(&self) -> usize {
        self.tokens.len
    }

    pub fn event_count(&self) -> usize {
        self.events.values().map(Vec::len).sum()
    }

    pub fn incoming(&self, a: &Address) -> &[Transfer] {
        self.native.incoming(a)
    }

    pub fn outgoing(&self, a: &Address) -> &[Transfer] {
        self.native.outgoing(a)
    }

    pub fn token_incoming(&self, a: &Address) -> &[Transfer] {
        self.tokens.incoming(a)
    }

    pub fn token_outgoing(&self, a: &Address) -> &[Transfer] {
        self.tokens.outgoing(a)
    }

    /// Whether a transfer was emitted by the same transaction as a pool event.
    pub fn is_pool_interaction(&self, t: &Transfer) -> bool {
        self.pool_txs.contains(&(t.bn.height, t.bn.tx_index))
    }

    /// Every indexed transfer, native then token, in index order.
    pub fn all_transfers(&self) -> (Vec<&Transfer>, Vec<&Transfer>) {
        fn flatten(book: &TransferBook) -> Vec<&Transfer> {
            let mut out: Vec<&Transfer> = book.outgoing.values().flatten().collect();
            out.sort_by(|a, b| transfer_key(a).cmp(&transfer_key(b)));
            out
        }
        (flatten(&self.native), flatten(&self.tokens))
    }

    fn actors(&self, pool: &PoolConfig, kind: EventKind, t: u64) -> BTreeSet<Address> {
        crate::ledger::actors(self.events(&pool.pool_id), kind, t)
    }

    /// Distance-1 depositors are the pool's deposit actors; distance-n
    /// depositors sent the pool coin to a distance-(n−1) depositor at height ≤ t.
    pub fn depositors_at_distance(
        &self,
        pool: &PoolConfig,
        n: usize,
        t: u64,
    ) -> Result<BTreeSet<Address>> {
        if n == 0 {
            return Err(Error::input("distance must be at least 1"));
        }
        let mut layer = self.actors(pool, EventKind::Deposit, t);
        for _ in 1..n {
            layer = layer
                .iter()
                .flat_map(|a| self.incoming(a))
                .filter(|tr| tr.bn.within(t) && tr.coin == pool.coin && tr.from != tr.to)
                .map(|tr| tr.from)
                .collect();
        }
        Ok(layer)
    }

    /// Mirror of [`depositors_at_distance`](Self::depositors_at_distance)
    /// following outgoing transfers from withdrawal recipients.
    pub fn withdrawers_at_distance(
        &self,
        pool: &PoolConfig,
        n: usize,
        t: u64,
    ) -> Result<BTreeSet<Address>> {
        if n == 0 {
            return Err(Error::input("distance must be at least 1"));
        }
        let mut layer = self.actors(pool, EventKind::Withdrawal, t);
        for _ in 1..n {
            layer = layer
                .iter()
                .flat_map(|a| self.outgoing(a))
                .filter(|tr| tr.bn.within(t) && tr.coin == pool.coin && tr.from != tr.to)
                .map(|tr| tr.to)
                .collect();
        }
        Ok(layer)
    }

    /// For each deposit of `depositor`, the most recent incoming transfers of
    /// the pool coin that fund it. Transfers are claimed at most once across
    /// the depositor's deposits; the last claim of a deposit is clipped to
    /// the residual it covers.
    pub fn source_transfers(
        &self,
        depositor: &Address,
        pool: &PoolConfig,
        t: u64,
    ) -> Result<Vec<FlowCover>> {
        let deposits: Vec<BlockNumber> = self
            .events(&pool.pool_id)
            .iter()
            .filter(|e| e.is_deposit() && e.actor == *depositor && e.bn.within(t))
            .map(|e| e.bn)
            .collect();
        if deposits.is_empty() {
            return Err(Error::input(format!(
                "{depositor} has no deposit in {} at or before {t}",
                pool.pool_id
            )));
        }
        let incoming: Vec<&Transfer> = self
            .incoming(depositor)
            .iter()
            .filter(|tr| tr.coin == pool.coin)
            .collect();
        let mut claimed = vec![false; incoming.len()];
        let covers = deposits
            .into_iter()
            .map(|deposit| {
                // newest first among transfers strictly before the deposit
                let order = (0..incoming.len())
                    .rev()
                    .filter(|&i| incoming[i].bn < deposit);
                greedy_cover(deposit, pool.denomination, &incoming, &mut claimed, order)
            })
            .collect();
        Ok(covers)
    }

    /// For each withdrawal received by `withdrawer`, the earliest outgoing
    /// transfers of the pool coin after it, with the same single-claim and
    /// clipping rules as [`source_transfers`](Self::source_transfers).
    pub fn sink_transfers(
        &self,
        withdrawer: &Address,
        pool: &PoolConfig,
        t: u64,
    ) -> Result<Vec<FlowCover>> {
        let withdrawals: Vec<BlockNumber> = self
            .events(&pool.pool_id)
            .iter()
            .filter(|e| e.is_withdrawal() && e.actor == *withdrawer && e.bn.within(t))
            .map(|e| e.bn)
            .collect();
        if withdrawals.is_empty() {
            return Err(Error::input(format!(
                "{withdrawer} has no withdrawal in {} at or before {t}",
                pool.pool_id
            )));
        }
        let outgoing: Vec<&Transfer> = self
            .outgoing(withdrawer)
            .iter()
            .filter(|tr| tr.coin == pool.coin && tr.bn.within(t))
            .collect();
        let mut claimed = vec![false; outgoing.len()];
        let covers = withdrawals
            .into_iter()
            .map(|withdrawal| {
                let order = (0..outgoing.len()).filter(|&i| outgoing[i].bn > withdrawal);
                greedy_cover(
                    withdrawal,
                    pool.denomination,
                    &outgoing,
                    &mut claimed,
                    order,
                )
            })
            .collect();
        Ok(covers)
    }
}

fn greedy_cover(
    event: BlockNumber,
    denomination: Amount,
    candidates: &[&Transfer],
    claimed: &mut [bool],
    order: impl Iterator<Item = usize>,
) -> FlowCover {
    let mut residual = denomination.0;
    let mut taken = Vec::new();
    for i in order {
        if residual == 0 {
            break;
        }
        if claimed[i] || candidates[i].amt.0 == 0 {
            continue;
        }
        claimed[i] = true;
        let mut tr = candidates[i].clone();
        let take = tr.amt.0.min(residual);
        tr.amt = Amount(take);
        residual -= take;
        taken.push(tr);
    }
    FlowCover {
        event,
        claimed: taken,
        shortfall: Amount(residual),
    }
}

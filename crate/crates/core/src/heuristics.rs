//! The five linking heuristics, their combination, and clustering.
//!
//! Each heuristic produces a set of same-owner address pairs for a pool and
//! the simplified anonymity set (SAS) that remains once those pairs are
//! merged into the pool state:
//!
//! | tag | evidence |
//! |-----|----------|
//! | H1  | an address both deposits and withdraws (no pairs, balance rule only) |
//! | H2  | a depositor signs a withdrawal paying out to another address |
//! | H3  | a depositor and a withdrawer exchanged coins or tokens |
//! | H4  | a depositor funded entirely by one user account upstream |
//! | H5  | matching per-pool deposit and withdrawal totals across several pools |
//!
//! SAS members are reported by depositor address. A positive-balance cluster
//! is represented by its smallest depositor, so SAS ⊆ OAS always holds even
//! when the merge representative is a withdrawer or an upstream funder.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphindex::{LabelBook, LedgerIndex};
use crate::ledger::{
    actors, pool_state, simplify_state, Address, BlockNumber, EventKind, LinkPair, LinkSource,
    Polarity, PoolConfig, PoolEvent, PoolState,
};
use crate::unionfind::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    H1,
    H2,
    H3,
    H4,
    H5,
}

impl Heuristic {
    pub const ALL: [Heuristic; 5] = [
        Heuristic::H1,
        Heuristic::H2,
        Heuristic::H3,
        Heuristic::H4,
        Heuristic::H5,
    ];

    pub fn link_source(self) -> Option<LinkSource> {
        match self {
            Heuristic::H1 => None,
            Heuristic::H2 => Some(LinkSource::H2),
            Heuristic::H3 => Some(LinkSource::H3),
            Heuristic::H4 => Some(LinkSource::H4),
            Heuristic::H5 => Some(LinkSource::H5),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::H1 => "h1",
            Heuristic::H2 => "h2",
            Heuristic::H3 => "h3",
            Heuristic::H4 => "h4",
            Heuristic::H5 => "h5",
        })
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h1" => Ok(Heuristic::H1),
            "h2" => Ok(Heuristic::H2),
            "h3" => Ok(Heuristic::H3),
            "h4" => Ok(Heuristic::H4),
            "h5" => Ok(Heuristic::H5),
            other => Err(format!("unknown heuristic `{other}`")),
        }
    }
}

/// Parse a comma-separated heuristic list such as `h1,h3`.
pub fn parse_heuristics(list: &str) -> Result<Vec<Heuristic>> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let h: Heuristic = part.parse().map_err(Error::Input)?;
        if !out.contains(&h) {
            out.push(h);
        }
    }
    if out.is_empty() {
        return Err(Error::input("empty heuristic list"));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HeuristicResult {
    /// One tag for a single heuristic, several for a combination.
    pub heuristics: BTreeSet<Heuristic>,
    pub link_pairs: BTreeSet<LinkPair>,
    pub sas: BTreeSet<Address>,
    /// Addresses seen both depositing and withdrawing (H1 evidence).
    pub reused: BTreeSet<Address>,
    pub pool_id: String,
    pub as_of: u64,
}

impl HeuristicResult {
    pub fn pair_keys(&self) -> BTreeSet<(Address, Address)> {
        self.link_pairs.iter().map(LinkPair::key).collect()
    }
}

/// Positive-balance clusters of the link-simplified state, each reported by
/// its smallest depositor.
pub fn simplified_anonymity_set<'a, I>(
    state: &PoolState,
    links: I,
    depositors: &BTreeSet<Address>,
) -> Result<BTreeSet<Address>>
where
    I: IntoIterator<Item = &'a LinkPair> + Clone,
{
    let simplified = simplify_state(state, links.clone())?;
    let mut clusters = UnionFind::new();
    for link in links {
        clusters.union(&link.a1, &link.a2);
    }
    let mut members: BTreeMap<Address, Vec<Address>> = BTreeMap::new();
    for component in clusters.components() {
        members.insert(component[0], component);
    }
    let mut sas = BTreeSet::new();
    for (rep, balance) in &simplified.entries {
        if *balance <= 0 {
            continue;
        }
        let chosen = match members.get(rep) {
            Some(list) => list.iter().find(|a| depositors.contains(a)).copied(),
            None => depositors.contains(rep).then_some(*rep),
        };
        // a positive cluster always holds at least one depositor
        debug_assert!(chosen.is_some(), "positive cluster without depositor");
        sas.extend(chosen);
    }
    Ok(sas)
}

fn finish(
    tag: Heuristic,
    pool: &PoolConfig,
    events: &[PoolEvent],
    t: u64,
    link_pairs: BTreeSet<LinkPair>,
) -> Result<HeuristicResult> {
    let state = pool_state(pool, events, t)?;
    let depositors = actors(events, EventKind::Deposit, t);
    let sas = simplified_anonymity_set(&state, &link_pairs, &depositors)?;
    Ok(HeuristicResult {
        heuristics: BTreeSet::from([tag]),
        link_pairs,
        sas,
        reused: BTreeSet::new(),
        pool_id: pool.pool_id.clone(),
        as_of: t,
    })
}

/// H1: deposit address reuse. Links no pairs; the SAS is every depositor
/// whose own balance is still positive.
pub fn h1_reuse(pool: &PoolConfig, events: &[PoolEvent], t: u64) -> Result<HeuristicResult> {
    let mut result = finish(Heuristic::H1, pool, events, t, BTreeSet::new())?;
    let depositors = actors(events, EventKind::Deposit, t);
    let withdrawers = actors(events, EventKind::Withdrawal, t);
    result.reused = depositors.intersection(&withdrawers).copied().collect();
    Ok(result)
}

/// H2: improper withdrawal sender. A withdrawal signed by one of the pool's
/// depositors (not a relayer) links the signer to the recipient.
pub fn h2_improper_sender(
    pool: &PoolConfig,
    events: &[PoolEvent],
    labels: &LabelBook,
    t: u64,
) -> Result<HeuristicResult> {
    let depositors = actors(events, EventKind::Deposit, t);
    let mut pairs = BTreeSet::new();
    for e in events
        .iter()
        .filter(|e| e.is_withdrawal() && e.bn.within(t) && e.relayer.is_none())
    {
        if e.tx_sender != e.actor
            && depositors.contains(&e.tx_sender)
            && !labels.is_relayer(&e.tx_sender)
        {
            pairs.insert(LinkPair::positive(e.tx_sender, e.actor, LinkSource::H2)?);
        }
    }
    finish(Heuristic::H2, pool, events, t, pairs)
}

/// H3: related deposit/withdrawal addresses. Any coin or token transfer
/// between a depositor and a withdrawer at height ≤ t links them, unless the
/// transfer belongs to a pool-interaction transaction.
pub fn h3_related_pair(pool: &PoolConfig, index: &LedgerIndex, t: u64) -> Result<HeuristicResult> {
    let events = index.events(&pool.pool_id);
    let depositors = actors(events, EventKind::Deposit, t);
    let withdrawers = actors(events, EventKind::Withdrawal, t);
    let mut pairs = BTreeSet::new();
    for d in &depositors {
        let touching = index
            .outgoing(d)
            .iter()
            .chain(index.incoming(d))
            .chain(index.token_outgoing(d))
            .chain(index.token_incoming(d));
        for tr in touching {
            if !tr.bn.within(t) || index.is_pool_interaction(tr) {
                continue;
            }
            let other = if tr.from == *d { tr.to } else { tr.from };
            if other != *d && withdrawers.contains(&other) {
                pairs.insert(LinkPair::positive(*d, other, LinkSource::H3)?);
            }
        }
    }
    finish(Heuristic::H3, pool, events, t, pairs)
}

/// Intermediary deposit addresses and their single funder: every depositor
/// whose whole incoming pool-coin value at height ≤ t comes from one user
/// account.
pub fn intermediaries(
    pool: &PoolConfig,
    index: &LedgerIndex,
    labels: &LabelBook,
    t: u64,
) -> BTreeMap<Address, Address> {
    let depositors = actors(index.events(&pool.pool_id), EventKind::Deposit, t);
    let mut out = BTreeMap::new();
    for d1 in depositors {
        let mut funders = BTreeSet::new();
        let mut total = 0u128;
        for tr in index.incoming(&d1) {
            if tr.bn.within(t) && tr.coin == pool.coin && tr.amt.0 > 0 && tr.from != d1 {
                funders.insert(tr.from);
                total += tr.amt.0;
            }
        }
        if total == 0 || funders.len() != 1 {
            continue;
        }
        let funder = *funders.iter().next().unwrap();
        if labels.is_user_account(&funder) {
            out.insert(d1, funder);
        }
    }
    out
}

/// H4: intermediary deposit address. Each intermediary is linked to (and
/// so replaced by) its funder before the SAS is read.
pub fn h4_intermediary(
    pool: &PoolConfig,
    index: &LedgerIndex,
    labels: &LabelBook,
    t: u64,
) -> Result<HeuristicResult> {
    let pairs = intermediaries(pool, index, labels, t)
        .into_iter()
        .map(|(d1, d2)| LinkPair::positive(d1, d2, LinkSource::H4))
        .collect::<Result<BTreeSet<_>>>()?;
    finish(Heuristic::H4, pool, index.events(&pool.pool_id), t, pairs)
}

type Schedule = BTreeMap<String, Vec<BlockNumber>>;

fn schedules(
    pools: &[&PoolConfig],
    index: &LedgerIndex,
    kind: EventKind,
    t: u64,
) -> BTreeMap<Address, Schedule> {
    let mut out: BTreeMap<Address, Schedule> = BTreeMap::new();
    for pool in pools {
        for e in index.events(&pool.pool_id) {
            if e.kind == kind && e.bn.within(t) {
                out.entry(e.actor)
                    .or_default()
                    .entry(pool.pool_id.clone())
                    .or_default()
                    .push(e.bn);
            }
        }
    }
    out
}

/// Greedy earliest-unmatched pairing: every withdrawal must consume a
/// distinct deposit strictly earlier than itself.
fn withdrawals_covered(deposits: &[BlockNumber], withdrawals: &[BlockNumber]) -> bool {
    let mut deposits = deposits.to_vec();
    let mut withdrawals = withdrawals.to_vec();
    deposits.sort();
    withdrawals.sort();
    let mut next = 0;
    for w in withdrawals {
        if next < deposits.len() && deposits[next] < w {
            next += 1;
        } else {
            return false;
        }
    }
    true
}

/// H5: cross-pool deposits. A depositor/withdrawer pair is linked when both
/// use the same m > 1 pools of one coin, the per-pool deposit and withdrawal
/// totals match, and every withdrawal is preceded by a matching deposit.
/// Returns one result per pool, simplified per pool.
pub fn h5_cross_pool(
    pools: &[PoolConfig],
    index: &LedgerIndex,
    t: u64,
) -> Result<BTreeMap<String, HeuristicResult>> {
    let mut by_coin: BTreeMap<&str, Vec<&PoolConfig>> = BTreeMap::new();
    for pool in pools {
        by_coin.entry(pool.coin.as_str()).or_default().push(pool);
    }
    let mut pairs_by_pool: BTreeMap<String, BTreeSet<LinkPair>> = BTreeMap::new();
    for group in by_coin.values() {
        let deposits = schedules(group, index, EventKind::Deposit, t);
        let withdrawals = schedules(group, index, EventKind::Withdrawal, t);

        // depositors keyed by their per-pool deposit counts
        let mut by_signature: BTreeMap<Vec<(&str, usize)>, Vec<Address>> = BTreeMap::new();
        for (d, sched) in &deposits {
            if sched.len() > 1 {
                let sig = sched.iter().map(|(p, v)| (p.as_str(), v.len())).collect();
                by_signature.entry(sig).or_default().push(*d);
            }
        }
        for (w, wsched) in &withdrawals {
            if wsched.len() < 2 {
                continue;
            }
            let sig: Vec<(&str, usize)> =
                wsched.iter().map(|(p, v)| (p.as_str(), v.len())).collect();
            let Some(candidates) = by_signature.get(&sig) else {
                continue;
            };
            for d in candidates.iter().filter(|d| *d != w) {
                let dsched = &deposits[d];
                let ordered = wsched
                    .iter()
                    .all(|(pool_id, ws)| withdrawals_covered(&dsched[pool_id], ws));
                if ordered {
                    let pair = LinkPair::positive(*d, *w, LinkSource::H5)?;
                    for pool_id in wsched.keys() {
                        pairs_by_pool
                            .entry(pool_id.clone())
                            .or_default()
                            .insert(pair);
                    }
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for pool in pools {
        let pairs = pairs_by_pool.remove(&pool.pool_id).unwrap_or_default();
        let result = finish(Heuristic::H5, pool, index.events(&pool.pool_id), t, pairs)?;
        out.insert(pool.pool_id.clone(), result);
    }
    Ok(out)
}

/// Union the link sets of several results for one pool and re-read the SAS.
pub fn combine(
    pool: &PoolConfig,
    results: &[HeuristicResult],
    events: &[PoolEvent],
    t: u64,
) -> Result<HeuristicResult> {
    if let Some(r) = results
        .iter()
        .find(|r| r.pool_id != pool.pool_id || r.as_of != t)
    {
        return Err(Error::input(format!(
            "cannot combine result for {}@{} into {}@{}",
            r.pool_id, r.as_of, pool.pool_id, t
        )));
    }
    let links: BTreeSet<LinkPair> = results
        .iter()
        .flat_map(|r| r.link_pairs.iter().copied())
        .filter(|l| l.polarity == Polarity::Positive)
        .collect();
    let mut combined = finish(Heuristic::H1, pool, events, t, links)?;
    combined.heuristics = results
        .iter()
        .flat_map(|r| r.heuristics.iter().copied())
        .collect();
    combined.reused = results
        .iter()
        .flat_map(|r| r.reused.iter().copied())
        .collect();
    Ok(combined)
}

/// Run one heuristic on every pool.
pub fn evaluate(
    heuristic: Heuristic,
    pools: &[PoolConfig],
    index: &LedgerIndex,
    t: u64,
) -> Result<BTreeMap<String, HeuristicResult>> {
    if heuristic == Heuristic::H5 {
        return h5_cross_pool(pools, index, t);
    }
    let mut out = BTreeMap::new();
    for pool in pools {
        let events = index.events(&pool.pool_id);
        let result = match heuristic {
            Heuristic::H1 => h1_reuse(pool, events, t)?,
            Heuristic::H2 => h2_improper_sender(pool, events, index.labels(), t)?,
            Heuristic::H3 => h3_related_pair(pool, index, t)?,
            Heuristic::H4 => h4_intermediary(pool, index, index.labels(), t)?,
            Heuristic::H5 => unreachable!(),
        };
        out.insert(pool.pool_id.clone(), result);
    }
    Ok(out)
}

/// A set of mutually linked addresses.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Cluster {
    /// Sorted ascending.
    pub members: Vec<Address>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Connected components of the undirected positive-link graph, ordered by
/// their smallest member.
pub fn clusters_from_links<'a, I>(pairs: I) -> Vec<Cluster>
where
    I: IntoIterator<Item = &'a LinkPair>,
{
    let mut uf = UnionFind::new();
    for p in pairs
        .into_iter()
        .filter(|p| p.polarity == Polarity::Positive)
    {
        uf.union(&p.a1, &p.a2);
    }
    uf.components()
        .into_iter()
        .map(|members| Cluster { members })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphindex::{build_index, Label};
    use crate::ledger::fixtures::addr;
    use crate::ledger::{Amount, Transfer};

    fn pool(id: &str, denom: u128) -> PoolConfig {
        PoolConfig::new(id, "ETH", Amount(denom), 10).unwrap()
    }

    fn dep(p: &str, h: u64, a: u8) -> PoolEvent {
        PoolEvent::deposit(p, BlockNumber::at(h), addr(a))
    }

    fn wd(p: &str, h: u64, a: u8) -> PoolEvent {
        PoolEvent::relayed_withdrawal(p, BlockNumber::at(h), addr(a), addr(250))
    }

    fn relayers() -> LabelBook {
        let mut book = LabelBook::new();
        book.insert(addr(250), Label::Relayer);
        book
    }

    fn pairs(list: &[(u8, u8)]) -> BTreeSet<(Address, Address)> {
        list.iter()
            .map(|&(a, b)| {
                let (x, y) = (addr(a), addr(b));
                (x.min(y), x.max(y))
            })
            .collect()
    }

    #[test]
    fn h1_keeps_partially_withdrawn_reuser() {
        let p = pool("P", 1);
        let events = vec![dep("P", 1, 1), dep("P", 2, 1), wd("P", 3, 1)];
        let r = h1_reuse(&p, &events, 10).unwrap();
        assert!(r.link_pairs.is_empty());
        assert_eq!(r.sas, BTreeSet::from([addr(1)]));
        assert_eq!(r.reused, BTreeSet::from([addr(1)]));
    }

    #[test]
    fn h1_drops_fully_withdrawn_reuser() {
        let p = pool("P", 1);
        let events = vec![dep("P", 1, 1), wd("P", 3, 1), dep("P", 4, 2)];
        let r = h1_reuse(&p, &events, 10).unwrap();
        assert_eq!(r.sas, BTreeSet::from([addr(2)]));
    }

    #[test]
    fn h2_links_depositor_signing_withdrawal() {
        let p = pool("P", 1);
        let events = vec![
            dep("P", 1, 1),
            PoolEvent::withdrawal_sent_by("P", BlockNumber::at(2), addr(2), addr(1)),
            dep("P", 3, 3),
        ];
        let r = h2_improper_sender(&p, &events, &LabelBook::new(), 10).unwrap();
        assert_eq!(r.pair_keys(), pairs(&[(1, 2)]));
        // d1's deposit is spent by w: only d3 remains
        assert_eq!(r.sas, BTreeSet::from([addr(3)]));
    }

    #[test]
    fn h2_ignores_relayers_and_self_sends() {
        let p = pool("P", 1);
        let mut book = LabelBook::new();
        book.insert(addr(1), Label::Relayer);
        let events = vec![
            dep("P", 1, 1),
            PoolEvent::withdrawal_sent_by("P", BlockNumber::at(2), addr(2), addr(1)),
        ];
        assert!(h2_improper_sender(&p, &events, &book, 10)
            .unwrap()
            .link_pairs
            .is_empty());
        let events = vec![
            dep("P", 1, 1),
            PoolEvent::withdrawal("P", BlockNumber::at(2), addr(1)),
        ];
        assert!(h2_improper_sender(&p, &events, &LabelBook::new(), 10)
            .unwrap()
            .link_pairs
            .is_empty());
    }

    fn token(h: u64, from: u8, to: u8) -> Transfer {
        Transfer::new(BlockNumber::at(h), addr(from), addr(to), Amount(5), "DAI")
    }

    #[test]
    fn h3_token_transfer_links_pair() {
        let p = pool("P", 1);
        let events = vec![dep("P", 1, 1), wd("P", 2, 2)];
        let index = build_index(vec![], vec![token(5, 1, 2)], events.clone(), relayers()).unwrap();
        assert_eq!(
            h3_related_pair(&p, &index, 10).unwrap().pair_keys(),
            pairs(&[(1, 2)])
        );
        // past the cut
        let index = build_index(vec![], vec![token(50, 1, 2)], events, relayers()).unwrap();
        assert!(h3_related_pair(&p, &index, 10)
            .unwrap()
            .link_pairs
            .is_empty());
    }

    #[test]
    fn h3_reverse_native_transfer() {
        let p = pool("P", 1);
        let events = vec![dep("P", 1, 1), wd("P", 2, 2)];
        let native = Transfer::new(BlockNumber::at(3), addr(2), addr(1), Amount(1), "ETH");
        let index = build_index(vec![native], vec![], events, relayers()).unwrap();
        assert_eq!(
            h3_related_pair(&p, &index, 10).unwrap().pair_keys(),
            pairs(&[(1, 2)])
        );
    }

    #[test]
    fn h3_skips_pool_interaction_transfers() {
        let p = pool("P", 1);
        let w = PoolEvent::withdrawal_sent_by("P", BlockNumber::new(2, 4, 0), addr(2), addr(1));
        let events = vec![dep("P", 1, 1), w];
        let internal = Transfer::new(
            BlockNumber::new(2, 4, 1),
            addr(1),
            addr(2),
            Amount(1),
            "ETH",
        );
        let index = build_index(vec![internal], vec![], events, relayers()).unwrap();
        assert!(h3_related_pair(&p, &index, 10)
            .unwrap()
            .link_pairs
            .is_empty());
    }

    fn eth(h: u64, from: u8, to: u8, amt: u128) -> Transfer {
        Transfer::new(BlockNumber::at(h), addr(from), addr(to), Amount(amt), "ETH")
    }

    #[test]
    fn h4_single_funder_replaces_intermediary() {
        let p = pool("P", 100);
        let events = vec![dep("P", 5, 1), dep("P", 6, 3)];
        let index = build_index(
            vec![eth(1, 9, 1, 100), eth(1, 8, 3, 60), eth(2, 7, 3, 40)],
            vec![],
            events,
            LabelBook::new(),
        )
        .unwrap();
        let r = h4_intermediary(&p, &index, index.labels(), 10).unwrap();
        assert_eq!(r.pair_keys(), pairs(&[(1, 9)]));
        assert_eq!(r.sas.len(), 2);
        assert!(r.sas.is_subset(&BTreeSet::from([addr(1), addr(3)])));
    }

    #[test]
    fn h4_rejects_exchange_funder() {
        let p = pool("P", 100);
        let mut book = LabelBook::new();
        book.insert(addr(9), Label::Exchange);
        let index =
            build_index(vec![eth(1, 9, 1, 100)], vec![], vec![dep("P", 5, 1)], book).unwrap();
        assert!(h4_intermediary(&p, &index, index.labels(), 10)
            .unwrap()
            .link_pairs
            .is_empty());
    }

    #[test]
    fn h4_shared_funder_collapses_intermediaries() {
        let p = pool("P", 100);
        let events = vec![dep("P", 5, 1), dep("P", 6, 2), dep("P", 7, 3)];
        let index = build_index(
            vec![eth(1, 9, 1, 100), eth(1, 9, 2, 100)],
            vec![],
            events,
            LabelBook::new(),
        )
        .unwrap();
        let r = h4_intermediary(&p, &index, index.labels(), 10).unwrap();
        assert_eq!(r.pair_keys(), pairs(&[(1, 9), (2, 9)]));
        assert_eq!(r.sas, BTreeSet::from([addr(1), addr(3)]));
    }

    fn cross_pool_fixture(first_withdrawal: u64) -> (Vec<PoolConfig>, LedgerIndex) {
        let pools = vec![pool("P0.1", 1), pool("P1", 10), pool("P10", 100)];
        let mut events = Vec::new();
        for (i, p) in ["P0.1", "P1", "P10"].iter().enumerate() {
            events.push(dep(p, 10 + i as u64, 1));
            let h = if i == 2 {
                first_withdrawal
            } else {
                50 + i as u64
            };
            events.push(wd(p, h, 2));
        }
        let index = build_index(vec![], vec![], events, relayers()).unwrap();
        (pools, index)
    }

    #[test]
    fn h5_links_matching_cross_pool_totals() {
        let (pools, index) = cross_pool_fixture(60);
        let results = h5_cross_pool(&pools, &index, 100).unwrap();
        for r in results.values() {
            assert_eq!(r.pair_keys(), pairs(&[(1, 2)]));
            assert!(r.sas.is_empty());
        }
    }

    #[test]
    fn h5_requires_deposit_before_each_withdrawal() {
        let (pools, index) = cross_pool_fixture(5);
        let results = h5_cross_pool(&pools, &index, 100).unwrap();
        assert!(results.values().all(|r| r.link_pairs.is_empty()));
    }

    #[test]
    fn h5_requires_more_than_one_pool() {
        let pools = vec![pool("P1", 10), pool("P10", 100)];
        let events = vec![dep("P1", 1, 1), wd("P1", 5, 2), dep("P10", 2, 3)];
        let index = build_index(vec![], vec![], events, relayers()).unwrap();
        let results = h5_cross_pool(&pools, &index, 100).unwrap();
        assert!(results.values().all(|r| r.link_pairs.is_empty()));
    }

    #[test]
    fn combine_with_self_is_identity() {
        let p = pool("P", 1);
        let events = vec![
            dep("P", 1, 1),
            PoolEvent::withdrawal_sent_by("P", BlockNumber::at(2), addr(2), addr(1)),
            dep("P", 3, 3),
        ];
        let r = h2_improper_sender(&p, &events, &LabelBook::new(), 10).unwrap();
        let c = combine(&p, &[r.clone(), r.clone()], &events, 10).unwrap();
        assert_eq!(c, r);
    }

    #[test]
    fn combine_disjoint_links_matches_sequential_fold() {
        let p = pool("P", 1);
        let events = vec![
            dep("P", 1, 1),
            dep("P", 1, 3),
            wd("P", 2, 2),
            wd("P", 2, 4),
            dep("P", 3, 5),
        ];
        let mk = |x, y| {
            let links =
                BTreeSet::from([LinkPair::positive(addr(x), addr(y), LinkSource::Manual).unwrap()]);
            finish(Heuristic::H3, &p, &events, 10, links).unwrap()
        };
        let (ab, cd) = (mk(1, 2), mk(3, 4));
        let combined = combine(&p, &[ab.clone(), cd.clone()], &events, 10).unwrap();
        let state = pool_state(&p, &events, 10).unwrap();
        let seq = simplify_state(
            &simplify_state(&state, &ab.link_pairs).unwrap(),
            &cd.link_pairs,
        )
        .unwrap();
        let depositors = actors(&events, EventKind::Deposit, 10);
        let expected: BTreeSet<Address> =
            seq.positive().intersection(&depositors).copied().collect();
        assert_eq!(combined.sas, expected);
        assert_eq!(combined.sas, BTreeSet::from([addr(5)]));
    }

    #[test]
    fn combine_rejects_mixed_pools() {
        let p = pool("P", 1);
        let q = pool("Q", 1);
        let r = h1_reuse(&q, &[], 10).unwrap();
        assert!(combine(&p, &[r], &[], 10).is_err());
    }

    #[test]
    fn clusters_are_transitive() {
        let links: Vec<LinkPair> = [(1, 2), (2, 3), (7, 8)]
            .iter()
            .map(|&(a, b)| LinkPair::positive(addr(a), addr(b), LinkSource::Manual).unwrap())
            .collect();
        let clusters = clusters_from_links(&links);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].members, vec![addr(1), addr(2), addr(3)]);
        assert_eq!(clusters[1].size(), 2);
        assert!(clusters_from_links(&[]).is_empty());
    }

    #[test]
    fn parses_heuristic_lists() {
        assert_eq!(
            parse_heuristics("h1, H3,h1").unwrap(),
            vec![Heuristic::H1, Heuristic::H3]
        );
        assert!(parse_heuristics("h6").is_err());
        assert!(parse_heuristics("").is_err());
    }
}

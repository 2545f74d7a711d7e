//! Anonymity-set sizes, adversary advantage, relayer statistics, cluster
//! histograms and the fund-then-deposit flag.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::graphindex::{Label, LabelBook};
use crate::heuristics::{Cluster, HeuristicResult};
use crate::ledger::{
    Address, Amount, BlockNumber, EventKind, PoolConfig, PoolEvent, PoolState, Provenance,
};
use crate::ratio::{ratio, Ratio};

/// Unique deposit addresses of `pool` at height ≤ t.
pub fn observed_anonymity_set(
    pool: &PoolConfig,
    events: &[PoolEvent],
    t: u64,
) -> BTreeSet<Address> {
    events
        .iter()
        .filter(|e| e.pool_id == pool.pool_id && e.is_deposit() && e.bn.within(t))
        .map(|e| e.actor)
        .collect()
}

/// Positive-balance addresses of a ground-truth state. Observed states
/// cannot tell who still owns unspent notes, so they are rejected.
pub fn true_anonymity_set(state: &PoolState) -> Result<BTreeSet<Address>> {
    if state.provenance != Provenance::GroundTruth {
        return Err(Error::Mode(
            "the true anonymity set needs note-ownership ground truth (synthetic traces only)"
                .into(),
        ));
    }
    Ok(state.positive())
}

/// Which deposit note a withdrawal spent. Only synthetic traces know this.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NoteSpend {
    pub pool_id: String,
    pub withdrawal: BlockNumber,
    pub deposit: BlockNumber,
}

/// Balances keyed by note owner: every deposit credits its depositor and
/// every spend at height ≤ t debits the owner of the spent note.
pub fn resolve_ground_truth_state(
    pool: &PoolConfig,
    events: &[PoolEvent],
    spends: &[NoteSpend],
    t: u64,
) -> Result<PoolState> {
    let unit = pool.unit();
    let owners: BTreeMap<BlockNumber, Address> = events
        .iter()
        .filter(|e| e.pool_id == pool.pool_id && e.is_deposit())
        .map(|e| (e.bn, e.actor))
        .collect();
    let mut state = PoolState::new(t);
    state.provenance = Provenance::GroundTruth;
    for (bn, owner) in &owners {
        if bn.within(t) {
            *state.entries.entry(*owner).or_insert(0) += unit;
        }
    }
    for spend in spends.iter().filter(|s| s.pool_id == pool.pool_id) {
        if !spend.withdrawal.within(t) {
            continue;
        }
        let owner = owners.get(&spend.deposit).ok_or_else(|| {
            Error::input(format!(
                "note spend at {} references unknown deposit {} in {}",
                spend.withdrawal, spend.deposit, pool.pool_id
            ))
        })?;
        if spend.deposit >= spend.withdrawal {
            return Err(Error::input(format!(
                "note spend at {} precedes its deposit {}",
                spend.withdrawal, spend.deposit
            )));
        }
        *state.entries.entry(*owner).or_insert(0) -= unit;
    }
    Ok(state)
}

/// Probability 1/n of linking a withdrawal to its depositor by chance.
pub fn adversary_advantage(set_size: usize) -> Result<Ratio> {
    if set_size == 0 {
        return Err(Error::domain(
            "adversary advantage of an empty anonymity set",
        ));
    }
    Ok(ratio(1, set_size as u128))
}

/// Relative increase of the adversary advantage from OAS to SAS,
/// `oas/sas − 1`.
pub fn relative_advantage_increase(oas_size: usize, sas_size: usize) -> Result<Ratio> {
    if sas_size == 0 {
        return Err(Error::domain(
            "relative advantage with an empty simplified set",
        ));
    }
    if sas_size > oas_size {
        return Err(Error::domain(format!(
            "simplified set ({sas_size}) larger than observed set ({oas_size})"
        )));
    }
    Ok(ratio(oas_size as u128, sas_size as u128) - Ratio::one())
}

/// The same quantity from a fractional reduction `r = 1 − sas/oas`:
/// `1/(1−r) − 1`.
pub fn relative_advantage_from_reduction(reduction: &Ratio) -> Result<Ratio> {
    if *reduction >= Ratio::one() {
        return Err(Error::domain(
            "a reduction of 100% or more leaves no anonymity set",
        ));
    }
    Ok(Ratio::one() / (Ratio::one() - reduction) - Ratio::one())
}

/// Fractional reduction `(oas − sas)/oas`; zero for an empty pool.
pub fn reduction(oas_size: usize, sas_size: usize) -> Ratio {
    if oas_size == 0 {
        return Ratio::zero();
    }
    ratio(oas_size.saturating_sub(sas_size) as u128, oas_size as u128)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SasRow {
    /// `h3`, or `h1+h2+h3` for a combination.
    pub label: String,
    pub sas_size: usize,
    pub reduction: Ratio,
    pub r_adv: Option<Ratio>,
}

impl SasRow {
    fn new(label: String, oas_size: usize, sas_size: usize) -> Self {
        SasRow {
            label,
            sas_size,
            reduction: reduction(oas_size, sas_size),
            r_adv: relative_advantage_increase(oas_size, sas_size).ok(),
        }
    }
}

/// Per-pool anonymity summary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnonymityReport {
    pub pool_id: String,
    pub as_of: u64,
    pub oas_size: usize,
    pub rows: Vec<SasRow>,
    pub combined: Option<SasRow>,
    /// True anonymity set size, when ground truth is available.
    pub tas_size: Option<usize>,
    pub adv_o: Option<Ratio>,
    /// Advantage against the combined SAS, or the smallest single SAS when
    /// no combination was requested.
    pub adv_s: Option<Ratio>,
    pub r_adv: Option<Ratio>,
}

impl AnonymityReport {
    pub fn build(
        pool: &PoolConfig,
        events: &[PoolEvent],
        t: u64,
        results: &[&HeuristicResult],
        combined: Option<&HeuristicResult>,
    ) -> Self {
        let oas_size = observed_anonymity_set(pool, events, t).len();
        let rows: Vec<SasRow> = results
            .iter()
            .map(|r| SasRow::new(tag_label(r), oas_size, r.sas.len()))
            .collect();
        let combined = combined.map(|c| SasRow::new(tag_label(c), oas_size, c.sas.len()));
        let headline = combined
            .as_ref()
            .map(|c| c.sas_size)
            .or_else(|| rows.iter().map(|r| r.sas_size).min());
        let adv_s = headline.and_then(|s| adversary_advantage(s).ok());
        AnonymityReport {
            pool_id: pool.pool_id.clone(),
            as_of: t,
            oas_size,
            rows,
            combined,
            tas_size: None,
            adv_o: adversary_advantage(oas_size).ok(),
            r_adv: match (&adv_s, oas_size) {
                (Some(s), n) if n > 0 => Some(s * Ratio::from_integer(n as u128) - Ratio::one()),
                _ => None,
            },
            adv_s,
        }
    }
}

fn tag_label(r: &HeuristicResult) -> String {
    r.heuristics
        .iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join("+")
}

/// Cluster size → (count, fraction of all clusters).
pub fn cluster_size_histogram(clusters: &[Cluster]) -> BTreeMap<usize, (usize, Ratio)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for c in clusters {
        *counts.entry(c.size()).or_default() += 1;
    }
    let total = clusters.len() as u128;
    counts
        .into_iter()
        .map(|(size, n)| (size, (n, ratio(n as u128, total))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayerUsage {
    pub relayers: usize,
    pub withdrawals: usize,
    pub relayed_withdrawals: usize,
    pub withdrawers: usize,
    pub relayed_withdrawers: usize,
}

impl RelayerUsage {
    pub fn withdrawal_share(&self) -> Ratio {
        share(self.relayed_withdrawals, self.withdrawals)
    }

    pub fn withdrawer_share(&self) -> Ratio {
        share(self.relayed_withdrawers, self.withdrawers)
    }
}

fn share(part: usize, whole: usize) -> Ratio {
    if whole == 0 {
        Ratio::zero()
    } else {
        ratio(part as u128, whole as u128)
    }
}

/// Relayer counts over the withdrawals of one pool. A withdrawer uses
/// relayers if at least one of its withdrawals was relayed.
pub fn relayer_usage(pool: &PoolConfig, events: &[PoolEvent]) -> RelayerUsage {
    let withdrawals: Vec<&PoolEvent> = events
        .iter()
        .filter(|e| e.pool_id == pool.pool_id && e.is_withdrawal())
        .collect();
    let relayers: BTreeSet<Address> = withdrawals.iter().filter_map(|e| e.relayer).collect();
    let withdrawers: BTreeSet<Address> = withdrawals.iter().map(|e| e.actor).collect();
    let relayed_withdrawers: BTreeSet<Address> = withdrawals
        .iter()
        .filter(|e| e.relayer.is_some())
        .map(|e| e.actor)
        .collect();
    RelayerUsage {
        relayers: relayers.len(),
        withdrawals: withdrawals.len(),
        relayed_withdrawals: withdrawals.iter().filter(|e| e.relayer.is_some()).count(),
        withdrawers: withdrawers.len(),
        relayed_withdrawers: relayed_withdrawers.len(),
    }
}

/// Default fund-then-deposit threshold: 1,881 whole coins.
pub fn default_flag_threshold(decimals: u32) -> Result<Amount> {
    Amount::scaled(1881, decimals)
        .ok_or_else(|| Error::Config(format!("{decimals} decimals overflow")))
}

/// Evidence for one withdraw-then-deposit address.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FundThenDeposit {
    pub address: Address,
    pub first_withdrawal: PoolEvent,
    pub first_deposit: PoolEvent,
    pub total_deposited: Amount,
    pub labeled_malicious: bool,
}

/// Addresses whose first withdrawal (any pool) precedes their first deposit
/// and whose total deposited value reaches `min_deposit`.
pub fn fund_then_deposit_flags(
    pools: &[PoolConfig],
    events: &[PoolEvent],
    labels: &LabelBook,
    min_deposit: Amount,
) -> Result<Vec<FundThenDeposit>> {
    let denominations: BTreeMap<&str, u128> = pools
        .iter()
        .map(|p| (p.pool_id.as_str(), p.denomination.0))
        .collect();
    struct Seen<'a> {
        first_withdrawal: Option<&'a PoolEvent>,
        first_deposit: Option<&'a PoolEvent>,
        deposited: u128,
    }
    let mut by_address: BTreeMap<Address, Seen> = BTreeMap::new();
    let mut ordered: Vec<&PoolEvent> = events.iter().collect();
    ordered.sort_by(|a, b| a.bn.cmp(&b.bn).then_with(|| a.pool_id.cmp(&b.pool_id)));
    for e in ordered {
        let denom = *denominations
            .get(e.pool_id.as_str())
            .ok_or_else(|| Error::input(format!("event for unknown pool {}", e.pool_id)))?;
        let seen = by_address.entry(e.actor).or_insert(Seen {
            first_withdrawal: None,
            first_deposit: None,
            deposited: 0,
        });
        match e.kind {
            EventKind::Withdrawal => {
                seen.first_withdrawal.get_or_insert(e);
            }
            EventKind::Deposit => {
                seen.first_deposit.get_or_insert(e);
                seen.deposited += denom;
            }
        }
    }
    Ok(by_address
        .into_iter()
        .filter_map(|(address, seen)| {
            let (w, d) = (seen.first_withdrawal?, seen.first_deposit?);
            (w.bn < d.bn && seen.deposited >= min_deposit.0).then(|| FundThenDeposit {
                address,
                first_withdrawal: w.clone(),
                first_deposit: d.clone(),
                total_deposited: Amount(seen.deposited),
                labeled_malicious: labels.has(&address, Label::Malicious),
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::clusters_from_links;
    use crate::ledger::fixtures::{addr, p100};
    use crate::ledger::{pool_state, LinkPair, LinkSource};
    use crate::ratio::{parse_decimal, render_fixed, render_percent};

    #[test]
    fn oas_is_unique_depositors() {
        let (pool, events, [d1, d2, _]) = p100();
        assert_eq!(
            observed_anonymity_set(&pool, &events, 100),
            BTreeSet::from([d1, d2])
        );
        assert_eq!(
            observed_anonymity_set(&pool, &events, 10),
            BTreeSet::from([d1])
        );
    }

    #[test]
    fn tas_requires_ground_truth() {
        let (pool, events, _) = p100();
        let state = pool_state(&pool, &events, 100).unwrap();
        assert!(matches!(true_anonymity_set(&state), Err(Error::Mode(_))));
    }

    #[test]
    fn tas_follows_note_owners() {
        let (pool, events, [d1, d2, _]) = p100();
        // w1 spent d1's note
        let spends = vec![NoteSpend {
            pool_id: "P100".into(),
            withdrawal: BlockNumber::at(13),
            deposit: BlockNumber::at(10),
        }];
        let state = resolve_ground_truth_state(&pool, &events, &spends, 100).unwrap();
        assert_eq!(true_anonymity_set(&state).unwrap(), BTreeSet::from([d2]));
        assert_eq!(state.balance(&d1), 0);
        assert_eq!(
            state.total(),
            pool_state(&pool, &events, 100).unwrap().total()
        );
    }

    #[test]
    fn advantage_and_relative_increase() {
        assert_eq!(adversary_advantage(4).unwrap(), ratio(1, 4));
        assert_eq!(adversary_advantage(1).unwrap(), ratio(1, 1));
        assert!(adversary_advantage(0).is_err());
        assert_eq!(relative_advantage_increase(10, 10).unwrap(), Ratio::zero());
        assert_eq!(relative_advantage_increase(10, 5).unwrap(), ratio(1, 1));
        assert!(relative_advantage_increase(10, 0).is_err());
    }

    #[test]
    fn relative_increase_from_rounded_reductions() {
        let a = relative_advantage_from_reduction(&parse_decimal("0.3418").unwrap()).unwrap();
        assert_eq!(render_percent(&a), "51.93%");
        let b = relative_advantage_from_reduction(&parse_decimal("0.5207").unwrap()).unwrap();
        assert_eq!(render_percent(&b), "108.64%");
        assert!(relative_advantage_from_reduction(&Ratio::one()).is_err());
    }

    #[test]
    fn histogram_counts_sizes() {
        let links: Vec<LinkPair> = [(1, 2), (3, 4), (5, 6), (6, 7), (7, 8), (8, 9)]
            .iter()
            .map(|&(a, b)| LinkPair::positive(addr(a), addr(b), LinkSource::Manual).unwrap())
            .collect();
        let hist = cluster_size_histogram(&clusters_from_links(&links));
        assert_eq!(hist[&2].0, 2);
        assert_eq!(hist[&5].0, 1);
        let total: Ratio = hist.values().map(|(_, f)| *f).sum();
        assert_eq!(total, Ratio::one());
        assert!(cluster_size_histogram(&[]).is_empty());
    }

    #[test]
    fn relayer_shares() {
        let pool = PoolConfig::new("P", "ETH", Amount(1), 10).unwrap();
        let events = vec![
            PoolEvent::relayed_withdrawal("P", BlockNumber::at(1), addr(1), addr(9)),
            PoolEvent::relayed_withdrawal("P", BlockNumber::at(2), addr(1), addr(9)),
            PoolEvent::withdrawal("P", BlockNumber::at(3), addr(2)),
        ];
        let u = relayer_usage(&pool, &events);
        assert_eq!(u.relayers, 1);
        assert_eq!(
            render_fixed(&(u.withdrawal_share() * Ratio::from_integer(100)), 1),
            "66.7"
        );
        assert_eq!(u.withdrawer_share(), ratio(1, 2));
        let none = relayer_usage(&pool, &[]);
        assert_eq!(none.withdrawal_share(), Ratio::zero());
    }

    #[test]
    fn flags_withdraw_then_large_deposit() {
        let pools = vec![
            PoolConfig::new("P10", "ETH", Amount(10), 50).unwrap(),
            PoolConfig::new("P100", "ETH", Amount(100), 400).unwrap(),
        ];
        let mut events = vec![PoolEvent::withdrawal("P10", BlockNumber::at(100), addr(1))];
        for i in 0..58 {
            events.push(PoolEvent::deposit(
                "P100",
                BlockNumber::new(500, i, 0),
                addr(1),
            ));
        }
        events.push(PoolEvent::deposit(
            "P10",
            BlockNumber::new(500, 99, 0),
            addr(1),
        ));
        // deposit-first address
        events.push(PoolEvent::deposit("P100", BlockNumber::at(50), addr(2)));
        events.push(PoolEvent::withdrawal("P100", BlockNumber::at(60), addr(2)));
        // withdraw-first, small deposit
        events.push(PoolEvent::withdrawal("P10", BlockNumber::at(70), addr(3)));
        events.push(PoolEvent::deposit("P10", BlockNumber::at(80), addr(3)));

        let mut labels = LabelBook::new();
        labels.insert(addr(1), Label::Malicious);
        let flags = fund_then_deposit_flags(&pools, &events, &labels, Amount(1000)).unwrap();
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].address, addr(1));
        assert_eq!(flags[0].total_deposited, Amount(5810));
        assert!(flags[0].labeled_malicious);
        assert_eq!(flags[0].first_withdrawal.bn, BlockNumber::at(100));
    }

    #[test]
    fn default_threshold_scales() {
        assert_eq!(default_flag_threshold(0).unwrap(), Amount(1881));
        assert_eq!(default_flag_threshold(2).unwrap(), Amount(188_100));
    }
}

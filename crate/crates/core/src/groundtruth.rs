//! Side-channel link evidence and scoring of heuristic links against it.
//!
//! Positive evidence (same owner) comes from airdrop consolidation and ENS
//! name handovers; negative evidence (distinct owners) from social follow
//! edges between a depositor and a withdrawer.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ledger::{Address, Amount, BlockNumber, LinkPair, LinkSource, Polarity, Transfer};
use crate::ratio::{ratio, Ratio};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AirdropClaim {
    pub recipient: Address,
    pub bn: BlockNumber,
    pub token: String,
    pub amount: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EnsTransfer {
    pub name: String,
    pub from: Address,
    pub to: Address,
    pub bn: BlockNumber,
    /// Height at which the name expires, if known.
    pub expiry: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EnsSubdomain {
    pub name: String,
    pub owner: Address,
    pub assignee: Address,
    pub bn: BlockNumber,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FollowEdge {
    pub follower: Address,
    pub followed: Address,
}

fn clique(
    members: &BTreeSet<Address>,
    source: LinkSource,
    out: &mut BTreeSet<LinkPair>,
) -> Result<()> {
    let list: Vec<&Address> = members.iter().collect();
    for (i, a) in list.iter().enumerate() {
        for b in &list[i + 1..] {
            out.insert(LinkPair::positive(**a, **b, source)?);
        }
    }
    Ok(())
}

/// Recipients that forward an airdropped token to one shared address within
/// `window` blocks of receiving it are linked to each other and to that
/// address. A lone forwarder is not evidence of aggregation.
pub fn airdrop_links(
    claims: &[AirdropClaim],
    token_transfers: &[Transfer],
    window: u64,
) -> Result<BTreeSet<LinkPair>> {
    if window == 0 {
        return Err(Error::input("airdrop window must be positive"));
    }
    let mut outgoing: BTreeMap<(Address, &str), Vec<&Transfer>> = BTreeMap::new();
    for t in token_transfers {
        outgoing
            .entry((t.from, t.coin.as_str()))
            .or_default()
            .push(t);
    }
    let mut central: BTreeMap<(&str, Address), BTreeSet<Address>> = BTreeMap::new();
    for claim in claims {
        let Some(sent) = outgoing.get(&(claim.recipient, claim.token.as_str())) else {
            continue;
        };
        let deadline = claim.bn.height.saturating_add(window);
        for t in sent {
            if t.bn > claim.bn
                && t.bn.height <= deadline
                && t.to != claim.recipient
                && t.to != Address::ZERO
            {
                central
                    .entry((claim.token.as_str(), t.to))
                    .or_default()
                    .insert(claim.recipient);
            }
        }
    }
    let mut links = BTreeSet::new();
    for ((_, hub), recipients) in central {
        if recipients.len() < 2 {
            continue;
        }
        let mut members = recipients;
        members.insert(hub);
        clique(&members, LinkSource::Airdrop, &mut links)?;
    }
    Ok(links)
}

/// `from` handed a name to `to` before it expired, and handed that name
/// on only once.
pub fn ens_transfer_links(transfers: &[EnsTransfer]) -> Result<BTreeSet<LinkPair>> {
    let mut counts: BTreeMap<(Address, &str), usize> = BTreeMap::new();
    for t in transfers {
        *counts.entry((t.from, t.name.as_str())).or_default() += 1;
    }
    let mut links = BTreeSet::new();
    for t in transfers {
        if t.from == t.to || t.from == Address::ZERO || t.to == Address::ZERO {
            continue;
        }
        if counts[&(t.from, t.name.as_str())] != 1 {
            continue;
        }
        if t.expiry.is_some_and(|e| t.bn.height >= e) {
            continue;
        }
        links.insert(LinkPair::positive(t.from, t.to, LinkSource::EnsTransfer)?);
    }
    Ok(links)
}

/// Parent-name owner linked to every other address it assigned a
/// subdomain to.
pub fn ens_subdomain_links(assignments: &[EnsSubdomain]) -> Result<BTreeSet<LinkPair>> {
    assignments
        .iter()
        .filter(|s| {
            s.owner != s.assignee && s.owner != Address::ZERO && s.assignee != Address::ZERO
        })
        .map(|s| LinkPair::positive(s.owner, s.assignee, LinkSource::EnsSubdomain))
        .collect()
}

/// A depositor and a withdrawer where either follows the other are taken to
/// have distinct owners.
pub fn debank_negative_pairs(
    edges: &[FollowEdge],
    depositors: &BTreeSet<Address>,
    withdrawers: &BTreeSet<Address>,
) -> Result<BTreeSet<LinkPair>> {
    let mut out = BTreeSet::new();
    for e in edges {
        if e.follower == e.followed {
            continue;
        }
        let crosses = (depositors.contains(&e.follower) && withdrawers.contains(&e.followed))
            || (withdrawers.contains(&e.follower) && depositors.contains(&e.followed));
        if crosses {
            out.insert(LinkPair::new(
                e.follower,
                e.followed,
                LinkSource::Debank,
                Polarity::Negative,
            )?);
        }
    }
    Ok(out)
}

/// Positive and negative evidence, consistent within each source.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SideChannelSet {
    pub positive: BTreeSet<LinkPair>,
    pub negative: BTreeSet<LinkPair>,
}

impl SideChannelSet {
    pub fn from_links<I: IntoIterator<Item = LinkPair>>(links: I) -> Result<Self> {
        let mut set = SideChannelSet::default();
        for l in links {
            match l.polarity {
                Polarity::Positive => set.positive.insert(l),
                Polarity::Negative => set.negative.insert(l),
            };
        }
        let pos: BTreeSet<_> = set.positive.iter().map(|l| (l.source, l.key())).collect();
        if let Some(l) = set
            .negative
            .iter()
            .find(|l| pos.contains(&(l.source, l.key())))
        {
            return Err(Error::input(format!(
                "{} reports ({}, {}) as both linked and unlinked",
                l.source, l.a1, l.a2
            )));
        }
        Ok(set)
    }

    pub fn positive_keys(&self) -> BTreeSet<(Address, Address)> {
        keys(&self.positive)
    }

    pub fn negative_keys(&self) -> BTreeSet<(Address, Address)> {
        keys(&self.negative)
    }
}

pub fn keys<'a, I: IntoIterator<Item = &'a LinkPair>>(links: I) -> BTreeSet<(Address, Address)> {
    links.into_iter().map(LinkPair::key).collect()
}

/// The candidate pairs a score is computed over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TestUniverse {
    /// Every unordered pair {l, r} with l ∈ left, r ∈ right, l ≠ r.
    Product {
        left: BTreeSet<Address>,
        right: BTreeSet<Address>,
    },
    Pairs(BTreeSet<(Address, Address)>),
}

impl TestUniverse {
    pub fn size(&self) -> u128 {
        match self {
            TestUniverse::Product { left, right } => {
                let both = left.intersection(right).count() as u128;
                left.len() as u128 * right.len() as u128 - both - both * both.saturating_sub(1) / 2
            }
            TestUniverse::Pairs(p) => p.len() as u128,
        }
    }

    pub fn contains(&self, key: &(Address, Address)) -> bool {
        let (a, b) = key;
        match self {
            TestUniverse::Product { left, right } => {
                a != b
                    && ((left.contains(a) && right.contains(b))
                        || (left.contains(b) && right.contains(a)))
            }
            TestUniverse::Pairs(p) => p.contains(key),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TestUniverse::Product { left, right } => {
                format!("{} depositors x {} withdrawers", left.len(), right.len())
            }
            TestUniverse::Pairs(p) => format!("{} listed pairs", p.len()),
        }
    }
}

/// Restrict positive evidence to depositor–withdrawer pairs and build the
/// universe of all such pairs among the evidence addresses.
pub fn depositor_withdrawer_universe(
    positive: &BTreeSet<(Address, Address)>,
    depositors: &BTreeSet<Address>,
    withdrawers: &BTreeSet<Address>,
) -> (TestUniverse, BTreeSet<(Address, Address)>) {
    let involved: BTreeSet<Address> = positive.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let universe = TestUniverse::Product {
        left: involved.intersection(depositors).copied().collect(),
        right: involved.intersection(withdrawers).copied().collect(),
    };
    let kept = positive
        .iter()
        .filter(|k| universe.contains(k))
        .copied()
        .collect();
    (universe, kept)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub universe: String,
    pub universe_size: u128,
    pub tp: u128,
    pub tn: u128,
    pub fp: u128,
    #[serde(rename = "fn")]
    pub fn_: u128,
    #[serde(skip)]
    pub precision: Ratio,
    #[serde(skip)]
    pub recall: Ratio,
    #[serde(skip)]
    pub f1: Ratio,
    /// Heuristic pairs that follow edges say belong to different owners.
    pub negative_signal_fp: u128,
}

/// Confusion counts of heuristic pairs against positive evidence over a
/// test universe. Heuristic pairs outside the universe are ignored.
pub fn score_links(
    heuristic: &BTreeSet<(Address, Address)>,
    gt_positive: &BTreeSet<(Address, Address)>,
    gt_negative: &BTreeSet<(Address, Address)>,
    universe: &TestUniverse,
) -> Result<ValidationReport> {
    if let Some((a, b)) = gt_positive.iter().find(|k| !universe.contains(k)) {
        return Err(Error::input(format!(
            "ground-truth pair ({a}, {b}) lies outside the test universe"
        )));
    }
    let predicted: BTreeSet<&(Address, Address)> =
        heuristic.iter().filter(|k| universe.contains(k)).collect();
    let tp = predicted.iter().filter(|k| gt_positive.contains(k)).count() as u128;
    let fp = predicted.len() as u128 - tp;
    let fn_ = gt_positive.len() as u128 - tp;
    let size = universe.size();
    let tn = size - tp - fp - fn_;
    let precision = if tp + fp == 0 {
        Ratio::zero()
    } else {
        ratio(tp, tp + fp)
    };
    let recall = if tp + fn_ == 0 {
        Ratio::zero()
    } else {
        ratio(tp, tp + fn_)
    };
    let f1 = if tp == 0 {
        Ratio::zero()
    } else {
        ratio(2 * tp, 2 * tp + fp + fn_)
    };
    let negative_signal_fp = predicted.iter().filter(|k| gt_negative.contains(k)).count() as u128;
    Ok(ValidationReport {
        universe: universe.describe(),
        universe_size: size,
        tp,
        tn,
        fp,
        fn_,
        precision,
        recall,
        f1,
        negative_signal_fp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::fixtures::addr;
    use crate::ratio::render_fixed;

    fn tok(h: u64, from: u8, to: u8) -> Transfer {
        Transfer::new(BlockNumber::at(h), addr(from), addr(to), Amount(1), "AIR")
    }

    fn drop(h: u64, to: u8) -> AirdropClaim {
        AirdropClaim {
            recipient: addr(to),
            bn: BlockNumber::at(h),
            token: "AIR".into(),
            amount: Amount(1),
        }
    }

    #[test]
    fn airdrop_aggregation_links_clique() {
        let links = airdrop_links(
            &[drop(10, 1), drop(10, 2)],
            &[tok(12, 1, 9), tok(15, 2, 9)],
            10,
        )
        .unwrap();
        assert_eq!(
            keys(&links),
            BTreeSet::from([(addr(1), addr(2)), (addr(1), addr(9)), (addr(2), addr(9))])
        );
        // second forward lands after the window
        let late = airdrop_links(
            &[drop(10, 1), drop(10, 2)],
            &[tok(12, 1, 9), tok(25, 2, 9)],
            10,
        )
        .unwrap();
        assert!(late.is_empty());
        let lone = airdrop_links(&[drop(10, 1)], &[tok(12, 1, 9)], 10).unwrap();
        assert!(lone.is_empty());
        assert!(airdrop_links(&[], &[], 0).is_err());
    }

    fn ens(name: &str, from: u8, to: u8, h: u64, expiry: Option<u64>) -> EnsTransfer {
        EnsTransfer {
            name: name.into(),
            from: addr(from),
            to: addr(to),
            bn: BlockNumber::at(h),
            expiry,
        }
    }

    #[test]
    fn ens_transfer_rules() {
        let one = ens_transfer_links(&[ens("a.eth", 1, 2, 5, Some(100))]).unwrap();
        assert_eq!(keys(&one), BTreeSet::from([(addr(1), addr(2))]));
        let twice = ens_transfer_links(&[ens("a.eth", 1, 2, 5, None), ens("a.eth", 1, 3, 6, None)])
            .unwrap();
        assert!(twice.is_empty());
        let expired = ens_transfer_links(&[ens("a.eth", 1, 2, 100, Some(100))]).unwrap();
        assert!(expired.is_empty());
    }

    #[test]
    fn ens_subdomain_rules() {
        let sub = |owner, assignee| EnsSubdomain {
            name: "x.a.eth".into(),
            owner: addr(owner),
            assignee: addr(assignee),
            bn: BlockNumber::at(1),
        };
        assert_eq!(ens_subdomain_links(&[sub(1, 2)]).unwrap().len(), 1);
        assert!(ens_subdomain_links(&[sub(1, 1)]).unwrap().is_empty());
        assert_eq!(
            ens_subdomain_links(&[sub(1, 2), sub(1, 3)]).unwrap().len(),
            2
        );
    }

    #[test]
    fn follow_edges_either_direction() {
        let d = BTreeSet::from([addr(1)]);
        let w = BTreeSet::from([addr(2)]);
        let edge = |a, b| FollowEdge {
            follower: addr(a),
            followed: addr(b),
        };
        assert_eq!(
            debank_negative_pairs(&[edge(1, 2)], &d, &w).unwrap().len(),
            1
        );
        assert_eq!(
            debank_negative_pairs(&[edge(2, 1)], &d, &w).unwrap().len(),
            1
        );
        assert!(debank_negative_pairs(&[edge(3, 4)], &d, &w)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn side_channels_reject_contradictions() {
        let pos = LinkPair::positive(addr(1), addr(2), LinkSource::Debank).unwrap();
        let neg = LinkPair::new(addr(1), addr(2), LinkSource::Debank, Polarity::Negative).unwrap();
        assert!(SideChannelSet::from_links([pos, neg]).is_err());
        let other = LinkPair::positive(addr(1), addr(2), LinkSource::Airdrop).unwrap();
        assert!(SideChannelSet::from_links([other, neg]).is_ok());
    }

    #[test]
    fn universe_sizes() {
        let l: BTreeSet<Address> = (1..=4).map(addr).collect();
        let r: BTreeSet<Address> = (3..=6).map(addr).collect();
        let u = TestUniverse::Product {
            left: l.clone(),
            right: r.clone(),
        };
        // brute force over unordered pairs
        let mut pairs = BTreeSet::new();
        for a in &l {
            for b in &r {
                if a != b {
                    pairs.insert((*a.min(b), *a.max(b)));
                }
            }
        }
        assert_eq!(u.size(), pairs.len() as u128);
        assert!(pairs.iter().all(|k| u.contains(k)));
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let l: BTreeSet<Address> = (1..=3).map(addr).collect();
        let r: BTreeSet<Address> = (4..=6).map(addr).collect();
        let gt = BTreeSet::from([(addr(1), addr(4)), (addr(2), addr(5))]);
        let u = TestUniverse::Product { left: l, right: r };
        let rep = score_links(&gt, &gt, &BTreeSet::new(), &u).unwrap();
        assert_eq!((rep.tp, rep.fp, rep.fn_, rep.tn), (2, 0, 0, 7));
        assert_eq!(render_fixed(&rep.f1, 2), "1.00");
        let empty = score_links(&BTreeSet::new(), &gt, &BTreeSet::new(), &u).unwrap();
        assert_eq!(empty.f1, Ratio::zero());
        let outside = BTreeSet::from([(addr(1), addr(2))]);
        assert!(score_links(&gt, &outside, &BTreeSet::new(), &u).is_err());
    }
}

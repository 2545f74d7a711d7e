//! Anonymity points and withdrawal recovery from point claims.
//!
//! A user earns `weight × (t_w − t_d)` points per spent note, summed over
//! pools, and the converted point total becomes public when claimed. Knowing
//! the deposit blocks and the claimed total, the withdrawal blocks can be
//! solved for: directly for a single deposit, by bounded subset-sum search
//! for several deposits in one pool.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphindex::LedgerIndex;
use crate::heuristics::h1_reuse;
use crate::ledger::{Address, Amount, BlockNumber, PoolConfig, PoolEvent};
use crate::metrics::{observed_anonymity_set, relative_advantage_increase};
use crate::ratio::Ratio;

pub const DEFAULT_SEARCH_CAP: u64 = 1_000_000;

/// Solutions kept per claim before the list is truncated.
pub const MAX_SOLUTIONS: usize = 1024;

/// Point weight per pool denomination.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AMWeights {
    by_denomination: BTreeMap<Amount, u64>,
}

impl AMWeights {
    /// Weights 10, 20, 50 and 400 for the 0.1, 1, 10 and 100 coin pools of a
    /// coin with `decimals` fractional digits.
    pub fn standard(decimals: u32) -> Result<Self> {
        if decimals == 0 {
            return Err(Error::Config(
                "standard weights need at least one decimal".into(),
            ));
        }
        let coin = 10u128
            .checked_pow(decimals)
            .ok_or_else(|| Error::Config(format!("{decimals} decimals overflow")))?;
        Ok(AMWeights::default()
            .with(Amount(coin / 10), 10)
            .with(Amount(coin), 20)
            .with(Amount(coin * 10), 50)
            .with(Amount(coin * 100), 400))
    }

    pub fn from_pools(pools: &[PoolConfig]) -> Self {
        pools.iter().fold(AMWeights::default(), |w, p| {
            w.with(p.denomination, p.am_weight)
        })
    }

    pub fn with(mut self, denomination: Amount, weight: u64) -> Self {
        self.by_denomination.insert(denomination, weight);
        self
    }

    pub fn get(&self, denomination: Amount) -> Option<u64> {
        self.by_denomination.get(&denomination).copied()
    }
}

/// A point conversion observed on chain.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct APClaim {
    pub recipient: Address,
    pub bn: BlockNumber,
    pub ap: u64,
}

/// Points for one user: per denomination, deposits and withdrawals are paired
/// in block order and every pair contributes `weight × (t_w − t_d)`.
pub fn anonymity_points(
    deposits: &BTreeMap<Amount, Vec<u64>>,
    withdrawals: &BTreeMap<Amount, Vec<u64>>,
    weights: &AMWeights,
) -> Result<u64> {
    let mut total: u64 = 0;
    let empty = Vec::new();
    let denominations: BTreeSet<&Amount> = deposits.keys().chain(withdrawals.keys()).collect();
    for denom in denominations {
        let mut d = deposits.get(denom).unwrap_or(&empty).clone();
        let mut w = withdrawals.get(denom).unwrap_or(&empty).clone();
        if d.len() != w.len() {
            return Err(Error::domain(format!(
                "pool {denom}: {} deposits but {} withdrawals",
                d.len(),
                w.len()
            )));
        }
        let weight = weights
            .get(*denom)
            .ok_or_else(|| Error::input(format!("no weight for denomination {denom}")))?;
        d.sort_unstable();
        w.sort_unstable();
        for (td, tw) in d.iter().zip(&w) {
            if tw < td {
                return Err(Error::domain(format!(
                    "withdrawal at {tw} precedes deposit at {td}"
                )));
            }
            let gain = weight
                .checked_mul(tw - td)
                .and_then(|g| total.checked_add(g))
                .ok_or_else(|| Error::domain("anonymity points overflow"))?;
            total = gain;
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimantCategory {
    OneOneOne,
    NOneOne,
    NNN,
    NonDepositor,
}

impl fmt::Display for ClaimantCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClaimantCategory::OneOneOne => "one-one-one",
            ClaimantCategory::NOneOne => "n-one-one",
            ClaimantCategory::NNN => "n-n-n",
            ClaimantCategory::NonDepositor => "non-depositor",
        })
    }
}

/// Category of a claim recipient by its deposit and claim counts. `None`
/// when the address never claimed.
pub fn classify_claimant(
    address: &Address,
    deposits: &[PoolEvent],
    claims: &[APClaim],
) -> Option<ClaimantCategory> {
    let n_claims = claims.iter().filter(|c| c.recipient == *address).count();
    if n_claims == 0 {
        return None;
    }
    let own: Vec<&PoolEvent> = deposits
        .iter()
        .filter(|e| e.is_deposit() && e.actor == *address)
        .collect();
    let pools: BTreeSet<&str> = own.iter().map(|e| e.pool_id.as_str()).collect();
    Some(match (own.len(), pools.len(), n_claims) {
        (0, _, _) => ClaimantCategory::NonDepositor,
        (1, 1, 1) => ClaimantCategory::OneOneOne,
        (_, 1, 1) => ClaimantCategory::NOneOne,
        _ => ClaimantCategory::NNN,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkStatus {
    Exact,
    Inconclusive,
    None,
}

impl fmt::Display for LinkStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkStatus::Exact => "exact",
            LinkStatus::Inconclusive => "inconclusive",
            LinkStatus::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkSolution {
    /// Candidate withdrawal tuples, each sorted and paired with the sorted
    /// deposits.
    pub tuples: Vec<Vec<BlockNumber>>,
    /// Unexplained points: `ap mod weight` when the claim is not a multiple
    /// of the weight, the block gap when no withdrawal fits, 0 when exact.
    pub residual: u64,
    pub status: LinkStatus,
    /// Search nodes visited (multi-deposit solver only).
    pub explored: u64,
    /// More solutions existed than were kept.
    pub truncated: bool,
}

impl LinkSolution {
    fn none(residual: u64) -> Self {
        LinkSolution {
            tuples: Vec::new(),
            residual,
            status: LinkStatus::None,
            explored: 0,
            truncated: false,
        }
    }
}

/// Single deposit: `t_w = t_d + ap/weight`, exact when some withdrawal of
/// the pool sits at that height before the claim. Every withdrawal at that
/// height is returned.
pub fn solve_single_claim(
    td: u64,
    claim: &APClaim,
    weight: u64,
    withdrawals: &[BlockNumber],
) -> LinkSolution {
    if weight == 0 || !claim.ap.is_multiple_of(weight) {
        return LinkSolution::none(if weight == 0 {
            claim.ap
        } else {
            claim.ap % weight
        });
    }
    let gap = claim.ap / weight;
    let Some(tw) = td.checked_add(gap) else {
        return LinkSolution::none(gap);
    };
    if gap == 0 || tw >= claim.bn.height {
        return LinkSolution::none(gap);
    }
    let start = withdrawals.partition_point(|w| w.height < tw);
    let tuples: Vec<Vec<BlockNumber>> = withdrawals[start..]
        .iter()
        .take_while(|w| w.height == tw)
        .map(|w| vec![*w])
        .collect();
    if tuples.is_empty() {
        return LinkSolution::none(gap);
    }
    LinkSolution {
        tuples,
        residual: 0,
        status: LinkStatus::Exact,
        explored: 0,
        truncated: false,
    }
}

struct Search<'a> {
    heights: &'a [u64],
    blocks: &'a [BlockNumber],
    /// prefix[i] = sum of heights[..i]
    prefix: Vec<u128>,
    deposits: &'a [u64],
    target: u128,
    cap: u64,
    explored: u64,
    capped: bool,
    chosen: Vec<usize>,
    found: Vec<Vec<BlockNumber>>,
    truncated: bool,
}

impl Search<'_> {
    fn range_sum(&self, from: usize, to: usize) -> u128 {
        self.prefix[to] - self.prefix[from]
    }

    fn dfs(&mut self, start: usize, sum: u128) {
        let k = self.chosen.len();
        let u = self.deposits.len();
        if k == u {
            if sum == self.target {
                if self.found.len() < MAX_SOLUTIONS {
                    self.found
                        .push(self.chosen.iter().map(|&i| self.blocks[i]).collect());
                } else {
                    self.truncated = true;
                }
            }
            return;
        }
        let m = self.heights.len();
        let rest = u - k - 1;
        for i in start..m {
            if m - i - 1 < rest {
                break;
            }
            if self.explored >= self.cap {
                self.capped = true;
                return;
            }
            let h = self.heights[i];
            // sorted pairing: the k-th withdrawal must follow the k-th deposit
            if h <= self.deposits[k] {
                continue;
            }
            let with = sum + h as u128;
            let smallest = with + self.range_sum(i + 1, i + 1 + rest);
            if smallest > self.target {
                break;
            }
            let largest = with + self.range_sum(m - rest, m);
            if largest < self.target {
                continue;
            }
            self.explored += 1;
            self.chosen.push(i);
            self.dfs(i + 1, with);
            self.chosen.pop();
            if self.capped {
                return;
            }
        }
    }
}

/// Several deposits in one pool: find every set of distinct withdrawals of
/// the pool, each before the claim, whose sorted pairing with the sorted
/// deposits keeps every withdrawal after its deposit and whose total gap is
/// `ap/weight`. Depth-first over sorted heights with prefix-sum bounds;
/// exceeding `search_cap` visited nodes makes the result inconclusive.
pub fn solve_multi_claim(
    deposits: &[u64],
    claim: &APClaim,
    weight: u64,
    withdrawals: &[BlockNumber],
    search_cap: u64,
) -> Result<LinkSolution> {
    if deposits.len() < 2 {
        return Err(Error::input(
            "multi-deposit solver needs at least two deposits",
        ));
    }
    if search_cap == 0 {
        return Err(Error::input("search cap must be positive"));
    }
    if weight == 0 || !claim.ap.is_multiple_of(weight) {
        return Ok(LinkSolution::none(if weight == 0 {
            claim.ap
        } else {
            claim.ap % weight
        }));
    }
    let mut tds = deposits.to_vec();
    tds.sort_unstable();
    let gap = (claim.ap / weight) as u128;
    let target = gap + tds.iter().map(|&d| d as u128).sum::<u128>();

    let min_deposit = tds[0];
    let mut blocks: Vec<BlockNumber> = withdrawals
        .iter()
        .filter(|w| w.height > min_deposit && w.height < claim.bn.height)
        .copied()
        .collect();
    blocks.sort();
    let heights: Vec<u64> = blocks.iter().map(|b| b.height).collect();
    let mut prefix = vec![0u128; heights.len() + 1];
    for (i, h) in heights.iter().enumerate() {
        prefix[i + 1] = prefix[i] + *h as u128;
    }
    let mut search = Search {
        heights: &heights,
        blocks: &blocks,
        prefix,
        deposits: &tds,
        target,
        cap: search_cap,
        explored: 0,
        capped: false,
        chosen: Vec::new(),
        found: Vec::new(),
        truncated: false,
    };
    search.dfs(0, 0);
    let status = if search.capped {
        LinkStatus::Inconclusive
    } else if search.found.is_empty() {
        LinkStatus::None
    } else {
        LinkStatus::Exact
    };
    Ok(LinkSolution {
        residual: if status == LinkStatus::Exact {
            0
        } else {
            gap as u64
        },
        tuples: search.found,
        status,
        explored: search.explored,
        truncated: search.truncated,
    })
}

/// Outcome of linking one claim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClaimLink {
    pub claim: APClaim,
    pub category: ClaimantCategory,
    /// The single pool the claimant used, when there is one.
    pub pool_id: Option<String>,
    pub deposits: Vec<BlockNumber>,
    /// Absent for categories the solvers do not handle.
    pub solution: Option<LinkSolution>,
}

/// Classify every claim recipient and solve the one-pool, one-claim cases.
pub fn link_claims(
    pools: &[PoolConfig],
    index: &LedgerIndex,
    claims: &[APClaim],
    search_cap: u64,
) -> Result<Vec<ClaimLink>> {
    let by_id: BTreeMap<&str, &PoolConfig> =
        pools.iter().map(|p| (p.pool_id.as_str(), p)).collect();
    let all_deposits: Vec<PoolEvent> = pools
        .iter()
        .flat_map(|p| {
            index
                .events(&p.pool_id)
                .iter()
                .filter(|e| e.is_deposit())
                .cloned()
        })
        .collect();
    let mut sorted = claims.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    for claim in sorted {
        let Some(category) = classify_claimant(&claim.recipient, &all_deposits, claims) else {
            continue;
        };
        let own: Vec<&PoolEvent> = all_deposits
            .iter()
            .filter(|e| e.actor == claim.recipient)
            .collect();
        let pool_ids: BTreeSet<&str> = own.iter().map(|e| e.pool_id.as_str()).collect();
        let pool_id = (pool_ids.len() == 1).then(|| pool_ids.iter().next().unwrap().to_string());
        let mut deposits: Vec<BlockNumber> = own.iter().map(|e| e.bn).collect();
        deposits.sort();
        let solution = match (&category, &pool_id) {
            (ClaimantCategory::OneOneOne | ClaimantCategory::NOneOne, Some(pid)) => {
                let pool = by_id[pid.as_str()];
                let withdrawals: Vec<BlockNumber> = index
                    .events(pid)
                    .iter()
                    .filter(|e| e.is_withdrawal())
                    .map(|e| e.bn)
                    .collect();
                let heights: Vec<u64> = deposits.iter().map(|b| b.height).collect();
                Some(if heights.len() == 1 {
                    solve_single_claim(heights[0], &claim, pool.am_weight, &withdrawals)
                } else {
                    solve_multi_claim(&heights, &claim, pool.am_weight, &withdrawals, search_cap)?
                })
            }
            _ => None,
        };
        out.push(ClaimLink {
            claim,
            category,
            pool_id,
            deposits,
            solution,
        });
    }
    Ok(out)
}

/// H1 evaluated separately before and from the launch block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AmEffect {
    pub launch: u64,
    pub pre_oas: usize,
    pub pre_sas: usize,
    pub post_oas: usize,
    pub post_sas: usize,
    pub pre_r_adv: Option<Ratio>,
    pub post_r_adv: Option<Ratio>,
}

/// Split a pool's history at `launch` and compare H1's relative advantage
/// in the two windows, each replayed as its own pool history.
pub fn am_effect_on_h1(pool: &PoolConfig, events: &[PoolEvent], launch: u64) -> Result<AmEffect> {
    let own: Vec<PoolEvent> = events
        .iter()
        .filter(|e| e.pool_id == pool.pool_id)
        .cloned()
        .collect();
    let (lo, hi) = match (
        own.iter().map(|e| e.bn.height).min(),
        own.iter().map(|e| e.bn.height).max(),
    ) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(Error::input(format!("pool {} has no events", pool.pool_id))),
    };
    if launch < lo || launch > hi {
        return Err(Error::input(format!(
            "launch block {launch} outside the event range {lo}..={hi} of {}",
            pool.pool_id
        )));
    }
    let (pre, post): (Vec<PoolEvent>, Vec<PoolEvent>) =
        own.into_iter().partition(|e| e.bn.height < launch);
    let window = |events: &[PoolEvent], t: u64| -> Result<(usize, usize)> {
        let oas = observed_anonymity_set(pool, events, t).len();
        let sas = h1_reuse(pool, events, t)?.sas.len();
        Ok((oas, sas))
    };
    let (pre_oas, pre_sas) = window(&pre, launch.saturating_sub(1))?;
    let (post_oas, post_sas) = window(&post, hi)?;
    Ok(AmEffect {
        launch,
        pre_oas,
        pre_sas,
        post_oas,
        post_sas,
        pre_r_adv: relative_advantage_increase(pre_oas, pre_sas).ok(),
        post_r_adv: relative_advantage_increase(post_oas, post_sas).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::fixtures::addr;

    fn claim(h: u64, ap: u64) -> APClaim {
        APClaim {
            recipient: addr(1),
            bn: BlockNumber::at(h),
            ap,
        }
    }

    fn blocks(hs: &[u64]) -> Vec<BlockNumber> {
        hs.iter().map(|&h| BlockNumber::at(h)).collect()
    }

    #[test]
    fn points_for_a_single_pair() {
        let w = AMWeights::standard(0).err();
        assert!(w.is_some());
        let weights = AMWeights::default().with(Amount(100), 400);
        let d = BTreeMap::from([(Amount(100), vec![10])]);
        let wd = BTreeMap::from([(Amount(100), vec![15])]);
        assert_eq!(anonymity_points(&d, &wd, &weights).unwrap(), 2000);
        let same = BTreeMap::from([(Amount(100), vec![10])]);
        assert_eq!(anonymity_points(&d, &same, &weights).unwrap(), 0);
    }

    #[test]
    fn points_reject_unpaired_or_reversed() {
        let weights = AMWeights::default().with(Amount(1), 20);
        let d = BTreeMap::from([(Amount(1), vec![10, 20])]);
        let w = BTreeMap::from([(Amount(1), vec![30])]);
        assert!(matches!(
            anonymity_points(&d, &w, &weights),
            Err(Error::Domain(_))
        ));
        let d = BTreeMap::from([(Amount(1), vec![10])]);
        let w = BTreeMap::from([(Amount(1), vec![5])]);
        assert!(matches!(
            anonymity_points(&d, &w, &weights),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn standard_weights_by_denomination() {
        let w = AMWeights::standard(1).unwrap();
        assert_eq!(w.get(Amount(1)), Some(10));
        assert_eq!(w.get(Amount(10)), Some(20));
        assert_eq!(w.get(Amount(100)), Some(50));
        assert_eq!(w.get(Amount(1000)), Some(400));
        assert_eq!(w.get(Amount(7)), None);
    }

    #[test]
    fn classifies_claimants() {
        let dep = |p: &str, h, a| PoolEvent::deposit(p, BlockNumber::at(h), addr(a));
        let claims = vec![
            claim(100, 1),
            APClaim {
                recipient: addr(2),
                ..claim(100, 1)
            },
        ];
        let one = vec![dep("P1", 1, 1)];
        assert_eq!(
            classify_claimant(&addr(1), &one, &claims),
            Some(ClaimantCategory::OneOneOne)
        );
        let many = vec![dep("P1", 1, 1), dep("P1", 2, 1), dep("P1", 3, 1)];
        assert_eq!(
            classify_claimant(&addr(1), &many, &claims),
            Some(ClaimantCategory::NOneOne)
        );
        let pools = vec![dep("P1", 1, 1), dep("P10", 2, 1)];
        assert_eq!(
            classify_claimant(&addr(1), &pools, &claims),
            Some(ClaimantCategory::NNN)
        );
        assert_eq!(
            classify_claimant(&addr(2), &one, &claims),
            Some(ClaimantCategory::NonDepositor)
        );
        assert_eq!(classify_claimant(&addr(3), &one, &claims), None);
        let twice = vec![claim(100, 1), claim(200, 1)];
        assert_eq!(
            classify_claimant(&addr(1), &one, &twice),
            Some(ClaimantCategory::NNN)
        );
    }

    #[test]
    fn single_claim_closed_form() {
        let ws = blocks(&[900, 1005, 1100]);
        let s = solve_single_claim(1000, &claim(2000, 2000), 400, &ws);
        assert_eq!(s.status, LinkStatus::Exact);
        assert_eq!(s.tuples, vec![vec![BlockNumber::at(1005)]]);
        assert_eq!(
            solve_single_claim(1000, &claim(2000, 2001), 400, &ws).status,
            LinkStatus::None
        );
        // solved block not before the claim
        assert_eq!(
            solve_single_claim(1000, &claim(1005, 2000), 400, &ws).status,
            LinkStatus::None
        );
        // no withdrawal at the solved block
        assert_eq!(
            solve_single_claim(1000, &claim(2000, 2400), 400, &ws).status,
            LinkStatus::None
        );
    }

    #[test]
    fn single_claim_reports_every_withdrawal_in_block() {
        let ws = vec![BlockNumber::new(1005, 0, 0), BlockNumber::new(1005, 3, 1)];
        let s = solve_single_claim(1000, &claim(2000, 2000), 400, &ws);
        assert_eq!(s.status, LinkStatus::Exact);
        assert_eq!(s.tuples.len(), 2);
    }

    #[test]
    fn multi_claim_finds_pairing() {
        let ws = blocks(&[150, 260]);
        let s =
            solve_multi_claim(&[100, 200], &claim(1000, 110), 1, &ws, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(s.status, LinkStatus::Exact);
        assert_eq!(s.tuples, vec![blocks(&[150, 260])]);
        let s =
            solve_multi_claim(&[100, 200], &claim(1000, 111), 1, &ws, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(s.status, LinkStatus::None);
        let s =
            solve_multi_claim(&[100, 200], &claim(1000, 221), 2, &ws, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(s.status, LinkStatus::None);
        assert_eq!(s.residual, 1);
    }

    #[test]
    fn multi_claim_respects_cap() {
        let ws: Vec<BlockNumber> = (1..=60).map(|h| BlockNumber::at(100 + h)).collect();
        let s = solve_multi_claim(&[10, 20, 30], &claim(10_000, 300), 1, &ws, 5).unwrap();
        assert_eq!(s.status, LinkStatus::Inconclusive);
        assert!(solve_multi_claim(&[10], &claim(10_000, 300), 1, &ws, 5).is_err());
        assert!(solve_multi_claim(&[10, 20], &claim(10_000, 300), 1, &ws, 0).is_err());
    }

    #[test]
    fn am_effect_windows() {
        let pool = PoolConfig::new("P", "ETH", Amount(1), 20).unwrap();
        let events = vec![
            // pre: one reuser fully withdrawn out of two depositors
            PoolEvent::deposit("P", BlockNumber::at(1), addr(1)),
            PoolEvent::withdrawal("P", BlockNumber::at(2), addr(1)),
            PoolEvent::deposit("P", BlockNumber::at(3), addr(2)),
            // post: same shape
            PoolEvent::deposit("P", BlockNumber::at(10), addr(3)),
            PoolEvent::withdrawal("P", BlockNumber::at(11), addr(3)),
            PoolEvent::deposit("P", BlockNumber::at(12), addr(4)),
        ];
        let effect = am_effect_on_h1(&pool, &events, 10).unwrap();
        assert_eq!(effect.pre_r_adv, effect.post_r_adv);
        assert_eq!((effect.pre_oas, effect.pre_sas), (2, 1));
        assert!(am_effect_on_h1(&pool, &events, 50).is_err());
        assert!(am_effect_on_h1(&pool, &events, 0).is_err());
    }
}

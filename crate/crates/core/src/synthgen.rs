//! Seeded synthetic mixer traces with planted ground truth.
//!
//! Users are drawn from eight behavior classes. Each non-disciplined class
//! emits exactly the pattern one heuristic detects (or, for speculators and
//! attackers, a pattern the point solver or the flagger detects) and nothing
//! else: every class gets its own address range, every deposit is funded by a
//! labeled exchange, and every withdrawal to a fresh address goes through a
//! relayer.
//!
//! Randomness comes from SplitMix64 (Steele, Lea and Flood), so a trace is a
//! pure function of its configuration and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::anonmining::APClaim;
use crate::error::{Error, Result};
use crate::graphindex::{build_index, Label, LabelBook, LedgerIndex};
use crate::ledger::{
    pool_state, Address, Amount, BlockNumber, LinkPair, LinkSource, PoolConfig, PoolEvent,
    PoolState, Transfer,
};
use crate::metrics::{default_flag_threshold, resolve_ground_truth_state, NoteSpend};
use crate::ratio::{parse_decimal, ratio, Ratio};

/// Portable 64-bit generator: a Weyl sequence with step 0x9E3779B97F4A7C15
/// finalized by the MurmurHash3-style mixer.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `0..n` by multiply-shift.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn coin_flip(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    Disciplined,
    H1Reuser,
    H2ImproperSender,
    H3RelatedTransfer,
    H4Intermediary,
    H5CrossPool,
    AmSpeculator,
    AttackerFundThenDeposit,
}

impl Behavior {
    pub const ALL: [Behavior; 8] = [
        Behavior::Disciplined,
        Behavior::H1Reuser,
        Behavior::H2ImproperSender,
        Behavior::H3RelatedTransfer,
        Behavior::H4Intermediary,
        Behavior::H5CrossPool,
        Behavior::AmSpeculator,
        Behavior::AttackerFundThenDeposit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Disciplined => "disciplined",
            Behavior::H1Reuser => "h1-reuser",
            Behavior::H2ImproperSender => "h2-improper-sender",
            Behavior::H3RelatedTransfer => "h3-related-transfer",
            Behavior::H4Intermediary => "h4-intermediary",
            Behavior::H5CrossPool => "h5-cross-pool",
            Behavior::AmSpeculator => "am-speculator",
            Behavior::AttackerFundThenDeposit => "attacker-fund-then-deposit",
        }
    }

    /// Heuristic link source whose pairs this behavior plants.
    pub fn link_source(self) -> Option<LinkSource> {
        match self {
            Behavior::H2ImproperSender => Some(LinkSource::H2),
            Behavior::H3RelatedTransfer => Some(LinkSource::H3),
            Behavior::H4Intermediary => Some(LinkSource::H4),
            Behavior::H5CrossPool => Some(LinkSource::H5),
            _ => None,
        }
    }

    fn class_byte(self) -> u8 {
        Behavior::ALL.iter().position(|b| *b == self).unwrap() as u8 + 1
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Behavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Behavior::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown behavior `{s}`")))
    }
}

/// Fractions of users per behavior, summing to exactly one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BehaviorProfile {
    fractions: BTreeMap<Behavior, Ratio>,
}

impl BehaviorProfile {
    pub fn only(behavior: Behavior) -> Self {
        BehaviorProfile {
            fractions: BTreeMap::from([(behavior, Ratio::one())]),
        }
    }

    pub fn new<I: IntoIterator<Item = (Behavior, Ratio)>>(parts: I) -> Result<Self> {
        let mut fractions = BTreeMap::new();
        for (b, f) in parts {
            if fractions.insert(b, f).is_some() {
                return Err(Error::Config(format!("behavior {b} listed twice")));
            }
        }
        fractions.retain(|_, f| !f.is_zero());
        let total: Ratio = fractions.values().sum();
        if total != Ratio::one() {
            return Err(Error::Config(format!(
                "behavior fractions sum to {}/{}, not 1",
                total.numer(),
                total.denom()
            )));
        }
        Ok(BehaviorProfile { fractions })
    }

    pub fn fraction(&self, behavior: Behavior) -> Ratio {
        self.fractions
            .get(&behavior)
            .copied()
            .unwrap_or_else(Ratio::zero)
    }

    /// Split `users` by largest remainder; ties go to the earlier behavior.
    pub fn apportion(&self, users: usize) -> BTreeMap<Behavior, usize> {
        let n = Ratio::from_integer(users as u128);
        let mut counts = BTreeMap::new();
        let mut rest: Vec<(Ratio, Behavior)> = Vec::new();
        let mut given = 0;
        for (b, f) in &self.fractions {
            let exact = f * n;
            let floor = exact.to_integer() as usize;
            counts.insert(*b, floor);
            given += floor;
            rest.push((exact.fract(), *b));
        }
        rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, b) in rest.into_iter().take(users - given) {
            *counts.get_mut(&b).unwrap() += 1;
        }
        counts
    }
}

impl FromStr for BehaviorProfile {
    type Err = Error;

    /// `disciplined` or `h1-reuser=0.1,disciplined=0.9`; fractions may also
    /// be written `1/3`.
    fn from_str(s: &str) -> Result<Self> {
        if !s.contains('=') {
            return Ok(BehaviorProfile::only(s.parse()?));
        }
        let mut parts = Vec::new();
        for item in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, value) = item.split_once('=').ok_or_else(|| {
                Error::Config(format!("expected behavior=fraction, got `{item}`"))
            })?;
            let value = value.trim();
            let fraction = match value.split_once('/') {
                Some((n, d)) => match (n.trim().parse::<u128>(), d.trim().parse::<u128>()) {
                    (Ok(n), Ok(d)) if d > 0 => Some(ratio(n, d)),
                    _ => None,
                },
                None => parse_decimal(value),
            }
            .ok_or_else(|| Error::Config(format!("bad fraction `{value}`")))?;
            parts.push((name.parse()?, fraction));
        }
        BehaviorProfile::new(parts)
    }
}

impl fmt::Display for BehaviorProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .fractions
            .iter()
            .map(|(b, r)| format!("{b}={}/{}", r.numer(), r.denom()))
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub profile: BehaviorProfile,
    /// When set, the first half of the users follow `profile` before the
    /// launch block and the rest follow this profile from it.
    pub post_launch_profile: Option<BehaviorProfile>,
    pub users: usize,
    pub span: u64,
    pub first_block: u64,
    pub decimals: u32,
    /// Defaults to the middle of the span.
    pub am_launch: Option<u64>,
    /// Defaults to [`standard_pools`].
    pub pools: Option<Vec<PoolConfig>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            profile: BehaviorProfile::only(Behavior::Disciplined),
            post_launch_profile: None,
            users: 200,
            span: 20_000,
            first_block: 1_000_000,
            decimals: 18,
            am_launch: None,
            pools: None,
        }
    }
}

impl SynthConfig {
    pub fn new(profile: BehaviorProfile, users: usize) -> Self {
        SynthConfig {
            profile,
            users,
            ..SynthConfig::default()
        }
    }

    pub fn last_block(&self) -> u64 {
        self.first_block + self.span - 1
    }

    pub fn launch(&self) -> u64 {
        self.am_launch.unwrap_or(self.first_block + self.span / 2)
    }
}

/// The 0.1, 1, 10 and 100 coin pools with their standard point weights.
pub fn standard_pools(coin: &str, decimals: u32) -> Result<Vec<PoolConfig>> {
    if decimals == 0 {
        return Err(Error::Config(
            "standard pools need at least one decimal".into(),
        ));
    }
    let unit = 10u128
        .checked_pow(decimals)
        .filter(|u| u.checked_mul(100).is_some())
        .ok_or_else(|| Error::Config(format!("{decimals} decimals overflow")))?;
    [
        ("P0.1", unit / 10, 10),
        ("P1", unit, 20),
        ("P10", unit * 10, 50),
        ("P100", unit * 100, 400),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (id, denom, weight))| {
        Ok(PoolConfig::new(id, coin, Amount(denom), weight)?
            .with_contract(infra(ROLE_POOL, i as u32)))
    })
    .collect()
}

const ROLE_DEPOSITOR: u8 = 0;
const ROLE_WITHDRAWER: u8 = 1;
const ROLE_FUNDER: u8 = 2;
const ROLE_OTHER: u8 = 3;

const ROLE_EXCHANGE: u8 = 0;
const ROLE_RELAYER: u8 = 1;
const ROLE_POOL: u8 = 2;
const ROLE_VICTIM: u8 = 3;

fn address(class: u8, role: u8, serial: u32) -> Address {
    let mut b = [0u8; 20];
    b[0] = 0xa0 | class;
    b[1] = role;
    b[16..].copy_from_slice(&serial.to_be_bytes());
    Address::from_bytes(b)
}

fn infra(role: u8, serial: u32) -> Address {
    address(0, role, serial)
}

const EXCHANGES: u32 = 3;
const RELAYERS: u32 = 3;
const TOKEN: &str = "DAI";

/// A link the generator planted, tagged with the behavior that planted it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlantedLink {
    pub pair: LinkPair,
    pub behavior: Behavior,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthTrace {
    pub coin: String,
    pub first_block: u64,
    pub last_block: u64,
    pub am_launch: u64,
    pub decimals: u32,
    pub pools: Vec<PoolConfig>,
    pub transfers: Vec<Transfer>,
    pub token_transfers: Vec<Transfer>,
    pub events: Vec<PoolEvent>,
    pub labels: Vec<(Address, Label)>,
    pub relayers: BTreeSet<Address>,
    pub claims: Vec<APClaim>,
    pub planted: Vec<PlantedLink>,
    /// Addresses planted as depositing and withdrawing themselves.
    pub planted_reuse: BTreeSet<Address>,
    /// Addresses planted as withdraw-then-deposit attackers.
    pub planted_flags: BTreeSet<Address>,
    pub note_spends: Vec<NoteSpend>,
    /// Replayed per-address balance of every pool at the last block.
    pub balances: BTreeMap<String, PoolState>,
    /// Users generated per behavior.
    pub users: BTreeMap<Behavior, usize>,
}

impl SynthTrace {
    pub fn label_book(&self) -> LabelBook {
        let mut book = LabelBook::new();
        for (a, l) in &self.labels {
            book.insert(*a, *l);
        }
        for r in &self.relayers {
            book.insert(*r, Label::Relayer);
        }
        book
    }

    pub fn index(&self) -> Result<LedgerIndex> {
        build_index(
            self.transfers.clone(),
            self.token_transfers.clone(),
            self.events.clone(),
            self.label_book(),
        )
    }

    pub fn planted_keys(&self, behavior: Behavior) -> BTreeSet<(Address, Address)> {
        self.planted
            .iter()
            .filter(|p| p.behavior == behavior)
            .map(|p| p.pair.key())
            .collect()
    }

    pub fn pool(&self, pool_id: &str) -> Option<&PoolConfig> {
        self.pools.iter().find(|p| p.pool_id == pool_id)
    }

    pub fn pool_events(&self, pool_id: &str) -> Vec<PoolEvent> {
        self.events
            .iter()
            .filter(|e| e.pool_id == pool_id)
            .cloned()
            .collect()
    }

    /// Balances keyed by note owner at height ≤ t.
    pub fn ground_truth_state(&self, pool_id: &str, t: u64) -> Result<PoolState> {
        let pool = self
            .pool(pool_id)
            .ok_or_else(|| Error::input(format!("unknown pool {pool_id}")))?;
        resolve_ground_truth_state(pool, &self.pool_events(pool_id), &self.note_spends, t)
    }
}

struct Builder {
    rng: SplitMix64,
    pools: Vec<PoolConfig>,
    serials: BTreeMap<(u8, u8), u32>,
    tx_next: BTreeMap<u64, u32>,
    transfers: Vec<Transfer>,
    token_transfers: Vec<Transfer>,
    events: Vec<PoolEvent>,
    labels: Vec<(Address, Label)>,
    claims: Vec<APClaim>,
    planted: Vec<PlantedLink>,
    planted_reuse: BTreeSet<Address>,
    planted_flags: BTreeSet<Address>,
    note_spends: Vec<NoteSpend>,
    h5_next: usize,
    h5_pools: Vec<usize>,
    attack_deposits: u64,
}

impl Builder {
    fn fresh(&mut self, behavior: Behavior, role: u8) -> Address {
        let serial = self
            .serials
            .entry((behavior.class_byte(), role))
            .or_insert(0);
        *serial += 1;
        address(behavior.class_byte(), role, *serial)
    }

    fn tx(&mut self, height: u64) -> u32 {
        let next = self.tx_next.entry(height).or_insert(0);
        *next += 1;
        *next - 1
    }

    fn exchange(&mut self) -> Address {
        infra(ROLE_EXCHANGE, self.rng.below(EXCHANGES as u64) as u32)
    }

    fn relayer(&mut self) -> Address {
        infra(ROLE_RELAYER, self.rng.below(RELAYERS as u64) as u32)
    }

    fn coin(&self) -> String {
        self.pools[0].coin.clone()
    }

    fn native(&mut self, height: u64, from: Address, to: Address, amt: u128) {
        let bn = BlockNumber::new(height, self.tx(height), 0);
        let coin = self.coin();
        self.transfers
            .push(Transfer::new(bn, from, to, Amount(amt), &coin));
    }

    fn fund(&mut self, height: u64, to: Address, amt: u128) {
        let ex = self.exchange();
        self.native(height, ex, to, amt);
    }

    fn deposit(&mut self, pool: usize, height: u64, depositor: Address) -> BlockNumber {
        let tx = self.tx(height);
        let p = &self.pools[pool];
        let contract = p.contract.expect("generated pools carry contracts");
        self.transfers.push(Transfer::new(
            BlockNumber::new(height, tx, 0),
            depositor,
            contract,
            p.denomination,
            &p.coin,
        ));
        let bn = BlockNumber::new(height, tx, 1);
        self.events
            .push(PoolEvent::deposit(&p.pool_id, bn, depositor));
        bn
    }

    /// Withdraw the note deposited at `note` to `recipient`, signed by
    /// `sender` or, when `None`, by a relayer.
    fn withdraw(
        &mut self,
        pool: usize,
        height: u64,
        recipient: Address,
        sender: Option<Address>,
        note: BlockNumber,
    ) -> BlockNumber {
        let tx = self.tx(height);
        let bn = BlockNumber::new(height, tx, 0);
        let event = match sender {
            Some(s) => PoolEvent::withdrawal_sent_by(&self.pools[pool].pool_id, bn, recipient, s),
            None => {
                let r = self.relayer();
                PoolEvent::relayed_withdrawal(&self.pools[pool].pool_id, bn, recipient, r)
            }
        };
        self.events.push(event);
        let p = &self.pools[pool];
        let mut internal = Transfer::new(
            BlockNumber::new(height, tx, 1),
            p.contract.expect("generated pools carry contracts"),
            recipient,
            p.denomination,
            &p.coin,
        );
        internal.internal = true;
        self.transfers.push(internal);
        self.note_spends.push(NoteSpend {
            pool_id: p.pool_id.clone(),
            withdrawal: bn,
            deposit: note,
        });
        bn
    }

    fn plant(&mut self, a: Address, b: Address, behavior: Behavior) -> Result<()> {
        let source = behavior.link_source().unwrap_or(LinkSource::Planted);
        self.planted.push(PlantedLink {
            pair: LinkPair::positive(a, b, source)?,
            behavior,
        });
        Ok(())
    }

    /// `k` sorted heights in `window`, with repetition.
    fn heights(&mut self, window: (u64, u64), k: usize) -> Vec<u64> {
        let width = window.1 - window.0 + 1;
        let mut hs: Vec<u64> = (0..k).map(|_| window.0 + self.rng.below(width)).collect();
        hs.sort_unstable();
        hs
    }

    /// `k` strictly increasing heights in `window` (Floyd's sampling).
    fn distinct_heights(&mut self, window: (u64, u64), k: usize) -> Result<Vec<u64>> {
        let width = window.1 - window.0 + 1;
        if (k as u64) > width {
            return Err(Error::Config(format!(
                "window of {width} blocks cannot hold {k} distinct events"
            )));
        }
        let mut chosen = BTreeSet::new();
        for j in width - k as u64..width {
            let x = self.rng.below(j + 1);
            if !chosen.insert(x) {
                chosen.insert(j);
            }
        }
        Ok(chosen.into_iter().map(|x| window.0 + x).collect())
    }

    fn pick_pool(&mut self) -> usize {
        self.rng.below(self.pools.len() as u64) as usize
    }

    fn user(&mut self, behavior: Behavior, index: usize, window: (u64, u64)) -> Result<()> {
        match behavior {
            Behavior::Disciplined => {
                let p = self.pick_pool();
                let d = self.fresh(behavior, ROLE_DEPOSITOR);
                let hs = self.heights(window, 3);
                self.fund(hs[0], d, self.pools[p].denomination.0);
                let note = self.deposit(p, hs[1], d);
                if self.rng.coin_flip() {
                    let w = self.fresh(behavior, ROLE_WITHDRAWER);
                    self.withdraw(p, hs[2], w, None, note);
                }
            }
            Behavior::H1Reuser => {
                let p = self.pick_pool();
                let d = self.fresh(behavior, ROLE_DEPOSITOR);
                let denom = self.pools[p].denomination.0;
                // even users empty their balance, odd users keep one note
                let notes = 1 + index % 2;
                let hs = self.heights(window, 2 + notes);
                self.fund(hs[0], d, denom * notes as u128);
                let first = self.deposit(p, hs[1], d);
                if notes == 2 {
                    self.deposit(p, hs[2], d);
                }
                self.withdraw(p, hs[1 + notes], d, None, first);
                self.planted_reuse.insert(d);
            }
            Behavior::H2ImproperSender => {
                let p = self.pick_pool();
                let d = self.fresh(behavior, ROLE_DEPOSITOR);
                let w = self.fresh(behavior, ROLE_WITHDRAWER);
                let hs = self.heights(window, 3);
                self.fund(hs[0], d, self.pools[p].denomination.0);
                let note = self.deposit(p, hs[1], d);
                self.withdraw(p, hs[2], w, Some(d), note);
                self.plant(d, w, behavior)?;
            }
            Behavior::H3RelatedTransfer => {
                let p = self.pick_pool();
                let d = self.fresh(behavior, ROLE_DEPOSITOR);
                let w = self.fresh(behavior, ROLE_WITHDRAWER);
                let hs = self.heights(window, 4);
                self.fund(hs[0], d, self.pools[p].denomination.0);
                let note = self.deposit(p, hs[1], d);
                self.withdraw(p, hs[2], w, None, note);
                if index.is_multiple_of(2) {
                    let amt = 1 + self.rng.below(1_000) as u128;
                    self.native(hs[3], d, w, amt);
                } else {
                    let bn = BlockNumber::new(hs[3], self.tx(hs[3]), 0);
                    let amt = Amount(1 + self.rng.below(1_000) as u128);
                    self.token_transfers
                        .push(Transfer::new(bn, d, w, amt, TOKEN));
                }
                self.plant(d, w, behavior)?;
            }
            Behavior::H4Intermediary => {
                let p = self.pick_pool();
                let denom = self.pools[p].denomination.0;
                let f = self.fresh(behavior, ROLE_FUNDER);
                let k = 1 + self.rng.below(3) as usize;
                let hs = self.heights(window, 1 + 3 * k);
                self.fund(hs[0], f, denom * k as u128);
                for j in 0..k {
                    let d = self.fresh(behavior, ROLE_DEPOSITOR);
                    let w = self.fresh(behavior, ROLE_WITHDRAWER);
                    self.native(hs[1 + 3 * j], f, d, denom);
                    let note = self.deposit(p, hs[2 + 3 * j], d);
                    self.withdraw(p, hs[3 + 3 * j], w, None, note);
                    self.plant(d, f, behavior)?;
                }
            }
            Behavior::H5CrossPool => {
                let signature = cross_pool_signature(&self.h5_pools, self.h5_next);
                self.h5_next += 1;
                let d = self.fresh(behavior, ROLE_DEPOSITOR);
                let w = self.fresh(behavior, ROLE_WITHDRAWER);
                let n: usize = signature.iter().map(|(_, c)| c).sum();
                let hs = self.heights(window, 1 + 2 * n);
                let total: u128 = signature
                    .iter()
                    .map(|(p, c)| self.pools[*p].denomination.0 * *c as u128)
                    .sum();
                self.fund(hs[0], d, total);
                let mut next = 1;
                let mut notes = Vec::new();
                for (p, c) in &signature {
                    for _ in 0..*c {
                        notes.push((*p, self.deposit(*p, hs[next], d)));
                        next += 1;
                    }
                }
                for (p, note) in notes {
                    self.withdraw(p, hs[next], w, None, note);
                    next += 1;
                }
                self.plant(d, w, behavior)?;
            }
            Behavior::AmSpeculator => {
                let p = self.pick_pool();
                let pool = self.pools[p].clone();
                let d = self.fresh(behavior, ROLE_DEPOSITOR);
                let w = self.fresh(behavior, ROLE_WITHDRAWER);
                // even users deposit once, odd users twice
                let u = 1 + index % 2;
                let hs = self.distinct_heights(window, 2 + 2 * u)?;
                self.fund(hs[0], d, pool.denomination.0 * u as u128);
                let notes: Vec<BlockNumber> =
                    (0..u).map(|i| self.deposit(p, hs[1 + i], d)).collect();
                let mut gap = 0;
                for (i, note) in notes.iter().enumerate() {
                    let tw = hs[1 + u + i];
                    self.withdraw(p, tw, w, None, *note);
                    gap += tw - note.height;
                }
                let claim_height = hs[1 + 2 * u];
                let bn = BlockNumber::new(claim_height, self.tx(claim_height), 0);
                self.claims.push(APClaim {
                    recipient: d,
                    bn,
                    ap: pool.am_weight * gap,
                });
                self.plant(d, w, behavior)?;
            }
            Behavior::AttackerFundThenDeposit => {
                let p = (0..self.pools.len())
                    .max_by_key(|&i| self.pools[i].denomination)
                    .unwrap();
                let denom = self.pools[p].denomination.0;
                let d = self.fresh(behavior, ROLE_DEPOSITOR);
                let a = self.fresh(behavior, ROLE_OTHER);
                let victim = infra(
                    ROLE_VICTIM,
                    self.serials
                        .get(&(behavior.class_byte(), ROLE_OTHER))
                        .copied()
                        .unwrap_or(0),
                );
                let m = self.attack_deposits as usize;
                let hs = self.heights(window, 4 + m);
                self.fund(hs[0], d, denom);
                let note = self.deposit(p, hs[1], d);
                self.withdraw(p, hs[2], a, None, note);
                self.native(hs[3], victim, a, denom * m as u128);
                for h in &hs[4..] {
                    self.deposit(p, *h, a);
                }
                self.labels.push((victim, Label::Contract));
                self.labels.push((a, Label::Malicious));
                self.planted_flags.insert(a);
                self.plant(d, a, behavior)?;
            }
        }
        Ok(())
    }
}

/// The `n`-th per-pool count vector over `pools`: at least two pools, each
/// used 1..=c times, enumerated by increasing maximum count c. Distinct `n`
/// give distinct signatures.
fn cross_pool_signature(pools: &[usize], n: usize) -> Vec<(usize, usize)> {
    let m = pools.len();
    let mut seen = 0;
    for c in 1usize.. {
        for mask in 1u32..(1 << m) {
            let members: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            if members.len() < 2 {
                continue;
            }
            // every count vector in 1..=c with at least one entry equal to c
            let combos = c.pow(members.len() as u32);
            for code in 0..combos {
                let mut counts = Vec::with_capacity(members.len());
                let mut x = code;
                for _ in &members {
                    counts.push(1 + x % c);
                    x /= c;
                }
                if !counts.contains(&c) {
                    continue;
                }
                if seen == n {
                    return members
                        .iter()
                        .zip(counts)
                        .map(|(&i, k)| (pools[i], k))
                        .collect();
                }
                seen += 1;
            }
        }
    }
    unreachable!()
}

/// Generate a trace. Identical configuration and seed give identical
/// traces.
pub fn generate_trace(config: &SynthConfig, seed: u64) -> Result<SynthTrace> {
    if config.users == 0 {
        return Err(Error::Config("at least one user is required".into()));
    }
    if config.span < 10 {
        return Err(Error::Config("block span must be at least 10".into()));
    }
    let pools = match &config.pools {
        Some(p) => p.clone(),
        None => standard_pools("ETH", config.decimals)?,
    };
    if pools.is_empty() || pools.iter().any(|p| p.contract.is_none()) {
        return Err(Error::Config(
            "pools must be listed with contract addresses".into(),
        ));
    }
    if pools.iter().any(|p| p.coin != pools[0].coin) {
        return Err(Error::Config("generated pools must share one coin".into()));
    }
    let first = config.first_block;
    let last = config.last_block();
    let launch = config.launch();
    if launch <= first || launch > last {
        return Err(Error::Config(format!(
            "launch block {launch} outside {}..={last}",
            first + 1
        )));
    }

    let phases: Vec<(&BehaviorProfile, usize, (u64, u64))> = match &config.post_launch_profile {
        None => vec![(&config.profile, config.users, (first, last))],
        Some(post) => {
            let pre_users = config.users / 2;
            vec![
                (&config.profile, pre_users, (first, launch - 1)),
                (post, config.users - pre_users, (launch, last)),
            ]
        }
    };
    let mut users: BTreeMap<Behavior, usize> = BTreeMap::new();
    let plans: Vec<(BTreeMap<Behavior, usize>, (u64, u64))> = phases
        .iter()
        .map(|(profile, n, window)| (profile.apportion(*n), *window))
        .collect();
    for (counts, _) in &plans {
        for (b, n) in counts {
            *users.entry(*b).or_default() += n;
        }
    }
    if users.get(&Behavior::H5CrossPool).copied().unwrap_or(0) > 0 && pools.len() < 2 {
        return Err(Error::Config(
            "cross-pool users need at least two pools of one coin".into(),
        ));
    }
    let threshold = default_flag_threshold(config.decimals)?.0;
    let top = pools.iter().map(|p| p.denomination.0).max().unwrap();
    let attack_deposits = threshold / top + 1;
    if users
        .get(&Behavior::AttackerFundThenDeposit)
        .copied()
        .unwrap_or(0)
        > 0
        && attack_deposits > 1_000
    {
        return Err(Error::Config(format!(
            "attackers would need {attack_deposits} deposits to reach the flag threshold"
        )));
    }

    let mut b = Builder {
        rng: SplitMix64::new(seed),
        h5_pools: (0..pools.len()).collect(),
        pools,
        serials: BTreeMap::new(),
        tx_next: BTreeMap::new(),
        transfers: Vec::new(),
        token_transfers: Vec::new(),
        events: Vec::new(),
        labels: Vec::new(),
        claims: Vec::new(),
        planted: Vec::new(),
        planted_reuse: BTreeSet::new(),
        planted_flags: BTreeSet::new(),
        note_spends: Vec::new(),
        h5_next: 0,
        attack_deposits: attack_deposits as u64,
    };
    for (counts, window) in &plans {
        for (behavior, n) in counts {
            for i in 0..*n {
                b.user(*behavior, i, *window)?;
            }
        }
    }

    let mut labels: BTreeSet<(Address, Label)> = b.labels.into_iter().collect();
    for i in 0..EXCHANGES {
        labels.insert((infra(ROLE_EXCHANGE, i), Label::Exchange));
    }
    for p in &b.pools {
        labels.insert((p.contract.unwrap(), Label::Contract));
    }
    let relayers: BTreeSet<Address> = (0..RELAYERS).map(|i| infra(ROLE_RELAYER, i)).collect();

    b.transfers.sort_by_key(|x| x.bn);
    b.token_transfers.sort_by_key(|x| x.bn);
    b.events.sort_by_key(|x| x.bn);
    b.claims.sort();
    b.planted.sort();
    b.note_spends.sort();

    let mut balances = BTreeMap::new();
    for p in &b.pools {
        let events: Vec<PoolEvent> = b
            .events
            .iter()
            .filter(|e| e.pool_id == p.pool_id)
            .cloned()
            .collect();
        balances.insert(p.pool_id.clone(), pool_state(p, &events, last)?);
    }
    Ok(SynthTrace {
        coin: b.pools[0].coin.clone(),
        first_block: first,
        last_block: last,
        am_launch: launch,
        decimals: config.decimals,
        pools: b.pools,
        transfers: b.transfers,
        token_transfers: b.token_transfers,
        events: b.events,
        labels: labels.into_iter().collect(),
        relayers,
        claims: b.claims,
        planted: b.planted,
        planted_reuse: b.planted_reuse,
        planted_flags: b.planted_flags,
        note_spends: b.note_spends,
        balances,
        users,
    })
}

use std::collections::{BTreeMap, BTreeSet};

use anonset::anonmining::{anonymity_points, solve_multi_claim, AMWeights, APClaim, LinkStatus};
use anonset::dataset::{ingest, Dataset};
use anonset::graphindex::{build_index, Label, LabelBook};
use anonset::groundtruth::{score_links, SideChannelSet, TestUniverse};
use anonset::heuristics::{combine, evaluate, Heuristic};
use anonset::ledger::{
    pool_state, simplify_state, Address, Amount, BlockNumber, Flow, LinkPair, LinkSource, Polarity,
    PoolConfig, PoolEvent, Transfer,
};
use anonset::metrics::{adversary_advantage, observed_anonymity_set, relative_advantage_increase};
use anonset::ratio::{ratio, Ratio};
use anonset::synthgen::{generate_trace, Behavior, BehaviorProfile, SynthConfig};
use num_traits::{One, Zero};
use proptest::prelude::*;

fn addr(n: u8) -> Address {
    let mut b = [0u8; 20];
    b[19] = n;
    b[0] = 0x42;
    Address::from_bytes(b)
}

fn any_address() -> impl Strategy<Value = Address> {
    any::<[u8; 20]>().prop_map(Address::from_bytes)
}

fn block() -> impl Strategy<Value = BlockNumber> {
    (0u64..50, 0u32..4, 0u32..4).prop_map(|(h, t, l)| BlockNumber::new(h, t, l))
}

/// Events of one pool "P" over a handful of addresses.
fn pool_events() -> impl Strategy<Value = Vec<PoolEvent>> {
    prop::collection::vec((0u8..8, block(), any::<bool>()), 0..40).prop_map(|raw| {
        raw.into_iter()
            .map(|(who, bn, deposit)| {
                if deposit {
                    PoolEvent::deposit("P", bn, addr(who))
                } else {
                    PoolEvent::withdrawal("P", bn, addr(who))
                }
            })
            .collect()
    })
}

fn links() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..10, 0u8..10), 0..12)
        .prop_map(|v| v.into_iter().filter(|(a, b)| a != b).collect())
}

fn to_links(pairs: &[(u8, u8)]) -> Vec<LinkPair> {
    pairs
        .iter()
        .map(|(a, b)| LinkPair::positive(addr(*a), addr(*b), LinkSource::Manual).unwrap())
        .collect()
}

fn profile() -> impl Strategy<Value = BehaviorProfile> {
    prop::collection::vec(0u128..5, Behavior::ALL.len()).prop_filter_map("all zero", |weights| {
        let total: u128 = weights.iter().sum();
        (total > 0).then(|| {
            BehaviorProfile::new(
                Behavior::ALL
                    .into_iter()
                    .zip(&weights)
                    .filter(|(_, w)| **w > 0)
                    .map(|(b, w)| (b, ratio(*w, total))),
            )
            .unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn address_spellings_normalize(bytes in any::<[u8; 20]>(), prefix in any::<bool>(), upper in any::<bool>()) {
        let a = Address::from_bytes(bytes);
        let digits = a.to_string()[2..].to_string();
        let digits = if upper { digits.to_uppercase() } else { digits };
        let text = if prefix { format!("0x{digits}") } else { digits };
        prop_assert_eq!(text.parse::<Address>().unwrap(), a);
    }

    #[test]
    fn block_order_is_lexicographic(a in block(), b in block()) {
        prop_assert_eq!(a.cmp(&b), (a.height, a.tx_index, a.log_index).cmp(&(b.height, b.tx_index, b.log_index)));
    }

    #[test]
    fn flows_must_chain(hops in prop::collection::vec((0u8..6, 0u64..20), 1..6)) {
        let mut transfers = Vec::new();
        let mut from = addr(100);
        for (to, h) in &hops {
            transfers.push(Transfer::new(BlockNumber::at(*h), from, addr(*to), Amount(1), "ETH"));
            from = addr(*to);
        }
        let ordered = transfers.windows(2).all(|w| w[0].bn <= w[1].bn);
        prop_assert_eq!(Flow::new(transfers.clone()).is_ok(), ordered);
        if transfers.len() > 1 {
            let mut broken = transfers;
            broken[1].from = addr(200);
            prop_assert!(Flow::new(broken).is_err());
        }
    }

    #[test]
    fn events_respect_relayer_rules(bn in block(), who in any_address(), relayer in any_address(), other in any_address()) {
        prop_assert!(PoolEvent::relayed_withdrawal("P", bn, who, relayer).validate().is_ok());
        let mut deposit = PoolEvent::deposit("P", bn, who);
        prop_assert!(deposit.validate().is_ok());
        deposit.relayer = Some(relayer);
        prop_assert!(deposit.validate().is_err());
        let mut w = PoolEvent::relayed_withdrawal("P", bn, who, relayer);
        w.tx_sender = other;
        prop_assert_eq!(w.validate().is_ok(), other == relayer);
    }

    #[test]
    fn pool_state_balances_are_denomination_multiples(events in pool_events(), denom in 1u128..10_000, t in 0u64..60) {
        let pool = PoolConfig::new("P", "ETH", Amount(denom), 20).unwrap();
        let state = pool_state(&pool, &events, t).unwrap();
        let d = denom as i128;
        prop_assert!(state.entries.values().all(|b| b % d == 0));
        let net: i128 = events
            .iter()
            .filter(|e| e.bn.height <= t)
            .map(|e| if e.is_deposit() { 1 } else { -1 })
            .sum();
        prop_assert_eq!(state.total(), net * d);
    }

    #[test]
    fn simplification_conserves_and_ignores_order(events in pool_events(), pairs in links()) {
        let pool = PoolConfig::new("P", "ETH", Amount(5), 20).unwrap();
        let state = pool_state(&pool, &events, 60).unwrap();
        let forward = simplify_state(&state, &to_links(&pairs)).unwrap();
        let mut reversed = to_links(&pairs);
        reversed.reverse();
        prop_assert_eq!(forward.total(), state.total());
        prop_assert_eq!(&simplify_state(&state, &reversed).unwrap(), &forward);
    }

    #[test]
    fn link_pairs_are_unordered_and_irreflexive(x in any_address(), y in any_address()) {
        prop_assert!(LinkPair::positive(x, x, LinkSource::Manual).is_err());
        if x != y {
            let a = LinkPair::positive(x, y, LinkSource::H3).unwrap();
            let b = LinkPair::positive(y, x, LinkSource::H3).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.a1 < a.a2);
        }
    }

    #[test]
    fn index_round_trips_transfers(raw in prop::collection::vec((0u8..6, 0u8..6, block(), 1u128..100, any::<bool>()), 0..30)) {
        let (mut native, mut token) = (Vec::new(), Vec::new());
        for (f, t, bn, amt, is_token) in raw {
            let tr = Transfer::new(bn, addr(f), addr(t), Amount(amt), if is_token { "DAI" } else { "ETH" });
            if is_token { token.push(tr) } else { native.push(tr) }
        }
        let index = build_index(native.clone(), token.clone(), Vec::new(), LabelBook::new()).unwrap();
        let key = |t: &Transfer| (t.bn, t.from, t.to, t.amt, t.coin.clone());
        let senders: BTreeSet<Address> = native.iter().chain(&token).map(|t| t.from).collect();
        let mut from_index: Vec<_> = senders.iter().flat_map(|a| index.outgoing(a).iter().map(key)).collect();
        let mut tokens_from_index: Vec<_> = senders.iter().flat_map(|a| index.token_outgoing(a).iter().map(key)).collect();
        let mut expect: Vec<_> = native.iter().map(key).collect();
        let mut expect_tokens: Vec<_> = token.iter().map(key).collect();
        for v in [&mut from_index, &mut tokens_from_index, &mut expect, &mut expect_tokens] {
            v.sort();
        }
        prop_assert_eq!(from_index, expect);
        prop_assert_eq!(tokens_from_index, expect_tokens);
        let (all, _) = index.all_transfers();
        prop_assert!(all.windows(2).all(|w| w[0].bn <= w[1].bn));
    }

    #[test]
    fn unlabeled_addresses_are_user_accounts(a in any_address(), b in any_address()) {
        let mut book = LabelBook::new();
        book.insert(b, Label::Exchange);
        prop_assert!(book.is_user_account(&a) || a == b);
        prop_assert!(!book.is_user_account(&b));
    }

    #[test]
    fn advantage_identity_holds(oas in 1usize..500, cut in 0usize..500) {
        let sas = 1 + cut % oas;
        let r = relative_advantage_increase(oas, sas).unwrap();
        let adv_o = adversary_advantage(oas).unwrap();
        let adv_s = adversary_advantage(sas).unwrap();
        prop_assert_eq!(r, adv_s / adv_o - Ratio::one());
    }

    #[test]
    fn points_are_additive_and_linear(
        gaps_a in prop::collection::vec((0u64..1000, 0u64..500), 0..5),
        gaps_b in prop::collection::vec((0u64..1000, 0u64..500), 0..5),
        wa in 1u64..500, wb in 1u64..500, k in 1u64..5,
    ) {
        let (pa, pb) = (Amount(1), Amount(2));
        let split = |g: &[(u64, u64)]| -> (Vec<u64>, Vec<u64>) { g.iter().map(|(d, gap)| (*d, d + gap)).unzip() };
        let (da, wda) = split(&gaps_a);
        let (db, wdb) = split(&gaps_b);
        let weights = AMWeights::default().with(pa, wa).with(pb, wb);
        let both = anonymity_points(
            &BTreeMap::from([(pa, da.clone()), (pb, db.clone())]),
            &BTreeMap::from([(pa, wda.clone()), (pb, wdb.clone())]),
            &weights,
        ).unwrap();
        let only_a = anonymity_points(&BTreeMap::from([(pa, da.clone())]), &BTreeMap::from([(pa, wda.clone())]), &weights).unwrap();
        let only_b = anonymity_points(&BTreeMap::from([(pb, db)]), &BTreeMap::from([(pb, wdb)]), &weights).unwrap();
        prop_assert_eq!(both, only_a + only_b);
        let scaled = AMWeights::default().with(pa, wa * k);
        let a_scaled = anonymity_points(&BTreeMap::from([(pa, da)]), &BTreeMap::from([(pa, wda)]), &scaled).unwrap();
        prop_assert_eq!(a_scaled, k * only_a);
    }

    #[test]
    fn exact_multi_solutions_satisfy_the_claim(
        deposits in prop::collection::vec(0u64..100, 2..4),
        withdrawals in prop::collection::btree_set(50u64..250, 2..14),
        pick in any::<prop::sample::Index>(),
        weight in 1u64..50,
        claim_at in 150u64..300,
    ) {
        let blocks: Vec<BlockNumber> = withdrawals.iter().map(|h| BlockNumber::at(*h)).collect();
        let mut tds = deposits.clone();
        tds.sort_unstable();
        let start = pick.index(blocks.len());
        let chosen: Vec<u64> = blocks.iter().cycle().skip(start).take(tds.len()).map(|b| b.height).collect();
        let mut sorted = chosen.clone();
        sorted.sort_unstable();
        let gap: i64 = sorted.iter().zip(&tds).map(|(w, d)| *w as i64 - *d as i64).sum();
        let claim = APClaim { recipient: addr(1), bn: BlockNumber::at(claim_at), ap: weight * gap.max(0) as u64 };
        let solution = solve_multi_claim(&tds, &claim, weight, &blocks, 1_000_000).unwrap();
        if solution.status == LinkStatus::Exact {
            prop_assert_eq!(solution.residual, 0);
        }
        for tuple in &solution.tuples {
            prop_assert!(tuple.iter().all(|w| w.height < claim_at));
            prop_assert!(tuple.iter().zip(&tds).all(|(w, d)| w.height > *d));
            let total: u64 = tuple.iter().zip(&tds).map(|(w, d)| w.height - d).sum();
            prop_assert_eq!(weight * total, claim.ap);
        }
    }

    #[test]
    fn contradictions_within_one_source_are_rejected(x in 0u8..20, y in 0u8..20) {
        prop_assume!(x != y);
        let pos = LinkPair::new(addr(x), addr(y), LinkSource::Airdrop, Polarity::Positive).unwrap();
        let neg = LinkPair::new(addr(y), addr(x), LinkSource::Airdrop, Polarity::Negative).unwrap();
        let other = LinkPair::new(addr(y), addr(x), LinkSource::Debank, Polarity::Negative).unwrap();
        prop_assert!(SideChannelSet::from_links([pos, neg]).is_err());
        prop_assert!(SideChannelSet::from_links([pos, other]).is_ok());
    }

    #[test]
    fn confusion_counts_partition_the_universe(
        left in prop::collection::btree_set(0u8..30, 1..10),
        right in prop::collection::btree_set(30u8..60, 1..10),
        predicted in prop::collection::vec((0u8..30, 30u8..60), 0..30),
        truth_picks in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..10),
    ) {
        let l: Vec<Address> = left.iter().map(|i| addr(*i)).collect();
        let r: Vec<Address> = right.iter().map(|i| addr(*i)).collect();
        let key = |a: Address, b: Address| if a < b { (a, b) } else { (b, a) };
        let truth: BTreeSet<_> = truth_picks.iter().map(|(i, j)| key(l[i.index(l.len())], r[j.index(r.len())])).collect();
        let predicted: BTreeSet<_> = predicted.iter().map(|(a, b)| key(addr(*a), addr(*b))).collect();
        let universe = TestUniverse::Product { left: l.iter().copied().collect(), right: r.iter().copied().collect() };
        let rep = score_links(&predicted, &truth, &BTreeSet::new(), &universe).unwrap();
        prop_assert_eq!(rep.tp + rep.fp + rep.fn_ + rep.tn, universe.size());
        let expected_f1 = if rep.precision.is_zero() && rep.recall.is_zero() {
            Ratio::zero()
        } else {
            Ratio::from_integer(2) * rep.precision * rep.recall / (rep.precision + rep.recall)
        };
        prop_assert_eq!(rep.f1, expected_f1);
    }

    #[test]
    fn profiles_sum_to_one_and_apportion_every_user(p in profile(), users in 1usize..500) {
        let total = Behavior::ALL.iter().fold(Ratio::zero(), |acc, b| acc + p.fraction(*b));
        prop_assert!(total.is_one());
        prop_assert_eq!(p.apportion(users).values().sum::<usize>(), users);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_traces_keep_their_invariants(p in profile(), seed in any::<u64>(), users in 10usize..60) {
        let trace = generate_trace(&SynthConfig::new(p, users), seed).unwrap();
        let index = trace.index().unwrap();
        for pool in &trace.pools {
            let events = trace.pool_events(&pool.pool_id);
            prop_assert_eq!(&pool_state(pool, &events, trace.last_block).unwrap(), &trace.balances[&pool.pool_id]);
        }
        let t = trace.last_block;
        let per: Vec<BTreeMap<String, _>> = Heuristic::ALL.iter().map(|h| evaluate(*h, &trace.pools, &index, t).unwrap()).collect();
        for pool in &trace.pools {
            let events = index.events(&pool.pool_id);
            let oas = observed_anonymity_set(pool, events, t);
            let results: Vec<_> = per.iter().map(|m| m[&pool.pool_id].clone()).collect();
            let combined = combine(pool, &results, events, t).unwrap();
            let state = pool_state(pool, events, t).unwrap();
            for r in results.iter().chain([&combined]) {
                prop_assert!(r.sas.is_subset(&oas));
                // one SAS member per positive-balance cluster
                let simplified = simplify_state(&state, &r.link_pairs).unwrap();
                prop_assert_eq!(r.sas.len(), simplified.positive().len());
                if state.total() > 0 {
                    prop_assert!(!r.sas.is_empty());
                }
            }
        }
    }

    #[test]
    fn datasets_survive_a_disk_round_trip(p in profile(), seed in any::<u64>(), users in 5usize..40) {
        let trace = generate_trace(&SynthConfig::new(p, users), seed).unwrap();
        let dataset = Dataset::from_trace(&trace);
        let dir = tempfile::tempdir().unwrap();
        dataset.write(dir.path()).unwrap();
        let (back, summary) = ingest(dir.path()).unwrap();
        prop_assert_eq!(&back, &dataset);
        prop_assert_eq!(summary.values().sum::<usize>(), dataset.counts().values().sum::<usize>());
    }
}

//! Reward points and what they give away: a claim's point total pins down
//! the withdrawal that went with a deposit.
//!
//! cargo run -p anonset --example anonymity_mining

use std::collections::BTreeMap;

use anonset::anonmining::{
    am_effect_on_h1, anonymity_points, link_claims, solve_multi_claim, solve_single_claim,
    AMWeights, APClaim, LinkStatus, DEFAULT_SEARCH_CAP,
};
use anonset::ratio::render_percent;
use anonset::synthgen::{generate_trace, Behavior, BehaviorProfile, SynthConfig};
use anonset::{Address, Amount, BlockNumber, Result};

fn main() -> Result<()> {
    // A user keeps one coin in the 1-coin pool for 100 blocks and one in the
    // 10-coin pool for 200 blocks.
    let coin = 10u128.pow(18);
    let weights = AMWeights::standard(18)?;
    let deposits = BTreeMap::from([
        (Amount(coin), vec![1_000]),
        (Amount(10 * coin), vec![2_000]),
    ]);
    let withdrawals = BTreeMap::from([
        (Amount(coin), vec![1_100]),
        (Amount(10 * coin), vec![2_200]),
    ]);
    println!(
        "points earned: {}",
        anonymity_points(&deposits, &withdrawals, &weights)?
    );

    // Reverse direction: a single deposit at 500 and a claim of 20 × 340 points.
    let claimant = Address::from_bytes([7; 20]);
    let claim = APClaim {
        recipient: claimant,
        bn: BlockNumber::at(2_000),
        ap: 20 * 340,
    };
    let pool_withdrawals: Vec<BlockNumber> = [(610, 0), (700, 0), (840, 0), (840, 1), (1_500, 0)]
        .map(|(h, tx)| BlockNumber::new(h, tx, 0))
        .to_vec();
    let show = |tuple: &Vec<BlockNumber>| {
        tuple
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let single = solve_single_claim(500, &claim, 20, &pool_withdrawals);
    println!("single deposit: {}", single.status);
    for tuple in &single.tuples {
        println!("  withdrawal at {}", show(tuple));
    }

    // Two deposits make the sum of gaps the only constraint.
    let claim = APClaim {
        ap: 20 * 350,
        ..claim
    };
    let multi = solve_multi_claim(
        &[500, 600],
        &claim,
        20,
        &pool_withdrawals,
        DEFAULT_SEARCH_CAP,
    )?;
    println!(
        "two deposits: {} after {} nodes",
        multi.status, multi.explored
    );
    for tuple in &multi.tuples {
        println!("  withdrawals at {}", show(tuple));
    }

    // On a synthetic trace, count how many speculator claims resolve exactly.
    let profile: BehaviorProfile = "disciplined=0.5,h1-reuser=0.2,am-speculator=0.3".parse()?;
    let post: BehaviorProfile = "disciplined=0.3,h1-reuser=0.4,am-speculator=0.3".parse()?;
    let config = SynthConfig {
        post_launch_profile: Some(post),
        ..SynthConfig::new(profile, 300)
    };
    let trace = generate_trace(&config, 5)?;
    let links = link_claims(
        &trace.pools,
        &trace.index()?,
        &trace.claims,
        DEFAULT_SEARCH_CAP,
    )?;
    let exact = links
        .iter()
        .filter(|l| {
            l.solution
                .as_ref()
                .is_some_and(|s| s.status == LinkStatus::Exact)
        })
        .count();
    println!(
        "{} claims from {} speculators, {exact} solved exactly",
        links.len(),
        trace.users[&Behavior::AmSpeculator]
    );

    println!(
        "address reuse before and after rewards launch at {}:",
        trace.am_launch
    );
    for pool in &trace.pools {
        let e = am_effect_on_h1(pool, &trace.pool_events(&pool.pool_id), trace.am_launch)?;
        let r_adv = |r: &Option<_>| r.as_ref().map(render_percent).unwrap_or_else(|| "-".into());
        println!(
            "  {:<5} pre {:>3}/{:<3} r_adv {:>8}   post {:>3}/{:<3} r_adv {:>8}",
            pool.pool_id,
            e.pre_sas,
            e.pre_oas,
            r_adv(&e.pre_r_adv),
            e.post_sas,
            e.post_oas,
            r_adv(&e.post_r_adv)
        );
    }
    Ok(())
}

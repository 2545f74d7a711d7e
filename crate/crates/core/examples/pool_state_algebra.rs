//! Balances of a single pool, merging linked addresses, and the simplified
//! anonymity set that results.
//!
//! cargo run -p anonset --example pool_state_algebra

use anonset::heuristics::simplified_anonymity_set;
use anonset::ledger::{actors, compute_balance, merge_pair, pool_state, simplify_state};
use anonset::metrics::{observed_anonymity_set, relative_advantage_increase};
use anonset::ratio::render_percent;
use anonset::{
    Address, Amount, BlockNumber, EventKind, LinkPair, LinkSource, PoolConfig, PoolEvent, Result,
};

fn a(tail: u8) -> Address {
    let mut b = [0u8; 20];
    b[19] = tail;
    Address::from_bytes(b)
}

fn main() -> Result<()> {
    let pool = PoolConfig::new("P100", "ETH", Amount(100), 400)?;
    let (d1, d2, d3, w1, relayer) = (a(1), a(2), a(3), a(9), a(200));
    let events = vec![
        PoolEvent::deposit("P100", BlockNumber::at(10), d1),
        PoolEvent::deposit("P100", BlockNumber::at(11), d2),
        PoolEvent::deposit("P100", BlockNumber::at(12), d2),
        PoolEvent::deposit("P100", BlockNumber::at(13), d3),
        PoolEvent::relayed_withdrawal("P100", BlockNumber::at(14), w1, relayer),
        PoolEvent::withdrawal("P100", BlockNumber::at(20), d3),
    ];

    for t in [12, 14, 20] {
        let state = pool_state(&pool, &events, t)?;
        println!("state at block {t} (total {}):", state.total());
        for (addr, balance) in &state.entries {
            println!("  {addr} {balance:>5}");
        }
    }
    println!(
        "balance of d2 at 11: {}",
        compute_balance(&d2, &pool, &events, 11)?
    );

    // Suppose w1 is known to belong to d1: their balances cancel out.
    let state = pool_state(&pool, &events, 20)?;
    let link = LinkPair::positive(d1, w1, LinkSource::Manual)?;
    let merged = merge_pair(&state, &link)?;
    println!("after merging d1 and w1: d1 holds {}", merged.balance(&d1));

    // simplify_state folds whole components, whatever the link order.
    let links = [link, LinkPair::positive(w1, a(50), LinkSource::Manual)?];
    let simplified = simplify_state(&state, &links)?;
    assert_eq!(simplified.total(), state.total());

    let oas = observed_anonymity_set(&pool, &events, 20);
    let depositors = actors(&events, EventKind::Deposit, 20);
    let sas = simplified_anonymity_set(&state, &links, &depositors)?;
    println!("OAS {oas:?}");
    println!("SAS {sas:?}");
    let r_adv = relative_advantage_increase(oas.len(), sas.len())?;
    println!("adversary advantage grows by {}", render_percent(&r_adv));
    Ok(())
}

//! Hand-built transfer graph: which transfers funded a deposit, where a
//! withdrawal went, and who sits at distance 2 from the pool.
//!
//! cargo run -p anonset --example coin_flow_tracing

use anonset::graphindex::{build_index, Label, LabelBook};
use anonset::{Address, Amount, BlockNumber, PoolConfig, PoolEvent, Result, Transfer};

fn named(s: &str) -> Address {
    let mut b = [0u8; 20];
    b[20 - s.len()..].copy_from_slice(s.as_bytes());
    Address::from_bytes(b)
}

fn main() -> Result<()> {
    let pool = PoolConfig::new("P10", "ETH", Amount(10), 50)?;
    let (exchange, alice, bob, carol) =
        (named("exch"), named("alice"), named("bob"), named("carol"));
    let eth = |h, from, to, amt| Transfer::new(BlockNumber::at(h), from, to, Amount(amt), "ETH");

    let transfers = vec![
        eth(1, exchange, alice, 4),
        eth(2, carol, alice, 3),
        eth(3, exchange, alice, 6),
        // too late to fund the deposit at height 5
        eth(7, carol, alice, 9),
        eth(12, bob, carol, 7),
        eth(13, bob, exchange, 5),
    ];
    let events = vec![
        PoolEvent::deposit("P10", BlockNumber::at(5), alice),
        PoolEvent::withdrawal("P10", BlockNumber::at(10), bob),
    ];
    let mut labels = LabelBook::new();
    labels.insert(exchange, Label::Exchange);
    let index = build_index(transfers, vec![], events, labels)?;

    for cover in index.source_transfers(&alice, &pool, 20)? {
        println!("deposit at {} funded by:", cover.event);
        for t in &cover.claimed {
            println!(
                "  {} from {} ({})",
                t.amt,
                t.from,
                index.labels().primary(&t.from)
            );
        }
        println!("  shortfall {}", cover.shortfall);
    }
    for cover in index.sink_transfers(&bob, &pool, 20)? {
        println!("withdrawal at {} spent on:", cover.event);
        for t in &cover.claimed {
            println!(
                "  {} to {} ({})",
                t.amt,
                t.to,
                index.labels().primary(&t.to)
            );
        }
        println!("  shortfall {}", cover.shortfall);
    }

    for n in 1..=3 {
        let d = index.depositors_at_distance(&pool, n, 20)?;
        let w = index.withdrawers_at_distance(&pool, n, 20)?;
        println!(
            "distance {n}: {} depositors, {} withdrawers",
            d.len(),
            w.len()
        );
    }
    Ok(())
}

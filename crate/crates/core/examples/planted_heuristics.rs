//! Generate a synthetic trace with planted user mistakes, run every linking
//! heuristic, and check what each one recovers.
//!
//! cargo run -p anonset --example planted_heuristics [seed]

use std::collections::BTreeSet;

use anonset::heuristics::{combine, evaluate, Heuristic, HeuristicResult};
use anonset::metrics::AnonymityReport;
use anonset::ratio::render_percent;
use anonset::synthgen::{generate_trace, Behavior, BehaviorProfile, SynthConfig};
use anonset::Result;

fn main() -> Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let profile: BehaviorProfile = "disciplined=0.5,h1-reuser=0.1,h2-improper-sender=0.1,\
        h3-related-transfer=0.1,h4-intermediary=0.1,h5-cross-pool=0.1"
        .parse()?;
    let trace = generate_trace(&SynthConfig::new(profile, 300), seed)?;
    let index = trace.index()?;
    let t = trace.last_block;
    println!(
        "seed {seed}: {} pool events, {} transfers",
        trace.events.len(),
        trace.transfers.len()
    );
    for (behavior, n) in &trace.users {
        println!("  {n:>4} users {behavior}");
    }

    let mut per_heuristic = Vec::new();
    for h in Heuristic::ALL {
        let results = evaluate(h, &trace.pools, &index, t)?;
        let found: BTreeSet<_> = results
            .values()
            .flat_map(HeuristicResult::pair_keys)
            .collect();
        match h {
            Heuristic::H1 => {
                let reused: BTreeSet<_> = results
                    .values()
                    .flat_map(|r| r.reused.iter().copied())
                    .collect();
                println!(
                    "{h}: {} reused addresses, {} planted",
                    reused.len(),
                    trace.planted_reuse.len()
                );
            }
            _ => {
                let behavior = Behavior::ALL
                    .into_iter()
                    .find(|b| b.link_source() == h.link_source())
                    .unwrap();
                let planted = trace.planted_keys(behavior);
                let hits = found.intersection(&planted).count();
                println!(
                    "{h}: {} pairs, {hits}/{} planted pairs recovered",
                    found.len(),
                    planted.len()
                );
            }
        }
        per_heuristic.push(results);
    }

    println!();
    println!(
        "{:<6} {:>5} {:>5} {:>10}",
        "pool", "|OAS|", "|SAS|", "r_adv"
    );
    for pool in &trace.pools {
        let events = index.events(&pool.pool_id);
        let results: Vec<HeuristicResult> = per_heuristic
            .iter()
            .filter_map(|r| r.get(&pool.pool_id).cloned())
            .collect();
        let combined = combine(pool, &results, events, t)?;
        let refs: Vec<&HeuristicResult> = results.iter().collect();
        let report = AnonymityReport::build(pool, events, t, &refs, Some(&combined));
        let r_adv = report
            .r_adv
            .as_ref()
            .map(render_percent)
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<6} {:>5} {:>5} {r_adv:>10}",
            pool.pool_id,
            report.oas_size,
            combined.sas.len()
        );
    }
    Ok(())
}

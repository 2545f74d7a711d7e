//! Group addresses linked by the transfer-based heuristics into clusters and
//! print the size distribution.
//!
//! cargo run -p anonset --example cluster_histogram

use std::collections::BTreeSet;

use anonset::heuristics::{clusters_from_links, evaluate, Heuristic};
use anonset::metrics::cluster_size_histogram;
use anonset::ratio::render_percent;
use anonset::synthgen::{generate_trace, BehaviorProfile, SynthConfig};
use anonset::{LinkPair, Result};

fn main() -> Result<()> {
    let profile: BehaviorProfile =
        "disciplined=0.4,h2-improper-sender=0.15,h3-related-transfer=0.15,h4-intermediary=0.15,h5-cross-pool=0.15".parse()?;
    let trace = generate_trace(&SynthConfig::new(profile, 250), 21)?;
    let index = trace.index()?;

    let mut links: BTreeSet<LinkPair> = BTreeSet::new();
    for h in [Heuristic::H2, Heuristic::H3, Heuristic::H4, Heuristic::H5] {
        for result in evaluate(h, &trace.pools, &index, trace.last_block)?.into_values() {
            links.extend(result.link_pairs);
        }
    }
    let clusters = clusters_from_links(&links);
    println!("{} links form {} clusters", links.len(), clusters.len());
    for (size, (count, share)) in cluster_size_histogram(&clusters) {
        println!("  size {size:>3}: {count:>4} ({})", render_percent(&share));
    }
    if let Some(largest) = clusters.iter().max_by_key(|c| c.size()) {
        println!("largest cluster:");
        for member in &largest.members {
            println!("  {member} {}", index.labels().primary(member));
        }
    }
    Ok(())
}

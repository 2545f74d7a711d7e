//! Relayer adoption per pool and addresses that withdrew before they ever
//! deposited large sums.
//!
//! cargo run -p anonset --example relayers_and_flags

use anonset::metrics::{default_flag_threshold, fund_then_deposit_flags, relayer_usage};
use anonset::ratio::render_percent;
use anonset::synthgen::{generate_trace, BehaviorProfile, SynthConfig};
use anonset::Result;

fn main() -> Result<()> {
    let profile: BehaviorProfile =
        "disciplined=0.7,h2-improper-sender=0.2,attacker-fund-then-deposit=0.1".parse()?;
    let trace = generate_trace(&SynthConfig::new(profile, 200), 4)?;

    println!(
        "{:<6} {:>8} {:>12} {:>12}",
        "pool", "relayers", "withdrawals", "withdrawers"
    );
    for pool in &trace.pools {
        let usage = relayer_usage(pool, &trace.events);
        println!(
            "{:<6} {:>8} {:>12} {:>12}",
            pool.pool_id,
            usage.relayers,
            render_percent(&usage.withdrawal_share()),
            render_percent(&usage.withdrawer_share())
        );
    }

    let threshold = default_flag_threshold(trace.decimals)?;
    let flags =
        fund_then_deposit_flags(&trace.pools, &trace.events, &trace.label_book(), threshold)?;
    let coin = 10u128.pow(trace.decimals);
    println!(
        "{} addresses withdrew first and then deposited at least {} coins:",
        flags.len(),
        threshold.0 / coin
    );
    for f in &flags {
        println!(
            "  {} first out at {} in {}, first in at {}, {} coins{}",
            f.address,
            f.first_withdrawal.bn.height,
            f.first_withdrawal.pool_id,
            f.first_deposit.bn.height,
            f.total_deposited.0 / coin,
            if f.labeled_malicious {
                " (labeled malicious)"
            } else {
                ""
            }
        );
    }
    let planted = trace.planted_flags.len();
    let caught = flags
        .iter()
        .filter(|f| trace.planted_flags.contains(&f.address))
        .count();
    println!("{caught}/{planted} planted attackers flagged");
    Ok(())
}

//! Score heuristic links against side-channel evidence: name-service
//! transfers say who owns what, follow edges say who does not.
//!
//! cargo run -p anonset --example ground_truth_validation

use std::collections::BTreeSet;

use anonset::groundtruth::{
    debank_negative_pairs, depositor_withdrawer_universe, ens_subdomain_links, ens_transfer_links,
    keys, score_links, EnsSubdomain, EnsTransfer, FollowEdge, SideChannelSet,
};
use anonset::heuristics::{evaluate, Heuristic, HeuristicResult};
use anonset::ledger::actors;
use anonset::ratio::render_fixed;
use anonset::synthgen::{generate_trace, Behavior, BehaviorProfile, SynthConfig};
use anonset::{BlockNumber, EventKind, Result};

fn main() -> Result<()> {
    let profile: BehaviorProfile =
        "disciplined=0.6,h2-improper-sender=0.2,h3-related-transfer=0.2".parse()?;
    let trace = generate_trace(&SynthConfig::new(profile, 200), 17)?;
    let t = trace.last_block;

    // Pretend some owners left traces elsewhere: every third H2 pair handed
    // over a name, every other H3 pair shares a subdomain.
    let mut names = Vec::new();
    for (i, (a, b)) in trace
        .planted_keys(Behavior::H2ImproperSender)
        .into_iter()
        .enumerate()
        .step_by(3)
    {
        names.push(EnsTransfer {
            name: format!("user{i}.eth"),
            from: a,
            to: b,
            bn: BlockNumber::at(t),
            expiry: None,
        });
    }
    let mut subdomains = Vec::new();
    for (i, (a, b)) in trace
        .planted_keys(Behavior::H3RelatedTransfer)
        .into_iter()
        .enumerate()
        .step_by(2)
    {
        subdomains.push(EnsSubdomain {
            name: format!("w{i}.vault.eth"),
            owner: a,
            assignee: b,
            bn: BlockNumber::at(t),
        });
    }

    let depositors = actors(&trace.events, EventKind::Deposit, t);
    let withdrawers = actors(&trace.events, EventKind::Withdrawal, t);
    // Disciplined users follow a few strangers.
    let follows: Vec<FollowEdge> = depositors
        .iter()
        .zip(withdrawers.iter().rev())
        .take(40)
        .map(|(d, w)| FollowEdge {
            follower: *d,
            followed: *w,
        })
        .collect();

    let mut evidence = ens_transfer_links(&names)?;
    evidence.extend(ens_subdomain_links(&subdomains)?);
    evidence.extend(debank_negative_pairs(&follows, &depositors, &withdrawers)?);
    let side = SideChannelSet::from_links(evidence)?;
    let (universe, positive) =
        depositor_withdrawer_universe(&side.positive_keys(), &depositors, &withdrawers);
    println!(
        "universe: {} ({} pairs), {} positive pairs",
        universe.describe(),
        universe.size(),
        positive.len()
    );

    let index = trace.index()?;
    println!(
        "{:<4} {:>4} {:>4} {:>4} {:>8} {:>5} {:>5} {:>5}",
        "", "tp", "fp", "fn", "tn", "prec", "rec", "f1"
    );
    for h in [Heuristic::H2, Heuristic::H3] {
        let found: BTreeSet<_> = evaluate(h, &trace.pools, &index, t)?
            .values()
            .flat_map(HeuristicResult::pair_keys)
            .collect();
        let r = score_links(&found, &positive, &keys(&side.negative), &universe)?;
        println!(
            "{h:<4} {:>4} {:>4} {:>4} {:>8} {:>5} {:>5} {:>5}",
            r.tp,
            r.fp,
            r.fn_,
            r.tn,
            render_fixed(&r.precision, 2),
            render_fixed(&r.recall, 2),
            render_fixed(&r.f1, 2)
        );
    }
    Ok(())
}

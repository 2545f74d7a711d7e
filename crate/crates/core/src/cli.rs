//! Command surface: argument parsing, analysis commands and report emission.
//!
//! Every command renders a JSON record and a plain-text table. With `--out`
//! both are written as `<command>.json` and `<command>.txt`; the table is
//! always printed. Output is byte-stable for a fixed dataset and flag set.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::anonmining::{am_effect_on_h1, link_claims, LinkStatus, DEFAULT_SEARCH_CAP};
use crate::dataset::{ingest, Dataset};
use crate::error::{Error, Result};
use crate::graphindex::{Label, LedgerIndex};
use crate::groundtruth::{
    airdrop_links, debank_negative_pairs, depositor_withdrawer_universe, ens_subdomain_links,
    ens_transfer_links, keys, score_links,
};
use crate::heuristics::{
    clusters_from_links, combine, evaluate, parse_heuristics, Heuristic, HeuristicResult,
};
use crate::ledger::{actors, Address, Amount, EventKind, LinkPair, PoolConfig};
use crate::metrics::{
    cluster_size_histogram, default_flag_threshold, fund_then_deposit_flags, relayer_usage,
    resolve_ground_truth_state, true_anonymity_set, AnonymityReport, SasRow,
};
use crate::ratio::{parse_decimal, render_fixed, render_percent, Ratio};
use crate::synthgen::{generate_trace, BehaviorProfile, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "anonset",
    version,
    about = "Anonymity-set analytics for fixed-denomination mixer pools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Observed and simplified anonymity sets per pool.
    Anonymity(AnonymityArgs),
    /// Size histogram of linked-address clusters.
    Clusters(ClustersArgs),
    /// Relayer usage per pool.
    Relayers(Common),
    /// Distance-n depositors/withdrawers and where deposits come from.
    Flows(FlowsArgs),
    /// Addresses that withdraw first and later deposit heavily.
    Flags(FlagsArgs),
    /// Classify point claimants and solve for their withdrawals.
    AmLink(AmLinkArgs),
    /// Score heuristic links against side-channel evidence.
    Validate(ValidateArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for `<command>.json` and `<command>.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Restrict to one pool.
    #[arg(long)]
    pub pool: Option<String>,
    /// Cut height (inclusive); defaults to the manifest's last block.
    #[arg(long)]
    pub at: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnonymityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "h1,h2,h3,h4,h5")]
    pub heuristics: String,
    /// Also report the combination of all selected heuristics.
    #[arg(long)]
    pub combine: bool,
    /// Report the true anonymity set (synthetic datasets only).
    #[arg(long)]
    pub tas: bool,
}

#[derive(Debug, Args)]
pub struct ClustersArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "h2,h3,h4,h5")]
    pub heuristics: String,
}

#[derive(Debug, Args)]
pub struct FlowsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2)]
    pub distance: usize,
}

#[derive(Debug, Args)]
pub struct FlagsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Minimum total deposit in whole coins (default 1881).
    #[arg(long)]
    pub threshold: Option<String>,
}

#[derive(Debug, Args)]
pub struct AmLinkArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = DEFAULT_SEARCH_CAP)]
    pub search_cap: u64,
    /// Exit with status 4 when solving was only ever inconclusive.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// airdrop, ens, ens-transfer, ens-subdomain, intersection or planted.
    #[arg(long)]
    pub gt: String,
    #[arg(long, default_value = "h2,h3,h4,h5")]
    pub heuristics: String,
    /// Blocks after an airdrop within which forwarding counts.
    #[arg(long, default_value_t = 6_500)]
    pub window: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory the dataset is written to.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// A behavior name or `behavior=fraction,...`.
    #[arg(long, default_value = "disciplined")]
    pub profile: String,
    /// Profile for users active from the launch block on.
    #[arg(long)]
    pub post_profile: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 20_000)]
    pub span: u64,
    #[arg(long)]
    pub launch: Option<u64>,
}

/// A rendered report.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub name: &'static str,
    pub json: Value,
    pub text: String,
    /// Set by `am-link` when some claim was inconclusive and none exact.
    pub inconclusive_only: bool,
}

impl Report {
    fn new(name: &'static str, json: Value, text: String) -> Self {
        Report {
            name,
            json,
            text,
            inconclusive_only: false,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json_path = dir.join(format!("{}.json", self.name));
        let body = serde_json::to_string_pretty(&self.json).expect("report serializes") + "\n";
        fs::write(&json_path, body).map_err(|e| Error::io(&json_path, e))?;
        let text_path = dir.join(format!("{}.txt", self.name));
        fs::write(&text_path, &self.text).map_err(|e| Error::io(&text_path, e))
    }
}

/// Parse arguments, run the command, write reports. Returns the report and
/// the process exit status.
pub fn execute(cli: &Cli) -> Result<(Report, i32)> {
    let (report, out) = match &cli.command {
        Command::Synth(args) => (run_synth(args)?, Some(args.out.clone())),
        other => {
            let common = common(other);
            let (dataset, _) = ingest(&common.data)?;
            (run_analysis(&dataset, other)?, common.out.clone())
        }
    };
    if let Some(dir) = out {
        report.write(&dir)?;
    }
    let strict = matches!(&cli.command, Command::AmLink(a) if a.strict);
    let code = if strict && report.inconclusive_only {
        4
    } else {
        0
    };
    Ok((report, code))
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Anonymity(a) => &a.common,
        Command::Clusters(a) => &a.common,
        Command::Relayers(a) => a,
        Command::Flows(a) => &a.common,
        Command::Flags(a) => &a.common,
        Command::AmLink(a) => &a.common,
        Command::Validate(a) => &a.common,
        Command::Synth(_) => unreachable!("synth reads no dataset"),
    }
}

/// Run one analysis command over a loaded dataset.
pub fn run_analysis(dataset: &Dataset, command: &Command) -> Result<Report> {
    let ctx = Context::new(dataset, common(command))?;
    match command {
        Command::Anonymity(a) => anonymity(&ctx, a),
        Command::Clusters(a) => clusters(&ctx, a),
        Command::Relayers(_) => relayers(&ctx),
        Command::Flows(a) => flows(&ctx, a),
        Command::Flags(a) => flags(&ctx, a),
        Command::AmLink(a) => am_link(&ctx, a),
        Command::Validate(a) => validate(&ctx, a),
        Command::Synth(_) => Err(Error::input("synth does not analyze a dataset")),
    }
}

struct Context<'a> {
    dataset: &'a Dataset,
    index: LedgerIndex,
    /// Every pool, sorted by id (cross-pool heuristics need them all).
    all_pools: Vec<PoolConfig>,
    /// The pools being reported on.
    pools: Vec<PoolConfig>,
    t: u64,
}

impl<'a> Context<'a> {
    fn new(dataset: &'a Dataset, common: &Common) -> Result<Self> {
        let manifest = dataset.manifest()?;
        let all_pools = dataset.sorted_pools();
        let pools = match &common.pool {
            None => all_pools.clone(),
            Some(id) => vec![all_pools
                .iter()
                .find(|p| &p.pool_id == id)
                .cloned()
                .ok_or_else(|| Error::input(format!("unknown pool `{id}`")))?],
        };
        Ok(Context {
            dataset,
            index: dataset.index()?,
            all_pools,
            pools,
            t: common.at.unwrap_or(manifest.last_block),
        })
    }

    fn results(
        &self,
        hs: &[Heuristic],
    ) -> Result<BTreeMap<Heuristic, BTreeMap<String, HeuristicResult>>> {
        hs.iter()
            .map(|h| Ok((*h, evaluate(*h, &self.all_pools, &self.index, self.t)?)))
            .collect()
    }

    fn actors(&self, kind: EventKind) -> BTreeSet<Address> {
        self.all_pools
            .iter()
            .flat_map(|p| actors(self.index.events(&p.pool_id), kind, self.t))
            .collect()
    }
}

fn opt_percent(r: &Option<Ratio>) -> String {
    r.as_ref().map(render_percent).unwrap_or_else(|| "-".into())
}

fn fraction(r: &Option<Ratio>) -> Value {
    match r {
        Some(r) => json!(format!("{}/{}", r.numer(), r.denom())),
        None => Value::Null,
    }
}

fn row_json(row: &SasRow, links: usize) -> Value {
    json!({
        "heuristics": row.label,
        "sas": row.sas_size,
        "links": links,
        "reduction": render_percent(&row.reduction),
        "r_adv": row.r_adv.as_ref().map(render_percent),
    })
}

fn anonymity(ctx: &Context, args: &AnonymityArgs) -> Result<Report> {
    let hs = parse_heuristics(&args.heuristics)?;
    if args.tas && !(ctx.dataset.is_synthetic() && !ctx.dataset.note_spends.is_empty()) {
        return Err(Error::Mode(
            "--tas needs a synthetic dataset with note_spends ground truth".into(),
        ));
    }
    let results = ctx.results(&hs)?;
    let mut pools_json = Vec::new();
    let mut text = format!("anonymity sets at block {}\n", ctx.t);
    for pool in &ctx.pools {
        let events = ctx.index.events(&pool.pool_id);
        let per: Vec<&HeuristicResult> = hs.iter().map(|h| &results[h][&pool.pool_id]).collect();
        let combined = if args.combine {
            let owned: Vec<HeuristicResult> = per.iter().map(|r| (*r).clone()).collect();
            Some(combine(pool, &owned, events, ctx.t)?)
        } else {
            None
        };
        let mut report = AnonymityReport::build(pool, events, ctx.t, &per, combined.as_ref());
        if args.tas {
            let state = resolve_ground_truth_state(pool, events, &ctx.dataset.note_spends, ctx.t)?;
            report.tas_size = Some(true_anonymity_set(&state)?.len());
        }

        text.push_str(&format!(
            "\npool {}  |OAS| {}",
            pool.pool_id, report.oas_size
        ));
        if let Some(tas) = report.tas_size {
            text.push_str(&format!("  |TAS| {tas}"));
        }
        text.push_str(&format!(
            "\n  {:<16} {:>8} {:>8} {:>10} {:>10}\n",
            "heuristics", "links", "|SAS|", "reduction", "R_Adv"
        ));
        let mut rows = Vec::new();
        let all_rows = report
            .rows
            .iter()
            .zip(&per)
            .map(|(row, r)| (row, r.link_pairs.len()));
        let combined_row = report
            .combined
            .iter()
            .zip(combined.iter())
            .map(|(row, r)| (row, r.link_pairs.len()));
        for (row, links) in all_rows.chain(combined_row) {
            text.push_str(&format!(
                "  {:<16} {:>8} {:>8} {:>10} {:>10}\n",
                row.label,
                links,
                row.sas_size,
                render_percent(&row.reduction),
                opt_percent(&row.r_adv)
            ));
            rows.push(row_json(row, links));
        }
        let combined_json = rows.len() > report.rows.len();
        let combined_value = if combined_json { rows.pop() } else { None };
        pools_json.push(json!({
            "pool_id": pool.pool_id,
            "oas": report.oas_size,
            "tas": report.tas_size,
            "heuristics": rows,
            "combined": combined_value,
            "adv_o": fraction(&report.adv_o),
            "adv_s": fraction(&report.adv_s),
            "r_adv": report.r_adv.as_ref().map(render_percent),
        }));
    }
    let json = json!({"command": "anonymity", "as_of": ctx.t, "pools": pools_json});
    Ok(Report::new("anonymity", json, text))
}

fn clusters(ctx: &Context, args: &ClustersArgs) -> Result<Report> {
    let hs = parse_heuristics(&args.heuristics)?;
    let results = ctx.results(&hs)?;
    let selected: BTreeSet<&str> = ctx.pools.iter().map(|p| p.pool_id.as_str()).collect();
    let links: BTreeSet<LinkPair> = results
        .values()
        .flat_map(|per_pool| per_pool.iter())
        .filter(|(id, _)| selected.contains(id.as_str()))
        .flat_map(|(_, r)| r.link_pairs.iter().copied())
        .collect();
    let clusters = clusters_from_links(&links);
    let histogram = cluster_size_histogram(&clusters);
    let addresses: usize = clusters.iter().map(|c| c.size()).sum();
    let mut text = format!(
        "clusters at block {} ({}): {} clusters over {} addresses\n  {:>6} {:>8} {:>9}\n",
        ctx.t,
        hs.iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(","),
        clusters.len(),
        addresses,
        "size",
        "count",
        "share"
    );
    let mut rows = Vec::new();
    for (size, (count, share)) in &histogram {
        text.push_str(&format!(
            "  {:>6} {:>8} {:>9}\n",
            size,
            count,
            render_percent(share)
        ));
        rows.push(json!({"size": size, "count": count, "share": render_percent(share)}));
    }
    let json = json!({
        "command": "clusters",
        "as_of": ctx.t,
        "heuristics": hs.iter().map(|h| h.to_string()).collect::<Vec<_>>(),
        "clusters": clusters.len(),
        "addresses": addresses,
        "largest": clusters.iter().map(|c| c.size()).max().unwrap_or(0),
        "histogram": rows,
    });
    Ok(Report::new("clusters", json, text))
}

fn relayers(ctx: &Context) -> Result<Report> {
    let mut text = format!(
        "relayer usage\n  {:<8} {:>8} {:>11} {:>9} {:>11} {:>9}\n",
        "pool", "relayers", "withdrawals", "relayed", "withdrawers", "relayed"
    );
    let mut rows = Vec::new();
    for pool in &ctx.pools {
        let u = relayer_usage(pool, ctx.index.events(&pool.pool_id));
        text.push_str(&format!(
            "  {:<8} {:>8} {:>11} {:>9} {:>11} {:>9}\n",
            pool.pool_id,
            u.relayers,
            u.withdrawals,
            render_percent(&u.withdrawal_share()),
            u.withdrawers,
            render_percent(&u.withdrawer_share())
        ));
        rows.push(json!({
            "pool_id": pool.pool_id,
            "relayers": u.relayers,
            "withdrawals": u.withdrawals,
            "relayed_withdrawals": u.relayed_withdrawals,
            "relayed_withdrawal_share": render_percent(&u.withdrawal_share()),
            "withdrawers": u.withdrawers,
            "relayed_withdrawers": u.relayed_withdrawers,
            "relayed_withdrawer_share": render_percent(&u.withdrawer_share()),
        }));
    }
    Ok(Report::new(
        "relayers",
        json!({"command": "relayers", "pools": rows}),
        text,
    ))
}

fn flows(ctx: &Context, args: &FlowsArgs) -> Result<Report> {
    let labels = ctx.index.labels();
    let mut text = format!(
        "coin flows at block {} (distance {})\n",
        ctx.t, args.distance
    );
    let mut rows = Vec::new();
    for pool in &ctx.pools {
        let upstream = ctx
            .index
            .depositors_at_distance(pool, args.distance, ctx.t)?;
        let downstream = ctx
            .index
            .withdrawers_at_distance(pool, args.distance, ctx.t)?;
        let mut sources: BTreeMap<Label, u128> = BTreeMap::new();
        let mut sinks: BTreeMap<Label, u128> = BTreeMap::new();
        let (mut source_gap, mut sink_gap) = (0u128, 0u128);
        let events = ctx.index.events(&pool.pool_id);
        for d in actors(events, EventKind::Deposit, ctx.t) {
            for cover in ctx.index.source_transfers(&d, pool, ctx.t)? {
                for t in &cover.claimed {
                    *sources.entry(labels.primary(&t.from)).or_default() += t.amt.0;
                }
                source_gap += cover.shortfall.0;
            }
        }
        for w in actors(events, EventKind::Withdrawal, ctx.t) {
            for cover in ctx.index.sink_transfers(&w, pool, ctx.t)? {
                for t in &cover.claimed {
                    *sinks.entry(labels.primary(&t.to)).or_default() += t.amt.0;
                }
                sink_gap += cover.shortfall.0;
            }
        }
        let by_label = |m: &BTreeMap<Label, u128>| -> Value {
            Value::Object(
                m.iter()
                    .map(|(l, v)| (l.to_string(), json!(v.to_string())))
                    .collect(),
            )
        };
        text.push_str(&format!(
            "\npool {}  depositors {}  withdrawers {}\n",
            pool.pool_id,
            upstream.len(),
            downstream.len()
        ));
        for (dir, m, gap) in [("source", &sources, source_gap), ("sink", &sinks, sink_gap)] {
            for (label, v) in m {
                text.push_str(&format!("  {dir:<7} {:<13} {v}\n", label.to_string()));
            }
            text.push_str(&format!("  {dir:<7} {:<13} {gap}\n", "untraced"));
        }
        rows.push(json!({
            "pool_id": pool.pool_id,
            "depositors": upstream.len(),
            "withdrawers": downstream.len(),
            "sources": by_label(&sources),
            "sinks": by_label(&sinks),
            "untraced_sources": source_gap.to_string(),
            "untraced_sinks": sink_gap.to_string(),
        }));
    }
    let json =
        json!({"command": "flows", "as_of": ctx.t, "distance": args.distance, "pools": rows});
    Ok(Report::new("flows", json, text))
}

fn coins_to_base(text: &str, decimals: u32) -> Result<Amount> {
    let r = parse_decimal(text).ok_or_else(|| Error::input(format!("bad amount `{text}`")))?;
    let scale = 10u128
        .checked_pow(decimals)
        .ok_or_else(|| Error::input("decimals overflow"))?;
    let scaled = r * Ratio::from_integer(scale);
    if !scaled.is_integer() {
        return Err(Error::input(format!(
            "`{text}` has more than {decimals} decimals"
        )));
    }
    Ok(Amount(scaled.to_integer()))
}

fn flags(ctx: &Context, args: &FlagsArgs) -> Result<Report> {
    let decimals = ctx.dataset.manifest()?.decimals;
    let threshold = match &args.threshold {
        Some(t) => coins_to_base(t, decimals)?,
        None => default_flag_threshold(decimals)?,
    };
    let events: Vec<_> = ctx
        .pools
        .iter()
        .flat_map(|p| {
            ctx.index
                .events(&p.pool_id)
                .iter()
                .filter(|e| e.bn.within(ctx.t))
                .cloned()
        })
        .collect();
    let flags = fund_then_deposit_flags(&ctx.pools, &events, ctx.index.labels(), threshold)?;
    let mut text = format!(
        "withdraw-then-deposit addresses (threshold {threshold}): {}\n",
        flags.len()
    );
    let mut rows = Vec::new();
    for f in &flags {
        text.push_str(&format!(
            "  {}  withdrew {} at {}  deposited {} from {}{}\n",
            f.address,
            f.first_withdrawal.pool_id,
            f.first_withdrawal.bn,
            f.total_deposited,
            f.first_deposit.bn,
            if f.labeled_malicious {
                "  [malicious]"
            } else {
                ""
            }
        ));
        rows.push(json!({
            "address": f.address.to_string(),
            "first_withdrawal": {"pool_id": f.first_withdrawal.pool_id, "block": f.first_withdrawal.bn.to_string()},
            "first_deposit": {"pool_id": f.first_deposit.pool_id, "block": f.first_deposit.bn.to_string()},
            "total_deposited": f.total_deposited.to_string(),
            "labeled_malicious": f.labeled_malicious,
        }));
    }
    let json = json!({"command": "flags", "as_of": ctx.t, "threshold": threshold.to_string(), "flagged": rows});
    Ok(Report::new("flags", json, text))
}

fn am_link(ctx: &Context, args: &AmLinkArgs) -> Result<Report> {
    let claims: Vec<_> = ctx
        .dataset
        .ap_claims
        .iter()
        .filter(|c| c.bn.within(ctx.t))
        .cloned()
        .collect();
    let links = link_claims(&ctx.pools, &ctx.index, &claims, args.search_cap)?;
    let mut categories: BTreeMap<String, usize> = BTreeMap::new();
    let mut statuses: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows = Vec::new();
    for l in &links {
        *categories.entry(l.category.to_string()).or_default() += 1;
        let status = l.solution.as_ref().map(|s| s.status);
        if let Some(s) = status {
            *statuses.entry(s.to_string()).or_default() += 1;
        }
        rows.push(json!({
            "recipient": l.claim.recipient.to_string(),
            "claim_block": l.claim.bn.to_string(),
            "ap": l.claim.ap,
            "category": l.category.to_string(),
            "pool_id": l.pool_id,
            "deposits": l.deposits.iter().map(|b| b.to_string()).collect::<Vec<_>>(),
            "status": status.map(|s| s.to_string()),
            "residual": l.solution.as_ref().map(|s| s.residual),
            "truncated": l.solution.as_ref().map(|s| s.truncated),
            "withdrawals": l.solution.as_ref().map(|s| {
                s.tuples
                    .iter()
                    .map(|t| t.iter().map(|b| b.to_string()).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            }),
        }));
    }
    let mut text = format!("point claims at block {}: {}\n", ctx.t, links.len());
    for (c, n) in &categories {
        text.push_str(&format!("  {c:<14} {n}\n"));
    }
    text.push_str("solver outcomes\n");
    for (s, n) in &statuses {
        text.push_str(&format!("  {s:<14} {n}\n"));
    }
    let mut effects = Vec::new();
    if let Some(launch) = ctx.dataset.manifest()?.am_launch {
        text.push_str(&format!("H1 before/from launch block {launch}\n"));
        for pool in &ctx.pools {
            let events = ctx.index.events(&pool.pool_id);
            let Ok(e) = am_effect_on_h1(pool, events, launch) else {
                continue;
            };
            text.push_str(&format!(
                "  {:<8} {:>10} {:>10}\n",
                pool.pool_id,
                opt_percent(&e.pre_r_adv),
                opt_percent(&e.post_r_adv)
            ));
            effects.push(json!({
                "pool_id": pool.pool_id,
                "pre": {"oas": e.pre_oas, "sas": e.pre_sas, "r_adv": e.pre_r_adv.as_ref().map(render_percent)},
                "post": {"oas": e.post_oas, "sas": e.post_sas, "r_adv": e.post_r_adv.as_ref().map(render_percent)},
            }));
        }
    }
    let exact = statuses
        .get(&LinkStatus::Exact.to_string())
        .copied()
        .unwrap_or(0);
    let inconclusive = statuses
        .get(&LinkStatus::Inconclusive.to_string())
        .copied()
        .unwrap_or(0);
    let json = json!({
        "command": "am-link",
        "as_of": ctx.t,
        "search_cap": args.search_cap,
        "categories": categories,
        "outcomes": statuses,
        "claims": rows,
        "h1_effect": effects,
    });
    let mut report = Report::new("am-link", json, text);
    report.inconclusive_only = inconclusive > 0 && exact == 0;
    Ok(report)
}

fn validate(ctx: &Context, args: &ValidateArgs) -> Result<Report> {
    let ds = ctx.dataset;
    let airdrop = || airdrop_links(&ds.airdrop_claims, &ds.token_transfers, args.window);
    let ens = || -> Result<BTreeSet<(Address, Address)>> {
        let mut k = keys(&ens_transfer_links(&ds.ens_transfers)?);
        k.extend(keys(&ens_subdomain_links(&ds.ens_subdomains)?));
        Ok(k)
    };
    let gt: BTreeSet<(Address, Address)> = match args.gt.as_str() {
        "airdrop" => keys(&airdrop()?),
        "ens" => ens()?,
        "ens-transfer" => keys(&ens_transfer_links(&ds.ens_transfers)?),
        "ens-subdomain" => keys(&ens_subdomain_links(&ds.ens_subdomains)?),
        "intersection" => {
            let a = keys(&airdrop()?);
            ens()?.intersection(&a).copied().collect()
        }
        "planted" => {
            if !ds.is_synthetic() {
                return Err(Error::Mode(
                    "planted ground truth exists only for synthetic datasets".into(),
                ));
            }
            ds.ground_truth.iter().map(|l| l.pair.key()).collect()
        }
        other => return Err(Error::input(format!("unknown ground truth `{other}`"))),
    };
    let depositors = ctx.actors(EventKind::Deposit);
    let withdrawers = ctx.actors(EventKind::Withdrawal);
    let negative = keys(&debank_negative_pairs(
        &ds.follow_edges,
        &depositors,
        &withdrawers,
    )?);
    let (universe, gt) = depositor_withdrawer_universe(&gt, &depositors, &withdrawers);

    let hs: Vec<Heuristic> = parse_heuristics(&args.heuristics)?
        .into_iter()
        .filter(|h| *h != Heuristic::H1)
        .collect();
    if hs.is_empty() {
        return Err(Error::input(
            "H1 links no pairs; pick at least one of h2..h5",
        ));
    }
    let results = ctx.results(&hs)?;
    let selected: BTreeSet<&str> = ctx.pools.iter().map(|p| p.pool_id.as_str()).collect();
    let links_of = |h: &Heuristic| -> BTreeSet<(Address, Address)> {
        results[h]
            .iter()
            .filter(|(id, _)| selected.contains(id.as_str()))
            .flat_map(|(_, r)| r.pair_keys())
            .collect()
    };
    let mut candidates: Vec<(String, BTreeSet<(Address, Address)>)> =
        hs.iter().map(|h| (h.to_string(), links_of(h))).collect();
    if hs.len() > 1 {
        let all = candidates
            .iter()
            .flat_map(|(_, k)| k.iter().copied())
            .collect();
        let label = hs
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join("+");
        candidates.push((label, all));
    }

    let mut text = format!(
        "validation against {} ({} pairs, universe {} = {})\n  {:<14} {:>6} {:>6} {:>6} {:>10} {:>9} {:>6} {:>6} {:>6}\n",
        args.gt,
        gt.len(),
        universe.describe(),
        universe.size(),
        "heuristics", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "neg"
    );
    let mut rows = Vec::new();
    for (label, predicted) in &candidates {
        let r = score_links(predicted, &gt, &negative, &universe)?;
        let (p, rc, f) = (
            render_fixed(&r.precision, 2),
            render_fixed(&r.recall, 2),
            render_fixed(&r.f1, 2),
        );
        text.push_str(&format!(
            "  {:<14} {:>6} {:>6} {:>6} {:>10} {:>9} {:>6} {:>6} {:>6}\n",
            label, r.tp, r.fp, r.fn_, r.tn, p, rc, f, r.negative_signal_fp
        ));
        rows.push(json!({
            "heuristics": label,
            "tp": r.tp, "fp": r.fp, "fn": r.fn_, "tn": r.tn,
            "precision": p, "recall": rc, "f1": f,
            "negative_signal_fp": r.negative_signal_fp,
        }));
    }
    if args.gt == "intersection" {
        text.push_str("  note: the intersection of airdrop and ENS evidence is usually small\n");
    }
    let json = json!({
        "command": "validate",
        "as_of": ctx.t,
        "ground_truth": args.gt,
        "ground_truth_pairs": gt.len(),
        "universe": universe.describe(),
        "universe_size": universe.size().to_string(),
        "rows": rows,
    });
    Ok(Report::new("validate", json, text))
}

/// Generate a synthetic dataset into `args.out` and describe it.
pub fn run_synth(args: &SynthArgs) -> Result<Report> {
    let profile: BehaviorProfile = args.profile.parse()?;
    let mut config = SynthConfig::new(profile, args.users);
    config.span = args.span;
    config.am_launch = args.launch;
    config.post_launch_profile = args.post_profile.as_deref().map(str::parse).transpose()?;
    let trace = generate_trace(&config, args.seed)?;
    let dataset = Dataset::from_trace(&trace);
    dataset.write(&args.out)?;

    let counts = dataset.counts();
    let mut text = format!(
        "synthetic dataset: seed {}, {} users, blocks {}..={}, launch {}\n",
        args.seed, args.users, trace.first_block, trace.last_block, trace.am_launch
    );
    for (b, n) in &trace.users {
        text.push_str(&format!("  {:<28} {n}\n", b.name()));
    }
    for (f, n) in &counts {
        text.push_str(&format!("  {f:<28} {n}\n"));
    }
    let json = json!({
        "command": "synth",
        "seed": args.seed,
        "profile": config.profile.to_string(),
        "post_profile": config.post_launch_profile.as_ref().map(|p| p.to_string()),
        "first_block": trace.first_block,
        "last_block": trace.last_block,
        "am_launch": trace.am_launch,
        "users": trace.users.iter().map(|(b, n)| (b.name().to_string(), json!(n))).collect::<serde_json::Map<_, _>>(),
        "records": counts.iter().map(|(f, n)| (f.to_string(), json!(n))).collect::<serde_json::Map<_, _>>(),
    });
    Ok(Report::new("synth", json, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_command_lines() {
        let cli = Cli::try_parse_from([
            "anonset",
            "anonymity",
            "--data",
            "d",
            "--pool",
            "P100",
            "--at",
            "7",
            "--heuristics",
            "h1,h3",
            "--combine",
        ])
        .unwrap();
        match cli.command {
            Command::Anonymity(a) => {
                assert!(a.combine);
                assert_eq!(a.common.at, Some(7));
                assert_eq!(a.common.pool.as_deref(), Some("P100"));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["anonset", "anonymity", "--data", "d", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["anonset", "frobnicate"]).is_err());
    }

    #[test]
    fn coin_amounts_scale_exactly() {
        assert_eq!(coins_to_base("1881", 2).unwrap(), Amount(188_100));
        assert_eq!(coins_to_base("0.5", 1).unwrap(), Amount(5));
        assert!(coins_to_base("0.05", 1).is_err());
        assert!(coins_to_base("x", 1).is_err());
    }
}

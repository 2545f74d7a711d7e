//! On-disk datasets: a directory of line-delimited JSON record files plus a
//! `manifest.json`.
//!
//! Amounts are decimal strings in base units, blocks are unsigned integers
//! and addresses are 0x-prefixed hex. Every line is validated field by field
//! before anything is analyzed; errors name the file, the line and the field.
//!
//! | file | fields |
//! |------|--------|
//! | `pools.jsonl` | pool_id, coin, denomination, am_weight, contract? |
//! | `pool_events.jsonl` | pool_id, kind, block, tx_index?, log_index?, actor, tx_sender, relayer? |
//! | `transfers.jsonl`, `token_transfers.jsonl` | block, tx_index?, log_index?, from, to, amount, coin, internal? |
//! | `labels.jsonl` | address, label |
//! | `relayers.jsonl` | address |
//! | `ap_claims.jsonl` | recipient, block, tx_index?, log_index?, ap |
//! | `ens_transfers.jsonl` | name, from, to, block, tx_index?, log_index?, expiry? |
//! | `ens_subdomains.jsonl` | name, owner, assignee, block, tx_index?, log_index? |
//! | `airdrop_claims.jsonl` | recipient, block, tx_index?, log_index?, token, amount |
//! | `follow_edges.jsonl` | follower, followed |
//! | `ground_truth.jsonl` | behavior, a1, a2? (synthetic only) |
//! | `note_spends.jsonl` | pool_id, withdrawal_block, withdrawal_tx_index, withdrawal_log_index, deposit_block, deposit_tx_index, deposit_log_index (synthetic only) |
//!
//! Only the manifest, `pools.jsonl` and `pool_events.jsonl` are required.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Debug;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::anonmining::APClaim;
use crate::error::{Error, Result};
use crate::graphindex::{build_index, Label, LabelBook, LedgerIndex};
use crate::groundtruth::{AirdropClaim, EnsSubdomain, EnsTransfer, FollowEdge};
use crate::ledger::{
    Address, Amount, BlockNumber, EventKind, LinkPair, LinkSource, PoolConfig, PoolEvent, Transfer,
};
use crate::metrics::NoteSpend;
use crate::synthgen::{Behavior, PlantedLink, SynthTrace};

pub const MANIFEST: &str = "manifest.json";
pub const POOLS: &str = "pools.jsonl";
pub const POOL_EVENTS: &str = "pool_events.jsonl";
pub const TRANSFERS: &str = "transfers.jsonl";
pub const TOKEN_TRANSFERS: &str = "token_transfers.jsonl";
pub const LABELS: &str = "labels.jsonl";
pub const RELAYERS: &str = "relayers.jsonl";
pub const AP_CLAIMS: &str = "ap_claims.jsonl";
pub const ENS_TRANSFERS: &str = "ens_transfers.jsonl";
pub const ENS_SUBDOMAINS: &str = "ens_subdomains.jsonl";
pub const AIRDROP_CLAIMS: &str = "airdrop_claims.jsonl";
pub const FOLLOW_EDGES: &str = "follow_edges.jsonl";
pub const GROUND_TRUTH: &str = "ground_truth.jsonl";
pub const NOTE_SPENDS: &str = "note_spends.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub coin: String,
    pub first_block: u64,
    pub last_block: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub am_launch: Option<u64>,
    #[serde(default = "default_decimals")]
    pub decimals: u32,
    #[serde(default)]
    pub synthetic: bool,
}

fn default_decimals() -> u32 {
    18
}

/// Everything a dataset directory holds, validated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub manifest: Option<Manifest>,
    pub pools: Vec<PoolConfig>,
    pub pool_events: Vec<PoolEvent>,
    pub transfers: Vec<Transfer>,
    pub token_transfers: Vec<Transfer>,
    pub labels: Vec<(Address, Label)>,
    pub relayers: BTreeSet<Address>,
    pub ap_claims: Vec<APClaim>,
    pub ens_transfers: Vec<EnsTransfer>,
    pub ens_subdomains: Vec<EnsSubdomain>,
    pub airdrop_claims: Vec<AirdropClaim>,
    pub follow_edges: Vec<FollowEdge>,
    pub ground_truth: Vec<PlantedLink>,
    pub planted_reuse: BTreeSet<Address>,
    pub planted_flags: BTreeSet<Address>,
    pub note_spends: Vec<NoteSpend>,
}

/// Records loaded per file.
pub type LoadSummary = BTreeMap<&'static str, usize>;

struct Rec<'a> {
    file: &'a str,
    line: usize,
    obj: Map<String, Value>,
}

impl<'a> Rec<'a> {
    fn parse(file: &'a str, line: usize, text: &str, allowed: &[&str]) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Schema {
            file: file.into(),
            line,
            field: "-".into(),
            message: format!("not valid JSON: {e}"),
        })?;
        let Value::Object(obj) = value else {
            return Err(Error::Schema {
                file: file.into(),
                line,
                field: "-".into(),
                message: "expected a JSON object".into(),
            });
        };
        let rec = Rec { file, line, obj };
        if let Some(k) = rec.obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(rec.err(k, "unknown field"));
        }
        Ok(rec)
    }

    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            file: self.file.into(),
            line: self.line,
            field: field.into(),
            message: message.into(),
        }
    }

    fn opt_str(&self, field: &str) -> Result<Option<&str>> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(field, "expected a string")),
        }
    }

    fn str(&self, field: &str) -> Result<&str> {
        self.opt_str(field)?
            .ok_or_else(|| self.err(field, "missing"))
    }

    fn opt_u64(&self, field: &str) -> Result<Option<u64>> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| self.err(field, "expected an unsigned integer")),
        }
    }

    fn u64(&self, field: &str) -> Result<u64> {
        self.opt_u64(field)?
            .ok_or_else(|| self.err(field, "missing"))
    }

    fn u32_or_zero(&self, field: &str) -> Result<u32> {
        let v = self.opt_u64(field)?.unwrap_or(0);
        u32::try_from(v).map_err(|_| self.err(field, "out of range"))
    }

    fn bool_or_false(&self, field: &str) -> Result<bool> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(false),
            Some(Value::Bool(b)) => Ok(*b),
            Some(_) => Err(self.err(field, "expected true or false")),
        }
    }

    fn opt_addr(&self, field: &str) -> Result<Option<Address>> {
        self.opt_str(field)?
            .map(|s| s.parse().map_err(|e: String| self.err(field, e)))
            .transpose()
    }

    fn addr(&self, field: &str) -> Result<Address> {
        self.opt_addr(field)?
            .ok_or_else(|| self.err(field, "missing"))
    }

    fn amount(&self, field: &str) -> Result<Amount> {
        self.str(field)?
            .parse()
            .map_err(|e: String| self.err(field, e))
    }

    fn name(&self, field: &str) -> Result<String> {
        let s = self.str(field)?;
        if s.trim().is_empty() {
            return Err(self.err(field, "must not be empty"));
        }
        Ok(s.to_string())
    }

    /// `{prefix}block`, `{prefix}tx_index`, `{prefix}log_index`.
    fn block(&self, prefix: &str) -> Result<BlockNumber> {
        Ok(BlockNumber::new(
            self.u64(&format!("{prefix}block"))?,
            self.u32_or_zero(&format!("{prefix}tx_index"))?,
            self.u32_or_zero(&format!("{prefix}log_index"))?,
        ))
    }
}

fn read_lines(dir: &Path, file: &'static str, required: bool) -> Result<Vec<(usize, String)>> {
    let path = dir.join(file);
    if !path.exists() {
        return if required {
            Err(Error::MissingFile(path))
        } else {
            Ok(Vec::new())
        };
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

/// Parse every line of `file`, rejecting exact duplicates.
fn load<T: Debug>(
    dir: &Path,
    file: &'static str,
    required: bool,
    allowed: &[&str],
    mut parse: impl FnMut(&Rec) -> Result<T>,
) -> Result<Vec<T>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (line, text) in read_lines(dir, file, required)? {
        let rec = Rec::parse(file, line, &text, allowed)?;
        let item = parse(&rec)?;
        if let Some(first) = seen.insert(format!("{item:?}"), line) {
            return Err(Error::Duplicate {
                file: file.into(),
                line,
                first,
            });
        }
        out.push(item);
    }
    Ok(out)
}

const BLOCK_FIELDS: [&str; 3] = ["block", "tx_index", "log_index"];

fn fields(extra: &[&'static str], with_block: bool) -> Vec<&'static str> {
    let mut f = extra.to_vec();
    if with_block {
        f.extend(BLOCK_FIELDS);
    }
    f
}

fn parse_transfer(r: &Rec) -> Result<Transfer> {
    let coin = r.name("coin")?;
    let mut t = Transfer::new(
        r.block("")?,
        r.addr("from")?,
        r.addr("to")?,
        r.amount("amount")?,
        &coin,
    );
    t.internal = r.bool_or_false("internal")?;
    Ok(t)
}

/// Load and validate a dataset directory.
pub fn ingest(dir: &Path) -> Result<(Dataset, LoadSummary)> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(Error::MissingFile(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Schema {
        file: MANIFEST.into(),
        line: e.line(),
        field: "-".into(),
        message: e.to_string(),
    })?;
    if manifest.first_block > manifest.last_block {
        return Err(Error::Schema {
            file: MANIFEST.into(),
            line: 1,
            field: "last_block".into(),
            message: "precedes first_block".into(),
        });
    }
    let in_range = |r: &Rec, field: &str, h: u64| -> Result<()> {
        if h > manifest.last_block {
            return Err(r.err(field, format!("block {h} after the manifest's last block")));
        }
        Ok(())
    };

    let pools = load(
        dir,
        POOLS,
        true,
        &["pool_id", "coin", "denomination", "am_weight", "contract"],
        |r| {
            let mut pool = PoolConfig::new(
                &r.name("pool_id")?,
                &r.name("coin")?,
                r.amount("denomination")?,
                r.u64("am_weight")?,
            )
            .map_err(|e| r.err("denomination", e.to_string()))?;
            pool.contract = r.opt_addr("contract")?;
            Ok(pool)
        },
    )?;
    let mut pool_ids: HashMap<String, usize> = HashMap::new();
    for (i, p) in pools.iter().enumerate() {
        if let Some(first) = pool_ids.insert(p.pool_id.clone(), i + 1) {
            return Err(Error::Duplicate {
                file: POOLS.into(),
                line: i + 1,
                first,
            });
        }
    }

    let event_fields = fields(&["pool_id", "kind", "actor", "tx_sender", "relayer"], true);
    let pool_events = load(dir, POOL_EVENTS, true, &event_fields, |r| {
        let pool_id = r.name("pool_id")?;
        if !pool_ids.contains_key(&pool_id) {
            return Err(r.err("pool_id", format!("unknown pool `{pool_id}`")));
        }
        let kind = match r.str("kind")? {
            "deposit" => EventKind::Deposit,
            "withdrawal" => EventKind::Withdrawal,
            other => {
                return Err(r.err(
                    "kind",
                    format!("expected deposit or withdrawal, got `{other}`"),
                ))
            }
        };
        let bn = r.block("")?;
        in_range(r, "block", bn.height)?;
        let e = PoolEvent {
            pool_id,
            kind,
            bn,
            actor: r.addr("actor")?,
            tx_sender: r.addr("tx_sender")?,
            relayer: r.opt_addr("relayer")?,
        };
        e.validate()
            .map_err(|err| r.err("relayer", err.to_string()))?;
        Ok(e)
    })?;

    let transfer_fields = fields(&["from", "to", "amount", "coin", "internal"], true);
    let transfers = load(dir, TRANSFERS, false, &transfer_fields, parse_transfer)?;
    let token_transfers = load(
        dir,
        TOKEN_TRANSFERS,
        false,
        &transfer_fields,
        parse_transfer,
    )?;

    let labels = load(dir, LABELS, false, &["address", "label"], |r| {
        let label: Label = r
            .str("label")?
            .parse()
            .map_err(|e: String| r.err("label", e))?;
        Ok((r.addr("address")?, label))
    })?;
    let relayers = load(dir, RELAYERS, false, &["address"], |r| r.addr("address"))?;

    let ap_claims = load(
        dir,
        AP_CLAIMS,
        false,
        &fields(&["recipient", "ap"], true),
        |r| {
            Ok(APClaim {
                recipient: r.addr("recipient")?,
                bn: r.block("")?,
                ap: r.u64("ap")?,
            })
        },
    )?;
    let ens_transfers = load(
        dir,
        ENS_TRANSFERS,
        false,
        &fields(&["name", "from", "to", "expiry"], true),
        |r| {
            Ok(EnsTransfer {
                name: r.name("name")?,
                from: r.addr("from")?,
                to: r.addr("to")?,
                bn: r.block("")?,
                expiry: r.opt_u64("expiry")?,
            })
        },
    )?;
    let ens_subdomains = load(
        dir,
        ENS_SUBDOMAINS,
        false,
        &fields(&["name", "owner", "assignee"], true),
        |r| {
            Ok(EnsSubdomain {
                name: r.name("name")?,
                owner: r.addr("owner")?,
                assignee: r.addr("assignee")?,
                bn: r.block("")?,
            })
        },
    )?;
    let airdrop_claims = load(
        dir,
        AIRDROP_CLAIMS,
        false,
        &fields(&["recipient", "token", "amount"], true),
        |r| {
            Ok(AirdropClaim {
                recipient: r.addr("recipient")?,
                bn: r.block("")?,
                token: r.name("token")?,
                amount: r.amount("amount")?,
            })
        },
    )?;
    let follow_edges = load(dir, FOLLOW_EDGES, false, &["follower", "followed"], |r| {
        Ok(FollowEdge {
            follower: r.addr("follower")?,
            followed: r.addr("followed")?,
        })
    })?;

    enum Truth {
        Link(PlantedLink),
        Reuse(Address),
        Flag(Address),
    }
    impl Debug for Truth {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            match self {
                Truth::Link(l) => write!(f, "link {l:?}"),
                Truth::Reuse(a) => write!(f, "reuse {a}"),
                Truth::Flag(a) => write!(f, "flag {a}"),
            }
        }
    }
    let truth = load(dir, GROUND_TRUTH, false, &["behavior", "a1", "a2"], |r| {
        let behavior: Behavior = r
            .str("behavior")?
            .parse()
            .map_err(|e: Error| r.err("behavior", e.to_string()))?;
        let a1 = r.addr("a1")?;
        match (r.opt_addr("a2")?, behavior) {
            (Some(a2), _) => {
                let source = behavior.link_source().unwrap_or(LinkSource::Planted);
                let pair =
                    LinkPair::positive(a1, a2, source).map_err(|e| r.err("a2", e.to_string()))?;
                Ok(Truth::Link(PlantedLink { pair, behavior }))
            }
            (None, Behavior::H1Reuser) => Ok(Truth::Reuse(a1)),
            (None, Behavior::AttackerFundThenDeposit) => Ok(Truth::Flag(a1)),
            (None, _) => Err(r.err("a2", "missing")),
        }
    })?;
    let truth_count = truth.len();
    let mut ground_truth = Vec::new();
    let mut planted_reuse = BTreeSet::new();
    let mut planted_flags = BTreeSet::new();
    for t in truth {
        match t {
            Truth::Link(l) => ground_truth.push(l),
            Truth::Reuse(a) => {
                planted_reuse.insert(a);
            }
            Truth::Flag(a) => {
                planted_flags.insert(a);
            }
        }
    }

    let spend_fields = [
        "pool_id",
        "withdrawal_block",
        "withdrawal_tx_index",
        "withdrawal_log_index",
        "deposit_block",
        "deposit_tx_index",
        "deposit_log_index",
    ];
    let note_spends = load(dir, NOTE_SPENDS, false, &spend_fields, |r| {
        let pool_id = r.name("pool_id")?;
        if !pool_ids.contains_key(&pool_id) {
            return Err(r.err("pool_id", format!("unknown pool `{pool_id}`")));
        }
        Ok(NoteSpend {
            pool_id,
            withdrawal: r.block("withdrawal_")?,
            deposit: r.block("deposit_")?,
        })
    })?;

    let dataset = Dataset {
        manifest: Some(manifest),
        pools,
        pool_events: canonical_events(pool_events),
        transfers,
        token_transfers,
        labels,
        relayers: relayers.into_iter().collect(),
        ap_claims,
        ens_transfers,
        ens_subdomains,
        airdrop_claims,
        follow_edges,
        ground_truth,
        planted_reuse,
        planted_flags,
        note_spends,
    };
    let mut summary = dataset.counts();
    summary.insert(GROUND_TRUTH, truth_count);
    Ok((dataset, summary))
}

fn block_fields(obj: &mut Map<String, Value>, prefix: &str, bn: &BlockNumber) {
    obj.insert(format!("{prefix}block"), json!(bn.height));
    obj.insert(format!("{prefix}tx_index"), json!(bn.tx_index));
    obj.insert(format!("{prefix}log_index"), json!(bn.log_index));
}

fn object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(m) => m,
        _ => unreachable!("json! object literal"),
    }
}

fn transfer_json(t: &Transfer) -> Value {
    let mut o = object(json!({
        "from": t.from.to_string(),
        "to": t.to.to_string(),
        "amount": t.amt.to_string(),
        "coin": t.coin,
    }));
    if t.internal {
        o.insert("internal".into(), json!(true));
    }
    block_fields(&mut o, "", &t.bn);
    Value::Object(o)
}

fn write_lines(dir: &Path, file: &str, lines: Vec<Value>) -> Result<()> {
    let path = dir.join(file);
    let mut text = String::new();
    for v in lines {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Events grouped by pool, then in block order.
fn canonical_events(mut events: Vec<PoolEvent>) -> Vec<PoolEvent> {
    events.sort_by(|a, b| (&a.pool_id, a.bn).cmp(&(&b.pool_id, b.bn)));
    events
}

impl Dataset {
    pub fn from_trace(trace: &SynthTrace) -> Self {
        Dataset {
            manifest: Some(Manifest {
                coin: trace.coin.clone(),
                first_block: trace.first_block,
                last_block: trace.last_block,
                am_launch: Some(trace.am_launch),
                decimals: trace.decimals,
                synthetic: true,
            }),
            pools: trace.pools.clone(),
            pool_events: canonical_events(trace.events.clone()),
            transfers: trace.transfers.clone(),
            token_transfers: trace.token_transfers.clone(),
            labels: trace.labels.clone(),
            relayers: trace.relayers.clone(),
            ap_claims: trace.claims.clone(),
            ground_truth: trace.planted.clone(),
            planted_reuse: trace.planted_reuse.clone(),
            planted_flags: trace.planted_flags.clone(),
            note_spends: trace.note_spends.clone(),
            ..Dataset::default()
        }
    }

    pub fn manifest(&self) -> Result<&Manifest> {
        self.manifest
            .as_ref()
            .ok_or_else(|| Error::input("dataset has no manifest"))
    }

    pub fn is_synthetic(&self) -> bool {
        self.manifest.as_ref().is_some_and(|m| m.synthetic)
    }

    pub fn counts(&self) -> LoadSummary {
        BTreeMap::from([
            (POOLS, self.pools.len()),
            (POOL_EVENTS, self.pool_events.len()),
            (TRANSFERS, self.transfers.len()),
            (TOKEN_TRANSFERS, self.token_transfers.len()),
            (LABELS, self.labels.len()),
            (RELAYERS, self.relayers.len()),
            (AP_CLAIMS, self.ap_claims.len()),
            (ENS_TRANSFERS, self.ens_transfers.len()),
            (ENS_SUBDOMAINS, self.ens_subdomains.len()),
            (AIRDROP_CLAIMS, self.airdrop_claims.len()),
            (FOLLOW_EDGES, self.follow_edges.len()),
            (
                GROUND_TRUTH,
                self.ground_truth.len() + self.planted_reuse.len() + self.planted_flags.len(),
            ),
            (NOTE_SPENDS, self.note_spends.len()),
        ])
    }

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
            self.pool_events.clone(),
            self.label_book(),
        )
    }

    /// Pools sorted by id.
    pub fn sorted_pools(&self) -> Vec<PoolConfig> {
        let mut pools = self.pools.clone();
        pools.sort_by(|a, b| a.pool_id.cmp(&b.pool_id));
        pools
    }

    /// Write every file in a stable order. Optional files with no records
    /// are skipped.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest()?;
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
        let path = dir.join(MANIFEST);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

        let pools = self
            .sorted_pools()
            .iter()
            .map(|p| {
                let mut o = object(json!({
                    "pool_id": p.pool_id,
                    "coin": p.coin,
                    "denomination": p.denomination.to_string(),
                    "am_weight": p.am_weight,
                }));
                if let Some(c) = p.contract {
                    o.insert("contract".into(), json!(c.to_string()));
                }
                Value::Object(o)
            })
            .collect();
        write_lines(dir, POOLS, pools)?;

        let events = canonical_events(self.pool_events.clone());
        let events = events
            .iter()
            .map(|e| {
                let mut o = object(json!({
                    "pool_id": e.pool_id,
                    "kind": e.kind.to_string(),
                    "actor": e.actor.to_string(),
                    "tx_sender": e.tx_sender.to_string(),
                }));
                if let Some(r) = e.relayer {
                    o.insert("relayer".into(), json!(r.to_string()));
                }
                block_fields(&mut o, "", &e.bn);
                Value::Object(o)
            })
            .collect();
        write_lines(dir, POOL_EVENTS, events)?;

        let optional: Vec<(&str, Vec<Value>)> = vec![
            (TRANSFERS, sorted_transfers(&self.transfers)),
            (TOKEN_TRANSFERS, sorted_transfers(&self.token_transfers)),
            (LABELS, {
                let labels: BTreeSet<&(Address, Label)> = self.labels.iter().collect();
                labels
                    .iter()
                    .map(|(a, l)| json!({"address": a.to_string(), "label": l.to_string()}))
                    .collect()
            }),
            (
                RELAYERS,
                self.relayers
                    .iter()
                    .map(|a| json!({"address": a.to_string()}))
                    .collect(),
            ),
            (AP_CLAIMS, {
                let claims: BTreeSet<&APClaim> = self.ap_claims.iter().collect();
                claims
                    .iter()
                    .map(|c| {
                        let mut o =
                            object(json!({"recipient": c.recipient.to_string(), "ap": c.ap}));
                        block_fields(&mut o, "", &c.bn);
                        Value::Object(o)
                    })
                    .collect()
            }),
            (ENS_TRANSFERS, {
                let items: BTreeSet<&EnsTransfer> = self.ens_transfers.iter().collect();
                items
                    .iter()
                    .map(|t| {
                        let mut o = object(json!({
                            "name": t.name,
                            "from": t.from.to_string(),
                            "to": t.to.to_string(),
                        }));
                        if let Some(x) = t.expiry {
                            o.insert("expiry".into(), json!(x));
                        }
                        block_fields(&mut o, "", &t.bn);
                        Value::Object(o)
                    })
                    .collect()
            }),
            (ENS_SUBDOMAINS, {
                let items: BTreeSet<&EnsSubdomain> = self.ens_subdomains.iter().collect();
                items
                    .iter()
                    .map(|s| {
                        let mut o = object(json!({
                            "name": s.name,
                            "owner": s.owner.to_string(),
                            "assignee": s.assignee.to_string(),
                        }));
                        block_fields(&mut o, "", &s.bn);
                        Value::Object(o)
                    })
                    .collect()
            }),
            (AIRDROP_CLAIMS, {
                let items: BTreeSet<&AirdropClaim> = self.airdrop_claims.iter().collect();
                items
                    .iter()
                    .map(|c| {
                        let mut o = object(json!({
                            "recipient": c.recipient.to_string(),
                            "token": c.token,
                            "amount": c.amount.to_string(),
                        }));
                        block_fields(&mut o, "", &c.bn);
                        Value::Object(o)
                    })
                    .collect()
            }),
            (FOLLOW_EDGES, {
                let items: BTreeSet<&FollowEdge> = self.follow_edges.iter().collect();
                items
                    .iter()
                    .map(|e| json!({"follower": e.follower.to_string(), "followed": e.followed.to_string()}))
                    .collect()
            }),
            (GROUND_TRUTH, {
                let links: BTreeSet<&PlantedLink> = self.ground_truth.iter().collect();
                let mut rows: Vec<Value> = links
                    .iter()
                    .map(|l| {
                        json!({
                            "behavior": l.behavior.name(),
                            "a1": l.pair.a1.to_string(),
                            "a2": l.pair.a2.to_string(),
                        })
                    })
                    .collect();
                rows.extend(
                    self.planted_reuse.iter().map(
                        |a| json!({"behavior": Behavior::H1Reuser.name(), "a1": a.to_string()}),
                    ),
                );
                rows.extend(self.planted_flags.iter().map(|a| {
                    json!({"behavior": Behavior::AttackerFundThenDeposit.name(), "a1": a.to_string()})
                }));
                rows
            }),
            (NOTE_SPENDS, {
                let items: BTreeSet<&NoteSpend> = self.note_spends.iter().collect();
                items
                    .iter()
                    .map(|s| {
                        let mut o = object(json!({"pool_id": s.pool_id}));
                        block_fields(&mut o, "withdrawal_", &s.withdrawal);
                        block_fields(&mut o, "deposit_", &s.deposit);
                        Value::Object(o)
                    })
                    .collect()
            }),
        ];
        for (file, rows) in optional {
            if !rows.is_empty() {
                write_lines(dir, file, rows)?;
            }
        }
        Ok(())
    }
}

fn sorted_transfers(list: &[Transfer]) -> Vec<Value> {
    let mut items: Vec<&Transfer> = list.iter().collect();
    items.sort_by(|a, b| {
        (a.bn, a.from, a.to, a.amt, &a.coin, a.internal)
            .cmp(&(b.bn, b.from, b.to, b.amt, &b.coin, b.internal))
    });
    items.into_iter().map(transfer_json).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_trace, BehaviorProfile, SynthConfig};

    fn write(dir: &Path, file: &str, text: &str) {
        fs::write(dir.join(file), text).unwrap();
    }

    fn minimal(dir: &Path) {
        write(
            dir,
            MANIFEST,
            r#"{"coin":"ETH","first_block":1,"last_block":100}"#,
        );
        write(
            dir,
            POOLS,
            "{\"pool_id\":\"P1\",\"coin\":\"ETH\",\"denomination\":\"1\",\"am_weight\":20}\n",
        );
        write(
            dir,
            POOL_EVENTS,
            "{\"pool_id\":\"P1\",\"kind\":\"deposit\",\"block\":5,\"actor\":\"0x0000000000000000000000000000000000000001\",\"tx_sender\":\"0x0000000000000000000000000000000000000001\"}\n",
        );
    }

    #[test]
    fn loads_minimal_dataset() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        let (ds, summary) = ingest(dir.path()).unwrap();
        assert_eq!(summary[POOL_EVENTS], 1);
        assert_eq!(summary[TRANSFERS], 0);
        assert_eq!(ds.manifest().unwrap().decimals, 18);
    }

    #[test]
    fn missing_files_are_named() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ingest(dir.path()), Err(Error::MissingFile(p)) if p.ends_with(MANIFEST)));
        minimal(dir.path());
        fs::remove_file(dir.path().join(POOL_EVENTS)).unwrap();
        assert!(
            matches!(ingest(dir.path()), Err(Error::MissingFile(p)) if p.ends_with(POOL_EVENTS))
        );
    }

    #[test]
    fn bad_address_reports_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(
            dir.path(),
            TRANSFERS,
            "\n{\"block\":1,\"from\":\"0x01\",\"to\":\"0x0000000000000000000000000000000000000001\",\"amount\":\"5\",\"coin\":\"ETH\"}\n",
        );
        match ingest(dir.path()) {
            Err(Error::Schema {
                file, line, field, ..
            }) => {
                assert_eq!(
                    (file.as_str(), line, field.as_str()),
                    (TRANSFERS, 2, "from")
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_fields_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(
            dir.path(),
            RELAYERS,
            "{\"address\":\"0x0000000000000000000000000000000000000009\",\"x\":1}\n",
        );
        assert!(matches!(ingest(dir.path()), Err(Error::Schema { field, .. }) if field == "x"));
        let line = "{\"address\":\"0x0000000000000000000000000000000000000009\"}\n";
        write(dir.path(), RELAYERS, &format!("{line}{line}"));
        assert!(matches!(
            ingest(dir.path()),
            Err(Error::Duplicate {
                line: 2,
                first: 1,
                ..
            })
        ));
    }

    #[test]
    fn amounts_must_be_decimal_strings() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(
            dir.path(),
            POOLS,
            "{\"pool_id\":\"P1\",\"coin\":\"ETH\",\"denomination\":1,\"am_weight\":20}\n",
        );
        assert!(
            matches!(ingest(dir.path()), Err(Error::Schema { field, .. }) if field == "denomination")
        );
    }

    #[test]
    fn synthetic_round_trip() {
        let profile: BehaviorProfile =
            "disciplined=1/2,h3-related-transfer=1/4,attacker-fund-then-deposit=1/4"
                .parse()
                .unwrap();
        let trace = generate_trace(&SynthConfig::new(profile, 24), 4).unwrap();
        let ds = Dataset::from_trace(&trace);
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path()).unwrap();
        let (back, summary) = ingest(dir.path()).unwrap();
        assert_eq!(summary, ds.counts());
        let mut a = back.clone();
        let mut b = ds.clone();
        for d in [&mut a, &mut b] {
            d.pool_events
                .sort_by(|x, y| (&x.pool_id, x.bn).cmp(&(&y.pool_id, y.bn)));
            d.labels.sort();
            d.ap_claims.sort();
            d.ground_truth.sort();
            d.note_spends.sort();
            d.pools.sort_by(|x, y| x.pool_id.cmp(&y.pool_id));
        }
        assert_eq!(a, b);
        let again = tempfile::tempdir().unwrap();
        back.write(again.path()).unwrap();
        for f in [POOL_EVENTS, TRANSFERS, GROUND_TRUTH, NOTE_SPENDS, MANIFEST] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(again.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }
}

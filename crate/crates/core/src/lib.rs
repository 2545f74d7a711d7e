//! Anonymity-set analytics for fixed-denomination zero-knowledge mixer pools.
//!
//! The crate turns a flat record dump of a mixer (deposits, withdrawals, coin
//! and token transfers, labels, reward claims, side-channel data) into
//! realistic anonymity-set sizes:
//!
//! - [`ledger`]: domain types and the pool-state algebra (balances, merge, simplify)
//! - [`graphindex`]: per-address transfer indexes, distance-n extensions, coin-flow tracing
//! - [`heuristics`]: the five linking heuristics, their combination and clustering
//! - [`metrics`]: anonymity-set sizes, adversary advantage, relayer and cluster statistics
//! - [`anonmining`]: anonymity-point arithmetic and withdrawal recovery from reward claims
//! - [`groundtruth`]: airdrop / ENS / follow-graph side channels and link scoring
//! - [`synthgen`]: seeded synthetic traces with planted ground truth
//! - [`dataset`] and [`cli`]: line-delimited ingestion, analysis commands and reports
//!
//! Runnable walkthroughs live in the crate's `examples/` directory, e.g.
//!
//! ```bash
//! cargo run -p anonset --example pool_state_algebra
//! cargo run -p anonset --example planted_heuristics
//! ```

pub mod anonmining;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod graphindex;
pub mod groundtruth;
pub mod heuristics;
pub mod ledger;
pub mod metrics;
pub mod ratio;
pub mod synthgen;
mod unionfind;

pub use error::{Error, Result};
pub use ledger::{
    Address, Amount, BlockNumber, EventKind, LinkPair, LinkSource, Polarity, PoolConfig, PoolEvent,
    PoolState, Transfer,
};

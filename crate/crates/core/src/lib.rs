//! Protocol library and deterministic simulator for a two-tier lightweight
//! blockchain aimed at smart homes and other IoT deployments.
//!
//! The overlay tier runs on cluster heads (OBMs) that pool dual-signed
//! transactions, produce blocks under a time-based rate limit and verify each
//! other's blocks by trust-weighted sampling. The home tier (LBMs) keeps a
//! local hash-chained ledger with an access-control header.
//!
//! Start with the `examples/` directory; each example exercises one capability.

pub mod adversary;
pub mod codec;
pub mod crypto;
pub mod dtm;
pub mod error;
pub mod experiments;
pub mod ids;
pub mod ledger;
pub mod metrics;
pub mod netsim;
pub mod oracle;
pub mod overlay;
pub mod rng;
pub mod scenario;
pub mod smarthome;
pub mod time;

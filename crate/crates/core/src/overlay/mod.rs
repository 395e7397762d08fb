//! Overlay block managers: routing, pooling, consensus, distributed trust.

pub mod compliance;
pub mod keylist;
pub mod obm;
pub mod pool;
pub mod replica;
pub mod sampling;
pub mod trust;

pub use compliance::{ComplianceConfig, ComplianceMonitor, CpHistory, Verdict};
pub use keylist::{KeyList, KeyListEntry, KeyRequester};
pub use obm::{route_transaction, BlockReject, BlockVerdict, ConsensusConfig, ObmConfig, ObmState, Route, VerifyReport};
pub use pool::TransactionPool;
pub use replica::ChainReplica;
pub use sampling::{sample_indices, sample_size};
pub use trust::{guideline_floor, select_ptv, TrustConfig, TrustTable, MIN_PTV_GUIDELINE};

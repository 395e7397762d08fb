//! Deterministic discrete-event network: topology, delivery, packet accounting.

pub mod engine;
pub mod message;
pub mod requester;
pub mod topology;

pub use engine::{max_e2e_estimate, Engine, NetConfig, Node};
pub use requester::{RequesterNode, Target};
pub use topology::{Link, Topology};

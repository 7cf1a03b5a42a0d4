//! Blockchain-backed tamper-proof storage and authentication for drone
//! networks, plus a seeded discrete-event simulator of full-node ground
//! stations and light-node drones.

pub mod auth;
pub mod codec;
pub mod crypto;
pub mod ledger;
pub mod node;
pub mod simnet;
pub mod state;
#[cfg(feature = "test-support")]
pub mod test_support;
pub mod trust_graph;

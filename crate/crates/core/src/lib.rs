//! Deterministic simulator for communication-efficient federated knowledge
//! graph embedding.
//!
//! Clients hold relation-partitioned shards of a knowledge graph and train
//! TransE, RotatE or ComplEx embeddings locally. Between rounds they exchange
//! embeddings of shared entities through a central server, either in full
//! (FedE-style averaging) or sparsified entity-wise: clients upload only the
//! Top-K embeddings that moved most since their last upload, the server
//! returns per-client Top-K aggregates ranked by upload frequency, and a full
//! synchronization round runs every `s + 1` rounds.
//!
//! Every transmitted parameter is counted in a [`ledger::CommLedger`], so runs
//! can be compared by accuracy and communication cost.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod kg;
pub mod kge;
pub mod ledger;
pub mod matrix;
pub mod protocol;
pub mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;

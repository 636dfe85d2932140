//! Snapshot transactions over a set of replicas.
//!
//! A transaction reads the state of its replica as of `begin` plus its own
//! writes, buffers effects, and on commit applies them at its replica as one
//! event. The resulting [`CommitRecord`] travels to the other replicas and is
//! applied there once everything it depends on has been applied.

mod cluster;
mod lock;
mod network;
mod record;

use std::fmt;

pub use cluster::{Cluster, Replica, Transaction, TxStatus};
pub use lock::{DcOwnership, LockFailure, LockId, LockManager, LockMode, MultiLevelLock};
pub use network::Network;
pub use record::CommitRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub u64);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx{}", self.0)
    }
}

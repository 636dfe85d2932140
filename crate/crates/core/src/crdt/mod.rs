//! Mergeable value types.
//!
//! Every type here is a state-based CRDT: [`Crdt::merge`] is a join that is
//! commutative, associative and idempotent, with the empty state as identity.

mod bounded;
mod clock;
mod counter;
mod lww;
mod mvreg;
mod num;
mod value;

pub use bounded::{Bound, BoundDirection, BoundedCounter};
pub use clock::{Dot, EventStamp, InvalidReplicaId, ReplicaId, VersionVector};
pub use counter::{AdditiveCounter, Contribution};
pub use lww::LwwRegister;
pub use mvreg::{MvEntry, MvRegister};
pub use num::CounterValue;
pub use value::{merge, Flag, MergeKind, MergeValue, Scalar, VisibilityRegister};

pub trait Crdt: Clone {
    fn merge(&mut self, other: &Self);

    fn merged(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.merge(other);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CrdtError {
    #[error("replica {replica} holds {available} free rights, {requested} requested")]
    InsufficientRights {
        replica: ReplicaId,
        requested: i128,
        available: i128,
    },
    #[error("amount must be positive")]
    NonPositiveAmount,
    #[error("value lies outside the counter bound")]
    BoundViolated,
    #[error("cannot merge {left:?} with {right:?}")]
    KindMismatch { left: MergeKind, right: MergeKind },
}

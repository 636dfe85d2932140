//! Replicated relational store whose schema decides, per table, column and
//! foreign key, how concurrent transactions at different replicas resolve.
//!
//! * [`crdt`]: mergeable cell values (registers, counters, escrow counter).
//! * [`schema`]: the AQL dialect: `CREATE [UPDATE_WINS|DELETE_WINS] TABLE`,
//!   column modifiers, constraints and DML statements.
//! * [`engine`]: per-replica row storage, visibility and statement execution.
//! * [`txn`]: snapshot transactions, commit records, causal delivery and
//!   multi-level locks.
//! * [`sim`]: deterministic multi-replica scenarios and fuzzing.

pub mod crdt;
pub mod schema;
pub mod engine;
pub mod txn;
pub mod sim;

pub use crdt::{CounterValue, ReplicaId, Scalar};

/// Additive counter over the engine's integer type.
pub type Counter = crdt::AdditiveCounter<i64>;
/// Escrow counter over the engine's integer type.
pub type EscrowCounter = crdt::BoundedCounter<i64>;
/// Counter bound over the engine's integer type.
pub type CounterBound = crdt::Bound<i64>;

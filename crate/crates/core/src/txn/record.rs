use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::crdt::{Dot, ReplicaId, VersionVector};
use crate::engine::{Row, RowKey};

use super::TxId;

/// Replicated outcome of a committed transaction: the resulting state of every
/// row it wrote. Delivering a record merges those states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitRecord {
    pub tx: TxId,
    pub origin: ReplicaId,
    pub dot: Dot,
    /// Origin clock before the commit; every replica must have applied it first.
    pub deps: VersionVector,
    pub lamport: u64,
    /// Sorted by key.
    pub rows: Vec<Row>,
    pub sequences: BTreeMap<String, i64>,
    /// Net value change of each additive cell, kept for audits. Bounded
    /// cells start from their limit, plain counters from zero.
    pub additive: BTreeMap<(RowKey, String), i64>,
}

impl CommitRecord {
    /// Commit clock: the dependencies plus this commit.
    pub fn clock(&self) -> VersionVector {
        let mut c = self.deps.clone();
        c.add_dot(self.dot);
        c
    }

    /// Stable text form: one header line, then rows sorted by key with cells
    /// sorted by column.
    pub fn canonical(&self) -> String {
        let mut out = format!(
            "commit {} {} deps={} lamport={}\n",
            self.dot, self.tx, self.deps, self.lamport
        );
        for row in &self.rows {
            let _ = write!(out, "  {} pvr={} vis={}", row.key, row.pvr, row.visibility);
            for (col, v) in &row.cells {
                let _ = write!(out, " {col}={v}");
            }
            for (col, r) in &row.fk_refs {
                let _ = write!(out, " ->{col}={r}");
            }
            out.push('\n');
        }
        for (name, v) in &self.sequences {
            let _ = writeln!(out, "  seq {name}={v}");
        }
        out
    }
}

impl fmt::Display for CommitRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

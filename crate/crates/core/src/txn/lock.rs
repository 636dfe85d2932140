//! Two-level locks: a data center first owns the lock (exclusively, or shared
//! with other data centers), then grants it to its own transactions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::crdt::{ReplicaId, VersionVector};
use crate::engine::RowKey;

use super::{Network, TxId};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LockId {
    Row(RowKey),
    Column(RowKey, String),
    Sequence(String),
}

impl fmt::Display for LockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LockId::Row(k) => write!(f, "row {k}"),
            LockId::Column(k, c) => write!(f, "column {k}.{c}"),
            LockId::Sequence(s) => write!(f, "sequence {s}"),
        }
    }
}

/// `Shared < Exclusive`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LockMode {
    Shared,
    Exclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockFailure {
    /// Another active transaction holds a conflicting mode.
    Held,
    /// The coordinator, or a data center that must give up ownership, is unreachable.
    Partitioned,
    /// A transaction that released this lock committed outside the requester's snapshot.
    StaleSnapshot,
}

impl fmt::Display for LockFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LockFailure::Held => "held by a conflicting transaction",
            LockFailure::Partitioned => "owner or coordinator unreachable",
            LockFailure::StaleSnapshot => "snapshot misses the last holder's commit",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum DcOwnership {
    #[default]
    Free,
    ExclusiveBy(ReplicaId),
    SharedBy(BTreeSet<ReplicaId>),
}

impl DcOwnership {
    fn covers(&self, replica: ReplicaId, mode: LockMode) -> bool {
        match (self, mode) {
            (DcOwnership::ExclusiveBy(o), _) => *o == replica,
            (DcOwnership::SharedBy(s), LockMode::Shared) => s.contains(&replica),
            _ => false,
        }
    }

    fn owners(&self) -> BTreeSet<ReplicaId> {
        match self {
            DcOwnership::Free => BTreeSet::new(),
            DcOwnership::ExclusiveBy(o) => [*o].into_iter().collect(),
            DcOwnership::SharedBy(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MultiLevelLock {
    pub owner: DcOwnership,
    pub holders: BTreeMap<TxId, (ReplicaId, LockMode)>,
    /// Join of the commit clocks of every exclusive holder so far.
    pub exclusive_release: VersionVector,
    /// Join of the commit clocks of every holder so far.
    pub release: VersionVector,
}

impl MultiLevelLock {
    /// Checks the ownership/holder invariants.
    pub fn check(&self) -> Result<(), String> {
        let exclusive: Vec<_> = self
            .holders
            .iter()
            .filter(|(_, (_, m))| *m == LockMode::Exclusive)
            .collect();
        if !exclusive.is_empty() && self.holders.len() > 1 {
            return Err(format!("exclusive holder {} coexists with others", exclusive[0].0));
        }
        for (tx, (replica, mode)) in &self.holders {
            if !self.owner.covers(*replica, *mode) {
                return Err(format!("{tx} holds {mode:?} at {replica} without ownership {:?}", self.owner));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LockManager {
    coordinator: ReplicaId,
    locks: BTreeMap<LockId, MultiLevelLock>,
    messages: u64,
}

impl LockManager {
    pub fn new(coordinator: ReplicaId) -> Self {
        Self {
            coordinator,
            locks: BTreeMap::new(),
            messages: 0,
        }
    }

    pub fn coordinator(&self) -> ReplicaId {
        self.coordinator
    }

    /// Messages exchanged with the coordinator so far.
    pub fn messages(&self) -> u64 {
        self.messages
    }

    pub fn lock(&self, id: &LockId) -> Option<&MultiLevelLock> {
        self.locks.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LockId, &MultiLevelLock)> {
        self.locks.iter()
    }

    /// Grants `mode` on `id` to `tx` running at `replica` with `snapshot`.
    pub fn acquire(
        &mut self,
        tx: TxId,
        replica: ReplicaId,
        snapshot: &VersionVector,
        id: &LockId,
        mode: LockMode,
        net: &Network,
    ) -> Result<(), LockFailure> {
        let coordinator = self.coordinator;
        let lock = self.locks.entry(id.clone()).or_default();
        if let Some(&(_, held)) = lock.holders.get(&tx) {
            if held >= mode {
                return Ok(());
            }
        }
        let conflict = lock.holders.iter().any(|(t, (_, m))| {
            *t != tx && (mode == LockMode::Exclusive || *m == LockMode::Exclusive)
        });
        if conflict {
            return Err(LockFailure::Held);
        }
        let needed = match mode {
            LockMode::Exclusive => &lock.release,
            LockMode::Shared => &lock.exclusive_release,
        };
        if !needed.le(snapshot) {
            return Err(LockFailure::StaleSnapshot);
        }
        if !lock.owner.covers(replica, mode) {
            if !net.reachable(replica, coordinator) {
                return Err(LockFailure::Partitioned);
            }
            let others: BTreeSet<ReplicaId> =
                lock.owner.owners().into_iter().filter(|o| *o != replica).collect();
            let new_owner = match (&lock.owner, mode) {
                (_, LockMode::Exclusive) => {
                    if others.iter().any(|o| !net.reachable(coordinator, *o)) {
                        return Err(LockFailure::Partitioned);
                    }
                    self.messages += others.len() as u64;
                    DcOwnership::ExclusiveBy(replica)
                }
                (DcOwnership::ExclusiveBy(o), LockMode::Shared) => {
                    // Downgrade the current exclusive owner, keeping its shared holders valid.
                    if !net.reachable(coordinator, *o) {
                        return Err(LockFailure::Partitioned);
                    }
                    self.messages += 1;
                    DcOwnership::SharedBy([*o, replica].into_iter().collect())
                }
                (DcOwnership::SharedBy(s), LockMode::Shared) => {
                    let mut s = s.clone();
                    s.insert(replica);
                    DcOwnership::SharedBy(s)
                }
                (DcOwnership::Free, LockMode::Shared) => {
                    DcOwnership::SharedBy([replica].into_iter().collect())
                }
            };
            self.messages += 1;
            lock.owner = new_owner;
        }
        lock.holders.insert(tx, (replica, mode));
        Ok(())
    }

    /// Releases every lock of `tx`; a commit clock marks the release as
    /// something later acquirers must have observed.
    pub fn release(&mut self, tx: TxId, ids: &BTreeSet<LockId>, commit: Option<&VersionVector>) {
        for id in ids {
            let Some(lock) = self.locks.get_mut(id) else {
                continue;
            };
            if let Some((_, mode)) = lock.holders.remove(&tx) {
                if let Some(clock) = commit {
                    lock.release.join(clock);
                    if mode == LockMode::Exclusive {
                        lock.exclusive_release.join(clock);
                    }
                }
            }
        }
    }

    /// Lock safety over every lock.
    pub fn check(&self) -> Result<(), String> {
        for (id, lock) in &self.locks {
            lock.check().map_err(|e| format!("{id}: {e}"))?;
        }
        Ok(())
    }
}

//! Additive (PN-style) counter.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::clock::ReplicaId;
use super::num::CounterValue;
use super::Crdt;

/// Per-replica contribution: how many deltas the replica has applied and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Contribution<N> {
    pub ops: u64,
    pub total: N,
}

/// Counter whose value is the sum of every replica's contribution.
///
/// A replica only ever extends its own contribution, so the one with more
/// operations is the newer one and merge keeps it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdditiveCounter<N> {
    contributions: BTreeMap<ReplicaId, Contribution<N>>,
}

impl<N> Default for AdditiveCounter<N> {
    fn default() -> Self {
        Self {
            contributions: BTreeMap::new(),
        }
    }
}

impl<N: CounterValue> AdditiveCounter<N> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies `delta` on behalf of `replica`.
    pub fn add(&mut self, replica: ReplicaId, delta: N) {
        let c = self.contributions.entry(replica).or_default();
        c.ops += 1;
        c.total = c.total + delta;
    }

    pub fn value(&self) -> N {
        self.contributions
            .values()
            .fold(N::zero(), |acc, c| acc + c.total)
    }

    pub fn contribution(&self, replica: ReplicaId) -> N {
        self.contributions
            .get(&replica)
            .map(|c| c.total)
            .unwrap_or_else(N::zero)
    }

    pub fn is_bottom(&self) -> bool {
        self.contributions.is_empty()
    }
}

impl<N: CounterValue> Crdt for AdditiveCounter<N> {
    fn merge(&mut self, other: &Self) {
        for (r, theirs) in &other.contributions {
            match self.contributions.get_mut(r) {
                Some(ours) if *ours >= *theirs => {}
                Some(ours) => *ours = *theirs,
                None => {
                    self.contributions.insert(*r, *theirs);
                }
            }
        }
    }
}

impl<N: CounterValue> fmt::Display for AdditiveCounter<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "add({}", self.value())?;
        for (r, c) in &self.contributions {
            write!(f, ";{r}:{}#{}", c.total, c.ops)?;
        }
        f.write_str(")")
    }
}

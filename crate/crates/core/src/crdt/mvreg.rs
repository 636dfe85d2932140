//! Multi-value register.
//!
//! Every entry carries the dot of the write that produced it and the version
//! vector the writer had observed. Entry `e` is superseded by entry `f` when
//! `e`'s full version (observed context plus its own dot) is covered by the
//! context `f` observed. Keeping only the maximal entries of a union under this
//! strict partial order gives a join that is commutative, associative and
//! idempotent, and leaves an antichain behind.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::clock::{Dot, VersionVector};
use super::Crdt;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MvEntry<V> {
    pub value: V,
    pub dot: Dot,
    pub observed: VersionVector,
}

impl<V> MvEntry<V> {
    /// Observed context plus the entry's own dot.
    pub fn version(&self) -> VersionVector {
        let mut v = self.observed.clone();
        v.add_dot(self.dot);
        v
    }

    /// True if this entry's write happened before `other`'s write.
    pub fn superseded_by(&self, other: &MvEntry<V>) -> bool {
        other.observed.contains(self.dot) && self.observed.le(&other.observed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MvRegister<V: Ord> {
    entries: BTreeSet<MvEntry<V>>,
}

impl<V: Ord> Default for MvRegister<V> {
    fn default() -> Self {
        Self {
            entries: BTreeSet::new(),
        }
    }
}

impl<V: Clone + Ord> MvRegister<V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes `value` as event `dot` after having observed `observed`.
    ///
    /// Entries whose version is covered by `observed` are replaced; concurrent
    /// entries survive. `dot` must be fresh, i.e. not already inside `observed`.
    pub fn assign(&mut self, value: V, observed: &VersionVector, dot: Dot) {
        assert!(
            !observed.contains(dot),
            "dot {dot} is already part of the observed context {observed}"
        );
        let entry = MvEntry {
            value,
            dot,
            observed: observed.clone(),
        };
        let mut single = Self::new();
        single.entries.insert(entry);
        self.merge(&single);
    }

    /// Concurrent values, in value order and without duplicates.
    pub fn values(&self) -> BTreeSet<&V> {
        self.entries.iter().map(|e| &e.value).collect()
    }

    pub fn contains_value(&self, value: &V) -> bool {
        self.entries.iter().any(|e| &e.value == value)
    }

    pub fn entries(&self) -> impl Iterator<Item = &MvEntry<V>> {
        self.entries.iter()
    }

    pub fn is_bottom(&self) -> bool {
        self.entries.is_empty()
    }

    /// No entry is superseded by another.
    pub fn is_antichain(&self) -> bool {
        self.entries.iter().all(|a| {
            self.entries
                .iter()
                .all(|b| std::ptr::eq(a, b) || !a.superseded_by(b))
        })
    }
}

impl<V: Clone + Ord> Crdt for MvRegister<V> {
    fn merge(&mut self, other: &Self) {
        let union: Vec<&MvEntry<V>> = self.entries.iter().chain(other.entries.iter()).collect();
        let kept: BTreeSet<MvEntry<V>> = union
            .iter()
            .filter(|e| !union.iter().any(|f| e.superseded_by(f)))
            .map(|e| (*e).clone())
            .collect();
        self.entries = kept;
    }
}

impl<V: Ord + fmt::Display> fmt::Display for MvRegister<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("mv{")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}@{}{}", e.value, e.dot, e.observed)?;
        }
        f.write_str("}")
    }
}

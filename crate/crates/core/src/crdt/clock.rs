//! Replica identifiers, logical stamps and version vectors.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Identifies one replica (one data center). Rendered as `r<N>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReplicaId(pub u32);

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid replica id `{0}` (expected r<N>)")]
pub struct InvalidReplicaId(pub String);

impl FromStr for ReplicaId {
    type Err = InvalidReplicaId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let digits = s.strip_prefix('@').unwrap_or(s);
        let digits = digits
            .strip_prefix('r')
            .ok_or_else(|| InvalidReplicaId(s.to_string()))?;
        digits
            .parse::<u32>()
            .map(ReplicaId)
            .map_err(|_| InvalidReplicaId(s.to_string()))
    }
}

/// Totally ordered logical timestamp used by last-writer-wins registers.
///
/// Ordered by `(counter, replica)`; a replica never issues the same counter twice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventStamp {
    pub counter: u64,
    pub replica: ReplicaId,
}

impl EventStamp {
    pub fn new(counter: u64, replica: ReplicaId) -> Self {
        Self { counter, replica }
    }
}

impl fmt::Display for EventStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.counter, self.replica)
    }
}

/// A single event: the `seq`-th commit issued by `replica`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dot {
    pub replica: ReplicaId,
    pub seq: u64,
}

impl Dot {
    pub fn new(replica: ReplicaId, seq: u64) -> Self {
        Self { replica, seq }
    }
}

impl fmt::Display for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.replica, self.seq)
    }
}

/// Per-replica event counters. Missing entries are zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VersionVector(BTreeMap<ReplicaId, u64>);

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, replica: ReplicaId) -> u64 {
        self.0.get(&replica).copied().unwrap_or(0)
    }

    pub fn set(&mut self, replica: ReplicaId, value: u64) {
        if value == 0 {
            self.0.remove(&replica);
        } else {
            self.0.insert(replica, value);
        }
    }

    /// Bumps the component of `replica` and returns the resulting dot.
    pub fn increment(&mut self, replica: ReplicaId) -> Dot {
        let seq = self.get(replica) + 1;
        self.set(replica, seq);
        Dot::new(replica, seq)
    }

    pub fn contains(&self, dot: Dot) -> bool {
        self.get(dot.replica) >= dot.seq
    }

    /// Raises the component of the dot's replica to at least the dot's sequence.
    pub fn add_dot(&mut self, dot: Dot) {
        if self.get(dot.replica) < dot.seq {
            self.set(dot.replica, dot.seq);
        }
    }

    pub fn join(&mut self, other: &VersionVector) {
        for (&r, &v) in &other.0 {
            if self.get(r) < v {
                self.0.insert(r, v);
            }
        }
    }

    pub fn joined(&self, other: &VersionVector) -> VersionVector {
        let mut out = self.clone();
        out.join(other);
        out
    }

    /// `self ≤ other` component-wise.
    pub fn le(&self, other: &VersionVector) -> bool {
        self.0.iter().all(|(&r, &v)| other.get(r) >= v)
    }

    pub fn concurrent(&self, other: &VersionVector) -> bool {
        !self.le(other) && !other.le(self)
    }

    /// Causal comparison; `None` for concurrent vectors.
    pub fn causal_cmp(&self, other: &VersionVector) -> Option<Ordering> {
        match (self.le(other), other.le(self)) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (false, false) => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ReplicaId, u64)> + '_ {
        self.0.iter().map(|(&r, &v)| (r, v))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(ReplicaId, u64)> for VersionVector {
    fn from_iter<I: IntoIterator<Item = (ReplicaId, u64)>>(iter: I) -> Self {
        let mut vv = VersionVector::new();
        for (r, v) in iter {
            vv.set(r, v);
        }
        vv
    }
}

impl fmt::Display for VersionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (r, v)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}:{v}")?;
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vv(entries: &[(u32, u64)]) -> VersionVector {
        entries.iter().map(|&(r, v)| (ReplicaId(r), v)).collect()
    }

    #[test]
    fn stamp_order_is_lexicographic() {
        let a = EventStamp::new(4, ReplicaId(1));
        let b = EventStamp::new(4, ReplicaId(2));
        let c = EventStamp::new(5, ReplicaId(1));
        assert!(a < b && b < c);
    }

    #[test]
    fn causal_comparison() {
        let a = vv(&[(1, 1)]);
        let b = vv(&[(2, 1)]);
        assert_eq!(a.causal_cmp(&b), None);
        assert!(a.concurrent(&b));
        let j = a.joined(&b);
        assert_eq!(a.causal_cmp(&j), Some(Ordering::Less));
        assert_eq!(j.causal_cmp(&j), Some(Ordering::Equal));
        assert!(VersionVector::new().le(&a));
    }

    #[test]
    fn zero_entries_are_normalized() {
        let mut a = vv(&[(1, 0), (2, 3)]);
        assert_eq!(a, vv(&[(2, 3)]));
        a.set(ReplicaId(2), 0);
        assert!(a.is_zero());
    }

    #[test]
    fn replica_id_parsing() {
        assert_eq!("r3".parse::<ReplicaId>().unwrap(), ReplicaId(3));
        assert_eq!("@r12".parse::<ReplicaId>().unwrap(), ReplicaId(12));
        assert!("x1".parse::<ReplicaId>().is_err());
    }
}

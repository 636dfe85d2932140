//! Last-writer-wins register.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::clock::EventStamp;
use super::Crdt;

/// Holds the value written with the greatest [`EventStamp`]. Empty is bottom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LwwRegister<V> {
    entry: Option<(EventStamp, V)>,
}

impl<V> Default for LwwRegister<V> {
    fn default() -> Self {
        Self { entry: None }
    }
}

impl<V: Clone + Ord> LwwRegister<V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(value: V, stamp: EventStamp) -> Self {
        Self {
            entry: Some((stamp, value)),
        }
    }

    /// Writes `value` at `stamp`. A write older than the current one is absorbed.
    pub fn assign(&mut self, value: V, stamp: EventStamp) {
        self.merge(&Self::with(value, stamp));
    }

    pub fn value(&self) -> Option<&V> {
        self.entry.as_ref().map(|(_, v)| v)
    }

    pub fn stamp(&self) -> Option<EventStamp> {
        self.entry.as_ref().map(|(s, _)| *s)
    }

    pub fn is_bottom(&self) -> bool {
        self.entry.is_none()
    }
}

impl<V: Clone + Ord> Crdt for LwwRegister<V> {
    fn merge(&mut self, other: &Self) {
        // Equal stamps never carry different values in a real history; comparing
        // the value too keeps the join total regardless.
        if let Some(theirs) = &other.entry {
            match &self.entry {
                Some(ours) if ours >= theirs => {}
                _ => self.entry = Some(theirs.clone()),
            }
        }
    }
}

impl<V: fmt::Display> fmt::Display for LwwRegister<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.entry {
            None => f.write_str("lww()"),
            Some((s, v)) => write!(f, "lww({v}@{s})"),
        }
    }
}

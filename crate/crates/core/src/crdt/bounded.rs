//! Escrow-style bounded counter.
//!
//! Head-room between the current value and the bound is split into rights held
//! by replicas. A replica may move the value towards the bound only by consuming
//! rights it holds, so the bound holds after any merge. Rights can be handed to
//! another replica; moving away from the bound creates fresh rights.
//!
//! All state entries are monotone and each is written by exactly one replica:
//! `credits[issuer][holder]` by the issuer, `debits[r]` and `consumed[r]` by `r`.
//! Merge is the pointwise maximum.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::clock::ReplicaId;
use super::num::CounterValue;
use super::{Crdt, CrdtError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BoundDirection {
    /// value >= limit
    Lower,
    /// value <= limit
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bound<N> {
    pub direction: BoundDirection,
    pub limit: N,
}

impl<N: CounterValue> Bound<N> {
    pub fn lower(limit: N) -> Self {
        Self {
            direction: BoundDirection::Lower,
            limit,
        }
    }

    pub fn upper(limit: N) -> Self {
        Self {
            direction: BoundDirection::Upper,
            limit,
        }
    }

    pub fn admits(&self, value: N) -> bool {
        match self.direction {
            BoundDirection::Lower => value >= self.limit,
            BoundDirection::Upper => value <= self.limit,
        }
    }

    /// Signed distance from the limit, positive inside the admitted region.
    pub fn headroom(&self, value: N) -> N {
        match self.direction {
            BoundDirection::Lower => value - self.limit,
            BoundDirection::Upper => self.limit - value,
        }
    }

    /// Rights a value delta consumes (zero when it moves away from the limit).
    pub fn consumption(&self, delta: N) -> N {
        let room = self.towards(delta);
        if room < N::zero() {
            -room
        } else {
            N::zero()
        }
    }

    /// Converts a value delta into a head-room delta.
    fn towards(&self, delta: N) -> N {
        match self.direction {
            BoundDirection::Lower => delta,
            BoundDirection::Upper => -delta,
        }
    }
}

impl<N: fmt::Display> fmt::Display for Bound<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.direction {
            BoundDirection::Lower => write!(f, ">={}", self.limit),
            BoundDirection::Upper => write!(f, "<={}", self.limit),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundedCounter<N> {
    bound: Bound<N>,
    credits: BTreeMap<ReplicaId, BTreeMap<ReplicaId, N>>,
    debits: BTreeMap<ReplicaId, N>,
    consumed: BTreeMap<ReplicaId, N>,
}

fn bump<N: CounterValue>(map: &mut BTreeMap<ReplicaId, N>, r: ReplicaId, amount: N) {
    let e = map.entry(r).or_insert_with(N::zero);
    *e = *e + amount;
}

fn raise<N: CounterValue>(ours: &mut BTreeMap<ReplicaId, N>, theirs: &BTreeMap<ReplicaId, N>) {
    for (&r, &v) in theirs {
        let e = ours.entry(r).or_insert(v);
        if *e < v {
            *e = v;
        }
    }
}

impl<N: CounterValue> BoundedCounter<N> {
    /// Bottom state: no rights, value equal to the limit.
    pub fn new(bound: Bound<N>) -> Self {
        Self {
            bound,
            credits: BTreeMap::new(),
            debits: BTreeMap::new(),
            consumed: BTreeMap::new(),
        }
    }

    /// Counter created at `creator` with `initial` value; the head-room is split
    /// evenly over `replicas` with the remainder going to the creator.
    pub fn with_initial(
        bound: Bound<N>,
        initial: N,
        replicas: &[ReplicaId],
        creator: ReplicaId,
    ) -> Result<Self, CrdtError> {
        let mut c = Self::new(bound);
        c.grant_headroom(creator, bound.headroom(initial), replicas)?;
        Ok(c)
    }

    /// Adds `headroom` worth of rights issued by `issuer`, split evenly over `replicas`.
    pub fn grant_headroom(
        &mut self,
        issuer: ReplicaId,
        headroom: N,
        replicas: &[ReplicaId],
    ) -> Result<(), CrdtError> {
        if headroom < N::zero() {
            return Err(CrdtError::BoundViolated);
        }
        if headroom.is_zero() {
            return Ok(());
        }
        let n = if replicas.is_empty() { 1 } else { replicas.len() };
        let share = headroom / N::from_count(n);
        let remainder = headroom - share * N::from_count(n);
        let row = self.credits.entry(issuer).or_default();
        for &r in replicas {
            if !share.is_zero() {
                bump(row, r, share);
            }
        }
        if !remainder.is_zero() || replicas.is_empty() {
            let extra = if replicas.is_empty() { headroom } else { remainder };
            bump(row, issuer, extra);
        }
        Ok(())
    }

    pub fn bound(&self) -> Bound<N> {
        self.bound
    }

    /// Rights currently credited to `replica`.
    pub fn rights(&self, replica: ReplicaId) -> N {
        let credited = self
            .credits
            .values()
            .filter_map(|row| row.get(&replica))
            .fold(N::zero(), |a, &b| a + b);
        credited - self.debits.get(&replica).copied().unwrap_or_else(N::zero)
    }

    pub fn consumed(&self, replica: ReplicaId) -> N {
        self.consumed.get(&replica).copied().unwrap_or_else(N::zero)
    }

    pub fn free(&self, replica: ReplicaId) -> N {
        self.rights(replica) - self.consumed(replica)
    }

    /// Sum of rights over all replicas.
    pub fn total_rights(&self) -> N {
        let credited = self
            .credits
            .values()
            .flat_map(|row| row.values())
            .fold(N::zero(), |a, &b| a + b);
        let debited = self.debits.values().fold(N::zero(), |a, &b| a + b);
        credited - debited
    }

    pub fn total_consumed(&self) -> N {
        self.consumed.values().fold(N::zero(), |a, &b| a + b)
    }

    pub fn value(&self) -> N {
        let room = self.total_rights() - self.total_consumed();
        match self.bound.direction {
            BoundDirection::Lower => self.bound.limit + room,
            BoundDirection::Upper => self.bound.limit - room,
        }
    }

    /// Every replica appearing in the state.
    pub fn holders(&self) -> Vec<ReplicaId> {
        let mut out: Vec<ReplicaId> = self
            .credits
            .iter()
            .flat_map(|(i, row)| std::iter::once(*i).chain(row.keys().copied()))
            .chain(self.debits.keys().copied())
            .chain(self.consumed.keys().copied())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Moves the value `amount` towards the bound using `replica`'s rights.
    pub fn consume(&mut self, replica: ReplicaId, amount: N) -> Result<(), CrdtError> {
        if amount <= N::zero() {
            return Err(CrdtError::NonPositiveAmount);
        }
        let free = self.free(replica);
        if free < amount {
            return Err(CrdtError::InsufficientRights {
                replica,
                requested: amount.to_i128().unwrap_or(i128::MAX),
                available: free.to_i128().unwrap_or(i128::MAX),
            });
        }
        bump(&mut self.consumed, replica, amount);
        Ok(())
    }

    /// Hands `amount` of `from`'s unconsumed rights to `to`.
    pub fn transfer(&mut self, from: ReplicaId, to: ReplicaId, amount: N) -> Result<(), CrdtError> {
        if amount <= N::zero() {
            return Err(CrdtError::NonPositiveAmount);
        }
        let free = self.free(from);
        if free < amount {
            return Err(CrdtError::InsufficientRights {
                replica: from,
                requested: amount.to_i128().unwrap_or(i128::MAX),
                available: free.to_i128().unwrap_or(i128::MAX),
            });
        }
        if from != to {
            bump(self.credits.entry(from).or_default(), to, amount);
            bump(&mut self.debits, from, amount);
        }
        Ok(())
    }

    /// Applies a value delta at `replica`: towards the bound consumes rights,
    /// away from it creates rights for `replica`.
    pub fn apply_delta(&mut self, replica: ReplicaId, delta: N) -> Result<(), CrdtError> {
        let room = self.bound.towards(delta);
        if room < N::zero() {
            self.consume(replica, -room)
        } else {
            if !room.is_zero() {
                bump(self.credits.entry(replica).or_default(), replica, room);
            }
            Ok(())
        }
    }

    /// Like [`apply_delta`](Self::apply_delta) without the rights check. Only
    /// for scratch copies that are never merged.
    pub(crate) fn apply_delta_unchecked(&mut self, replica: ReplicaId, delta: N) {
        let room = self.bound.towards(delta);
        if room < N::zero() {
            bump(&mut self.consumed, replica, -room);
        } else if !room.is_zero() {
            bump(self.credits.entry(replica).or_default(), replica, room);
        }
    }

    /// Consumption never exceeds rights at any replica.
    pub fn is_consistent(&self) -> bool {
        self.holders()
            .into_iter()
            .all(|r| self.consumed(r) <= self.rights(r))
            && self.bound.admits(self.value())
    }
}

impl<N: CounterValue> Crdt for BoundedCounter<N> {
    fn merge(&mut self, other: &Self) {
        debug_assert_eq!(self.bound, other.bound, "merging counters with different bounds");
        for (issuer, row) in &other.credits {
            raise(self.credits.entry(*issuer).or_default(), row);
        }
        raise(&mut self.debits, &other.debits);
        raise(&mut self.consumed, &other.consumed);
    }
}

impl<N: CounterValue> fmt::Display for BoundedCounter<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bc({};{}", self.value(), self.bound)?;
        for r in self.holders() {
            write!(f, ";{r}:{}/{}", self.consumed(r), self.rights(r))?;
        }
        f.write_str(")")
    }
}

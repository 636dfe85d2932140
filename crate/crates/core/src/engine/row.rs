//! Stored rows and the write effects applied to them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::crdt::{
    AdditiveCounter, BoundedCounter, Crdt, CrdtError, Dot, EventStamp, Flag, LwwRegister,
    MergeValue, MvRegister, ReplicaId, Scalar, VersionVector, VisibilityRegister,
};
use crate::schema::{Modifier, TableSchema};

/// Identifies a row across the whole database.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub table: String,
    pub pk: Scalar,
}

impl RowKey {
    pub fn new(table: impl Into<String>, pk: Scalar) -> Self {
        Self {
            table: table.into(),
            pk,
        }
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.table, self.pk)
    }
}

/// Parent row and the insertion generation the child observed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParentRef {
    pub key: RowKey,
    pub pvr: u64,
}

impl fmt::Display for ParentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.key, self.pvr)
    }
}

/// Value of a cell as seen by readers.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellValue {
    Single(Scalar),
    /// Concurrent values of a multi-value column.
    Multi(BTreeSet<Scalar>),
    Missing,
}

impl CellValue {
    /// True if any of the cell's values satisfies `pred`.
    pub fn any(&self, mut pred: impl FnMut(&Scalar) -> bool) -> bool {
        match self {
            CellValue::Single(v) => pred(v),
            CellValue::Multi(vs) => vs.iter().any(pred),
            CellValue::Missing => false,
        }
    }

    pub fn all(&self, mut pred: impl FnMut(&Scalar) -> bool) -> bool {
        match self {
            CellValue::Single(v) => pred(v),
            CellValue::Multi(vs) => vs.iter().all(pred),
            CellValue::Missing => true,
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Single(v) => v.fmt(f),
            CellValue::Multi(vs) => {
                f.write_str("{")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    v.fmt(f)?;
                }
                f.write_str("}")
            }
            CellValue::Missing => f.write_str("?"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub key: RowKey,
    pub cells: BTreeMap<String, MergeValue>,
    pub visibility: VisibilityRegister,
    /// Insertion generation; grows by one on every re-insert after a delete.
    pub pvr: u64,
    pub fk_refs: BTreeMap<String, LwwRegister<ParentRef>>,
}

impl Row {
    pub fn new(key: RowKey) -> Self {
        Self {
            key,
            cells: BTreeMap::new(),
            visibility: MvRegister::new(),
            pvr: 0,
            fk_refs: BTreeMap::new(),
        }
    }

    pub fn flags(&self) -> BTreeSet<Flag> {
        self.visibility.values().into_iter().copied().collect()
    }

    pub fn fk_ref(&self, column: &str) -> Option<&ParentRef> {
        self.fk_refs.get(column).and_then(|r| r.value())
    }

    /// Reader's view of a column; the primary key comes from the row key.
    pub fn cell(&self, schema: &TableSchema, column: &str) -> CellValue {
        if column == schema.primary_key {
            return CellValue::Single(self.key.pk.clone());
        }
        match self.cells.get(column) {
            None => CellValue::Missing,
            Some(MergeValue::Lww(r)) => r
                .value()
                .cloned()
                .map_or(CellValue::Missing, CellValue::Single),
            Some(MergeValue::MultiValue(r)) if r.is_bottom() => CellValue::Missing,
            Some(MergeValue::MultiValue(r)) => {
                CellValue::Multi(r.values().into_iter().cloned().collect())
            }
            Some(MergeValue::Additive(c)) => CellValue::Single(Scalar::Int(c.value())),
            Some(MergeValue::Bounded(c)) => CellValue::Single(Scalar::Int(c.value())),
            Some(MergeValue::Visibility(_)) => CellValue::Missing,
        }
    }

    /// Current integer value of an additive column (0 if never written).
    pub fn counter_value(&self, column: &str) -> i64 {
        match self.cells.get(column) {
            Some(MergeValue::Additive(c)) => c.value(),
            Some(MergeValue::Bounded(c)) => c.value(),
            _ => 0,
        }
    }

    pub fn bounded(&self, column: &str) -> Option<&BoundedCounter<i64>> {
        match self.cells.get(column) {
            Some(MergeValue::Bounded(c)) => Some(c),
            _ => None,
        }
    }

    pub fn merge(&mut self, other: &Row) -> Result<(), CrdtError> {
        debug_assert_eq!(self.key, other.key);
        for (col, theirs) in &other.cells {
            match self.cells.get_mut(col) {
                Some(ours) => ours.merge_from(theirs)?,
                None => {
                    self.cells.insert(col.clone(), theirs.clone());
                }
            }
        }
        self.visibility.merge(&other.visibility);
        self.pvr = self.pvr.max(other.pvr);
        for (col, theirs) in &other.fk_refs {
            self.fk_refs.entry(col.clone()).or_default().merge(theirs);
        }
        Ok(())
    }

    /// Applies buffered effects as a single event described by `ctx`.
    pub fn apply(&mut self, ops: &RowOps, schema: &TableSchema, ctx: &ApplyCtx<'_>) -> Result<(), CrdtError> {
        if let Some(flag) = ops.visibility {
            self.visibility.assign(flag, ctx.observed, ctx.dot);
        }
        if let Some(p) = ops.pvr {
            self.pvr = self.pvr.max(p);
        }
        for (col, op) in &ops.cells {
            let def = schema
                .column(col)
                .unwrap_or_else(|| panic!("column {col} missing from {}", schema.name));
            match op {
                CellOp::Assign(v) => {
                    if def.modifier == Modifier::MultiValue {
                        let cell = self
                            .cells
                            .entry(col.clone())
                            .or_insert_with(|| MergeValue::MultiValue(MvRegister::new()));
                        if let MergeValue::MultiValue(r) = cell {
                            r.assign(v.clone(), ctx.observed, ctx.dot);
                        }
                    } else {
                        let cell = self
                            .cells
                            .entry(col.clone())
                            .or_insert_with(|| MergeValue::Lww(LwwRegister::new()));
                        if let MergeValue::Lww(r) = cell {
                            r.assign(v.clone(), ctx.stamp);
                        }
                    }
                }
                CellOp::Add(delta) => {
                    let cell = self
                        .cells
                        .entry(col.clone())
                        .or_insert_with(|| MergeValue::Additive(AdditiveCounter::new()));
                    if let MergeValue::Additive(c) = cell {
                        if *delta != 0 {
                            c.add(ctx.origin, *delta);
                        }
                    }
                }
                CellOp::Escrow {
                    grant,
                    delta,
                    transfers,
                } => {
                    let bound = def
                        .counter_bound()
                        .expect("escrow op on a column without a bound");
                    let cell = self
                        .cells
                        .entry(col.clone())
                        .or_insert_with(|| MergeValue::Bounded(BoundedCounter::new(bound)));
                    if let MergeValue::Bounded(c) = cell {
                        c.grant_headroom(ctx.origin, *grant, ctx.replicas)?;
                        if ctx.provisional {
                            c.apply_delta_unchecked(ctx.origin, *delta);
                            continue;
                        }
                        if *delta != 0 {
                            c.apply_delta(ctx.origin, *delta)?;
                        }
                        for (&to, &amount) in transfers {
                            c.transfer(ctx.origin, to, amount)?;
                        }
                    }
                }
            }
        }
        for (col, parent) in &ops.fk_refs {
            self.fk_refs
                .entry(col.clone())
                .or_default()
                .assign(parent.clone(), ctx.stamp);
        }
        Ok(())
    }
}

/// Buffered write to one cell. Later writes in the same transaction fold into
/// the earlier one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CellOp {
    Assign(Scalar),
    /// Delta on an additive column.
    Add(i64),
    /// Bounded counter: fresh head-room split over replicas, a value delta
    /// applied by the origin, and rights handed to other replicas.
    Escrow {
        grant: i64,
        delta: i64,
        transfers: BTreeMap<ReplicaId, i64>,
    },
}

impl CellOp {
    pub fn escrow(grant: i64, delta: i64) -> Self {
        CellOp::Escrow {
            grant,
            delta,
            transfers: BTreeMap::new(),
        }
    }

    pub(crate) fn fold(&mut self, later: CellOp) {
        match (self, later) {
            (CellOp::Add(a), CellOp::Add(b)) => *a += b,
            (
                CellOp::Escrow {
                    grant,
                    delta,
                    transfers,
                },
                CellOp::Escrow {
                    grant: g,
                    delta: d,
                    transfers: t,
                },
            ) => {
                *grant += g;
                *delta += d;
                for (r, a) in t {
                    *transfers.entry(r).or_insert(0) += a;
                }
            }
            (this, later) => *this = later,
        }
    }
}

/// All buffered effects of one transaction on one row.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RowOps {
    pub cells: BTreeMap<String, CellOp>,
    pub visibility: Option<Flag>,
    pub pvr: Option<u64>,
    pub fk_refs: BTreeMap<String, ParentRef>,
}

impl RowOps {
    pub fn touch() -> Self {
        RowOps {
            visibility: Some(Flag::T),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.visibility.is_none() && self.pvr.is_none() && self.fk_refs.is_empty()
    }

    /// Folds `later` (issued after `self` in the same transaction) into `self`.
    pub fn fold(&mut self, later: RowOps) {
        for (col, op) in later.cells {
            match self.cells.get_mut(&col) {
                Some(existing) => existing.fold(op),
                None => {
                    self.cells.insert(col, op);
                }
            }
        }
        if let Some(f) = later.visibility {
            // A touch never downgrades an insert/update issued by the same transaction.
            if !(f == Flag::T && self.visibility == Some(Flag::I)) {
                self.visibility = Some(f);
            }
        }
        if let Some(p) = later.pvr {
            self.pvr = Some(self.pvr.map_or(p, |q| q.max(p)));
        }
        self.fk_refs.extend(later.fk_refs);
    }
}

/// Event identity under which buffered effects are applied.
#[derive(Clone, Copy, Debug)]
pub struct ApplyCtx<'a> {
    pub origin: ReplicaId,
    pub dot: Dot,
    pub stamp: EventStamp,
    pub observed: &'a VersionVector,
    pub replicas: &'a [ReplicaId],
    /// Scratch application to a transaction's own view: escrow deltas skip
    /// the rights check, which is settled against live state instead.
    pub provisional: bool,
}

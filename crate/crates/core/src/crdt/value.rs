//! Cell scalars, visibility flags and the unified mergeable value.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::bounded::BoundedCounter;
use super::counter::AdditiveCounter;
use super::lww::LwwRegister;
use super::mvreg::MvRegister;
use super::{Crdt, CrdtError};

/// Value stored in a table cell.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Scalar {
    pub fn str(s: impl Into<String>) -> Self {
        Scalar::Str(s.into())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Scalar::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Scalar::Bool(_) => "BOOLEAN",
            Scalar::Int(_) => "INT",
            Scalar::Str(_) => "VARCHAR",
        }
    }
}

/// Renders as an AQL literal: integers bare, strings single-quoted.
impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{}", if *b { "TRUE" } else { "FALSE" }),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

/// Visibility flag of a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Flag {
    /// Inserted or updated.
    I,
    /// Deleted.
    D,
    /// Touched by a child insert.
    T,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::I => "I",
            Flag::D => "D",
            Flag::T => "T",
        })
    }
}

pub type VisibilityRegister = MvRegister<Flag>;

/// Discriminant of [`MergeValue`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MergeKind {
    Lww,
    MultiValue,
    Additive,
    Bounded,
    Visibility,
}

/// Any mergeable cell state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MergeValue {
    Lww(LwwRegister<Scalar>),
    MultiValue(MvRegister<Scalar>),
    Additive(AdditiveCounter<i64>),
    Bounded(BoundedCounter<i64>),
    Visibility(VisibilityRegister),
}

impl MergeValue {
    pub fn kind(&self) -> MergeKind {
        match self {
            MergeValue::Lww(_) => MergeKind::Lww,
            MergeValue::MultiValue(_) => MergeKind::MultiValue,
            MergeValue::Additive(_) => MergeKind::Additive,
            MergeValue::Bounded(_) => MergeKind::Bounded,
            MergeValue::Visibility(_) => MergeKind::Visibility,
        }
    }

    /// Identity element of the same kind (and, for bounded counters, the same bound).
    pub fn bottom_like(&self) -> MergeValue {
        match self {
            MergeValue::Lww(_) => MergeValue::Lww(LwwRegister::new()),
            MergeValue::MultiValue(_) => MergeValue::MultiValue(MvRegister::new()),
            MergeValue::Additive(_) => MergeValue::Additive(AdditiveCounter::new()),
            MergeValue::Bounded(c) => MergeValue::Bounded(BoundedCounter::new(c.bound())),
            MergeValue::Visibility(_) => MergeValue::Visibility(MvRegister::new()),
        }
    }

    pub fn merge_from(&mut self, other: &MergeValue) -> Result<(), CrdtError> {
        match (self, other) {
            (MergeValue::Lww(a), MergeValue::Lww(b)) => a.merge(b),
            (MergeValue::MultiValue(a), MergeValue::MultiValue(b)) => a.merge(b),
            (MergeValue::Additive(a), MergeValue::Additive(b)) => a.merge(b),
            (MergeValue::Bounded(a), MergeValue::Bounded(b)) => {
                if a.bound() != b.bound() {
                    return Err(CrdtError::KindMismatch {
                        left: MergeKind::Bounded,
                        right: MergeKind::Bounded,
                    });
                }
                a.merge(b)
            }
            (MergeValue::Visibility(a), MergeValue::Visibility(b)) => a.merge(b),
            (a, b) => {
                return Err(CrdtError::KindMismatch {
                    left: a.kind(),
                    right: b.kind(),
                })
            }
        }
        Ok(())
    }
}

/// Joins two values of the same kind.
pub fn merge(a: &MergeValue, b: &MergeValue) -> Result<MergeValue, CrdtError> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

impl fmt::Display for MergeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MergeValue::Lww(r) => r.fmt(f),
            MergeValue::MultiValue(r) => r.fmt(f),
            MergeValue::Additive(c) => c.fmt(f),
            MergeValue::Bounded(c) => c.fmt(f),
            MergeValue::Visibility(r) => {
                f.write_str("vis")?;
                r.fmt(f)
            }
        }
    }
}

//! Per-replica relational state and statement execution.
//!
//! Statements run against a transaction's view (its snapshot plus its own
//! buffered effects) through [`ExecContext`], which the transaction layer
//! implements. Execution only buffers effects; nothing reaches a replica's
//! store before commit.

mod exec;
mod row;
mod store;
mod visibility;

use std::fmt;

pub use exec::{check_eval, execute, ExecContext, ResultSet, StatementOutcome};
pub use row::{ApplyCtx, CellOp, CellValue, ParentRef, Row, RowKey, RowOps};
pub use store::{render_cells, render_row, Store};
pub use visibility::{flags_verdict, is_visible, VisibilityCause, VisibilityVerdict};

use crate::crdt::ReplicaId;
use crate::schema::ParseError;
use crate::txn::{LockFailure, LockId};

/// Stable names for error outcomes, used by scenario assertions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorKind {
    DuplicateKey,
    FkParentMissing,
    FkRestrict,
    CheckViolation,
    LockUnavailable,
    RowNotFound,
    TypeMismatch,
    InsufficientRights,
    TransactionNotActive,
    ParseError,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 10] = [
        ErrorKind::DuplicateKey,
        ErrorKind::FkParentMissing,
        ErrorKind::FkRestrict,
        ErrorKind::CheckViolation,
        ErrorKind::LockUnavailable,
        ErrorKind::RowNotFound,
        ErrorKind::TypeMismatch,
        ErrorKind::InsufficientRights,
        ErrorKind::TransactionNotActive,
        ErrorKind::ParseError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::DuplicateKey => "DuplicateKey",
            ErrorKind::FkParentMissing => "FkParentMissing",
            ErrorKind::FkRestrict => "FkRestrict",
            ErrorKind::CheckViolation => "CheckViolation",
            ErrorKind::LockUnavailable => "LockUnavailable",
            ErrorKind::RowNotFound => "RowNotFound",
            ErrorKind::TypeMismatch => "TypeMismatch",
            ErrorKind::InsufficientRights => "InsufficientRights",
            ErrorKind::TransactionNotActive => "TransactionNotActive",
            ErrorKind::ParseError => "ParseError",
        }
    }

    pub fn from_name(name: &str) -> Option<ErrorKind> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("duplicate key {key}")]
    DuplicateKey { key: RowKey },
    #[error("{column} of {child} references missing row {parent}")]
    FkParentMissing {
        child: RowKey,
        column: String,
        parent: RowKey,
    },
    #[error("cannot delete {parent}: still referenced by {child}")]
    FkRestrict { parent: RowKey, child: RowKey },
    #[error("check on {table}.{column} violated: {detail}")]
    CheckViolation {
        table: String,
        column: String,
        detail: String,
        /// Set when the failure came from exhausted escrow rights and may
        /// succeed after a rights transfer.
        retryable: bool,
    },
    #[error("lock {lock} unavailable: {reason}")]
    LockUnavailable { lock: LockId, reason: LockFailure },
    #[error("no visible row of {table} matches")]
    RowNotFound { table: String },
    #[error("type mismatch on {column}: {detail}")]
    TypeMismatch { column: String, detail: String },
    #[error("replica {replica} holds {available} free rights, {requested} requested")]
    InsufficientRights {
        replica: ReplicaId,
        requested: i64,
        available: i64,
    },
    #[error("transaction {0} is not active")]
    TransactionNotActive(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl EngineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            EngineError::DuplicateKey { .. } => ErrorKind::DuplicateKey,
            EngineError::FkParentMissing { .. } => ErrorKind::FkParentMissing,
            EngineError::FkRestrict { .. } => ErrorKind::FkRestrict,
            EngineError::CheckViolation { .. } => ErrorKind::CheckViolation,
            EngineError::LockUnavailable { .. } => ErrorKind::LockUnavailable,
            EngineError::RowNotFound { .. } => ErrorKind::RowNotFound,
            EngineError::TypeMismatch { .. } => ErrorKind::TypeMismatch,
            EngineError::InsufficientRights { .. } => ErrorKind::InsufficientRights,
            EngineError::TransactionNotActive(_) => ErrorKind::TransactionNotActive,
            EngineError::Parse(_) => ErrorKind::ParseError,
        }
    }
}

//! Schema and statement trees.

use std::collections::BTreeMap;
use std::fmt;

use crate::crdt::{Bound, Scalar};

/// Outcome policy for a concurrent update/delete (tables) or child-insert/parent-delete
/// (foreign keys). `NoConcurrency` forbids the race with locks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConcurrencyPolicy {
    UpdateWins,
    DeleteWins,
    NoConcurrency,
}

impl ConcurrencyPolicy {
    pub fn keyword(self) -> Option<&'static str> {
        match self {
            ConcurrencyPolicy::UpdateWins => Some("UPDATE_WINS"),
            ConcurrencyPolicy::DeleteWins => Some("DELETE_WINS"),
            ConcurrencyPolicy::NoConcurrency => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DataType {
    Int,
    Varchar,
    Boolean,
}

impl DataType {
    pub fn admits(self, value: &Scalar) -> bool {
        matches!(
            (self, value),
            (DataType::Int, Scalar::Int(_))
                | (DataType::Varchar, Scalar::Str(_))
                | (DataType::Boolean, Scalar::Bool(_))
        )
    }

    pub fn keyword(self) -> &'static str {
        match self {
            DataType::Int => "INT",
            DataType::Varchar => "VARCHAR",
            DataType::Boolean => "BOOLEAN",
        }
    }
}

/// Column merge policy for concurrent updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modifier {
    Lww,
    MultiValue,
    Additive,
    /// No concurrent updates to this column of the same row.
    None,
}

impl Modifier {
    pub fn keyword(self) -> Option<&'static str> {
        match self {
            Modifier::Lww => Some("LWW"),
            Modifier::MultiValue => Some("MULTI_VALUE"),
            Modifier::Additive => Some("ADDITIVE"),
            Modifier::None => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "=",
            CompareOp::Ne => "<>",
        }
    }

    pub fn holds(self, left: &Scalar, right: &Scalar) -> bool {
        match self {
            CompareOp::Lt => left < right,
            CompareOp::Le => left <= right,
            CompareOp::Gt => left > right,
            CompareOp::Ge => left >= right,
            CompareOp::Eq => left == right,
            CompareOp::Ne => left != right,
        }
    }
}

/// `column <op> constant`
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Comparison {
    pub column: String,
    pub op: CompareOp,
    pub value: Scalar,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.op.symbol(), self.value)
    }
}

/// Conjunction of comparisons. Empty means "true".
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Condition(pub Vec<Comparison>);

impl Condition {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.0
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            c.fmt(f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ForeignKey {
    pub table: String,
    pub column: String,
    pub policy: ConcurrencyPolicy,
    pub cascade: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintDef {
    PrimaryKey,
    Check(Condition),
    ForeignKey(ForeignKey),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ColumnDef {
    pub name: String,
    pub datatype: DataType,
    pub modifier: Modifier,
    pub constraints: Vec<ConstraintDef>,
}

impl ColumnDef {
    pub fn is_primary_key(&self) -> bool {
        self.constraints
            .iter()
            .any(|c| matches!(c, ConstraintDef::PrimaryKey))
    }

    pub fn check(&self) -> Option<&Condition> {
        self.constraints.iter().find_map(|c| match c {
            ConstraintDef::Check(cond) => Some(cond),
            _ => None,
        })
    }

    pub fn foreign_key(&self) -> Option<&ForeignKey> {
        self.constraints.iter().find_map(|c| match c {
            ConstraintDef::ForeignKey(fk) => Some(fk),
            _ => None,
        })
    }

    /// Escrow bound for a check-constrained additive column.
    pub fn counter_bound(&self) -> Option<Bound<i64>> {
        if self.modifier != Modifier::Additive {
            return None;
        }
        let cond = self.check()?;
        let cmp = cond.comparisons().first()?;
        let limit = cmp.value.as_int()?;
        match cmp.op {
            CompareOp::Ge => Some(Bound::lower(limit)),
            CompareOp::Gt => Some(Bound::lower(limit + 1)),
            CompareOp::Le => Some(Bound::upper(limit)),
            CompareOp::Lt => Some(Bound::upper(limit - 1)),
            CompareOp::Eq | CompareOp::Ne => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TableSchema {
    pub name: String,
    pub row_policy: ConcurrencyPolicy,
    pub columns: Vec<ColumnDef>,
    pub primary_key: String,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn pk_column(&self) -> &ColumnDef {
        self.column(&self.primary_key)
            .expect("validated schema has its primary key column")
    }

    pub fn non_key_columns(&self) -> impl Iterator<Item = &ColumnDef> {
        self.columns.iter().filter(move |c| c.name != self.primary_key)
    }

    pub fn foreign_keys(&self) -> impl Iterator<Item = (&ColumnDef, &ForeignKey)> {
        self.columns
            .iter()
            .filter_map(|c| c.foreign_key().map(|fk| (c, fk)))
    }

    /// Concurrent inserts of the same key are allowed iff every non-key column
    /// has a merge policy and the table itself allows concurrency.
    pub fn concurrent_insert_allowed(&self) -> bool {
        self.row_policy != ConcurrencyPolicy::NoConcurrency
            && self.non_key_columns().all(|c| c.modifier != Modifier::None)
    }
}

/// All tables of a database, in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Catalog {
    tables: Vec<TableSchema>,
    index: BTreeMap<String, usize>,
}

/// A foreign-key edge seen from the parent side.
#[derive(Clone, Copy, Debug)]
pub struct Reference<'a> {
    pub child: &'a TableSchema,
    pub column: &'a ColumnDef,
    pub fk: &'a ForeignKey,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.index.get(name).map(|&i| &self.tables[i])
    }

    pub fn tables(&self) -> &[TableSchema] {
        &self.tables
    }

    /// Foreign keys that point at `parent`.
    pub fn references_to<'a>(&'a self, parent: &'a str) -> impl Iterator<Item = Reference<'a>> + 'a {
        self.tables.iter().flat_map(move |child| {
            child
                .foreign_keys()
                .filter(move |(_, fk)| fk.table == parent)
                .map(move |(column, fk)| Reference { child, column, fk })
        })
    }

    pub(crate) fn push_unchecked(&mut self, table: TableSchema) {
        self.index.insert(table.name.clone(), self.tables.len());
        self.tables.push(table);
    }
}

/// Right-hand side of an insert value or update assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Literal(Scalar),
    /// `column + k` / `column - k` on an additive column.
    Delta(i64),
    /// Site-prefixed unique identifier.
    UniqueId,
    /// Next value of a gap-free sequence.
    SequentialId(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Statement {
    Insert {
        table: String,
        values: Vec<(String, Expr)>,
    },
    Update {
        table: String,
        assignments: Vec<(String, Expr)>,
        filter: Condition,
    },
    Delete {
        table: String,
        filter: Condition,
    },
    Select {
        projection: Option<Vec<String>>,
        table: String,
        filter: Condition,
    },
}

impl Statement {
    pub fn table(&self) -> &str {
        match self {
            Statement::Insert { table, .. }
            | Statement::Update { table, .. }
            | Statement::Delete { table, .. }
            | Statement::Select { table, .. } => table,
        }
    }

    pub fn is_write(&self) -> bool {
        !matches!(self, Statement::Select { .. })
    }
}

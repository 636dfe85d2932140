use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::crdt::{Flag, ReplicaId, Scalar};
use crate::schema::{
    Catalog, ColumnDef, ConcurrencyPolicy, Condition, Expr, Modifier, Statement, TableSchema,
};
use crate::txn::{LockId, LockMode};

use super::{is_visible, CellOp, CellValue, EngineError, ParentRef, RowKey, RowOps, Store};

/// What statement execution needs from the enclosing transaction.
pub trait ExecContext {
    fn catalog(&self) -> Arc<Catalog>;
    fn origin(&self) -> ReplicaId;
    /// Snapshot plus the transaction's own buffered effects.
    fn view(&self) -> &Store;
    /// Acquires every lock in id order, or none.
    fn acquire(&mut self, locks: &BTreeMap<LockId, LockMode>) -> Result<(), EngineError>;
    /// Buffers effects and makes them visible to later reads of the transaction.
    fn buffer(&mut self, key: &RowKey, ops: RowOps) -> Result<(), EngineError>;
    fn unique_id(&mut self) -> String;
    fn next_sequential_id(&mut self, sequence: &str) -> Result<i64, EngineError>;
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<CellValue>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StatementOutcome {
    Written { rows: usize },
    Selected(ResultSet),
}

pub fn execute<C: ExecContext + ?Sized>(
    ctx: &mut C,
    stmt: &Statement,
) -> Result<StatementOutcome, EngineError> {
    let catalog = ctx.catalog();
    let schema = catalog
        .table(stmt.table())
        .ok_or_else(|| EngineError::TypeMismatch {
            column: stmt.table().to_string(),
            detail: "unknown table".into(),
        })?;
    match stmt {
        Statement::Insert { values, .. } => {
            insert(ctx, &catalog, schema, values).map(|()| StatementOutcome::Written { rows: 1 })
        }
        Statement::Update {
            assignments,
            filter,
            ..
        } => update(ctx, &catalog, schema, assignments, filter)
            .map(|rows| StatementOutcome::Written { rows }),
        Statement::Delete { filter, .. } => {
            delete(ctx, &catalog, schema, filter).map(|rows| StatementOutcome::Written { rows })
        }
        Statement::Select {
            projection, filter, ..
        } => Ok(StatementOutcome::Selected(select(
            ctx.view(),
            &catalog,
            schema,
            projection.as_deref(),
            filter,
        )?)),
    }
}

/// Write-time gate for a non-additive check constraint.
pub fn check_eval(cond: &Condition, value: &Scalar) -> Result<bool, EngineError> {
    let mut ok = true;
    for cmp in cond.comparisons() {
        if std::mem::discriminant(&cmp.value) != std::mem::discriminant(value) {
            return Err(EngineError::TypeMismatch {
                column: cmp.column.clone(),
                detail: format!("cannot compare {} with {}", value.type_name(), cmp.value.type_name()),
            });
        }
        ok &= cmp.op.holds(value, &cmp.value);
    }
    Ok(ok)
}

fn type_error(def: &ColumnDef, detail: impl Into<String>) -> EngineError {
    EngineError::TypeMismatch {
        column: def.name.clone(),
        detail: detail.into(),
    }
}

fn column<'a>(schema: &'a TableSchema, name: &str) -> Result<&'a ColumnDef, EngineError> {
    schema.column(name).ok_or_else(|| EngineError::TypeMismatch {
        column: name.to_string(),
        detail: format!("no column {name} in {}", schema.name),
    })
}

fn eval<C: ExecContext + ?Sized>(ctx: &mut C, def: &ColumnDef, expr: &Expr) -> Result<Scalar, EngineError> {
    let v = match expr {
        Expr::Literal(v) => v.clone(),
        Expr::UniqueId => Scalar::Str(ctx.unique_id()),
        Expr::SequentialId(name) => Scalar::Int(ctx.next_sequential_id(name)?),
        Expr::Delta(_) => return Err(type_error(def, "delta outside an additive update")),
    };
    if !def.datatype.admits(&v) {
        return Err(type_error(
            def,
            format!("{} value for {} column", v.type_name(), def.datatype.keyword()),
        ));
    }
    Ok(v)
}

/// Non-additive checks are evaluated on the written value; additive bounds
/// are enforced through escrow rights instead.
fn check_value(schema: &TableSchema, def: &ColumnDef, value: &Scalar) -> Result<(), EngineError> {
    let violated = |detail: String| EngineError::CheckViolation {
        table: schema.name.clone(),
        column: def.name.clone(),
        detail,
        retryable: false,
    };
    if def.modifier == Modifier::Additive {
        if let (Some(bound), Some(v)) = (def.counter_bound(), value.as_int()) {
            if !bound.admits(v) {
                return Err(violated(format!("{v} outside {bound}")));
            }
        }
        return Ok(());
    }
    if let Some(cond) = def.check() {
        if !check_eval(cond, value)? {
            return Err(violated(format!("{value} fails {cond}")));
        }
    }
    Ok(())
}

fn add_lock(locks: &mut BTreeMap<LockId, LockMode>, id: LockId, mode: LockMode) {
    let e = locks.entry(id).or_insert(mode);
    *e = (*e).max(mode);
}

/// Visible parent row for `value`, as recorded by a child.
fn visible_parent(
    view: &Store,
    catalog: &Catalog,
    child: &RowKey,
    def: &ColumnDef,
    value: &Scalar,
) -> Result<ParentRef, EngineError> {
    let fk = def.foreign_key().expect("foreign key column");
    let key = RowKey::new(fk.table.clone(), value.clone());
    match view.row(&key) {
        Some(p) if is_visible(p, catalog, view).visible => Ok(ParentRef { key, pvr: p.pvr }),
        _ => Err(EngineError::FkParentMissing {
            child: child.clone(),
            column: def.name.clone(),
            parent: key,
        }),
    }
}

fn insert<C: ExecContext + ?Sized>(
    ctx: &mut C,
    catalog: &Catalog,
    schema: &TableSchema,
    values: &[(String, Expr)],
) -> Result<(), EngineError> {
    let mut vals = BTreeMap::new();
    for (name, expr) in values {
        let def = column(schema, name)?;
        let v = eval(ctx, def, expr)?;
        vals.insert(name.clone(), v);
    }
    for def in &schema.columns {
        if !vals.contains_key(&def.name) {
            return Err(type_error(def, "no value supplied"));
        }
    }
    let key = RowKey::new(schema.name.clone(), vals[&schema.primary_key].clone());

    let mut locks = BTreeMap::new();
    if !schema.concurrent_insert_allowed() {
        add_lock(&mut locks, LockId::Row(key.clone()), LockMode::Exclusive);
        for def in schema.non_key_columns() {
            if def.modifier == Modifier::None {
                add_lock(&mut locks, LockId::Column(key.clone(), def.name.clone()), LockMode::Exclusive);
            }
        }
    }
    for (def, fk) in schema.foreign_keys() {
        if fk.policy == ConcurrencyPolicy::NoConcurrency {
            let parent = RowKey::new(fk.table.clone(), vals[&def.name].clone());
            add_lock(&mut locks, LockId::Row(parent), LockMode::Shared);
        }
    }
    ctx.acquire(&locks)?;

    for def in &schema.columns {
        check_value(schema, def, &vals[&def.name])?;
    }

    let view = ctx.view();
    let existing = view.row(&key);
    let visible = existing.is_some_and(|r| is_visible(r, catalog, view).visible);
    if visible && !schema.concurrent_insert_allowed() {
        return Err(EngineError::DuplicateKey { key });
    }
    let mut ops = RowOps {
        visibility: Some(Flag::I),
        pvr: match existing {
            None => Some(1),
            Some(r) if !visible => Some(r.pvr + 1),
            Some(_) => None,
        },
        ..Default::default()
    };
    let mut touch = Vec::new();
    for (def, fk) in schema.foreign_keys() {
        let parent = visible_parent(view, catalog, &key, def, &vals[&def.name])?;
        if fk.policy == ConcurrencyPolicy::UpdateWins {
            touch.push(parent.key.clone());
        }
        ops.fk_refs.insert(def.name.clone(), parent);
    }
    for def in schema.non_key_columns() {
        let v = &vals[&def.name];
        let op = match (def.modifier, def.counter_bound()) {
            (Modifier::Additive, Some(bound)) => {
                let n = v.as_int().unwrap_or(0);
                match existing.and_then(|r| r.bounded(&def.name)) {
                    Some(c) => CellOp::escrow(0, n - c.value()),
                    None => CellOp::escrow(bound.headroom(n), 0),
                }
            }
            (Modifier::Additive, None) => {
                let current = existing.map_or(0, |r| r.counter_value(&def.name));
                CellOp::Add(v.as_int().unwrap_or(0) - current)
            }
            _ => CellOp::Assign(v.clone()),
        };
        ops.cells.insert(def.name.clone(), op);
    }
    ctx.buffer(&key, ops)?;
    touch_parents(ctx, catalog, touch)
}

/// Marks parents `T`, climbing further update-wins references.
fn touch_parents<C: ExecContext + ?Sized>(
    ctx: &mut C,
    catalog: &Catalog,
    start: Vec<RowKey>,
) -> Result<(), EngineError> {
    let mut seen = BTreeSet::new();
    let mut stack = start;
    while let Some(key) = stack.pop() {
        if !seen.insert(key.clone()) {
            continue;
        }
        if let (Some(row), Some(schema)) = (ctx.view().row(&key), catalog.table(&key.table)) {
            for (def, fk) in schema.foreign_keys() {
                if fk.policy == ConcurrencyPolicy::UpdateWins {
                    if let Some(p) = row.fk_ref(&def.name) {
                        stack.push(p.key.clone());
                    }
                }
            }
        }
        ctx.buffer(&key, RowOps::touch())?;
    }
    Ok(())
}

/// Keys of visible rows satisfying `filter`, in primary-key order.
fn matching(view: &Store, catalog: &Catalog, schema: &TableSchema, filter: &Condition) -> Vec<RowKey> {
    let pk_eq = filter.comparisons().iter().find(|c| {
        c.column == schema.primary_key && c.op == crate::schema::CompareOp::Eq
    });
    let matches = |row: &super::Row| {
        filter
            .comparisons()
            .iter()
            .all(|c| row.cell(schema, &c.column).any(|v| c.op.holds(v, &c.value)))
    };
    match pk_eq {
        Some(c) => {
            let key = RowKey::new(schema.name.clone(), c.value.clone());
            view.row(&key)
                .filter(|r| is_visible(r, catalog, view).visible && matches(r))
                .map(|r| vec![r.key.clone()])
                .unwrap_or_default()
        }
        None => view
            .visible_rows(catalog, &schema.name)
            .filter(|r| matches(r))
            .map(|r| r.key.clone())
            .collect(),
    }
}

fn update<C: ExecContext + ?Sized>(
    ctx: &mut C,
    catalog: &Catalog,
    schema: &TableSchema,
    assignments: &[(String, Expr)],
    filter: &Condition,
) -> Result<usize, EngineError> {
    let keys = matching(ctx.view(), catalog, schema, filter);
    if keys.is_empty() {
        return Err(EngineError::RowNotFound {
            table: schema.name.clone(),
        });
    }
    let mut locks = BTreeMap::new();
    for key in &keys {
        if schema.row_policy == ConcurrencyPolicy::NoConcurrency {
            add_lock(&mut locks, LockId::Row(key.clone()), LockMode::Shared);
        }
        for (name, _) in assignments {
            let def = column(schema, name)?;
            if def.modifier == Modifier::None {
                add_lock(&mut locks, LockId::Column(key.clone(), name.clone()), LockMode::Exclusive);
            }
        }
        let row = ctx.view().row(key).expect("matched row");
        for (def, fk) in schema.foreign_keys() {
            if fk.policy != ConcurrencyPolicy::NoConcurrency {
                continue;
            }
            if let Some(p) = row.fk_ref(&def.name) {
                add_lock(&mut locks, LockId::Row(p.key.clone()), LockMode::Shared);
            }
            if let Some((_, Expr::Literal(v))) = assignments.iter().find(|(n, _)| *n == def.name) {
                let parent = RowKey::new(fk.table.clone(), v.clone());
                add_lock(&mut locks, LockId::Row(parent), LockMode::Shared);
            }
        }
    }
    ctx.acquire(&locks)?;

    for key in &keys {
        let mut ops = RowOps {
            visibility: Some(Flag::I),
            ..Default::default()
        };
        for (name, expr) in assignments {
            let def = column(schema, name)?;
            if let Expr::Delta(k) = expr {
                if def.modifier != Modifier::Additive {
                    return Err(type_error(def, "delta on a non-additive column"));
                }
                let op = if def.counter_bound().is_some() {
                    CellOp::escrow(0, *k)
                } else {
                    CellOp::Add(*k)
                };
                ops.cells.insert(name.clone(), op);
                continue;
            }
            let v = eval(ctx, def, expr)?;
            check_value(schema, def, &v)?;
            if def.foreign_key().is_some() {
                let parent = visible_parent(ctx.view(), catalog, key, def, &v)?;
                ops.fk_refs.insert(name.clone(), parent);
            }
            ops.cells.insert(name.clone(), CellOp::Assign(v));
        }
        let row = ctx.view().row(key).expect("matched row");
        let touch = schema
            .foreign_keys()
            .filter(|(_, fk)| fk.policy == ConcurrencyPolicy::UpdateWins)
            .filter_map(|(def, _)| {
                ops.fk_refs
                    .get(&def.name)
                    .or_else(|| row.fk_ref(&def.name))
                    .map(|p| p.key.clone())
            })
            .collect();
        ctx.buffer(key, ops)?;
        touch_parents(ctx, catalog, touch)?;
    }
    Ok(keys.len())
}

fn delete<C: ExecContext + ?Sized>(
    ctx: &mut C,
    catalog: &Catalog,
    schema: &TableSchema,
    filter: &Condition,
) -> Result<usize, EngineError> {
    let view = ctx.view();
    let roots = matching(view, catalog, schema, filter);
    if roots.is_empty() {
        return Err(EngineError::RowNotFound {
            table: schema.name.clone(),
        });
    }
    let mut locks = BTreeMap::new();
    let mut order = Vec::new();
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<RowKey> = roots.iter().cloned().collect();
    while let Some(key) = queue.pop_front() {
        if !seen.insert(key.clone()) {
            continue;
        }
        let table = catalog.table(&key.table).expect("row of a known table");
        if table.row_policy == ConcurrencyPolicy::NoConcurrency {
            add_lock(&mut locks, LockId::Row(key.clone()), LockMode::Exclusive);
        }
        for reference in catalog.references_to(&key.table) {
            if reference.fk.policy == ConcurrencyPolicy::NoConcurrency {
                add_lock(&mut locks, LockId::Row(key.clone()), LockMode::Exclusive);
            }
            for child in view.visible_rows(catalog, &reference.child.name) {
                if child.key == key || child.fk_ref(&reference.column.name).map(|p| &p.key) != Some(&key) {
                    continue;
                }
                if !reference.fk.cascade {
                    return Err(EngineError::FkRestrict {
                        parent: key.clone(),
                        child: child.key.clone(),
                    });
                }
                queue.push_back(child.key.clone());
            }
        }
        order.push(key);
    }
    ctx.acquire(&locks)?;
    for key in &order {
        ctx.buffer(
            key,
            RowOps {
                visibility: Some(Flag::D),
                ..Default::default()
            },
        )?;
    }
    Ok(roots.len())
}

fn select(
    view: &Store,
    catalog: &Catalog,
    schema: &TableSchema,
    projection: Option<&[String]>,
    filter: &Condition,
) -> Result<ResultSet, EngineError> {
    let columns: Vec<String> = match projection {
        Some(cols) => cols.to_vec(),
        None => schema.columns.iter().map(|c| c.name.clone()).collect(),
    };
    for c in &columns {
        column(schema, c)?;
    }
    let rows = matching(view, catalog, schema, filter)
        .iter()
        .map(|key| {
            let row = view.row(key).expect("matched row");
            columns.iter().map(|c| row.cell(schema, c)).collect()
        })
        .collect();
    Ok(ResultSet { columns, rows })
}

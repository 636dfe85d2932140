//! Safety checks run by the simulator, written independently of the engine's
//! own visibility code.

use std::collections::{BTreeMap, BTreeSet};

use crate::crdt::{Flag, MergeValue, ReplicaId};
use crate::engine::{is_visible, CellValue, RowKey, Store};
use crate::schema::{Catalog, ConcurrencyPolicy, Modifier};
use crate::txn::Cluster;

/// Visibility of every stored row, computed as a fixed point: start from the
/// own-flag rule, then repeatedly hide rows whose parents are hidden (or, for
/// delete-wins references, re-inserted since).
pub fn oracle_visibility(store: &Store, catalog: &Catalog) -> BTreeMap<RowKey, bool> {
    let mut vis: BTreeMap<RowKey, bool> = store
        .rows()
        .map(|row| {
            let flags = row.flags();
            let policy = catalog
                .table(&row.key.table)
                .map_or(ConcurrencyPolicy::UpdateWins, |t| t.row_policy);
            let own = if flags.is_empty() {
                false
            } else if flags.contains(&Flag::T) {
                true
            } else if policy == ConcurrencyPolicy::DeleteWins {
                !flags.contains(&Flag::D)
            } else {
                flags != [Flag::D].into_iter().collect()
            };
            (row.key.clone(), own)
        })
        .collect();
    loop {
        let mut changed = false;
        for row in store.rows() {
            if !vis[&row.key] {
                continue;
            }
            let Some(schema) = catalog.table(&row.key.table) else {
                continue;
            };
            let broken = schema.foreign_keys().any(|(def, fk)| {
                let Some(p) = row.fk_ref(&def.name) else {
                    return false;
                };
                let parent_visible = vis.get(&p.key).copied().unwrap_or(false);
                let stale = fk.policy == ConcurrencyPolicy::DeleteWins
                    && store.row(&p.key).map_or(0, |r| r.pvr) != p.pvr;
                !parent_visible || stale
            });
            if broken {
                vis.insert(row.key.clone(), false);
                changed = true;
            }
        }
        if !changed {
            return vis;
        }
    }
}

/// Violations at one replica's state: visibility disagreement with the
/// oracle, dangling references and violated checks.
pub fn check_store(replica: ReplicaId, store: &Store, catalog: &Catalog) -> Vec<String> {
    let mut out = Vec::new();
    let oracle = oracle_visibility(store, catalog);
    for row in store.rows() {
        let engine = is_visible(row, catalog, store).visible;
        if engine != oracle[&row.key] {
            out.push(format!(
                "{replica}: {} engine visibility {engine}, oracle {}",
                row.key, oracle[&row.key]
            ));
        }
        if !oracle[&row.key] {
            continue;
        }
        let Some(schema) = catalog.table(&row.key.table) else {
            continue;
        };
        for (def, fk) in schema.foreign_keys() {
            let Some(p) = row.fk_ref(&def.name) else {
                out.push(format!("{replica}: visible {} has no {} reference", row.key, def.name));
                continue;
            };
            let parent = store.row(&p.key);
            if !parent.is_some_and(|_| oracle[&p.key]) {
                out.push(format!("{replica}: visible {} references hidden {}", row.key, p.key));
            } else if fk.policy == ConcurrencyPolicy::DeleteWins && parent.map(|r| r.pvr) != Some(p.pvr) {
                out.push(format!(
                    "{replica}: visible {} references {} generation {} but it is at {}",
                    row.key,
                    p.key,
                    p.pvr,
                    parent.map_or(0, |r| r.pvr)
                ));
            }
        }
        for def in schema.non_key_columns() {
            let cell = row.cell(schema, &def.name);
            if def.modifier == Modifier::Additive {
                if let (Some(bound), Some(MergeValue::Bounded(c))) =
                    (def.counter_bound(), row.cells.get(&def.name))
                {
                    if !bound.admits(c.value()) || !c.is_consistent() {
                        out.push(format!("{replica}: {}.{} escrow state {c} breaks {bound}", row.key, def.name));
                    }
                }
                continue;
            }
            if let Some(cond) = def.check() {
                let ok = cell.all(|v| {
                    cond.comparisons()
                        .iter()
                        .all(|c| std::mem::discriminant(v) == std::mem::discriminant(&c.value) && c.op.holds(v, &c.value))
                });
                if !ok {
                    out.push(format!("{replica}: {}.{} = {cell} fails {cond}", row.key, def.name));
                }
            }
            if cell == CellValue::Missing {
                out.push(format!("{replica}: visible {} lacks {}", row.key, def.name));
            }
        }
    }
    out
}

/// Lock safety plus [`check_store`] at every replica.
pub fn check_cluster(cluster: &Cluster) -> Vec<String> {
    let mut out = Vec::new();
    if let Err(e) = cluster.locks().check() {
        out.push(format!("lock safety: {e}"));
    }
    for r in cluster.replicas() {
        out.extend(check_store(r.id, r.store(), cluster.catalog()));
    }
    out
}

/// Every application of a record happened after all records it depends on
/// were applied at that replica.
pub fn check_causal_delivery(cluster: &Cluster) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen: BTreeMap<ReplicaId, BTreeSet<(ReplicaId, u64)>> = BTreeMap::new();
    for &(replica, idx) in cluster.applied_order() {
        let rec = &cluster.log()[idx];
        let done = seen.entry(replica).or_default();
        for (r, n) in rec.deps.iter() {
            if (1..=n).any(|s| !done.contains(&(r, s))) {
                out.push(format!("{replica} applied {} before its dependency on {r}", rec.dot));
                break;
            }
        }
        if !done.insert((rec.dot.replica, rec.dot.seq)) {
            out.push(format!("{replica} applied {} twice", rec.dot));
        }
    }
    out
}

/// Replicas whose canonical dump or full state differs from the first one.
pub fn check_convergence(cluster: &Cluster) -> Vec<String> {
    let mut out = Vec::new();
    let mut replicas = cluster.replicas();
    let Some(first) = replicas.next() else {
        return out;
    };
    let reference = first.store().dump(cluster.catalog());
    for r in replicas {
        if r.store().dump(cluster.catalog()) != reference {
            out.push(format!("{} and {} dump differently", first.id, r.id));
        } else if r.store() != first.store() {
            out.push(format!("{} and {} hold different row metadata", first.id, r.id));
        }
    }
    out
}

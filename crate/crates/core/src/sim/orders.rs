use std::collections::BTreeSet;

use crate::crdt::ReplicaId;
use crate::engine::Store;
use crate::txn::Cluster;

/// Most records whose delivery orders are enumerated.
pub const MAX_ENUMERATED: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderReport {
    pub observer: ReplicaId,
    /// Log indices of the records that were permuted.
    pub records: Vec<usize>,
    pub permutations: usize,
    /// Permutations that respect causality.
    pub causal: usize,
    /// Distinct final states among the causal permutations.
    pub distinct_states: usize,
}

impl OrderReport {
    pub fn pass(&self) -> bool {
        self.distinct_states <= 1
    }
}

/// Applies every causal order of the (first [`MAX_ENUMERATED`]) records
/// still pending at `observer` to a copy of its state and compares results.
/// The cluster itself is not modified.
pub fn enumerate_orders(cluster: &Cluster, observer: ReplicaId) -> OrderReport {
    let records: Vec<usize> = cluster
        .pending_records(observer)
        .into_iter()
        .take(MAX_ENUMERATED)
        .collect();
    let replica = cluster.replica(observer);
    let mut states: BTreeSet<(String, String)> = BTreeSet::new();
    let mut permutations = 0;
    let mut causal = 0;
    let mut order = records.clone();
    permute(&mut order, 0, &mut |perm| {
        permutations += 1;
        let mut store: Store = replica.store().clone();
        let mut clock = replica.clock().clone();
        for &i in perm {
            let rec = &cluster.log()[i];
            if !rec.deps.le(&clock) {
                return;
            }
            for row in &rec.rows {
                store
                    .merge_row(row)
                    .expect("rows of one table always hold cells of the same kinds");
            }
            for (name, &v) in &rec.sequences {
                store.merge_sequence(name, v);
            }
            clock.add_dot(rec.dot);
        }
        causal += 1;
        states.insert((store.dump(cluster.catalog()), format!("{store:?}")));
    });
    OrderReport {
        observer,
        records,
        permutations,
        causal,
        distinct_states: states.len(),
    }
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_count() {
        let mut v = vec![1, 2, 3];
        let mut seen = BTreeSet::new();
        permute(&mut v, 0, &mut |p| {
            seen.insert(p.to_vec());
        });
        assert_eq!(seen.len(), 6);
    }
}

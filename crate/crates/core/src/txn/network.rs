use std::collections::BTreeMap;

use crate::crdt::ReplicaId;

/// Reachability between replicas. Replicas in the same group can talk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    group: BTreeMap<ReplicaId, usize>,
}

impl Network {
    pub fn new(replicas: &[ReplicaId]) -> Self {
        Self {
            group: replicas.iter().map(|&r| (r, 0)).collect(),
        }
    }

    /// Splits replicas into the given groups; replicas not listed end up alone.
    pub fn partition(&mut self, groups: &[Vec<ReplicaId>]) {
        let mut next = groups.len();
        for g in self.group.values_mut() {
            *g = usize::MAX;
        }
        for (i, members) in groups.iter().enumerate() {
            for r in members {
                if let Some(g) = self.group.get_mut(r) {
                    *g = i;
                }
            }
        }
        for g in self.group.values_mut() {
            if *g == usize::MAX {
                *g = next;
                next += 1;
            }
        }
    }

    pub fn heal(&mut self) {
        for g in self.group.values_mut() {
            *g = 0;
        }
    }

    pub fn reachable(&self, a: ReplicaId, b: ReplicaId) -> bool {
        a == b || (self.group.contains_key(&a) && self.group.get(&a) == self.group.get(&b))
    }

    pub fn is_partitioned(&self) -> bool {
        let mut groups = self.group.values();
        let first = groups.next();
        groups.any(|g| Some(g) != first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unlisted_replicas_are_isolated() {
        let rs = [ReplicaId(1), ReplicaId(2), ReplicaId(3)];
        let mut n = Network::new(&rs);
        n.partition(&[vec![ReplicaId(1)]]);
        assert!(!n.reachable(ReplicaId(2), ReplicaId(3)));
        assert!(n.is_partitioned());
        n.heal();
        assert!(n.reachable(ReplicaId(2), ReplicaId(3)) && !n.is_partitioned());
    }
}

mod common;

use aql_core::crdt::{AdditiveCounter, Crdt, EventStamp, LwwRegister, MergeKind, Scalar};
use aql_core::ReplicaId;
use proptest::prelude::*;

use common::{join, reachable_states, Step};

fn steps() -> impl Strategy<Value = Vec<Step>> {
    prop::collection::vec((0u8..3, 0u8..8, -40i64..40), 0..40)
}

fn triple(kind: MergeKind, steps: &[Step], picks: (usize, usize, usize)) -> (aql_core::crdt::MergeValue, aql_core::crdt::MergeValue, aql_core::crdt::MergeValue) {
    let states = reachable_states(kind, steps);
    let n = states.len();
    (states[picks.0 % n].clone(), states[picks.1 % n].clone(), states[picks.2 % n].clone())
}

macro_rules! laws {
    ($name:ident, $kind:expr) => {
        mod $name {
            use super::*;

            proptest! {
                #![proptest_config(ProptestConfig::with_cases(300))]

                #[test]
                fn commutative(s in steps(), p in any::<(usize, usize, usize)>()) {
                    let (a, b, _) = triple($kind, &s, p);
                    prop_assert_eq!(join(&a, &b), join(&b, &a));
                }

                #[test]
                fn associative(s in steps(), p in any::<(usize, usize, usize)>()) {
                    let (a, b, c) = triple($kind, &s, p);
                    prop_assert_eq!(join(&join(&a, &b), &c), join(&a, &join(&b, &c)));
                }

                #[test]
                fn idempotent(s in steps(), p in any::<(usize, usize, usize)>()) {
                    let (a, _, _) = triple($kind, &s, p);
                    prop_assert_eq!(join(&a, &a), a);
                }

                #[test]
                fn bottom_is_identity(s in steps(), p in any::<(usize, usize, usize)>()) {
                    let (a, _, _) = triple($kind, &s, p);
                    prop_assert_eq!(join(&a, &a.bottom_like()), a);
                }
            }
        }
    };
}

laws!(lww, MergeKind::Lww);
laws!(multi_value, MergeKind::MultiValue);
laws!(additive, MergeKind::Additive);
laws!(bounded, MergeKind::Bounded);
laws!(visibility, MergeKind::Visibility);

proptest! {
    #[test]
    fn lww_keeps_the_highest_stamp(writes in prop::collection::vec((1u64..50, 1u32..4, -5i64..5), 1..12)) {
        let mut merged = LwwRegister::new();
        for &(c, r, v) in &writes {
            merged.merge(&LwwRegister::with(Scalar::Int(v), EventStamp::new(c, ReplicaId(r))));
        }
        // Oracle: the write with the largest (counter, replica); ties on both keep the larger value.
        let best = writes.iter().max_by_key(|(c, r, v)| (*c, *r, *v)).unwrap();
        prop_assert_eq!(merged.value(), Some(&Scalar::Int(best.2)));
    }

    #[test]
    fn additive_merge_sums_contributions(adds in prop::collection::vec((1u32..4, -100i64..100), 0..30)) {
        let mut sites = [AdditiveCounter::<i64>::new(), AdditiveCounter::new(), AdditiveCounter::new()];
        for &(r, d) in &adds {
            sites[(r - 1) as usize].add(ReplicaId(r), d);
        }
        let all = sites[0].merged(&sites[1]).merged(&sites[2]);
        prop_assert_eq!(all.value(), adds.iter().map(|(_, d)| d).sum::<i64>());
    }
}

#[test]
fn merging_different_kinds_fails() {
    let a = reachable_states(MergeKind::Lww, &[]).remove(0);
    let b = reachable_states(MergeKind::Additive, &[]).remove(0);
    assert!(aql_core::crdt::merge(&a, &b).is_err());
}

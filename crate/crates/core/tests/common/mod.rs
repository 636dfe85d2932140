#![allow(dead_code)]

use std::path::PathBuf;

use aql_core::crdt::{
    AdditiveCounter, Bound, BoundedCounter, Dot, EventStamp, Flag, LwwRegister, MergeKind, MergeValue,
    MvRegister, Scalar, VersionVector,
};
use aql_core::ReplicaId;

pub const KINDS: [MergeKind; 5] = [
    MergeKind::Lww,
    MergeKind::MultiValue,
    MergeKind::Additive,
    MergeKind::Bounded,
    MergeKind::Visibility,
];

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// One scripted step: `(replica index, opcode, argument)`.
pub type Step = (u8, u8, i64);

struct Site {
    id: ReplicaId,
    value: MergeValue,
    clock: VersionVector,
    lamport: u64,
}

fn bottom(kind: MergeKind) -> MergeValue {
    match kind {
        MergeKind::Lww => MergeValue::Lww(LwwRegister::new()),
        MergeKind::MultiValue => MergeValue::MultiValue(MvRegister::new()),
        MergeKind::Additive => MergeValue::Additive(AdditiveCounter::new()),
        MergeKind::Bounded => MergeValue::Bounded(BoundedCounter::new(Bound::lower(0))),
        MergeKind::Visibility => MergeValue::Visibility(MvRegister::new()),
    }
}

const FLAGS: [Flag; 3] = [Flag::I, Flag::D, Flag::T];

/// Replays `steps` on three replicas and returns every state reached. States
/// come from real histories, so register dots are never reused.
pub fn reachable_states(kind: MergeKind, steps: &[Step]) -> Vec<MergeValue> {
    let ids = [ReplicaId(1), ReplicaId(2), ReplicaId(3)];
    let mut sites: Vec<Site> = ids
        .iter()
        .map(|&id| Site {
            id,
            value: bottom(kind),
            clock: VersionVector::new(),
            lamport: 0,
        })
        .collect();
    let mut out = vec![bottom(kind)];
    for &(r, op, arg) in steps {
        let i = r as usize % sites.len();
        if op % 4 == 0 {
            // Merge from another site.
            let j = (i + 1 + (arg.unsigned_abs() as usize % (sites.len() - 1))) % sites.len();
            let (src_value, src_clock, src_lamport) =
                (sites[j].value.clone(), sites[j].clock.clone(), sites[j].lamport);
            let s = &mut sites[i];
            s.value.merge_from(&src_value).expect("same kind");
            s.clock.join(&src_clock);
            s.lamport = s.lamport.max(src_lamport);
        } else {
            let s = &mut sites[i];
            match &mut s.value {
                MergeValue::Lww(reg) => {
                    s.lamport += 1;
                    reg.assign(Scalar::Int(arg % 7), EventStamp::new(s.lamport, s.id));
                }
                MergeValue::MultiValue(reg) => {
                    let observed = s.clock.clone();
                    let dot: Dot = s.clock.increment(s.id);
                    reg.assign(Scalar::Int(arg % 5), &observed, dot);
                }
                MergeValue::Visibility(reg) => {
                    let observed = s.clock.clone();
                    let dot = s.clock.increment(s.id);
                    reg.assign(FLAGS[arg.unsigned_abs() as usize % 3], &observed, dot);
                }
                MergeValue::Additive(c) => c.add(s.id, arg % 50),
                MergeValue::Bounded(c) => {
                    let amount = arg.abs() % 6 + 1;
                    let _ = match op % 4 {
                        1 => c.grant_headroom(s.id, amount, &ids),
                        2 => c.consume(s.id, amount),
                        _ => c.transfer(s.id, ids[(i + 1) % 3], amount),
                    };
                }
            }
        }
        out.push(sites[i].value.clone());
    }
    out
}

/// Joins two states of the same kind.
pub fn join(a: &MergeValue, b: &MergeValue) -> MergeValue {
    aql_core::crdt::merge(a, b).expect("same kind")
}

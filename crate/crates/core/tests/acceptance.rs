//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::time::{Duration, Instant};

use aql_core::crdt::{AdditiveCounter, Bound, BoundedCounter, Crdt, CrdtError, Flag, MvRegister, VersionVector};
use aql_core::engine::{flags_verdict, is_visible, RowKey};
use aql_core::schema::{parse_schema, ConcurrencyPolicy};
use aql_core::sim::{
    self, check_cluster, check_schedule, enumerate_orders, fuzz_catalog, generate, oracle_visibility,
    prefix_orders, replica_ids, Assertion, FuzzConfig, Runner, Scenario, StepKind, ALL_CHECKS, CHECK_LIVENESS,
    CHECK_MINORITY, CHECK_STEP, DEFAULT_LOCK_TIMEOUT,
};
use aql_core::txn::{Cluster, LockId, LockMode, TxId, TxStatus};
use aql_core::{ReplicaId, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{join, reachable_states, scenarios_dir, KINDS};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn r(n: u32) -> ReplicaId {
    ReplicaId(n)
}

fn load(name: &str) -> Scenario {
    let path = scenarios_dir().join(format!("{name}.aqlsim"));
    sim::load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Runs a scenario and compares every replica with its golden dump.
fn golden(name: &str) -> Outcome {
    let start = Instant::now();
    let scenario = load(name);
    let (report, runner) = sim::run_with_state(&scenario).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let expected = fs::read_to_string(scenarios_dir().join("golden").join(format!("{name}.dump")))
        .map_err(|e| e.to_string())?;
    let cluster = runner.cluster();
    for rep in cluster.replicas() {
        let dump = rep.store().dump(cluster.catalog());
        if dump != expected {
            return Err(format!("{name} @{}: got {dump:?}, want {expected:?}", rep.id));
        }
    }
    if let Some(f) = report.failures().next() {
        return Err(format!("{name} line {}: {} expected {} got {}", f.line, f.name, f.expected, f.actual));
    }
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("{name} took {elapsed:?}"));
    }
    Ok(format!("{name} {elapsed:.1?}"))
}

fn criterion_1() -> Outcome {
    let a = golden("fk_delete_vs_insert_update_wins")?;
    let b = golden("fk_delete_vs_insert_delete_wins")?;
    Ok(format!("{a}, {b}"))
}

fn criterion_2() -> Outcome {
    let a = golden("cascade_vs_insert_update_wins")?;
    let b = golden("cascade_vs_insert_delete_wins")?;
    Ok(format!("{a}, {b}"))
}

/// The visibility table written out case by case.
fn expected_visible(flags: &BTreeSet<Flag>, policy: ConcurrencyPolicy) -> bool {
    let i = flags.contains(&Flag::I);
    let d = flags.contains(&Flag::D);
    let t = flags.contains(&Flag::T);
    match policy {
        ConcurrencyPolicy::DeleteWins => t || (i && !d),
        ConcurrencyPolicy::UpdateWins | ConcurrencyPolicy::NoConcurrency => t || i,
    }
}

fn criterion_3() -> Outcome {
    let all = [Flag::I, Flag::D, Flag::T];
    let policies = [
        ConcurrencyPolicy::UpdateWins,
        ConcurrencyPolicy::DeleteWins,
        ConcurrencyPolicy::NoConcurrency,
    ];
    let mut cases = 0;
    for mask in 0..8u8 {
        // Build the subset as concurrent writes to a real register.
        let mut reg: MvRegister<Flag> = MvRegister::new();
        let mut clock = VersionVector::new();
        for (bit, &flag) in all.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                let mut site = MvRegister::new();
                let mut c = VersionVector::new();
                let dot = c.increment(r(bit as u32 + 1));
                site.assign(flag, &VersionVector::new(), dot);
                reg.merge(&site);
                clock.join(&c);
            }
        }
        let flags: BTreeSet<Flag> = reg.values().into_iter().copied().collect();
        let want: BTreeSet<Flag> = all
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &f)| f)
            .collect();
        if flags != want {
            return Err(format!("register holds {flags:?}, wrote {want:?}"));
        }
        for policy in policies {
            cases += 1;
            let got = flags_verdict(&flags, policy).visible;
            if got != expected_visible(&flags, policy) {
                return Err(format!("{flags:?} under {policy:?}: visible={got}"));
            }
        }
    }
    // The stated rows of the table.
    let set = |f: &[Flag]| f.iter().copied().collect::<BTreeSet<_>>();
    let named = [
        (set(&[Flag::I]), ConcurrencyPolicy::UpdateWins, true),
        (set(&[Flag::I]), ConcurrencyPolicy::DeleteWins, true),
        (set(&[Flag::D]), ConcurrencyPolicy::UpdateWins, false),
        (set(&[Flag::D]), ConcurrencyPolicy::DeleteWins, false),
        (set(&[Flag::I, Flag::D]), ConcurrencyPolicy::UpdateWins, true),
        (set(&[Flag::I, Flag::D]), ConcurrencyPolicy::DeleteWins, false),
        (set(&[Flag::T, Flag::D]), ConcurrencyPolicy::UpdateWins, true),
    ];
    for (flags, policy, want) in named {
        if flags_verdict(&flags, policy).visible != want {
            return Err(format!("{flags:?} under {policy:?} should be visible={want}"));
        }
    }
    Ok(format!("{cases} subset/policy cases"))
}

fn criterion_4() -> Outcome {
    let scenario = load("parent_version");
    let (report, runner) = sim::run_with_state(&scenario).map_err(|e| e.to_string())?;
    if let Some(f) = report.failures().next() {
        return Err(format!("line {}: {} expected {} got {}", f.line, f.name, f.expected, f.actual));
    }
    let golden = fs::read_to_string(scenarios_dir().join("golden/parent_version.dump")).map_err(|e| e.to_string())?;
    let cluster = runner.cluster();
    let sam = RowKey::new("Artists", Scalar::str("Sam"));
    let a1 = RowKey::new("Albums", Scalar::str("A1"));
    for rep in cluster.replicas() {
        let store = rep.store();
        let parent = store.row(&sam).ok_or("Sam missing")?;
        let child = store.row(&a1).ok_or("A1 missing")?;
        let recorded = child.fk_ref("Artist").ok_or("A1 has no parent reference")?;
        if parent.pvr != 2 || recorded.pvr != 1 {
            return Err(format!("@{}: parent pvr {} child recorded {}", rep.id, parent.pvr, recorded.pvr));
        }
        if is_visible(child, cluster.catalog(), store).visible || !is_visible(parent, cluster.catalog(), store).visible {
            return Err(format!("@{}: wrong visibility", rep.id));
        }
        if store.dump(cluster.catalog()) != golden {
            return Err(format!("@{}: dump differs from golden", rep.id));
        }
    }
    Ok("child at pvr 1 stays hidden after re-insert at pvr 2 on 3 replicas".into())
}

fn criterion_5() -> Outcome {
    const CASES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in KINDS {
        for case in 0..CASES {
            let len = rng.gen_range(1..40);
            let steps: Vec<common::Step> = (0..len)
                .map(|_| (rng.gen_range(0..3), rng.gen_range(0..8), rng.gen_range(-40..40)))
                .collect();
            let states = reachable_states(kind, &steps);
            let pick = |rng: &mut ChaCha8Rng| states[rng.gen_range(0..states.len())].clone();
            let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
            if join(&a, &b) != join(&b, &a) {
                return Err(format!("{kind:?} case {case}: not commutative"));
            }
            if join(&join(&a, &b), &c) != join(&a, &join(&b, &c)) {
                return Err(format!("{kind:?} case {case}: not associative"));
            }
            if join(&a, &a) != a {
                return Err(format!("{kind:?} case {case}: not idempotent"));
            }
        }
    }
    Ok(format!("{CASES} cases per law for each of {} kinds", KINDS.len()))
}

/// Escrow oracle: every replica knows a prefix of each writer's events, and
/// its free rights are the sum of the known events that concern it.
#[derive(Clone, Copy, Debug)]
enum Escrow {
    Grant { to: usize, amount: i64 },
    Consume { at: usize, amount: i64 },
    Transfer { from: usize, to: usize, amount: i64 },
}

fn oracle_free(log: &[Escrow], known: &BTreeSet<usize>, at: usize) -> i64 {
    known
        .iter()
        .map(|&i| match log[i] {
            Escrow::Grant { to, amount, .. } if to == at => amount,
            Escrow::Consume { at: c, amount } if c == at => -amount,
            Escrow::Transfer { from, amount, .. } if from == at => -amount,
            Escrow::Transfer { to, amount, .. } if to == at => amount,
            _ => 0,
        })
        .sum()
}

fn criterion_6() -> Outcome {
    const SCHEDULES: u64 = 1000;
    let ids = [r(1), r(2), r(3)];
    let mut refused = 0;
    let mut attempts = 0;
    for seed in 0..SCHEDULES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial: i64 = rng.gen_range(0..30);
        let bound = Bound::lower(0);
        let mut log = Vec::new();
        let mut known: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); 3];
        // Initial head-room split evenly, remainder to the creator.
        let share = initial / 3;
        for to in 0..3 {
            let amount = share + if to == 0 { initial - share * 3 } else { 0 };
            if amount > 0 {
                log.push(Escrow::Grant { to, amount });
                known[0].insert(log.len() - 1);
            }
        }
        let created = BoundedCounter::with_initial(bound, initial, &ids, ids[0]).map_err(|e| e.to_string())?;
        let mut sites = [created, BoundedCounter::new(bound), BoundedCounter::new(bound)];
        let mut increments = 0;
        let mut consumed = 0;
        for _ in 0..60 {
            let at = rng.gen_range(0..3);
            match rng.gen_range(0..10) {
                0..=3 => {
                    let amount = rng.gen_range(1..8);
                    attempts += 1;
                    let free = oracle_free(&log, &known[at], at);
                    match sites[at].consume(ids[at], amount) {
                        Ok(()) if amount <= free => {
                            log.push(Escrow::Consume { at, amount });
                            known[at].insert(log.len() - 1);
                            consumed += amount;
                        }
                        Err(CrdtError::InsufficientRights { .. }) if amount > free => refused += 1,
                        other => {
                            return Err(format!("seed {seed}: consume {amount} with {free} free gave {other:?}"));
                        }
                    }
                }
                4 | 5 => {
                    let to = (at + rng.gen_range(1..3)) % 3;
                    let amount = rng.gen_range(1..6);
                    let free = oracle_free(&log, &known[at], at);
                    match sites[at].transfer(ids[at], ids[to], amount) {
                        Ok(()) if amount <= free => {
                            log.push(Escrow::Transfer { from: at, to, amount });
                            known[at].insert(log.len() - 1);
                        }
                        Err(CrdtError::InsufficientRights { .. }) if amount > free => {}
                        other => {
                            return Err(format!("seed {seed}: transfer {amount} with {free} free gave {other:?}"));
                        }
                    }
                }
                6 => {
                    let amount = rng.gen_range(1..5);
                    sites[at].apply_delta(ids[at], amount).map_err(|e| e.to_string())?;
                    log.push(Escrow::Grant { to: at, amount });
                    known[at].insert(log.len() - 1);
                    increments += amount;
                }
                _ => {
                    let from = (at + rng.gen_range(1..3)) % 3;
                    let other = sites[from].clone();
                    sites[at].merge(&other);
                    let theirs = known[from].clone();
                    known[at].extend(theirs);
                }
            }
            for (i, s) in sites.iter().enumerate() {
                if !s.is_consistent() || s.value() < 0 {
                    return Err(format!("seed {seed}: replica {i} inconsistent at value {}", s.value()));
                }
                if s.free(ids[i]) != oracle_free(&log, &known[i], i) {
                    return Err(format!("seed {seed}: replica {i} free rights disagree with the oracle"));
                }
            }
        }
        let mut all = sites[0].clone();
        for s in &sites[1..] {
            all.merge(s);
        }
        if all.value() < 0 || !all.is_consistent() {
            return Err(format!("seed {seed}: converged value {} violates the bound", all.value()));
        }
        if all.value() != initial + increments - consumed {
            return Err(format!("seed {seed}: converged {} want {}", all.value(), initial + increments - consumed));
        }
        if all.total_rights() != initial + increments {
            return Err(format!("seed {seed}: total rights {} want {}", all.total_rights(), initial + increments));
        }
    }
    if refused == 0 {
        return Err("no over-consumption was ever attempted".into());
    }
    Ok(format!("{SCHEDULES} schedules, {refused} of {attempts} consumes refused as over-consumption"))
}

fn criterion_7() -> Outcome {
    // Pure counters.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let mut sites = vec![AdditiveCounter::<i64>::new(); 3];
        let mut total = 0;
        for _ in 0..rng.gen_range(1..30) {
            let at = rng.gen_range(0..3);
            let d = rng.gen_range(-20..20);
            sites[at].add(r(at as u32 + 1), d);
            total += d;
        }
        let merged = sites.iter().fold(AdditiveCounter::new(), |acc, s| acc.merged(s));
        if merged.value() != total {
            return Err(format!("counter merged to {} want {total}", merged.value()));
        }
    }
    // Through the engine, including a bounded column where some updates fail.
    let catalog = parse_schema(
        "CREATE UPDATE_WINS TABLE C(Id INT PRIMARY KEY, Hits INT ADDITIVE, Qty INT ADDITIVE CHECK (Qty >= 0));",
    )
    .map_err(|e| e.to_string())?;
    let ids = replica_ids(3);
    let mut trials = 0;
    let mut rejected = 0;
    for trial in 0..200i64 {
        let mut cluster = Cluster::new(catalog.clone(), &ids);
        let (hits0, qty0) = (rng.gen_range(-50..50), rng.gen_range(0..30));
        let t0 = cluster.begin(ids[0]);
        cluster
            .execute_sql(t0, &format!("INSERT INTO C VALUES ({trial}, {hits0}, {qty0})"))
            .map_err(|e| e.to_string())?;
        cluster.commit(t0).map_err(|e| e.to_string())?;
        cluster.deliver_all();
        let (mut hits, mut qty) = (hits0, qty0);
        let mut open = Vec::new();
        for _ in 0..rng.gen_range(2..7) {
            let at = ids[rng.gen_range(0..3)];
            let dh: i64 = rng.gen_range(-9..10);
            let dq: i64 = rng.gen_range(-8..4);
            let tx = cluster.begin(at);
            let sql = format!(
                "UPDATE C SET Hits = Hits {} {}, Qty = Qty {} {} WHERE Id = {trial}",
                if dh < 0 { '-' } else { '+' },
                dh.abs(),
                if dq < 0 { '-' } else { '+' },
                dq.abs()
            );
            if cluster.execute_sql(tx, &sql).is_ok() {
                open.push((tx, dh, dq));
            } else {
                rejected += 1;
            }
        }
        for (tx, dh, dq) in open {
            if cluster.commit(tx).is_ok() {
                hits += dh;
                qty += dq;
            }
        }
        cluster.deliver_all();
        let key = RowKey::new("C", Scalar::Int(trial));
        for rep in cluster.replicas() {
            let row = rep.store().row(&key).ok_or("row missing")?;
            if row.counter_value("Hits") != hits || row.counter_value("Qty") != qty {
                return Err(format!(
                    "trial {trial} @{}: Hits {} Qty {} want {hits} {qty}",
                    rep.id,
                    row.counter_value("Hits"),
                    row.counter_value("Qty")
                ));
            }
        }
        trials += 1;
    }
    Ok(format!("1000 counter sets, {trials} engine trials ({rejected} escrow refusals)"))
}

fn criterion_8() -> Outcome {
    let mut checked = 0;
    let mut conflict_permutations = 0;
    let mut names: Vec<String> = fs::read_dir(scenarios_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "aqlsim"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    for name in &names {
        let scenario = load(name);
        let mut runner = Runner::for_scenario(&scenario);
        for step in &scenario.steps {
            match &step.kind {
                StepKind::Event(e) => runner.apply(step.line, e).map_err(|e| e.to_string())?,
                StepKind::Assert(Assertion::OrderIndependent { replica }) => {
                    let rep = enumerate_orders(runner.cluster(), *replica);
                    if name.contains("_vs_insert_") || name == "parent_version" {
                        conflict_permutations += rep.causal;
                    }
                }
                StepKind::Assert(a) => {
                    runner.evaluate(step.line, a);
                }
            }
            // Every replica after every step.
            for &rid in runner.cluster().replica_ids() {
                let rep = enumerate_orders(runner.cluster(), rid);
                if !rep.pass() {
                    return Err(format!("{name} line {} @{rid}: {} distinct states", step.line, rep.distinct_states));
                }
                if rep.records.len() >= 2 {
                    checked += 1;
                }
            }
        }
    }
    let config = FuzzConfig::default();
    let mut prefixes = 0;
    for seed in 1..=50u64 {
        let rep = prefix_orders(seed, &config, 120, r(3));
        if rep.records.len() < 2 {
            return Err(format!("seed {seed}: only {} concurrent records pending", rep.records.len()));
        }
        if !rep.pass() {
            return Err(format!("seed {seed}: {} distinct states over {} orders", rep.distinct_states, rep.causal));
        }
        prefixes += 1;
    }
    if conflict_permutations < 10 {
        return Err(format!("conflict scenarios only exercised {conflict_permutations} delivery orders"));
    }
    Ok(format!(
        "{} scenarios ({checked} multi-record states), {conflict_permutations} conflict orders, {prefixes} fuzzed prefixes",
        names.len()
    ))
}

/// Lock oracle: the manager's holder table agrees with the transactions, and
/// any two committed transactions that held conflicting modes on a lock are
/// causally ordered.
struct LockAudit {
    held: BTreeMap<(TxId, LockId), LockMode>,
}

impl LockAudit {
    fn step(&mut self, cluster: &Cluster) -> Result<(), String> {
        for (id, lock) in cluster.locks().iter() {
            let exclusive = lock.holders.values().filter(|(_, m)| *m == LockMode::Exclusive).count();
            if exclusive > 0 && lock.holders.len() > 1 {
                return Err(format!("{id}: exclusive holder alongside {} others", lock.holders.len() - 1));
            }
            for (tx, (replica, mode)) in &lock.holders {
                let t = cluster.transaction(*tx).ok_or("unknown holder")?;
                if !t.is_active() || t.origin != *replica || !t.locks().contains(id) {
                    return Err(format!("{id}: stale holder {tx}"));
                }
                let e = self.held.entry((*tx, id.clone())).or_insert(*mode);
                *e = (*e).max(*mode);
            }
        }
        for t in cluster.active_transactions() {
            for id in t.locks() {
                let holds = cluster.locks().lock(id).is_some_and(|l| l.holders.contains_key(&t.id));
                if !holds {
                    return Err(format!("{} believes it holds {id}", t.id));
                }
            }
        }
        Ok(())
    }

    fn serialized(&self, cluster: &Cluster) -> Result<usize, String> {
        let mut by_lock: BTreeMap<&LockId, Vec<(TxId, LockMode, usize)>> = BTreeMap::new();
        for ((tx, id), mode) in &self.held {
            if let Some(TxStatus::Committed { record }) = cluster.transaction(*tx).map(|t| t.status()) {
                by_lock.entry(id).or_default().push((*tx, *mode, record));
            }
        }
        let mut pairs = 0;
        for (id, holders) in by_lock {
            for (i, a) in holders.iter().enumerate() {
                for b in &holders[i + 1..] {
                    if a.1 == LockMode::Shared && b.1 == LockMode::Shared {
                        continue;
                    }
                    let (ra, rb) = (&cluster.log()[a.2], &cluster.log()[b.2]);
                    if !(ra.clock().le(&rb.deps) || rb.clock().le(&ra.deps)) {
                        return Err(format!("{id}: {} and {} committed concurrently", a.0, b.0));
                    }
                    pairs += 1;
                }
            }
        }
        Ok(pairs)
    }
}

/// Steps a fuzzed schedule with the lock and referential-integrity oracles
/// after every event.
fn audited_run(seed: u64, config: &FuzzConfig) -> Result<(usize, usize), String> {
    let catalog = fuzz_catalog();
    let events = generate(seed, config, &catalog);
    let mut runner = Runner::new(catalog, &replica_ids(config.replicas), DEFAULT_LOCK_TIMEOUT).lenient();
    let mut audit = LockAudit { held: BTreeMap::new() };
    let mut snapshots = 0;
    for (i, e) in events.iter().enumerate() {
        runner.apply(i + 1, e).map_err(|e| e.to_string())?;
        audit.step(runner.cluster()).map_err(|m| format!("seed {seed} event {}: {m}", i + 1))?;
        snapshots += integrity(runner.cluster()).map_err(|m| format!("seed {seed} event {}: {m}", i + 1))?;
    }
    let pairs = audit.serialized(runner.cluster()).map_err(|m| format!("seed {seed}: {m}"))?;
    Ok((pairs, snapshots))
}

/// No visible child refers to a parent generation that is not visible.
fn integrity(cluster: &Cluster) -> Result<usize, String> {
    let catalog = cluster.catalog();
    let mut stores = 0;
    for rep in cluster.replicas() {
        let store = rep.store();
        let oracle = oracle_visibility(store, catalog);
        for row in store.rows() {
            let visible = is_visible(row, catalog, store).visible;
            if oracle.get(&row.key).copied() != Some(visible) {
                return Err(format!("@{}: {} visibility disagrees with the oracle", rep.id, row.key));
            }
            if !visible {
                continue;
            }
            let schema = catalog.table(&row.key.table).ok_or("unknown table")?;
            for (col, fk) in schema.foreign_keys() {
                let Some(p) = row.fk_ref(&col.name) else { continue };
                let parent_ok = store
                    .row(&p.key)
                    .is_some_and(|parent| oracle[&parent.key] && (fk.policy != ConcurrencyPolicy::DeleteWins || parent.pvr == p.pvr));
                if !parent_ok {
                    return Err(format!("@{}: visible {} refers to hidden {} generation {}", rep.id, row.key, p.key, p.pvr));
                }
            }
        }
        stores += 1;
    }
    Ok(stores)
}

fn criterion_9() -> Outcome {
    let mut pairs = 0;
    let mut refusals = 0;
    for seed in 1..=100u64 {
        for forced_partition in [false, true] {
            let config = FuzzConfig {
                forced_partition,
                minimize: false,
                ..FuzzConfig::default()
            };
            pairs += audited_run(seed, &config)?.0;
            let check = check_schedule(&fuzz_catalog(), &config, &generate(seed, &config, &fuzz_catalog()));
            for name in [CHECK_STEP, CHECK_MINORITY, CHECK_LIVENESS] {
                if let Some(v) = check.violations.get(name).filter(|v| !v.is_empty()) {
                    return Err(format!("seed {seed}: {name}: {}", v.join("; ")));
                }
            }
            refusals += check.minority_refusals;
        }
    }
    if refusals == 0 {
        return Err("the partitioned replica was never refused a lock".into());
    }
    let healed = load("partition_locks");
    let report = sim::run(&healed).map_err(|e| e.to_string())?;
    if !report.passed() {
        return Err("partition_locks scenario failed".into());
    }
    Ok(format!(
        "200 schedules, {pairs} conflicting committed pairs ordered, {refusals} minority refusals, acquisition after heal ok"
    ))
}

fn criterion_10() -> Outcome {
    let config = FuzzConfig {
        minimize: false,
        ..FuzzConfig::default()
    };
    let start = Instant::now();
    let catalog = fuzz_catalog();
    for seed in 1..=100u64 {
        let events = generate(seed, &config, &catalog);
        let check = check_schedule(&catalog, &config, &events);
        for name in ALL_CHECKS {
            if let Some(v) = check.violations.get(name).filter(|v| !v.is_empty()) {
                return Err(format!("seed {seed}: {name}: {}", v.join("; ")));
            }
        }
    }
    let elapsed = start.elapsed();
    let mut snapshots = 0;
    for seed in 1..=100u64 {
        snapshots += audited_run(seed, &config)?.1;
    }
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("fuzz suite took {elapsed:?}"));
    }
    Ok(format!("100 seeds x {} events in {elapsed:.2?}, {snapshots} replica snapshots audited", config.events))
}

fn criterion_11() -> Outcome {
    let catalog = parse_schema(
        "CREATE UPDATE_WINS TABLE T(Id INT PRIMARY KEY, Owner INT LWW);
         CREATE UPDATE_WINS TABLE S(Id VARCHAR PRIMARY KEY, Owner INT LWW);",
    )
    .map_err(|e| e.to_string())?;
    let ids = replica_ids(3);
    let mut cluster = Cluster::new(catalog, &ids);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut granted = Vec::new();
    let mut refused = 0;
    for n in 0..300 {
        let at = ids[rng.gen_range(0..3)];
        let tx = cluster.begin(at);
        // Sometimes a concurrent competitor at another replica.
        let rival = rng.gen_bool(0.3).then(|| cluster.begin(ids[(at.0 as usize) % 3]));
        let sql = format!("INSERT INTO T VALUES (SEQUENTIAL_ID('t'), {n})");
        let ok = cluster.execute_sql(tx, &sql).is_ok();
        let mut winner = ok.then_some(tx);
        if let Some(rv) = rival {
            // A failed statement aborts its transaction and frees the lock.
            if cluster.execute_sql(rv, &sql).is_ok() {
                if ok {
                    return Err(format!("attempt {n}: two transactions hold the sequence"));
                }
                winner = Some(rv);
            } else {
                refused += 1;
            }
        }
        if !ok {
            refused += 1;
        }
        if let Some(w) = winner {
            let idx = cluster.commit(w).map_err(|e| e.to_string())?;
            let rec = &cluster.log()[idx];
            let id = rec.rows.iter().find(|row| row.key.table == "T").and_then(|row| row.key.pk.as_int());
            granted.push(id.ok_or("no id in commit")?);
        }
        if rng.gen_bool(0.6) {
            cluster.deliver_all();
        } else {
            let to = ids[rng.gen_range(0..3)];
            for i in cluster.pending_records(to) {
                cluster.deliver(to, i);
            }
        }
    }
    let expected: Vec<i64> = (1..=granted.len() as i64).collect();
    if granted != expected {
        return Err(format!("sequence not gap-free: {:?}", &granted[..granted.len().min(20)]));
    }
    cluster.deliver_all();
    let rows = cluster.replica(ids[0]).store().table_rows("T").count();
    if rows != granted.len() {
        return Err(format!("{rows} rows for {} ids", granted.len()));
    }

    let mut seen = HashSet::new();
    for i in 0..30_000 {
        let id = cluster.replica_mut(ids[i % 3]).next_unique_id();
        if !seen.insert(id.clone()) {
            return Err(format!("duplicate unique id {id}"));
        }
    }
    let mut txs = Vec::new();
    for (n, &at) in ids.iter().cycle().take(60).enumerate() {
        let tx = cluster.begin(at);
        cluster
            .execute_sql(tx, &format!("INSERT INTO S VALUES (UNIQUE_ID(), {n})"))
            .map_err(|e| e.to_string())?;
        txs.push(tx);
    }
    for tx in txs {
        cluster.commit(tx).map_err(|e| e.to_string())?;
    }
    cluster.deliver_all();
    let sessions = cluster.replica(ids[1]).store().table_rows("S").count();
    if sessions != 60 {
        return Err(format!("{sessions} of 60 concurrent UNIQUE_ID inserts survived"));
    }
    if !check_cluster(&cluster).is_empty() {
        return Err("invariants broken".into());
    }
    Ok(format!(
        "{} sequential ids gap-free ({refused} refused), 30000 unique ids distinct, 60 concurrent inserts kept",
        granted.len()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("concurrent delete/insert under update-wins and delete-wins foreign keys", criterion_1),
        ("cascading delete concurrent with child insert", criterion_2),
        ("visibility truth table over all flag subsets", criterion_3),
        ("re-inserted parent does not revive an old child", criterion_4),
        ("merge laws for every cell kind", criterion_5),
        ("escrow counter safety and rights conservation", criterion_6),
        ("additive conservation", criterion_7),
        ("delivery order independence", criterion_8),
        ("lock safety and liveness after heal", criterion_9),
        ("referential integrity at every snapshot", criterion_10),
        ("sequential and unique ids", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{took:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Seeded random schedules over a schema that exercises every policy.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crdt::{ReplicaId, Scalar};
use crate::engine::{ErrorKind, RowKey};
use crate::schema::{parse_schema, parse_statement, Catalog};
use crate::txn::{TxId, TxStatus};

use super::invariants::{check_causal_delivery, check_cluster, check_convergence};
use super::orders::{enumerate_orders, OrderReport};
use super::scenario::{Event, DEFAULT_LOCK_TIMEOUT};
use super::{Report, Runner};

pub const FUZZ_SCHEMA: &str = "
CREATE UPDATE_WINS TABLE Artists(
    Name VARCHAR PRIMARY KEY,
    Country VARCHAR LWW,
    Tags VARCHAR MULTI_VALUE,
    Plays INT ADDITIVE
);
CREATE DELETE_WINS TABLE Labels(Name VARCHAR PRIMARY KEY, City VARCHAR LWW);
CREATE UPDATE_WINS TABLE Albums(
    Title VARCHAR PRIMARY KEY,
    Artist VARCHAR LWW FOREIGN KEY UPDATE_WINS REFERENCES Artists(Name) ON DELETE CASCADE,
    Label VARCHAR LWW FOREIGN KEY DELETE_WINS REFERENCES Labels(Name),
    Year INT LWW CHECK (Year >= 1900)
);
CREATE TABLE Stock(Item VARCHAR PRIMARY KEY, Qty INT ADDITIVE CHECK (Qty >= 0), Note VARCHAR);
CREATE UPDATE_WINS TABLE Orders(
    Id INT PRIMARY KEY,
    Item VARCHAR FOREIGN KEY REFERENCES Stock(Item),
    Amount INT LWW
);
";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FuzzConfig {
    pub replicas: usize,
    pub events: usize,
    /// Cut the last replica off from the others for the first three quarters
    /// of the schedule instead of injecting random partitions.
    pub forced_partition: bool,
    /// Shrink failing schedules before reporting them.
    pub minimize: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            replicas: 3,
            events: 200,
            forced_partition: false,
            minimize: true,
        }
    }
}

pub fn fuzz_catalog() -> Catalog {
    parse_schema(FUZZ_SCHEMA).expect("built-in fuzz schema is valid")
}

pub fn replica_ids(n: usize) -> Vec<ReplicaId> {
    (1..=n.max(1) as u32).map(ReplicaId).collect()
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a str {
    items.choose(rng).copied().unwrap_or_default()
}

fn random_sql<R: Rng>(rng: &mut R) -> String {
    const ARTISTS: [&str; 3] = ["Sam", "Ann", "Bob"];
    const LABELS: [&str; 2] = ["Indie", "Major"];
    const ALBUMS: [&str; 4] = ["A0", "A1", "A2", "A3"];
    const ITEMS: [&str; 2] = ["s1", "s2"];
    const WORDS: [&str; 3] = ["x", "y", "z"];
    let artist = pick(rng, &ARTISTS);
    let label = pick(rng, &LABELS);
    let album = pick(rng, &ALBUMS);
    let item = pick(rng, &ITEMS);
    let word = pick(rng, &WORDS);
    match rng.gen_range(0..24) {
        0 | 1 => format!(
            "INSERT INTO Artists VALUES ('{artist}', '{word}', '{word}', {})",
            rng.gen_range(0..5)
        ),
        2 => format!("UPDATE Artists SET Country = '{word}', Plays = Plays + {} WHERE Name = '{artist}'", rng.gen_range(1..4)),
        3 => format!("UPDATE Artists SET Tags = '{word}' WHERE Name = '{artist}'"),
        4 => format!("DELETE FROM Artists WHERE Name = '{artist}'"),
        5 => format!("INSERT INTO Labels VALUES ('{label}', '{word}')"),
        6 => format!("DELETE FROM Labels WHERE Name = '{label}'"),
        7 | 8 => format!(
            "INSERT INTO Albums VALUES ('{album}', '{artist}', '{label}', {})",
            if rng.gen_bool(0.1) { 1850 } else { 1990 + rng.gen_range(0..30) }
        ),
        9 => format!("UPDATE Albums SET Year = {} WHERE Title = '{album}'", 1890 + rng.gen_range(0..100)),
        10 => format!("UPDATE Albums SET Artist = '{artist}' WHERE Title = '{album}'"),
        11 => format!("DELETE FROM Albums WHERE Title = '{album}'"),
        12 => format!("INSERT INTO Stock VALUES ('{item}', {}, '{word}')", rng.gen_range(0..12)),
        13 | 14 => format!("UPDATE Stock SET Qty = Qty - {} WHERE Item = '{item}'", rng.gen_range(1..5)),
        15 => format!("UPDATE Stock SET Qty = Qty + {} WHERE Item = '{item}'", rng.gen_range(1..5)),
        16 => format!("UPDATE Stock SET Note = '{word}' WHERE Item = '{item}'"),
        17 => format!("DELETE FROM Stock WHERE Item = '{item}'"),
        18 => format!(
            "INSERT INTO Orders VALUES (SEQUENTIAL_ID('orders'), '{item}', {})",
            rng.gen_range(1..9)
        ),
        19 => format!("DELETE FROM Orders WHERE Id = {}", rng.gen_range(1..6)),
        20 => format!("UPDATE Albums SET Label = '{label}' WHERE Title = '{album}'"),
        21 => format!("UPDATE Labels SET City = '{word}' WHERE Name = '{label}'"),
        _ => format!("UPDATE Artists SET Plays = Plays + 1 WHERE Name = '{artist}'"),
    }
}

/// The seed-determined event list.
pub fn generate(seed: u64, config: &FuzzConfig, catalog: &Catalog) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let replicas = replica_ids(config.replicas);
    let mut events = Vec::with_capacity(config.events);
    let mut open: Vec<(String, ReplicaId)> = Vec::new();
    let mut closed: Vec<String> = Vec::new();
    let mut next_label = 0;
    let mut partitioned = false;
    let heal_at = config.events * 3 / 4;
    // Base rows, committed and delivered everywhere, so most later
    // statements find something to act on.
    let setup = [
        "INSERT INTO Artists VALUES ('Sam', 'x', 'x', 0)",
        "INSERT INTO Artists VALUES ('Ann', 'y', 'y', 0)",
        "INSERT INTO Labels VALUES ('Indie', 'x')",
        "INSERT INTO Labels VALUES ('Major', 'y')",
        "INSERT INTO Albums VALUES ('A0', 'Sam', 'Indie', 1999)",
        "INSERT INTO Stock VALUES ('s1', 10, 'x')",
        "INSERT INTO Stock VALUES ('s2', 10, 'y')",
    ];
    if config.events >= setup.len() + 3 {
        let tx = "t0".to_string();
        events.push(Event::Begin { tx: tx.clone(), replica: replicas[0] });
        for sql in setup {
            let stmt = parse_statement(sql, catalog).expect("setup statements parse");
            events.push(Event::Stmt { tx: tx.clone(), sql: sql.into(), stmt });
        }
        events.push(Event::Commit { tx });
        events.push(Event::DeliverAll);
    }
    if config.forced_partition && replicas.len() > 1 {
        let (minority, majority) = replicas.split_last().expect("non-empty");
        events.push(Event::Partition(vec![majority.to_vec(), vec![*minority]]));
    }
    while events.len() < config.events {
        if config.forced_partition && events.len() == heal_at {
            events.push(Event::Heal);
            continue;
        }
        let roll = rng.gen_range(0..100);
        let event = match roll {
            0..=14 if open.len() < 3 => {
                next_label += 1;
                let label = format!("t{next_label}");
                let r = *replicas.choose(&mut rng).expect("replicas");
                open.push((label.clone(), r));
                Event::Begin { tx: label, replica: r }
            }
            0..=44 if !open.is_empty() => {
                let (tx, _) = open.choose(&mut rng).expect("open").clone();
                let sql = random_sql(&mut rng);
                let stmt = parse_statement(&sql, catalog).expect("generated statements parse");
                Event::Stmt { tx, sql, stmt }
            }
            45..=64 if !open.is_empty() => {
                let i = rng.gen_range(0..open.len());
                let (tx, _) = open.swap_remove(i);
                closed.push(tx.clone());
                if rng.gen_bool(0.05) {
                    Event::Abort { tx }
                } else {
                    Event::Commit { tx }
                }
            }
            65..=84 if !closed.is_empty() => {
                let tx = closed.choose(&mut rng).expect("closed").clone();
                let to = *replicas.choose(&mut rng).expect("replicas");
                Event::Deliver { tx, to: vec![to] }
            }
            85..=88 => Event::DeliverAll,
            89..=91 if !config.forced_partition && replicas.len() > 1 => {
                if partitioned {
                    partitioned = false;
                    Event::Heal
                } else {
                    partitioned = true;
                    let mut shuffled = replicas.clone();
                    shuffled.shuffle(&mut rng);
                    let cut = rng.gen_range(1..shuffled.len());
                    let (a, b) = shuffled.split_at(cut);
                    Event::Partition(vec![a.to_vec(), b.to_vec()])
                }
            }
            92..=94 if replicas.len() > 1 => {
                let from = *replicas.choose(&mut rng).expect("replicas");
                let to = *replicas.choose(&mut rng).expect("replicas");
                Event::Transfer {
                    from,
                    to,
                    table: "Stock".into(),
                    pk: Scalar::str(if rng.gen_bool(0.5) { "s1" } else { "s2" }),
                    column: "Qty".into(),
                    amount: rng.gen_range(1..4),
                }
            }
            95 => Event::Advance(rng.gen_range(1..5)),
            _ => continue,
        };
        events.push(event);
    }
    events
}

/// Result of replaying one schedule with all checks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScheduleCheck {
    /// Violations by check name.
    pub violations: BTreeMap<&'static str, Vec<String>>,
    pub commits: usize,
    pub failures: BTreeMap<ErrorKind, usize>,
    pub minority_refusals: usize,
}

impl ScheduleCheck {
    pub fn failed(&self) -> bool {
        self.violations.values().any(|v| !v.is_empty())
    }

    fn add(&mut self, check: &'static str, found: Vec<String>) {
        let slot = self.violations.entry(check).or_default();
        if slot.len() < 5 {
            slot.extend(found.into_iter().take(5 - slot.len()));
        }
    }
}

pub const CHECK_STEP: &str = "lock safety, referential integrity and checks at every step";
pub const CHECK_MINORITY: &str = "no lock-guarded commit on the partitioned minority";
pub const CHECK_DELIVERY: &str = "eventual delivery after heal";
pub const CHECK_CONVERGENCE: &str = "convergence";
pub const CHECK_CAUSAL: &str = "causal delivery";
pub const CHECK_ADDITIVE: &str = "additive conservation";
pub const CHECK_LIVENESS: &str = "lock acquisition succeeds after heal";

pub const ALL_CHECKS: [&str; 7] = [
    CHECK_STEP,
    CHECK_MINORITY,
    CHECK_DELIVERY,
    CHECK_CONVERGENCE,
    CHECK_CAUSAL,
    CHECK_ADDITIVE,
    CHECK_LIVENESS,
];

/// Replays `events`, checking safety after every event and convergence,
/// conservation and liveness at the end.
pub fn check_schedule(catalog: &Catalog, config: &FuzzConfig, events: &[Event]) -> ScheduleCheck {
    let replicas = replica_ids(config.replicas);
    let coordinator = replicas[0];
    let mut runner = Runner::new(catalog.clone(), &replicas, DEFAULT_LOCK_TIMEOUT).lenient();
    let mut out = ScheduleCheck::default();
    for (i, event) in events.iter().enumerate() {
        let minority_tx = match event {
            // Under random partitions a lock taken before the cut may be held
            // across it; only the forced layout isolates the minority from the start.
            Event::Commit { tx } | Event::Stmt { tx, .. } if config.forced_partition => runner.tx_id(tx).filter(|&id| {
                let t = runner.cluster().transaction(id).expect("known tx");
                t.is_active() && !runner.cluster().network().reachable(t.origin, coordinator)
            }),
            _ => None,
        };
        runner.apply(i + 1, event).expect("lenient runs do not fail");
        if let Some(id) = minority_tx {
            let t = runner.cluster().transaction(id).expect("known tx");
            match (event, t.status()) {
                (Event::Commit { .. }, TxStatus::Committed { .. }) if !t.locks().is_empty() => {
                    out.add(CHECK_MINORITY, vec![format!("event {}: {} committed holding locks", i + 1, t.id)]);
                }
                (Event::Stmt { .. }, TxStatus::Aborted(Some(ErrorKind::LockUnavailable))) => {
                    out.minority_refusals += 1;
                }
                _ => {}
            }
        }
        let v = check_cluster(runner.cluster());
        if !v.is_empty() {
            out.add(CHECK_STEP, v.into_iter().map(|s| format!("after event {}: {s}", i + 1)).collect());
        }
    }

    runner.abort_all();
    let cluster = runner.cluster_mut();
    cluster.heal();
    cluster.deliver_all();
    if !cluster.queues_empty() {
        let stuck: Vec<String> = cluster
            .replica_ids()
            .iter()
            .map(|&r| format!("{r}: {} pending", cluster.pending(r)))
            .collect();
        out.add(CHECK_DELIVERY, stuck);
    }
    out.add(CHECK_STEP, check_cluster(cluster));
    out.add(CHECK_CONVERGENCE, check_convergence(cluster));
    out.add(CHECK_CAUSAL, check_causal_delivery(cluster));
    out.add(CHECK_ADDITIVE, check_additive(cluster));

    // Liveness: lock-guarded writes from every replica go through once healed.
    for (n, &r) in replicas.iter().enumerate() {
        let item = format!("probe{n}");
        let id = cluster.begin(r);
        let steps = [
            format!("INSERT INTO Stock VALUES ('{item}', 1, 'p')"),
            format!("INSERT INTO Orders VALUES (SEQUENTIAL_ID('orders'), '{item}', 1)"),
        ];
        let mut result = Ok(());
        for sql in &steps {
            if let Err(e) = cluster.execute_sql(id, sql) {
                result = Err(e);
                break;
            }
        }
        let result = result.and_then(|()| cluster.commit(id).map(|_| ()));
        if let Err(e) = result {
            out.add(CHECK_LIVENESS, vec![format!("{r}: {e}")]);
        }
        cluster.deliver_all();
    }

    out.commits = cluster.log().len();
    for t in (1..).map(TxId).map_while(|id| cluster.transaction(id)) {
        if let TxStatus::Aborted(Some(k)) = t.status() {
            *out.failures.entry(k).or_default() += 1;
        }
    }
    out
}

/// Converged counter values equal their starting point plus every committed delta.
fn check_additive(cluster: &crate::txn::Cluster) -> Vec<String> {
    let mut sums: BTreeMap<(RowKey, String), i64> = BTreeMap::new();
    for rec in cluster.log() {
        for (k, d) in &rec.additive {
            *sums.entry(k.clone()).or_default() += d;
        }
    }
    let catalog = cluster.catalog();
    let mut out = Vec::new();
    for r in cluster.replicas() {
        for ((key, col), sum) in &sums {
            let base = catalog
                .table(&key.table)
                .and_then(|t| t.column(col))
                .and_then(|c| c.counter_bound())
                .map_or(0, |b| b.limit);
            let actual = r.store().row(key).map_or(0, |row| row.counter_value(col));
            if actual != base + sum {
                out.push(format!("{}: {key}.{col} = {actual}, committed deltas give {}", r.id, base + sum));
            }
        }
    }
    out
}

/// Greedy one-event-at-a-time removal that keeps the schedule failing.
pub fn minimize(catalog: &Catalog, config: &FuzzConfig, events: &[Event]) -> Vec<Event> {
    let mut current = events.to_vec();
    let mut i = 0;
    while i < current.len() {
        let mut candidate = current.clone();
        candidate.remove(i);
        if check_schedule(catalog, config, &candidate).failed() {
            current = candidate;
        } else {
            i += 1;
        }
    }
    current
}

pub fn fuzz(seed: u64, config: &FuzzConfig) -> Report {
    let catalog = fuzz_catalog();
    let events = generate(seed, config, &catalog);
    let check = check_schedule(&catalog, config, &events);
    let mut report = Report::new(format!(
        "fuzz seed={seed} replicas={} events={}{}",
        config.replicas,
        config.events,
        if config.forced_partition { " partition" } else { "" }
    ));
    for name in ALL_CHECKS {
        if name == CHECK_MINORITY && !config.forced_partition {
            continue;
        }
        let found = check.violations.get(name).cloned().unwrap_or_default();
        report.push(name, 0, "no violations", if found.is_empty() {
            "no violations".to_string()
        } else {
            found.join("; ")
        }, found.is_empty());
    }
    let failures: Vec<String> = check
        .failures
        .iter()
        .map(|(k, n)| format!("{k}={n}"))
        .collect();
    report.notes.push(format!(
        "records={} aborted: {}",
        check.commits,
        if failures.is_empty() { "none".into() } else { failures.join(" ") }
    ));
    if config.forced_partition {
        report
            .notes
            .push(format!("minority writes refused by locks: {}", check.minority_refusals));
    }
    if check.failed() {
        let trace = if config.minimize {
            minimize(&catalog, config, &events)
        } else {
            events
        };
        report.notes.push(format!("seed {seed}: failing trace ({} events)", trace.len()));
        for e in &trace {
            report.notes.push(format!("  {e}"));
        }
    }
    report
}

/// Runs the first `prefix` events of a seed's schedule, then enumerates the
/// delivery orders of the records pending at `observer`.
pub fn prefix_orders(seed: u64, config: &FuzzConfig, prefix: usize, observer: ReplicaId) -> OrderReport {
    let catalog = fuzz_catalog();
    let events = generate(seed, config, &catalog);
    let mut runner = Runner::new(catalog, &replica_ids(config.replicas), DEFAULT_LOCK_TIMEOUT).lenient();
    for (i, e) in events.iter().take(prefix).enumerate() {
        // Keep the observer's queue untouched so several records are pending.
        let skip = match e {
            Event::Deliver { to, .. } => to.contains(&observer),
            Event::DeliverAll => true,
            _ => false,
        };
        if !skip {
            runner.apply(i + 1, e).expect("lenient runs do not fail");
        }
    }
    enumerate_orders(runner.cluster(), observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cat = fuzz_catalog();
        let cfg = FuzzConfig::default();
        assert_eq!(generate(7, &cfg, &cat), generate(7, &cfg, &cat));
        assert_ne!(generate(7, &cfg, &cat), generate(8, &cfg, &cat));
        assert_eq!(generate(7, &cfg, &cat).len(), cfg.events);
    }
}

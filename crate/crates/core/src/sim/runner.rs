use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::crdt::ReplicaId;
use crate::engine::{is_visible, render_cells, RowKey, StatementOutcome};
use crate::schema::Catalog;
use crate::txn::{Cluster, TxId, TxStatus};

use super::invariants::{check_causal_delivery, check_cluster, check_convergence};
use super::orders::enumerate_orders;
use super::scenario::{Assertion, Event, Outcome, Scenario, ScenarioError, StepKind};
use super::{AssertionResult, Report};

impl fmt::Display for Event {
    /// Script form of the event.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Begin { tx, replica } => write!(f, "begin {tx} @{replica}"),
            Event::Stmt { tx, sql, .. } => write!(f, "stmt {tx}: {sql}"),
            Event::Commit { tx } => write!(f, "commit {tx}"),
            Event::Abort { tx } => write!(f, "abort {tx}"),
            Event::Deliver { tx, to } => {
                write!(f, "deliver {tx}")?;
                for r in to {
                    write!(f, " @{r}")?;
                }
                Ok(())
            }
            Event::DeliverAll => f.write_str("deliver_all"),
            Event::Partition(groups) => {
                f.write_str("partition ")?;
                for (i, g) in groups.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    let names: Vec<String> = g.iter().map(ToString::to_string).collect();
                    f.write_str(&names.join(" "))?;
                }
                Ok(())
            }
            Event::Heal => f.write_str("heal"),
            Event::Advance(n) => write!(f, "advance {n}"),
            Event::Transfer {
                from,
                to,
                table,
                pk,
                column,
                amount,
            } => write!(f, "transfer @{from} -> @{to} {table} {pk} {column} {amount}"),
        }
    }
}

/// Executes events against a cluster and evaluates assertions.
#[derive(Clone, Debug)]
pub struct Runner {
    cluster: Cluster,
    txs: BTreeMap<String, TxId>,
    time: u64,
    lock_timeout: u64,
    /// Skip events that refer to unknown or unfinished transactions instead
    /// of failing; used for generated and minimized schedules.
    lenient: bool,
    failed_transfers: usize,
}

impl Runner {
    pub fn new(catalog: Catalog, replicas: &[ReplicaId], lock_timeout: u64) -> Self {
        Self {
            cluster: Cluster::new(catalog, replicas),
            txs: BTreeMap::new(),
            time: 0,
            lock_timeout,
            lenient: false,
            failed_transfers: 0,
        }
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self::new(s.catalog.clone(), &s.replicas, s.lock_timeout)
    }

    pub fn lenient(mut self) -> Self {
        self.lenient = true;
        self
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn cluster_mut(&mut self) -> &mut Cluster {
        &mut self.cluster
    }

    /// Simulated time: one unit per event plus explicit advances.
    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn lock_timeout(&self) -> u64 {
        self.lock_timeout
    }

    pub fn failed_transfers(&self) -> usize {
        self.failed_transfers
    }

    pub fn tx_id(&self, label: &str) -> Option<TxId> {
        self.txs.get(label).copied()
    }

    pub fn outcome(&self, label: &str) -> Option<Outcome> {
        let tx = self.cluster.transaction(*self.txs.get(label)?)?;
        Some(match tx.status() {
            TxStatus::Active => return None,
            TxStatus::Committed { .. } => Outcome::Committed,
            TxStatus::Aborted(None) => Outcome::Aborted,
            TxStatus::Aborted(Some(k)) => Outcome::Failed(k),
        })
    }

    /// Aborts every transaction still open.
    pub fn abort_all(&mut self) {
        let open: Vec<TxId> = self.cluster.active_transactions().map(|t| t.id).collect();
        for id in open {
            let _ = self.cluster.abort(id);
        }
    }

    fn lookup(&self, line: usize, label: &str) -> Result<Option<TxId>, ScenarioError> {
        match self.txs.get(label) {
            Some(&id) => Ok(Some(id)),
            None if self.lenient => Ok(None),
            None => Err(ScenarioError::new(line, format!("unknown transaction {label}"))),
        }
    }

    fn is_active(&self, id: TxId) -> bool {
        self.cluster.transaction(id).is_some_and(|t| t.is_active())
    }

    pub fn apply(&mut self, line: usize, event: &Event) -> Result<(), ScenarioError> {
        self.time += 1;
        match event {
            Event::Begin { tx, replica } => {
                if self.txs.contains_key(tx) {
                    if self.lenient {
                        return Ok(());
                    }
                    return Err(ScenarioError::new(line, format!("transaction {tx} begun twice")));
                }
                let id = self.cluster.begin(*replica);
                self.txs.insert(tx.clone(), id);
            }
            Event::Stmt { tx, stmt, .. } => {
                // A statement after a failure is ignored; the first error is the outcome.
                if let Some(id) = self.lookup(line, tx)? {
                    if self.is_active(id) {
                        let _ = self.cluster.execute(id, stmt);
                    }
                }
            }
            Event::Commit { tx } => {
                if let Some(id) = self.lookup(line, tx)? {
                    if self.is_active(id) {
                        let _ = self.cluster.commit(id);
                    }
                }
            }
            Event::Abort { tx } => {
                if let Some(id) = self.lookup(line, tx)? {
                    if self.is_active(id) {
                        let _ = self.cluster.abort(id);
                    }
                }
            }
            Event::Deliver { tx, to } => {
                let Some(id) = self.lookup(line, tx)? else {
                    return Ok(());
                };
                let status = self.cluster.transaction(id).map(|t| t.status());
                let Some(TxStatus::Committed { record }) = status else {
                    if self.lenient {
                        return Ok(());
                    }
                    return Err(ScenarioError::new(line, format!("{tx} has no committed record to deliver")));
                };
                for r in to {
                    self.cluster.deliver(*r, record);
                }
            }
            Event::DeliverAll => {
                self.cluster.deliver_all();
            }
            Event::Partition(groups) => self.cluster.partition(groups),
            Event::Heal => self.cluster.heal(),
            Event::Advance(n) => self.time += n,
            Event::Transfer {
                from,
                to,
                table,
                pk,
                column,
                amount,
            } => {
                let key = RowKey::new(table.clone(), pk.clone());
                if self.cluster.transfer_rights(*from, *to, &key, column, *amount).is_err() {
                    self.failed_transfers += 1;
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&mut self, line: usize, assertion: &Assertion) -> AssertionResult {
        let result = |name: String, expected: String, actual: String| AssertionResult {
            pass: expected == actual,
            name,
            line,
            expected,
            actual,
        };
        match assertion {
            Assertion::Converged => {
                let diffs = check_convergence(&self.cluster);
                result("converged".into(), "all replicas equal".into(), if diffs.is_empty() {
                    "all replicas equal".into()
                } else {
                    diffs.join("; ")
                })
            }
            Assertion::TableEquals { replica, table, rows } => {
                let catalog = self.cluster.catalog();
                let schema = catalog.table(table).expect("validated table");
                let actual = self.cluster.replica(*replica).store().dump_table(catalog, schema);
                result(
                    format!("table @{replica} {table}"),
                    show_rows(rows),
                    show_rows(&actual),
                )
            }
            Assertion::RowVisible {
                replica,
                table,
                pk,
                expected,
            } => {
                let store = self.cluster.replica(*replica).store();
                let key = RowKey::new(table.clone(), pk.clone());
                let (visible, cause) = match store.row(&key) {
                    Some(row) => {
                        let v = is_visible(row, self.cluster.catalog(), store);
                        (v.visible, v.cause.to_string())
                    }
                    None => (false, "absent".into()),
                };
                let mut r = result(format!("visible @{replica} {key}"), expected.to_string(), visible.to_string());
                if !r.pass {
                    r.actual = format!("{visible} ({cause})");
                }
                r
            }
            Assertion::TxOutcome { tx, expected } => {
                let actual = self.outcome(tx).map_or_else(|| "active".to_string(), |o| o.to_string());
                result(format!("outcome {tx}"), expected.to_string(), actual)
            }
            Assertion::FlagsEqual {
                replica,
                table,
                pk,
                flags,
            } => {
                let key = RowKey::new(table.clone(), pk.clone());
                let actual = self
                    .cluster
                    .replica(*replica)
                    .store()
                    .row(&key)
                    .map(|r| r.flags())
                    .unwrap_or_default();
                result(format!("flags @{replica} {key}"), show_flags(flags), show_flags(&actual))
            }
            Assertion::OrderIndependent { replica } => {
                let rep = enumerate_orders(&self.cluster, *replica);
                AssertionResult {
                    name: format!("order_independent @{replica}"),
                    line,
                    expected: "1 distinct state".into(),
                    actual: format!(
                        "{} distinct state(s) over {} causal of {} orders of {} records",
                        rep.distinct_states,
                        rep.causal,
                        rep.permutations,
                        rep.records.len()
                    ),
                    pass: rep.pass(),
                }
            }
            Assertion::Invariants => {
                let mut v = check_cluster(&self.cluster);
                v.extend(check_causal_delivery(&self.cluster));
                result("invariants".into(), "no violations".into(), if v.is_empty() {
                    "no violations".into()
                } else {
                    v.join("; ")
                })
            }
            Assertion::Query { replica, sql, rows } => {
                let actual = match self.cluster.query(*replica, sql) {
                    Ok(StatementOutcome::Selected(rs)) => {
                        show_rows(&rs.rows.iter().map(|r| render_cells(r)).collect::<Vec<_>>())
                    }
                    Ok(other) => format!("{other:?}"),
                    Err(e) => format!("error: {e}"),
                };
                result(format!("query @{replica} {sql}"), show_rows(rows), actual)
            }
            Assertion::LockMessages(n) => result(
                "lock_messages".into(),
                n.to_string(),
                self.cluster.locks().messages().to_string(),
            ),
        }
    }
}

fn show_rows(rows: &[String]) -> String {
    if rows.is_empty() {
        "empty".into()
    } else {
        rows.join("; ")
    }
}

fn show_flags(flags: &BTreeSet<crate::crdt::Flag>) -> String {
    let names: Vec<String> = flags.iter().map(ToString::to_string).collect();
    format!("{{{}}}", names.join(", "))
}

/// Runs a scenario to the end. Malformed event sequences are errors; failed
/// assertions are reported.
pub fn run(scenario: &Scenario) -> Result<Report, ScenarioError> {
    let (report, _) = run_with_state(scenario)?;
    Ok(report)
}

/// Like [`run`], also returning the final runner for inspection.
pub fn run_with_state(scenario: &Scenario) -> Result<(Report, Runner), ScenarioError> {
    let mut runner = Runner::for_scenario(scenario);
    let mut report = Report::new(&scenario.name);
    for step in &scenario.steps {
        match &step.kind {
            StepKind::Event(e) => runner.apply(step.line, e)?,
            StepKind::Assert(a) => report.results.push(runner.evaluate(step.line, a)),
        }
    }
    Ok((report, runner))
}

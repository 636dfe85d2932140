use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::crdt::{BoundDirection, BoundedCounter, CrdtError, Dot, EventStamp, ReplicaId, VersionVector};
use crate::engine::{
    self, ApplyCtx, CellOp, EngineError, ErrorKind, ExecContext, Row, RowKey, RowOps,
    StatementOutcome, Store,
};
use crate::schema::{parse_statement, Catalog, Modifier, Statement};

use super::{CommitRecord, LockId, LockManager, LockMode, Network, TxId};

/// Provisional sequence numbers used for a transaction's own effects in its
/// view; far above any real commit count.
const PROVISIONAL: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxStatus {
    Active,
    Committed { record: usize },
    /// Aborted by the client (`None`) or by a failed statement or commit.
    Aborted(Option<ErrorKind>),
}

#[derive(Clone, Debug)]
pub struct Transaction {
    pub id: TxId,
    pub origin: ReplicaId,
    pub snapshot: VersionVector,
    status: TxStatus,
    view: Store,
    ops: BTreeMap<RowKey, RowOps>,
    sequences: BTreeMap<String, i64>,
    locks: BTreeSet<LockId>,
    effects_applied: u64,
}

impl Transaction {
    pub fn status(&self) -> TxStatus {
        self.status
    }

    pub fn is_active(&self) -> bool {
        self.status == TxStatus::Active
    }

    /// Snapshot plus own buffered effects.
    pub fn view(&self) -> &Store {
        &self.view
    }

    pub fn buffered(&self) -> &BTreeMap<RowKey, RowOps> {
        &self.ops
    }

    pub fn locks(&self) -> &BTreeSet<LockId> {
        &self.locks
    }
}

#[derive(Clone, Debug)]
pub struct Replica {
    pub id: ReplicaId,
    clock: VersionVector,
    lamport: u64,
    store: Store,
    next_unique: u64,
    /// Escrow rights promised to active local transactions, per bounded cell.
    reservations: BTreeMap<(RowKey, String), BTreeMap<TxId, i64>>,
}

impl Replica {
    fn new(id: ReplicaId) -> Self {
        Self {
            id,
            clock: VersionVector::new(),
            lamport: 0,
            store: Store::new(),
            next_unique: 0,
            reservations: BTreeMap::new(),
        }
    }

    pub fn clock(&self) -> &VersionVector {
        &self.clock
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Site-prefixed identifier: `<replica>-<n>`.
    pub fn next_unique_id(&mut self) -> String {
        self.next_unique += 1;
        format!("{}-{}", self.id, self.next_unique)
    }

    fn drop_reservations(&mut self, tx: TxId) {
        self.reservations.retain(|_, slot| {
            slot.remove(&tx);
            !slot.is_empty()
        });
    }
}

/// All replicas, the network between them, the lock manager and the log of
/// commit records.
#[derive(Clone, Debug)]
pub struct Cluster {
    catalog: Arc<Catalog>,
    ids: Vec<ReplicaId>,
    replicas: BTreeMap<ReplicaId, Replica>,
    locks: LockManager,
    network: Network,
    txs: BTreeMap<TxId, Transaction>,
    log: Vec<CommitRecord>,
    in_transit: BTreeMap<ReplicaId, BTreeSet<usize>>,
    arrived: BTreeMap<ReplicaId, BTreeSet<usize>>,
    applied: Vec<(ReplicaId, usize)>,
    next_tx: u64,
}

fn escrow_error(table: &str, column: &str, err: CrdtError) -> EngineError {
    EngineError::CheckViolation {
        table: table.to_string(),
        column: column.to_string(),
        detail: err.to_string(),
        retryable: matches!(err, CrdtError::InsufficientRights { .. }),
    }
}

impl Cluster {
    /// Lock coordination goes through the lowest replica id.
    pub fn new(catalog: Catalog, replicas: &[ReplicaId]) -> Self {
        let mut ids = replicas.to_vec();
        ids.sort();
        ids.dedup();
        assert!(!ids.is_empty(), "a cluster needs at least one replica");
        Self {
            catalog: Arc::new(catalog),
            replicas: ids.iter().map(|&r| (r, Replica::new(r))).collect(),
            locks: LockManager::new(ids[0]),
            network: Network::new(&ids),
            txs: BTreeMap::new(),
            log: Vec::new(),
            in_transit: ids.iter().map(|&r| (r, BTreeSet::new())).collect(),
            arrived: ids.iter().map(|&r| (r, BTreeSet::new())).collect(),
            applied: Vec::new(),
            next_tx: 0,
            ids,
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn replica_ids(&self) -> &[ReplicaId] {
        &self.ids
    }

    pub fn replica(&self, id: ReplicaId) -> &Replica {
        self.replicas
            .get(&id)
            .unwrap_or_else(|| panic!("unknown replica {id}"))
    }

    pub fn replica_mut(&mut self, id: ReplicaId) -> &mut Replica {
        self.replicas
            .get_mut(&id)
            .unwrap_or_else(|| panic!("unknown replica {id}"))
    }

    pub fn replicas(&self) -> impl Iterator<Item = &Replica> {
        self.replicas.values()
    }

    pub fn locks(&self) -> &LockManager {
        &self.locks
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn log(&self) -> &[CommitRecord] {
        &self.log
    }

    /// Every (replica, record) application in order, commits at the origin included.
    pub fn applied_order(&self) -> &[(ReplicaId, usize)] {
        &self.applied
    }

    pub fn transaction(&self, id: TxId) -> Option<&Transaction> {
        self.txs.get(&id)
    }

    pub fn active_transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.txs.values().filter(|t| t.is_active())
    }

    pub fn partition(&mut self, groups: &[Vec<ReplicaId>]) {
        self.network.partition(groups);
    }

    pub fn heal(&mut self) {
        self.network.heal();
    }

    pub fn begin(&mut self, replica: ReplicaId) -> TxId {
        self.next_tx += 1;
        let id = TxId(self.next_tx);
        let rep = self.replica(replica);
        let tx = Transaction {
            id,
            origin: replica,
            snapshot: rep.clock.clone(),
            status: TxStatus::Active,
            view: rep.store.clone(),
            ops: BTreeMap::new(),
            sequences: BTreeMap::new(),
            locks: BTreeSet::new(),
            effects_applied: 0,
        };
        self.txs.insert(id, tx);
        id
    }

    fn check_active(&self, id: TxId) -> Result<(), EngineError> {
        match self.txs.get(&id) {
            Some(t) if t.is_active() => Ok(()),
            _ => Err(EngineError::TransactionNotActive(id.to_string())),
        }
    }

    /// Runs `f` with the transaction's execution context. Any error aborts
    /// the transaction.
    fn with_exec<T>(
        &mut self,
        id: TxId,
        f: impl FnOnce(&mut Exec<'_>) -> Result<T, EngineError>,
    ) -> Result<T, EngineError> {
        self.check_active(id)?;
        let mut tx = self.txs.remove(&id).expect("checked above");
        let result = {
            let replica = self.replicas.get_mut(&tx.origin).expect("origin replica");
            let mut exec = Exec {
                catalog: &self.catalog,
                ids: &self.ids,
                replica,
                locks: &mut self.locks,
                network: &self.network,
                tx: &mut tx,
            };
            f(&mut exec)
        };
        self.txs.insert(id, tx);
        if let Err(e) = &result {
            self.abort_with(id, Some(e.kind()));
        }
        result
    }

    pub fn execute(&mut self, id: TxId, stmt: &Statement) -> Result<StatementOutcome, EngineError> {
        self.with_exec(id, |exec| engine::execute(exec, stmt))
    }

    pub fn execute_sql(&mut self, id: TxId, sql: &str) -> Result<StatementOutcome, EngineError> {
        self.check_active(id)?;
        match parse_statement(sql, &self.catalog) {
            Ok(stmt) => self.execute(id, &stmt),
            Err(e) => {
                self.abort_with(id, Some(ErrorKind::ParseError));
                Err(e.into())
            }
        }
    }

    /// Runs one statement in a throwaway transaction at `replica`.
    pub fn query(&mut self, replica: ReplicaId, sql: &str) -> Result<StatementOutcome, EngineError> {
        let id = self.begin(replica);
        let out = self.execute_sql(id, sql);
        if self.check_active(id).is_ok() {
            self.abort_with(id, None);
        }
        self.txs.remove(&id);
        out
    }

    pub fn abort(&mut self, id: TxId) -> Result<(), EngineError> {
        self.check_active(id)?;
        self.abort_with(id, None);
        Ok(())
    }

    fn abort_with(&mut self, id: TxId, cause: Option<ErrorKind>) {
        let Some(tx) = self.txs.get_mut(&id) else {
            return;
        };
        if !tx.is_active() {
            return;
        }
        tx.status = TxStatus::Aborted(cause);
        self.locks.release(id, &tx.locks, None);
        tx.view = Store::new();
        tx.ops.clear();
        if let Some(r) = self.replicas.get_mut(&tx.origin) {
            r.drop_reservations(id);
        }
    }

    /// Non-additive checks against the values about to commit.
    fn revalidate(&self, tx: &Transaction) -> Result<(), EngineError> {
        for (key, ops) in &tx.ops {
            let Some(schema) = self.catalog.table(&key.table) else {
                continue;
            };
            for (col, op) in &ops.cells {
                let (CellOp::Assign(v), Some(def)) = (op, schema.column(col)) else {
                    continue;
                };
                if def.modifier == Modifier::Additive {
                    continue;
                }
                if let Some(cond) = def.check() {
                    if !engine::check_eval(cond, v)? {
                        return Err(EngineError::CheckViolation {
                            table: schema.name.clone(),
                            column: col.clone(),
                            detail: format!("{v} fails {cond}"),
                            retryable: false,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies the buffered effects at the origin as one event and queues the
    /// record for every other replica. Returns the record's log index.
    pub fn commit(&mut self, id: TxId) -> Result<usize, EngineError> {
        self.check_active(id)?;
        if let Err(e) = self.revalidate(&self.txs[&id]) {
            self.abort_with(id, Some(e.kind()));
            return Err(e);
        }
        let tx = self.txs.get_mut(&id).expect("checked above");
        let origin = tx.origin;
        let replica = self.replicas.get_mut(&origin).expect("origin replica");
        let deps = replica.clock.clone();
        let dot = Dot::new(origin, deps.get(origin) + 1);
        let lamport = replica.lamport + 1;
        let ctx = ApplyCtx {
            origin,
            dot,
            stamp: EventStamp::new(lamport, origin),
            observed: &tx.snapshot,
            replicas: &self.ids,
            provisional: false,
        };
        let mut rows = Vec::with_capacity(tx.ops.len());
        let mut failure = None;
        for (key, ops) in &tx.ops {
            let schema = self.catalog.table(&key.table).expect("row of a known table");
            let mut row = replica
                .store
                .row(key)
                .cloned()
                .unwrap_or_else(|| Row::new(key.clone()));
            if let Err(e) = row.apply(ops, schema, &ctx) {
                let col = ops.cells.keys().next().cloned().unwrap_or_default();
                failure = Some(escrow_error(&key.table, &col, e));
                break;
            }
            rows.push(row);
        }
        if let Some(e) = failure {
            self.abort_with(id, Some(e.kind()));
            return Err(e);
        }
        for row in &rows {
            replica.store.put(row.clone());
        }
        for (name, &v) in &tx.sequences {
            replica.store.merge_sequence(name, v);
        }
        replica.clock.add_dot(dot);
        replica.lamport = lamport;
        replica.drop_reservations(id);
        let commit_clock = replica.clock.clone();

        let mut additive = BTreeMap::new();
        for (key, ops) in &tx.ops {
            let schema = self.catalog.table(&key.table).expect("row of a known table");
            for (col, op) in &ops.cells {
                let d = match op {
                    CellOp::Add(d) => *d,
                    CellOp::Escrow { grant, delta, .. } => {
                        let bound = schema.column(col).and_then(|c| c.counter_bound());
                        let up = bound.is_some_and(|b| b.direction == BoundDirection::Upper);
                        delta + if up { -grant } else { *grant }
                    }
                    CellOp::Assign(_) => continue,
                };
                additive.insert((key.clone(), col.clone()), d);
            }
        }
        let idx = self.log.len();
        self.log.push(CommitRecord {
            tx: id,
            origin,
            dot,
            deps,
            lamport,
            rows,
            sequences: tx.sequences.clone(),
            additive,
        });
        self.applied.push((origin, idx));
        for (r, q) in self.in_transit.iter_mut() {
            if *r != origin {
                q.insert(idx);
            }
        }
        self.locks.release(id, &tx.locks, Some(&commit_clock));
        tx.status = TxStatus::Committed { record: idx };
        tx.view = Store::new();
        Ok(idx)
    }

    /// Moves record `idx` to `replica` if the network allows, then applies
    /// whatever has become causally ready. Returns the number applied.
    pub fn deliver(&mut self, replica: ReplicaId, idx: usize) -> usize {
        let Some(rec) = self.log.get(idx) else {
            return 0;
        };
        let origin = rec.origin;
        if self.network.reachable(origin, replica) && self.in_transit.get_mut(&replica).is_some_and(|q| q.remove(&idx)) {
            self.arrived.get_mut(&replica).expect("replica").insert(idx);
        }
        self.drain(replica)
    }

    /// Delivers everything the network allows, everywhere.
    pub fn deliver_all(&mut self) -> usize {
        let mut total = 0;
        loop {
            let mut progress = 0;
            for r in self.ids.clone() {
                let movable: Vec<usize> = self.in_transit[&r]
                    .iter()
                    .copied()
                    .filter(|&i| self.network.reachable(self.log[i].origin, r))
                    .collect();
                for i in &movable {
                    self.in_transit.get_mut(&r).expect("replica").remove(i);
                    self.arrived.get_mut(&r).expect("replica").insert(*i);
                }
                progress += movable.len() + self.drain(r);
            }
            total += progress;
            if progress == 0 {
                return total;
            }
        }
    }

    /// Records not yet applied at `replica`.
    pub fn pending(&self, replica: ReplicaId) -> usize {
        self.in_transit[&replica].len() + self.arrived[&replica].len()
    }

    pub fn queues_empty(&self) -> bool {
        self.ids.iter().all(|&r| self.pending(r) == 0)
    }

    /// Record indices not yet applied at `replica`, in log order.
    pub fn pending_records(&self, replica: ReplicaId) -> Vec<usize> {
        self.in_transit[&replica]
            .iter()
            .chain(self.arrived[&replica].iter())
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn is_applied(&self, replica: ReplicaId, idx: usize) -> bool {
        self.replica(replica).clock.contains(self.log[idx].dot)
    }

    fn drain(&mut self, replica: ReplicaId) -> usize {
        let mut n = 0;
        loop {
            let clock = &self.replicas[&replica].clock;
            let ready = self.arrived[&replica]
                .iter()
                .copied()
                .find(|&i| self.log[i].deps.le(clock));
            let Some(i) = ready else {
                return n;
            };
            self.arrived.get_mut(&replica).expect("replica").remove(&i);
            if !self.replicas[&replica].clock.contains(self.log[i].dot) {
                self.apply_record(replica, i);
                n += 1;
            }
        }
    }

    fn apply_record(&mut self, replica: ReplicaId, idx: usize) {
        let rec = &self.log[idx];
        let rep = self.replicas.get_mut(&replica).expect("replica");
        for row in &rec.rows {
            rep.store
                .merge_row(row)
                .expect("rows of one table always hold cells of the same kinds");
        }
        for (name, &v) in &rec.sequences {
            rep.store.merge_sequence(name, v);
        }
        rep.clock.add_dot(rec.dot);
        rep.lamport = rep.lamport.max(rec.lamport);
        self.applied.push((replica, idx));
    }

    /// Hands `amount` escrow rights on a bounded cell from `from` to `to`,
    /// committed as a transaction at `from`.
    pub fn transfer_rights(
        &mut self,
        from: ReplicaId,
        to: ReplicaId,
        key: &RowKey,
        column: &str,
        amount: i64,
    ) -> Result<usize, EngineError> {
        let has_cell = self
            .replica(from)
            .store
            .row(key)
            .is_some_and(|r| r.bounded(column).is_some());
        if !has_cell {
            return Err(EngineError::RowNotFound {
                table: key.table.clone(),
            });
        }
        if amount <= 0 {
            return Err(EngineError::TypeMismatch {
                column: column.to_string(),
                detail: "transfer amount must be positive".into(),
            });
        }
        let id = self.begin(from);
        let mut ops = RowOps::default();
        ops.cells.insert(
            column.to_string(),
            CellOp::Escrow {
                grant: 0,
                delta: 0,
                transfers: [(to, amount)].into_iter().collect(),
            },
        );
        self.with_exec(id, |exec| exec.buffer(key, ops))?;
        self.commit(id)
    }
}

struct Exec<'a> {
    catalog: &'a Arc<Catalog>,
    ids: &'a [ReplicaId],
    replica: &'a mut Replica,
    locks: &'a mut LockManager,
    network: &'a Network,
    tx: &'a mut Transaction,
}

impl Exec<'_> {
    /// Reserves the rights the transaction's cumulative escrow effect on one
    /// cell needs, against live state at the origin.
    fn reserve(&mut self, key: &RowKey, column: &str, op: &CellOp) -> Result<(), EngineError> {
        let schema = self.catalog.table(&key.table).expect("row of a known table");
        let bound = schema
            .column(column)
            .and_then(|d| d.counter_bound())
            .expect("escrow op on a bounded column");
        let mut total = self
            .tx
            .ops
            .get(key)
            .and_then(|o| o.cells.get(column))
            .cloned()
            .unwrap_or_else(|| CellOp::escrow(0, 0));
        total.fold(op.clone());
        let CellOp::Escrow {
            grant,
            delta,
            transfers,
        } = total
        else {
            unreachable!("escrow ops fold into escrow ops")
        };
        let origin = self.tx.origin;
        let mut live = self
            .replica
            .store
            .row(key)
            .and_then(|r| r.bounded(column))
            .cloned()
            .unwrap_or_else(|| BoundedCounter::new(bound));
        live.grant_headroom(origin, grant, self.ids)
            .map_err(|e| escrow_error(&key.table, column, e))?;
        let need = bound.consumption(delta) + transfers.values().sum::<i64>();
        let slot = self
            .replica
            .reservations
            .entry((key.clone(), column.to_string()))
            .or_default();
        let others: i64 = slot
            .iter()
            .filter(|(t, _)| **t != self.tx.id)
            .map(|(_, v)| *v)
            .sum();
        let available = live.free(origin) - others;
        if need > available {
            return Err(escrow_error(
                &key.table,
                column,
                CrdtError::InsufficientRights {
                    replica: origin,
                    requested: need as i128,
                    available: available as i128,
                },
            ));
        }
        slot.insert(self.tx.id, need);
        Ok(())
    }
}

impl ExecContext for Exec<'_> {
    fn catalog(&self) -> Arc<Catalog> {
        Arc::clone(self.catalog)
    }

    fn origin(&self) -> ReplicaId {
        self.tx.origin
    }

    fn view(&self) -> &Store {
        &self.tx.view
    }

    fn acquire(&mut self, locks: &BTreeMap<LockId, LockMode>) -> Result<(), EngineError> {
        for (id, &mode) in locks {
            self.locks
                .acquire(self.tx.id, self.tx.origin, &self.tx.snapshot, id, mode, self.network)
                .map_err(|reason| EngineError::LockUnavailable {
                    lock: id.clone(),
                    reason,
                })?;
            self.tx.locks.insert(id.clone());
        }
        Ok(())
    }

    fn buffer(&mut self, key: &RowKey, ops: RowOps) -> Result<(), EngineError> {
        for (col, op) in &ops.cells {
            if matches!(op, CellOp::Escrow { .. }) {
                self.reserve(key, col, op)?;
            }
        }
        let schema = self.catalog.table(&key.table).expect("row of a known table");
        let origin = self.tx.origin;
        self.tx.effects_applied += 1;
        let seq = PROVISIONAL + self.tx.effects_applied;
        let mut observed = self.tx.snapshot.clone();
        observed.set(origin, seq - 1);
        let ctx = ApplyCtx {
            origin,
            dot: Dot::new(origin, seq),
            stamp: EventStamp::new(seq, origin),
            observed: &observed,
            replicas: self.ids,
            provisional: true,
        };
        self.tx
            .view
            .row_mut(key)
            .apply(&ops, schema, &ctx)
            .map_err(|e| escrow_error(&key.table, "", e))?;
        self.tx.ops.entry(key.clone()).or_default().fold(ops);
        Ok(())
    }

    fn unique_id(&mut self) -> String {
        self.replica.next_unique_id()
    }

    fn next_sequential_id(&mut self, sequence: &str) -> Result<i64, EngineError> {
        let lock = [(LockId::Sequence(sequence.to_string()), LockMode::Exclusive)]
            .into_iter()
            .collect();
        self.acquire(&lock)?;
        let v = self.tx.view.sequence(sequence) + 1;
        self.tx.view.merge_sequence(sequence, v);
        self.tx.sequences.insert(sequence.to_string(), v);
        Ok(v)
    }
}

//! `.aqlsim` scenario scripts.
//!
//! ```text
//! -- comment
//! replicas r1 r2 r3
//! lock_timeout 50
//! schema {
//!   CREATE UPDATE_WINS TABLE Artists(Name VARCHAR PRIMARY KEY);
//! }
//! begin t1 @r1
//! stmt t1: DELETE FROM Artists WHERE Name = 'Sam'
//! commit t1
//! deliver t1 @r2 @r3
//! assert table @r2 Artists = 'Sam'
//! ```
//!
//! Assertions are evaluated where they appear.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::crdt::{Flag, ReplicaId, Scalar};
use crate::engine::ErrorKind;
use crate::schema::{parse_schema, parse_statement, Catalog, Statement};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl ScenarioError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Begin { tx: String, replica: ReplicaId },
    Stmt { tx: String, sql: String, stmt: Statement },
    Commit { tx: String },
    Abort { tx: String },
    /// Delivers the record of a committed transaction to the listed replicas.
    Deliver { tx: String, to: Vec<ReplicaId> },
    DeliverAll,
    Partition(Vec<Vec<ReplicaId>>),
    Heal,
    Advance(u64),
    /// Hands escrow rights on a bounded cell between replicas.
    Transfer {
        from: ReplicaId,
        to: ReplicaId,
        table: String,
        pk: Scalar,
        column: String,
        amount: i64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Committed,
    Aborted,
    Failed(ErrorKind),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Committed => f.write_str("committed"),
            Outcome::Aborted => f.write_str("aborted"),
            Outcome::Failed(k) => k.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assertion {
    Converged,
    /// Canonical rows of a table; each row is the comma-separated cell list.
    TableEquals {
        replica: ReplicaId,
        table: String,
        rows: Vec<String>,
    },
    RowVisible {
        replica: ReplicaId,
        table: String,
        pk: Scalar,
        expected: bool,
    },
    TxOutcome { tx: String, expected: Outcome },
    FlagsEqual {
        replica: ReplicaId,
        table: String,
        pk: Scalar,
        flags: BTreeSet<Flag>,
    },
    /// Every causal order of the records pending at the replica gives the same state.
    OrderIndependent { replica: ReplicaId },
    /// Lock safety, referential integrity and checks hold right now.
    Invariants,
    /// Rows returned by a query at the replica's current state.
    Query {
        replica: ReplicaId,
        sql: String,
        rows: Vec<String>,
    },
    /// Total messages exchanged with the lock coordinator.
    LockMessages(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepKind {
    Event(Event),
    Assert(Assertion),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub line: usize,
    pub kind: StepKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub schema_source: String,
    pub catalog: Catalog,
    pub replicas: Vec<ReplicaId>,
    pub lock_timeout: u64,
    pub steps: Vec<Step>,
}

pub const DEFAULT_LOCK_TIMEOUT: u64 = 50;

impl Scenario {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.steps.iter().filter_map(|s| match &s.kind {
            StepKind::Event(e) => Some(e),
            StepKind::Assert(_) => None,
        })
    }

    pub fn assertions(&self) -> impl Iterator<Item = &Assertion> {
        self.steps.iter().filter_map(|s| match &s.kind {
            StepKind::Assert(a) => Some(a),
            StepKind::Event(_) => None,
        })
    }
}

/// Reads a scenario file; `schema_file` paths are relative to its directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::new(0, format!("cannot read {}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_scenario(&name, &text, path.parent())
}

pub fn parse_scenario(name: &str, text: &str, base: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut schema_source = String::new();
    let mut schema_line = 0;
    let mut replicas = Vec::new();
    let mut lock_timeout = DEFAULT_LOCK_TIMEOUT;
    let mut raw_steps = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let line = strip_comment(lines[i]).trim();
        i += 1;
        if line.is_empty() {
            continue;
        }
        let (head, rest) = split_word(line);
        match head {
            "schema" => {
                if rest.trim() != "{" {
                    return Err(ScenarioError::new(lineno, "expected `schema {`"));
                }
                schema_line = lineno + 1;
                let mut closed = false;
                while i < lines.len() {
                    let l = lines[i];
                    i += 1;
                    if l.trim() == "}" {
                        closed = true;
                        break;
                    }
                    schema_source.push_str(l);
                    schema_source.push('\n');
                }
                if !closed {
                    return Err(ScenarioError::new(lineno, "unterminated schema block"));
                }
            }
            "schema_file" => {
                let p = Path::new(rest.trim());
                let full = base.map_or_else(|| p.to_path_buf(), |b| b.join(p));
                schema_source = std::fs::read_to_string(&full).map_err(|e| {
                    ScenarioError::new(lineno, format!("cannot read {}: {e}", full.display()))
                })?;
                schema_line = 1;
            }
            "replicas" => {
                for w in rest.split_whitespace() {
                    replicas.push(replica(lineno, w)?);
                }
            }
            "lock_timeout" => {
                lock_timeout = rest
                    .trim()
                    .parse()
                    .map_err(|_| ScenarioError::new(lineno, "lock_timeout expects an integer"))?;
            }
            _ => raw_steps.push((lineno, line.to_string())),
        }
    }
    if replicas.is_empty() {
        replicas = vec![ReplicaId(1), ReplicaId(2), ReplicaId(3)];
    }
    let catalog = parse_schema(&schema_source).map_err(|e| {
        let pos = e.position();
        ScenarioError::new(schema_line + pos.line - 1, format!("schema: {e}"))
    })?;
    let declared: BTreeSet<ReplicaId> = replicas.iter().copied().collect();
    let mut steps = Vec::new();
    for (lineno, line) in raw_steps {
        let kind = parse_step(lineno, &line, &catalog)?;
        for r in step_replicas(&kind) {
            if !declared.contains(&r) {
                return Err(ScenarioError::new(lineno, format!("undeclared replica {r}")));
            }
        }
        steps.push(Step { line: lineno, kind });
    }
    let scenario = Scenario {
        name: name.to_string(),
        schema_source,
        catalog,
        replicas,
        lock_timeout,
        steps,
    };
    check_labels(&scenario)?;
    Ok(scenario)
}

fn strip_comment(line: &str) -> &str {
    // `--` outside a quoted string starts a comment.
    let mut in_str = false;
    let bytes = line.as_bytes();
    for i in 0..bytes.len() {
        match bytes[i] {
            b'\'' => in_str = !in_str,
            b'-' if !in_str && bytes.get(i + 1) == Some(&b'-') => return &line[..i],
            _ => {}
        }
    }
    line
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, ""),
    }
}

fn replica(line: usize, w: &str) -> Result<ReplicaId, ScenarioError> {
    w.parse().map_err(|e| ScenarioError::new(line, format!("{e}")))
}

fn label(line: usize, w: &str) -> Result<String, ScenarioError> {
    if w.is_empty() || !w.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(ScenarioError::new(line, format!("bad transaction label `{w}`")));
    }
    Ok(w.to_string())
}

fn int(line: usize, w: &str) -> Result<i64, ScenarioError> {
    w.trim()
        .parse()
        .map_err(|_| ScenarioError::new(line, format!("expected an integer, found `{w}`")))
}

/// Parses one SQL-style literal: `'text'`, integer, TRUE or FALSE.
fn literal(line: usize, w: &str) -> Result<Scalar, ScenarioError> {
    let w = w.trim();
    if let Some(inner) = w.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')) {
        return Ok(Scalar::Str(inner.replace("''", "'")));
    }
    if w.eq_ignore_ascii_case("true") {
        return Ok(Scalar::Bool(true));
    }
    if w.eq_ignore_ascii_case("false") {
        return Ok(Scalar::Bool(false));
    }
    w.parse::<i64>()
        .map(Scalar::Int)
        .map_err(|_| ScenarioError::new(line, format!("expected a literal, found `{w}`")))
}

/// Splits at `sep` outside quotes and braces.
fn split_top(s: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_str = false;
    let mut depth = 0usize;
    for c in s.chars() {
        match c {
            '\'' => in_str = !in_str,
            '{' if !in_str => depth += 1,
            '}' if !in_str => depth = depth.saturating_sub(1),
            _ => {}
        }
        if c == sep && !in_str && depth == 0 {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out
}

/// Normalizes an expected row to the canonical `a, b, c` form.
pub fn normalize_row(row: &str) -> String {
    split_top(row, ',')
        .iter()
        .map(|c| c.trim().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn rows(spec: &str) -> Vec<String> {
    let spec = spec.trim();
    if spec.is_empty() || spec.eq_ignore_ascii_case("empty") {
        return Vec::new();
    }
    split_top(spec, ';')
        .iter()
        .map(|r| normalize_row(r))
        .filter(|r| !r.is_empty())
        .collect()
}

/// `<pk literal> <rest>`; the literal may be a quoted string with spaces.
fn pk_and_rest(line: usize, s: &str) -> Result<(Scalar, String), ScenarioError> {
    let s = s.trim_start();
    let end = if s.starts_with('\'') {
        let mut i = 1;
        let b = s.as_bytes();
        loop {
            if i >= b.len() {
                return Err(ScenarioError::new(line, "unterminated string"));
            }
            if b[i] == b'\'' {
                if b.get(i + 1) == Some(&b'\'') {
                    i += 2;
                    continue;
                }
                break i + 1;
            }
            i += 1;
        }
    } else {
        s.find(char::is_whitespace).unwrap_or(s.len())
    };
    Ok((literal(line, &s[..end])?, s[end..].trim().to_string()))
}

fn parse_step(line: usize, text: &str, catalog: &Catalog) -> Result<StepKind, ScenarioError> {
    let (head, rest) = split_word(text);
    let words: Vec<&str> = rest.split_whitespace().collect();
    let err = |m: &str| ScenarioError::new(line, m.to_string());
    let event = match head {
        "begin" => {
            if words.len() != 2 {
                return Err(err("usage: begin <tx> @<replica>"));
            }
            Event::Begin {
                tx: label(line, words[0])?,
                replica: replica(line, words[1])?,
            }
        }
        "stmt" => {
            let (tx, sql) = rest
                .split_once(':')
                .ok_or_else(|| err("usage: stmt <tx>: <statement>"))?;
            let sql = sql.trim().trim_end_matches(';').trim().to_string();
            let stmt = parse_statement(&sql, catalog)
                .map_err(|e| ScenarioError::new(line, format!("statement: {e}")))?;
            Event::Stmt {
                tx: label(line, tx.trim())?,
                sql,
                stmt,
            }
        }
        "commit" | "abort" if words.len() == 1 => {
            let tx = label(line, words[0])?;
            if head == "commit" {
                Event::Commit { tx }
            } else {
                Event::Abort { tx }
            }
        }
        "deliver" => {
            if words.len() < 2 {
                return Err(err("usage: deliver <tx> @<replica>..."));
            }
            Event::Deliver {
                tx: label(line, words[0])?,
                to: words[1..]
                    .iter()
                    .map(|w| replica(line, w))
                    .collect::<Result<_, _>>()?,
            }
        }
        "deliver_all" if words.is_empty() => Event::DeliverAll,
        "heal" if words.is_empty() => Event::Heal,
        "partition" => {
            let groups = rest
                .split('|')
                .map(|g| g.split_whitespace().map(|w| replica(line, w)).collect())
                .collect::<Result<Vec<Vec<_>>, _>>()?;
            if groups.iter().any(Vec::is_empty) {
                return Err(err("usage: partition r1 | r2 r3"));
            }
            Event::Partition(groups)
        }
        "advance" if words.len() == 1 => Event::Advance(int(line, words[0])?.max(0) as u64),
        "transfer" => {
            // transfer @r1 -> @r2 <table> <pk> <column> <amount>
            let (route, tail) = rest
                .split_once("->")
                .ok_or_else(|| err("usage: transfer @r1 -> @r2 <table> <pk> <column> <amount>"))?;
            let from = replica(line, route.trim())?;
            let (to, tail) = split_word(tail);
            let to = replica(line, to)?;
            let (table, tail) = split_word(tail);
            let (pk, tail) = pk_and_rest(line, tail)?;
            let (column, amount) = split_word(&tail);
            Event::Transfer {
                from,
                to,
                table: table.to_string(),
                pk,
                column: column.to_string(),
                amount: int(line, amount)?,
            }
        }
        "assert" => return parse_assertion(line, rest, catalog).map(StepKind::Assert),
        _ => return Err(ScenarioError::new(line, format!("unknown directive `{text}`"))),
    };
    Ok(StepKind::Event(event))
}

fn parse_assertion(line: usize, text: &str, catalog: &Catalog) -> Result<Assertion, ScenarioError> {
    let (head, rest) = split_word(text);
    let err = |m: &str| ScenarioError::new(line, m.to_string());
    let table_name = |name: &str| -> Result<String, ScenarioError> {
        catalog
            .table(name)
            .map(|t| t.name.clone())
            .ok_or_else(|| ScenarioError::new(line, format!("unknown table {name}")))
    };
    Ok(match head {
        "converged" => Assertion::Converged,
        "invariants" => Assertion::Invariants,
        "table" => {
            let (lhs, rhs) = rest
                .split_once('=')
                .ok_or_else(|| err("usage: assert table @r <table> = row; row"))?;
            let words: Vec<&str> = lhs.split_whitespace().collect();
            if words.len() != 2 {
                return Err(err("usage: assert table @r <table> = row; row"));
            }
            Assertion::TableEquals {
                replica: replica(line, words[0])?,
                table: table_name(words[1])?,
                rows: rows(rhs),
            }
        }
        "visible" => {
            let (r, tail) = split_word(rest);
            let (t, tail) = split_word(tail);
            let (pk, expected) = pk_and_rest(line, tail)?;
            let expected = match expected.to_ascii_lowercase().as_str() {
                "true" => true,
                "false" => false,
                _ => return Err(err("usage: assert visible @r <table> <pk> true|false")),
            };
            Assertion::RowVisible {
                replica: replica(line, r)?,
                table: table_name(t)?,
                pk,
                expected,
            }
        }
        "outcome" => {
            let words: Vec<&str> = rest.split_whitespace().collect();
            if words.len() != 2 {
                return Err(err("usage: assert outcome <tx> committed|aborted|<ErrorKind>"));
            }
            let expected = match words[1] {
                "committed" => Outcome::Committed,
                "aborted" => Outcome::Aborted,
                k => Outcome::Failed(
                    ErrorKind::from_name(k)
                        .ok_or_else(|| ScenarioError::new(line, format!("unknown outcome `{k}`")))?,
                ),
            };
            Assertion::TxOutcome {
                tx: label(line, words[0])?,
                expected,
            }
        }
        "flags" => {
            let (lhs, rhs) = rest
                .split_once('=')
                .ok_or_else(|| err("usage: assert flags @r <table> <pk> = {I, D}"))?;
            let (r, tail) = split_word(lhs);
            let (t, tail) = split_word(tail);
            let (pk, extra) = pk_and_rest(line, tail)?;
            if !extra.is_empty() {
                return Err(err("usage: assert flags @r <table> <pk> = {I, D}"));
            }
            let inner = rhs
                .trim()
                .strip_prefix('{')
                .and_then(|s| s.strip_suffix('}'))
                .ok_or_else(|| err("flag set must be written {..}"))?;
            let mut flags = BTreeSet::new();
            for f in inner.split(',').map(str::trim).filter(|f| !f.is_empty()) {
                flags.insert(match f {
                    "I" => Flag::I,
                    "D" => Flag::D,
                    "T" => Flag::T,
                    _ => return Err(ScenarioError::new(line, format!("unknown flag `{f}`"))),
                });
            }
            Assertion::FlagsEqual {
                replica: replica(line, r)?,
                table: table_name(t)?,
                pk,
                flags,
            }
        }
        "order_independent" => Assertion::OrderIndependent {
            replica: replica(line, rest.trim())?,
        },
        "query" => {
            let (r, tail) = split_word(rest);
            let (sql, expected) = tail
                .rsplit_once(" = ")
                .ok_or_else(|| err("usage: assert query @r <select> = row; row"))?;
            let sql = sql.trim().to_string();
            match parse_statement(&sql, catalog) {
                Ok(Statement::Select { .. }) => {}
                Ok(_) => return Err(err("assert query takes a SELECT")),
                Err(e) => return Err(ScenarioError::new(line, format!("statement: {e}"))),
            }
            Assertion::Query {
                replica: replica(line, r)?,
                sql,
                rows: rows(expected),
            }
        }
        "lock_messages" => Assertion::LockMessages(int(line, rest)?.max(0) as u64),
        _ => return Err(ScenarioError::new(line, format!("unknown assertion `{text}`"))),
    })
}

fn step_replicas(kind: &StepKind) -> Vec<ReplicaId> {
    match kind {
        StepKind::Event(Event::Begin { replica, .. }) => vec![*replica],
        StepKind::Event(Event::Deliver { to, .. }) => to.clone(),
        StepKind::Event(Event::Partition(groups)) => groups.concat(),
        StepKind::Event(Event::Transfer { from, to, .. }) => vec![*from, *to],
        StepKind::Assert(
            Assertion::TableEquals { replica, .. }
            | Assertion::RowVisible { replica, .. }
            | Assertion::FlagsEqual { replica, .. }
            | Assertion::OrderIndependent { replica }
            | Assertion::Query { replica, .. },
        ) => vec![*replica],
        _ => Vec::new(),
    }
}

/// Transactions must be begun once, before any other use.
fn check_labels(s: &Scenario) -> Result<(), ScenarioError> {
    let mut begun = BTreeSet::new();
    for step in &s.steps {
        let used = match &step.kind {
            StepKind::Event(Event::Begin { tx, .. }) => {
                if !begun.insert(tx.clone()) {
                    return Err(ScenarioError::new(step.line, format!("transaction {tx} begun twice")));
                }
                continue;
            }
            StepKind::Event(
                Event::Stmt { tx, .. } | Event::Commit { tx } | Event::Abort { tx } | Event::Deliver { tx, .. },
            )
            | StepKind::Assert(Assertion::TxOutcome { tx, .. }) => tx,
            _ => continue,
        };
        if !begun.contains(used) {
            return Err(ScenarioError::new(step.line, format!("transaction {used} used before begin")));
        }
    }
    Ok(())
}

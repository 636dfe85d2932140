//! Recursive-descent parser for the DDL and DML dialect.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Position, Tok, Token};
use super::ParseError;
use crate::crdt::Scalar;

pub(crate) struct Parser<'s> {
    src: &'s str,
    toks: Vec<Token>,
    at: usize,
}

/// FK declarations are resolved against the catalog once the whole table is known.
pub(crate) struct PendingFk {
    column: String,
    datatype: DataType,
    fk: ForeignKey,
    pos: Position,
}

impl<'s> Parser<'s> {
    pub fn new(src: &'s str) -> Result<Self, ParseError> {
        Ok(Self {
            src,
            toks: tokenize(src)?,
            at: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.at + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn pos(&self) -> Position {
        Position::locate(self.src, self.toks[self.at].offset)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax<T>(&self, expected: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            expected: expected.into(),
            found: self.peek().to_string(),
        })
    }

    fn invalid<T>(pos: Position, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Validation {
            pos,
            message: message.into(),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.syntax(kw)
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.syntax(format!("`{sym}`"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Position), ParseError> {
        let pos = self.pos();
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok((s, pos))
            }
            _ => self.syntax(what),
        }
    }

    fn literal(&mut self) -> Result<Scalar, ParseError> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Scalar::Int(i))
            }
            Tok::Sym("-") => {
                if let Tok::Int(i) = self.peek_at(1).clone() {
                    self.bump();
                    self.bump();
                    Ok(Scalar::Int(-i))
                } else {
                    self.bump();
                    self.syntax("integer")
                }
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Scalar::Str(s))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("TRUE") => {
                self.bump();
                Ok(Scalar::Bool(true))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("FALSE") => {
                self.bump();
                Ok(Scalar::Bool(false))
            }
            _ => self.syntax("literal"),
        }
    }

    fn compare_op(&mut self) -> Result<CompareOp, ParseError> {
        let op = match self.peek() {
            Tok::Sym("<") => CompareOp::Lt,
            Tok::Sym("<=") => CompareOp::Le,
            Tok::Sym(">") => CompareOp::Gt,
            Tok::Sym(">=") => CompareOp::Ge,
            Tok::Sym("=") => CompareOp::Eq,
            Tok::Sym("<>") | Tok::Sym("!=") => CompareOp::Ne,
            _ => return self.syntax("comparison operator"),
        };
        self.bump();
        Ok(op)
    }

    /// `col op literal {AND col op literal}`; returns each comparison's position.
    fn condition(&mut self) -> Result<(Condition, Vec<Position>), ParseError> {
        let mut cmps = Vec::new();
        let mut positions = Vec::new();
        loop {
            let (column, pos) = self.ident("column name")?;
            let op = self.compare_op()?;
            let value = self.literal()?;
            cmps.push(Comparison { column, op, value });
            positions.push(pos);
            if !self.eat_kw("AND") {
                break;
            }
        }
        Ok((Condition(cmps), positions))
    }

    fn end_of_statement(&mut self) -> Result<(), ParseError> {
        self.eat_sym(";");
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            self.syntax("end of statement")
        }
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    // ---------------------------------------------------------------- DDL

    fn policy(&mut self) -> ConcurrencyPolicy {
        if self.eat_kw("UPDATE_WINS") {
            ConcurrencyPolicy::UpdateWins
        } else if self.eat_kw("DELETE_WINS") {
            ConcurrencyPolicy::DeleteWins
        } else {
            ConcurrencyPolicy::NoConcurrency
        }
    }

    pub fn create_table(&mut self) -> Result<(TableSchema, Vec<PendingFk>), ParseError> {
        self.expect_kw("CREATE")?;
        let row_policy = self.policy();
        self.expect_kw("TABLE")?;
        let (name, name_pos) = self.ident("table name")?;
        self.expect_sym("(")?;
        let mut columns: Vec<ColumnDef> = Vec::new();
        let mut pending = Vec::new();
        let mut primary_key: Option<String> = None;
        loop {
            let (col, col_pos) = self.ident("column name")?;
            if columns.iter().any(|c| c.name == col) {
                return Self::invalid(col_pos, format!("duplicate column `{col}`"));
            }
            let datatype = if self.eat_kw("INT") || self.eat_kw("INTEGER") {
                DataType::Int
            } else if self.eat_kw("VARCHAR") {
                DataType::Varchar
            } else if self.eat_kw("BOOLEAN") {
                DataType::Boolean
            } else {
                return self.syntax("data type (INT, VARCHAR, BOOLEAN)");
            };
            let mod_pos = self.pos();
            let modifier = if self.eat_kw("LWW") {
                Modifier::Lww
            } else if self.eat_kw("MULTI_VALUE") {
                Modifier::MultiValue
            } else if self.eat_kw("ADDITIVE") {
                Modifier::Additive
            } else {
                Modifier::None
            };
            if modifier == Modifier::Additive && datatype != DataType::Int {
                return Self::invalid(
                    mod_pos,
                    format!("ADDITIVE requires an INT column, `{col}` is {}", datatype.keyword()),
                );
            }
            let mut constraints = Vec::new();
            loop {
                let c_pos = self.pos();
                if self.eat_kw("PRIMARY") {
                    self.expect_kw("KEY")?;
                    if let Some(prev) = &primary_key {
                        return Self::invalid(
                            c_pos,
                            format!("table `{name}` already has primary key `{prev}`"),
                        );
                    }
                    if modifier != Modifier::None {
                        return Self::invalid(
                            mod_pos,
                            format!("primary key `{col}` cannot carry a concurrency modifier"),
                        );
                    }
                    primary_key = Some(col.clone());
                    constraints.push(ConstraintDef::PrimaryKey);
                } else if self.eat_kw("CHECK") {
                    if constraints.iter().any(|c| matches!(c, ConstraintDef::Check(_))) {
                        return Self::invalid(c_pos, format!("column `{col}` has two CHECK constraints"));
                    }
                    self.expect_sym("(")?;
                    let (cond, positions) = self.condition()?;
                    self.expect_sym(")")?;
                    for (cmp, p) in cond.comparisons().iter().zip(&positions) {
                        if cmp.column != col {
                            return Self::invalid(
                                *p,
                                format!("CHECK on `{col}` may only reference `{col}`"),
                            );
                        }
                        if !datatype.admits(&cmp.value) {
                            return Self::invalid(
                                *p,
                                format!("CHECK constant {} does not match {}", cmp.value, datatype.keyword()),
                            );
                        }
                    }
                    if modifier == Modifier::Additive {
                        let single = cond.comparisons().len() == 1;
                        let bound_op = matches!(
                            cond.comparisons()[0].op,
                            CompareOp::Lt | CompareOp::Le | CompareOp::Gt | CompareOp::Ge
                        );
                        if !single || !bound_op {
                            return Self::invalid(
                                c_pos,
                                "CHECK on an ADDITIVE column must be a single <, <=, > or >= bound",
                            );
                        }
                    }
                    constraints.push(ConstraintDef::Check(cond));
                } else if self.eat_kw("FOREIGN") {
                    self.expect_kw("KEY")?;
                    if constraints.iter().any(|c| matches!(c, ConstraintDef::ForeignKey(_))) {
                        return Self::invalid(c_pos, format!("column `{col}` has two FOREIGN KEY constraints"));
                    }
                    if !matches!(modifier, Modifier::Lww | Modifier::None) {
                        return Self::invalid(
                            mod_pos,
                            format!("foreign key column `{col}` must be LWW or have no modifier"),
                        );
                    }
                    let policy = self.policy();
                    self.expect_kw("REFERENCES")?;
                    let (table, _) = self.ident("referenced table")?;
                    self.expect_sym("(")?;
                    let (column, _) = self.ident("referenced column")?;
                    self.expect_sym(")")?;
                    let cascade = if self.eat_kw("ON") {
                        self.expect_kw("DELETE")?;
                        self.expect_kw("CASCADE")?;
                        true
                    } else {
                        false
                    };
                    let fk = ForeignKey {
                        table,
                        column,
                        policy,
                        cascade,
                    };
                    pending.push(PendingFk {
                        column: col.clone(),
                        datatype,
                        fk: fk.clone(),
                        pos: c_pos,
                    });
                    constraints.push(ConstraintDef::ForeignKey(fk));
                } else {
                    break;
                }
            }
            columns.push(ColumnDef {
                name: col,
                datatype,
                modifier,
                constraints,
            });
            if self.eat_sym(",") {
                continue;
            }
            self.expect_sym(")")?;
            break;
        }
        let Some(primary_key) = primary_key else {
            return Self::invalid(name_pos, format!("table `{name}` has no PRIMARY KEY column"));
        };
        let table = TableSchema {
            name,
            row_policy,
            columns,
            primary_key,
        };
        Ok((table, pending))
    }

    /// Checks FK targets against `catalog` (or the table itself for self references).
    pub fn resolve_fks(
        table: &TableSchema,
        pending: &[PendingFk],
        catalog: &Catalog,
    ) -> Result<(), ParseError> {
        for p in pending {
            let target = if p.fk.table == table.name {
                Some(table)
            } else {
                catalog.table(&p.fk.table)
            };
            let Some(target) = target else {
                return Self::invalid(p.pos, format!("unknown referenced table `{}`", p.fk.table));
            };
            if target.primary_key != p.fk.column {
                return Self::invalid(
                    p.pos,
                    format!(
                        "`{}` references {}({}), which is not its primary key `{}`",
                        p.column, target.name, p.fk.column, target.primary_key
                    ),
                );
            }
            if target.pk_column().datatype != p.datatype {
                return Self::invalid(
                    p.pos,
                    format!("`{}` type does not match {}({})", p.column, target.name, p.fk.column),
                );
            }
        }
        Ok(())
    }

    /// One or more `;`-separated CREATE TABLE statements.
    pub fn schema(&mut self) -> Result<Catalog, ParseError> {
        let mut catalog = Catalog::new();
        while !self.at_eof() {
            if self.eat_sym(";") {
                continue;
            }
            let start = self.pos();
            let (table, pending) = self.create_table()?;
            if catalog.table(&table.name).is_some() {
                return Self::invalid(start, format!("table `{}` defined twice", table.name));
            }
            Self::resolve_fks(&table, &pending, &catalog)?;
            catalog.push_unchecked(table);
            if !self.at_eof() && !self.eat_sym(";") {
                return self.syntax("`;`");
            }
        }
        Ok(catalog)
    }

    pub fn single_table(&mut self) -> Result<TableSchema, ParseError> {
        let (table, pending) = self.create_table()?;
        let self_only: Vec<PendingFk> = pending
            .into_iter()
            .filter(|p| p.fk.table == table.name)
            .collect();
        Self::resolve_fks(&table, &self_only, &Catalog::new())?;
        self.end_of_statement()?;
        Ok(table)
    }

    // ---------------------------------------------------------------- DML

    fn table_ref<'c>(&mut self, catalog: &'c Catalog) -> Result<&'c TableSchema, ParseError> {
        let (name, pos) = self.ident("table name")?;
        match catalog.table(&name) {
            Some(t) => Ok(t),
            None => Self::invalid(pos, format!("unknown table `{name}`")),
        }
    }

    fn column_ref<'t>(table: &'t TableSchema, name: &str, pos: Position) -> Result<&'t ColumnDef, ParseError> {
        match table.column(name) {
            Some(c) => Ok(c),
            None => Self::invalid(pos, format!("unknown column `{name}` in `{}`", table.name)),
        }
    }

    fn where_clause(&mut self, table: &TableSchema) -> Result<Condition, ParseError> {
        if !self.eat_kw("WHERE") {
            return Ok(Condition::default());
        }
        let (cond, positions) = self.condition()?;
        for (cmp, p) in cond.comparisons().iter().zip(positions) {
            let col = Self::column_ref(table, &cmp.column, p)?;
            if !col.datatype.admits(&cmp.value) {
                return Self::invalid(
                    p,
                    format!("`{}` is {}, compared with {}", col.name, col.datatype.keyword(), cmp.value),
                );
            }
        }
        Ok(cond)
    }

    /// Literal or id function for a column of type `col`.
    fn value_expr(&mut self, col: &ColumnDef) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let expr = if self.is_kw("UNIQUE_ID") && self.peek_at(1) == &Tok::Sym("(") {
            self.bump();
            self.expect_sym("(")?;
            self.expect_sym(")")?;
            if col.datatype != DataType::Varchar {
                return Self::invalid(pos, format!("UNIQUE_ID() yields VARCHAR, `{}` is {}", col.name, col.datatype.keyword()));
            }
            Expr::UniqueId
        } else if self.is_kw("SEQUENTIAL_ID") && self.peek_at(1) == &Tok::Sym("(") {
            self.bump();
            self.expect_sym("(")?;
            let name = match self.bump() {
                Tok::Str(s) => s,
                _ => {
                    self.at -= 1;
                    return self.syntax("sequence name string");
                }
            };
            self.expect_sym(")")?;
            if col.datatype != DataType::Int {
                return Self::invalid(pos, format!("SEQUENTIAL_ID() yields INT, `{}` is {}", col.name, col.datatype.keyword()));
            }
            Expr::SequentialId(name)
        } else {
            let v = self.literal()?;
            if !col.datatype.admits(&v) {
                return Self::invalid(
                    pos,
                    format!("`{}` is {}, got {}", col.name, col.datatype.keyword(), v),
                );
            }
            Expr::Literal(v)
        };
        Ok(expr)
    }

    fn insert(&mut self, catalog: &Catalog) -> Result<Statement, ParseError> {
        self.expect_kw("INTO")?;
        let table = self.table_ref(catalog)?;
        let mut names: Vec<(String, Position)> = Vec::new();
        if self.eat_sym("(") {
            loop {
                let (n, p) = self.ident("column name")?;
                Self::column_ref(table, &n, p)?;
                if names.iter().any(|(m, _)| *m == n) {
                    return Self::invalid(p, format!("column `{n}` listed twice"));
                }
                names.push((n, p));
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
        } else {
            let pos = self.pos();
            names = table.columns.iter().map(|c| (c.name.clone(), pos)).collect();
        }
        let values_pos = self.pos();
        self.expect_kw("VALUES")?;
        self.expect_sym("(")?;
        let mut values = Vec::new();
        for (i, (n, _)) in names.iter().enumerate() {
            if i > 0 {
                self.expect_sym(",")?;
            }
            let col = table.column(n).expect("checked above");
            values.push((n.clone(), self.value_expr(col)?));
        }
        self.expect_sym(")")?;
        let listed: BTreeSet<&str> = names.iter().map(|(n, _)| n.as_str()).collect();
        if let Some(missing) = table.columns.iter().find(|c| !listed.contains(c.name.as_str())) {
            return Self::invalid(values_pos, format!("no value for column `{}`", missing.name));
        }
        Ok(Statement::Insert {
            table: table.name.clone(),
            values,
        })
    }

    fn update(&mut self, catalog: &Catalog) -> Result<Statement, ParseError> {
        let table = self.table_ref(catalog)?;
        self.expect_kw("SET")?;
        let mut assignments: Vec<(String, Expr)> = Vec::new();
        loop {
            let (n, p) = self.ident("column name")?;
            let col = Self::column_ref(table, &n, p)?;
            if n == table.primary_key {
                return Self::invalid(p, format!("primary key `{n}` cannot be updated"));
            }
            if assignments.iter().any(|(m, _)| *m == n) {
                return Self::invalid(p, format!("column `{n}` assigned twice"));
            }
            self.expect_sym("=")?;
            let rhs_pos = self.pos();
            let self_ref = matches!(self.peek(), Tok::Ident(s) if *s == n)
                && matches!(self.peek_at(1), Tok::Sym("+") | Tok::Sym("-"));
            let expr = if self_ref {
                self.bump();
                let negative = matches!(self.bump(), Tok::Sym("-"));
                let k = match self.bump() {
                    Tok::Int(k) => k,
                    _ => {
                        self.at -= 1;
                        return self.syntax("integer");
                    }
                };
                if col.modifier != Modifier::Additive {
                    return Self::invalid(rhs_pos, format!("`{n}` is not ADDITIVE; assign a value instead"));
                }
                Expr::Delta(if negative { -k } else { k })
            } else {
                if col.modifier == Modifier::Additive {
                    return Self::invalid(
                        rhs_pos,
                        format!("ADDITIVE column `{n}` must be updated as `{n} = {n} + k` or `{n} = {n} - k`"),
                    );
                }
                self.value_expr(col)?
            };
            assignments.push((n, expr));
            if !self.eat_sym(",") {
                break;
            }
        }
        let filter = self.where_clause(table)?;
        Ok(Statement::Update {
            table: table.name.clone(),
            assignments,
            filter,
        })
    }

    fn delete(&mut self, catalog: &Catalog) -> Result<Statement, ParseError> {
        self.expect_kw("FROM")?;
        let table = self.table_ref(catalog)?;
        let filter = self.where_clause(table)?;
        Ok(Statement::Delete {
            table: table.name.clone(),
            filter,
        })
    }

    fn select(&mut self, catalog: &Catalog) -> Result<Statement, ParseError> {
        let mut cols: Option<Vec<(String, Position)>> = None;
        if !self.eat_sym("*") {
            let mut v = Vec::new();
            loop {
                v.push(self.ident("column name or `*`")?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            cols = Some(v);
        }
        self.expect_kw("FROM")?;
        let table = self.table_ref(catalog)?;
        let projection = match cols {
            None => None,
            Some(v) => {
                for (n, p) in &v {
                    Self::column_ref(table, n, *p)?;
                }
                Some(v.into_iter().map(|(n, _)| n).collect())
            }
        };
        let filter = self.where_clause(table)?;
        Ok(Statement::Select {
            projection,
            table: table.name.clone(),
            filter,
        })
    }

    pub fn statement(&mut self, catalog: &Catalog) -> Result<Statement, ParseError> {
        let stmt = if self.eat_kw("INSERT") {
            self.insert(catalog)?
        } else if self.eat_kw("UPDATE") {
            self.update(catalog)?
        } else if self.eat_kw("DELETE") {
            self.delete(catalog)?
        } else if self.eat_kw("SELECT") {
            self.select(catalog)?
        } else {
            return self.syntax("INSERT, UPDATE, DELETE or SELECT");
        };
        self.end_of_statement()?;
        Ok(stmt)
    }
}

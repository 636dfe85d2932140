//! Schema definitions and the AQL statement parser.
//!
//! Tables declare how concurrent writes resolve: a row policy for
//! update/delete races, a per-column merge modifier for update/update races,
//! and per-foreign-key policies for child-insert/parent-delete races.
//!
//! Keywords are case-insensitive; identifiers are case-sensitive.

mod ast;
mod lexer;
mod parser;

use std::fmt;

pub use ast::{
    Catalog, ColumnDef, CompareOp, Comparison, ConcurrencyPolicy, Condition, ConstraintDef,
    DataType, Expr, ForeignKey, Modifier, Reference, Statement, TableSchema,
};
pub use lexer::Position;

use parser::Parser;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: Position,
        expected: String,
        found: String,
    },
    #[error("invalid schema or statement at {pos}: {message}")]
    Validation { pos: Position, message: String },
}

impl ParseError {
    pub fn position(&self) -> Position {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::Validation { pos, .. } => *pos,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, ParseError::Validation { .. })
    }
}

/// Parses a single `CREATE TABLE` statement. Foreign keys may only refer to the
/// table itself; use [`parse_schema`] for multi-table schemas.
pub fn parse_ddl(text: &str) -> Result<TableSchema, ParseError> {
    Parser::new(text)?.single_table()
}

/// Parses a `.aql` schema: `;`-separated `CREATE TABLE` statements. Referenced
/// tables must be declared before the tables that reference them.
pub fn parse_schema(text: &str) -> Result<Catalog, ParseError> {
    Parser::new(text)?.schema()
}

pub fn parse_statement(text: &str, catalog: &Catalog) -> Result<Statement, ParseError> {
    Parser::new(text)?.statement(catalog)
}

pub fn concurrent_insert_allowed(schema: &TableSchema) -> bool {
    schema.concurrent_insert_allowed()
}

impl fmt::Display for ColumnDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.datatype.keyword())?;
        if let Some(m) = self.modifier.keyword() {
            write!(f, " {m}")?;
        }
        for c in &self.constraints {
            match c {
                ConstraintDef::PrimaryKey => f.write_str(" PRIMARY KEY")?,
                ConstraintDef::Check(cond) => write!(f, " CHECK ({cond})")?,
                ConstraintDef::ForeignKey(fk) => {
                    f.write_str(" FOREIGN KEY")?;
                    if let Some(p) = fk.policy.keyword() {
                        write!(f, " {p}")?;
                    }
                    write!(f, " REFERENCES {}({})", fk.table, fk.column)?;
                    if fk.cascade {
                        f.write_str(" ON DELETE CASCADE")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Canonical AQL text; parsing it yields an equal schema.
impl fmt::Display for TableSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CREATE ")?;
        if let Some(p) = self.row_policy.keyword() {
            write!(f, "{p} ")?;
        }
        write!(f, "TABLE {}(", self.name)?;
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            c.fmt(f)?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in self.tables() {
            writeln!(f, "{t};")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crdt::{Bound, Scalar};

    const MUSIC: &str = "
        CREATE UPDATE_WINS TABLE Artists(Name VARCHAR PRIMARY KEY, Country VARCHAR LWW);
        CREATE UPDATE_WINS TABLE Albums(
            Title VARCHAR PRIMARY KEY,
            Artist VARCHAR LWW FOREIGN KEY UPDATE_WINS REFERENCES Artists(Name) ON DELETE CASCADE
        );
    ";

    #[test]
    fn update_wins_table() {
        let t = parse_ddl("CREATE UPDATE_WINS TABLE Artists(Name VARCHAR PRIMARY KEY)").unwrap();
        assert_eq!(t.name, "Artists");
        assert_eq!(t.row_policy, ConcurrencyPolicy::UpdateWins);
        assert_eq!(t.primary_key, "Name");
    }

    #[test]
    fn additive_column_with_lower_bound() {
        let t = parse_ddl("CREATE TABLE T(K INT PRIMARY KEY, V INT ADDITIVE CHECK(V >= 0))").unwrap();
        assert_eq!(t.row_policy, ConcurrencyPolicy::NoConcurrency);
        let v = t.column("V").unwrap();
        assert_eq!(v.modifier, Modifier::Additive);
        assert_eq!(v.counter_bound(), Some(Bound::lower(0)));
    }

    #[test]
    fn additive_on_varchar_is_rejected() {
        let err = parse_ddl("CREATE TABLE T(K INT PRIMARY KEY, V VARCHAR ADDITIVE)").unwrap_err();
        assert!(err.is_validation(), "{err}");
        assert_eq!(err.position().offset, "CREATE TABLE T(K INT PRIMARY KEY, V VARCHAR ".len());
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let t = parse_ddl("create delete_wins table t(k int primary key, v boolean lww)").unwrap();
        assert_eq!(t.row_policy, ConcurrencyPolicy::DeleteWins);
        assert_eq!(t.name, "t");
    }

    #[test]
    fn schema_level_validation() {
        let cases = [
            "CREATE TABLE T(K INT)",
            "CREATE TABLE T(K INT PRIMARY KEY, K INT)",
            "CREATE TABLE T(K INT PRIMARY KEY, J INT PRIMARY KEY)",
            "CREATE TABLE T(K INT LWW PRIMARY KEY)",
            "CREATE TABLE T(K INT PRIMARY KEY, V INT ADDITIVE CHECK (V <> 3))",
            "CREATE TABLE T(K INT PRIMARY KEY, V INT ADDITIVE CHECK (V > 0 AND V < 9))",
            "CREATE TABLE T(K INT PRIMARY KEY, V INT CHECK (K > 0))",
            "CREATE TABLE T(K INT PRIMARY KEY, V INT CHECK (V > 'a'))",
            "CREATE TABLE P(K INT PRIMARY KEY); CREATE TABLE C(K INT PRIMARY KEY, P VARCHAR FOREIGN KEY REFERENCES P(K))",
            "CREATE TABLE P(K INT PRIMARY KEY, X INT); CREATE TABLE C(K INT PRIMARY KEY, P INT FOREIGN KEY REFERENCES P(X))",
            "CREATE TABLE C(K INT PRIMARY KEY, P INT FOREIGN KEY REFERENCES Nope(K))",
            "CREATE TABLE P(K INT PRIMARY KEY); CREATE TABLE C(K INT PRIMARY KEY, P INT MULTI_VALUE FOREIGN KEY REFERENCES P(K))",
            "CREATE TABLE P(K INT PRIMARY KEY); CREATE TABLE P(K INT PRIMARY KEY)",
        ];
        for src in cases {
            let err = parse_schema(src).expect_err(src);
            assert!(err.is_validation(), "{src}: {err}");
            assert!(err.position().offset < src.len(), "{src}");
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let cases = ["", "CREATE", "CREATE TABLE T(K FLOAT PRIMARY KEY)", "CREATE TABLE T(K INT PRIMARY KEY", "CREATE TABLE T(K INT PRIMARY KEY) garbage"];
        for src in cases {
            let err = parse_schema(src).err();
            if src.is_empty() {
                assert!(err.is_none());
                continue;
            }
            let err = err.expect(src);
            assert!(!err.is_validation(), "{src}: {err}");
            assert!(err.position().offset < src.len().max(1));
        }
    }

    #[test]
    fn printed_schema_reparses_equal() {
        let cat = parse_schema(MUSIC).unwrap();
        let again = parse_schema(&cat.to_string()).unwrap();
        assert_eq!(cat, again);
    }

    #[test]
    fn concurrent_inserts() {
        let all_lww = parse_ddl("CREATE UPDATE_WINS TABLE T(K INT PRIMARY KEY, A INT LWW, B VARCHAR LWW)").unwrap();
        assert!(concurrent_insert_allowed(&all_lww));
        let one_plain = parse_ddl("CREATE UPDATE_WINS TABLE T(K INT PRIMARY KEY, A INT LWW, B INT)").unwrap();
        assert!(!concurrent_insert_allowed(&one_plain));
        let key_only = parse_ddl("CREATE UPDATE_WINS TABLE T(K INT PRIMARY KEY)").unwrap();
        assert!(concurrent_insert_allowed(&key_only));
        let strict = parse_ddl("CREATE TABLE T(K INT PRIMARY KEY, A INT LWW)").unwrap();
        assert!(!concurrent_insert_allowed(&strict));
    }

    #[test]
    fn statements() {
        let cat = parse_schema(MUSIC).unwrap();
        let ins = parse_statement("INSERT INTO Albums VALUES ('A1','Sam')", &cat).unwrap();
        assert_eq!(
            ins,
            Statement::Insert {
                table: "Albums".into(),
                values: vec![
                    ("Title".into(), Expr::Literal(Scalar::str("A1"))),
                    ("Artist".into(), Expr::Literal(Scalar::str("Sam"))),
                ],
            }
        );
        let del = parse_statement("DELETE FROM Artists WHERE Name='Sam';", &cat).unwrap();
        let Statement::Delete { filter, .. } = del else { panic!() };
        assert_eq!(filter.comparisons()[0].value, Scalar::str("Sam"));
        let err = parse_statement("SELECT * FROM Nope", &cat).unwrap_err();
        assert!(err.is_validation());
        assert_eq!(err.position().offset, 14);
    }

    #[test]
    fn statement_validation() {
        let cat = parse_schema(
            "CREATE TABLE P(K INT PRIMARY KEY, N INT ADDITIVE, S VARCHAR LWW, Q INT SEQ)",
        );
        assert!(cat.is_err());
        let cat = parse_schema("CREATE TABLE P(K INT PRIMARY KEY, N INT ADDITIVE, S VARCHAR LWW)").unwrap();
        let ok = [
            "UPDATE P SET N = N + 3 WHERE K = 1",
            "UPDATE P SET N = N - 3, S = 'x'",
            "INSERT INTO P (S, N, K) VALUES ('a', 0, SEQUENTIAL_ID('p'))",
            "INSERT INTO P VALUES (1, 0, UNIQUE_ID())",
            "SELECT S, N FROM P WHERE K >= 2 AND S <> 'z'",
        ];
        for s in ok {
            parse_statement(s, &cat).unwrap_or_else(|e| panic!("{s}: {e}"));
        }
        let bad = [
            "UPDATE P SET N = 4",
            "UPDATE P SET S = S + 1",
            "UPDATE P SET K = 2",
            "INSERT INTO P VALUES (1, 'x', 'y')",
            "INSERT INTO P (K, N) VALUES (1, 2)",
            "INSERT INTO P VALUES ('k', 0, 'y')",
            "INSERT INTO P VALUES (UNIQUE_ID(), 0, 'y')",
            "SELECT Z FROM P",
            "DELETE FROM P WHERE S = 3",
        ];
        for s in bad {
            let err = parse_statement(s, &cat).expect_err(s);
            assert!(err.is_validation(), "{s}: {err}");
        }
    }
}

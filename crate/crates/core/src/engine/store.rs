use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::crdt::{CrdtError, Scalar};
use crate::schema::{Catalog, TableSchema};

use super::{is_visible, CellValue, Row, RowKey};

/// One replica's rows and sequence counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Store {
    rows: BTreeMap<RowKey, Row>,
    sequences: BTreeMap<String, i64>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn row(&self, key: &RowKey) -> Option<&Row> {
        self.rows.get(key)
    }

    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.values()
    }

    /// Stored rows of `table` in primary-key order, visible or not.
    pub fn table_rows<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        let start = RowKey::new(table, Scalar::Bool(false));
        self.rows
            .range(start..)
            .take_while(move |(k, _)| k.table == table)
            .map(|(_, r)| r)
    }

    pub fn visible_rows<'a>(
        &'a self,
        catalog: &'a Catalog,
        table: &'a str,
    ) -> impl Iterator<Item = &'a Row> + 'a {
        self.table_rows(table)
            .filter(move |r| is_visible(r, catalog, self).visible)
    }

    /// Row for `key`, created empty if absent.
    pub fn row_mut(&mut self, key: &RowKey) -> &mut Row {
        self.rows
            .entry(key.clone())
            .or_insert_with(|| Row::new(key.clone()))
    }

    pub fn put(&mut self, row: Row) {
        self.rows.insert(row.key.clone(), row);
    }

    pub fn merge_row(&mut self, row: &Row) -> Result<(), CrdtError> {
        match self.rows.get_mut(&row.key) {
            Some(ours) => ours.merge(row),
            None => {
                self.rows.insert(row.key.clone(), row.clone());
                Ok(())
            }
        }
    }

    /// Last value handed out by `sequence` (0 if never used).
    pub fn sequence(&self, name: &str) -> i64 {
        self.sequences.get(name).copied().unwrap_or(0)
    }

    pub fn sequences(&self) -> &BTreeMap<String, i64> {
        &self.sequences
    }

    pub fn merge_sequence(&mut self, name: &str, value: i64) {
        let e = self.sequences.entry(name.to_string()).or_insert(0);
        *e = (*e).max(value);
    }

    pub fn merge(&mut self, other: &Store) -> Result<(), CrdtError> {
        for row in other.rows.values() {
            self.merge_row(row)?;
        }
        for (name, &v) in &other.sequences {
            self.merge_sequence(name, v);
        }
        Ok(())
    }

    /// Canonical lines for the visible rows of one table.
    pub fn dump_table(&self, catalog: &Catalog, schema: &TableSchema) -> Vec<String> {
        self.visible_rows(catalog, &schema.name)
            .map(|row| render_row(row, schema))
            .collect()
    }

    /// Canonical dump of every table: the table name, then one indented line
    /// per visible row in primary-key order.
    pub fn dump(&self, catalog: &Catalog) -> String {
        let mut out = String::new();
        for schema in catalog.tables() {
            let _ = writeln!(out, "{}", schema.name);
            for line in self.dump_table(catalog, schema) {
                let _ = writeln!(out, "  {line}");
            }
        }
        out
    }
}

pub fn render_row(row: &Row, schema: &TableSchema) -> String {
    schema
        .columns
        .iter()
        .map(|c| row.cell(schema, &c.name).to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Renders a list of cells the same way table dumps do.
pub fn render_cells(cells: &[CellValue]) -> String {
    cells
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

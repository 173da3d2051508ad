//! Schema documents and raw table loading.
//!
//! A schema is a JSON document listing typed columns; a table is a plain CSV
//! whose header matches the schema column names in order. Empty strings mark
//! missing values.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Category name reserved for missing categorical values.
pub const MISSING_CATEGORY: &str = "__missing__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Integer,
    Categorical,
    Binary,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Continuous | ColumnKind::Integer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Ordered category list; required for categorical/binary columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub missing_allowed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    /// Validate the schema invariants; called by every constructor path.
    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::SchemaInvalid("schema has no columns".into()));
        }
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::SchemaInvalid(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
            match col.kind {
                ColumnKind::Categorical => {
                    if col.categories.len() < 2 {
                        return Err(Error::SchemaInvalid(format!(
                            "categorical column {:?} needs at least 2 categories",
                            col.name
                        )));
                    }
                }
                ColumnKind::Binary => {
                    if col.categories.len() != 2 {
                        return Err(Error::SchemaInvalid(format!(
                            "binary column {:?} needs exactly 2 categories",
                            col.name
                        )));
                    }
                }
                ColumnKind::Continuous | ColumnKind::Integer => {
                    if !col.categories.is_empty() {
                        return Err(Error::SchemaInvalid(format!(
                            "numeric column {:?} must not list categories",
                            col.name
                        )));
                    }
                }
            }
            let mut cats = HashSet::new();
            for c in &col.categories {
                if c == MISSING_CATEGORY {
                    return Err(Error::SchemaInvalid(format!(
                        "column {:?} uses reserved category name {MISSING_CATEGORY:?}",
                        col.name
                    )));
                }
                if !cats.insert(c.as_str()) {
                    return Err(Error::SchemaInvalid(format!(
                        "column {:?} has duplicate category {c:?}",
                        col.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Load and validate a schema JSON document.
pub fn load_schema(path: impl AsRef<Path>) -> Result<TableSchema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let schema: TableSchema = serde_json::from_str(&text).map_err(|e| Error::SchemaParse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    schema.validate()?;
    Ok(schema)
}

/// One table cell; the variant must agree with its column kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    /// A category value for categorical/binary columns.
    Text(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// A validated table: every cell conforms to its column spec.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: TableSchema,
    pub rows: Vec<Vec<Cell>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Rows at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> RawTable {
        RawTable {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Validate each cell against the schema; row numbers are 1-based data rows.
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.schema.columns.len() {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} cells, schema has {} columns",
                    i + 1,
                    row.len(),
                    self.schema.columns.len()
                )));
            }
            for (cell, col) in row.iter().zip(&self.schema.columns) {
                validate_cell(cell, col, i + 1)?;
            }
        }
        Ok(())
    }
}

fn validate_cell(cell: &Cell, col: &ColumnSpec, row: usize) -> Result<()> {
    let bad = |msg: String| Error::BadCell {
        row,
        column: col.name.clone(),
        msg,
    };
    match cell {
        Cell::Missing => {
            if !col.missing_allowed {
                return Err(bad("missing value in non-missing column".into()));
            }
        }
        Cell::Float(v) => {
            if col.kind != ColumnKind::Continuous {
                return Err(bad(format!("float cell in {:?} column", col.kind)));
            }
            if !v.is_finite() {
                return Err(bad(format!("non-finite value {v}")));
            }
        }
        Cell::Int(_) => {
            if col.kind != ColumnKind::Integer {
                return Err(bad(format!("integer cell in {:?} column", col.kind)));
            }
        }
        Cell::Text(s) => {
            if !matches!(col.kind, ColumnKind::Categorical | ColumnKind::Binary) {
                return Err(bad(format!("text cell in {:?} column", col.kind)));
            }
            if !col.categories.iter().any(|c| c == s) {
                return Err(bad(format!("value {s:?} not in category list")));
            }
        }
    }
    Ok(())
}

fn parse_cell(raw: &str, col: &ColumnSpec, row: usize) -> Result<Cell> {
    let bad = |msg: String| Error::BadCell {
        row,
        column: col.name.clone(),
        msg,
    };
    if raw.is_empty() {
        if !col.missing_allowed {
            return Err(bad("missing value in non-missing column".into()));
        }
        return Ok(Cell::Missing);
    }
    match col.kind {
        ColumnKind::Continuous => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Cell::Float)
            .ok_or_else(|| bad(format!("cannot parse {raw:?} as a real number"))),
        ColumnKind::Integer => raw
            .parse::<i64>()
            .map(Cell::Int)
            .map_err(|_| bad(format!("cannot parse {raw:?} as an integer"))),
        ColumnKind::Categorical | ColumnKind::Binary => {
            if col.categories.iter().any(|c| c == raw) {
                Ok(Cell::Text(raw.to_string()))
            } else {
                Err(bad(format!("value {raw:?} not in category list")))
            }
        }
    }
}

/// Load a CSV data file against a schema.
///
/// The header must match the schema column names in order; empty fields are
/// missing values.
pub fn load_table(path: impl AsRef<Path>, schema: &TableSchema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;

    let headers = reader.headers()?.clone();
    if headers.len() != schema.columns.len() {
        return Err(Error::SchemaMismatch(format!(
            "csv has {} columns, schema has {}",
            headers.len(),
            schema.columns.len()
        )));
    }
    for (i, (h, col)) in headers.iter().zip(&schema.columns).enumerate() {
        if h != col.name {
            return Err(Error::HeaderMismatch {
                position: i,
                expected: col.name.clone(),
                found: h.to_string(),
            });
        }
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        if record.len() != schema.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "row {row_no} has {} fields, expected {}",
                record.len(),
                schema.columns.len()
            )));
        }
        let mut row = Vec::with_capacity(schema.columns.len());
        for (raw, col) in record.iter().zip(&schema.columns) {
            row.push(parse_cell(raw, col, row_no)?);
        }
        rows.push(row);
    }

    Ok(RawTable {
        schema: schema.clone(),
        rows,
    })
}

/// Write a table back out as CSV (inverse of [`load_table`]).
pub fn write_table(path: impl AsRef<Path>, table: &RawTable) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(table.schema.columns.iter().map(|c| c.name.as_str()))?;
    for row in &table.rows {
        let fields: Vec<String> = row
            .iter()
            .map(|cell| match cell {
                Cell::Float(v) => format_float(*v),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s.clone(),
                Cell::Missing => String::new(),
            })
            .collect();
        writer.write_record(&fields)?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest decimal representation that round-trips through `parse::<f64>`.
fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Draw `n` distinct row indices uniformly without replacement.
pub fn sample_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > len {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: len,
        });
    }
    let mut rng = rng::stream(seed, "subsample", &[]);
    Ok(rand::seq::index::sample(&mut rng, len, n).into_vec())
}

/// Uniform subsample without replacement; deterministic for a fixed seed.
pub fn subsample(table: &RawTable, n: usize, seed: u64) -> Result<RawTable> {
    if n == 0 {
        return Err(Error::SampleTooLarge {
            requested: 0,
            available: table.n_rows(),
        });
    }
    let indices = sample_indices(table.n_rows(), n, seed)?;
    Ok(table.select(&indices))
}

/// Split `len` indices into disjoint chunks of the given sizes, sampled
/// uniformly; used to carve training/discriminator/estimation pools.
pub fn carve_indices(len: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    let total: usize = sizes.iter().sum();
    if total > len {
        return Err(Error::SampleTooLarge {
            requested: total,
            available: len,
        });
    }
    let drawn = sample_indices(len, total, seed)?;
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &s in sizes {
        out.push(drawn[at..at + s].to_vec());
        at += s;
    }
    Ok(out)
}

//! In-memory relational tables.
//!
//! A [`Table`] is stored column-wise: continuous columns as `f64` vectors with
//! `NaN` marking a missing cell, categorical columns as dictionary codes. Every
//! row carries a stable [`RowId`] (its 0-based position in the source file)
//! that survives selection and projection, so artifacts computed on the full
//! table can be looked up for any query result.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RowId = u32;

const MISSING_CODE: u32 = u32::MAX;

/// A single cell value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_value_ref(&self) -> ValueRef<'_> {
        match self {
            Value::Number(x) => ValueRef::Number(*x),
            Value::Text(s) => ValueRef::Text(s),
            Value::Missing => ValueRef::Missing,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => f.write_str(&format_number(*x)),
            Value::Text(s) => f.write_str(s),
            Value::Missing => f.write_str("NaN"),
        }
    }
}

/// Borrowed view of a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValueRef<'a> {
    Number(f64),
    Text(&'a str),
    Missing,
}

impl ValueRef<'_> {
    pub fn to_owned(self) -> Value {
        match self {
            ValueRef::Number(x) => Value::Number(x),
            ValueRef::Text(s) => Value::Text(s.to_string()),
            ValueRef::Missing => Value::Missing,
        }
    }
}

/// Formats a number without a trailing `.0` for integral values.
pub fn format_number(x: f64) -> String {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Continuous,
}

/// Observed value domain of a column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    Range { min: f64, max: f64 },
    Categories { distinct: usize },
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub domain: Domain,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("duplicate column name {:?}", c.name),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub(crate) enum ColumnData {
    Numeric(Vec<f64>),
    Text { codes: Vec<u32>, dict: Arc<[String]> },
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Text { codes, .. } => codes.len(),
        }
    }

    fn get(&self, pos: usize) -> ValueRef<'_> {
        match self {
            ColumnData::Numeric(v) => {
                let x = v[pos];
                if x.is_nan() {
                    ValueRef::Missing
                } else {
                    ValueRef::Number(x)
                }
            }
            ColumnData::Text { codes, dict } => match codes[pos] {
                MISSING_CODE => ValueRef::Missing,
                c => ValueRef::Text(&dict[c as usize]),
            },
        }
    }

    fn take(&self, positions: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(positions.iter().map(|&p| v[p]).collect()),
            ColumnData::Text { codes, dict } => ColumnData::Text {
                codes: positions.iter().map(|&p| codes[p]).collect(),
                dict: dict.clone(),
            },
        }
    }

    fn domain(&self) -> Domain {
        match self {
            ColumnData::Numeric(v) => {
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                for &x in v.iter().filter(|x| !x.is_nan()) {
                    min = min.min(x);
                    max = max.max(x);
                }
                if min.is_finite() || max.is_finite() {
                    Domain::Range { min, max }
                } else {
                    Domain::Empty
                }
            }
            ColumnData::Text { codes, .. } => {
                let distinct: HashSet<u32> = codes.iter().copied().filter(|&c| c != MISSING_CODE).collect();
                if distinct.is_empty() {
                    Domain::Empty
                } else {
                    Domain::Categories { distinct: distinct.len() }
                }
            }
        }
    }
}

/// One row, materialized for display and export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Row {
    pub row_id: RowId,
    pub cells: Vec<Value>,
}

/// An immutable table with stable row identities.
#[derive(Clone, Debug)]
pub struct Table {
    schema: Schema,
    row_ids: Vec<RowId>,
    columns: Vec<ColumnData>,
}

/// Options for [`load_csv`] and schema inference.
#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub missing_tokens: Vec<String>,
    /// Fraction of parseable non-missing values needed for a continuous column.
    pub continuous_threshold: f64,
    /// Per-column kind overrides, bypassing inference.
    pub kind_overrides: HashMap<String, ColumnKind>,
    /// Number of leading rows sampled for inference; `0` samples every row.
    pub infer_sample: usize,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
            missing_tokens: ["", "NaN", "nan", "NULL"].iter().map(|s| s.to_string()).collect(),
            continuous_threshold: 0.95,
            kind_overrides: HashMap::new(),
            infer_sample: 10_000,
        }
    }
}

impl CsvOptions {
    fn is_missing(&self, s: &str) -> bool {
        self.missing_tokens.iter().any(|t| t == s)
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Infers column kinds from sampled rows.
///
/// A column is continuous iff at least `continuous_threshold` of its sampled
/// non-missing values parse as finite numbers. All-missing columns are
/// categorical.
pub fn infer_schema<S: AsRef<str>>(names: &[String], rows: &[Vec<S>], opts: &CsvOptions) -> Schema {
    let columns = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut present = 0usize;
            let mut numeric = 0usize;
            let mut distinct = HashSet::new();
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for row in rows {
                let s = row[j].as_ref();
                if opts.is_missing(s) {
                    continue;
                }
                present += 1;
                distinct.insert(s);
                if let Some(x) = parse_number(s) {
                    numeric += 1;
                    min = min.min(x);
                    max = max.max(x);
                }
            }
            let kind = match opts.kind_overrides.get(name) {
                Some(k) => *k,
                None if present > 0 && numeric as f64 >= opts.continuous_threshold * present as f64 => {
                    ColumnKind::Continuous
                }
                None => ColumnKind::Categorical,
            };
            let domain = match (kind, present) {
                (_, 0) => Domain::Empty,
                (ColumnKind::Continuous, _) if numeric > 0 => Domain::Range { min, max },
                (ColumnKind::Continuous, _) => Domain::Empty,
                (ColumnKind::Categorical, _) => Domain::Categories { distinct: distinct.len() },
            };
            ColumnSpec { name: name.clone(), kind, domain }
        })
        .collect();
    Schema { columns }
}

/// Reads an RFC 4180 CSV stream into a table.
///
/// Row ids are the 0-based data-row order of the source.
pub fn load_csv<R: Read>(source: R, opts: &CsvOptions) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(false)
        .from_reader(source);

    let map_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        let message = match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                format!("expected {expected_len} fields, found {len}")
            }
            _ => e.to_string(),
        };
        Error::Parse { line, message }
    };

    let mut names: Vec<String> = if opts.has_header {
        reader.headers().map_err(map_err)?.iter().map(|s| s.trim().to_string()).collect()
    } else {
        Vec::new()
    };

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(map_err)?;
        if !opts.has_header && names.is_empty() {
            names = (0..rec.len()).map(|i| format!("column_{}", i + 1)).collect();
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyTable);
    }
    if names.len() != records[0].len() {
        return Err(Error::Parse {
            line: 2,
            message: format!("expected {} fields, found {}", names.len(), records[0].len()),
        });
    }

    let sample_len = if opts.infer_sample == 0 { records.len() } else { opts.infer_sample.min(records.len()) };
    let sample: Vec<Vec<&str>> = records[..sample_len].iter().map(|r| r.iter().collect()).collect();
    let schema = infer_schema(&names, &sample, opts);
    schema.check_unique()?;
    drop(sample);

    let columns = (0..names.len())
        .map(|j| build_column(schema.columns[j].kind, records.iter().map(|r| &r[j]), opts))
        .collect();
    let row_ids = (0..records.len() as RowId).collect();
    Table::from_parts(schema, row_ids, columns)
}

fn build_column<'a>(kind: ColumnKind, cells: impl Iterator<Item = &'a str>, opts: &CsvOptions) -> ColumnData {
    match kind {
        ColumnKind::Continuous => ColumnData::Numeric(
            cells
                .map(|s| if opts.is_missing(s) { f64::NAN } else { parse_number(s).unwrap_or(f64::NAN) })
                .collect(),
        ),
        ColumnKind::Categorical => {
            let mut lookup: HashMap<&str, u32> = HashMap::new();
            let mut dict: Vec<String> = Vec::new();
            let codes = cells
                .map(|s| {
                    if opts.is_missing(s) {
                        return MISSING_CODE;
                    }
                    *lookup.entry(s).or_insert_with(|| {
                        dict.push(s.to_string());
                        (dict.len() - 1) as u32
                    })
                })
                .collect();
            ColumnData::Text { codes, dict: dict.into() }
        }
    }
}

impl Table {
    pub(crate) fn from_parts(mut schema: Schema, row_ids: Vec<RowId>, columns: Vec<ColumnData>) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(Error::Parameter("schema and column count differ".into()));
        }
        if columns.iter().any(|c| c.len() != row_ids.len()) {
            return Err(Error::Parameter("ragged column data".into()));
        }
        if row_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("row ids must be strictly increasing".into()));
        }
        for (spec, data) in schema.columns.iter_mut().zip(&columns) {
            spec.domain = data.domain();
        }
        Ok(Self { schema, row_ids, columns })
    }

    /// Builds a table from owned values, inferring column kinds.
    ///
    /// Numbers, and text that parses as a number, feed continuous inference;
    /// the resulting continuous columns hold only numbers and missing cells.
    pub fn from_values(names: &[&str], rows: Vec<Vec<Value>>) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let text: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| match v {
                        Value::Missing => String::new(),
                        other => other.to_string(),
                    })
                    .collect()
            })
            .collect();
        Self::from_text_rows(&names, &text, &CsvOptions { infer_sample: 0, ..CsvOptions::default() })
    }

    /// Builds a table from string cells, as [`load_csv`] would.
    pub fn from_text_rows<S: AsRef<str>>(names: &[String], rows: &[Vec<S>], opts: &CsvOptions) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != names.len()) {
            return Err(Error::Parse {
                line: i as u64 + 2,
                message: format!("expected {} fields, found {}", names.len(), rows[i].len()),
            });
        }
        let sample_len = if opts.infer_sample == 0 { rows.len() } else { opts.infer_sample.min(rows.len()) };
        let schema = infer_schema(names, &rows[..sample_len], opts);
        schema.check_unique()?;
        let columns = (0..names.len())
            .map(|j| build_column(schema.columns[j].kind, rows.iter().map(|r| r[j].as_ref()), opts))
            .collect();
        Table::from_parts(schema, (0..rows.len() as RowId).collect(), columns)
    }

    /// Builds a table of continuous columns directly from numbers (`NaN` = missing).
    pub fn from_numeric_columns(names: &[String], columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.len());
        if n == 0 {
            return Err(Error::EmptyTable);
        }
        let schema = Schema {
            columns: names
                .iter()
                .map(|name| ColumnSpec { name: name.clone(), kind: ColumnKind::Continuous, domain: Domain::Empty })
                .collect(),
        };
        schema.check_unique()?;
        Table::from_parts(schema, (0..n as RowId).collect(), columns.into_iter().map(ColumnData::Numeric).collect())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn row_ids(&self) -> &[RowId] {
        &self.row_ids
    }

    pub fn position_of(&self, row_id: RowId) -> Option<usize> {
        self.row_ids.binary_search(&row_id).ok()
    }

    pub fn get(&self, pos: usize, col: usize) -> ValueRef<'_> {
        self.columns[col].get(pos)
    }

    pub fn value(&self, pos: usize, col: usize) -> Value {
        self.get(pos, col).to_owned()
    }

    pub fn row(&self, pos: usize) -> Row {
        Row { row_id: self.row_ids[pos], cells: (0..self.n_cols()).map(|j| self.value(pos, j)).collect() }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row> + '_ {
        (0..self.n_rows()).map(|p| self.row(p))
    }

    pub(crate) fn column_data(&self, col: usize) -> &ColumnData {
        &self.columns[col]
    }

    /// Positions (in this table) → new table with those rows and the given columns.
    pub fn take(&self, positions: &[usize], columns: &[usize]) -> Table {
        let schema = Schema { columns: columns.iter().map(|&j| self.schema.columns[j].clone()).collect() };
        let data = columns.iter().map(|&j| self.columns[j].take(positions)).collect();
        let row_ids = positions.iter().map(|&p| self.row_ids[p]).collect();
        // positions come from this table in increasing order, so ids stay sorted
        Table::from_parts(schema, row_ids, data).expect("take preserves table invariants")
    }

    /// Restricts to the given row ids (in table order); unknown ids are ignored.
    pub fn select_rows(&self, row_ids: &[RowId]) -> Table {
        let mut positions: Vec<usize> = row_ids.iter().filter_map(|&r| self.position_of(r)).collect();
        positions.sort_unstable();
        positions.dedup();
        self.take(&positions, &(0..self.n_cols()).collect::<Vec<_>>())
    }

    /// Projects onto named columns, keeping schema order.
    pub fn project(&self, names: &[String]) -> Result<Table> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let j = self
                .schema
                .index_of(name)
                .ok_or_else(|| Error::Query(format!("unknown column {name:?}")))?;
            cols.push(j);
        }
        cols.sort_unstable();
        cols.dedup();
        Ok(self.take(&(0..self.n_rows()).collect::<Vec<_>>(), &cols))
    }

    /// Maps every string cell through `f`, leaving numeric cells untouched.
    pub(crate) fn map_text(&self, f: impl Fn(&str) -> String) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                ColumnData::Numeric(v) => ColumnData::Numeric(v.clone()),
                ColumnData::Text { codes, dict } => {
                    // normalization may merge dictionary entries
                    let mut lookup: HashMap<String, u32> = HashMap::new();
                    let mut new_dict: Vec<String> = Vec::new();
                    let remap: Vec<u32> = dict
                        .iter()
                        .map(|s| {
                            let t = f(s);
                            *lookup.entry(t.clone()).or_insert_with(|| {
                                new_dict.push(t);
                                (new_dict.len() - 1) as u32
                            })
                        })
                        .collect();
                    ColumnData::Text {
                        codes: codes.iter().map(|&c| if c == MISSING_CODE { c } else { remap[c as usize] }).collect(),
                        dict: new_dict.into(),
                    }
                }
            })
            .collect();
        Table::from_parts(self.schema.clone(), self.row_ids.clone(), columns).expect("same shape")
    }

    /// Writes the table as CSV with a header row; missing cells are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.names()).map_err(csv_io)?;
        for p in 0..self.n_rows() {
            let rec: Vec<String> = (0..self.n_cols())
                .map(|j| match self.get(p, j) {
                    ValueRef::Missing => String::new(),
                    ValueRef::Number(x) => format_number(x),
                    ValueRef::Text(s) => s.to_string(),
                })
                .collect();
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `{schema, rows}` JSON export.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": self.schema,
            "rows": self.rows().collect::<Vec<_>>(),
        })
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

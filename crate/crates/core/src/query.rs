//! Conjunctive selection-projection queries.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{format_number, ColumnData, ColumnKind, Schema, Table, ValueRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "in")]
    In,
}

impl Comparator {
    fn is_ordering(self) -> bool {
        matches!(self, Comparator::Lt | Comparator::Le | Comparator::Gt | Comparator::Ge)
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::In => "in",
        }
    }
}

/// A query literal. `null` in JSON denotes the missing value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Missing,
    Number(f64),
    Text(String),
    Set(Vec<Literal>),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Missing => f.write_str("NaN"),
            Literal::Number(x) => f.write_str(&format_number(*x)),
            Literal::Text(s) => write!(f, "{s:?}"),
            Literal::Set(items) => {
                f.write_str("[")?;
                for (i, l) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{l}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: Comparator,
    pub value: Literal,
}

impl Predicate {
    pub fn new(column: impl Into<String>, op: Comparator, value: Literal) -> Self {
        Self { column: column.into(), op, value }
    }

    /// Parses `COLUMN OP VALUE`, e.g. `CANCELLED = 1`, `DISTANCE >= 1500`,
    /// `AIRLINE in [aa, ua]`. `NaN`/`null` parse as the missing value.
    pub fn parse(text: &str) -> Result<Self> {
        const OPS: [(&str, Comparator); 8] = [
            ("<=", Comparator::Le),
            (">=", Comparator::Ge),
            ("!=", Comparator::Ne),
            ("<>", Comparator::Ne),
            ("=", Comparator::Eq),
            ("<", Comparator::Lt),
            (">", Comparator::Gt),
            (" in ", Comparator::In),
        ];
        let (pos, sym, op) = OPS
            .iter()
            .filter_map(|(sym, op)| text.find(sym).map(|p| (p, *sym, *op)))
            .min_by_key(|(p, sym, _)| (*p, std::cmp::Reverse(sym.len())))
            .ok_or_else(|| Error::Query(format!("no comparator in {text:?}")))?;
        let column = text[..pos].trim();
        let rhs = text[pos + sym.len()..].trim();
        if column.is_empty() || rhs.is_empty() {
            return Err(Error::Query(format!("malformed predicate {text:?}")));
        }
        let value = if op == Comparator::In {
            let inner = rhs
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| Error::Query(format!("`in` expects [a, b, ...], got {rhs:?}")))?;
            Literal::Set(inner.split(',').map(|s| parse_scalar(s.trim())).collect())
        } else {
            parse_scalar(rhs)
        };
        Ok(Self::new(column, op, value))
    }
}

fn parse_scalar(s: &str) -> Literal {
    if let Some(q) = s
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .or_else(|| s.strip_prefix('\'').and_then(|t| t.strip_suffix('\'')))
    {
        return Literal::Text(q.to_string());
    }
    match s {
        "NaN" | "null" | "NULL" => Literal::Missing,
        _ => match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Literal::Number(x),
            _ => Literal::Text(s.to_string()),
        },
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.op.symbol(), self.value)
    }
}

/// Conjunction of predicates plus an optional projection (empty = all columns).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SPQuery {
    #[serde(default)]
    pub predicates: Vec<Predicate>,
    #[serde(default)]
    pub projection: Vec<String>,
}

impl SPQuery {
    pub fn filter(predicates: Vec<Predicate>) -> Self {
        Self { predicates, projection: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.predicates.is_empty() && self.projection.is_empty()
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for name in &self.projection {
            if schema.index_of(name).is_none() {
                return Err(Error::Query(format!("unknown column {name:?} in projection")));
            }
        }
        for p in &self.predicates {
            let spec = schema
                .column(&p.column)
                .ok_or_else(|| Error::Query(format!("unknown column {:?}", p.column)))?;
            if p.op.is_ordering() && spec.kind != ColumnKind::Continuous {
                return Err(Error::Query(format!(
                    "comparator {} needs a continuous column, {:?} is categorical",
                    p.op.symbol(),
                    p.column
                )));
            }
            match (&p.op, &p.value) {
                (Comparator::In, Literal::Set(items)) => {
                    for item in items {
                        check_scalar(spec.kind, item, p)?;
                    }
                }
                (Comparator::In, _) => return Err(Error::Query(format!("`in` needs a set literal in {p}"))),
                (_, Literal::Set(_)) => return Err(Error::Query(format!("set literal needs `in` in {p}"))),
                (op, Literal::Missing) if op.is_ordering() => {
                    return Err(Error::Query(format!("cannot order against the missing value in {p}")))
                }
                (_, lit) => check_scalar(spec.kind, lit, p)?,
            }
        }
        Ok(())
    }
}

fn check_scalar(kind: ColumnKind, lit: &Literal, p: &Predicate) -> Result<()> {
    match (kind, lit) {
        (_, Literal::Missing) => Ok(()),
        (ColumnKind::Continuous, Literal::Number(_)) => Ok(()),
        (ColumnKind::Continuous, Literal::Text(s)) if s.trim().parse::<f64>().is_ok() => Ok(()),
        (ColumnKind::Categorical, Literal::Text(_) | Literal::Number(_)) => Ok(()),
        _ => Err(Error::Query(format!("literal type does not match column kind in {p}"))),
    }
}

fn literal_number(lit: &Literal) -> Option<f64> {
    match lit {
        Literal::Number(x) => Some(*x),
        Literal::Text(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn literal_text(lit: &Literal) -> Option<String> {
    match lit {
        Literal::Number(x) => Some(format_number(*x)),
        Literal::Text(s) => Some(s.clone()),
        _ => None,
    }
}

fn scalar_matches(cell: ValueRef<'_>, op: Comparator, lit: &Literal) -> bool {
    match (cell, lit) {
        (ValueRef::Missing, Literal::Missing) => op == Comparator::Eq,
        (_, Literal::Missing) => op == Comparator::Ne,
        // a missing cell satisfies no comparison against a value
        (ValueRef::Missing, _) => false,
        (ValueRef::Number(x), lit) => {
            let Some(y) = literal_number(lit) else { return false };
            match op {
                Comparator::Eq => x == y,
                Comparator::Ne => x != y,
                Comparator::Lt => x < y,
                Comparator::Le => x <= y,
                Comparator::Gt => x > y,
                Comparator::Ge => x >= y,
                Comparator::In => unreachable!(),
            }
        }
        (ValueRef::Text(s), lit) => {
            let Some(t) = literal_text(lit) else { return false };
            match op {
                Comparator::Eq => s == t,
                Comparator::Ne => s != t,
                _ => false,
            }
        }
    }
}

fn predicate_matches(cell: ValueRef<'_>, p: &Predicate) -> bool {
    match (&p.op, &p.value) {
        (Comparator::In, Literal::Set(items)) => items.iter().any(|l| scalar_matches(cell, Comparator::Eq, l)),
        (op, lit) => scalar_matches(cell, *op, lit),
    }
}

/// Evaluates `query` over `table`.
///
/// The result keeps the original row ids and row order; projected columns keep
/// schema order.
pub fn apply_query(table: &Table, query: &SPQuery) -> Result<Table> {
    query.validate(table.schema())?;
    let n = table.n_rows();
    let mut keep = vec![true; n];
    for p in &query.predicates {
        let j = table.schema().index_of(&p.column).expect("validated");
        match table.column_data(j) {
            ColumnData::Text { codes, dict } => {
                // evaluate once per dictionary entry
                let per_code: Vec<bool> =
                    dict.iter().map(|s| predicate_matches(ValueRef::Text(s), p)).collect();
                let missing = predicate_matches(ValueRef::Missing, p);
                for (k, &c) in keep.iter_mut().zip(codes) {
                    if *k {
                        *k = if c == u32::MAX { missing } else { per_code[c as usize] };
                    }
                }
            }
            ColumnData::Numeric(_) => {
                for (pos, k) in keep.iter_mut().enumerate() {
                    if *k {
                        *k = predicate_matches(table.get(pos, j), p);
                    }
                }
            }
        }
    }
    let positions: Vec<usize> = (0..n).filter(|&p| keep[p]).collect();
    let columns: Vec<usize> = if query.projection.is_empty() {
        (0..table.n_cols()).collect()
    } else {
        let mut cols: Vec<usize> =
            query.projection.iter().map(|c| table.schema().index_of(c).expect("validated")).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    };
    Ok(table.take(&positions, &columns))
}

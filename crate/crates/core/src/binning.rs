//! Value normalization and per-column binning.
//!
//! Continuous columns are cut at the deepest valleys of a Gaussian kernel
//! density estimate (Scott's bandwidth, 512-point grid); when the density has
//! too few valleys the column falls back to equal-frequency quantile cuts.
//! Categorical columns keep their most frequent values as singleton bins and
//! pool the tail into one `Other` bin. Every column gets a trailing `NaN` bin
//! for missing cells, so two missing values in a column share a bin.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::table::{format_number, ColumnData, RowId, Table, ValueRef};

/// Separator between column name and bin label inside a token.
pub const TOKEN_SEPARATOR: char = '\u{241F}';

pub type BinId = u16;

pub const DEFAULT_BINS: usize = 5;
const MAX_BINS: usize = 4096;
const KDE_GRID: usize = 512;
/// A density valley counts as a cut candidate only if it is at least this
/// deep relative to the lower of its two enclosing peaks.
const MIN_VALLEY_DEPTH: f64 = 0.2;

const MISSING_LABEL: &str = "NaN";
const OTHER_LABEL: &str = "Other";

/// Normalizes a string cell: strips control characters and the token
/// separator, trims, lower-cases and joins inner whitespace runs with `_`.
pub fn normalize_text(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .filter(|c| !c.is_control() && *c != TOKEN_SEPARATOR)
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join("_")
}

/// Applies [`normalize_text`] to every string cell; numeric cells are unchanged.
pub fn normalize_values(table: &Table) -> Table {
    table.map_text(normalize_text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Bin {
    pub bin_id: BinId,
    pub label: String,
    /// Inclusive lower bound of an interval bin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    /// Exclusive upper bound, inclusive for the topmost interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    /// Pool bin for every categorical value without its own bin.
    #[serde(default, skip_serializing_if = "is_false")]
    pub other: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub missing: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Bin {
    fn interval(bin_id: BinId, lo: f64, hi: f64, top: bool) -> Self {
        let label = format!("[{}, {}{}", format_number(lo), format_number(hi), if top { "]" } else { ")" });
        Self { bin_id, label, lo: Some(lo), hi: Some(hi), values: None, other: false, missing: false }
    }

    fn missing(bin_id: BinId) -> Self {
        Self {
            bin_id,
            label: MISSING_LABEL.into(),
            lo: None,
            hi: None,
            values: None,
            other: false,
            missing: true,
        }
    }

    pub fn is_interval(&self) -> bool {
        self.lo.is_some()
    }
}

/// The bins of one column. The missing-bin is always last.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnBins {
    pub column: String,
    pub bins: Vec<Bin>,
    value_index: HashMap<String, BinId>,
    other_bin: Option<BinId>,
}

impl ColumnBins {
    fn new(column: String, bins: Vec<Bin>) -> Self {
        let mut value_index = HashMap::new();
        let mut other_bin = None;
        for b in &bins {
            if b.other {
                other_bin = Some(b.bin_id);
            }
            if let Some(vals) = &b.values {
                for v in vals {
                    value_index.insert(v.clone(), b.bin_id);
                }
            }
        }
        Self { column, bins, value_index, other_bin }
    }

    pub fn missing_bin(&self) -> BinId {
        (self.bins.len() - 1) as BinId
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    fn intervals(&self) -> &[Bin] {
        let k = self.bins.iter().take_while(|b| b.is_interval()).count();
        &self.bins[..k]
    }

    fn number_bin(&self, x: f64) -> Option<BinId> {
        let iv = self.intervals();
        if iv.is_empty() {
            return self.text_bin(&format_number(x));
        }
        // bins are sorted; clamp values outside the observed range
        let idx = iv.partition_point(|b| b.lo.unwrap() <= x);
        Some(iv[idx.saturating_sub(1)].bin_id)
    }

    fn text_bin(&self, s: &str) -> Option<BinId> {
        if !self.intervals().is_empty() {
            return s.trim().parse::<f64>().ok().and_then(|x| self.number_bin(x));
        }
        self.value_index.get(s).copied().or(self.other_bin)
    }

    /// Bin of a single value, or `None` for an unseen categorical value
    /// when the column has no pool bin.
    pub fn bin_of(&self, v: ValueRef<'_>) -> Option<BinId> {
        match v {
            ValueRef::Missing => Some(self.missing_bin()),
            ValueRef::Number(x) => self.number_bin(x),
            ValueRef::Text(s) => self.text_bin(s),
        }
    }
}

/// Per-column bin definitions for a table.
#[derive(Clone, Debug, PartialEq)]
pub struct BinningMap {
    columns: Vec<ColumnBins>,
    pub bin_count: usize,
}

impl BinningMap {
    pub fn columns(&self) -> &[ColumnBins] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&ColumnBins> {
        self.columns.iter().find(|c| c.column == name)
    }

    /// Bin of `value` in `column` after normalization.
    pub fn bin_of(&self, column: &str, value: ValueRef<'_>) -> Option<BinId> {
        let cb = self.column(column)?;
        match value {
            ValueRef::Text(s) => cb.bin_of(ValueRef::Text(&normalize_text(s))),
            v => cb.bin_of(v),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Serialize for BinningMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.columns.len()))?;
        for c in &self.columns {
            map.serialize_entry(&c.column, &c.bins)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for BinningMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct MapVisitor;
        impl<'de> Visitor<'de> for MapVisitor {
            type Value = BinningMap;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from column name to bin list")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<BinningMap, A::Error> {
                let mut columns = Vec::new();
                while let Some((name, bins)) = access.next_entry::<String, Vec<Bin>>()? {
                    if bins.last().is_none_or(|b| !b.missing) {
                        return Err(serde::de::Error::custom(format!("column {name:?} lacks a trailing missing-bin")));
                    }
                    columns.push(ColumnBins::new(name, bins));
                }
                let bin_count = columns.iter().map(|c| c.len() - 1).max().unwrap_or(0);
                Ok(BinningMap { columns, bin_count })
            }
        }
        deserializer.deserialize_map(MapVisitor)
    }
}

/// Computes a binning for every column of a (normalized) table.
pub fn compute_binning(table: &Table, bins_per_column: usize) -> Result<BinningMap> {
    if !(1..=MAX_BINS).contains(&bins_per_column) {
        return Err(Error::Config(format!("bins per column must be in 1..={MAX_BINS}, got {bins_per_column}")));
    }
    if table.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let columns = (0..table.n_cols())
        .into_par_iter()
        .map(|j| {
            let name = table.schema().columns[j].name.clone();
            let mut bins = match table.column_data(j) {
                ColumnData::Numeric(v) => continuous_bins(v, bins_per_column),
                ColumnData::Text { codes, dict } => categorical_bins(codes, dict, bins_per_column),
            };
            bins.push(Bin::missing(bins.len() as BinId));
            ColumnBins::new(name, bins)
        })
        .collect();
    Ok(BinningMap { columns, bin_count: bins_per_column })
}

fn categorical_bins(codes: &[u32], dict: &[String], b: usize) -> Vec<Bin> {
    let mut counts = vec![0usize; dict.len()];
    for &c in codes.iter().filter(|&&c| c != u32::MAX) {
        counts[c as usize] += 1;
    }
    let mut order: Vec<usize> = (0..dict.len()).filter(|&i| counts[i] > 0).collect();
    order.sort_by(|&a, &c| counts[c].cmp(&counts[a]).then_with(|| dict[a].cmp(&dict[c])));

    let singleton = |id: usize, v: &str| Bin {
        bin_id: id as BinId,
        label: v.to_string(),
        lo: None,
        hi: None,
        values: Some(vec![v.to_string()]),
        other: false,
        missing: false,
    };
    if order.len() <= b {
        return order.iter().enumerate().map(|(id, &i)| singleton(id, &dict[i])).collect();
    }
    let mut bins: Vec<Bin> = order[..b - 1].iter().enumerate().map(|(id, &i)| singleton(id, &dict[i])).collect();
    let mut pooled: Vec<String> = order[b - 1..].iter().map(|&i| dict[i].clone()).collect();
    pooled.sort();
    bins.push(Bin {
        bin_id: (b - 1) as BinId,
        label: OTHER_LABEL.into(),
        lo: None,
        hi: None,
        values: Some(pooled),
        other: true,
        missing: false,
    });
    bins
}

fn continuous_bins(values: &[f64], b: usize) -> Vec<Bin> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);

    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= b {
        // one bin per observed value, split at midpoints
        let n = distinct.len();
        return distinct
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = if i == 0 { x } else { (distinct[i - 1] + x) / 2.0 };
                let hi = if i + 1 == n { x } else { (x + distinct[i + 1]) / 2.0 };
                Bin { label: format_number(x), ..Bin::interval(i as BinId, lo, hi, i + 1 == n) }
            })
            .collect();
    }

    let mut cuts = kde_cuts(&sorted, b).unwrap_or_else(|| quantile_cuts(&sorted, b));
    cuts = cuts.into_iter().map(round_sig).filter(|&c| c > min && c < max).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(min);
    edges.extend(cuts);
    edges.push(max);
    let k = edges.len() - 1;
    (0..k).map(|i| Bin::interval(i as BinId, edges[i], edges[i + 1], i + 1 == k)).collect()
}

fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let digits = 6 - 1 - x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits);
    (x * scale).round() / scale
}

/// Equal-frequency cut points.
pub(crate) fn quantile_cuts(sorted: &[f64], b: usize) -> Vec<f64> {
    let n = sorted.len();
    (1..b).map(|i| sorted[(i * n / b).min(n - 1)]).collect()
}

/// Gaussian KDE evaluated on a regular grid over `[min, max]`.
///
/// Values are linearly binned onto the grid and convolved with the kernel,
/// which keeps the cost independent of the number of values.
pub fn kde_grid(sorted: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = sorted.len() as f64;
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let step = (max - min) / (KDE_GRID - 1) as f64;
    let xs: Vec<f64> = (0..KDE_GRID).map(|i| min + i as f64 * step).collect();
    if step <= 0.0 {
        return (xs, vec![1.0; KDE_GRID]);
    }

    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    // Scott's rule
    let bandwidth = var.sqrt() * n.powf(-0.2);

    let mut weights = vec![0.0; KDE_GRID];
    for &x in sorted {
        let pos = (x - min) / step;
        let i = (pos.floor() as usize).min(KDE_GRID - 2);
        let frac = pos - i as f64;
        weights[i] += 1.0 - frac;
        weights[i + 1] += frac;
    }

    let h = bandwidth / step;
    let reach = ((4.0 * h).ceil() as usize).min(KDE_GRID - 1);
    let kernel: Vec<f64> = (0..=reach).map(|d| (-0.5 * (d as f64 / h).powi(2)).exp()).collect();
    let norm = 1.0 / (n * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let density = (0..KDE_GRID)
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(KDE_GRID - 1);
            (lo..=hi).map(|j| weights[j] * kernel[i.abs_diff(j)]).sum::<f64>() * norm
        })
        .collect();
    (xs, density)
}

/// Depth of each local minimum of `d`, relative to the lower of the two
/// peaks that enclose it. Returns `(grid index, relative depth)`.
pub(crate) fn valleys(d: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let n = d.len();
    let mut i = 1;
    while i + 1 < n {
        if d[i] < d[i - 1] {
            // walk across a flat bottom
            let mut j = i;
            while j + 1 < n && d[j + 1] == d[i] {
                j += 1;
            }
            if j + 1 < n && d[j + 1] > d[i] {
                let m = (i + j) / 2;
                let floor = d[i];
                let left = d[..i].iter().rev().take_while(|&&v| v >= floor).fold(floor, |a, &v| a.max(v));
                let right = d[j + 1..].iter().take_while(|&&v| v >= floor).fold(floor, |a, &v| a.max(v));
                let peak = left.min(right);
                if peak > 0.0 {
                    out.push((m, (peak - floor) / peak));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn kde_cuts(sorted: &[f64], b: usize) -> Option<Vec<f64>> {
    if b < 2 {
        return Some(Vec::new());
    }
    let (xs, density) = kde_grid(sorted);
    let mut minima: Vec<(usize, f64)> =
        valleys(&density).into_iter().filter(|&(_, depth)| depth >= MIN_VALLEY_DEPTH).collect();
    if minima.len() < b - 1 {
        return None;
    }
    minima.sort_by(|a, c| c.1.total_cmp(&a.1).then(a.0.cmp(&c.0)));
    let mut cuts: Vec<f64> = minima[..b - 1].iter().map(|&(i, _)| xs[i]).collect();
    cuts.sort_by(f64::total_cmp);
    Some(cuts)
}

/// A table rewritten into bin ids, column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedTable {
    row_ids: Vec<RowId>,
    columns: Vec<String>,
    cells: Vec<Vec<BinId>>,
    labels: Vec<Vec<String>>,
}

impl BinnedTable {
    /// Builds a binned table directly from bin ids and labels.
    pub fn from_parts(
        row_ids: Vec<RowId>,
        columns: Vec<String>,
        cells: Vec<Vec<BinId>>,
        labels: Vec<Vec<String>>,
    ) -> Result<Self> {
        if cells.len() != columns.len() || labels.len() != columns.len() {
            return Err(Error::Binning("column count mismatch".into()));
        }
        for (c, l) in cells.iter().zip(&labels) {
            if c.len() != row_ids.len() {
                return Err(Error::Binning("ragged binned column".into()));
            }
            if c.iter().any(|&b| b as usize >= l.len()) {
                return Err(Error::Binning("bin id without label".into()));
            }
        }
        Ok(Self { row_ids, columns, cells, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row_ids(&self) -> &[RowId] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn position_of(&self, row_id: RowId) -> Option<usize> {
        self.row_ids.binary_search(&row_id).ok()
    }

    #[inline]
    pub fn bin(&self, pos: usize, col: usize) -> BinId {
        self.cells[col][pos]
    }

    pub fn column_bins(&self, col: usize) -> &[BinId] {
        &self.cells[col]
    }

    pub fn n_bins(&self, col: usize) -> usize {
        self.labels[col].len()
    }

    pub fn label(&self, col: usize, bin: BinId) -> &str {
        &self.labels[col][bin as usize]
    }

    /// Column-qualified token string.
    pub fn token(&self, col: usize, bin: BinId) -> String {
        make_token(&self.columns[col], self.label(col, bin))
    }

    /// Tokens of every bin that occurs in the table.
    pub fn occurring_tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        for col in 0..self.n_cols() {
            let mut seen = vec![false; self.n_bins(col)];
            for &b in &self.cells[col] {
                seen[b as usize] = true;
            }
            out.extend((0..seen.len()).filter(|&b| seen[b]).map(|b| self.token(col, b as BinId)));
        }
        out
    }

    /// Keeps the given positions, in order.
    pub fn take_rows(&self, positions: &[usize]) -> BinnedTable {
        BinnedTable {
            row_ids: positions.iter().map(|&p| self.row_ids[p]).collect(),
            columns: self.columns.clone(),
            cells: self.cells.iter().map(|c| positions.iter().map(|&p| c[p]).collect()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Keeps the given positions and columns, in the given orders.
    pub fn project(&self, positions: &[usize], cols: &[usize]) -> BinnedTable {
        BinnedTable {
            row_ids: positions.iter().map(|&p| self.row_ids[p]).collect(),
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            cells: cols.iter().map(|&c| positions.iter().map(|&p| self.cells[c][p]).collect()).collect(),
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
        }
    }
}

pub fn make_token(column: &str, label: &str) -> String {
    format!("{column}{TOKEN_SEPARATOR}{label}")
}

/// Maps every cell of `table` to its bin under `map`.
pub fn apply_binning(table: &Table, map: &BinningMap) -> Result<BinnedTable> {
    let n = table.n_rows();
    let mut cells = Vec::with_capacity(table.n_cols());
    let mut labels = Vec::with_capacity(table.n_cols());
    for (j, spec) in table.schema().columns.iter().enumerate() {
        let cb = map
            .column(&spec.name)
            .ok_or_else(|| Error::Binning(format!("no bins for column {:?}", spec.name)))?;
        let unseen = |s: &str| Error::Binning(format!("value {s:?} of column {:?} fits no bin", spec.name));
        let col: Vec<BinId> = match table.column_data(j) {
            ColumnData::Text { codes, dict } => {
                let per_code = dict
                    .iter()
                    .map(|s| cb.bin_of(ValueRef::Text(s)).ok_or_else(|| unseen(s)))
                    .collect::<Result<Vec<_>>>();
                // dictionaries may carry values absent from this table
                let per_code: Vec<Option<BinId>> = match per_code {
                    Ok(v) => v.into_iter().map(Some).collect(),
                    Err(_) => dict.iter().map(|s| cb.bin_of(ValueRef::Text(s))).collect(),
                };
                let missing = cb.missing_bin();
                codes
                    .iter()
                    .map(|&c| {
                        if c == u32::MAX {
                            Ok(missing)
                        } else {
                            per_code[c as usize].ok_or_else(|| unseen(&dict[c as usize]))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            ColumnData::Numeric(_) => (0..n)
                .map(|p| {
                    let v = table.get(p, j);
                    cb.bin_of(v).ok_or_else(|| unseen(&v.to_owned().to_string()))
                })
                .collect::<Result<_>>()?,
        };
        cells.push(col);
        labels.push(cb.bins.iter().map(|b| b.label.clone()).collect());
    }
    Ok(BinnedTable {
        row_ids: table.row_ids().to_vec(),
        columns: table.schema().names().map(String::from).collect(),
        cells,
        labels,
    })
}

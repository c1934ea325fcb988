//! Embedding-based sub-table selection: average cell vectors into row and
//! column vectors, cluster them, and keep the member nearest each centroid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::binning::{BinId, BinnedTable};
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::kmeans::{centroid_representatives, Points};
use crate::metrics::{check_alpha, ScoreReport, Scorer, SubTable};
use crate::query::{apply_query, SPQuery};
use crate::rules::{filter_rules_by_targets, rule_holds, RuleSet};
use crate::table::{RowId, Table, Value};

/// The rows of `Q(T)` both as raw values and as bins.
#[derive(Clone, Debug)]
pub struct QueryView {
    pub table: Table,
    pub binned: BinnedTable,
}

impl QueryView {
    /// Evaluates `query` on the raw table and cuts the matching rows and
    /// columns out of the already binned full table.
    pub fn new(table: &Table, binned: &BinnedTable, query: Option<&SPQuery>) -> Result<Self> {
        let result = match query {
            Some(q) if !q.is_identity() => apply_query(table, q)?,
            _ => table.clone(),
        };
        let positions = result
            .row_ids()
            .iter()
            .map(|&r| binned.position_of(r).ok_or_else(|| Error::NotPreprocessed(format!("row {r} has no bins"))))
            .collect::<Result<Vec<_>>>()?;
        let cols = result
            .schema()
            .names()
            .map(|c| binned.column_index(c).ok_or_else(|| Error::NotPreprocessed(format!("column {c:?} has no bins"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { binned: binned.project(&positions, &cols), table: result })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionRequest {
    pub k: usize,
    pub l: usize,
    #[serde(default)]
    pub query: Option<SPQuery>,
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_seed() -> u64 {
    42
}

impl SelectionRequest {
    pub fn new(k: usize, l: usize) -> Self {
        Self { k, l, query: None, targets: Vec::new(), alpha: default_alpha(), seed: default_seed() }
    }

    pub fn with_targets(mut self, targets: &[&str]) -> Self {
        self.targets = targets.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_query(mut self, query: SPQuery) -> Self {
        self.query = Some(query);
        self
    }
}

/// `k`, `l` and target positions after validation against a view.
#[derive(Clone, Debug)]
pub struct Shape {
    pub k: usize,
    pub l: usize,
    pub targets: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Validates a request against the view, shrinking `k` and `l` to the view's
/// size with a warning.
pub fn resolve_shape(bt: &BinnedTable, k: usize, l: usize, targets: &[String]) -> Result<Shape> {
    resolve_shape_for(bt.n_rows(), bt.columns(), k, l, targets)
}

/// [`resolve_shape`] given only the view's row count and column names.
pub fn resolve_shape_for(n_rows: usize, columns: &[String], k: usize, l: usize, targets: &[String]) -> Result<Shape> {
    if k == 0 || l == 0 {
        return Err(Error::Parameter("k and l must be at least 1".into()));
    }
    if n_rows == 0 {
        return Err(Error::Selection("the query result has no rows".into()));
    }
    let mut t = Vec::new();
    for name in targets {
        let j = columns
            .iter()
            .position(|c| c == name).ok_or_else(|| Error::Parameter(format!("target column {name:?} is not in the query result")))?;
        if !t.contains(&j) {
            t.push(j);
        }
    }
    if t.len() > l {
        return Err(Error::Parameter(format!("{} target columns exceed l = {l}", t.len())));
    }
    let mut warnings = Vec::new();
    let k2 = k.min(n_rows);
    if k2 < k {
        warnings.push(format!("k reduced from {k} to {k2}, the number of rows"));
    }
    let l2 = l.min(columns.len());
    if l2 < l {
        warnings.push(format!("l reduced from {l} to {l2}, the number of columns"));
    }
    t.sort_unstable();
    Ok(Shape { k: k2, l: l2, targets: t, warnings })
}

/// Token vectors of every (column, bin) of `bt`; tokens the model lacks map
/// to `None` and count as zero vectors.
fn token_table<'m>(bt: &BinnedTable, model: &'m EmbeddingModel) -> Vec<Vec<Option<&'m [f32]>>> {
    (0..bt.n_cols())
        .map(|c| (0..bt.n_bins(c)).map(|b| model.vector(&bt.token(c, b as BinId)).ok()).collect())
        .collect()
}

/// One vector per row: the mean of its cells' token vectors.
pub fn row_vectors(bt: &BinnedTable, model: &EmbeddingModel) -> Points {
    let dim = model.dim();
    let tokens = token_table(bt, model);
    let (n, m) = (bt.n_rows(), bt.n_cols());
    let mut data = vec![0.0f64; n * dim];
    for c in 0..m {
        let bins = bt.column_bins(c);
        for (p, &b) in bins.iter().enumerate() {
            if let Some(v) = tokens[c][b as usize] {
                for (acc, x) in data[p * dim..(p + 1) * dim].iter_mut().zip(v) {
                    *acc += *x as f64;
                }
            }
        }
    }
    if m > 0 {
        let inv = 1.0 / m as f64;
        data.iter_mut().for_each(|x| *x *= inv);
    }
    Points::new(dim, data)
}

/// One vector per column not in `exclude`: the mean over rows of the
/// column's token vectors. Returns the column positions alongside.
pub fn column_vectors(bt: &BinnedTable, model: &EmbeddingModel, exclude: &[usize]) -> (Vec<usize>, Points) {
    let dim = model.dim();
    let tokens = token_table(bt, model);
    let n = bt.n_rows().max(1) as f64;
    let cols: Vec<usize> = (0..bt.n_cols()).filter(|c| !exclude.contains(c)).collect();
    let mut data = Vec::with_capacity(cols.len() * dim);
    for &c in &cols {
        let mut counts = vec![0usize; bt.n_bins(c)];
        for &b in bt.column_bins(c) {
            counts[b as usize] += 1;
        }
        let mut v = vec![0.0f64; dim];
        for (b, &cnt) in counts.iter().enumerate() {
            if let (true, Some(t)) = (cnt > 0, tokens[c][b]) {
                for (acc, x) in v.iter_mut().zip(t) {
                    *acc += cnt as f64 * *x as f64;
                }
            }
        }
        data.extend(v.into_iter().map(|x| x / n));
    }
    (cols, Points::new(dim, data))
}

/// Picks rows and columns of the view by clustering their vectors.
pub fn embedding_selection(bt: &BinnedTable, model: &EmbeddingModel, shape: &Shape, seed: u64) -> Result<SubTable> {
    let rows = centroid_representatives(bt.row_ids(), &row_vectors(bt, model), shape.k, seed)?;
    let mut cols = shape.targets.clone();
    let free = shape.l - shape.targets.len();
    if free > 0 {
        let (ids, points) = column_vectors(bt, model, &shape.targets);
        if !ids.is_empty() {
            let ids32: Vec<u32> = ids.iter().map(|&c| c as u32).collect();
            let picked = centroid_representatives(&ids32, &points, free.min(ids.len()), seed)?;
            cols.extend(picked.into_iter().map(|c| c as usize));
        }
    }
    cols.sort_unstable();
    Ok(SubTable::new("", rows, cols.into_iter().map(|c| bt.columns()[c].clone()).collect()))
}

/// Selects a k×l sub-table of `Q(T)` with the embedding model, then scores
/// and annotates it against `rules` when given.
pub fn select_subtable(
    table: &Table,
    binned: &BinnedTable,
    req: &SelectionRequest,
    model: &EmbeddingModel,
    rules: Option<&RuleSet>,
    highlight: bool,
) -> Result<SubTableResult> {
    check_alpha(req.alpha)?;
    let view = QueryView::new(table, binned, req.query.as_ref())?;
    let shape = resolve_shape(&view.binned, req.k, req.l, &req.targets)?;
    let sub = embedding_selection(&view.binned, model, &shape, req.seed)?;
    finish_result("embedding", &view, sub, rules, &req.targets, req.alpha, highlight, shape.warnings)
}

/// One highlighted rule on one selected row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Highlight {
    pub row_id: RowId,
    pub rule_id: usize,
    pub rule: serde_json::Value,
    pub cells: Vec<(RowId, String)>,
    pub color_index: usize,
}

/// Per selected row, the covered rule holding on it with the most cells
/// `|T_R|·|U_R|` (ties to the smaller rule id).
pub fn attach_highlights(scorer: &Scorer<'_>, sub: &SubTable) -> Result<Vec<Highlight>> {
    let bt = scorer.binned();
    let (rows, cols) = sub.resolve(bt)?;
    let covered = scorer.covered_rule_ids(&rows, &cols);
    let size = |id: usize| scorer.rule_rows(id).count_ones(..) * scorer.rule_columns(id).len();
    let mut out = Vec::new();
    for &p in &rows {
        let best = covered
            .iter()
            .copied()
            .filter(|&id| rule_holds(&scorer.rules().rules()[id], bt, p))
            .max_by(|&a, &b| size(a).cmp(&size(b)).then(b.cmp(&a)));
        if let Some(id) = best {
            let rule = &scorer.rules().rules()[id];
            let row_id = bt.row_ids()[p];
            let color_index = out.len();
            out.push(Highlight {
                row_id,
                rule_id: id,
                rule: scorer.rules().rule_json(rule),
                cells: rule.columns().iter().map(|&c| (row_id, bt.columns()[c as usize].clone())).collect(),
                color_index,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultRow {
    pub row_id: RowId,
    pub cells: BTreeMap<String, Value>,
}

/// A selected sub-table with its raw values, highlights and score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubTableResult {
    pub method: String,
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
    pub highlights: Vec<Highlight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreReport>,
    pub warnings: Vec<String>,
}

impl SubTableResult {
    pub fn sub_table(&self) -> SubTable {
        SubTable::new("", self.rows.iter().map(|r| r.row_id).collect(), self.columns.clone())
    }
}

/// Orders the sub-table canonically and attaches raw values, score and
/// (optionally) highlights. `rules` are filtered to the targets first.
#[allow(clippy::too_many_arguments)]
pub fn finish_result(
    method: &str,
    view: &QueryView,
    mut sub: SubTable,
    rules: Option<&RuleSet>,
    targets: &[String],
    alpha: f64,
    highlight: bool,
    warnings: Vec<String>,
) -> Result<SubTableResult> {
    sub.row_ids.sort_unstable();
    let schema: Vec<&str> = view.table.schema().names().collect();
    sub.columns.sort_by_key(|c| schema.iter().position(|s| s == c));
    let (positions, cols) = {
        let (_, cols) = sub.resolve(&view.binned)?;
        let positions: Vec<usize> = sub
            .row_ids
            .iter()
            .map(|&r| view.table.position_of(r).ok_or_else(|| Error::Selection(format!("row {r} not in the query result"))))
            .collect::<Result<_>>()?;
        (positions, cols)
    };
    let rows = positions
        .iter()
        .map(|&p| ResultRow {
            row_id: view.table.row_ids()[p],
            cells: cols.iter().map(|&c| (schema[c].to_string(), view.table.value(p, c))).collect(),
        })
        .collect();
    let (score, highlights) = match rules {
        Some(rs) => {
            let active = filter_rules_by_targets(rs, targets);
            let scorer = Scorer::new(&view.binned, &active);
            let score = scorer.score(&sub, alpha)?;
            let hl = if highlight { attach_highlights(&scorer, &sub)? } else { Vec::new() };
            (Some(score), hl)
        }
        None => (None, Vec::new()),
    };
    Ok(SubTableResult { method: method.to_string(), columns: sub.columns, rows, highlights, score, warnings })
}

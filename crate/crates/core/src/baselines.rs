//! Comparison selectors: best of random draws, k-means over one-hot encoded
//! rows, and a UCB bandit over individual rows and columns.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{centroid_representatives, Points};
use crate::metrics::{ScoreReport, Scorer, SubTable};
use crate::selection::Shape;
use crate::table::{ColumnData, Table};

pub const DEFAULT_UCB_C: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Random,
    NaiveClustering,
    MabUcb,
}

/// When to stop drawing. Whichever limit is hit first ends the run; at least
/// one draw always happens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DrawBudget {
    pub draws: Option<u64>,
    pub time: Option<Duration>,
}

impl DrawBudget {
    pub fn draws(n: u64) -> Self {
        Self { draws: Some(n), time: None }
    }

    pub fn time(d: Duration) -> Self {
        Self { draws: None, time: Some(d) }
    }

    fn exhausted(&self, done: u64, start: Instant) -> bool {
        if done == 0 {
            return false;
        }
        self.draws.is_some_and(|n| done >= n) || self.time.is_some_and(|t| start.elapsed() >= t)
            || (self.draws.is_none() && self.time.is_none())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Wall-clock budget for random draws.
    #[serde(default)]
    pub time_budget: Option<Duration>,
    /// Draws for random, rounds for the bandit.
    #[serde(default)]
    pub iterations: Option<u64>,
    #[serde(default = "default_ucb_c")]
    pub ucb_c: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_ucb_c() -> f64 {
    DEFAULT_UCB_C
}

/// Outcome of a scoring baseline.
#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub sub_table: SubTable,
    pub report: ScoreReport,
    pub evaluations: u64,
}

fn to_sub_table(scorer: &Scorer<'_>, rows: &[usize], cols: &[usize]) -> SubTable {
    let bt = scorer.binned();
    let mut rows: Vec<_> = rows.iter().map(|&p| bt.row_ids()[p]).collect();
    rows.sort_unstable();
    let mut cols = cols.to_vec();
    cols.sort_unstable();
    SubTable::new("", rows, cols.iter().map(|&c| bt.columns()[c].clone()).collect())
}

/// Keeps the highest combined score; earlier draws win ties.
fn keep_best(best: &mut Option<(ScoreReport, Vec<usize>, Vec<usize>)>, r: ScoreReport, rows: &[usize], cols: &[usize]) {
    if best.as_ref().is_none_or(|b| r.combined > b.0.combined) {
        *best = Some((r, rows.to_vec(), cols.to_vec()));
    }
}

/// Uniform random k-row, l-column sub-tables (targets always included);
/// returns the best one drawn within the budget.
pub fn random_best(scorer: &Scorer<'_>, shape: &Shape, alpha: f64, budget: DrawBudget, seed: u64) -> BaselineRun {
    let bt = scorer.binned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<usize> = (0..bt.n_cols()).filter(|c| !shape.targets.contains(c)).collect();
    let pick = shape.l - shape.targets.len();
    let start = Instant::now();
    let mut best = None;
    let mut done = 0;
    while !budget.exhausted(done, start) {
        let mut rows = sample(&mut rng, bt.n_rows(), shape.k).into_vec();
        rows.sort_unstable();
        let mut cols = shape.targets.clone();
        cols.extend(sample(&mut rng, free.len(), pick).into_iter().map(|i| free[i]));
        cols.sort_unstable();
        keep_best(&mut best, scorer.report(&rows, &cols, alpha), &rows, &cols);
        done += 1;
    }
    let (report, rows, cols) = best.expect("at least one draw");
    BaselineRun { sub_table: to_sub_table(scorer, &rows, &cols), report, evaluations: done }
}

/// Rows one-hot encoded (categorical) or min-max scaled (numeric).
fn one_hot_rows(table: &Table) -> Points {
    let n = table.n_rows();
    let mut blocks: Vec<(usize, Vec<f64>)> = Vec::new();
    for j in 0..table.n_cols() {
        match table.column_data(j) {
            ColumnData::Numeric(v) => blocks.push((1, scaled(v))),
            ColumnData::Text { codes, .. } => {
                // one dimension per value present, missing counts as a value
                let mut slot: HashMap<u32, usize> = HashMap::new();
                for &c in codes {
                    let next = slot.len();
                    slot.entry(c).or_insert(next);
                }
                let w = slot.len();
                let mut block = vec![0.0; n * w];
                for (p, c) in codes.iter().enumerate() {
                    block[p * w + slot[c]] = 1.0;
                }
                blocks.push((w, block));
            }
        }
    }
    let dim: usize = blocks.iter().map(|b| b.0).sum::<usize>().max(1);
    let mut data = vec![0.0; n * dim];
    for p in 0..n {
        let mut off = p * dim;
        for (w, block) in &blocks {
            data[off..off + w].copy_from_slice(&block[p * w..(p + 1) * w]);
            off += w;
        }
    }
    Points::new(dim, data)
}

/// Min-max scaling to [0, 1]; missing values and constant columns map to 0.
fn scaled(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v.iter().filter(|x| !x.is_nan()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    v.iter()
        .map(|&x| if x.is_nan() || hi <= lo { 0.0 } else { (x - lo) / (hi - lo) })
        .collect()
}

/// Each column as an n-vector: numeric columns min-max scaled, categorical
/// columns as their value codes in first-seen order, scaled the same way.
fn column_points(table: &Table, cols: &[usize]) -> Points {
    let n = table.n_rows();
    let mut data = Vec::with_capacity(cols.len() * n);
    for &j in cols {
        match table.column_data(j) {
            ColumnData::Numeric(v) => data.extend(scaled(v)),
            ColumnData::Text { codes, .. } => {
                let mut rank: HashMap<u32, f64> = HashMap::new();
                let ords: Vec<f64> = codes
                    .iter()
                    .map(|c| {
                        let next = rank.len() as f64;
                        *rank.entry(*c).or_insert(next)
                    })
                    .collect();
                data.extend(scaled(&ords));
            }
        }
    }
    Points::new(n.max(1), if n == 0 { vec![0.0; cols.len()] } else { data })
}

/// k-means over encoded rows and over columns as vectors; needs no
/// preprocessing artifacts.
pub fn naive_clustering(table: &Table, shape: &Shape, seed: u64) -> Result<SubTable> {
    if table.n_rows() == 0 {
        return Err(Error::Selection("the query result has no rows".into()));
    }
    let rows = centroid_representatives(table.row_ids(), &one_hot_rows(table), shape.k, seed)?;
    let mut cols = shape.targets.clone();
    let free: Vec<usize> = (0..table.n_cols()).filter(|c| !shape.targets.contains(c)).collect();
    let pick = (shape.l - shape.targets.len()).min(free.len());
    if pick > 0 {
        let ids: Vec<u32> = free.iter().map(|&c| c as u32).collect();
        let chosen = centroid_representatives(&ids, &column_points(table, &free), pick, seed)?;
        cols.extend(chosen.into_iter().map(|c| c as usize));
    }
    cols.sort_unstable();
    let names: Vec<String> = table.schema().names().map(String::from).collect();
    Ok(SubTable::new("", rows, cols.into_iter().map(|c| names[c].clone()).collect()))
}

/// Per-arm reward bookkeeping.
#[derive(Clone, Debug)]
struct Arms {
    pulls: Vec<u64>,
    reward: Vec<f64>,
    tiebreak: Vec<usize>,
}

impl Arms {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut tiebreak = vec![0; n];
        for (rank, &a) in order.iter().enumerate() {
            tiebreak[a] = rank;
        }
        Self { pulls: vec![0; n], reward: vec![0.0; n], tiebreak }
    }

    /// The `count` arms with the highest UCB index; unpulled arms rank first.
    fn top(&self, count: usize, t: u64, c: f64) -> Vec<usize> {
        let ln_t = (t as f64).ln();
        let index = |a: usize| {
            if self.pulls[a] == 0 {
                f64::INFINITY
            } else {
                let p = self.pulls[a] as f64;
                self.reward[a] / p + c * (ln_t / p).sqrt()
            }
        };
        let mut arms: Vec<(f64, usize)> = (0..self.pulls.len()).map(|a| (index(a), a)).collect();
        arms.sort_by(|x, y| y.0.total_cmp(&x.0).then(self.tiebreak[x.1].cmp(&self.tiebreak[y.1])));
        arms.into_iter().take(count).map(|(_, a)| a).collect()
    }

    fn credit(&mut self, arms: &[usize], r: f64) {
        for &a in arms {
            self.pulls[a] += 1;
            self.reward[a] += r;
        }
    }
}

/// Pull counts after a bandit run, for audits.
#[derive(Clone, Debug)]
pub struct MabTrace {
    pub row_pulls: Vec<u64>,
    pub column_pulls: Vec<u64>,
}

/// UCB bandit with one arm per row and per non-target column. Every round
/// plays the top-k rows and top-(l−|U*|) columns, scores that sub-table, and
/// credits the score to every arm played.
pub fn mab_ucb(scorer: &Scorer<'_>, shape: &Shape, alpha: f64, iterations: u64, ucb_c: f64, seed: u64) -> Result<(BaselineRun, MabTrace)> {
    if iterations == 0 {
        return Err(Error::Parameter("the bandit needs at least one iteration".into()));
    }
    let bt = scorer.binned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<usize> = (0..bt.n_cols()).filter(|c| !shape.targets.contains(c)).collect();
    let pick = shape.l - shape.targets.len();
    let mut row_arms = Arms::new(bt.n_rows(), &mut rng);
    let mut col_arms = Arms::new(free.len(), &mut rng);
    let mut best = None;
    for t in 1..=iterations {
        let mut rows = row_arms.top(shape.k, t, ucb_c);
        rows.sort_unstable();
        let col_idx = col_arms.top(pick, t, ucb_c);
        let mut cols = shape.targets.clone();
        cols.extend(col_idx.iter().map(|&i| free[i]));
        cols.sort_unstable();
        let r = scorer.report(&rows, &cols, alpha);
        row_arms.credit(&rows, r.combined);
        col_arms.credit(&col_idx, r.combined);
        keep_best(&mut best, r, &rows, &cols);
    }
    let (report, rows, cols) = best.expect("at least one round");
    Ok((
        BaselineRun { sub_table: to_sub_table(scorer, &rows, &cols), report, evaluations: iterations },
        MabTrace { row_pulls: row_arms.pulls, column_pulls: col_arms.pulls },
    ))
}

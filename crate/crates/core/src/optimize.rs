//! Direct optimizers: greedy row selection under a fixed column set, full and
//! randomized enumeration of column sets, and a brute-force oracle.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant};

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::BinnedTable;
use crate::error::{Error, Result};
use crate::metrics::{check_alpha, ScoreReport, Scorer, SubTable};
use crate::rules::RuleSet;

/// Largest number of column sets [`exact_column_selection`] will enumerate.
pub const EXACT_COMBO_LIMIT: f64 = 1e6;
/// Largest number of sub-tables [`brute_force_optimal`] will score.
pub const BRUTE_FORCE_LIMIT: f64 = 2e6;
const SCORE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OptimizerBudget {
    pub wall_clock_limit: Duration,
    pub max_column_combos: Option<u64>,
    pub random_seed: u64,
}

impl OptimizerBudget {
    pub fn new(wall_clock_limit: Duration, max_column_combos: Option<u64>, random_seed: u64) -> Result<Self> {
        if wall_clock_limit.is_zero() {
            return Err(Error::Parameter("wall-clock limit must be positive".into()));
        }
        Ok(Self { wall_clock_limit, max_column_combos, random_seed })
    }

    pub fn combos(max: u64, seed: u64) -> Self {
        Self { wall_clock_limit: Duration::from_secs(3600 * 24), max_column_combos: Some(max), random_seed: seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OptimizeResult {
    pub sub_table: SubTable,
    pub covered_cells: u64,
    pub coverage: f64,
    pub combos_visited: u64,
    /// False when the search stopped before visiting every column set.
    pub guaranteed: bool,
}

/// Outcome of one greedy run over a fixed column set.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyRun {
    pub positions: Vec<usize>,
    pub covered_cells: u64,
    /// Marginal cell gain of each added row; non-increasing.
    pub gains: Vec<u64>,
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Advances `c` (strictly increasing indices below `n`) to the next
/// combination in lexicographic order.
pub(crate) fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn all_combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(c.clone());
        if !next_combination(&mut c, n) {
            return out;
        }
    }
}

/// Greedy row selection on the columns `cols`: repeatedly adds the row with
/// the largest coverage gain, ties going to the smallest row id.
///
/// Rows are grouped by the set of eligible rules holding on them; rows of a
/// group have identical gains, so each group is evaluated once per step, and
/// stale gains are re-evaluated lazily (coverage is submodular in rows).
pub fn greedy_rows(scorer: &Scorer<'_>, cols: &[usize], k: usize) -> GreedyRun {
    let bt = scorer.binned();
    let n = bt.n_rows();
    let mut selected_col = vec![false; bt.n_cols()];
    for &c in cols {
        selected_col[c] = true;
    }
    let eligible: Vec<usize> = (0..scorer.rules().len())
        .filter(|&id| scorer.rule_columns(id).iter().all(|&c| selected_col[c as usize]))
        .collect();

    let mut signature: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (e, &id) in eligible.iter().enumerate() {
        for p in scorer.rule_rows(id).ones() {
            signature[p].push(e as u32);
        }
    }
    let mut group_of: HashMap<&[u32], usize> = HashMap::new();
    let mut groups: Vec<(Vec<u32>, Vec<usize>)> = Vec::new();
    for (p, sig) in signature.iter().enumerate() {
        if sig.is_empty() {
            continue;
        }
        let g = *group_of.entry(sig.as_slice()).or_insert_with(|| {
            groups.push((sig.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(p);
    }

    let mut active = vec![false; eligible.len()];
    let mut covered: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(n); bt.n_cols()];
    let gain_of = |sig: &[u32], active: &[bool], covered: &[FixedBitSet]| -> u64 {
        let mut fresh: HashMap<u32, FixedBitSet> = HashMap::new();
        for &e in sig.iter().filter(|&&e| !active[e as usize]) {
            let id = eligible[e as usize];
            for &c in scorer.rule_columns(id) {
                fresh.entry(c).or_insert_with(|| FixedBitSet::with_capacity(n)).union_with(scorer.rule_rows(id));
            }
        }
        fresh.iter().map(|(&c, set)| set.difference_count(&covered[c as usize]) as u64).sum()
    };

    // (gain, smallest candidate position, group, cursor, round evaluated)
    let mut heap: BinaryHeap<(u64, Reverse<usize>, usize, usize, usize)> = BinaryHeap::new();
    for (g, (sig, members)) in groups.iter().enumerate() {
        heap.push((gain_of(sig, &active, &covered), Reverse(members[0]), g, 0, 0));
    }

    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let mut gains = Vec::with_capacity(k);
    let mut round = 0;
    while chosen.len() < k {
        let Some((gain, Reverse(pos), g, cursor, at)) = heap.pop() else { break };
        if gain == 0 {
            break;
        }
        if at != round {
            let fresh = gain_of(&groups[g].0, &active, &covered);
            heap.push((fresh, Reverse(pos), g, cursor, round));
            continue;
        }
        chosen.push(pos);
        is_chosen[pos] = true;
        gains.push(gain);
        for &e in &groups[g].0 {
            if !active[e as usize] {
                active[e as usize] = true;
                let id = eligible[e as usize];
                for &c in scorer.rule_columns(id) {
                    covered[c as usize].union_with(scorer.rule_rows(id));
                }
            }
        }
        round += 1;
        // the rest of this group now gains nothing
        if cursor + 1 < groups[g].1.len() {
            heap.push((0, Reverse(groups[g].1[cursor + 1]), g, cursor + 1, round));
        }
    }
    // zero-gain fill by smallest row id
    let mut p = 0;
    while chosen.len() < k && p < n {
        if !is_chosen[p] {
            chosen.push(p);
            gains.push(0);
        }
        p += 1;
    }
    debug_assert!(gains.windows(2).all(|w| w[0] >= w[1]));
    let covered_cells = gains.iter().sum();
    GreedyRun { positions: chosen, covered_cells, gains }
}

/// Greedy row selection on a named column set.
pub fn greedy_row_selection(bt: &BinnedTable, columns: &[String], k: usize, rs: &RuleSet) -> Result<(SubTable, f64)> {
    if k > bt.n_rows() {
        return Err(Error::Parameter(format!("k = {k} exceeds the {} available rows", bt.n_rows())));
    }
    let scorer = Scorer::new(bt, rs);
    let cols = SubTable::new("", vec![], columns.to_vec()).resolve(bt)?.1;
    let run = greedy_rows(&scorer, &cols, k);
    let coverage = if scorer.upcov() == 0 { 0.0 } else { run.covered_cells as f64 / scorer.upcov() as f64 };
    Ok((SubTable::new("", run.positions.iter().map(|&p| bt.row_ids()[p]).collect(), columns.to_vec()), coverage))
}

struct Problem {
    targets: Vec<usize>,
    free: Vec<usize>,
    pick: usize,
}

fn problem(bt: &BinnedTable, k: usize, l: usize, targets: &[String]) -> Result<Problem> {
    let (n, m) = (bt.n_rows(), bt.n_cols());
    if k == 0 || l == 0 {
        return Err(Error::Parameter("k and l must be positive".into()));
    }
    if k > n {
        return Err(Error::Parameter(format!("k = {k} exceeds the {n} available rows")));
    }
    if l > m {
        return Err(Error::Parameter(format!("l = {l} exceeds the {m} available columns")));
    }
    let mut tcols = Vec::new();
    for t in targets {
        let c = bt.column_index(t).ok_or_else(|| Error::Parameter(format!("unknown target column {t:?}")))?;
        if !tcols.contains(&c) {
            tcols.push(c);
        }
    }
    if tcols.len() > l {
        return Err(Error::Parameter(format!("{} target columns do not fit in l = {l}", tcols.len())));
    }
    tcols.sort();
    let free = (0..m).filter(|c| !tcols.contains(c)).collect();
    Ok(Problem { pick: l - tcols.len(), targets: tcols, free })
}

impl Problem {
    fn columns(&self, combo: &[usize]) -> Vec<usize> {
        let mut cols: Vec<usize> = self.targets.iter().copied().chain(combo.iter().map(|&i| self.free[i])).collect();
        cols.sort();
        cols
    }

    fn total(&self) -> f64 {
        binomial(self.free.len(), self.pick)
    }
}

/// Better of two candidates: more covered cells, then the lexicographically
/// smaller column set.
fn better(a: &(u64, Vec<usize>, GreedyRun), b: &(u64, Vec<usize>, GreedyRun)) -> Ordering {
    a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1))
}

fn finish(bt: &BinnedTable, scorer: &Scorer<'_>, best: (u64, Vec<usize>, GreedyRun), visited: u64, guaranteed: bool) -> OptimizeResult {
    let (covered, cols, run) = best;
    OptimizeResult {
        sub_table: SubTable::new(
            "",
            run.positions.iter().map(|&p| bt.row_ids()[p]).collect(),
            cols.iter().map(|&c| bt.columns()[c].clone()).collect(),
        ),
        covered_cells: covered,
        coverage: if scorer.upcov() == 0 { 0.0 } else { covered as f64 / scorer.upcov() as f64 },
        combos_visited: visited,
        guaranteed,
    }
}

/// Runs greedy row selection on every column set of size `l` containing the
/// targets and keeps the best.
pub fn exact_column_selection(
    bt: &BinnedTable,
    k: usize,
    l: usize,
    rs: &RuleSet,
    targets: &[String],
) -> Result<OptimizeResult> {
    let p = problem(bt, k, l, targets)?;
    let total = p.total();
    if total > EXACT_COMBO_LIMIT {
        return Err(Error::TooLarge(format!(
            "{total:.0} column sets exceed the exhaustive limit of {EXACT_COMBO_LIMIT:.0}; use the semi-greedy optimizer"
        )));
    }
    let scorer = Scorer::new(bt, rs);
    let combos = all_combinations(p.free.len(), p.pick);
    let visited = combos.len() as u64;
    let best = combos
        .into_par_iter()
        .map(|combo| {
            let cols = p.columns(&combo);
            let run = greedy_rows(&scorer, &cols, k);
            (run.covered_cells, cols, run)
        })
        .max_by(better)
        .expect("at least one column set");
    Ok(finish(bt, &scorer, best, visited, true))
}

/// Like [`exact_column_selection`] but visits column sets in seeded random
/// order and stops when the budget runs out.
pub fn semi_greedy(
    bt: &BinnedTable,
    k: usize,
    l: usize,
    rs: &RuleSet,
    targets: &[String],
    budget: &OptimizerBudget,
) -> Result<OptimizeResult> {
    let p = problem(bt, k, l, targets)?;
    let scorer = Scorer::new(bt, rs);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.random_seed);
    let total = p.total();
    let start = Instant::now();
    let limit = budget.max_column_combos.unwrap_or(u64::MAX);

    let mut order: Box<dyn Iterator<Item = Vec<usize>>> = if total <= EXACT_COMBO_LIMIT {
        let mut combos = all_combinations(p.free.len(), p.pick);
        combos.shuffle(&mut rng);
        Box::new(combos.into_iter())
    } else {
        // too many to list: draw distinct random combinations
        let (nf, pick) = (p.free.len(), p.pick);
        let mut seen = HashSet::new();
        Box::new(std::iter::from_fn(move || loop {
            let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, nf, pick).into_vec();
            idx.sort();
            if seen.insert(idx.clone()) {
                return Some(idx);
            }
            let _ = rng.random::<u8>();
        }))
    };

    let mut best: Option<(u64, Vec<usize>, GreedyRun)> = None;
    let mut visited = 0u64;
    let mut exhausted = false;
    while visited < limit && (visited == 0 || start.elapsed() < budget.wall_clock_limit) {
        let Some(combo) = order.next() else {
            exhausted = true;
            break;
        };
        let cols = p.columns(&combo);
        let run = greedy_rows(&scorer, &cols, k);
        let cand = (run.covered_cells, cols, run);
        if best.as_ref().is_none_or(|b| better(&cand, b) == Ordering::Greater) {
            best = Some(cand);
        }
        visited += 1;
    }
    let exhausted = exhausted || visited as f64 >= total;
    Ok(finish(bt, &scorer, best.expect("visited at least one column set"), visited, exhausted))
}

/// Exact optimum of the combined score over every k×l sub-table.
pub fn brute_force_optimal(
    bt: &BinnedTable,
    k: usize,
    l: usize,
    rs: &RuleSet,
    alpha: f64,
) -> Result<(SubTable, ScoreReport)> {
    check_alpha(alpha)?;
    problem(bt, k, l, &[])?;
    let (n, m) = (bt.n_rows(), bt.n_cols());
    let total = binomial(n, k) * binomial(m, l);
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!("{total:.0} sub-tables exceed the brute-force limit of {BRUTE_FORCE_LIMIT:.0}")));
    }
    let scorer = Scorer::new(bt, rs);
    let row_sets = all_combinations(n, k);
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    for cols in all_combinations(m, l) {
        for rows in &row_sets {
            let r = scorer.report(rows, &cols, alpha);
            // strict improvement keeps the lexicographically first optimum
            if best.as_ref().is_none_or(|b| r.combined > b.0 + SCORE_EPS) {
                best = Some((r.combined, rows.clone(), cols.clone()));
            }
        }
    }
    let (_, rows, cols) = best.expect("non-empty search space");
    let report = scorer.report(&rows, &cols, alpha);
    let sub = SubTable::new(
        "",
        rows.iter().map(|&p| bt.row_ids()[p]).collect(),
        cols.iter().map(|&c| bt.columns()[c].clone()).collect(),
    );
    Ok((sub, report))
}

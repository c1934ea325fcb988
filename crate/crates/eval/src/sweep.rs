//! One-axis-at-a-time parameter sweeps over selection methods.
//!
//! Selectors that ignore the rules (embedding, naive) produce the same
//! sub-table at every rule or binning setting, so their output is computed
//! once per (seed, k, l, dim) and re-scored at each point. The embedding is
//! trained once per (seed, dim) with the base binning.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use subtab_core::artifacts::{mine_rules, preprocess, Method};
use subtab_core::baselines::{mab_ucb, naive_clustering, random_best, DrawBudget, DEFAULT_UCB_C};
use subtab_core::binning::{apply_binning, compute_binning, normalize_values, BinnedTable};
use subtab_core::config::Config;
use subtab_core::embedding::EmbeddingModel;
use subtab_core::metrics::{Scorer, SubTable};
use subtab_core::optimize::{semi_greedy, OptimizerBudget};
use subtab_core::rules::RuleSet;
use subtab_core::selection::{embedding_selection, resolve_shape};
use subtab_core::table::Table;
use subtab_core::{Error, Result};

use crate::report::{BenchmarkReport, BenchmarkRow};

/// Values to try per axis; an empty list leaves the axis at its base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SweepGrid {
    pub bins: Vec<usize>,
    pub support: Vec<f64>,
    pub confidence: Vec<f64>,
    pub alpha: Vec<f64>,
    pub k: Vec<usize>,
    pub l: Vec<usize>,
    /// Embedding dimension.
    pub dim: Vec<usize>,
}

/// Budget of the random baseline. With neither field set it gets the wall
/// clock the embedding selector used for the same seed and size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RandomBudget {
    pub draws: Option<u64>,
    pub millis: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SweepSpec {
    pub grid: SweepGrid,
    pub base: Config,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub random: RandomBudget,
    pub mab_iterations: u64,
    /// Column sets visited by the greedy optimizer.
    pub greedy_combos: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid: SweepGrid::default(),
            base: Config::default(),
            methods: vec![Method::Embedding, Method::Random, Method::Naive],
            seeds: vec![0],
            random: RandomBudget::default(),
            mab_iterations: 200,
            greedy_combos: 50,
        }
    }
}

/// One grid point: the base settings with one axis changed.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub axis: &'static str,
    pub value: f64,
    pub config: Config,
}

pub fn grid_points(grid: &SweepGrid, base: &Config) -> Vec<Point> {
    let mut out = Vec::new();
    let mut axis = |name: &'static str, values: Vec<f64>, set: &dyn Fn(&mut Config, f64)| {
        for v in values {
            let mut c = base.clone();
            set(&mut c, v);
            out.push(Point { axis: name, value: v, config: c });
        }
    };
    axis("bins", grid.bins.iter().map(|&v| v as f64).collect(), &|c, v| c.bins = v as usize);
    axis("support", grid.support.clone(), &|c, v| c.support = v);
    axis("confidence", grid.confidence.clone(), &|c, v| c.confidence = v);
    axis("alpha", grid.alpha.clone(), &|c, v| c.alpha = v);
    axis("k", grid.k.iter().map(|&v| v as f64).collect(), &|c, v| c.k = v as usize);
    axis("l", grid.l.iter().map(|&v| v as f64).collect(), &|c, v| c.l = v as usize);
    axis("dim", grid.dim.iter().map(|&v| v as f64).collect(), &|c, v| c.dim = v as usize);
    if out.is_empty() {
        out.push(Point { axis: "default", value: 0.0, config: base.clone() });
    }
    out
}

struct EvalSet {
    binned: BinnedTable,
    rules: RuleSet,
}

/// Runs every method at every grid point for every seed.
pub fn sweep_parameters(table: &Table, spec: &SweepSpec) -> Result<BenchmarkReport> {
    if spec.seeds.is_empty() || spec.methods.is_empty() {
        return Err(Error::Parameter("a sweep needs at least one seed and one method".into()));
    }
    spec.base.validate()?;
    let points = grid_points(&spec.grid, &spec.base);
    for p in &points {
        p.config.validate()?;
    }
    let norm = normalize_values(table);

    // evaluation binning and rules per (bins, support, confidence)
    let mut eval_sets: HashMap<(usize, u64, u64), EvalSet> = HashMap::new();
    for p in &points {
        let c = &p.config;
        let key = (c.bins, c.support.to_bits(), c.confidence.to_bits());
        if let std::collections::hash_map::Entry::Vacant(e) = eval_sets.entry(key) {
            let binned = apply_binning(&norm, &compute_binning(&norm, c.bins)?)?;
            let rules = mine_rules(&binned, c)?.ok_or_else(|| Error::Config("sweeps need rule mining".into()))?;
            e.insert(EvalSet { binned, rules });
        }
    }

    let mut models: HashMap<(u64, usize), (BinnedTable, EmbeddingModel)> = HashMap::new();
    let mut fixed: HashMap<(Method, u64, usize, usize, usize), (SubTable, f64)> = HashMap::new();
    let mut rows = Vec::new();
    for (pi, p) in points.iter().enumerate() {
        let c = &p.config;
        let eval = &eval_sets[&(c.bins, c.support.to_bits(), c.confidence.to_bits())];
        let scorer = Scorer::new(&eval.binned, &eval.rules);
        let shape = resolve_shape(&eval.binned, c.k, c.l, &[])?;
        for &seed in &spec.seeds {
            let mut embed_time = None;
            for &method in &spec.methods {
                let (sub, secs) = match method {
                    Method::Embedding | Method::Naive => {
                        let dim = if method == Method::Embedding { c.dim } else { 0 };
                        let key = (method, seed, shape.k, shape.l, dim);
                        if let std::collections::hash_map::Entry::Vacant(e) = fixed.entry(key) {
                            let out = if method == Method::Embedding {
                                let (bt, model) = model_for(&mut models, table, &spec.base, seed, c.dim)?;
                                let start = Instant::now();
                                let s = embedding_selection(bt, model, &shape, seed)?;
                                (s, start.elapsed().as_secs_f64())
                            } else {
                                let start = Instant::now();
                                let s = naive_clustering(table, &shape, seed)?;
                                (s, start.elapsed().as_secs_f64())
                            };
                            e.insert(out);
                        }
                        fixed[&key].clone()
                    }
                    Method::Random => {
                        let budget = match (spec.random.draws, spec.random.millis) {
                            (None, None) => {
                                let t = match embed_time {
                                    Some(t) => t,
                                    None => {
                                        let key = (Method::Embedding, seed, shape.k, shape.l, c.dim);
                                        if let std::collections::hash_map::Entry::Vacant(e) = fixed.entry(key) {
                                            let (bt, model) = model_for(&mut models, table, &spec.base, seed, c.dim)?;
                                            let start = Instant::now();
                                            let s = embedding_selection(bt, model, &shape, seed)?;
                                            e.insert((s, start.elapsed().as_secs_f64()));
                                        }
                                        fixed[&key].1
                                    }
                                };
                                DrawBudget::time(Duration::from_secs_f64(t))
                            }
                            (d, t) => DrawBudget { draws: d, time: t.map(Duration::from_millis) },
                        };
                        let start = Instant::now();
                        let run = random_best(&scorer, &shape, c.alpha, budget, seed);
                        (run.sub_table, start.elapsed().as_secs_f64())
                    }
                    Method::Mab => {
                        let start = Instant::now();
                        let run = mab_ucb(&scorer, &shape, c.alpha, spec.mab_iterations, DEFAULT_UCB_C, seed)?.0;
                        (run.sub_table, start.elapsed().as_secs_f64())
                    }
                    Method::Greedy => {
                        let start = Instant::now();
                        let budget = OptimizerBudget::combos(spec.greedy_combos, seed);
                        let run = semi_greedy(&eval.binned, shape.k, shape.l, &eval.rules, &[], &budget)?;
                        (run.sub_table, start.elapsed().as_secs_f64())
                    }
                };
                if method == Method::Embedding {
                    embed_time = Some(secs);
                }
                let report = scorer.score(&sub, c.alpha)?;
                rows.push((
                    pi,
                    BenchmarkRow {
                        method: method.as_str().to_string(),
                        axis: p.axis.to_string(),
                        value: p.value,
                        seed,
                        bins: c.bins,
                        support: c.support,
                        confidence: c.confidence,
                        alpha: c.alpha,
                        k: shape.k,
                        l: shape.l,
                        dim: c.dim,
                        cell_coverage: report.cell_coverage,
                        diversity: report.diversity,
                        combined: report.combined,
                        wall_clock: secs,
                    },
                ));
            }
        }
    }
    let order = |m: &str| spec.methods.iter().position(|x| x.as_str() == m).unwrap_or(usize::MAX);
    rows.sort_by(|(pa, a), (pb, b)| order(&a.method).cmp(&order(&b.method)).then(pa.cmp(pb)).then(a.seed.cmp(&b.seed)));
    Ok(BenchmarkReport { rows: rows.into_iter().map(|(_, r)| r).collect() })
}

fn model_for<'a>(
    models: &'a mut HashMap<(u64, usize), (BinnedTable, EmbeddingModel)>,
    table: &Table,
    base: &Config,
    seed: u64,
    dim: usize,
) -> Result<(&'a BinnedTable, &'a EmbeddingModel)> {
    if let std::collections::hash_map::Entry::Vacant(e) = models.entry((seed, dim)) {
        let cfg = Config { seed, dim, rule_mode: None, ..base.clone() };
        let art = preprocess(table, &cfg, &mut |_| {})?;
        e.insert((art.binned, art.model));
    }
    let (bt, m) = &models[&(seed, dim)];
    Ok((bt, m))
}

//! Synthetic tables with known association rules.
//!
//! Every row belongs to one cluster. A cluster fixes the level of a few
//! column triples (two antecedent columns and one consequent column per
//! planted rule); all other cells get a uniformly random level. Level `v`
//! of a column is written as `v * spacing` plus uniform jitter.
//!
//! Clusters use disjoint columns, so every column keeps all of its levels
//! populated and density-based binning finds one valley between each pair
//! of neighbouring levels.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use subtab_core::binning::{BinId, BinningMap};
use subtab_core::rules::{AssociationRule, Item, RuleSet};
use subtab_core::table::{Table, ValueRef};
use subtab_core::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlantedConfig {
    pub n: usize,
    pub m: usize,
    pub clusters: usize,
    pub rules_per_cluster: usize,
    /// Probability that a cell is replaced by a different random level.
    pub noise: f64,
    pub seed: u64,
    pub levels: usize,
    pub spacing: f64,
    /// Half-width of the uniform jitter added to every value.
    pub jitter: f64,
}

impl PlantedConfig {
    pub fn new(n: usize, m: usize, clusters: usize, rules_per_cluster: usize, noise: f64, seed: u64) -> Self {
        Self { n, m, clusters, rules_per_cluster, noise, seed, levels: 5, spacing: 10.0, jitter: 1.0 }
    }
}

/// A rule planted in one cluster, stated in levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlantedRule {
    pub cluster: usize,
    pub antecedent: Vec<(String, usize)>,
    pub consequent: Vec<(String, usize)>,
}

#[derive(Clone, Debug)]
pub struct PlantedTable {
    pub table: Table,
    pub rules: Vec<PlantedRule>,
    pub cluster_of: Vec<usize>,
    pub config: PlantedConfig,
}

pub fn column_name(j: usize) -> String {
    format!("c{j:02}")
}

/// [`generate_planted`] with 5 levels spaced 10 apart and ±1 jitter.
pub fn generate_planted_table(
    n: usize,
    m: usize,
    clusters: usize,
    rules_per_cluster: usize,
    noise: f64,
    seed: u64,
) -> Result<PlantedTable> {
    generate_planted(&PlantedConfig::new(n, m, clusters, rules_per_cluster, noise, seed))
}

pub fn generate_planted(cfg: &PlantedConfig) -> Result<PlantedTable> {
    let bad = |m: &str| Err(Error::Parameter(m.to_string()));
    if cfg.n == 0 || cfg.m == 0 || cfg.clusters == 0 {
        return bad("n, m and clusters must be positive");
    }
    if cfg.rules_per_cluster == 0 || 3 * cfg.rules_per_cluster * cfg.clusters > cfg.m {
        return bad("each planted rule needs three columns of its own");
    }
    if !(0.0..1.0).contains(&cfg.noise) {
        return bad("noise must lie in [0, 1)");
    }
    if cfg.levels < 2 {
        return bad("at least two levels are needed");
    }
    if cfg.jitter < 0.0 || 2.0 * cfg.jitter >= cfg.spacing {
        return bad("jitter must be below half the level spacing");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // per cluster: fixed level for some columns
    let mut profiles = vec![vec![None; cfg.m]; cfg.clusters];
    let mut rules = Vec::new();
    let per = 3 * cfg.rules_per_cluster;
    let all = sample(&mut rng, cfg.m, per * cfg.clusters).into_vec();
    for (c, profile) in profiles.iter_mut().enumerate() {
        for triple in all[c * per..(c + 1) * per].chunks(3) {
            let lv: Vec<usize> = triple.iter().map(|_| rng.random_range(0..cfg.levels)).collect();
            for (&j, &v) in triple.iter().zip(&lv) {
                profile[j] = Some(v);
            }
            rules.push(PlantedRule {
                cluster: c,
                antecedent: vec![(column_name(triple[0]), lv[0]), (column_name(triple[1]), lv[1])],
                consequent: vec![(column_name(triple[2]), lv[2])],
            });
        }
    }

    let cluster_of: Vec<usize> = (0..cfg.n).map(|_| rng.random_range(0..cfg.clusters)).collect();
    let mut columns = vec![Vec::with_capacity(cfg.n); cfg.m];
    for &c in &cluster_of {
        for (j, col) in columns.iter_mut().enumerate() {
            let mut level = profiles[c][j].unwrap_or_else(|| rng.random_range(0..cfg.levels));
            if cfg.noise > 0.0 && rng.random::<f64>() < cfg.noise {
                // a different level, uniformly
                let other = rng.random_range(0..cfg.levels - 1);
                level = if other >= level { other + 1 } else { other };
            }
            let jitter = if cfg.jitter > 0.0 { rng.random_range(-cfg.jitter..cfg.jitter) } else { 0.0 };
            col.push(level as f64 * cfg.spacing + jitter);
        }
    }
    let names: Vec<String> = (0..cfg.m).map(column_name).collect();
    let table = Table::from_numeric_columns(&names, columns)?;
    Ok(PlantedTable { table, rules, cluster_of, config: cfg.clone() })
}

impl PlantedTable {
    /// Central value of a level.
    pub fn level_value(&self, level: usize) -> f64 {
        level as f64 * self.config.spacing
    }

    /// The planted rules as rules over the bins of `binning`; `None` for a
    /// rule whose level centres fall outside every bin.
    pub fn rules_in(&self, binning: &BinningMap, rs: &RuleSet) -> Vec<Option<AssociationRule>> {
        let item = |(col, lv): &(String, usize)| -> Option<Item> {
            let bin: BinId = binning.bin_of(col, ValueRef::Number(self.level_value(*lv)))?;
            Some(Item::new(rs.column_index(col)?, bin))
        };
        self.rules
            .iter()
            .map(|r| {
                let a = r.antecedent.iter().map(item).collect::<Option<Vec<_>>>()?;
                let c = r.consequent.iter().map(item).collect::<Option<Vec<_>>>()?;
                AssociationRule::new(a, c, 0.0, 0.0).ok()
            })
            .collect()
    }

    /// Fraction of rows on which a planted rule holds in level terms.
    pub fn level_support(&self, rule: &PlantedRule) -> f64 {
        let cols: Vec<(usize, usize)> = rule
            .antecedent
            .iter()
            .chain(&rule.consequent)
            .map(|(c, lv)| (self.table.schema().index_of(c).expect("own column"), *lv))
            .collect();
        let hits = (0..self.table.n_rows())
            .filter(|&p| {
                cols.iter().all(|&(j, lv)| match self.table.get(p, j) {
                    ValueRef::Number(x) => (x / self.config.spacing).round() as usize == lv,
                    _ => false,
                })
            })
            .count();
        hits as f64 / self.table.n_rows() as f64
    }
}

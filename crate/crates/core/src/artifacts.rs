//! One-time preprocessing (normalize, bin, build corpus, embed, mine) and the
//! selection methods that run on its output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{mab_ucb, naive_clustering, random_best, DrawBudget, DEFAULT_UCB_C};
use crate::binning::{apply_binning, compute_binning, normalize_values, BinnedTable, BinningMap};
use crate::config::Config;
use crate::embedding::{build_corpus, train_embedding, EmbeddingModel};
use crate::error::{Error, Result};
use crate::metrics::Scorer;
use crate::optimize::exact_column_selection;
use crate::query::apply_query;
use crate::rules::{
    enumerate_rules_exhaustive, filter_rules_by_targets, min_count, mine_rules_apriori, mine_rules_per_target_bin,
    ExhaustiveConstraints, MiningMode, RuleSet,
};
use crate::selection::{
    embedding_selection, finish_result, resolve_shape, resolve_shape_for, QueryView, ResultRow, SelectionRequest, SubTableResult,
};
use crate::table::Table;

pub const DATA_DIR_ENV: &str = "SUBTAB_DATA_DIR";

/// Preprocessing stages, reported in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Normalize,
    Bin,
    Corpus,
    Embed,
    Mine,
}

/// Everything selection needs about one table.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub table: Table,
    pub binning: BinningMap,
    pub binned: BinnedTable,
    pub model: EmbeddingModel,
    pub rules: Option<RuleSet>,
    pub config: Config,
    pub key: String,
}

/// Content hash of the table plus the preprocessing settings.
pub fn cache_key(table: &Table, cfg: &Config) -> Result<String> {
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let mut h = Sha256::new();
    h.update(&csv);
    h.update([0]);
    h.update(cfg.preprocess_fingerprint().as_bytes());
    Ok(h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect())
}

/// Mines rules as configured; `None` when mining is switched off.
pub fn mine_rules(bt: &BinnedTable, cfg: &Config) -> Result<Option<RuleSet>> {
    let rs = match cfg.rule_mode {
        None => return Ok(None),
        Some(MiningMode::Apriori) => mine_rules_apriori(bt, cfg.support, cfg.confidence, cfg.min_rule_size)?,
        Some(MiningMode::PerTarget) => {
            mine_rules_per_target_bin(bt, &cfg.rule_targets, cfg.support, cfg.confidence, cfg.min_rule_size)?
        }
        Some(MiningMode::Exhaustive) => enumerate_rules_exhaustive(
            bt,
            &ExhaustiveConstraints {
                consequent_columns: (!cfg.rule_targets.is_empty()).then(|| cfg.rule_targets.clone()),
                min_rule_size: cfg.min_rule_size,
                min_absolute_support: min_count(cfg.support, bt.n_rows()),
                min_confidence: cfg.confidence,
                ..Default::default()
            },
        )?,
    };
    Ok(Some(rs))
}

/// Runs the whole preprocessing pipeline on `table`.
pub fn preprocess(table: &Table, cfg: &Config, progress: &mut dyn FnMut(Phase)) -> Result<Artifacts> {
    cfg.validate()?;
    if table.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    progress(Phase::Normalize);
    let norm = normalize_values(table);
    progress(Phase::Bin);
    let binning = compute_binning(&norm, cfg.bins)?;
    let binned = apply_binning(&norm, &binning)?;
    progress(Phase::Corpus);
    let corpus = build_corpus(&binned, cfg.corpus_cap, cfg.chunk, cfg.seed)?;
    progress(Phase::Embed);
    let model = train_embedding(&corpus, &cfg.train_params())?;
    let rules = if cfg.rule_mode.is_some() {
        progress(Phase::Mine);
        mine_rules(&binned, cfg)?
    } else {
        None
    };
    tracing::info!(rows = table.n_rows(), cols = table.n_cols(), rules = rules.as_ref().map(RuleSet::len), "preprocessed");
    Ok(Artifacts { table: table.clone(), binning, binned, model, rules, config: cfg.clone(), key: cache_key(table, cfg)? })
}

const BINNING_FILE: &str = "binning.json";
const MODEL_FILE: &str = "model.bin";
const MODEL_META_FILE: &str = "model.json";
const RULES_FILE: &str = "rules.json";
const RULES_LINES_FILE: &str = "rules.jsonl";
const CONFIG_FILE: &str = "config.json";

impl Artifacts {
    /// Writes every artifact into `dir`, replacing what was there.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let parent = dir.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(
            ".{}.tmp{}",
            dir.file_name().and_then(|s| s.to_str()).unwrap_or("artifacts"),
            std::process::id()
        ));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        fs::write(tmp.join(BINNING_FILE), self.binning.to_json()?)?;
        self.model.save(&tmp.join(MODEL_FILE), &tmp.join(MODEL_META_FILE))?;
        if let Some(rs) = &self.rules {
            fs::write(tmp.join(RULES_FILE), rs.to_json()?)?;
            fs::write(tmp.join(RULES_LINES_FILE), rs.to_json_lines())?;
        }
        fs::write(tmp.join(CONFIG_FILE), serde_json::to_string_pretty(&self.config)?)?;
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&tmp, dir)?;
        Ok(())
    }

    /// Reads artifacts written by [`Artifacts::save`] for `table`.
    pub fn load(table: &Table, dir: &Path) -> Result<Self> {
        let read = |f: &str| fs::read_to_string(dir.join(f)).map_err(|e| Error::NotPreprocessed(format!("{}: {e}", dir.join(f).display())));
        let config: Config = serde_json::from_str(&read(CONFIG_FILE)?)?;
        let binning = BinningMap::from_json(&read(BINNING_FILE)?)?;
        let binned = apply_binning(&normalize_values(table), &binning)?;
        let model = EmbeddingModel::load(&dir.join(MODEL_FILE), &dir.join(MODEL_META_FILE))?;
        let rules = if dir.join(RULES_FILE).exists() { Some(RuleSet::from_json(&read(RULES_FILE)?)?) } else { None };
        let key = cache_key(table, &config)?;
        Ok(Self { table: table.clone(), binning, binned, model, rules, config, key })
    }

    /// Loads cached artifacts from `data_dir/<key>` or computes and stores
    /// them. The flag tells whether the cache was hit.
    pub fn load_or_preprocess(
        table: &Table,
        cfg: &Config,
        data_dir: &Path,
        progress: &mut dyn FnMut(Phase),
    ) -> Result<(Self, bool)> {
        let dir = data_dir.join(cache_key(table, cfg)?);
        if dir.join(CONFIG_FILE).exists() {
            if let Ok(a) = Self::load(table, &dir) {
                return Ok((a, true));
            }
        }
        let a = preprocess(table, cfg, progress)?;
        a.save(&dir)?;
        Ok((a, false))
    }

    pub fn dir_in(&self, data_dir: &Path) -> PathBuf {
        data_dir.join(&self.key)
    }
}

/// Artifact directory root: `$SUBTAB_DATA_DIR`, else `./subtab-data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("subtab-data"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Embedding,
    Random,
    Naive,
    Greedy,
    Mab,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Embedding => "embedding",
            Method::Random => "random",
            Method::Naive => "naive",
            Method::Greedy => "greedy",
            Method::Mab => "mab",
        }
    }
}

pub const DEFAULT_RANDOM_TIME: Duration = Duration::from_secs(60);
pub const DEFAULT_MAB_ITERATIONS: u64 = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubtableRequest {
    #[serde(flatten)]
    pub selection: SelectionRequest,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub highlight: bool,
    /// Draws for `random`, rounds for `mab`.
    #[serde(default)]
    pub iterations: Option<u64>,
    /// Wall-clock budget for `random`, in milliseconds.
    #[serde(default)]
    pub time_budget_ms: Option<u64>,
}

impl SubtableRequest {
    pub fn new(selection: SelectionRequest, method: Method) -> Self {
        Self { selection, method, highlight: false, iterations: None, time_budget_ms: None }
    }

    fn draw_budget(&self) -> DrawBudget {
        match (self.iterations, self.time_budget_ms) {
            (None, None) => DrawBudget::time(DEFAULT_RANDOM_TIME),
            (d, t) => DrawBudget { draws: d, time: t.map(Duration::from_millis) },
        }
    }
}

/// Runs one selection request. Only `naive` works without artifacts.
pub fn run_selection(table: &Table, artifacts: Option<&Artifacts>, req: &SubtableRequest) -> Result<SubTableResult> {
    let sel = &req.selection;
    crate::metrics::check_alpha(sel.alpha)?;
    let Some(art) = artifacts else {
        if req.method != Method::Naive {
            return Err(Error::NotPreprocessed(format!("method {} needs preprocessing", req.method.as_str())));
        }
        return naive_without_artifacts(table, req);
    };
    let view = QueryView::new(&art.table, &art.binned, sel.query.as_ref())?;
    let shape = resolve_shape(&view.binned, sel.k, sel.l, &sel.targets)?;
    let rules = art.rules.as_ref();
    let need_rules = || rules.ok_or_else(|| Error::NotPreprocessed(format!("method {} needs mined rules", req.method.as_str())));
    let sub = match req.method {
        Method::Embedding => embedding_selection(&view.binned, &art.model, &shape, sel.seed)?,
        Method::Naive => naive_clustering(&view.table, &shape, sel.seed)?,
        Method::Random | Method::Mab => {
            let active = filter_rules_by_targets(need_rules()?, &sel.targets);
            let scorer = Scorer::new(&view.binned, &active);
            if req.method == Method::Random {
                random_best(&scorer, &shape, sel.alpha, req.draw_budget(), sel.seed).sub_table
            } else {
                let rounds = req.iterations.unwrap_or(DEFAULT_MAB_ITERATIONS);
                mab_ucb(&scorer, &shape, sel.alpha, rounds, DEFAULT_UCB_C, sel.seed)?.0.sub_table
            }
        }
        Method::Greedy => {
            let active = filter_rules_by_targets(need_rules()?, &sel.targets);
            exact_column_selection(&view.binned, shape.k, shape.l, &active, &sel.targets)?.sub_table
        }
    };
    finish_result(req.method.as_str(), &view, sub, rules, &sel.targets, sel.alpha, req.highlight, shape.warnings)
}

fn naive_without_artifacts(table: &Table, req: &SubtableRequest) -> Result<SubTableResult> {
    let sel = &req.selection;
    let q = match &sel.query {
        Some(q) => apply_query(table, q)?,
        None => table.clone(),
    };
    let names: Vec<String> = q.schema().names().map(String::from).collect();
    let shape = resolve_shape_for(q.n_rows(), &names, sel.k, sel.l, &sel.targets)?;
    let mut sub = naive_clustering(&q, &shape, sel.seed)?;
    sub.row_ids.sort_unstable();
    let rows = sub
        .row_ids
        .iter()
        .map(|&r| {
            let p = q.position_of(r).expect("selected from this table");
            ResultRow {
                row_id: r,
                cells: sub.columns.iter().map(|c| (c.clone(), q.value(p, q.schema().index_of(c).expect("own column")))).collect(),
            }
        })
        .collect();
    Ok(SubTableResult {
        method: Method::Naive.as_str().to_string(),
        columns: sub.columns,
        rows,
        highlights: Vec::new(),
        score: None,
        warnings: shape.warnings,
    })
}

//! Replaying exploration sessions: does the sub-table shown for one query
//! contain what the analyst used in the next query?

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use subtab_core::artifacts::{run_selection, Artifacts, Method, SubtableRequest};
use subtab_core::query::{Comparator, Literal, Predicate, SPQuery};
use subtab_core::selection::SelectionRequest;
use subtab_core::table::{Schema, ValueRef};
use subtab_core::{Error, Result};

use crate::planted::PlantedTable;

/// Something the next query used: a column (group-by, sort, projection) or
/// a selection term on a column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fragment {
    Value { column: String, value: Literal },
    Column { column: String },
}

impl Fragment {
    pub fn column(&self) -> &str {
        match self {
            Fragment::Value { column, .. } | Fragment::Column { column } => column,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(default)]
    pub query: SPQuery,
    #[serde(default)]
    pub fragments: Vec<Fragment>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub steps: Vec<Step>,
}

impl SessionLog {
    /// One step per non-blank line.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let step: Step = serde_json::from_str(line).map_err(|e| Error::SessionLog(format!("line {}: {e}", i + 1)))?;
            steps.push(step);
        }
        Ok(Self { steps })
    }

    pub fn to_jsonl(&self) -> String {
        self.steps.iter().map(|s| serde_json::to_string(s).expect("serializable") + "\n").collect()
    }

    /// Checks that every query and fragment refers to columns of `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::SessionLog("no steps".into()));
        }
        for (i, s) in self.steps.iter().enumerate() {
            s.query.validate(schema).map_err(|e| Error::SessionLog(format!("step {}: {e}", i + 1)))?;
            for f in &s.fragments {
                if schema.index_of(f.column()).is_none() {
                    return Err(Error::SessionLog(format!("step {}: unknown column {:?}", i + 1, f.column())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplayOptions {
    pub method: Method,
    pub k: usize,
    pub l: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Make the next step's fragment columns targets of the sub-table.
    pub force_targets: bool,
    /// Draws or rounds for the random and bandit baselines.
    pub iterations: Option<u64>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { method: Method::Embedding, k: 10, l: 5, alpha: 0.5, seed: 42, force_targets: false, iterations: Some(200) }
    }
}

/// Fragment counts, summed over steps (micro-averaged).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplayReport {
    pub column_captured: u64,
    pub column_total: u64,
    pub value_captured: u64,
    pub value_total: u64,
    /// Steps whose query left no rows.
    pub empty_steps: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl ReplayReport {
    pub fn captured(&self) -> u64 {
        self.column_captured + self.value_captured
    }

    pub fn total(&self) -> u64 {
        self.column_total + self.value_total
    }

    pub fn rate(&self) -> f64 {
        ratio(self.captured(), self.total())
    }

    pub fn column_rate(&self) -> f64 {
        ratio(self.column_captured, self.column_total)
    }

    pub fn value_rate(&self) -> f64 {
        ratio(self.value_captured, self.value_total)
    }

    pub fn merge(&mut self, o: &ReplayReport) {
        self.column_captured += o.column_captured;
        self.column_total += o.column_total;
        self.value_captured += o.value_captured;
        self.value_total += o.value_total;
        self.empty_steps += o.empty_steps;
    }
}

fn literal_values(l: &Literal) -> Vec<ValueRef<'_>> {
    match l {
        Literal::Missing => vec![ValueRef::Missing],
        Literal::Number(x) => vec![ValueRef::Number(*x)],
        Literal::Text(s) => match s.parse::<f64>() {
            Ok(x) => vec![ValueRef::Number(x), ValueRef::Text(s)],
            Err(_) => vec![ValueRef::Text(s)],
        },
        Literal::Set(items) => items.iter().flat_map(literal_values).collect(),
    }
}

/// Builds the sub-table of every step but the last and counts the next
/// step's fragments it captures. A value fragment is captured when its
/// column is shown and its literal falls in the bin of a shown cell.
pub fn replay_session(art: &Artifacts, log: &SessionLog, opts: &ReplayOptions) -> Result<ReplayReport> {
    log.validate(art.table.schema())?;
    let mut rep = ReplayReport::default();
    for pair in log.steps.windows(2) {
        let (now, next) = (&pair[0], &pair[1]);
        let mut targets: Vec<String> = Vec::new();
        if opts.force_targets {
            for f in &next.fragments {
                if !targets.iter().any(|t| t == f.column()) {
                    targets.push(f.column().to_string());
                }
            }
            targets.truncate(opts.l);
        }
        let sel = SelectionRequest {
            k: opts.k,
            l: opts.l,
            query: Some(now.query.clone()),
            targets,
            alpha: opts.alpha,
            seed: opts.seed,
        };
        let req = SubtableRequest { iterations: opts.iterations, ..SubtableRequest::new(sel, opts.method) };
        let shown = match run_selection(&art.table, Some(art), &req) {
            Ok(r) => Some(r),
            Err(Error::Selection(_)) => {
                rep.empty_steps += 1;
                None
            }
            Err(e) => return Err(e),
        };
        for f in &next.fragments {
            let hit = shown.as_ref().is_some_and(|res| {
                let col = f.column();
                if !res.columns.iter().any(|c| c == col) {
                    return false;
                }
                match f {
                    Fragment::Column { .. } => true,
                    Fragment::Value { value, .. } => {
                        let shown_bins: HashSet<_> = res
                            .rows
                            .iter()
                            .filter_map(|r| art.binning.bin_of(col, r.cells[col].as_value_ref()))
                            .collect();
                        literal_values(value)
                            .into_iter()
                            .filter_map(|v| art.binning.bin_of(col, v))
                            .any(|b| shown_bins.contains(&b))
                    }
                }
            });
            match f {
                Fragment::Column { .. } => {
                    rep.column_total += 1;
                    rep.column_captured += hit as u64;
                }
                Fragment::Value { .. } => {
                    rep.value_total += 1;
                    rep.value_captured += hit as u64;
                }
            }
        }
    }
    Ok(rep)
}

/// Replays several sessions and sums their counts.
pub fn replay_sessions(art: &Artifacts, logs: &[SessionLog], opts: &ReplayOptions) -> Result<ReplayReport> {
    let mut total = ReplayReport::default();
    for log in logs {
        total.merge(&replay_session(art, log, opts)?);
    }
    Ok(total)
}

/// Sessions of an analyst following planted rules: each session stays in
/// one cluster; every step narrows the query to the level of an antecedent
/// column of one of the cluster's rules and looks at that rule's consequent
/// column. With `values` false only column fragments are emitted.
pub fn generate_sessions(planted: &PlantedTable, count: usize, steps: usize, values: bool, seed: u64) -> Vec<SessionLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = planted.config.spacing / 2.0;
    (0..count)
        .map(|_| {
            let cluster = rng.random_range(0..planted.config.clusters);
            let rules: Vec<_> = planted.rules.iter().filter(|r| r.cluster == cluster).collect();
            let mut query = SPQuery::default();
            let mut log = SessionLog { steps: vec![Step { query: query.clone(), fragments: Vec::new() }] };
            for _ in 1..steps {
                let rule = rules.choose(&mut rng).expect("clusters have rules");
                let (col, lv) = &rule.antecedent[rng.random_range(0..rule.antecedent.len())];
                let centre = planted.level_value(*lv);
                let mut fragments = vec![Fragment::Column { column: rule.consequent[0].0.clone() }];
                if values {
                    fragments.push(Fragment::Value { column: col.clone(), value: Literal::Number(centre) });
                }
                if !query.predicates.iter().any(|p| &p.column == col) {
                    query.predicates.push(Predicate::new(col, Comparator::Ge, Literal::Number(centre - half)));
                    query.predicates.push(Predicate::new(col, Comparator::Lt, Literal::Number(centre + half)));
                }
                log.steps.push(Step { query: query.clone(), fragments });
            }
            log
        })
        .collect()
}

//! Association rules over binned tables.
//!
//! An item is a (column, bin) pair; a rule holds on a row when every item of
//! its antecedent and consequent matches. Rules index columns by position in
//! [`RuleSet::columns`], which must agree with the binned table they are
//! evaluated on (see [`RuleSet::align`]).

use std::collections::{HashMap, HashSet};

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{BinId, BinnedTable};
use crate::error::{Error, Result};
use crate::table::RowId;

const EPS: f64 = 1e-12;
/// Largest consequent Apriori produces.
pub const APRIORI_MAX_CONSEQUENT: usize = 2;
/// Column limit for exhaustive enumeration.
pub const EXHAUSTIVE_MAX_COLUMNS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Item {
    pub col: u32,
    pub bin: BinId,
}

impl Item {
    pub fn new(col: usize, bin: BinId) -> Self {
        Self { col: col as u32, bin }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationRule {
    antecedent: Vec<Item>,
    consequent: Vec<Item>,
    pub support: f64,
    pub confidence: f64,
}

impl AssociationRule {
    pub fn new(mut antecedent: Vec<Item>, mut consequent: Vec<Item>, support: f64, confidence: f64) -> Result<Self> {
        if antecedent.is_empty() || consequent.is_empty() {
            return Err(Error::Parameter("rule needs a non-empty antecedent and consequent".into()));
        }
        antecedent.sort();
        consequent.sort();
        let mut cols: Vec<u32> = antecedent.iter().chain(&consequent).map(|i| i.col).collect();
        cols.sort();
        if cols.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("rule mentions a column twice".into()));
        }
        if !(0.0..=1.0).contains(&support) || !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Parameter("support and confidence must lie in [0, 1]".into()));
        }
        Ok(Self { antecedent, consequent, support, confidence })
    }

    pub fn antecedent(&self) -> &[Item] {
        &self.antecedent
    }

    pub fn consequent(&self) -> &[Item] {
        &self.consequent
    }

    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.antecedent.iter().chain(&self.consequent)
    }

    /// Sorted column indices of the rule.
    pub fn columns(&self) -> Vec<u32> {
        let mut c: Vec<u32> = self.items().map(|i| i.col).collect();
        c.sort();
        c
    }

    pub fn len(&self) -> usize {
        self.antecedent.len() + self.consequent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn key(&self) -> (Vec<Item>, Vec<Item>) {
        (self.antecedent.clone(), self.consequent.clone())
    }
}

/// Whether `rule` holds on the row at position `pos`.
pub fn rule_holds(rule: &AssociationRule, bt: &BinnedTable, pos: usize) -> bool {
    rule.items().all(|i| bt.bin(pos, i.col as usize) == i.bin)
}

/// Row ids of every row on which `rule` holds.
pub fn matching_rows(rule: &AssociationRule, bt: &BinnedTable) -> Vec<RowId> {
    (0..bt.n_rows()).filter(|&p| rule_holds(rule, bt, p)).map(|p| bt.row_ids()[p]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningMode {
    Apriori,
    Exhaustive,
    PerTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: MiningMode,
    pub parameters: serde_json::Value,
}

/// A deduplicated, deterministically ordered set of rules.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleSet {
    columns: Vec<String>,
    labels: Vec<Vec<String>>,
    rules: Vec<AssociationRule>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct JsonItem {
    col: String,
    bin: BinId,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct JsonRule {
    antecedent: Vec<JsonItem>,
    consequent: Vec<JsonItem>,
    support: f64,
    confidence: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonRuleSet {
    provenance: Provenance,
    columns: Vec<String>,
    labels: Vec<Vec<String>>,
    rules: Vec<JsonRule>,
}

impl RuleSet {
    pub fn new(
        columns: Vec<String>,
        labels: Vec<Vec<String>>,
        rules: Vec<AssociationRule>,
        provenance: Provenance,
    ) -> Self {
        let mut seen = HashSet::new();
        let mut rules: Vec<AssociationRule> = rules.into_iter().filter(|r| seen.insert(r.key())).collect();
        rules.sort_by(|a, b| {
            a.len().cmp(&b.len()).then_with(|| a.antecedent.cmp(&b.antecedent)).then_with(|| a.consequent.cmp(&b.consequent))
        });
        Self { columns, labels, rules, provenance }
    }

    fn for_table(bt: &BinnedTable, rules: Vec<AssociationRule>, provenance: Provenance) -> Self {
        let labels = (0..bt.n_cols()).map(|c| (0..bt.n_bins(c)).map(|b| bt.label(c, b as BinId).to_string()).collect()).collect();
        Self::new(bt.columns().to_vec(), labels, rules, provenance)
    }

    /// A rule set over the same columns holding `rules`.
    pub fn with_rules(&self, rules: Vec<AssociationRule>) -> RuleSet {
        RuleSet::new(self.columns.clone(), self.labels.clone(), rules, self.provenance.clone())
    }

    pub fn rules(&self) -> &[AssociationRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn label(&self, item: Item) -> &str {
        &self.labels[item.col as usize][item.bin as usize]
    }

    /// Re-indexes the rules onto `columns`, dropping rules that mention a
    /// column not in the list.
    pub fn align(&self, columns: &[String]) -> RuleSet {
        if columns == self.columns.as_slice() {
            return self.clone();
        }
        let map: Vec<Option<u32>> =
            self.columns.iter().map(|c| columns.iter().position(|x| x == c).map(|p| p as u32)).collect();
        let remap = |items: &[Item]| -> Option<Vec<Item>> {
            items.iter().map(|i| map[i.col as usize].map(|col| Item { col, bin: i.bin })).collect()
        };
        let rules = self
            .rules
            .iter()
            .filter_map(|r| {
                let a = remap(&r.antecedent)?;
                let c = remap(&r.consequent)?;
                AssociationRule::new(a, c, r.support, r.confidence).ok()
            })
            .collect();
        let labels = columns
            .iter()
            .map(|c| self.column_index(c).map(|i| self.labels[i].clone()).unwrap_or_default())
            .collect();
        RuleSet::new(columns.to_vec(), labels, rules, self.provenance.clone())
    }

    fn json_items(&self, items: &[Item]) -> Vec<JsonItem> {
        items
            .iter()
            .map(|&i| JsonItem { col: self.columns[i.col as usize].clone(), bin: i.bin, label: self.label(i).to_string() })
            .collect()
    }

    fn json_rule(&self, r: &AssociationRule) -> JsonRule {
        JsonRule {
            antecedent: self.json_items(&r.antecedent),
            consequent: self.json_items(&r.consequent),
            support: r.support,
            confidence: r.confidence,
        }
    }

    /// One JSON object per rule, one rule per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&serde_json::to_string(&self.json_rule(r)).expect("rule serializes"));
            out.push('\n');
        }
        out
    }

    pub fn rule_json(&self, r: &AssociationRule) -> serde_json::Value {
        serde_json::to_value(self.json_rule(r)).expect("rule serializes")
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = JsonRuleSet {
            provenance: self.provenance.clone(),
            columns: self.columns.clone(),
            labels: self.labels.clone(),
            rules: self.rules.iter().map(|r| self.json_rule(r)).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: JsonRuleSet = serde_json::from_str(s)?;
        let index: HashMap<&str, usize> = doc.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let items = |v: &[JsonItem]| -> Result<Vec<Item>> {
            v.iter()
                .map(|i| {
                    let col = *index.get(i.col.as_str()).ok_or_else(|| Error::Format(format!("unknown rule column {:?}", i.col)))?;
                    if i.bin as usize >= doc.labels[col].len() {
                        return Err(Error::Format(format!("bin {} out of range for {:?}", i.bin, i.col)));
                    }
                    Ok(Item::new(col, i.bin))
                })
                .collect()
        };
        let rules = doc
            .rules
            .iter()
            .map(|r| AssociationRule::new(items(&r.antecedent)?, items(&r.consequent)?, r.support, r.confidence))
            .collect::<Result<Vec<_>>>()?;
        Ok(RuleSet::new(doc.columns, doc.labels, rules, doc.provenance))
    }
}

/// Row bitsets for every (column, bin) item of a binned table.
pub struct ItemTidsets {
    sets: Vec<Vec<FixedBitSet>>,
    n: usize,
}

impl ItemTidsets {
    pub fn build(bt: &BinnedTable) -> Self {
        let n = bt.n_rows();
        let sets = (0..bt.n_cols())
            .into_par_iter()
            .map(|c| {
                let mut col = vec![FixedBitSet::with_capacity(n); bt.n_bins(c)];
                for (p, &b) in bt.column_bins(c).iter().enumerate() {
                    col[b as usize].insert(p);
                }
                col
            })
            .collect();
        Self { sets, n }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn item(&self, i: Item) -> &FixedBitSet {
        &self.sets[i.col as usize][i.bin as usize]
    }

    /// Positions of rows matching every item.
    pub fn rows_of<'a>(&self, items: impl IntoIterator<Item = &'a Item>) -> FixedBitSet {
        let mut it = items.into_iter();
        let mut acc = match it.next() {
            Some(&first) => self.item(first).clone(),
            None => {
                let mut all = FixedBitSet::with_capacity(self.n);
                all.insert_range(..);
                return all;
            }
        };
        for &i in it {
            acc.intersect_with(self.item(i));
        }
        acc
    }

    pub fn rule_rows(&self, rule: &AssociationRule) -> FixedBitSet {
        self.rows_of(rule.items())
    }
}

fn check_thresholds(min_support: f64, min_confidence: f64, min_rule_size: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&min_support) || !(0.0..=1.0).contains(&min_confidence) {
        return Err(Error::Config("support and confidence thresholds must lie in [0, 1]".into()));
    }
    if min_rule_size < 2 {
        return Err(Error::Config(format!("minimum rule size must be at least 2, got {min_rule_size}")));
    }
    Ok(())
}

/// Smallest row count meeting a fractional support threshold.
pub fn min_count(min_support: f64, n: usize) -> usize {
    ((min_support * n as f64 - 1e-9).ceil() as usize).max(1)
}

/// Frequent itemsets (sorted items) with their row counts, level by level.
fn frequent_itemsets(bt: &BinnedTable, tids: &ItemTidsets, min_count: usize) -> HashMap<Vec<Item>, usize> {
    let mut all = HashMap::new();
    let mut level: Vec<(Vec<Item>, FixedBitSet)> = Vec::new();
    for c in 0..bt.n_cols() {
        for b in 0..bt.n_bins(c) {
            let item = Item::new(c, b as BinId);
            let set = tids.item(item);
            if set.count_ones(..) >= min_count {
                level.push((vec![item], set.clone()));
            }
        }
    }
    while !level.is_empty() {
        for (items, set) in &level {
            all.insert(items.clone(), set.count_ones(..));
        }
        level.sort_by(|a, b| a.0.cmp(&b.0));
        let k = level[0].0.len();
        // itemsets sharing their first k-1 items form contiguous blocks
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 1..=level.len() {
            if i == level.len() || level[i].0[..k - 1] != level[start].0[..k - 1] {
                blocks.push(start..i);
                start = i;
            }
        }
        let prev = &all;
        let next: Vec<(Vec<Item>, FixedBitSet)> = blocks
            .into_par_iter()
            .flat_map_iter(|block| {
                let level = &level;
                let mut out = Vec::new();
                for i in block.clone() {
                    for j in i + 1..block.end {
                        let (a, b) = (&level[i], &level[j]);
                        let (la, lb) = (a.0[k - 1], b.0[k - 1]);
                        if la.col == lb.col {
                            continue;
                        }
                        let mut cand = a.0.clone();
                        cand.push(lb);
                        // every k-subset must itself be frequent
                        let pruned = (0..k - 1).any(|skip| {
                            let sub: Vec<Item> =
                                cand.iter().enumerate().filter(|&(p, _)| p != skip).map(|(_, &x)| x).collect();
                            !prev.contains_key(&sub)
                        });
                        if pruned {
                            continue;
                        }
                        let mut set = a.1.clone();
                        set.intersect_with(&b.1);
                        if set.count_ones(..) >= min_count {
                            out.push((cand, set));
                        }
                    }
                }
                out
            })
            .collect();
        level = next;
    }
    all
}

/// Splits `items` into (antecedent, consequent) for every consequent of size
/// `1..=max_consequent` that leaves a non-empty antecedent.
fn partitions(items: &[Item], max_consequent: usize) -> Vec<(Vec<Item>, Vec<Item>)> {
    let s = items.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << s) - 1 {
        let size = mask.count_ones() as usize;
        if size > max_consequent {
            continue;
        }
        let (mut a, mut c) = (Vec::new(), Vec::new());
        for (p, &it) in items.iter().enumerate() {
            if mask & (1 << p) != 0 {
                c.push(it);
            } else {
                a.push(it);
            }
        }
        out.push((a, c));
    }
    out
}

/// Level-wise Apriori mining with thresholds relative to the table's rows.
pub fn mine_rules_apriori(
    bt: &BinnedTable,
    min_support: f64,
    min_confidence: f64,
    min_rule_size: usize,
) -> Result<RuleSet> {
    check_thresholds(min_support, min_confidence, min_rule_size)?;
    if bt.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let tids = ItemTidsets::build(bt);
    let rules = apriori_rules(bt, &tids, min_support, min_confidence, min_rule_size);
    let provenance = Provenance {
        mode: MiningMode::Apriori,
        parameters: serde_json::json!({
            "minSupport": min_support,
            "minConfidence": min_confidence,
            "minRuleSize": min_rule_size,
            "maxConsequentSize": APRIORI_MAX_CONSEQUENT,
        }),
    };
    Ok(RuleSet::for_table(bt, rules, provenance))
}

fn apriori_rules(
    bt: &BinnedTable,
    tids: &ItemTidsets,
    min_support: f64,
    min_confidence: f64,
    min_rule_size: usize,
) -> Vec<AssociationRule> {
    let n = bt.n_rows();
    let freq = frequent_itemsets(bt, tids, min_count(min_support, n));
    let mut sets: Vec<(&Vec<Item>, &usize)> = freq.iter().filter(|(s, _)| s.len() >= min_rule_size).collect();
    sets.sort();
    let mut rules = Vec::new();
    for (items, &count) in sets {
        for (a, c) in partitions(items, APRIORI_MAX_CONSEQUENT) {
            let conf = count as f64 / freq[&a] as f64;
            if conf + EPS >= min_confidence {
                rules.push(AssociationRule::new(a, c, count as f64 / n as f64, conf).expect("valid rule"));
            }
        }
    }
    rules
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ExhaustiveConstraints {
    /// When set, the consequent consists of exactly these columns.
    pub consequent_columns: Option<Vec<String>>,
    pub min_antecedent_size: usize,
    pub max_consequent_size: Option<usize>,
    /// Minimum total item count.
    pub min_rule_size: usize,
    pub min_absolute_support: usize,
    pub min_confidence: f64,
}

impl Default for ExhaustiveConstraints {
    fn default() -> Self {
        Self {
            consequent_columns: None,
            min_antecedent_size: 1,
            max_consequent_size: None,
            min_rule_size: 2,
            min_absolute_support: 1,
            min_confidence: 0.0,
        }
    }
}

/// Enumerates every rule meeting `constraints` by grouping rows on every
/// column subset. Refuses tables with more than
/// [`EXHAUSTIVE_MAX_COLUMNS`] columns.
pub fn enumerate_rules_exhaustive(bt: &BinnedTable, constraints: &ExhaustiveConstraints) -> Result<RuleSet> {
    let m = bt.n_cols();
    if m > EXHAUSTIVE_MAX_COLUMNS {
        return Err(Error::TooLarge(format!(
            "exhaustive enumeration supports at most {EXHAUSTIVE_MAX_COLUMNS} columns, table has {m}"
        )));
    }
    let n = bt.n_rows();
    let cons_mask: Option<u32> = match &constraints.consequent_columns {
        None => None,
        Some(cols) => {
            let mut mask = 0u32;
            for c in cols {
                let idx = bt.column_index(c).ok_or_else(|| Error::Parameter(format!("unknown column {c:?}")))?;
                mask |= 1 << idx;
            }
            Some(mask)
        }
    };

    // counts[mask] maps the bin tuple on the columns of `mask` to its row count
    let counts: Vec<HashMap<Vec<BinId>, usize>> = (0u32..1 << m)
        .into_par_iter()
        .map(|mask| {
            let cols: Vec<usize> = (0..m).filter(|&c| mask & (1 << c) != 0).collect();
            let mut map = HashMap::new();
            for p in 0..n {
                *map.entry(cols.iter().map(|&c| bt.bin(p, c)).collect()).or_insert(0) += 1;
            }
            map
        })
        .collect();

    let min_support = constraints.min_absolute_support.max(1);
    let max_cons = constraints.max_consequent_size.unwrap_or(usize::MAX);
    let mut rules = Vec::new();
    for mask in 1u32..1 << m {
        let size = mask.count_ones() as usize;
        if size < constraints.min_rule_size.max(2) {
            continue;
        }
        let cols: Vec<usize> = (0..m).filter(|&c| mask & (1 << c) != 0).collect();
        let consequents: Vec<u32> = match cons_mask {
            Some(cm) if cm & mask == cm && cm != mask => vec![cm],
            Some(_) => continue,
            None => (1..mask).filter(|&sub| sub & mask == sub).collect(),
        };
        let mut groups: Vec<(&Vec<BinId>, &usize)> =
            counts[mask as usize].iter().filter(|(_, &c)| c >= min_support).collect();
        groups.sort();
        for (bins, &count) in groups {
            for &cm in &consequents {
                let csize = cm.count_ones() as usize;
                if csize > max_cons || size - csize < constraints.min_antecedent_size.max(1) {
                    continue;
                }
                let amask = mask & !cm;
                let (mut a, mut c, mut akey) = (Vec::new(), Vec::new(), Vec::new());
                for (&col, &bin) in cols.iter().zip(bins) {
                    if cm & (1 << col) != 0 {
                        c.push(Item::new(col, bin));
                    } else {
                        a.push(Item::new(col, bin));
                        akey.push(bin);
                    }
                }
                let acount = counts[amask as usize][&akey];
                let conf = count as f64 / acount as f64;
                if conf + EPS >= constraints.min_confidence {
                    rules.push(AssociationRule::new(a, c, count as f64 / n as f64, conf)?);
                }
            }
        }
    }
    let provenance = Provenance { mode: MiningMode::Exhaustive, parameters: serde_json::to_value(constraints)? };
    Ok(RuleSet::for_table(bt, rules, provenance))
}

/// Keeps rules that mention at least one target column; identity when
/// `targets` is empty.
pub fn filter_rules_by_targets(rs: &RuleSet, targets: &[String]) -> RuleSet {
    if targets.is_empty() {
        return rs.clone();
    }
    let wanted: HashSet<u32> = targets.iter().filter_map(|t| rs.column_index(t)).map(|i| i as u32).collect();
    rs.with_rules(rs.rules.iter().filter(|r| r.items().any(|i| wanted.contains(&i.col))).cloned().collect())
}

/// Mines each partition of rows sharing one joint target-bin assignment
/// separately, then lifts the rules back to the whole table with the target
/// items appended to the consequent. Support and confidence of the returned
/// rules are recomputed over the whole table.
///
/// Besides the rules mined inside a partition, each frequent itemset `I` of
/// the partition yields `I → targets`, so rules predicting the targets
/// directly are not lost.
pub fn mine_rules_per_target_bin(
    bt: &BinnedTable,
    targets: &[String],
    min_support: f64,
    min_confidence: f64,
    min_rule_size: usize,
) -> Result<RuleSet> {
    check_thresholds(min_support, min_confidence, min_rule_size)?;
    if targets.is_empty() {
        return Err(Error::Parameter("per-target mining needs at least one target column".into()));
    }
    let n = bt.n_rows();
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    let mut tcols = Vec::new();
    for t in targets {
        let idx = bt.column_index(t).ok_or_else(|| Error::Parameter(format!("unknown target column {t:?}")))?;
        if !tcols.contains(&idx) {
            tcols.push(idx);
        }
    }
    tcols.sort();
    let others: Vec<usize> = (0..bt.n_cols()).filter(|c| !tcols.contains(c)).collect();

    let mut parts: HashMap<Vec<BinId>, Vec<usize>> = HashMap::new();
    for p in 0..n {
        parts.entry(tcols.iter().map(|&c| bt.bin(p, c)).collect()).or_default().push(p);
    }
    let mut parts: Vec<(Vec<BinId>, Vec<usize>)> = parts.into_iter().collect();
    parts.sort();

    let full = ItemTidsets::build(bt);
    let inner_min = min_rule_size.saturating_sub(tcols.len()).max(1);
    let mut rules = Vec::new();
    for (bins, positions) in parts {
        if (positions.len() as f64) * min_support < 1.0 - 1e-9 {
            continue;
        }
        let sub = bt.project(&positions, &others);
        let tids = ItemTidsets::build(&sub);
        let target_items: Vec<Item> = tcols.iter().zip(&bins).map(|(&c, &b)| Item::new(c, b)).collect();
        let lift = |items: &[Item]| -> Vec<Item> { items.iter().map(|i| Item::new(others[i.col as usize], i.bin)).collect() };
        let mut emit = |a: Vec<Item>, c: Vec<Item>| {
            let whole = full.rows_of(a.iter().chain(&c)).count_ones(..);
            let ante = full.rows_of(&a).count_ones(..);
            if whole > 0 {
                rules.push(
                    AssociationRule::new(a, c, whole as f64 / n as f64, whole as f64 / ante as f64).expect("valid rule"),
                );
            }
        };

        let freq = frequent_itemsets(&sub, &tids, min_count(min_support, sub.n_rows()));
        let mut sets: Vec<(&Vec<Item>, &usize)> = freq.iter().collect();
        sets.sort();
        for (items, _) in sets {
            if items.len() >= inner_min {
                emit(lift(items), target_items.clone());
            }
        }
        if inner_min.max(2) <= others.len() {
            for r in apriori_rules(&sub, &tids, min_support, min_confidence, inner_min.max(2)) {
                let mut c = lift(&r.consequent);
                c.extend(&target_items);
                emit(lift(&r.antecedent), c);
            }
        }
    }
    let provenance = Provenance {
        mode: MiningMode::PerTarget,
        parameters: serde_json::json!({
            "targets": targets,
            "minSupport": min_support,
            "minConfidence": min_confidence,
            "minRuleSize": min_rule_size,
        }),
    };
    Ok(RuleSet::for_table(bt, rules, provenance))
}

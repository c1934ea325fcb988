//! Cell coverage, diversity and the combined score of a sub-table.

use std::borrow::Cow;
use std::collections::HashSet;
use std::sync::OnceLock;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::BinnedTable;
use crate::error::{Error, Result};
use crate::rules::{rule_holds, AssociationRule, ItemTidsets, RuleSet};
use crate::table::RowId;

/// A k×l selection from a base table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubTable {
    #[serde(default)]
    pub base_ref: String,
    pub row_ids: Vec<RowId>,
    pub columns: Vec<String>,
}

impl SubTable {
    pub fn new(base_ref: impl Into<String>, row_ids: Vec<RowId>, columns: Vec<String>) -> Self {
        Self { base_ref: base_ref.into(), row_ids, columns }
    }

    /// Resolves row ids to positions and column names to indices in `bt`.
    pub fn resolve(&self, bt: &BinnedTable) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut seen = HashSet::new();
        let rows = self
            .row_ids
            .iter()
            .map(|&r| {
                if !seen.insert(r) {
                    return Err(Error::Selection(format!("row {r} selected twice")));
                }
                bt.position_of(r).ok_or_else(|| Error::Selection(format!("row {r} not in base table")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut seen = HashSet::new();
        let cols = self
            .columns
            .iter()
            .map(|c| {
                if !seen.insert(c) {
                    return Err(Error::Selection(format!("column {c:?} selected twice")));
                }
                bt.column_index(c).ok_or_else(|| Error::Selection(format!("column {c:?} not in base table")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((rows, cols))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreReport {
    pub cell_coverage: f64,
    pub diversity: f64,
    pub combined: f64,
    pub alpha: f64,
    pub upcov: u64,
    pub covered_cell_count: u64,
    pub covered_rule_ids: Vec<usize>,
}

/// Coverage of one sub-table, with the covered rules kept for highlighting.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageDetail {
    pub coverage: f64,
    pub covered_cells: u64,
    pub upcov: u64,
    /// Indices into the rule set, ascending.
    pub covered_rule_ids: Vec<usize>,
    /// `|T_R| · |U_R|` for each covered rule, parallel to `covered_rule_ids`.
    pub rule_cells: Vec<u64>,
}

/// Scores sub-tables of one binned table against one rule set.
///
/// Building a scorer computes `upcov` once; per-rule row sets are computed
/// on first use and cached.
pub struct Scorer<'a> {
    bt: &'a BinnedTable,
    rules: Cow<'a, RuleSet>,
    tids: ItemTidsets,
    rule_cols: Vec<Vec<u32>>,
    rows_cache: Vec<OnceLock<FixedBitSet>>,
    upcov: u64,
}

impl<'a> Scorer<'a> {
    pub fn new(bt: &'a BinnedTable, rules: &'a RuleSet) -> Self {
        let rules = if rules.columns() == bt.columns() { Cow::Borrowed(rules) } else { Cow::Owned(rules.align(bt.columns())) };
        let tids = ItemTidsets::build(bt);
        let rule_cols: Vec<Vec<u32>> = rules.rules().iter().map(AssociationRule::columns).collect();
        let rows_cache = (0..rules.len()).map(|_| OnceLock::new()).collect();
        let n = bt.n_rows();
        let m = bt.n_cols();
        let unions = rules
            .rules()
            .par_iter()
            .zip(&rule_cols)
            .fold(
                || vec![FixedBitSet::with_capacity(n); m],
                |mut acc, (r, cols)| {
                    let rows = tids.rule_rows(r);
                    for &c in cols {
                        acc[c as usize].union_with(&rows);
                    }
                    acc
                },
            )
            .reduce(
                || vec![FixedBitSet::with_capacity(n); m],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        x.union_with(y);
                    }
                    a
                },
            );
        let upcov = unions.iter().map(|u| u.count_ones(..) as u64).sum();
        Self { bt, rules, tids, rule_cols, rows_cache, upcov }
    }

    pub fn binned(&self) -> &BinnedTable {
        self.bt
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn upcov(&self) -> u64 {
        self.upcov
    }

    pub fn rule_columns(&self, id: usize) -> &[u32] {
        &self.rule_cols[id]
    }

    /// Positions of rows on which rule `id` holds.
    pub fn rule_rows(&self, id: usize) -> &FixedBitSet {
        self.rows_cache[id].get_or_init(|| self.tids.rule_rows(&self.rules.rules()[id]))
    }

    pub fn tidsets(&self) -> &ItemTidsets {
        &self.tids
    }

    /// Rules whose columns are all selected and that hold on a selected row.
    pub fn covered_rule_ids(&self, rows: &[usize], cols: &[usize]) -> Vec<usize> {
        let mut selected = vec![false; self.bt.n_cols()];
        for &c in cols {
            selected[c] = true;
        }
        (0..self.rules.len())
            .filter(|&id| {
                self.rule_cols[id].iter().all(|&c| selected[c as usize])
                    && rows.iter().any(|&p| rule_holds(&self.rules.rules()[id], self.bt, p))
            })
            .collect()
    }

    pub fn coverage(&self, rows: &[usize], cols: &[usize]) -> CoverageDetail {
        let ids = self.covered_rule_ids(rows, cols);
        let n = self.bt.n_rows();
        let mut per_col: Vec<Option<FixedBitSet>> = vec![None; self.bt.n_cols()];
        let mut rule_cells = Vec::with_capacity(ids.len());
        for &id in &ids {
            let rows = self.rule_rows(id);
            rule_cells.push(rows.count_ones(..) as u64 * self.rule_cols[id].len() as u64);
            for &c in &self.rule_cols[id] {
                per_col[c as usize].get_or_insert_with(|| FixedBitSet::with_capacity(n)).union_with(rows);
            }
        }
        let covered: u64 = per_col.iter().flatten().map(|s| s.count_ones(..) as u64).sum();
        CoverageDetail {
            coverage: if self.upcov == 0 { 0.0 } else { covered as f64 / self.upcov as f64 },
            covered_cells: covered,
            upcov: self.upcov,
            covered_rule_ids: ids,
            rule_cells,
        }
    }

    pub fn diversity(&self, rows: &[usize], cols: &[usize]) -> f64 {
        diversity_at(self.bt, rows, cols)
    }

    pub fn report(&self, rows: &[usize], cols: &[usize], alpha: f64) -> ScoreReport {
        let cov = self.coverage(rows, cols);
        let div = self.diversity(rows, cols);
        ScoreReport {
            cell_coverage: cov.coverage,
            diversity: div,
            combined: alpha * cov.coverage + (1.0 - alpha) * div,
            alpha,
            upcov: cov.upcov,
            covered_cell_count: cov.covered_cells,
            covered_rule_ids: cov.covered_rule_ids,
        }
    }

    /// Scores a sub-table given by row ids and column names.
    pub fn score(&self, s: &SubTable, alpha: f64) -> Result<ScoreReport> {
        check_alpha(alpha)?;
        let (rows, cols) = s.resolve(self.bt)?;
        Ok(self.report(&rows, &cols, alpha))
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn jaccard_at(bt: &BinnedTable, a: usize, b: usize, cols: &[usize]) -> f64 {
    if cols.is_empty() {
        return 1.0;
    }
    let same = cols.iter().filter(|&&c| bt.bin(a, c) == bt.bin(b, c)).count();
    same as f64 / cols.len() as f64
}

pub(crate) fn diversity_at(bt: &BinnedTable, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    if k <= 1 {
        return 1.0;
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += jaccard_at(bt, rows[i], rows[j], cols);
        }
    }
    1.0 - total / (k * (k - 1) / 2) as f64
}

/// Rules of `rs` covered by `s`.
pub fn covered_rules(s: &SubTable, rs: &RuleSet, bt: &BinnedTable) -> Result<RuleSet> {
    let scorer = Scorer::new(bt, rs);
    let (rows, cols) = s.resolve(bt)?;
    let ids: HashSet<usize> = scorer.covered_rule_ids(&rows, &cols).into_iter().collect();
    let kept = scorer.rules().rules().iter().enumerate().filter(|(i, _)| ids.contains(i)).map(|(_, r)| r.clone()).collect();
    Ok(scorer.rules().with_rules(kept))
}

/// Cells `T_R × U_R` of a rule as (row id, column name) pairs.
pub fn cell_set(rule: &AssociationRule, bt: &BinnedTable) -> Vec<(RowId, String)> {
    let cols = rule.columns();
    (0..bt.n_rows())
        .filter(|&p| rule_holds(rule, bt, p))
        .flat_map(|p| cols.iter().map(move |&c| (bt.row_ids()[p], bt.columns()[c as usize].clone())))
        .collect()
}

pub fn cell_coverage(bt: &BinnedTable, s: &SubTable, rs: &RuleSet) -> Result<CoverageDetail> {
    let scorer = Scorer::new(bt, rs);
    let (rows, cols) = s.resolve(bt)?;
    Ok(scorer.coverage(&rows, &cols))
}

/// Fraction of the sub-table's columns on which rows `a` and `b` share a bin.
pub fn jaccard(a: RowId, b: RowId, s: &SubTable, bt: &BinnedTable) -> Result<f64> {
    if !s.row_ids.contains(&a) || !s.row_ids.contains(&b) {
        return Err(Error::Selection("both rows must belong to the sub-table".into()));
    }
    let (_, cols) = s.resolve(bt)?;
    let pa = bt.position_of(a).expect("resolved");
    let pb = bt.position_of(b).expect("resolved");
    Ok(jaccard_at(bt, pa, pb, &cols))
}

/// One minus the mean Jaccard similarity over unordered distinct row pairs;
/// 1.0 for a single row.
pub fn diversity(s: &SubTable, bt: &BinnedTable) -> Result<f64> {
    let (rows, cols) = s.resolve(bt)?;
    if rows.is_empty() {
        return Err(Error::Selection("sub-table has no rows".into()));
    }
    Ok(diversity_at(bt, &rows, &cols))
}

pub fn combined_score(s: &SubTable, bt: &BinnedTable, rs: &RuleSet, alpha: f64) -> Result<ScoreReport> {
    Scorer::new(bt, rs).score(s, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{apply_binning, compute_binning, normalize_values, BinId};
    use crate::fixtures::flights_example;
    use crate::rules::{enumerate_rules_exhaustive, ExhaustiveConstraints, Item};
    use proptest::prelude::*;

    pub(crate) fn fixture() -> (BinnedTable, RuleSet) {
        let t = normalize_values(&flights_example());
        let bt = apply_binning(&t, &compute_binning(&t, 5).unwrap()).unwrap();
        let rs = enumerate_rules_exhaustive(
            &bt,
            &ExhaustiveConstraints {
                consequent_columns: Some(vec!["CANCELLED".into()]),
                min_antecedent_size: 2,
                min_absolute_support: 2,
                ..Default::default()
            },
        )
        .unwrap();
        (bt, rs)
    }

    fn sub(rows: &[RowId], cols: &[&str]) -> SubTable {
        SubTable::new("fixture", rows.to_vec(), cols.iter().map(|c| c.to_string()).collect())
    }

    const T1: [&str; 4] = ["CANCELLED", "DEP._TIME", "YEAR", "DISTANCE"];
    const T2: [&str; 4] = ["CANCELLED", "DEP._TIME", "YEAR", "SCHED._DEP."];
    const T3: [&str; 4] = ["CANCELLED", "DEP._TIME", "SCHED._DEP.", "DISTANCE"];

    /// Independent oracle: explicit (row, column) cell sets.
    fn oracle_cells(bt: &BinnedTable, rs: &RuleSet, rows: Option<&[usize]>, cols: &[usize]) -> usize {
        let mut cells = HashSet::new();
        for r in rs.rules() {
            let rc = r.columns();
            if !rc.iter().all(|c| cols.contains(&(*c as usize))) {
                continue;
            }
            let holds = |p: usize| r.items().all(|i| bt.bin(p, i.col as usize) == i.bin);
            if let Some(rows) = rows {
                if !rows.iter().any(|&p| holds(p)) {
                    continue;
                }
            }
            for p in (0..bt.n_rows()).filter(|&p| holds(p)) {
                for &c in &rc {
                    cells.insert((p, c));
                }
            }
        }
        cells.len()
    }

    #[test]
    fn fixture_coverage_counts() {
        let (bt, rs) = fixture();
        let all: Vec<usize> = (0..5).collect();
        assert_eq!(oracle_cells(&bt, &rs, None, &all), 36);
        let scorer = Scorer::new(&bt, &rs);
        assert_eq!(scorer.upcov(), 36);
        for (cols, expected) in [(T1, 28), (T2, 26), (T3, 24)] {
            let s = sub(&[0, 4, 6], &cols);
            let d = cell_coverage(&bt, &s, &rs).unwrap();
            let (rows, ci) = s.resolve(&bt).unwrap();
            assert_eq!(d.covered_cells as usize, oracle_cells(&bt, &rs, Some(&rows), &ci));
            assert_eq!(d.covered_cells, expected);
            assert_eq!(d.upcov, 36);
        }
    }

    #[test]
    fn fixture_cell_sets() {
        let (bt, _) = fixture();
        let it = |c: &str, l: &str| {
            let ci = bt.column_index(c).unwrap();
            Item::new(ci, (0..bt.n_bins(ci)).find(|&b| bt.label(ci, b as BinId) == l).unwrap() as BinId)
        };
        let r = AssociationRule::new(
            vec![it("DEP._TIME", "NaN"), it("YEAR", "2015")],
            vec![it("CANCELLED", "1")],
            0.5,
            1.0,
        )
        .unwrap();
        assert_eq!(cell_set(&r, &bt).len(), 12);
        let r = AssociationRule::new(
            vec![it("DEP._TIME", "evening"), it("YEAR", "2015"), it("DISTANCE", "long")],
            vec![it("CANCELLED", "0")],
            0.25,
            1.0,
        )
        .unwrap();
        assert_eq!(cell_set(&r, &bt).len(), 8);
    }

    #[test]
    fn covered_rules_respect_columns() {
        let (bt, rs) = fixture();
        let cov = covered_rules(&sub(&[0, 4, 6], &T1), &rs, &bt).unwrap();
        assert!(!cov.is_empty());
        let year = rs.column_index("YEAR").unwrap() as u32;
        let cov3 = covered_rules(&sub(&[0, 4, 6], &T3), &rs, &bt).unwrap();
        assert!(cov3.rules().iter().all(|r| !r.columns().contains(&year)));
        assert!(covered_rules(&sub(&[0, 4, 6], &["CANCELLED"]), &rs, &bt).unwrap().is_empty());
    }

    #[test]
    fn fixture_jaccard_and_diversity() {
        let (bt, _) = fixture();
        let s = sub(&[0, 4, 6], &T1);
        assert_eq!(jaccard(4, 6, &s, &bt).unwrap(), 0.25);
        assert_eq!(jaccard(0, 4, &s, &bt).unwrap(), 0.0);
        assert_eq!(jaccard(0, 6, &s, &bt).unwrap(), 0.25);
        assert_eq!(jaccard(4, 4, &s, &bt).unwrap(), 1.0);
        assert!((diversity(&s, &bt).unwrap() - (1.0 - 0.5 / 3.0)).abs() < 1e-12);
        let s3 = sub(&[0, 4, 6], &T3);
        assert!((diversity(&s3, &bt).unwrap() - (1.0 - 0.25 / 3.0)).abs() < 1e-12);
        assert_eq!(diversity(&sub(&[0], &T1), &bt).unwrap(), 1.0);
        // rows 0 and 1 differ only in DISTANCE
        assert_eq!(diversity(&sub(&[0, 1], &["CANCELLED", "YEAR"]), &bt).unwrap(), 0.0);
    }

    #[test]
    fn fixture_combined() {
        let (bt, rs) = fixture();
        let r1 = combined_score(&sub(&[0, 4, 6], &T1), &bt, &rs, 0.5).unwrap();
        assert!((r1.combined - (0.5 * 28.0 / 36.0 + 0.5 * 5.0 / 6.0)).abs() < 1e-12);
        let r3 = combined_score(&sub(&[0, 4, 6], &T3), &bt, &rs, 0.5).unwrap();
        assert!((r3.combined - (0.5 * 24.0 / 36.0 + 0.5 * 11.0 / 12.0)).abs() < 1e-12);
        let r = combined_score(&sub(&[0, 4, 6], &T1), &bt, &rs, 1.0).unwrap();
        assert_eq!(r.combined, r.cell_coverage);
        assert!(combined_score(&sub(&[0], &T1), &bt, &rs, 1.5).is_err());
        let json = serde_json::to_value(&r1).unwrap();
        for key in ["cellCoverage", "diversity", "combined", "alpha", "upcov", "coveredCellCount", "coveredRuleIds"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn invalid_subtables() {
        let (bt, rs) = fixture();
        assert!(combined_score(&sub(&[0, 0], &T1), &bt, &rs, 0.5).is_err());
        assert!(combined_score(&sub(&[99], &T1), &bt, &rs, 0.5).is_err());
        assert!(combined_score(&sub(&[0], &["nope"]), &bt, &rs, 0.5).is_err());
    }

    #[test]
    fn column_submodularity_witness() {
        // one rule over a, b, c: coverage is zero until all three are present
        let bt = BinnedTable::from_parts(
            (0..2).collect(),
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0, 1]; 3],
            vec![vec!["x".into(), "y".into()]; 3],
        )
        .unwrap();
        let rule = AssociationRule::new(vec![Item::new(0, 0), Item::new(1, 0)], vec![Item::new(2, 0)], 0.5, 1.0).unwrap();
        let rs = RuleSet::new(
            bt.columns().to_vec(),
            vec![vec!["x".into(), "y".into()]; 3],
            vec![rule],
            crate::rules::Provenance { mode: crate::rules::MiningMode::Exhaustive, parameters: serde_json::Value::Null },
        );
        let scorer = Scorer::new(&bt, &rs);
        let rows = [0, 1];
        let cov = |cols: &[usize]| scorer.coverage(&rows, cols).covered_cells as i64;
        // A = {a} ⊆ B = {a, b}; adding c gains nothing for A but everything for B
        let gain_a = cov(&[0, 2]) - cov(&[0]);
        let gain_b = cov(&[0, 1, 2]) - cov(&[0, 1]);
        assert!(gain_a < gain_b, "expected a violation: {gain_a} vs {gain_b}");
    }

    fn instance() -> impl Strategy<Value = (BinnedTable, RuleSet)> {
        (3usize..=10, 2usize..=4, 2u16..=3).prop_flat_map(|(n, m, b)| {
            proptest::collection::vec(proptest::collection::vec(0..b, n), m).prop_map(move |cells| {
                let bt = BinnedTable::from_parts(
                    (0..n as u32).collect(),
                    (0..m).map(|i| format!("c{i}")).collect(),
                    cells,
                    vec![(0..b).map(|x| x.to_string()).collect(); m],
                )
                .unwrap();
                let rs = enumerate_rules_exhaustive(&bt, &ExhaustiveConstraints { min_absolute_support: 2, ..Default::default() }).unwrap();
                (bt, rs)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn coverage_matches_oracle((bt, rs) in instance(), mask in 1u32..1024, cmask in 1u32..16) {
            let rows: Vec<usize> = (0..bt.n_rows()).filter(|p| mask & (1 << p) != 0).collect();
            let cols: Vec<usize> = (0..bt.n_cols()).filter(|c| cmask & (1 << c) != 0).collect();
            prop_assume!(!rows.is_empty() && !cols.is_empty());
            let scorer = Scorer::new(&bt, &rs);
            let all: Vec<usize> = (0..bt.n_cols()).collect();
            prop_assert_eq!(scorer.upcov() as usize, oracle_cells(&bt, &rs, None, &all));
            prop_assert_eq!(scorer.coverage(&rows, &cols).covered_cells as usize, oracle_cells(&bt, &rs, Some(&rows), &cols));
        }

        #[test]
        fn scores_are_bounded((bt, rs) in instance(), mask in 1u32..1024, cmask in 1u32..16, alpha in 0.0f64..=1.0) {
            let rows: Vec<usize> = (0..bt.n_rows()).filter(|p| mask & (1 << p) != 0).collect();
            let cols: Vec<usize> = (0..bt.n_cols()).filter(|c| cmask & (1 << c) != 0).collect();
            prop_assume!(!rows.is_empty() && !cols.is_empty());
            let r = Scorer::new(&bt, &rs).report(&rows, &cols, alpha);
            for v in [r.cell_coverage, r.diversity, r.combined] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!((r.combined - (alpha * r.cell_coverage + (1.0 - alpha) * r.diversity)).abs() <= 1e-12);
            prop_assert!(r.covered_cell_count <= r.upcov);
        }

        #[test]
        fn full_table_coverage_is_one((bt, rs) in instance()) {
            let scorer = Scorer::new(&bt, &rs);
            prop_assume!(scorer.upcov() > 0);
            let rows: Vec<usize> = (0..bt.n_rows()).collect();
            let cols: Vec<usize> = (0..bt.n_cols()).collect();
            prop_assert_eq!(scorer.coverage(&rows, &cols).coverage, 1.0);
        }
    }
}

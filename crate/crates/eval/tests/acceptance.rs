//! End-to-end acceptance checks. Each test prints one `[PASS]` or `[FAIL]`
//! line and then asserts. Tests take a shared lock so timings are not
//! disturbed by each other.
//!
//! Run with `cargo test -p subtab-eval --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subtab_core::artifacts::{preprocess, run_selection, Artifacts, Method, SubtableRequest};
use subtab_core::binning::{apply_binning, compute_binning, normalize_values, BinnedTable};
use subtab_core::config::Config;
use subtab_core::embedding::{build_corpus, cosine, train_embedding, TrainParams};
use subtab_core::fixtures::flights_example;
use subtab_core::metrics::{Scorer, SubTable};
use subtab_core::optimize::{brute_force_optimal, exact_column_selection};
use subtab_core::query::{apply_query, Comparator, Literal, Predicate, SPQuery};
use subtab_core::rules::{
    enumerate_rules_exhaustive, mine_rules_apriori, min_count, AssociationRule, ExhaustiveConstraints, Item, RuleSet,
};
use subtab_core::selection::SelectionRequest;
use subtab_core::table::ValueRef;
use subtab_eval::planted::{column_name, generate_planted, generate_planted_table, PlantedConfig, PlantedTable};
use subtab_eval::replay::{generate_sessions, replay_sessions, ReplayOptions};
use subtab_eval::stats::sign_test;
use subtab_eval::sweep::{sweep_parameters, RandomBudget, SweepGrid, SweepSpec};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes straight to the process stdout so the line shows up without
/// `--nocapture`.
fn verdict(name: &str, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE [{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes()).and_then(|_| out.flush());
    assert!(pass, "{name}: {detail}");
}

/// Random binned table with 2 or 3 bins per column.
fn random_binned(rng: &mut ChaCha8Rng, n: usize, m: usize) -> BinnedTable {
    let bins: Vec<u16> = (0..m).map(|_| rng.random_range(2..=3)).collect();
    let cells = bins.iter().map(|&b| (0..n).map(|_| rng.random_range(0..b)).collect()).collect();
    let labels = bins.iter().map(|&b| (0..b).map(|i| format!("v{i}")).collect()).collect();
    BinnedTable::from_parts((0..n as u32).collect(), (0..m).map(|j| format!("c{j}")).collect(), cells, labels).unwrap()
}

/// Test-side rule model: column mask, matching-row mask and covered cells,
/// computed straight from the bins.
struct OracleRule {
    cols: u32,
    rows: u32,
    cells: u128,
}

fn oracle_rules(bt: &BinnedTable, rs: &RuleSet) -> Vec<OracleRule> {
    let m = bt.n_cols();
    rs.rules()
        .iter()
        .map(|r| {
            let items: Vec<&Item> = r.antecedent().iter().chain(r.consequent()).collect();
            let cols = items.iter().fold(0u32, |a, i| a | 1 << i.col);
            let rows = (0..bt.n_rows())
                .filter(|&p| items.iter().all(|i| bt.bin(p, i.col as usize) == i.bin))
                .fold(0u32, |a, p| a | 1 << p);
            let mut cells = 0u128;
            for p in 0..bt.n_rows() {
                if rows & 1 << p != 0 {
                    for c in 0..m {
                        if cols & 1 << c != 0 {
                            cells |= 1u128 << (p * m + c);
                        }
                    }
                }
            }
            OracleRule { cols, rows, cells }
        })
        .collect()
}

fn oracle_cells(rules: &[OracleRule], rows: u32, cols: u32) -> u32 {
    rules
        .iter()
        .filter(|r| r.cols & !cols == 0 && r.rows & rows != 0)
        .fold(0u128, |a, r| a | r.cells)
        .count_ones()
}

fn masks_of_size(n: usize, k: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).collect()
}

fn bits(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & 1 << i != 0).collect()
}

fn positions(bt: &BinnedTable, s: &SubTable) -> (u32, u32) {
    let (rows, cols) = s.resolve(bt).unwrap();
    (rows.iter().fold(0, |a, &p| a | 1 << p), cols.iter().fold(0, |a, &c| a | 1 << c))
}

#[test]
fn golden_worked_example() {
    let _g = serial();
    let start = Instant::now();
    let table = normalize_values(&flights_example());
    let bt = apply_binning(&table, &compute_binning(&table, 5).unwrap()).unwrap();
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
    let oracle = oracle_rules(&bt, &rs);
    let first = oracle.iter().filter(|r| r.rows & !0b1111 == 0).count();
    let last = oracle.iter().filter(|r| r.rows & 0b1111 == 0).count();
    let upcov = oracle.iter().fold(0u128, |a, r| a | r.cells).count_ones();

    let col = |n: &str| bt.column_index(n).unwrap();
    let mask = |names: &[&str]| names.iter().fold(0u32, |a, n| a | 1 << col(n));
    let t1 = ["CANCELLED", "DEP._TIME", "YEAR", "DISTANCE"];
    let t2 = ["CANCELLED", "DEP._TIME", "YEAR", "SCHED._DEP."];
    let t3 = ["CANCELLED", "DEP._TIME", "SCHED._DEP.", "DISTANCE"];
    let rows = [0usize, 4, 6];
    let row_mask = rows.iter().fold(0u32, |a, &p| a | 1 << p);
    let scorer = Scorer::new(&bt, &rs);
    let mut problems = Vec::new();
    if (rs.rules().len(), first, last) != (21, 13, 8) {
        problems.push(format!("rules {} = {first} + {last}", rs.rules().len()));
    }
    if upcov != 36 || scorer.upcov() != 36 {
        problems.push(format!("upcov oracle {upcov}, library {}", scorer.upcov()));
    }
    for (t, want) in [(&t1, 28), (&t2, 26), (&t3, 24)] {
        let cols: Vec<usize> = t.iter().map(|n| col(n)).collect();
        let got = scorer.coverage(&rows, &cols).covered_cells;
        let independent = oracle_cells(&oracle, row_mask, mask(t));
        if got != want || independent != want as u32 {
            problems.push(format!("{t:?}: library {got}, oracle {independent}, expected {want}"));
        }
    }

    // diversity oracle: one minus the mean fraction of shared bins over row pairs
    let oracle_div = |t: &[&str]| {
        let pairs = [(0, 4), (0, 6), (4, 6)];
        let sim: f64 = pairs
            .iter()
            .map(|&(a, b)| t.iter().filter(|n| bt.bin(a, col(n)) == bt.bin(b, col(n))).count() as f64 / t.len() as f64)
            .sum::<f64>()
            / 3.0;
        1.0 - sim
    };
    for (t, div, comb) in [(&t1, 0.8333, 0.806), (&t3, 0.9167, 0.792)] {
        let cols: Vec<usize> = t.iter().map(|n| col(n)).collect();
        let r = scorer.report(&rows, &cols, 0.5);
        if (r.diversity - div).abs() > 1e-4 || (oracle_div(t) - div).abs() > 1e-4 || (r.combined - comb).abs() > 1e-3 {
            problems.push(format!("{t:?}: diversity {:.4}, combined {:.4}", r.diversity, r.combined));
        }
    }
    let (best, rep) = brute_force_optimal(&bt, 3, 4, &rs, 0.5).unwrap();
    if positions(&bt, &best) != (row_mask, mask(&t1)) {
        problems.push(format!("brute force returned rows {:?} columns {:?}", best.row_ids, best.columns));
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        problems.push(format!("took {elapsed:?}"));
    }
    verdict(
        "golden worked example",
        problems.is_empty(),
        &if problems.is_empty() {
            format!("21 = 13 + 8 rules, upcov 36, cells 28/26/24, optimum combined {:.3}, {elapsed:.2?}", rep.combined)
        } else {
            problems.join("; ")
        },
    );
}

#[test]
fn greedy_approximation_bound() {
    let _g = serial();
    let start = Instant::now();
    let bound = 1.0 - (-1.0f64).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut instances, mut violations, mut nontrivial, mut worst) = (0, 0, 0, f64::INFINITY);
    let mut mismatches = 0;
    while instances < 250 {
        let n = rng.random_range(3..=12);
        let m = rng.random_range(2..=6);
        let k = rng.random_range(1..=3.min(n));
        // rules span at least two columns, so l = 1 would cover nothing
        let l = rng.random_range(2..=3.min(m));
        let bt = random_binned(&mut rng, n, m);
        let rs = enumerate_rules_exhaustive(&bt, &ExhaustiveConstraints::default()).unwrap();
        let oracle = oracle_rules(&bt, &rs);
        let col_sets = masks_of_size(m, l);
        let opt = masks_of_size(n, k)
            .iter()
            .flat_map(|&r| col_sets.iter().map(move |&c| (r, c)))
            .map(|(r, c)| oracle_cells(&oracle, r, c))
            .max()
            .unwrap();
        let res = exact_column_selection(&bt, k, l, &rs, &[]).unwrap();
        let (r, c) = positions(&bt, &res.sub_table);
        let got = oracle_cells(&oracle, r, c);
        if got as u64 != res.covered_cells {
            mismatches += 1;
        }
        if (got as f64) < bound * opt as f64 - 1e-9 {
            violations += 1;
        }
        if opt > 0 {
            nontrivial += 1;
            worst = worst.min(got as f64 / opt as f64);
        }
        instances += 1;
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && mismatches == 0 && elapsed < Duration::from_secs(300);
    verdict(
        "greedy approximation bound",
        pass,
        &format!(
            "{instances} instances ({nontrivial} with rules), {violations} violations, {mismatches} reported-cell mismatches, worst ratio {worst:.3} vs bound {bound:.3}, {elapsed:.1?}"
        ),
    );
}

#[test]
fn metric_properties() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut mono, mut sub, mut checks) = (0u64, 0u64, 0u64);
    for _ in 0..100 {
        let n = rng.random_range(4..=10);
        let m = rng.random_range(2..=5);
        let bt = random_binned(&mut rng, n, m);
        let rs = enumerate_rules_exhaustive(&bt, &ExhaustiveConstraints::default()).unwrap();
        let scorer = Scorer::new(&bt, &rs);
        let l = rng.random_range(1..=m);
        let cols = sample(&mut rng, m, l).into_vec();
        let f: Vec<u64> = (0u32..1 << n)
            .map(|s| if s == 0 { 0 } else { scorer.coverage(&bits(s), &cols).covered_cells })
            .collect();
        for b in 0u32..1 << n {
            // every subset a of b
            let mut a = b;
            loop {
                checks += 1;
                if f[a as usize] > f[b as usize] {
                    mono += 1;
                }
                for x in 0..n {
                    if b & 1 << x == 0 {
                        let ga = f[(a | 1 << x) as usize] as i64 - f[a as usize] as i64;
                        let gb = f[(b | 1 << x) as usize] as i64 - f[b as usize] as i64;
                        if ga < gb {
                            sub += 1;
                        }
                    }
                }
                if a == 0 {
                    break;
                }
                a = (a - 1) & b;
            }
        }
    }

    // a rule over {a, b} adds nothing when a alone is added to the empty set
    // but completes coverage once b is present
    let table = normalize_values(&flights_example());
    let bt = apply_binning(&table, &compute_binning(&table, 5).unwrap()).unwrap();
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
    let scorer = Scorer::new(&bt, &rs);
    let all: Vec<usize> = (0..bt.n_rows()).collect();
    let c = |n: &str| bt.column_index(n).unwrap();
    let cov = |cols: &[usize]| scorer.coverage(&all, cols).covered_cells as i64;
    let (can, dep, year) = (c("CANCELLED"), c("DEP._TIME"), c("YEAR"));
    let gain_small = cov(&[can, year]) - cov(&[can]);
    let gain_large = cov(&[can, dep, year]) - cov(&[can, dep]);
    let witness = gain_small < gain_large;

    // fuzzed scores stay in [0, 1]
    let mut runner = TestRunner::new(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() });
    let cases = std::cell::Cell::new(0u32);
    let strategy = (any::<u64>(), 1usize..=12, 1usize..=6, 0.0f64..=1.0);
    let fuzz = runner.run(&strategy, |(seed, n, m, alpha)| {
        cases.set(cases.get() + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bt = random_binned(&mut rng, n, m);
        let rs = enumerate_rules_exhaustive(&bt, &ExhaustiveConstraints::default()).unwrap();
        let scorer = Scorer::new(&bt, &rs);
        let k = rng.random_range(1..=n);
        let l = rng.random_range(1..=m);
        let mut rows = sample(&mut rng, n, k).into_vec();
        let mut cols = sample(&mut rng, m, l).into_vec();
        rows.sort_unstable();
        cols.sort_unstable();
        let r = scorer.report(&rows, &cols, alpha);
        for v in [r.cell_coverage, r.diversity, r.combined] {
            prop_assert!((0.0..=1.0).contains(&v), "score {} out of range", v);
        }
        Ok(())
    });

    let pass = mono == 0 && sub == 0 && witness && fuzz.is_ok() && cases.get() >= 1000;
    verdict(
        "metric properties",
        pass,
        &format!(
            "100 instances, {checks} subset pairs: {mono} monotonicity and {sub} submodularity violations; column witness gains {gain_small} < {gain_large}: {witness}; fuzz {} cases {}",
            cases.get(),
            if fuzz.is_ok() { "in range".to_string() } else { format!("{fuzz:?}") }
        ),
    );
}

fn keyed(rs: &RuleSet) -> BTreeMap<(Vec<Item>, Vec<Item>), (f64, f64)> {
    rs.rules().iter().map(|r| ((r.antecedent().to_vec(), r.consequent().to_vec()), (r.support, r.confidence))).collect()
}

#[test]
fn apriori_correctness() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatched = Vec::new();
    let tables = 60;
    let mut total_rules = 0;
    for t in 0..tables {
        let n = rng.random_range(2..=30);
        let m = rng.random_range(2..=6);
        let bt = random_binned(&mut rng, n, m);
        let support = rng.random_range(0.05..0.5);
        let confidence = rng.random_range(0.0..1.0);
        let min_size = rng.random_range(2..=3);
        let a = mine_rules_apriori(&bt, support, confidence, min_size).unwrap();
        let e = enumerate_rules_exhaustive(
            &bt,
            &ExhaustiveConstraints {
                consequent_columns: None,
                min_antecedent_size: 1,
                max_consequent_size: Some(2),
                min_rule_size: min_size,
                min_absolute_support: min_count(support, n),
                min_confidence: confidence,
            },
        )
        .unwrap();
        let (ka, ke) = (keyed(&a), keyed(&e));
        total_rules += ke.len();
        let same = ka.len() == ke.len()
            && ka.iter().zip(&ke).all(|((x, (s1, c1)), (y, (s2, c2)))| {
                x == y && (s1 - s2).abs() < 1e-12 && (c1 - c2).abs() < 1e-12
            });
        if !same {
            mismatched.push(t);
        }
    }

    // noise-free planted rules come back with their exact support and confidence
    let mut recovery = Vec::new();
    for seed in 0..5 {
        let p = generate_planted(&PlantedConfig { jitter: 0.0, ..PlantedConfig::new(2000, 12, 2, 2, 0.0, seed) }).unwrap();
        let bins = compute_binning(&p.table, 5).unwrap();
        let bt = apply_binning(&p.table, &bins).unwrap();
        let smallest = (0..2).map(|c| p.cluster_of.iter().filter(|&&x| x == c).count()).min().unwrap();
        let rs = mine_rules_apriori(&bt, smallest as f64 / 2000.0, 0.5, 3).unwrap();
        for (planted, r) in p.rules.iter().zip(p.rules_in(&bins, &rs)) {
            let found = r.and_then(|r| {
                rs.rules().iter().find(|x| x.antecedent() == r.antecedent() && x.consequent() == r.consequent()).cloned()
            });
            let ok = found.is_some_and(|x: AssociationRule| {
                let (sup, conf) = level_stats(&p, planted);
                (x.support - sup).abs() < 1e-12 && (x.confidence - conf).abs() < 1e-12
            });
            if !ok {
                recovery.push(format!("seed {seed}: {planted:?}"));
            }
        }
    }
    verdict(
        "apriori correctness",
        mismatched.is_empty() && recovery.is_empty(),
        &format!(
            "{tables} tables ({total_rules} rules), mismatched tables {mismatched:?}; planted recovery misses {recovery:?}"
        ),
    );
}

/// Support and confidence of a planted rule counted on the raw levels.
fn level_stats(p: &PlantedTable, rule: &subtab_eval::planted::PlantedRule) -> (f64, f64) {
    let at = |pos: usize, (c, lv): &(String, usize)| {
        let j = p.table.schema().index_of(c).unwrap();
        matches!(p.table.get(pos, j), ValueRef::Number(x) if (x / p.config.spacing).round() as usize == *lv)
    };
    let n = p.table.n_rows();
    let ante = (0..n).filter(|&i| rule.antecedent.iter().all(|x| at(i, x))).count();
    let both = (0..n).filter(|&i| rule.antecedent.iter().chain(&rule.consequent).all(|x| at(i, x))).count();
    (both as f64 / n as f64, both as f64 / ante as f64)
}

#[test]
fn embedding_sanity() {
    let _g = serial();
    let mut wins = 0;
    let mut margins = Vec::new();
    for seed in 0..20u64 {
        let p = generate_planted_table(2000, 12, 2, 2, 0.1, seed).unwrap();
        let cfg = Config { seed, rule_mode: None, ..Config::default() };
        let art = preprocess(&p.table, &cfg, &mut |_| {}).unwrap();
        // the fixed (column, level) tokens of each cluster
        let tokens: Vec<Vec<String>> = (0..2)
            .map(|c| {
                p.rules
                    .iter()
                    .filter(|r| r.cluster == c)
                    .flat_map(|r| r.antecedent.iter().chain(&r.consequent))
                    .map(|(col, lv)| {
                        let bin = art.binning.bin_of(col, ValueRef::Number(p.level_value(*lv))).unwrap();
                        art.binned.token(art.binned.column_index(col).unwrap(), bin)
                    })
                    .collect()
            })
            .collect();
        let v = |t: &str| art.model.vector(t).unwrap();
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for c in 0..2 {
            for (i, a) in tokens[c].iter().enumerate() {
                for b in &tokens[c][i + 1..] {
                    intra += cosine(v(a), v(b));
                    ni += 1;
                }
                if c == 0 {
                    for b in &tokens[1] {
                        inter += cosine(v(a), v(b));
                        nx += 1;
                    }
                }
            }
        }
        let (intra, inter) = (intra / ni as f64, inter / nx as f64);
        wins += (intra > inter) as usize;
        margins.push(intra - inter);
    }
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);

    let p = generate_planted_table(2000, 12, 2, 2, 0.1, 3).unwrap();
    let norm = normalize_values(&p.table);
    let bt = apply_binning(&norm, &compute_binning(&norm, 5).unwrap()).unwrap();
    let corpus = build_corpus(&bt, 100_000, 1000, 3).unwrap();
    let params = TrainParams { seed: 3, workers: 1, ..TrainParams::default() };
    let a = train_embedding(&corpus, &params).unwrap();
    let b = train_embedding(&corpus, &params).unwrap();
    let identical = a.vocabulary() == b.vocabulary()
        && a.vocabulary().iter().all(|t| {
            let (x, y) = (a.vector(t).unwrap(), b.vector(t).unwrap());
            x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
        });
    verdict(
        "embedding sanity",
        wins >= 19 && identical,
        &format!("intra > inter cosine in {wins}/20 seeds (smallest margin {min_margin:.3}); re-run bit-identical: {identical}"),
    );
}

#[test]
fn end_to_end_effectiveness() {
    let _g = serial();
    let start = Instant::now();
    let (mut emb, mut rnd, mut naive) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let p = generate_planted_table(10_000, 20, 3, 2, 0.1, seed).unwrap();
        let spec = SweepSpec {
            base: Config { seed, ..Config::default() },
            methods: vec![Method::Embedding, Method::Random, Method::Naive],
            seeds: vec![seed],
            ..SweepSpec::default()
        };
        let rep = sweep_parameters(&p.table, &spec).unwrap();
        let get = |m: &str| rep.rows.iter().find(|r| r.method == m).unwrap().combined;
        emb.push(get("embedding"));
        rnd.push(get("random"));
        naive.push(get("naive"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let vs_random = sign_test(&emb, &rnd, 1e-12);
    let vs_naive = sign_test(&emb, &naive, 1e-12);
    let beats_random = mean(&emb) >= mean(&rnd) && vs_random.significant(0.05);
    let beats_naive = mean(&emb) >= mean(&naive) && vs_naive.significant(0.05);
    verdict(
        "end-to-end effectiveness",
        beats_random && beats_naive,
        &format!(
            "mean combined embedding {:.3}, random {:.3}, naive {:.3}; vs random {}-{} (ties {}) p={:.4}; vs naive {}-{} (ties {}) p={:.4}; {:.0?}",
            mean(&emb),
            mean(&rnd),
            mean(&naive),
            vs_random.wins,
            vs_random.losses,
            vs_random.ties,
            vs_random.p_value,
            vs_naive.wins,
            vs_naive.losses,
            vs_naive.ties,
            vs_naive.p_value,
            start.elapsed()
        ),
    );
}

fn timed_selection(art: &Artifacts, query: &SPQuery, k: usize, l: usize) -> Duration {
    let req = SubtableRequest::new(SelectionRequest::new(k, l).with_query(query.clone()), Method::Embedding);
    let start = Instant::now();
    run_selection(&art.table, Some(art), &req).unwrap();
    start.elapsed()
}

#[test]
fn performance_envelope() {
    let _g = serial();
    let p = generate_planted_table(250_000, 31, 3, 2, 0.1, 7).unwrap();
    let start = Instant::now();
    let art = preprocess(&p.table, &Config::default(), &mut |_| {}).unwrap();
    let pre = start.elapsed();

    // the smallest upper bound on one column that keeps at least 100k rows
    let col = column_name(0);
    let (query, rows) = (1..=5)
        .map(|lv| {
            let bound = (lv as f64 - 0.5) * p.config.spacing;
            let q = SPQuery::filter(vec![Predicate::new(&col, Comparator::Lt, Literal::Number(bound))]);
            let n = apply_query(&p.table, &q).unwrap().n_rows();
            (q, n)
        })
        .find(|(_, n)| *n >= 100_000)
        .unwrap();
    let select = timed_selection(&art, &query, 10, 10);
    // best of three per size, to keep scheduler noise out of the ratio
    let sizes: Vec<(usize, Duration)> = [5, 10, 20]
        .iter()
        .map(|&k| (k, (0..3).map(|_| timed_selection(&art, &query, k, 10)).min().unwrap()))
        .collect();
    let fastest = sizes.iter().map(|s| s.1).min().unwrap();
    let slowest = sizes.iter().map(|s| s.1).max().unwrap();
    let ratio = slowest.as_secs_f64() / fastest.as_secs_f64();
    let pass = pre <= Duration::from_secs(300) && select <= Duration::from_secs(5) && ratio < 2.0;
    verdict(
        "performance envelope",
        pass,
        &format!(
            "preprocess 250000x31 {:.1?} (cores available: {}); select on {rows} rows {select:.2?}; k=5/10/20 at l=10: {:?}, ratio {ratio:.2}",
            pre,
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            sizes.iter().map(|(k, d)| format!("{k}: {d:.2?}")).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn parameter_sweep_trends() {
    let _g = serial();
    let start = Instant::now();
    let grid = SweepGrid {
        bins: vec![2, 5, 10, 20],
        support: vec![0.1, 0.15, 0.2, 0.3],
        confidence: vec![0.3, 0.5, 0.7, 0.9],
        ..SweepGrid::default()
    };
    // (method, axis, value bits) -> (coverage sum, combined sum, runs)
    let mut acc: HashMap<(String, String, u64), (f64, f64, usize)> = HashMap::new();
    for seed in 0..10u64 {
        let p = generate_planted_table(3000, 20, 3, 2, 0.1, seed).unwrap();
        let spec = SweepSpec {
            grid: grid.clone(),
            // at support 0.1 two bins per column yield millions of rules
            base: Config { seed, k: 10, l: 10, support: 0.2, ..Config::default() },
            methods: vec![Method::Embedding, Method::Random, Method::Naive],
            seeds: vec![seed],
            // a fixed draw count keeps random's effort equal across rule-set sizes
            random: RandomBudget { draws: Some(1000), millis: None },
            ..SweepSpec::default()
        };
        for r in sweep_parameters(&p.table, &spec).unwrap().rows {
            let e = acc.entry((r.method, r.axis, r.value.to_bits())).or_default();
            e.0 += r.cell_coverage;
            e.1 += r.combined;
            e.2 += 1;
        }
    }
    let mean = |m: &str, axis: &str, v: f64| {
        let (c, s, n) = acc[&(m.to_string(), axis.to_string(), v.to_bits())];
        (c / n as f64, s / n as f64)
    };
    let axes: [(&str, Vec<f64>); 3] = [
        ("bins", grid.bins.iter().map(|&b| b as f64).collect()),
        ("support", grid.support.clone()),
        ("confidence", grid.confidence.clone()),
    ];
    let mut trend_breaks = Vec::new();
    let mut rank_breaks = Vec::new();
    let mut lines = Vec::new();
    for (axis, values) in &axes {
        for m in ["embedding", "random", "naive"] {
            let covs: Vec<f64> = values.iter().map(|&v| mean(m, axis, v).0).collect();
            if covs.windows(2).any(|w| w[1] > w[0] + 1e-9) {
                trend_breaks.push(format!("{m}/{axis}"));
            }
            lines.push(format!("{m}/{axis} {:?}", covs.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>()));
        }
        for &v in values {
            let e = mean("embedding", axis, v).1;
            for m in ["random", "naive"] {
                if mean(m, axis, v).1 > e {
                    rank_breaks.push(format!("{m}>{axis}={v}"));
                }
            }
        }
    }
    println!("sweep coverage means: {}", lines.join("; "));
    verdict(
        "parameter sweep trends",
        trend_breaks.is_empty() && rank_breaks.is_empty(),
        &format!(
            "10 seeds, {} grid points; coverage increases in {trend_breaks:?}; embedding outranked at {rank_breaks:?}; {:.0?}",
            axes.iter().map(|a| a.1.len()).sum::<usize>(),
            start.elapsed()
        ),
    );
}

#[test]
fn session_replay() {
    let _g = serial();
    let ls = [3usize, 4, 5, 6, 7];
    let mut forced_rates = Vec::new();
    let mut sums = vec![0.0; ls.len()];
    let seeds = 5u64;
    for seed in 0..seeds {
        let p = generate_planted_table(2000, 12, 3, 1, 0.1, seed).unwrap();
        let art = preprocess(&p.table, &Config { seed, ..Config::default() }, &mut |_| {}).unwrap();
        // targets force columns, so the forced run uses column fragments only
        let column_logs = generate_sessions(&p, 20, 5, false, seed);
        let forced = ReplayOptions { k: 5, l: 3, seed, force_targets: true, ..ReplayOptions::default() };
        forced_rates.push(replay_sessions(&art, &column_logs, &forced).unwrap().rate());
        let logs = generate_sessions(&p, 20, 5, true, seed);
        for (i, &l) in ls.iter().enumerate() {
            let opts = ReplayOptions { k: 5, l, seed, ..ReplayOptions::default() };
            sums[i] += replay_sessions(&art, &logs, &opts).unwrap().rate();
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / seeds as f64).collect();
    let forced_ok = forced_rates.iter().all(|&r| r == 1.0);
    let monotone = means.windows(2).all(|w| w[1] >= w[0]) && means[ls.len() - 1] > means[0];
    verdict(
        "session replay",
        forced_ok && monotone,
        &format!(
            "forced capture {forced_rates:?}; mean capture by l=3..7 {:?}",
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>()
        ),
    );
}

//! Benchmark rows and their aggregation.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;
use subtab_core::Result;

/// One method evaluated at one parameter point with one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchmarkRow {
    pub method: String,
    /// The grid axis varied for this point, or `default`.
    pub axis: String,
    pub value: f64,
    pub seed: u64,
    pub bins: usize,
    pub support: f64,
    pub confidence: f64,
    pub alpha: f64,
    pub k: usize,
    pub l: usize,
    pub dim: usize,
    pub cell_coverage: f64,
    pub diversity: f64,
    pub combined: f64,
    /// Selection time in seconds, preprocessing excluded.
    pub wall_clock: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SummaryRow {
    pub method: String,
    pub axis: String,
    pub value: f64,
    pub runs: usize,
    pub cell_coverage_mean: f64,
    pub cell_coverage_std: f64,
    pub diversity_mean: f64,
    pub diversity_std: f64,
    pub combined_mean: f64,
    pub combined_std: f64,
    pub wall_clock_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    match xs.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (xs[0], 0.0),
        _ => (xs.mean(), xs.std_dev()),
    }
}

impl BenchmarkReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rows of one method at one point, in seed order.
    pub fn select(&self, method: &str, axis: &str, value: f64) -> Vec<&BenchmarkRow> {
        self.rows.iter().filter(|r| r.method == method && r.axis == axis && r.value == value).collect()
    }

    /// Mean and standard deviation over seeds per (method, axis, value), in
    /// first-appearance order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(String, String, f64)> = Vec::new();
        for r in &self.rows {
            let key = (r.method.clone(), r.axis.clone(), r.value);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(method, axis, value)| {
                let rows = self.select(&method, &axis, value);
                let col = |f: fn(&BenchmarkRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
                let (cm, cs) = mean_std(&col(|r| r.cell_coverage));
                let (dm, ds) = mean_std(&col(|r| r.diversity));
                let (sm, ss) = mean_std(&col(|r| r.combined));
                let (wm, _) = mean_std(&col(|r| r.wall_clock));
                SummaryRow {
                    method,
                    axis,
                    value,
                    runs: rows.len(),
                    cell_coverage_mean: cm,
                    cell_coverage_std: cs,
                    diversity_mean: dm,
                    diversity_std: ds,
                    combined_mean: sm,
                    combined_std: ss,
                    wall_clock_mean: wm,
                }
            })
            .collect()
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.summary() {
            w.serialize(r).map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, seed: u64, cov: f64) -> BenchmarkRow {
        BenchmarkRow {
            method: method.into(),
            axis: "bins".into(),
            value: 5.0,
            seed,
            bins: 5,
            support: 0.1,
            confidence: 0.6,
            alpha: 0.5,
            k: 3,
            l: 3,
            dim: 8,
            cell_coverage: cov,
            diversity: 0.5,
            combined: 0.5 * cov + 0.25,
            wall_clock: 0.01,
        }
    }

    #[test]
    fn summary_statistics() {
        let rep = BenchmarkReport { rows: vec![row("a", 0, 0.2), row("a", 1, 0.4), row("b", 0, 0.9)] };
        let s = rep.summary();
        assert_eq!(s.len(), 2);
        assert!((s[0].cell_coverage_mean - 0.3).abs() < 1e-12);
        // sample standard deviation of {0.2, 0.4}
        assert!((s[0].cell_coverage_std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].runs, 1);
        assert_eq!(s[1].cell_coverage_std, 0.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rep = BenchmarkReport { rows: vec![row("a", 0, 0.2), row("a", 1, 0.4)] };
        let mut out = Vec::new();
        rep.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("method,axis,value,seed,"));
        let back: BenchmarkReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}

//! Pipeline settings, read from TOML with camelCase keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::TrainParams;
use crate::error::{Error, Result};
use crate::rules::MiningMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct Config {
    /// Bins per column.
    pub bins: usize,
    pub support: f64,
    pub confidence: f64,
    pub min_rule_size: usize,
    pub alpha: f64,
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub corpus_cap: usize,
    /// Tokens per column-sentence chunk.
    pub chunk: usize,
    pub k: usize,
    pub l: usize,
    pub seed: u64,
    pub learning_rate: f32,
    pub max_contexts: usize,
    pub workers: usize,
    /// Rule mining during preprocessing; `None` skips it.
    pub rule_mode: Option<MiningMode>,
    /// Target columns for per-target mining, or the consequent columns of
    /// exhaustive enumeration.
    pub rule_targets: Vec<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bins: 5,
            support: 0.1,
            confidence: 0.6,
            min_rule_size: 3,
            alpha: 0.5,
            dim: 64,
            epochs: 5,
            negatives: 5,
            corpus_cap: 100_000,
            chunk: 1000,
            k: 10,
            l: 10,
            seed: 42,
            learning_rate: 0.025,
            max_contexts: 16,
            workers: 1,
            rule_mode: Some(MiningMode::Apriori),
            rule_targets: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if !(self.support > 0.0 && self.support <= 1.0) {
            return bad(format!("support must lie in (0, 1], got {}", self.support));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return bad(format!("confidence must lie in [0, 1], got {}", self.confidence));
        }
        if self.min_rule_size < 2 {
            return bad("minRuleSize must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        for (name, v) in [
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("corpusCap", self.corpus_cap),
            ("chunk", self.chunk),
            ("k", self.k),
            ("l", self.l),
            ("workers", self.workers),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(self.learning_rate > 0.0) {
            return bad("learningRate must be positive".into());
        }
        if self.rule_mode == Some(MiningMode::PerTarget) && self.rule_targets.is_empty() {
            return bad("per-target mining needs ruleTargets".into());
        }
        Ok(())
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            dim: self.dim,
            epochs: self.epochs,
            negatives: self.negatives,
            learning_rate: self.learning_rate,
            seed: self.seed,
            max_contexts: self.max_contexts,
            workers: self.workers,
            ..TrainParams::default()
        }
    }

    /// The settings that shape preprocessing artifacts, as canonical JSON.
    pub fn preprocess_fingerprint(&self) -> String {
        serde_json::json!({
            "bins": self.bins,
            "support": self.support,
            "confidence": self.confidence,
            "minRuleSize": self.min_rule_size,
            "corpusCap": self.corpus_cap,
            "chunk": self.chunk,
            "seed": self.seed,
            "train": self.train_params(),
            "ruleMode": self.rule_mode,
            "ruleTargets": self.rule_targets,
        })
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_defaults() {
        let c = Config::default();
        assert_eq!((c.bins, c.support, c.confidence, c.min_rule_size, c.alpha), (5, 0.1, 0.6, 3, 0.5));
        assert_eq!((c.dim, c.epochs, c.negatives, c.corpus_cap, c.chunk), (64, 5, 5, 100_000, 1000));
        assert_eq!((c.k, c.l, c.seed), (10, 10, 42));
    }

    #[test]
    fn toml_overrides_some_keys() {
        let c = Config::from_toml_str("bins = 7\nminRuleSize = 2\nruleMode = \"exhaustive\"\nruleTargets = [\"A\"]\n").unwrap();
        assert_eq!(c.bins, 7);
        assert_eq!(c.min_rule_size, 2);
        assert_eq!(c.rule_mode, Some(MiningMode::Exhaustive));
        assert_eq!(c.k, 10);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(matches!(Config::from_toml_str("bins = 0"), Err(Error::Config(_))));
        assert!(Config::from_toml_str("support = 1.5").is_err());
        assert!(Config::from_toml_str("minRuleSize = 1").is_err());
        assert!(Config::from_toml_str("unknownKey = 1").is_err());
        assert!(Config::from_toml_str("ruleMode = \"per-target\"").is_err());
    }

    #[test]
    fn fingerprint_ignores_selection_settings() {
        let a = Config::default();
        let b = Config { k: 3, alpha: 0.9, ..Config::default() };
        let c = Config { bins: 6, ..Config::default() };
        assert_eq!(a.preprocess_fingerprint(), b.preprocess_fingerprint());
        assert_ne!(a.preprocess_fingerprint(), c.preprocess_fingerprint());
    }
}

//! Pipeline configuration: every hyperparameter plus the input paths, read
//! from a `key = value` file and overridden by command-line settings.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cofactor::CoFactorConfig;
use crate::corpus::DEFAULT_MAX_ROWS;
use crate::error::{Error, Result};
use crate::labelgen::{EmbeddingSource, DEFAULT_THRESHOLD, DEFAULT_TOP_M, DEFAULT_TREES};
use crate::ranking::{Metric, RankerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub max_rows: usize,
    pub min_label_freq: usize,
    pub k_neg: u32,
    pub cofactor: CoFactorConfig,
    pub trees: usize,
    pub top_m: usize,
    pub threshold: f64,
    pub embedding_source: EmbeddingSource,
    pub include_original_labels_in_wmd: bool,
    pub tune_metric: Metric,
    /// Normalization, scorer parameters, starting weights and depth.
    pub ranker: RankerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            corpus: None,
            vectors: None,
            queries: None,
            descriptions: None,
            qrels: None,
            max_rows: DEFAULT_MAX_ROWS,
            min_label_freq: 1,
            k_neg: 1,
            cofactor: CoFactorConfig::default(),
            trees: DEFAULT_TREES,
            top_m: DEFAULT_TOP_M,
            threshold: DEFAULT_THRESHOLD,
            embedding_source: EmbeddingSource::default(),
            include_original_labels_in_wmd: false,
            tune_metric: Metric::default(),
            ranker: RankerConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl PipelineConfig {
    /// Read a `key = value` file on top of the defaults. `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_kv(&text)?;
        Ok(cfg)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("config", n + 1, "expected key = value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Set one option. Dashes and underscores in keys are interchangeable;
    /// unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let k = key.as_str();
        let cf = &mut self.cofactor;
        match k {
            "seed" => self.seed = parse(k, value)?,
            "corpus" => self.corpus = Some(value.into()),
            "vectors" => self.vectors = Some(value.into()),
            "queries" => self.queries = Some(value.into()),
            "descriptions" => self.descriptions = Some(value.into()),
            "qrels" => self.qrels = Some(value.into()),
            "max_rows" => self.max_rows = parse(k, value)?,
            "min_label_freq" => self.min_label_freq = parse(k, value)?,
            "k_neg" => self.k_neg = parse(k, value)?,
            "k" | "latent_dim" => cf.k = parse(k, value)?,
            "c1" => cf.c1 = parse(k, value)?,
            "c0" => cf.c0 = parse(k, value)?,
            "lambda_alpha" => cf.lambda_alpha = parse(k, value)?,
            "lambda_beta" => cf.lambda_beta = parse(k, value)?,
            "lambda_gamma" => cf.lambda_gamma = parse(k, value)?,
            "max_sweeps" => cf.max_sweeps = parse(k, value)?,
            "tolerance" => cf.tolerance = parse(k, value)?,
            "trees" => self.trees = parse(k, value)?,
            "top_m" => self.top_m = parse(k, value)?,
            "threshold" => self.threshold = parse(k, value)?,
            "embedding_source" => self.embedding_source = value.parse()?,
            "include_original_labels_in_wmd" => {
                self.include_original_labels_in_wmd = parse_bool(k, value)?
            }
            "tune_metric" => self.tune_metric = value.parse()?,
            _ => self.ranker.set(k, value)?,
        }
        Ok(())
    }

    /// Apply `key=value` overrides, as given on the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {:?}: expected key=value", o.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut cf = self.cofactor.clone();
        cf.seed = self.seed;
        cf.validate()?;
        if self.k_neg < 1 {
            return Err(Error::param("k_neg", "must be at least 1"));
        }
        if self.trees < 1 {
            return Err(Error::param("trees", "must be at least 1"));
        }
        if self.top_m < 1 {
            return Err(Error::param("top_m", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::param("threshold", "must lie in [0, 1]"));
        }
        if self.max_rows < 1 {
            return Err(Error::param("max_rows", "must be at least 1"));
        }
        if self.min_label_freq < 1 {
            return Err(Error::param("min_label_freq", "must be at least 1"));
        }
        self.ranker.text_scorer.validate()?;
        self.ranker.data_scorer.validate()
    }

    /// Factorization settings seeded from the pipeline seed.
    pub fn cofactor_config(&self) -> CoFactorConfig {
        CoFactorConfig {
            seed: self.seed,
            ..self.cofactor.clone()
        }
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("no {key} path given")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::MixField;

    #[test]
    fn defaults_match_published_settings() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.cofactor.k, 40);
        assert_eq!(cfg.trees, 25);
        assert_eq!(cfg.top_m, 10);
        assert_eq!(cfg.threshold, 0.5);
        cfg.validate().unwrap();
    }

    #[test]
    fn file_then_overrides() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_kv("# comment\nk = 8\ntop-m = 5  # inline\nw_labels = 0.4\nenabled = text,labels\n")
            .unwrap();
        cfg.apply_overrides(&["top_m=3", "seed=9"]).unwrap();
        assert_eq!(cfg.cofactor.k, 8);
        assert_eq!(cfg.top_m, 3);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.ranker.weight(MixField::Labels), 0.4);
        assert_eq!(cfg.cofactor_config().seed, 9);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("frobnicate", "1").is_err());
        assert!(cfg.set("trees", "many").is_err());
        assert!(cfg.apply_kv("no equals sign").is_err());
        cfg.set("c0", "2").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.set("threshold", "1.5").unwrap();
        assert!(cfg.validate().is_err());
    }
}

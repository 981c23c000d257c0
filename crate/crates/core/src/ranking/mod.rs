//! Mixed ranking of datasets: lexical field scores combined with a
//! label-similarity score.
//!
//! ```text
//! score(q, D) = w_text * s_text(q, D) + w_data * s_data(q, D) + w_l * s_l(q, D)
//! ```
//!
//! `s_text` and `s_data` are BM25 scores over the title/description and data
//! fields. `s_l` is the negative Word Mover's Distance between the query and
//! the dataset's generated labels.

mod transport;
mod tune;
mod wmd;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use transport::{solve_transport, TransportPlan};
pub use tune::{grid_search_scorer, tune_weights, Metric, TuneResult, WEIGHT_GRID_STEP};
pub use wmd::{euclidean, score_clouds, score_labels, semantic_features, wmd, DEFAULT_CLOUD_CAP, WMD_FLOOR};

use crate::corpus::{tokenize_text, Corpus, TaskSet};
use crate::embed::{EmbeddingStore, WeightedPointCloud};
use crate::error::{Error, Result};
use crate::eval::{Qrels, RunFile};
use crate::index::{build_index, Field, FieldIndex, Scorer};

pub const DEFAULT_DEPTH: usize = 100;

/// The three components of the mixed score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MixField {
    Text,
    Data,
    Labels,
}

impl MixField {
    pub const ALL: [MixField; 3] = [MixField::Text, MixField::Data, MixField::Labels];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MixField::Text => "text",
            MixField::Data => "data",
            MixField::Labels => "labels",
        }
    }
}

impl FromStr for MixField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MixField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ranking field {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    None,
    /// Map each field's candidate scores affinely onto `[0, 1]` per query.
    #[default]
    MinMax,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "raw" => Ok(Normalization::None),
            "minmax" | "minmax-per-query" => Ok(Normalization::MinMax),
            _ => Err(Error::Config(format!("unknown normalization {s}"))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::MinMax => "minmax",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig {
    /// Weights indexed by [`MixField`].
    pub weights: [f64; 3],
    pub enabled: [bool; 3],
    /// Fields whose weight must stay nonzero during tuning.
    pub forced: [bool; 3],
    pub text_scorer: Scorer,
    pub data_scorer: Scorer,
    pub normalization: Normalization,
    /// Score given to datasets whose labels (or a query) cannot be embedded.
    pub label_floor: f64,
    pub depth: usize,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            weights: [0.5; 3],
            enabled: [true, false, false],
            forced: [false; 3],
            text_scorer: Scorer::default(),
            data_scorer: Scorer::default(),
            normalization: Normalization::MinMax,
            label_floor: WMD_FLOOR,
            depth: DEFAULT_DEPTH,
        }
    }
}

impl RankerConfig {
    /// Single-field BM25 over title and description.
    pub fn text_only() -> Self {
        Self::with_fields(&[(MixField::Text, 1.0)])
    }

    /// Fields enabled with the given weights; other fields disabled.
    pub fn with_fields(fields: &[(MixField, f64)]) -> Self {
        let mut cfg = RankerConfig {
            weights: [0.0; 3],
            enabled: [false; 3],
            ..Default::default()
        };
        for &(f, w) in fields {
            cfg.enabled[f.slot()] = true;
            cfg.weights[f.slot()] = w;
        }
        cfg
    }

    pub fn weight(&self, f: MixField) -> f64 {
        if self.enabled[f.slot()] {
            self.weights[f.slot()]
        } else {
            0.0
        }
    }

    pub fn set_weight(&mut self, f: MixField, w: f64) {
        self.weights[f.slot()] = w;
    }

    pub fn is_enabled(&self, f: MixField) -> bool {
        self.enabled[f.slot()]
    }

    pub fn is_forced(&self, f: MixField) -> bool {
        self.forced[f.slot()]
    }

    pub fn enabled_fields(&self) -> Vec<MixField> {
        MixField::ALL.into_iter().filter(|&f| self.is_enabled(f)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("field weights must be finite and >= 0".into()));
        }
        if !MixField::ALL.iter().any(|&f| self.weight(f) > 0.0) {
            return Err(Error::Config("no enabled field has a positive weight".into()));
        }
        self.text_scorer.validate()?;
        self.data_scorer.validate()?;
        Ok(())
    }

    /// Short field description in the style `T+D+DT+G`.
    pub fn fields_tag(&self) -> String {
        let mut parts = Vec::new();
        if self.is_enabled(MixField::Text) {
            parts.push("T+D");
        }
        if self.is_enabled(MixField::Data) {
            parts.push("DT");
        }
        if self.is_enabled(MixField::Labels) {
            parts.push("G");
        }
        parts.join("+")
    }

    /// `key = value` lines, readable by [`RankerConfig::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for f in MixField::ALL {
            out.push_str(&format!("w_{} = {}\n", f.name(), self.weights[f.slot()]));
        }
        let list = |mask: [bool; 3]| {
            MixField::ALL
                .into_iter()
                .filter(|f| mask[f.slot()])
                .map(MixField::name)
                .collect::<Vec<_>>()
                .join(",")
        };
        for (key, mask) in [("enabled", self.enabled), ("forced", self.forced)] {
            let value = list(mask);
            if value.is_empty() {
                out.push_str(&format!("{key} =\n"));
            } else {
                out.push_str(&format!("{key} = {value}\n"));
            }
        }
        if let Scorer::Bm25 { k1, b } = self.text_scorer {
            out.push_str(&format!("text_k1 = {k1}\ntext_b = {b}\n"));
        }
        if let Scorer::Bm25 { k1, b } = self.data_scorer {
            out.push_str(&format!("data_k1 = {k1}\ndata_b = {b}\n"));
        }
        out.push_str(&format!("normalization = {}\n", self.normalization));
        out.push_str(&format!("label_floor = {}\n", self.label_floor));
        out.push_str(&format!("depth = {}\n", self.depth));
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = RankerConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("ranker config", n + 1, "expected key = value"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Set one option by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Config(format!("{key}: bad number {v}")))
        };
        let mask = |v: &str| -> Result<[bool; 3]> {
            let mut m = [false; 3];
            for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                m[name.parse::<MixField>()?.slot()] = true;
            }
            Ok(m)
        };
        let bm25 = |s: &mut Scorer, k1: Option<f64>, b: Option<f64>| {
            let (old_k1, old_b) = match *s {
                Scorer::Bm25 { k1, b } => (k1, b),
                _ => (1.2, 0.75),
            };
            *s = Scorer::Bm25 {
                k1: k1.unwrap_or(old_k1),
                b: b.unwrap_or(old_b),
            };
        };
        match key {
            "w_text" => self.weights[0] = num(value)?,
            "w_data" => self.weights[1] = num(value)?,
            "w_labels" | "w_l" => self.weights[2] = num(value)?,
            "enabled" => self.enabled = mask(value)?,
            "forced" => self.forced = mask(value)?,
            "text_k1" => bm25(&mut self.text_scorer, Some(num(value)?), None),
            "text_b" => bm25(&mut self.text_scorer, None, Some(num(value)?)),
            "data_k1" => bm25(&mut self.data_scorer, Some(num(value)?), None),
            "data_b" => bm25(&mut self.data_scorer, None, Some(num(value)?)),
            "normalization" => self.normalization = value.parse()?,
            "label_floor" => self.label_floor = num(value)?,
            "depth" => {
                self.depth = value
                    .parse()
                    .map_err(|_| Error::Config(format!("depth: bad value {value}")))?
            }
            _ => return Err(Error::Config(format!("unknown ranker option {key}"))),
        }
        Ok(())
    }
}

/// Ranked `(dataset_id, score)` pairs, best first, ties by id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

/// Raw per-dataset scores of each enabled field for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldScores {
    pub scores: [Option<Vec<f64>>; 3],
}

impl FieldScores {
    pub fn get(&self, f: MixField) -> Option<&[f64]> {
        self.scores[f.slot()].as_deref()
    }
}

/// Everything needed to score datasets against queries.
pub struct Ranker<'a> {
    ids: Vec<String>,
    text: Option<FieldIndex>,
    data: Option<FieldIndex>,
    label_clouds: Vec<Option<WeightedPointCloud>>,
    store: Option<&'a EmbeddingStore>,
}

/// Token multiset scored against the query by the label component.
pub fn label_document(ds: &crate::corpus::Dataset, include_original: bool) -> Vec<String> {
    let mut tokens = Field::LabelsGen.tokens(ds);
    if include_original {
        tokens.extend(Field::LabelsOrig.tokens(ds));
    }
    tokens
}

impl<'a> Ranker<'a> {
    /// Build indexes for the text and data fields and embed every dataset's
    /// generated labels.
    pub fn new(corpus: &Corpus, store: Option<&'a EmbeddingStore>, include_original_labels: bool) -> Self {
        let label_docs = corpus
            .datasets
            .iter()
            .map(|ds| label_document(ds, include_original_labels))
            .collect();
        Ranker::from_parts(
            corpus.ids().into_iter().map(str::to_string).collect(),
            Some(build_index(&corpus.datasets, Field::Text)),
            Some(build_index(&corpus.datasets, Field::Data)),
            label_docs,
            store,
        )
    }

    pub fn from_parts(
        ids: Vec<String>,
        text: Option<FieldIndex>,
        data: Option<FieldIndex>,
        label_docs: Vec<Vec<String>>,
        store: Option<&'a EmbeddingStore>,
    ) -> Self {
        let label_clouds = match store {
            Some(s) => label_docs
                .iter()
                .map(|doc| s.embed_tokens(doc).ok().map(|c| c.truncated(DEFAULT_CLOUD_CAP)))
                .collect(),
            None => vec![None; ids.len()],
        };
        Ranker {
            ids,
            text,
            data,
            label_clouds,
            store,
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn check(&self, cfg: &RankerConfig) -> Result<()> {
        cfg.validate()?;
        if cfg.is_enabled(MixField::Text) && self.text.is_none() {
            return Err(Error::Config("text field enabled but not indexed".into()));
        }
        if cfg.is_enabled(MixField::Data) && self.data.is_none() {
            return Err(Error::Config("data field enabled but not indexed".into()));
        }
        if cfg.is_enabled(MixField::Labels) && self.store.is_none() {
            return Err(Error::Config("labels field enabled but no embeddings loaded".into()));
        }
        Ok(())
    }

    pub fn field_scores(&self, query: &str, cfg: &RankerConfig) -> Result<FieldScores> {
        self.check(cfg)?;
        let tokens = tokenize_text(query);
        let mut scores: [Option<Vec<f64>>; 3] = [None, None, None];
        if cfg.is_enabled(MixField::Text) {
            scores[0] = Some(cfg.text_scorer.score_all(self.text.as_ref().unwrap(), &tokens)?);
        }
        if cfg.is_enabled(MixField::Data) {
            scores[1] = Some(cfg.data_scorer.score_all(self.data.as_ref().unwrap(), &tokens)?);
        }
        if cfg.is_enabled(MixField::Labels) {
            let store = self.store.unwrap();
            let q = store.embed_tokens(&tokens).ok();
            scores[2] = Some(
                self.label_clouds
                    .par_iter()
                    .map(|cloud| match (&q, cloud) {
                        (Some(q), Some(c)) => score_clouds(q, c, cfg.label_floor),
                        _ => cfg.label_floor,
                    })
                    .collect(),
            );
        }
        Ok(FieldScores { scores })
    }

    /// Mixed scores of every dataset for one query.
    pub fn score_all(&self, query: &str, cfg: &RankerConfig) -> Result<Vec<f64>> {
        Ok(mix(&self.field_scores(query, cfg)?, cfg, self.ids.len()))
    }

    /// Mixed score of a single dataset. Under min-max normalization the
    /// whole corpus is the candidate set.
    pub fn score_dataset(&self, query: &str, dataset_id: &str, cfg: &RankerConfig) -> Result<f64> {
        let pos = self
            .ids
            .iter()
            .position(|id| id == dataset_id)
            .ok_or_else(|| Error::Config(format!("unknown dataset {dataset_id}")))?;
        Ok(self.score_all(query, cfg)?[pos])
    }

    pub fn rank(&self, query_id: &str, query: &str, cfg: &RankerConfig) -> Result<RankedList> {
        let scores = self.score_all(query, cfg)?;
        Ok(order(query_id, &self.ids, &scores, cfg.depth))
    }

    /// Rank every query of a task set.
    pub fn run_all(&self, tasks: &TaskSet, cfg: &RankerConfig, tag: &str) -> Result<RunFile> {
        let lists: Vec<RankedList> = tasks
            .queries()
            .par_iter()
            .map(|(qid, q)| self.rank(qid, q, cfg))
            .collect::<Result<_>>()?;
        let mut run = RunFile::new(tag);
        for l in lists {
            run.insert(l.query_id, l.entries);
        }
        Ok(run)
    }

    /// Five semantic features per judged `(query, dataset)` pair, as
    /// `query_id dataset_id f1..f5 grade` lines.
    pub fn feature_rows(
        &self,
        corpus: &Corpus,
        tasks: &TaskSet,
        qrels: &Qrels,
        include_original_labels: bool,
    ) -> Result<String> {
        let store = self
            .store
            .ok_or_else(|| Error::Config("feature extraction needs embeddings".into()))?;
        let mut out = String::new();
        for (qid, q) in tasks.queries() {
            let task = crate::corpus::task_of_query(&qid);
            let Some(judged) = qrels.task(task) else { continue };
            let qt = tokenize_text(&q);
            for (ds_id, grade) in judged {
                let Some(ds) = corpus.datasets.iter().find(|d| &d.id == ds_id) else {
                    continue;
                };
                let f = semantic_features(store, &qt, &label_document(ds, include_original_labels));
                out.push_str(&format!(
                    "{qid}\t{ds_id}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{grade}\n",
                    f[0], f[1], f[2], f[3], f[4]
                ));
            }
        }
        Ok(out)
    }
}

fn minmax(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Weighted sum of (optionally normalized) field scores.
pub fn mix(fields: &FieldScores, cfg: &RankerConfig, n: usize) -> Vec<f64> {
    let mut total = vec![0.0; n];
    for f in MixField::ALL {
        let w = cfg.weight(f);
        let Some(raw) = fields.get(f) else { continue };
        if w == 0.0 {
            continue;
        }
        let normalized;
        let scores = match cfg.normalization {
            Normalization::None => raw,
            Normalization::MinMax => {
                normalized = minmax(raw);
                &normalized
            }
        };
        for (t, s) in total.iter_mut().zip(scores) {
            *t += w * s;
        }
    }
    total
}

/// Sort by descending score, ties by ascending id, and cut at `depth`.
pub fn order(query_id: &str, ids: &[String], scores: &[f64], depth: usize) -> RankedList {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
    idx.truncate(depth);
    RankedList {
        query_id: query_id.to_string(),
        entries: idx.into_iter().map(|i| (ids[i].clone(), scores[i])).collect(),
    }
}

/// Single-field run with an arbitrary lexical scorer, used for pooling.
pub fn single_field_run(
    index: &FieldIndex,
    scorer: Scorer,
    tasks: &TaskSet,
    depth: usize,
    tag: &str,
) -> Result<RunFile> {
    let ids = index.ids().to_vec();
    let mut run = RunFile::new(tag);
    for (qid, q) in tasks.queries() {
        let scores = scorer.score_all(index, &tokenize_text(&q))?;
        let list = order(&qid, &ids, &scores, depth);
        run.insert(qid, list.entries);
    }
    Ok(run)
}

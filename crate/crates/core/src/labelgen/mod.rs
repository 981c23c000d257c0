//! Schema label generation.
//!
//! Each column is described by curated value statistics concatenated with a
//! learned label representation. A random forest maps that vector to a
//! distribution over the label vocabulary, and the top-m labels above a
//! probability threshold become the column's generated labels.

mod features;
mod forest;

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use features::{curated_features, CURATED_DIM, CURATED_NAMES};
pub use forest::{DecisionTree, Node, RandomForest};

use crate::cofactor::FactorModel;
use crate::cooccur::LabelVocab;
use crate::corpus::{Corpus, Dataset, GeneratedLabel};
use crate::error::{Error, Result};

pub const DEFAULT_TREES: usize = 25;
pub const DEFAULT_TOP_M: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Which label representation fills the embedding part of a column vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EmbeddingSource {
    /// The column's own original label (zeros when it has none).
    OwnLabel,
    /// Mean over the other distinct labels of the same table.
    #[default]
    SiblingMean,
}

impl std::str::FromStr for EmbeddingSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "own" | "own-label" => Ok(EmbeddingSource::OwnLabel),
            "siblings" | "sibling-mean" => Ok(EmbeddingSource::SiblingMean),
            _ => Err(Error::Config(format!("unknown embedding source {s}"))),
        }
    }
}

impl std::fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmbeddingSource::OwnLabel => "own-label",
            EmbeddingSource::SiblingMean => "sibling-mean",
        })
    }
}

/// Feature vector of column `col` of `ds`: curated statistics followed by
/// a `k`-dimensional label representation.
pub fn column_features(
    ds: &Dataset,
    col: usize,
    model: &FactorModel,
    vocab: &LabelVocab,
    source: EmbeddingSource,
) -> Vec<f64> {
    let column = &ds.columns[col];
    let k = model.k();
    let mut x = curated_features(column).to_vec();
    let mut emb = vec![0.0; k];
    match source {
        EmbeddingSource::OwnLabel => {
            if let Some(p) = column.label_key().and_then(|key| vocab.get(&key)) {
                emb.copy_from_slice(model.label_vector(p));
            }
        }
        EmbeddingSource::SiblingMean => {
            let own = column.label_key();
            let siblings: Vec<usize> = ds
                .label_keys()
                .into_iter()
                .filter(|key| Some(key) != own.as_ref())
                .filter_map(|key| vocab.get(&key))
                .collect();
            for &p in &siblings {
                emb.iter_mut()
                    .zip(model.label_vector(p))
                    .for_each(|(e, b)| *e += b);
            }
            if !siblings.is_empty() {
                emb.iter_mut().for_each(|e| *e /= siblings.len() as f64);
            }
        }
    }
    x.extend(emb);
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    /// Vocabulary index of each sample's original label.
    pub labels: Vec<usize>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One-hot target vector of sample `i` over a vocabulary of size `n`.
    pub fn target(&self, i: usize, n: usize) -> Vec<f64> {
        let mut y = vec![0.0; n];
        y[self.labels[i]] = 1.0;
        y
    }
}

/// One sample per column whose original label is in the vocabulary.
pub fn build_training_set(
    corpus: &Corpus,
    model: &FactorModel,
    vocab: &LabelVocab,
    source: EmbeddingSource,
) -> TrainingSet {
    let mut set = TrainingSet {
        features: Vec::new(),
        labels: Vec::new(),
    };
    for ds in &corpus.datasets {
        for (c, column) in ds.columns.iter().enumerate() {
            let Some(p) = column.label_key().and_then(|k| vocab.get(&k)) else {
                continue;
            };
            set.features.push(column_features(ds, c, model, vocab, source));
            set.labels.push(p);
        }
    }
    set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGenerator {
    pub forest: RandomForest,
    pub source: EmbeddingSource,
    pub seed: u64,
}

pub fn train_generator(
    set: &TrainingSet,
    n_labels: usize,
    n_trees: usize,
    seed: u64,
    source: EmbeddingSource,
) -> Result<LabelGenerator> {
    if set.is_empty() {
        return Err(Error::param("training set", "no labeled columns"));
    }
    let forest = RandomForest::fit(&set.features, &set.labels, n_labels, n_trees, seed)?;
    Ok(LabelGenerator {
        forest,
        source,
        seed,
    })
}

impl LabelGenerator {
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forest.predict_proba(x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Generate labels for every column of every dataset, storing them on the
    /// datasets.
    pub fn annotate(
        &self,
        corpus: &mut Corpus,
        model: &FactorModel,
        vocab: &LabelVocab,
        top_m: usize,
        threshold: f64,
    ) -> Result<()> {
        for ds in &mut corpus.datasets {
            let mut generated = Vec::with_capacity(ds.columns.len());
            for c in 0..ds.columns.len() {
                let x = column_features(ds, c, model, vocab, self.source);
                let probs = self.predict_proba(&x)?;
                generated.push(
                    generate_labels(&probs, top_m, threshold)
                        .into_iter()
                        .map(|(p, prob)| GeneratedLabel {
                            tokens: vocab.label(p).split(' ').map(str::to_string).collect(),
                            probability: prob,
                        })
                        .collect(),
                );
            }
            ds.generated_labels = generated;
        }
        Ok(())
    }
}

/// Top-`m` labels by probability (ties by index), then drop those below
/// `threshold`. Sorted by descending probability.
pub fn generate_labels(probs: &[f64], m: usize, threshold: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(m)
        .filter(|&i| probs[i] >= threshold)
        .map(|i| (i, probs[i]))
        .collect()
}

/// `dataset_id<TAB>column_index<TAB>label<TAB>probability` per generated label.
pub fn generated_labels_tsv(corpus: &Corpus) -> String {
    let mut out = String::new();
    for ds in &corpus.datasets {
        for (c, labels) in ds.generated_labels.iter().enumerate() {
            for l in labels {
                writeln!(out, "{}\t{}\t{}\t{:?}", ds.id, c, l.tokens.join(" "), l.probability)
                    .unwrap();
            }
        }
    }
    out
}

/// Attach labels read from the TSV format to the matching datasets.
pub fn apply_generated_labels_tsv(corpus: &mut Corpus, text: &str) -> Result<()> {
    for ds in &mut corpus.datasets {
        ds.generated_labels = vec![Vec::new(); ds.columns.len()];
    }
    let mut unknown = HashSet::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let parts: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| Error::parse("generated labels", n + 1, msg);
        if parts.len() != 4 {
            return Err(bad("expected 4 tab-separated fields"));
        }
        let col: usize = parts[1].parse().map_err(|_| bad("bad column index"))?;
        let probability: f64 = parts[3].parse().map_err(|_| bad("bad probability"))?;
        let Some(ds) = corpus.datasets.iter_mut().find(|d| d.id == parts[0]) else {
            unknown.insert(parts[0].to_string());
            continue;
        };
        let slot = ds
            .generated_labels
            .get_mut(col)
            .ok_or_else(|| bad("column index out of range"))?;
        slot.push(GeneratedLabel {
            tokens: parts[2].split(' ').map(str::to_string).collect(),
            probability,
        });
    }
    if !unknown.is_empty() {
        let mut ids: Vec<String> = unknown.into_iter().collect();
        ids.sort();
        return Err(Error::Dataset {
            dataset: ids.join(","),
            msg: "generated labels reference unknown datasets".into(),
        });
    }
    Ok(())
}

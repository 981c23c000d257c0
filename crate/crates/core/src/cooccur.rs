//! Dataset-label preference matrix and SPPMI label co-occurrence matrix.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Dense index over the distinct normalized labels of a corpus.
///
/// Labels are kept in lexicographic order, so index order doubles as a
/// deterministic tie-break order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVocab {
    labels: Vec<String>,
    freq: Vec<usize>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn from_counts(counts: BTreeMap<String, usize>) -> Self {
        let (labels, freq): (Vec<_>, Vec<_>) = counts.into_iter().unzip();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        LabelVocab {
            labels,
            freq,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of datasets containing the label.
    pub fn frequency(&self, idx: usize) -> usize {
        self.freq[idx]
    }

    /// `label<TAB>frequency` per line, in index order.
    pub fn to_tsv(&self) -> String {
        self.labels
            .iter()
            .zip(&self.freq)
            .map(|(l, f)| format!("{l}\t{f}\n"))
            .collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let (label, freq) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse("vocab", n + 1, "expected label<TAB>frequency"))?;
            let freq = freq
                .parse()
                .map_err(|_| Error::parse("vocab", n + 1, "bad frequency"))?;
            counts.insert(label.to_string(), freq);
        }
        Ok(LabelVocab::from_counts(counts))
    }
}

/// Binary m x n matrix: `M[u][p] = 1` iff dataset `u` carries label `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    n_cols: usize,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl PreferenceMatrix {
    /// Build from per-row sorted, deduplicated column indices.
    pub fn from_rows(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut cols = vec![Vec::new(); n_cols];
        for (u, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            for &p in row.iter() {
                cols[p].push(u);
            }
        }
        PreferenceMatrix { n_cols, rows, cols }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Labels present in dataset `u`.
    pub fn row(&self, u: usize) -> &[usize] {
        &self.rows[u]
    }

    /// Datasets containing label `p`.
    pub fn col(&self, p: usize) -> &[usize] {
        &self.cols[p]
    }

    pub fn get(&self, u: usize, p: usize) -> f64 {
        if self.rows[u].binary_search(&p).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows())
            .map(|u| (0..self.n_cols).map(|p| self.get(u, p)).collect())
            .collect()
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().map(|&p| (p, 1.0)).collect())
            .collect();
        SparseMatrix::from_rows(self.n_cols, rows)
    }

    pub fn from_sparse(m: &SparseMatrix) -> Result<Self> {
        let mut rows = Vec::with_capacity(m.n_rows());
        for u in 0..m.n_rows() {
            let mut row = Vec::new();
            for &(p, v) in m.row(u) {
                if v != 1.0 {
                    return Err(Error::param("preference", format!("non-binary entry {v}")));
                }
                row.push(p);
            }
            rows.push(row);
        }
        Ok(PreferenceMatrix::from_rows(m.n_cols(), rows))
    }
}

/// Row-major sparse matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_cols,
            rows: vec![Vec::new(); n_rows],
        }
    }

    pub fn from_rows(n_cols: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        for r in &mut rows {
            r.sort_by_key(|&(c, _)| c);
        }
        SparseMatrix { n_cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.rows.iter().flatten().map(|&(_, v)| v).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v)))
    }

    /// Sparse triplet text: `rows cols nnz` header, then `row col value` lines.
    pub fn to_triplets(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n_rows(), self.n_cols, self.nnz());
        for (i, j, v) in self.iter() {
            writeln!(out, "{i} {j} {v:?}").unwrap();
        }
        out
    }

    pub fn from_triplets(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("triplets", 1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse("triplets", 1, "bad header"))?;
        let [n_rows, n_cols, nnz] = dims[..] else {
            return Err(Error::parse("triplets", 1, "expected `rows cols nnz`"));
        };
        let mut rows = vec![Vec::new(); n_rows];
        let mut seen = 0;
        for (n, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::parse("triplets", n + 1, "expected `row col value`");
            if parts.len() != 3 {
                return Err(bad());
            }
            let i: usize = parts[0].parse().map_err(|_| bad())?;
            let j: usize = parts[1].parse().map_err(|_| bad())?;
            let v: f64 = parts[2].parse().map_err(|_| bad())?;
            if i >= n_rows || j >= n_cols {
                return Err(Error::parse("triplets", n + 1, "index out of range"));
            }
            rows[i].push((j, v));
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::parse(
                "triplets",
                1,
                format!("header says {nnz} entries, found {seen}"),
            ));
        }
        Ok(SparseMatrix::from_rows(n_cols, rows))
    }
}

/// Shifted positive PMI matrix over labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SppmiMatrix {
    pub matrix: SparseMatrix,
    pub k_neg: u32,
}

impl SppmiMatrix {
    pub fn empty(n: usize) -> Self {
        SppmiMatrix {
            matrix: SparseMatrix::zeros(n, n),
            k_neg: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        self.matrix.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }
}

/// Label vocabulary and preference matrix with the default frequency floor of 1.
pub fn build_vocab_and_preference(corpus: &Corpus) -> Result<(LabelVocab, PreferenceMatrix)> {
    build_vocab_and_preference_with(corpus, 1)
}

pub fn build_vocab_and_preference_with(
    corpus: &Corpus,
    min_freq: usize,
) -> Result<(LabelVocab, PreferenceMatrix)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for ds in &corpus.datasets {
        for key in ds.label_keys() {
            *counts.entry(key).or_default() += 1;
        }
    }
    counts.retain(|_, f| *f >= min_freq);
    if counts.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let vocab = LabelVocab::from_counts(counts);
    let rows = corpus
        .datasets
        .iter()
        .map(|ds| {
            ds.label_keys()
                .iter()
                .filter_map(|k| vocab.get(k))
                .collect()
        })
        .collect();
    let pref = PreferenceMatrix::from_rows(vocab.len(), rows);
    Ok((vocab, pref))
}

/// Ordered in-table pair counts `#(i,j)`, one per table for each pair of
/// distinct labels in both directions.
pub fn cooccurrence_counts(corpus: &Corpus, vocab: &LabelVocab) -> SparseMatrix {
    let n = vocab.len();
    let partials: Vec<BTreeMap<(usize, usize), f64>> = corpus
        .datasets
        .par_iter()
        .map(|ds| {
            let mut labels: Vec<usize> =
                ds.label_keys().iter().filter_map(|k| vocab.get(k)).collect();
            labels.sort_unstable();
            labels.dedup();
            let mut local = BTreeMap::new();
            for &i in &labels {
                for &j in &labels {
                    if i != j {
                        *local.entry((i, j)).or_insert(0.0) += 1.0;
                    }
                }
            }
            local
        })
        .collect();
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for part in partials {
        for (k, v) in part {
            *merged.entry(k).or_insert(0.0) += v;
        }
    }
    let mut rows = vec![Vec::new(); n];
    for ((i, j), v) in merged {
        rows[i].push((j, v));
    }
    SparseMatrix::from_rows(n, rows)
}

/// `max(PMI(i,j) - ln k_neg, 0)` over the nonzero count cells.
pub fn build_sppmi(counts: &SparseMatrix, k_neg: u32) -> Result<SppmiMatrix> {
    if k_neg < 1 {
        return Err(Error::param("k_neg", "must be at least 1"));
    }
    let total = counts.sum();
    if total <= 0.0 {
        // nothing co-occurs; the embedding term is simply absent
        return Ok(SppmiMatrix {
            matrix: SparseMatrix::zeros(counts.n_rows(), counts.n_cols()),
            k_neg,
        });
    }
    let row_sums: Vec<f64> = (0..counts.n_rows())
        .map(|i| counts.row(i).iter().map(|&(_, v)| v).sum())
        .collect();
    let mut col_sums = vec![0.0; counts.n_cols()];
    for (_, j, v) in counts.iter() {
        col_sums[j] += v;
    }
    let shift = f64::from(k_neg).ln();
    let rows = (0..counts.n_rows())
        .map(|i| {
            counts
                .row(i)
                .iter()
                .filter_map(|&(j, c)| {
                    let pmi = (c * total / (row_sums[i] * col_sums[j])).ln();
                    let v = pmi - shift;
                    (v > 0.0).then_some((j, v))
                })
                .collect()
        })
        .collect();
    Ok(SppmiMatrix {
        matrix: SparseMatrix::from_rows(counts.n_cols(), rows),
        k_neg,
    })
}

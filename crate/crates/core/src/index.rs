//! Per-field inverted index and the classic lexical scorers.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_text, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Field {
    /// Title and description.
    Text,
    /// Data cells, row-major, header excluded.
    Data,
    /// Text, original labels and data concatenated.
    All,
    /// Original schema labels.
    LabelsOrig,
    /// Generated schema labels.
    LabelsGen,
}

impl Field {
    pub const ALL: [Field; 5] = [
        Field::Text,
        Field::Data,
        Field::All,
        Field::LabelsOrig,
        Field::LabelsGen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Text => "text",
            Field::Data => "data",
            Field::All => "all",
            Field::LabelsOrig => "labels_orig",
            Field::LabelsGen => "labels_gen",
        }
    }

    /// Tokens of this field for one dataset.
    pub fn tokens(self, ds: &Dataset) -> Vec<String> {
        match self {
            Field::Text => tokenize_text(&format!("{} {}", ds.title, ds.description)),
            Field::Data => data_tokens(ds),
            Field::All => {
                let mut t = Field::Text.tokens(ds);
                t.extend(Field::LabelsOrig.tokens(ds));
                t.extend(data_tokens(ds));
                t
            }
            Field::LabelsOrig => ds
                .columns
                .iter()
                .flat_map(|c| c.label_tokens.iter().cloned())
                .collect(),
            Field::LabelsGen => ds
                .generated_labels
                .iter()
                .flatten()
                .flat_map(|l| l.tokens.iter().cloned())
                .collect(),
        }
    }
}

fn data_tokens(ds: &Dataset) -> Vec<String> {
    let mut out = Vec::new();
    for r in 0..ds.row_count() {
        for col in &ds.columns {
            if let Some(cell) = col.values.get(r) {
                out.extend(tokenize_text(cell));
            }
        }
    }
    out
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown field {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldIndex {
    field: Field,
    ids: Vec<String>,
    lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    total_len: u64,
}

pub fn build_index(datasets: &[Dataset], field: Field) -> FieldIndex {
    let docs: Vec<(String, Vec<String>)> = datasets
        .iter()
        .map(|ds| (ds.id.clone(), field.tokens(ds)))
        .collect();
    FieldIndex::from_documents(field, docs)
}

impl FieldIndex {
    pub fn from_documents(field: Field, docs: Vec<(String, Vec<String>)>) -> Self {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut ids = Vec::with_capacity(docs.len());
        let mut lengths = Vec::with_capacity(docs.len());
        for (d, (id, tokens)) in docs.into_iter().enumerate() {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((d as u32, c));
            }
            ids.push(id);
            lengths.push(tokens.len() as u32);
        }
        let total_len = lengths.iter().map(|&l| u64::from(l)).sum();
        FieldIndex {
            field,
            ids,
            lengths,
            postings,
            total_len,
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn num_docs(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.lengths[doc]
    }

    pub fn avg_len(&self) -> f64 {
        if self.ids.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.ids.len() as f64
        }
    }

    pub fn postings(&self, token: &str) -> &[(u32, u32)] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn df(&self, token: &str) -> usize {
        self.postings(token).len()
    }

    pub fn tf(&self, token: &str, doc: usize) -> u32 {
        let p = self.postings(token);
        p.binary_search_by_key(&(doc as u32), |&(d, _)| d)
            .map(|i| p[i].1)
            .unwrap_or(0)
    }

    /// Total occurrences of a token across the collection.
    pub fn collection_tf(&self, token: &str) -> u64 {
        self.postings(token).iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn collection_len(&self) -> u64 {
        self.total_len
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Versioned text format:
    ///
    /// ```text
    /// fieldindex 1 <field>
    /// docs <N>
    /// <dataset_id> <length>          (N lines)
    /// terms <T>
    /// <token> <df> <doc>:<tf> ...    (T lines)
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = format!("fieldindex 1 {}\ndocs {}\n", self.field, self.ids.len());
        for (id, len) in self.ids.iter().zip(&self.lengths) {
            writeln!(out, "{id} {len}").unwrap();
        }
        writeln!(out, "terms {}", self.postings.len()).unwrap();
        for (tok, list) in &self.postings {
            write!(out, "{tok} {}", list.len()).unwrap();
            for (d, tf) in list {
                write!(out, " {d}:{tf}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
        let mut next = || lines.next().ok_or_else(|| Error::parse("index", 0, "truncated"));
        let bad = |n: usize, msg: &str| Error::parse("index", n, msg);

        let (n, header) = next()?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 || h[0] != "fieldindex" || h[1] != "1" {
            return Err(bad(n, "expected `fieldindex 1 <field>`"));
        }
        let field: Field = h[2].parse()?;
        let count = |n: usize, line: &str, key: &str| -> Result<usize> {
            line.strip_prefix(key)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| bad(n, "bad count line"))
        };
        let (n, line) = next()?;
        let n_docs = count(n, line, "docs")?;
        let mut ids = Vec::with_capacity(n_docs);
        let mut lengths = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let (n, line) = next()?;
            let (id, len) = line.rsplit_once(' ').ok_or_else(|| bad(n, "expected `id length`"))?;
            ids.push(id.to_string());
            lengths.push(len.parse().map_err(|_| bad(n, "bad length"))?);
        }
        let (n, line) = next()?;
        let n_terms = count(n, line, "terms")?;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let (n, line) = next()?;
            let mut parts = line.split(' ');
            let tok = parts.next().ok_or_else(|| bad(n, "missing token"))?;
            let df: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(n, "bad df"))?;
            let list: Vec<(u32, u32)> = parts
                .map(|p| {
                    let (d, tf) = p.split_once(':')?;
                    Some((d.parse().ok()?, tf.parse().ok()?))
                })
                .collect::<Option<_>>()
                .ok_or_else(|| bad(n, "bad posting"))?;
            if list.len() != df {
                return Err(bad(n, "df does not match postings"));
            }
            postings.insert(tok.to_string(), list);
        }
        let total_len = lengths.iter().map(|&l| u64::from(l)).sum();
        Ok(FieldIndex {
            field,
            ids,
            lengths,
            postings,
            total_len,
        })
    }
}

/// Lexical scoring functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scorer {
    Bm25 { k1: f64, b: f64 },
    TfIdf,
    /// Jelinek-Mercer smoothed query likelihood.
    LmJm { lambda: f64 },
    /// Dirichlet smoothed query likelihood.
    LmDirichlet { mu: f64 },
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::Bm25 { k1: 1.2, b: 0.75 }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scorer::Bm25 { k1, b } => write!(f, "bm25(k1={k1},b={b})"),
            Scorer::TfIdf => write!(f, "tfidf"),
            Scorer::LmJm { lambda } => write!(f, "lm-jm(lambda={lambda})"),
            Scorer::LmDirichlet { mu } => write!(f, "lm-dirichlet(mu={mu})"),
        }
    }
}

/// Single BM25 summand with the +1-smoothed Robertson IDF.
pub fn bm25_term(tf: f64, df: f64, n_docs: f64, len: f64, avg_len: f64, k1: f64, b: f64) -> f64 {
    if tf <= 0.0 {
        return 0.0;
    }
    let idf = (1.0 + (n_docs - df + 0.5) / (df + 0.5)).ln();
    let norm = if avg_len > 0.0 { len / avg_len } else { 1.0 };
    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
}

impl Scorer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Scorer::Bm25 { k1, b } => {
                if !(k1 >= 0.0 && k1.is_finite()) {
                    return Err(Error::param("k1", "must be finite and >= 0"));
                }
                if !(0.0..=1.0).contains(&b) {
                    return Err(Error::param("b", "must lie in [0, 1]"));
                }
            }
            Scorer::TfIdf => {}
            Scorer::LmJm { lambda } => {
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(Error::param("lambda_jm", "must lie in (0, 1)"));
                }
            }
            Scorer::LmDirichlet { mu } => {
                if mu.is_nan() || mu <= 0.0 {
                    return Err(Error::param("mu", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Score of one document. Additive over query tokens.
    pub fn score<S: AsRef<str>>(&self, index: &FieldIndex, query: &[S], doc: usize) -> Result<f64> {
        self.validate()?;
        Ok(query
            .iter()
            .map(|t| self.term_score(index, t.as_ref(), doc))
            .sum())
    }

    /// Scores of every document of the index, in index order.
    pub fn score_all<S: AsRef<str>>(&self, index: &FieldIndex, query: &[S]) -> Result<Vec<f64>> {
        self.validate()?;
        let n = index.num_docs();
        let mut scores = vec![0.0; n];
        for t in query {
            let t = t.as_ref();
            let mut tf = vec![0u32; n];
            for &(d, c) in index.postings(t) {
                tf[d as usize] = c;
            }
            for (d, s) in scores.iter_mut().enumerate() {
                *s += self.term_with_tf(index, t, d, f64::from(tf[d]));
            }
        }
        Ok(scores)
    }

    fn term_score(&self, index: &FieldIndex, token: &str, doc: usize) -> f64 {
        self.term_with_tf(index, token, doc, f64::from(index.tf(token, doc)))
    }

    fn term_with_tf(&self, index: &FieldIndex, token: &str, doc: usize, tf: f64) -> f64 {
        let n = index.num_docs() as f64;
        let len = f64::from(index.doc_len(doc));
        match *self {
            Scorer::Bm25 { k1, b } => {
                bm25_term(tf, index.df(token) as f64, n, len, index.avg_len(), k1, b)
            }
            Scorer::TfIdf => {
                if tf == 0.0 {
                    0.0
                } else {
                    tf * (n / index.df(token) as f64).ln()
                }
            }
            Scorer::LmJm { lambda } => {
                let cf = index.collection_tf(token);
                if cf == 0 {
                    return 0.0;
                }
                let p_coll = cf as f64 / index.collection_len() as f64;
                let p_doc = if len > 0.0 { tf / len } else { 0.0 };
                (lambda * p_doc + (1.0 - lambda) * p_coll).ln()
            }
            Scorer::LmDirichlet { mu } => {
                let cf = index.collection_tf(token);
                if cf == 0 {
                    return 0.0;
                }
                let p_coll = cf as f64 / index.collection_len() as f64;
                ((tf + mu * p_coll) / (len + mu)).ln()
            }
        }
    }
}

/// Grid of BM25 parameters searched by the baselines.
pub fn bm25_grid() -> Vec<Scorer> {
    let mut grid = Vec::new();
    for i in 0..8 {
        for j in 1..10 {
            grid.push(Scorer::Bm25 {
                k1: 0.6 + 0.2 * i as f64,
                b: 0.1 * j as f64,
            });
        }
    }
    grid
}

pub fn lm_jm_grid() -> Vec<Scorer> {
    (1..10).map(|i| Scorer::LmJm { lambda: 0.1 * i as f64 }).collect()
}

pub fn lm_dirichlet_grid() -> Vec<Scorer> {
    [250.0, 500.0, 1000.0, 2000.0, 5000.0]
        .into_iter()
        .map(|mu| Scorer::LmDirichlet { mu })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Column;

    fn doc(id: &str, text: &str) -> Dataset {
        Dataset::new(id, text, "", vec![Column::new(None, vec![])])
    }

    fn wind_school() -> FieldIndex {
        build_index(&[doc("d1", "wind speed kansas"), doc("d2", "school lunch")], Field::Text)
    }

    #[test]
    fn statistics_match_hand_counts() {
        let idx = build_index(
            &[doc("d1", "wind wind speed"), doc("d2", "wind school")],
            Field::Text,
        );
        assert_eq!(idx.num_docs(), 2);
        assert_eq!(idx.df("wind"), 2);
        assert_eq!(idx.tf("wind", 0), 2);
        assert_eq!(idx.tf("speed", 1), 0);
        assert_eq!(idx.doc_len(0), 3);
        assert_eq!(idx.avg_len(), 2.5);
        assert_eq!(idx.collection_tf("wind"), 3);
        for d in 0..2 {
            let sum: u32 = idx.vocabulary().map(|t| idx.tf(t, d)).sum();
            assert_eq!(sum, idx.doc_len(d));
        }
    }

    #[test]
    fn empty_field_everywhere() {
        let idx = build_index(&[doc("a", ""), doc("b", "")], Field::Text);
        assert_eq!(idx.num_docs(), 2);
        assert_eq!(idx.doc_len(0) + idx.doc_len(1), 0);
        assert_eq!(Scorer::default().score(&idx, &["x"], 0).unwrap(), 0.0);
    }

    #[test]
    fn bm25_hand_value() {
        let idx = wind_school();
        let s = Scorer::Bm25 { k1: 1.2, b: 0.75 };
        let v = s.score(&idx, &["wind"], 0).unwrap();
        assert!((v - 0.6407).abs() < 1e-3, "{v}");
        assert_eq!(s.score(&idx, &["wind"], 1).unwrap(), 0.0);
        let twice = s.score(&idx, &["wind", "wind"], 0).unwrap();
        assert!((twice - 2.0 * v).abs() < 1e-12);
    }

    #[test]
    fn tfidf_hand_value() {
        let idx = wind_school();
        let v = Scorer::TfIdf.score(&idx, &["wind"], 0).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn jm_single_doc_reduces_to_doc_likelihood() {
        let idx = build_index(&[doc("d", "wind speed wind")], Field::Text);
        let q = ["wind", "speed", "wind"];
        let v = Scorer::LmJm { lambda: 0.3 }.score(&idx, &q, 0).unwrap();
        let expect = (2.0f64 / 3.0).ln() * 2.0 + (1.0f64 / 3.0).ln();
        assert!((v - expect).abs() < 1e-12);
        assert_eq!(Scorer::LmJm { lambda: 0.3 }.score(&idx, &["absent"], 0).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_large_mu_flattens_documents() {
        let idx = build_index(
            &[doc("a", "wind speed wind kansas"), doc("b", "school lunch wind")],
            Field::Text,
        );
        let s = Scorer::LmDirichlet { mu: 1e9 };
        let a = s.score(&idx, &["wind", "kansas"], 0).unwrap();
        let b = s.score(&idx, &["wind", "kansas"], 1).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn parameter_ranges() {
        let idx = wind_school();
        assert!(Scorer::LmJm { lambda: 1.0 }.score(&idx, &["wind"], 0).is_err());
        assert!(Scorer::LmDirichlet { mu: 0.0 }.score(&idx, &["wind"], 0).is_err());
        assert!(Scorer::Bm25 { k1: 1.0, b: 1.5 }.score(&idx, &["wind"], 0).is_err());
    }

    #[test]
    fn score_all_matches_pointwise() {
        let idx = build_index(
            &[doc("a", "wind speed wind"), doc("b", "school wind"), doc("c", "")],
            Field::Text,
        );
        let q = ["wind", "school", "zzz"];
        for s in [
            Scorer::default(),
            Scorer::TfIdf,
            Scorer::LmJm { lambda: 0.4 },
            Scorer::LmDirichlet { mu: 500.0 },
        ] {
            let all = s.score_all(&idx, &q).unwrap();
            for (d, v) in all.iter().enumerate() {
                assert!((v - s.score(&idx, &q, d).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn text_round_trip_preserves_scores() {
        let idx = build_index(
            &[doc("a", "wind speed wind"), doc("b", "school wind")],
            Field::Text,
        );
        let back = FieldIndex::from_text(&idx.to_text()).unwrap();
        assert_eq!(back, idx);
        assert_eq!(
            Scorer::default().score_all(&back, &["wind"]).unwrap(),
            Scorer::default().score_all(&idx, &["wind"]).unwrap()
        );
        assert!(FieldIndex::from_text("fieldindex 2 text\n").is_err());
    }

    #[test]
    fn data_field_is_row_major_without_header() {
        let ds = Dataset::new(
            "d",
            "",
            "",
            vec![
                Column::new(Some("City".into()), vec!["Paris".into(), "Lyon".into()]),
                Column::new(Some("Year".into()), vec!["2001".into(), "2002".into()]),
            ],
        );
        assert_eq!(Field::Data.tokens(&ds), ["paris", "2001", "lyon", "2002"]);
        assert_eq!(Field::LabelsOrig.tokens(&ds), ["city", "year"]);
    }

    #[test]
    fn grids() {
        assert_eq!(bm25_grid().len(), 72);
        assert_eq!(lm_jm_grid().len(), 9);
        assert_eq!(lm_dirichlet_grid().len(), 5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bm25_monotone_in_tf(
                tf in 0u32..20, extra in 1u32..5, df in 1u32..50, n_extra in 0u32..50,
                len in 20u32..60, avg in 1.0f64..50.0, k1 in 0.0f64..3.0, b in 0.0f64..1.0,
            ) {
                let n = f64::from(df + n_extra);
                let lo = bm25_term(f64::from(tf), f64::from(df), n, f64::from(len), avg, k1, b);
                let hi = bm25_term(f64::from(tf + extra), f64::from(df), n, f64::from(len), avg, k1, b);
                prop_assert!(hi >= lo);
            }

            #[test]
            fn bm25_monotone_on_random_postings(
                docs in proptest::collection::vec(proptest::collection::vec(0usize..4, 3..8), 2..6),
            ) {
                // swap one non-"t0" token of doc 0 for "t0": length fixed, tf grows
                let words = |d: &Vec<usize>| d.iter().map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
                let base: Vec<Dataset> = docs.iter().enumerate().map(|(i, d)| doc(&i.to_string(), &words(d))).collect();
                let mut bumped_tokens = docs.clone();
                if let Some(pos) = bumped_tokens[0].iter().position(|&t| t != 0) {
                    bumped_tokens[0][pos] = 0;
                    // keep df of t0 unchanged so only tf moves
                    prop_assume!(docs[0].contains(&0));
                    let bumped: Vec<Dataset> = bumped_tokens.iter().enumerate().map(|(i, d)| doc(&i.to_string(), &words(d))).collect();
                    let s = Scorer::default();
                    let lo = s.score(&build_index(&base, Field::Text), &["t0"], 0).unwrap();
                    let hi = s.score(&build_index(&bumped, Field::Text), &["t0"], 0).unwrap();
                    prop_assert!(hi >= lo - 1e-12);
                }
            }
        }
    }
}

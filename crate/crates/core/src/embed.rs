//! Pretrained word vectors and normalized bag-of-words point clouds.
//!
//! Vector files are plain text (optionally gzip-compressed): a `count dim`
//! header followed by `token v1 .. v_dim` rows. Rows whose token starts with
//! `#ng:` are character n-gram vectors used to compose vectors for
//! out-of-vocabulary tokens.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use log::warn;

use crate::error::{Error, Result};

pub const NGRAM_MARKER: &str = "#ng:";
pub const MIN_NGRAM: usize = 3;
pub const MAX_NGRAM: usize = 6;

#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    words: HashMap<String, Vec<f64>>,
    ngrams: HashMap<String, Vec<f64>>,
    pub warnings: Vec<String>,
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn ngram_count(&self) -> usize {
        self.ngrams.len()
    }

    /// Insert a word (or `#ng:`-prefixed n-gram) vector, normalizing it.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::param(
                "vector",
                format!("{token}: dimension {} != {}", vector.len(), self.dim),
            ));
        }
        let Some(v) = normalized(vector) else {
            self.warnings.push(format!("{token}: zero vector skipped"));
            return Ok(());
        };
        let (table, key) = match token.strip_prefix(NGRAM_MARKER) {
            Some(ng) => (&mut self.ngrams, ng),
            None => (&mut self.words, token),
        };
        if table.insert(key.to_string(), v).is_some() {
            let msg = format!("duplicate token {token}, last row wins");
            warn!("{msg}");
            self.warnings.push(msg);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 2];
        let gz = file.read(&mut magic).map_err(|e| Error::io(path, e))? == 2 && magic == [0x1f, 0x8b];
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        if gz {
            Self::from_reader(BufReader::new(GzDecoder::new(file)))
        } else {
            Self::from_reader(BufReader::new(file))
        }
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| Error::parse("vectors", 1, e.to_string()))?,
            None => return Err(Error::parse("vectors", 1, "empty file")),
        };
        let parts: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse("vectors", 1, "header must be `count dim`"))?;
        let [count, dim] = parts[..] else {
            return Err(Error::parse("vectors", 1, "header must be `count dim`"));
        };
        let mut store = EmbeddingStore::new(dim);
        let mut rows = 0;
        for (n, line) in lines {
            let line = line.map_err(|e| Error::parse("vectors", n + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().unwrap();
            let values: Vec<f64> = fields
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse("vectors", n + 1, "bad number"))?;
            if values.len() != dim {
                return Err(Error::parse(
                    "vectors",
                    n + 1,
                    format!("expected {dim} values, found {}", values.len()),
                ));
            }
            store.insert(token, values)?;
            rows += 1;
        }
        if rows != count {
            return Err(Error::parse(
                "vectors",
                1,
                format!("header declares {count} rows, found {rows}"),
            ));
        }
        Ok(store)
    }

    /// Vector for a token: stored vector, else the renormalized mean of its
    /// known character n-grams, else `None`.
    pub fn embed_token(&self, token: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.words.get(token) {
            return Some(v.clone());
        }
        if self.ngrams.is_empty() {
            return None;
        }
        let mut sum = vec![0.0; self.dim];
        let mut found = 0;
        for g in char_ngrams(token) {
            if let Some(v) = self.ngrams.get(&g) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                found += 1;
            }
        }
        if found == 0 {
            return None;
        }
        normalized(sum)
    }

    /// Normalized bag-of-words cloud. Tokens without a vector are dropped.
    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<WeightedPointCloud> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
        let mut points = Vec::new();
        for (tok, c) in counts {
            if let Some(v) = self.embed_token(tok) {
                points.push(Point {
                    token: tok.to_string(),
                    vector: v,
                    weight: c as f64,
                });
            }
        }
        WeightedPointCloud::from_counts(points)
    }
}

/// Character n-grams of `<token>` for n in 3..=6, in order of appearance.
pub fn char_ngrams(token: &str) -> Vec<String> {
    let chars: Vec<char> = format!("<{token}>").chars().collect();
    let mut out = Vec::new();
    for n in MIN_NGRAM..=MAX_NGRAM {
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub token: String,
    pub vector: Vec<f64>,
    pub weight: f64,
}

/// Points with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointCloud {
    points: Vec<Point>,
}

impl WeightedPointCloud {
    /// Normalize raw positive weights. Errors on an empty input.
    pub fn from_counts(mut points: Vec<Point>) -> Result<Self> {
        points.retain(|p| p.weight > 0.0);
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let total: f64 = points.iter().map(|p| p.weight).sum();
        points.iter_mut().for_each(|p| p.weight /= total);
        Ok(WeightedPointCloud { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.weight).collect()
    }

    /// Keep the `cap` heaviest points (ties by token) and renormalize.
    pub fn truncated(&self, cap: usize) -> WeightedPointCloud {
        if self.points.len() <= cap {
            return self.clone();
        }
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.token.cmp(&b.token)));
        pts.truncate(cap.max(1));
        pts.sort_by(|a, b| a.token.cmp(&b.token));
        WeightedPointCloud::from_counts(pts).expect("non-empty after truncation")
    }

    /// Weighted mean of the point vectors.
    pub fn centroid(&self) -> Vec<f64> {
        let dim = self.points[0].vector.len();
        let mut c = vec![0.0; dim];
        for p in &self.points {
            c.iter_mut().zip(&p.vector).for_each(|(s, x)| *s += p.weight * x);
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(text: &str) -> EmbeddingStore {
        EmbeddingStore::from_reader(text.as_bytes()).unwrap()
    }

    #[test]
    fn loads_text_format() {
        let s = store("2 3\na 1 0 0\nb 0 1 0\n");
        assert_eq!((s.len(), s.dim()), (2, 3));
        assert_eq!(s.embed_token("a").unwrap(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn arity_mismatch_names_line() {
        let err = EmbeddingStore::from_reader("2 3\na 1 0 0\nb 0 1\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        assert!(EmbeddingStore::from_reader("x 3\n".as_bytes()).is_err());
    }

    #[test]
    fn vectors_normalized_on_load() {
        let s = store("1 3\nw 3 4 0\n");
        let v = s.embed_token("w").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn duplicates_last_wins() {
        let s = store("2 2\nw 1 0\nw 0 1\n");
        assert_eq!(s.embed_token("w").unwrap(), [0.0, 1.0]);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn oov_without_ngrams_is_absent() {
        let s = store("1 2\nw 1 0\n");
        assert!(s.embed_token("zzz").is_none());
    }

    #[test]
    fn ngram_composition() {
        // n-grams of "<abbr>": <ab abb bbr br> <abb abbr bbr> <abbr abbr> <abbr>
        let grams = char_ngrams("abbr");
        assert_eq!(grams.len(), 4 + 3 + 2 + 1);
        assert!(grams.contains(&"<ab".to_string()) && grams.contains(&"bbr".to_string()));
        let s = store("2 2\n#ng:<ab 1 0\n#ng:bbr 0 1\n");
        let v = s.embed_token("abbr").unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-12 && (v[1] - h).abs() < 1e-12);
    }

    #[test]
    fn bag_of_words_weights() {
        let s = store("2 2\ncity 1 0\nyear 0 1\n");
        let cloud = s.embed_tokens(&["city", "city", "year"]).unwrap();
        assert_eq!(cloud.len(), 2);
        assert!((cloud.points()[0].weight - 2.0 / 3.0).abs() < 1e-15);
        assert!((cloud.points()[1].weight - 1.0 / 3.0).abs() < 1e-15);
        let one = s.embed_tokens(&["year", "nope"]).unwrap();
        assert_eq!(one.weights(), [1.0]);
        assert!(matches!(s.embed_tokens(&["nope"]), Err(Error::EmptyCloud)));
    }

    #[test]
    fn gzip_files_accepted() {
        use std::io::Write;
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("v.txt.gz");
        let mut enc = flate2::write::GzEncoder::new(
            File::create(&path).unwrap(),
            flate2::Compression::default(),
        );
        enc.write_all(b"1 2\nw 0 2\n").unwrap();
        enc.finish().unwrap();
        let s = EmbeddingStore::load(&path).unwrap();
        assert_eq!(s.embed_token("w").unwrap(), [0.0, 1.0]);
    }

    #[test]
    fn truncation_keeps_heaviest() {
        let s = store("3 2\na 1 0\nb 0 1\nc 1 1\n");
        let cloud = s.embed_tokens(&["a", "a", "a", "b", "b", "c"]).unwrap();
        let t = cloud.truncated(2);
        let toks: Vec<&str> = t.points().iter().map(|p| p.token.as_str()).collect();
        assert_eq!(toks, ["a", "b"]);
        assert!((t.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clouds_normalized_and_order_free(mut toks in proptest::collection::vec(0usize..4, 1..12)) {
                let s = store("4 3\nw0 1 2 3\nw1 -1 0 2\nw2 0 0 5\nw3 3 -1 1\n");
                let words: Vec<String> = toks.iter().map(|i| format!("w{i}")).collect();
                let cloud = s.embed_tokens(&words).unwrap();
                prop_assert!((cloud.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for p in cloud.points() {
                    let n = p.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
                    prop_assert!((n - 1.0).abs() < 1e-9);
                }
                toks.reverse();
                let rev: Vec<String> = toks.iter().map(|i| format!("w{i}")).collect();
                prop_assert_eq!(s.embed_tokens(&rev).unwrap(), cloud);
            }
        }
    }
}

//! Dataset corpus loading and text normalization.
//!
//! A corpus lives on disk as one directory per dataset:
//!
//! ```text
//! <root>/<dataset_dir>/data.csv    first row is the header of schema labels
//! <root>/<dataset_dir>/meta.json   {"id": .., "title": .., "description": ..}
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of data rows kept per dataset.
pub const DEFAULT_MAX_ROWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLabel {
    pub tokens: Vec<String>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub raw_label: Option<String>,
    pub label_tokens: Vec<String>,
    pub values: Vec<String>,
}

impl Column {
    pub fn new(raw_label: Option<String>, values: Vec<String>) -> Self {
        let label_tokens = raw_label.as_deref().map(normalize_label).unwrap_or_default();
        Column {
            raw_label,
            label_tokens,
            values,
        }
    }

    /// The whole normalized label as a single vocabulary unit, if any.
    pub fn label_key(&self) -> Option<String> {
        if self.label_tokens.is_empty() {
            None
        } else {
            Some(self.label_tokens.join(" "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    pub title: String,
    pub description: String,
    pub columns: Vec<Column>,
    /// One entry per column once labels have been generated.
    #[serde(default)]
    pub generated_labels: Vec<Vec<GeneratedLabel>>,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        description: impl Into<String>,
        columns: Vec<Column>,
    ) -> Self {
        Dataset {
            id: id.into(),
            title: title.into(),
            description: description.into(),
            columns,
            generated_labels: Vec::new(),
        }
    }

    /// Distinct label keys of this dataset in column order.
    pub fn label_keys(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.columns
            .iter()
            .filter_map(Column::label_key)
            .filter(|k| seen.insert(k.clone()))
            .collect()
    }

    /// Number of data rows (the longest column).
    pub fn row_count(&self) -> usize {
        self.columns.iter().map(|c| c.values.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub datasets: Vec<Dataset>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn new(datasets: Vec<Dataset>) -> Self {
        Corpus {
            datasets,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.datasets.iter().map(|d| d.id.as_str()).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.datasets.iter().position(|d| d.id == id)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub max_rows: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_rows: DEFAULT_MAX_ROWS,
        }
    }
}

#[derive(Deserialize)]
struct Meta {
    id: Option<String>,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    description: Option<String>,
}

pub fn load_corpus(root: &Path) -> Result<Corpus> {
    load_corpus_with(root, LoadOptions::default())
}

pub fn load_corpus_with(root: &Path, opts: LoadOptions) -> Result<Corpus> {
    if !root.is_dir() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let loaded: Vec<Result<Dataset>> = dirs
        .par_iter()
        .map(|dir| load_dataset(dir, opts))
        .collect();

    let mut corpus = Corpus::default();
    let mut ids = HashSet::new();
    for result in loaded {
        match result {
            Ok(ds) if !ids.contains(&ds.id) => {
                ids.insert(ds.id.clone());
                corpus.datasets.push(ds);
            }
            Ok(ds) => corpus.warn(format!("duplicate dataset id {}, skipped", ds.id)),
            Err(e) => corpus.warn(e.to_string()),
        }
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus)
}

impl Corpus {
    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }
}

fn load_dataset(dir: &Path, opts: LoadOptions) -> Result<Dataset> {
    let dir_name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bad = |msg: String| Error::Dataset {
        dataset: dir_name.clone(),
        msg,
    };

    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| bad(format!("meta.json: {e}")))?;
    let meta: Meta =
        serde_json::from_str(&meta_text).map_err(|e| bad(format!("meta.json: {e}")))?;

    let data_path = dir.join("data.csv");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(&data_path)
        .map_err(|e| bad(format!("data.csv: {e}")))?;

    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| bad(format!("data.csv: {e}")))?,
        None => return Err(bad("data.csv has no header row".into())),
    };
    let mut values: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for rec in records.take(opts.max_rows) {
        let rec = rec.map_err(|e| bad(format!("data.csv: {e}")))?;
        for (col, cell) in values.iter_mut().zip(rec.iter()) {
            col.push(cell.to_string());
        }
    }
    let columns: Vec<Column> = header
        .iter()
        .zip(values)
        .map(|(h, vals)| {
            let h = h.trim();
            Column::new((!h.is_empty()).then(|| h.to_string()), vals)
        })
        .collect();
    if columns.is_empty() {
        return Err(bad("data.csv has no columns".into()));
    }

    Ok(Dataset::new(
        meta.id.unwrap_or(dir_name.clone()),
        meta.title.unwrap_or_default(),
        meta.description.unwrap_or_default(),
        columns,
    ))
}

/// Split a raw schema label into lowercase tokens.
///
/// Breaks on any non-alphanumeric character, on camelCase boundaries
/// (`locationAbbr`, `XMLParser`) and between letters and digits.
pub fn normalize_label(raw: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for run in raw.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = run.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_alphabetic() && cur.is_numeric())
                || (prev.is_numeric() && cur.is_alphabetic())
                || (prev.is_uppercase()
                    && cur.is_uppercase()
                    && next.is_some_and(|n| n.is_lowercase()));
            if boundary {
                tokens.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        if start < chars.len() {
            tokens.push(chars[start..].iter().collect::<String>().to_lowercase());
        }
    }
    tokens.retain(|t| !t.is_empty());
    tokens
}

/// Lowercase, strip punctuation and split on whitespace.
pub fn tokenize_text(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub description: String,
    pub queries: Vec<String>,
}

impl Task {
    /// Query ids are `<task_id>/<n>` with `n` starting at 1.
    pub fn query_ids(&self) -> impl Iterator<Item = (String, &str)> {
        self.queries
            .iter()
            .enumerate()
            .map(move |(i, q)| (format!("{}/{}", self.id, i + 1), q.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
}

/// Task id a query id belongs to (`"3/2"` -> `"3"`, `"3"` -> `"3"`).
pub fn task_of_query(query_id: &str) -> &str {
    match query_id.rsplit_once('/') {
        Some((task, n)) if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => task,
        _ => query_id,
    }
}

impl TaskSet {
    pub fn from_strings(queries: &str, descriptions: Option<&str>) -> Result<Self> {
        let mut set = TaskSet::default();
        for (n, line) in queries.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (task, query) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("queries", n + 1, "expected task_id<TAB>query"))?;
            if tokenize_text(query).is_empty() {
                return Err(Error::parse("queries", n + 1, "query has no tokens"));
            }
            set.task_mut(task.trim()).queries.push(query.trim().to_string());
        }
        if let Some(desc) = descriptions {
            for (n, line) in desc.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let (task, text) = line.split_once('\t').ok_or_else(|| {
                    Error::parse("descriptions", n + 1, "expected task_id<TAB>description")
                })?;
                set.task_mut(task.trim()).description = text.trim().to_string();
            }
        }
        Ok(set)
    }

    pub fn load(queries: &Path, descriptions: Option<&Path>) -> Result<Self> {
        let q = fs::read_to_string(queries).map_err(|e| Error::io(queries, e))?;
        let d = descriptions
            .map(|p| fs::read_to_string(p).map_err(|e| Error::io(p, e)))
            .transpose()?;
        TaskSet::from_strings(&q, d.as_deref())
    }

    fn task_mut(&mut self, id: &str) -> &mut Task {
        if let Some(i) = self.tasks.iter().position(|t| t.id == id) {
            &mut self.tasks[i]
        } else {
            self.tasks.push(Task {
                id: id.to_string(),
                description: String::new(),
                queries: Vec::new(),
            });
            self.tasks.last_mut().unwrap()
        }
    }

    /// All `(query_id, query_text)` pairs in task order.
    pub fn queries(&self) -> Vec<(String, String)> {
        self.tasks
            .iter()
            .flat_map(|t| t.query_ids().map(|(id, q)| (id, q.to_string())))
            .collect()
    }

    pub fn to_queries_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            for q in &t.queries {
                out.push_str(&format!("{}\t{}\n", t.id, q));
            }
        }
        out
    }

    pub fn to_descriptions_tsv(&self) -> String {
        self.tasks
            .iter()
            .map(|t| format!("{}\t{}\n", t.id, t.description))
            .collect()
    }
}

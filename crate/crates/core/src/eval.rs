//! Graded-relevance evaluation: TREC run/qrels files, NDCG@k, P@k, pooling
//! and paired significance tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::task_of_query;
use crate::error::{Error, Result};

pub const DEFAULT_CUTOFFS: [usize; 4] = [5, 10, 20, 50];
pub const DEFAULT_REL_THRESHOLD: f64 = 2.0;

/// Graded judgments keyed by task then dataset. Grades lie in `[0, 3]` and
/// may be fractional.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Qrels {
    pub fn insert(&mut self, task: &str, dataset: &str, grade: f64) -> Result<()> {
        if !(0.0..=3.0).contains(&grade) {
            return Err(Error::param("grade", format!("{grade} outside [0, 3]")));
        }
        self.judgments
            .entry(task.to_string())
            .or_default()
            .insert(dataset.to_string(), grade);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn task(&self, task: &str) -> Option<&BTreeMap<String, f64>> {
        self.judgments.get(task)
    }

    pub fn grade(&self, task: &str, dataset: &str) -> f64 {
        self.judgments
            .get(task)
            .and_then(|m| m.get(dataset))
            .copied()
            .unwrap_or(0.0)
    }

    /// TREC format: `task_id 0 dataset_id grade`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut q = Qrels::default();
        for (n, line) in text.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.is_empty() {
                continue;
            }
            if parts.len() != 4 {
                return Err(Error::parse("qrels", n + 1, "expected `task 0 dataset grade`"));
            }
            let grade: f64 = parts[3]
                .parse()
                .map_err(|_| Error::parse("qrels", n + 1, "bad grade"))?;
            q.insert(parts[0], parts[2], grade)
                .map_err(|e| Error::parse("qrels", n + 1, e.to_string()))?;
        }
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Qrels::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (task, m) in &self.judgments {
            for (ds, g) in m {
                writeln!(out, "{task} 0 {ds} {g}").unwrap();
            }
        }
        out
    }
}

/// Ranked results per query, in rank order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub tag: String,
    lists: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunFile {
    pub fn new(tag: impl Into<String>) -> Self {
        RunFile {
            tag: tag.into(),
            lists: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, query_id: impl Into<String>, ranked: Vec<(String, f64)>) {
        self.lists.insert(query_id.into(), ranked);
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.lists.iter().map(|(q, l)| (q.as_str(), l.as_slice()))
    }

    pub fn get(&self, query_id: &str) -> Option<&[(String, f64)]> {
        self.lists.get(query_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// TREC run lines `query_id Q0 dataset_id rank score tag`, ranks from 1.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (q, list) in &self.lists {
            for (i, (ds, score)) in list.iter().enumerate() {
                writeln!(out, "{q} Q0 {ds} {} {score:.8} {}", i + 1, self.tag).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
        let mut tag = String::new();
        for (n, line) in text.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::parse("run", n + 1, msg);
            if parts.len() != 6 {
                return Err(bad("expected `query Q0 dataset rank score tag`"));
            }
            let rank: usize = parts[3].parse().map_err(|_| bad("bad rank"))?;
            let score: f64 = parts[4].parse().map_err(|_| bad("bad score"))?;
            tag = parts[5].to_string();
            rows.entry(parts[0].to_string())
                .or_default()
                .push((rank, parts[2].to_string(), score));
        }
        let mut run = RunFile::new(tag);
        for (q, mut list) in rows {
            list.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            for (i, (rank, _, _)) in list.iter().enumerate() {
                if *rank != i + 1 {
                    return Err(Error::parse("run", 0, format!("query {q}: ranks not contiguous from 1")));
                }
            }
            run.insert(q, list.into_iter().map(|(_, d, s)| (d, s)).collect());
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunFile::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn dcg(grades: &[f64], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| (2f64.powf(g) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with gain `2^g - 1` and `log2(i + 1)` discount. `judged` holds
/// every judged grade of the task; zero ideal gain gives 0.
pub fn ndcg_at_k(ranked: &[f64], judged: &[f64], k: usize) -> f64 {
    let mut ideal = judged.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg <= 0.0 {
        return 0.0;
    }
    dcg(ranked, k) / idcg
}

/// Fraction of the top `k` with grade at least `threshold`; short lists are
/// padded with non-relevant entries.
pub fn precision_at_k(ranked: &[f64], k: usize, threshold: f64) -> f64 {
    let hits = ranked.iter().take(k).filter(|&&g| g >= threshold).count();
    hits as f64 / k as f64
}

/// Two-sided paired t-test. Returns `(t, p)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::param("scores", "length mismatch"));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::param("scores", "need at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok((0.0, 1.0));
    }
    if var.sqrt() <= 1e-12 * mean.abs() {
        // constant nonzero difference, up to rounding
        return Ok((mean.signum() * f64::INFINITY, 0.0));
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::param("df", e.to_string()))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

/// Union of the top-`depth` datasets per task over all runs and queries.
pub fn pool_results(runs: &[RunFile], depth: usize) -> BTreeSet<(String, String)> {
    let mut pool = BTreeSet::new();
    for run in runs {
        for (q, list) in run.queries() {
            let task = task_of_query(q);
            for (ds, _) in list.iter().take(depth) {
                pool.insert((task.to_string(), ds.clone()));
            }
        }
    }
    pool
}

pub fn pool_to_tsv(pool: &BTreeSet<(String, String)>) -> String {
    pool.iter().map(|(t, d)| format!("{t}\t{d}\n")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    pub rel_threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            rel_threshold: DEFAULT_REL_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub ndcg: Vec<f64>,
    pub precision: Vec<f64>,
}

/// Per-query and mean metrics at each cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub cutoffs: Vec<usize>,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub ndcg: Vec<f64>,
    pub precision: Vec<f64>,
}

impl MetricTable {
    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == k).map(|i| self.ndcg[i])
    }

    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == k).map(|i| self.precision[i])
    }

    /// Per-query NDCG at cutoff `k`, in query-id order.
    pub fn ndcg_series(&self, k: usize) -> Vec<f64> {
        let i = self.cutoffs.iter().position(|&c| c == k).expect("cutoff evaluated");
        self.per_query.values().map(|m| m.ndcg[i]).collect()
    }

    pub fn precision_series(&self, k: usize) -> Vec<f64> {
        let i = self.cutoffs.iter().position(|&c| c == k).expect("cutoff evaluated");
        self.per_query.values().map(|m| m.precision[i]).collect()
    }
}

pub fn evaluate(run: &RunFile, qrels: &Qrels, opts: &EvalOptions) -> Result<MetricTable> {
    if opts.cutoffs.contains(&0) {
        return Err(Error::param("k", "cutoffs must be >= 1"));
    }
    let unknown: BTreeSet<String> = run
        .queries()
        .map(|(q, _)| task_of_query(q))
        .filter(|t| qrels.task(t).is_none())
        .map(str::to_string)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownTasks(unknown.into_iter().collect()));
    }
    let mut per_query = BTreeMap::new();
    for (q, list) in run.queries() {
        let task = task_of_query(q);
        let judged: Vec<f64> = qrels.task(task).unwrap().values().copied().collect();
        let grades: Vec<f64> = list.iter().map(|(d, _)| qrels.grade(task, d)).collect();
        per_query.insert(
            q.to_string(),
            QueryMetrics {
                ndcg: opts.cutoffs.iter().map(|&k| ndcg_at_k(&grades, &judged, k)).collect(),
                precision: opts
                    .cutoffs
                    .iter()
                    .map(|&k| precision_at_k(&grades, k, opts.rel_threshold))
                    .collect(),
            },
        );
    }
    let n = per_query.len().max(1) as f64;
    let mean = |f: &dyn Fn(&QueryMetrics) -> &Vec<f64>| -> Vec<f64> {
        (0..opts.cutoffs.len())
            .map(|i| per_query.values().map(|m| f(m)[i]).sum::<f64>() / n)
            .collect()
    };
    let ndcg = mean(&|m| &m.ndcg);
    let precision = mean(&|m| &m.precision);
    Ok(MetricTable {
        cutoffs: opts.cutoffs.clone(),
        per_query,
        ndcg,
        precision,
    })
}

/// Tab-separated report: method, fields, NDCG@k..., P@k...
pub fn report_tsv(rows: &[(&str, &str, &MetricTable)]) -> String {
    let Some((_, _, first)) = rows.first() else {
        return String::new();
    };
    let mut out = String::from("method\tfields");
    for k in &first.cutoffs {
        write!(out, "\tNDCG@{k}").unwrap();
    }
    for k in &first.cutoffs {
        write!(out, "\tP@{k}").unwrap();
    }
    out.push('\n');
    for (method, fields, table) in rows {
        write!(out, "{method}\t{fields}").unwrap();
        for v in table.ndcg.iter().chain(&table.precision) {
            write!(out, "\t{v:.4}").unwrap();
        }
        out.push('\n');
    }
    out
}

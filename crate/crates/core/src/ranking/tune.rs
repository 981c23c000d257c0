//! Field-weight and scorer-parameter tuning against relevance judgments.

use std::fmt;
use std::str::FromStr;

use super::{mix, order, FieldScores, MixField, Ranker, RankerConfig};
use crate::corpus::{task_of_query, tokenize_text, TaskSet};
use crate::error::{Error, Result};
use crate::eval::{ndcg_at_k, precision_at_k, Qrels, DEFAULT_REL_THRESHOLD};
use crate::index::{FieldIndex, Scorer};

pub const WEIGHT_GRID_STEP: f64 = 0.05;
const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Ndcg(usize),
    Precision(usize),
}

impl Default for Metric {
    fn default() -> Self {
        Metric::Ndcg(10)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Precision(k) => write!(f, "p@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (name, k) = lower
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("metric {s}: expected name@k")))?;
        let k: usize = k
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| Error::Config(format!("metric {s}: bad cutoff")))?;
        match name {
            "ndcg" => Ok(Metric::Ndcg(k)),
            "p" | "precision" => Ok(Metric::Precision(k)),
            _ => Err(Error::Config(format!("unknown metric {s}"))),
        }
    }
}

impl Metric {
    fn of(self, grades: &[f64], judged: &[f64]) -> f64 {
        match self {
            Metric::Ndcg(k) => ndcg_at_k(grades, judged, k),
            Metric::Precision(k) => precision_at_k(grades, k, DEFAULT_REL_THRESHOLD),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub config: RankerConfig,
    pub start_score: f64,
    pub score: f64,
    pub cycles: usize,
}

struct JudgedQuery {
    /// Grade of each candidate, aligned with the ranker's ids.
    grades: Vec<f64>,
    judged: Vec<f64>,
}

fn judged_queries(ids: &[String], tasks: &TaskSet, qrels: &Qrels) -> Result<Vec<(String, String, JudgedQuery)>> {
    if qrels.is_empty() {
        return Err(Error::EmptyQrels);
    }
    let out: Vec<_> = tasks
        .queries()
        .into_iter()
        .filter_map(|(qid, text)| {
            let task = task_of_query(&qid).to_string();
            let judged = qrels.task(&task)?;
            let q = JudgedQuery {
                grades: ids.iter().map(|d| qrels.grade(&task, d)).collect(),
                judged: judged.values().copied().collect(),
            };
            Some((qid, text, q))
        })
        .collect();
    if !out.iter().any(|(_, _, q)| q.judged.iter().any(|&g| g > 0.0)) {
        return Err(Error::EmptyQrels);
    }
    Ok(out)
}

fn mean_metric(
    ids: &[String],
    queries: &[(String, String, JudgedQuery)],
    scores: impl Fn(usize) -> Vec<f64>,
    depth: usize,
    metric: Metric,
) -> f64 {
    let total: f64 = queries
        .iter()
        .enumerate()
        .map(|(i, (qid, _, q))| {
            let list = order(qid, ids, &scores(i), depth);
            let pos = |d: &str| ids.iter().position(|x| x == d).unwrap();
            let grades: Vec<f64> = list.entries.iter().map(|(d, _)| q.grades[pos(d)]).collect();
            metric.of(&grades, &q.judged)
        })
        .sum();
    total / queries.len() as f64
}

/// Cyclic coordinate ascent over the enabled field weights on the grid
/// `{0, 0.05, ..., 1}`.
///
/// A weight moves only when the mean metric improves by more than 1e-6, and
/// then to the smallest grid value reaching the best score. Forced fields
/// never take weight 0.
pub fn tune_weights(
    ranker: &Ranker<'_>,
    tasks: &TaskSet,
    qrels: &Qrels,
    template: &RankerConfig,
    metric: Metric,
) -> Result<TuneResult> {
    template.validate()?;
    let ids = ranker.ids();
    let queries = judged_queries(ids, tasks, qrels)?;
    let cached: Vec<FieldScores> = queries
        .iter()
        .map(|(_, text, _)| ranker.field_scores(text, template))
        .collect::<Result<_>>()?;

    let mut cfg = template.clone();
    for f in cfg.enabled_fields() {
        if cfg.is_forced(f) && cfg.weight(f) < WEIGHT_GRID_STEP {
            cfg.set_weight(f, WEIGHT_GRID_STEP);
        }
    }
    let eval = |c: &RankerConfig| {
        mean_metric(ids, &queries, |i| mix(&cached[i], c, ids.len()), c.depth, metric)
    };
    let start_score = eval(template);
    let mut score = eval(&cfg);
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * WEIGHT_GRID_STEP).collect();
    let mut cycles = 0;
    loop {
        cycles += 1;
        let mut improved = false;
        for f in cfg.enabled_fields() {
            let mut best = (score, cfg.weight(f));
            for &w in &grid {
                if w == 0.0 && cfg.is_forced(f) {
                    continue;
                }
                let mut cand = cfg.clone();
                cand.set_weight(f, w);
                if !MixField::ALL.iter().any(|&g| cand.weight(g) > 0.0) {
                    continue;
                }
                let s = eval(&cand);
                if s > best.0 + MIN_IMPROVEMENT {
                    best = (s, w);
                }
            }
            if best.0 > score + MIN_IMPROVEMENT {
                cfg.set_weight(f, best.1);
                score = best.0;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    if score < start_score {
        return Ok(TuneResult {
            config: template.clone(),
            start_score,
            score: start_score,
            cycles,
        });
    }
    Ok(TuneResult {
        config: cfg,
        start_score,
        score,
        cycles,
    })
}

/// Pick the scorer from `grid` with the best mean metric on a single field;
/// ties keep the earliest grid entry.
pub fn grid_search_scorer(
    index: &FieldIndex,
    grid: &[Scorer],
    tasks: &TaskSet,
    qrels: &Qrels,
    metric: Metric,
    depth: usize,
) -> Result<(Scorer, f64)> {
    let ids = index.ids();
    let queries = judged_queries(ids, tasks, qrels)?;
    let tokens: Vec<Vec<String>> = queries.iter().map(|(_, t, _)| tokenize_text(t)).collect();
    let mut best: Option<(Scorer, f64)> = None;
    for &scorer in grid {
        let all: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| scorer.score_all(index, t))
            .collect::<Result<_>>()?;
        let s = mean_metric(ids, &queries, |i| all[i].clone(), depth, metric);
        if best.is_none_or(|(_, b)| s > b + MIN_IMPROVEMENT) {
            best = Some((scorer, s));
        }
    }
    best.ok_or_else(|| Error::param("grid", "empty scorer grid"))
}

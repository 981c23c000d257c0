//! Word Mover's Distance and embedding-based label features.

use crate::embed::{EmbeddingStore, WeightedPointCloud};
use crate::error::{Error, Result};

use super::transport::solve_transport;

/// Largest Euclidean distance between unit vectors; used as the floor for
/// `-wmd` when a side cannot be embedded.
pub const WMD_FLOOR: f64 = -2.0;
pub const DEFAULT_CLOUD_CAP: usize = 64;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Optimal transport cost between two normalized clouds under Euclidean
/// ground distance.
pub fn wmd(a: &WeightedPointCloud, b: &WeightedPointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let cost: Vec<Vec<f64>> = a
        .points()
        .iter()
        .map(|p| b.points().iter().map(|q| euclidean(&p.vector, &q.vector)).collect())
        .collect();
    Ok(solve_transport(&a.weights(), &b.weights(), &cost)?.cost)
}

/// `-wmd(query, labels)`, or `floor` when either side has no embeddable token.
pub fn score_labels<S: AsRef<str>, T: AsRef<str>>(
    store: &EmbeddingStore,
    query: &[S],
    labels: &[T],
    floor: f64,
) -> f64 {
    match (store.embed_tokens(query), store.embed_tokens(labels)) {
        (Ok(q), Ok(l)) => score_clouds(&q, &l, floor),
        _ => floor,
    }
}

/// `-wmd` between clouds after capping each at the heaviest points.
pub fn score_clouds(query: &WeightedPointCloud, labels: &WeightedPointCloud, floor: f64) -> f64 {
    let q = query.truncated(DEFAULT_CLOUD_CAP);
    let l = labels.truncated(DEFAULT_CLOUD_CAP);
    wmd(&q, &l).map(|d| -d).unwrap_or(floor)
}

/// Semantic matching features between a query and a label multiset:
/// `[early fusion, late max, late mean, late sum, -wmd]`.
///
/// Early fusion is the cosine of the two weighted centroids; the late
/// fusion features aggregate the cosines of all query/label point pairs.
pub fn semantic_features<S: AsRef<str>, T: AsRef<str>>(
    store: &EmbeddingStore,
    query: &[S],
    labels: &[T],
) -> [f64; 5] {
    let (Ok(q), Ok(l)) = (store.embed_tokens(query), store.embed_tokens(labels)) else {
        return [0.0, 0.0, 0.0, 0.0, WMD_FLOOR];
    };
    let early = cosine(&q.centroid(), &l.centroid());
    let pairs: Vec<f64> = q
        .points()
        .iter()
        .flat_map(|a| l.points().iter().map(move |b| cosine(&a.vector, &b.vector)))
        .collect();
    let max = pairs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = pairs.iter().sum();
    let mean = sum / pairs.len() as f64;
    [early, max, mean, sum, score_clouds(&q, &l, WMD_FLOOR)]
}

//! CART classification trees with Gini impurity, bagged into a random forest.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Sparse class distribution summing to one.
    Leaf { dist: Vec<(usize, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_for(&self, x: &[f64]) -> &[(usize, f64)] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { dist } => return dist,
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    n_classes: usize,
    dim: usize,
    trees: Vec<DecisionTree>,
}

struct Builder<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [usize],
    mtry: usize,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl RandomForest {
    /// Fit `n_trees` trees on bootstrap samples. `ys` are class indices in
    /// `0..n_classes`.
    pub fn fit(
        xs: &[Vec<f64>],
        ys: &[usize],
        n_classes: usize,
        n_trees: usize,
        seed: u64,
    ) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::param("training set", "empty or mismatched"));
        }
        if n_trees == 0 {
            return Err(Error::param("n_trees", "must be at least 1"));
        }
        let dim = xs[0].len();
        if xs.iter().any(|x| x.len() != dim) {
            return Err(Error::param("training set", "ragged feature vectors"));
        }
        if ys.iter().any(|&y| y >= n_classes) {
            return Err(Error::param("training set", "class index out of range"));
        }
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..n_trees).map(|_| master.random()).collect();
        let mtry = ((dim as f64).sqrt().ceil() as usize).clamp(1, dim.max(1));
        let trees = seeds
            .par_iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let sample: Vec<usize> = (0..xs.len()).map(|_| rng.random_range(0..xs.len())).collect();
                let mut b = Builder {
                    xs,
                    ys,
                    mtry,
                    left: vec![0.0; n_classes],
                    right: vec![0.0; n_classes],
                };
                b.grow(sample, &mut rng)
            })
            .collect();
        Ok(RandomForest {
            n_classes,
            dim,
            trees,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Mean of the leaf distributions reached by `x`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::param(
                "features",
                format!("dimension {} != {}", x.len(), self.dim),
            ));
        }
        let mut probs = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for &(c, p) in tree.leaf_for(x) {
                probs[c] += p;
            }
        }
        let t = self.trees.len() as f64;
        probs.iter_mut().for_each(|p| *p /= t);
        Ok(probs)
    }
}

impl Builder<'_> {
    fn grow(&mut self, root: Vec<usize>, rng: &mut ChaCha8Rng) -> DecisionTree {
        let mut nodes = vec![Node::Leaf { dist: Vec::new() }];
        let mut stack = vec![(0usize, root)];
        while let Some((at, idx)) = stack.pop() {
            match self.best_split(&idx, rng) {
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| self.xs[i][feature] <= threshold);
                    let (li, ri) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { dist: Vec::new() });
                    nodes.push(Node::Leaf { dist: Vec::new() });
                    nodes[at] = Node::Split {
                        feature,
                        threshold,
                        left: li,
                        right: ri,
                    };
                    stack.push((ri, r));
                    stack.push((li, l));
                }
                None => nodes[at] = Node::Leaf { dist: self.distribution(&idx) },
            }
        }
        DecisionTree { nodes }
    }

    fn distribution(&mut self, idx: &[usize]) -> Vec<(usize, f64)> {
        for &i in idx {
            self.left[self.ys[i]] += 1.0;
        }
        let mut classes: Vec<usize> = idx.iter().map(|&i| self.ys[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        let n = idx.len() as f64;
        let dist = classes.iter().map(|&c| (c, self.left[c] / n)).collect();
        for &c in &classes {
            self.left[c] = 0.0;
        }
        dist
    }

    fn best_split(&mut self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let first = self.ys[idx[0]];
        if idx.len() < 2 || idx.iter().all(|&i| self.ys[i] == first) {
            return None;
        }
        let dim = self.xs[0].len();
        let mut features: Vec<usize> = (0..dim).collect();
        features.shuffle(rng);

        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            order.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]));
            if let Some((score, thr)) = self.scan(&order, f) {
                if best.is_none_or(|(s, _, _)| score > s + 1e-12) {
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(_, f, thr)| (f, thr))
    }

    /// Best threshold on one feature for a node whose samples are sorted by
    /// that feature. The score is `SS_l/n_l + SS_r/n_r` where `SS` is the sum
    /// of squared class counts; maximizing it minimizes weighted Gini.
    fn scan(&mut self, sorted: &[usize], f: usize) -> Option<(f64, f64)> {
        let n = sorted.len();
        for &i in sorted {
            self.right[self.ys[i]] += 1.0;
        }
        let mut ss_right: f64 = 0.0;
        {
            let mut seen: Vec<usize> = sorted.iter().map(|&i| self.ys[i]).collect();
            seen.sort_unstable();
            seen.dedup();
            for c in seen {
                ss_right += self.right[c] * self.right[c];
            }
        }
        let mut ss_left = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for pos in 0..n - 1 {
            let c = self.ys[sorted[pos]];
            ss_left += 2.0 * self.left[c] + 1.0;
            self.left[c] += 1.0;
            ss_right -= 2.0 * self.right[c] - 1.0;
            self.right[c] -= 1.0;
            let (a, b) = (self.xs[sorted[pos]][f], self.xs[sorted[pos + 1]][f]);
            if a < b {
                let nl = (pos + 1) as f64;
                let score = ss_left / nl + ss_right / (n as f64 - nl);
                if best.is_none_or(|(s, _)| score > s + 1e-12) {
                    let mut thr = a + (b - a) / 2.0;
                    if thr >= b {
                        thr = a;
                    }
                    best = Some((score, thr));
                }
            }
        }
        for &i in sorted {
            self.left[self.ys[i]] = 0.0;
            self.right[self.ys[i]] = 0.0;
        }
        best
    }
}

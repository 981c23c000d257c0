//! Acceptance criteria, each checked against an independent oracle.
//!
//! Runs without the libtest harness so that every criterion prints exactly
//! one PASS or FAIL line. Exits nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tabsearch::cofactor::{self, init_model, objective, CoFactorConfig, FactorModel};
use tabsearch::config::PipelineConfig;
use tabsearch::cooccur::{build_sppmi, build_vocab_and_preference, cooccurrence_counts, PreferenceMatrix, SppmiMatrix};
use tabsearch::corpus::{Column, Corpus, Dataset};
use tabsearch::embed::{Point, WeightedPointCloud};
use tabsearch::eval::{evaluate, ndcg_at_k, paired_t_test, precision_at_k, EvalOptions, Qrels, RunFile};
use tabsearch::index::{build_index, Field, FieldIndex, Scorer};
use tabsearch::labelgen::{generate_labels, train_generator, EmbeddingSource, RandomForest, TrainingSet};
use tabsearch::pipeline::{self, run_experiment, train_label_stage, Workspace};
use tabsearch::ranking::{euclidean, tune_weights, wmd, Metric, MixField, Ranker, RankerConfig};
use tabsearch::synthetic::toy_bundle;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> std::result::Result<(), String> {
    let t = start.elapsed();
    ensure(t <= limit, || format!("took {:.2}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn corpus_of(tables: &[Vec<String>]) -> Corpus {
    Corpus::new(
        tables
            .iter()
            .enumerate()
            .map(|(i, labels)| {
                let cols = labels.iter().map(|l| Column::new(Some(l.clone()), vec!["1".into()])).collect();
                Dataset::new(format!("d{i}"), "", "", cols)
            })
            .collect(),
    )
}

fn random_tables(rng: &mut ChaCha8Rng, max_tables: usize, max_labels: usize) -> Vec<Vec<String>> {
    let n_tables = rng.random_range(1..=max_tables);
    let n_labels = rng.random_range(1..=max_labels);
    (0..n_tables)
        .map(|_| {
            let width = rng.random_range(1..=n_labels + 1);
            (0..width)
                .map(|_| format!("l{}", (b'a' + rng.random_range(0..n_labels) as u8) as char))
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------- 1

fn sppmi_oracle() -> Check {
    let start = Instant::now();
    let tables = vec![vec!["A".to_string(), "B".to_string()], vec!["A".to_string(), "C".to_string()]];
    let c = corpus_of(&tables);
    let (vocab, _) = build_vocab_and_preference(&c).map_err(|e| e.to_string())?;
    let counts = cooccurrence_counts(&c, &vocab);
    let (a, b) = (vocab.get("a").unwrap(), vocab.get("b").unwrap());
    let s1 = build_sppmi(&counts, 1).unwrap().get(a, b);
    let s2 = build_sppmi(&counts, 2).unwrap().get(a, b);
    ensure((s1 - 2f64.ln()).abs() < 1e-10, || format!("fixture k=1 gave {s1}"))?;
    ensure(s2.abs() < 1e-10, || format!("fixture k=2 gave {s2}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for trial in 0..40 {
        let tables = random_tables(&mut rng, 5, 6);
        let corpus = corpus_of(&tables);
        let (vocab, _) = build_vocab_and_preference(&corpus).map_err(|e| e.to_string())?;
        let counts = cooccurrence_counts(&corpus, &vocab);
        // Direct enumeration of ordered pairs of distinct labels per table.
        let mut pairs: BTreeMap<(String, String), f64> = BTreeMap::new();
        for t in &tables {
            let set: BTreeSet<String> = t.iter().map(|l| l.to_lowercase()).collect();
            for x in &set {
                for y in &set {
                    if x != y {
                        *pairs.entry((x.clone(), y.clone())).or_default() += 1.0;
                    }
                }
            }
        }
        let total: f64 = pairs.values().sum();
        let row = |x: &str| pairs.iter().filter(|((a, _), _)| a == x).map(|(_, v)| v).sum::<f64>();
        let col = |y: &str| pairs.iter().filter(|((_, b), _)| b == y).map(|(_, v)| v).sum::<f64>();
        for k_neg in [1u32, 2, 3] {
            let s = build_sppmi(&counts, k_neg).map_err(|e| e.to_string())?;
            for x in vocab.labels() {
                for y in vocab.labels() {
                    let n = pairs.get(&(x.clone(), y.clone())).copied().unwrap_or(0.0);
                    let expect = if n > 0.0 {
                        ((n * total / (row(x) * col(y))).ln() - f64::from(k_neg).ln()).max(0.0)
                    } else {
                        0.0
                    };
                    let got = s.get(vocab.get(x).unwrap(), vocab.get(y).unwrap());
                    ensure((got - expect).abs() <= 1e-10, || {
                        format!("trial {trial} k_neg {k_neg} ({x},{y}): {got} vs {expect}")
                    })?;
                }
            }
        }
        checked += 1;
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!("fixture ln 2 / 0, {checked} random corpora exact to 1e-10"))
}

// ---------------------------------------------------------------- 2

fn random_problem(rng: &mut ChaCha8Rng) -> (PreferenceMatrix, SppmiMatrix, CoFactorConfig) {
    let tables = random_tables(rng, 6, 6);
    let corpus = corpus_of(&tables);
    let (vocab, pref) = build_vocab_and_preference(&corpus).unwrap();
    let sppmi = build_sppmi(&cooccurrence_counts(&corpus, &vocab), 1).unwrap();
    let c0 = rng.random_range(0.05..0.5);
    let cfg = CoFactorConfig {
        k: rng.random_range(1..=4),
        c1: c0 + rng.random_range(0.1..2.0),
        c0,
        lambda_alpha: rng.random_range(1e-3..1e-1),
        lambda_beta: rng.random_range(1e-3..1e-1),
        lambda_gamma: rng.random_range(1e-3..1e-1),
        max_sweeps: 25,
        tolerance: 0.0,
        seed: rng.random(),
    };
    (pref, sppmi, cfg)
}

fn block_norm(f: &[f64]) -> f64 {
    f.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central difference of the objective along one parameter.
fn finite_difference(
    model: &FactorModel,
    pref: &PreferenceMatrix,
    sppmi: &SppmiMatrix,
    cfg: &CoFactorConfig,
    nudge: impl Fn(&mut FactorModel, f64),
) -> f64 {
    let h = 1e-5;
    let mut plus = model.clone();
    nudge(&mut plus, h);
    let mut minus = model.clone();
    nudge(&mut minus, -h);
    (objective(&plus, pref, sppmi, cfg) - objective(&minus, pref, sppmi, cfg)) / (2.0 * h)
}

/// Dense weighted ALS on the preference term alone, written independently
/// of the library's block updates.
fn preference_only_reference(
    m: &[Vec<f64>],
    mut a: Vec<Vec<f64>>,
    mut b: Vec<Vec<f64>>,
    cfg: &CoFactorConfig,
    sweeps: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, f64) {
    let k = cfg.k;
    let conf = |x: f64| if x > 0.0 { cfg.c1 } else { cfg.c0 };
    let solve_side = |fixed: &[Vec<f64>], target: &dyn Fn(usize) -> f64, lambda: f64| -> Vec<f64> {
        let mut lhs = vec![vec![0.0; k]; k];
        let mut rhs = vec![0.0; k];
        for (j, v) in fixed.iter().enumerate() {
            let y = target(j);
            let c = conf(y);
            for r in 0..k {
                rhs[r] += c * y * v[r];
                for s in 0..k {
                    lhs[r][s] += c * v[r] * v[s];
                }
            }
        }
        for (r, row) in lhs.iter_mut().enumerate() {
            row[r] += lambda;
        }
        gauss_solve(lhs, rhs)
    };
    for _ in 0..sweeps {
        for u in 0..a.len() {
            a[u] = solve_side(&b, &|p| m[u][p], cfg.lambda_alpha);
        }
        for p in 0..b.len() {
            b[p] = solve_side(&a, &|u| m[u][p], cfg.lambda_beta);
        }
    }
    let mut loss = 0.0;
    for (u, row) in m.iter().enumerate() {
        for (p, &y) in row.iter().enumerate() {
            let pred: f64 = a[u].iter().zip(&b[p]).map(|(x, z)| x * z).sum();
            loss += conf(y) * (y - pred).powi(2);
        }
    }
    let sq = |v: &[Vec<f64>]| v.iter().flatten().map(|x| x * x).sum::<f64>();
    loss += cfg.lambda_alpha * sq(&a) + cfg.lambda_beta * sq(&b);
    (a, b, loss)
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for s in c..n {
                a[r][s] -= f * a[c][s];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|s| a[r][s] * x[s]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn rows(f: &tabsearch::cofactor::Factors) -> Vec<Vec<f64>> {
    (0..f.rows()).map(|i| f.row(i).to_vec()).collect()
}

fn cofactor_checks() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    // Monotone objective.
    let mut worst_rise = f64::NEG_INFINITY;
    for trial in 0..50 {
        let (pref, sppmi, cfg) = random_problem(&mut rng);
        let t = cofactor::train(&pref, &sppmi, &cfg).map_err(|e| e.to_string())?;
        for w in t.trace.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
            ensure(w[1] <= w[0] + 1e-9, || format!("trial {trial}: objective rose {} -> {}", w[0], w[1]))?;
        }
    }

    // Every block is at its optimum right after its own update.
    let mut worst_grad: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for _ in 0..20 {
        let (pref, sppmi, cfg) = random_problem(&mut rng);
        let mut model = init_model(pref.n_rows(), pref.n_cols(), cfg.k, cfg.seed).unwrap();
        for _ in 0..3 {
            model.update_datasets(&pref, &cfg);
            let g = model.gradient(&pref, &sppmi, &cfg);
            worst_grad = worst_grad.max(block_norm(g.datasets.as_slice()));
            let u = rng.random_range(0..pref.n_rows());
            let d = rng.random_range(0..cfg.k);
            let fd = finite_difference(&model, &pref, &sppmi, &cfg, |m, h| m.datasets.row_mut(u)[d] += h);
            worst_fd = worst_fd.max(fd.abs());

            model.update_labels(&pref, &sppmi, &cfg);
            let g = model.gradient(&pref, &sppmi, &cfg);
            worst_grad = worst_grad.max(block_norm(g.labels.as_slice()));
            let p = rng.random_range(0..pref.n_cols());
            let fd = finite_difference(&model, &pref, &sppmi, &cfg, |m, h| m.labels.row_mut(p)[d] += h);
            worst_fd = worst_fd.max(fd.abs());

            model.update_contexts(&sppmi, &cfg);
            let g = model.gradient(&pref, &sppmi, &cfg);
            worst_grad = worst_grad.max(block_norm(g.contexts.as_slice()));
            let fd = finite_difference(&model, &pref, &sppmi, &cfg, |m, h| m.contexts.row_mut(p)[d] += h);
            worst_fd = worst_fd.max(fd.abs());

            model.update_label_bias(&sppmi);
            let g = model.gradient(&pref, &sppmi, &cfg);
            worst_grad = worst_grad.max(block_norm(&g.label_bias));

            model.update_context_bias(&sppmi);
            let g = model.gradient(&pref, &sppmi, &cfg);
            worst_grad = worst_grad.max(block_norm(&g.context_bias));
        }
    }
    ensure(worst_grad < 1e-6, || format!("block gradient norm {worst_grad:e}"))?;
    ensure(worst_fd < 1e-6, || format!("finite-difference slope {worst_fd:e}"))?;

    // Rank-1 all-ones 2x3 instance.
    let cfg = CoFactorConfig {
        k: 1,
        lambda_alpha: 1e-6,
        lambda_beta: 1e-6,
        lambda_gamma: 1e-6,
        c0: 0.01,
        max_sweeps: 50,
        tolerance: 0.0,
        seed: 5,
        ..CoFactorConfig::default()
    };
    let ones = PreferenceMatrix::from_rows(3, vec![vec![0, 1, 2], vec![0, 1, 2]]);
    let t = cofactor::train(&ones, &SppmiMatrix::empty(3), &cfg).map_err(|e| e.to_string())?;
    let rank_one = *t.trace.last().unwrap();
    ensure(t.trace.len() <= 51 && rank_one < 1e-3, || format!("rank-1 objective {rank_one}"))?;

    // Without co-occurrence the model reduces to weighted matrix factorization.
    let mut worst_ref: f64 = 0.0;
    for _ in 0..20 {
        let dense: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect())
            .collect();
        let pref = PreferenceMatrix::from_rows(
            3,
            dense.iter().map(|r| (0..3).filter(|&p| r[p] > 0.0).collect()).collect(),
        );
        let cfg = CoFactorConfig {
            k: 2,
            max_sweeps: 30,
            tolerance: 0.0,
            seed: rng.random(),
            ..CoFactorConfig::default()
        };
        let init = init_model(3, 3, 2, cfg.seed).unwrap();
        let (a, b, loss) = preference_only_reference(&dense, rows(&init.datasets), rows(&init.labels), &cfg, 30);
        let t = cofactor::train_from(init, &pref, &SppmiMatrix::empty(3), &cfg).map_err(|e| e.to_string())?;
        let diff = |x: &[Vec<f64>], y: &[Vec<f64>]| {
            x.iter().flatten().zip(y.iter().flatten()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        };
        worst_ref = worst_ref
            .max(diff(&a, &rows(&t.model.datasets)))
            .max(diff(&b, &rows(&t.model.labels)))
            .max((loss - t.trace.last().unwrap()).abs());
    }
    ensure(worst_ref < 1e-6, || format!("preference-only reference differs by {worst_ref:e}"))?;
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "largest objective step {worst_rise:.1e}, block gradient {worst_grad:.1e}, fd {worst_fd:.1e}, rank-1 {rank_one:.1e}, reference diff {worst_ref:.1e}"
    ))
}

// ---------------------------------------------------------------- 3

fn cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> WeightedPointCloud {
    let points = (0..n)
        .map(|i| Point {
            token: format!("t{i}"),
            vector: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            weight: rng.random_range(0.05..1.0),
        })
        .collect();
    WeightedPointCloud::from_counts(points).unwrap()
}

/// Minimum transport cost over every basic feasible solution, found by
/// enumerating all sets of m+n-1 cells and solving the balance equations.
fn brute_force_transport(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let size = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(size);
    fn visit(
        start: usize,
        size: usize,
        cells: &[(usize, usize)],
        chosen: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if chosen.len() == size {
            f(chosen);
            return;
        }
        for c in start..cells.len() {
            if cells.len() - c < size - chosen.len() {
                break;
            }
            chosen.push(c);
            visit(c + 1, size, cells, chosen, f);
            chosen.pop();
        }
    }
    let mut eval = |subset: &[usize]| {
        // Rows: m supply equations then n demand equations.
        let eqs = m + n;
        let mut mat: Vec<Vec<f64>> = vec![vec![0.0; size + 1]; eqs];
        for (col, &c) in subset.iter().enumerate() {
            let (i, j) = cells[c];
            mat[i][col] = 1.0;
            mat[m + j][col] = 1.0;
        }
        for i in 0..m {
            mat[i][size] = a[i];
        }
        for j in 0..n {
            mat[m + j][size] = b[j];
        }
        let mut row = 0;
        let mut pivots = Vec::new();
        for col in 0..size {
            let Some(p) = (row..eqs).max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs())) else {
                return;
            };
            if mat[p][col].abs() < 1e-12 {
                return;
            }
            mat.swap(row, p);
            let pv = mat[row][col];
            for v in mat[row].iter_mut() {
                *v /= pv;
            }
            for r in 0..eqs {
                if r != row && mat[r][col] != 0.0 {
                    let f = mat[r][col];
                    for s in 0..=size {
                        mat[r][s] -= f * mat[row][s];
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        if (row..eqs).any(|r| mat[r][size].abs() > 1e-9) {
            return;
        }
        let x: Vec<f64> = (0..size).map(|r| mat[r][size]).collect();
        if x.iter().any(|&v| v < -1e-12) {
            return;
        }
        let total: f64 = subset.iter().zip(&x).map(|(&c, &v)| cost[cells[c].0][cells[c].1] * v).sum();
        best = best.min(total);
    };
    visit(0, size, &cells, &mut chosen, &mut eval);
    best
}

fn wmd_checks() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for m in 1..=4 {
        for n in 1..=4 {
            for _ in 0..6 {
                let dim = rng.random_range(1..=4);
                let (x, y) = (cloud(&mut rng, m, dim), cloud(&mut rng, n, dim));
                let cost: Vec<Vec<f64>> = x
                    .points()
                    .iter()
                    .map(|p| y.points().iter().map(|q| euclidean(&p.vector, &q.vector)).collect())
                    .collect();
                let oracle = brute_force_transport(&x.weights(), &y.weights(), &cost);
                let got = wmd(&x, &y).map_err(|e| e.to_string())?;
                worst = worst.max((got - oracle).abs());
                instances += 1;
            }
        }
    }
    ensure(worst <= 1e-8, || format!("LP oracle gap {worst:e}"))?;

    let mut worst_metric: f64 = 0.0;
    for _ in 0..200 {
        let dim = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..3).map(|_| rng.random_range(1..=5)).collect();
        let (a, b, c) = (cloud(&mut rng, sizes[0], dim), cloud(&mut rng, sizes[1], dim), cloud(&mut rng, sizes[2], dim));
        let d = |x: &WeightedPointCloud, y: &WeightedPointCloud| wmd(x, y).unwrap();
        worst_metric = worst_metric
            .max((d(&a, &b) - d(&b, &a)).abs())
            .max(d(&a, &a).abs())
            .max(d(&a, &c) - d(&a, &b) - d(&b, &c));
    }
    ensure(worst_metric <= 1e-7, || format!("metric property violated by {worst_metric:e}"))?;
    within(Duration::from_secs(5), start)?;
    Ok(format!("{instances} instances up to 4x4 within {worst:.1e}; 200 metric triples within {worst_metric:.1e}"))
}

// ---------------------------------------------------------------- 4

#[allow(clippy::approx_constant)]
fn scorer_checks() -> Check {
    let docs = [
        Dataset::new("d1", "wind speed kansas", "", vec![]),
        Dataset::new("d2", "school lunch", "", vec![]),
    ];
    let idx = build_index(&docs, Field::Text);
    let bm25 = Scorer::Bm25 { k1: 1.2, b: 0.75 }.score(&idx, &["wind"], 0).map_err(|e| e.to_string())?;
    let tfidf = Scorer::TfIdf.score(&idx, &["wind"], 0).map_err(|e| e.to_string())?;
    ensure((bm25 - 0.6407).abs() < 1e-3, || format!("BM25 {bm25}"))?;
    ensure((tfidf - 0.6931).abs() < 1e-3, || format!("TF-IDF {tfidf}"))?;

    // With document length and document frequency held fixed, a higher
    // term frequency never lowers the score.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scorers = [
        Scorer::default(),
        Scorer::Bm25 { k1: 2.0, b: 0.3 },
        Scorer::TfIdf,
        Scorer::LmJm { lambda: 0.3 },
        Scorer::LmDirichlet { mu: 500.0 },
    ];
    let mut cases = 0;
    for _ in 0..200 {
        let others: Vec<(String, Vec<String>)> = (0..rng.random_range(1..6))
            .map(|d| {
                let len = rng.random_range(1..10);
                (format!("o{d}"), (0..len).map(|_| format!("w{}", rng.random_range(0..4))).collect())
            })
            .collect();
        let len = rng.random_range(2..12);
        for s in scorers {
            let mut prev = f64::NEG_INFINITY;
            for tf in 1..=len {
                let mut toks = vec!["w0".to_string(); tf];
                toks.resize(len, "pad".into());
                let mut docs = vec![("target".to_string(), toks)];
                docs.extend(others.iter().cloned());
                let idx = FieldIndex::from_documents(Field::Text, docs);
                let v = s.score(&idx, &["w0"], 0).map_err(|e| e.to_string())?;
                ensure(v >= prev - 1e-12, || format!("{s} decreased at tf {tf}: {prev} -> {v}"))?;
                prev = v;
                cases += 1;
            }
        }
    }
    Ok(format!("BM25 {bm25:.4}, TF-IDF {tfidf:.4}, {cases} randomized monotonicity cases"))
}

// ---------------------------------------------------------------- 5

/// Metric computation from the raw TREC text, independent of the library's
/// parsing and metric code.
fn reference_metrics(run_text: &str, qrels_text: &str, k: usize, threshold: f64) -> BTreeMap<String, (f64, f64)> {
    let mut judged: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for line in qrels_text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        judged.entry(f[0].into()).or_default().insert(f[2].into(), f[3].parse().unwrap());
    }
    let mut lists: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for line in run_text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        lists.entry(f[0].into()).or_default().push((f[3].parse().unwrap(), f[2].into()));
    }
    let mut out = BTreeMap::new();
    for (q, mut list) in lists {
        list.sort();
        let task = q.split('/').next().unwrap();
        let grades = &judged[task];
        let gain = |g: f64| g.exp2() - 1.0;
        let mut dcg = 0.0;
        let mut hits = 0usize;
        for (rank, ds) in list.iter().take(k) {
            let g = grades.get(ds).copied().unwrap_or(0.0);
            dcg += gain(g) * std::f64::consts::LN_2 / ((*rank as f64) + 1.0).ln();
            if g >= threshold {
                hits += 1;
            }
        }
        let mut ideal: Vec<f64> = grades.values().copied().collect();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| gain(g) * std::f64::consts::LN_2 / ((i as f64) + 2.0).ln())
            .sum();
        let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };
        out.insert(q, (ndcg, hits as f64 / k as f64));
    }
    out
}

fn metric_checks() -> Check {
    let v = ndcg_at_k(&[0.0, 3.0, 2.0], &[3.0, 2.0, 0.0], 3);
    ensure((v - 0.6653).abs() < 1e-4, || format!("[0,3,2] gave {v}"))?;
    ensure(ndcg_at_k(&[0.0, 0.0], &[0.0, 0.0, 0.0], 5) == 0.0, || "IDCG-0 rule".into())?;
    let p = precision_at_k(&[3.0, 3.0], 5, 2.0);
    ensure((p - 0.4).abs() < 1e-12, || format!("padding rule gave {p}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut queries = 0;
    for _ in 0..50 {
        let n_tasks = rng.random_range(1..4);
        let mut qrels = String::new();
        let mut run = String::new();
        for t in 0..n_tasks {
            for d in 0..12 {
                if rng.random_bool(0.6) {
                    let g = if rng.random_bool(0.2) { rng.random_range(0.0..3.0) } else { f64::from(rng.random_range(0..4u8)) };
                    qrels.push_str(&format!("task{t} 0 ds{d:02} {g}\n"));
                }
            }
            if !qrels.contains(&format!("task{t} ")) {
                qrels.push_str(&format!("task{t} 0 ds00 0\n"));
            }
            for qn in 1..=rng.random_range(1..3) {
                let mut ids: Vec<usize> = (0..15).collect();
                rand::seq::SliceRandom::shuffle(&mut ids[..], &mut rng);
                let len = rng.random_range(1..15);
                for (r, d) in ids.iter().take(len).enumerate() {
                    run.push_str(&format!("task{t}/{qn} Q0 ds{d:02} {} {:.4} r\n", r + 1, 100.0 - r as f64));
                }
            }
        }
        let parsed_run = RunFile::parse(&run).map_err(|e| e.to_string())?;
        let parsed_qrels = Qrels::parse(&qrels).map_err(|e| e.to_string())?;
        for k in [1, 5, 10, 20] {
            let opts = EvalOptions { cutoffs: vec![k], rel_threshold: 2.0 };
            let table = evaluate(&parsed_run, &parsed_qrels, &opts).map_err(|e| e.to_string())?;
            let reference = reference_metrics(&run, &qrels, k, 2.0);
            for (q, m) in &table.per_query {
                let (rn, rp) = reference[q];
                worst = worst.max((m.ndcg[0] - rn).abs()).max((m.precision[0] - rp).abs());
                queries += 1;
            }
        }
    }
    ensure(worst <= 1e-9, || format!("reference metric gap {worst:e}"))?;

    let (t, p) = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    ensure((t - 3.4641).abs() < 1e-3 && (p - 0.0742).abs() < 1e-3, || format!("t-test gave t={t} p={p}"))?;
    Ok(format!("fixtures ok, {queries} query evaluations within {worst:.1e}, t={t:.4} p={p:.4}"))
}

// ---------------------------------------------------------------- 6

fn labelgen_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let n = rng.random_range(1..30);
        let mut probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        if rng.random_bool(0.3) {
            probs[0] = probs[n - 1];
        }
        let m = rng.random_range(1..12);
        let theta = rng.random_range(0.0..1.0);
        let out = generate_labels(&probs, m, theta);
        ensure(out.len() <= m, || "more than m labels".into())?;
        ensure(out.iter().all(|&(_, p)| p >= theta), || "label below threshold".into())?;
        ensure(out.windows(2).all(|w| w[0].1 >= w[1].1), || "not descending".into())?;
    }

    // Separable toy set: feature 0 decides the class.
    let xs: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![(i % 2) as f64, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
        .collect();
    let ys: Vec<usize> = (0..40).map(|i| i % 2).collect();
    let set = TrainingSet { features: xs.clone(), labels: ys.clone() };
    let gen = train_generator(&set, 2, 25, 11, EmbeddingSource::SiblingMean).map_err(|e| e.to_string())?;
    let again = train_generator(&set, 2, 25, 11, EmbeddingSource::SiblingMean).map_err(|e| e.to_string())?;
    ensure(gen == again, || "training not deterministic under a fixed seed".into())?;
    let correct = xs
        .iter()
        .zip(&ys)
        .filter(|(x, &y)| {
            let p = gen.predict_proba(x).unwrap();
            generate_labels(&p, 1, 0.0)[0].0 == y
        })
        .count();
    ensure(correct == xs.len(), || format!("training accuracy {correct}/{}", xs.len()))?;

    let n_classes = 7;
    let wide_x: Vec<Vec<f64>> = (0..60).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let wide_y: Vec<usize> = (0..60).map(|_| rng.random_range(0..n_classes)).collect();
    let forest = RandomForest::fit(&wide_x, &wide_y, n_classes, 25, 3).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s: f64 = forest.predict_proba(&x).unwrap().iter().sum();
        worst = worst.max((s - 1.0).abs());
    }
    ensure(worst <= 1e-9, || format!("probabilities sum off by {worst:e}"))?;
    Ok(format!("selection contract on 500 draws, training accuracy 100%, 1000 sums within {worst:.1e}"))
}

// ---------------------------------------------------------------- 7

fn end_to_end() -> Check {
    let start = Instant::now();
    let bundle = toy_bundle(7);
    let cfg = PipelineConfig { seed: 7, ..PipelineConfig::default() };
    let mut corpus = bundle.corpus.clone();
    let stage = train_label_stage(&corpus, &cfg).map_err(|e| e.to_string())?;
    stage.annotate(&mut corpus, &cfg).map_err(|e| e.to_string())?;
    let labelled = bundle
        .targets
        .iter()
        .filter(|id| {
            let ds = &corpus.datasets[corpus.position(id).unwrap()];
            ds.generated_labels.iter().flatten().any(|l| l.tokens == ["wind", "speed"])
        })
        .count();

    let store = bundle.store();
    let (tasks, qrels) = (bundle.tasks(), bundle.qrels());
    let exp = run_experiment(&corpus, &store, &tasks, &qrels, &cfg).map_err(|e| e.to_string())?;
    let sdr = exp.get("SDR", "T+D").unwrap().metrics.ndcg_at(5).unwrap();
    let slmr = exp.get("SLMR", "T+D+G").unwrap().metrics.ndcg_at(5).unwrap();

    let ranker = Ranker::new(&corpus, Some(&store), false);
    let template = RankerConfig::with_fields(&[(MixField::Text, 0.5), (MixField::Labels, 0.5)]);
    let tuned = tune_weights(&ranker, &tasks, &qrels, &template, Metric::Ndcg(10)).map_err(|e| e.to_string())?;
    let w_l = tuned.config.weight(MixField::Labels);
    ensure(tuned.config.weight(MixField::Data) == 0.0, || "data weight moved".into())?;
    ensure(slmr > sdr, || format!("SLMR NDCG@5 {slmr:.4} not above SDR {sdr:.4}"))?;
    ensure(w_l > 0.0, || "tuned label weight is 0".into())?;
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "NDCG@5 SLMR(T+D+G) {slmr:.4} > SDR(T+D) {sdr:.4}; w_l = {w_l}; {labelled}/5 targets labelled; {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 8

fn file_pipeline(root: &Path, seed: u64) -> tabsearch::Result<Vec<PathBuf>> {
    let paths = toy_bundle(7).write(&root.join("toy"))?;
    let mut cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    cfg.corpus = Some(paths.corpus);
    cfg.vectors = Some(paths.vectors);
    cfg.queries = Some(paths.queries);
    cfg.qrels = Some(paths.qrels);
    cfg.set("enabled", "text,labels")?;
    let ws = Workspace::new(root.join("work"))?;
    ws.ingest(&cfg)?;
    ws.cooccur(&cfg)?;
    ws.train_cofactor(&cfg)?;
    ws.train_generator(&cfg)?;
    ws.generate(&cfg)?;
    ws.index()?;
    let store = pipeline::load_store(&cfg)?;
    let tasks = pipeline::load_tasks(&cfg)?;
    let qrels = pipeline::load_qrels(&cfg)?;
    ws.pool(&tasks, 100)?;
    let tuned = ws.tune(&cfg, &tasks, &qrels, store.as_ref())?;
    let (slmr, run) = ws.run(&cfg, &tuned.config, store.as_ref(), &tasks, "SLMR_T+D+G")?;
    let (sdr, sdr_run) = ws.run(&cfg, &RankerConfig::text_only(), None, &tasks, "SDR_T+D")?;
    let report = pipeline::evaluate_runs(&[run, sdr_run], &qrels, &EvalOptions::default())?;
    let report_path = ws.path(pipeline::REPORT_FILE);
    fs::write(&report_path, report).unwrap();
    ws.features(&cfg, store.as_ref().unwrap(), &tasks, &qrels)?;
    let mut files = vec![slmr, sdr, report_path];
    for name in [
        pipeline::COFACTOR_FILE,
        pipeline::GENERATOR_FILE,
        pipeline::GENERATED_FILE,
        pipeline::RANKER_FILE,
        pipeline::POOL_FILE,
        pipeline::FEATURES_FILE,
    ] {
        files.push(ws.path(name));
    }
    Ok(files)
}

fn reproducibility() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = file_pipeline(a.path(), 11).map_err(|e| e.to_string())?;
    let fb = file_pipeline(b.path(), 11).map_err(|e| e.to_string())?;
    for (x, y) in fa.iter().zip(&fb) {
        let (bx, by) = (fs::read(x).unwrap(), fs::read(y).unwrap());
        ensure(bx == by, || format!("{} differs between runs", x.file_name().unwrap().to_string_lossy()))?;
    }
    Ok(format!("{} artifacts byte-identical across two seeded runs", fa.len()))
}

// ---------------------------------------------------------------- 9

/// Runs only when `TABSEARCH_BENCHMARK` points at a directory holding
/// `corpus/`, `queries.tsv`, `qrels.txt` and `vectors.txt` (or `.gz`).
fn external_benchmark() -> Option<Check> {
    let root = PathBuf::from(std::env::var_os("TABSEARCH_BENCHMARK")?);
    let run = || -> tabsearch::Result<String> {
        let vectors = ["vectors.txt", "vectors.txt.gz", "vectors.vec", "vectors.vec.gz"]
            .iter()
            .map(|n| root.join(n))
            .find(|p| p.exists())
            .ok_or_else(|| tabsearch::Error::MissingPath(root.join("vectors.txt")))?;
        let corpus = tabsearch::corpus::load_corpus(&root.join("corpus"))?;
        let descriptions = root.join("descriptions.tsv");
        let tasks = tabsearch::corpus::TaskSet::load(&root.join("queries.tsv"), descriptions.exists().then_some(descriptions.as_path()))?;
        let qrels = Qrels::load(&root.join("qrels.txt"))?;
        let store = tabsearch::embed::EmbeddingStore::load(&vectors)?;
        let cfg = PipelineConfig::default();
        let mut annotated = corpus.clone();
        train_label_stage(&corpus, &cfg)?.annotate(&mut annotated, &cfg)?;
        let exp = run_experiment(&annotated, &store, &tasks, &qrels, &cfg)?;
        let slmr = exp.get("SLMR", "T+D+G").unwrap().metrics.ndcg_at(5).unwrap();
        let mdr = exp.get("MDR", "T+D+DT").unwrap().metrics.ndcg_at(5).unwrap();
        if slmr >= mdr {
            Ok(format!("SLMR(T+D+G) {slmr:.4} >= MDR(T+D+DT) {mdr:.4}"))
        } else {
            Err(tabsearch::Error::Config(format!("SLMR(T+D+G) {slmr:.4} < MDR(T+D+DT) {mdr:.4}")))
        }
    };
    Some(run().map_err(|e| e.to_string()))
}

fn guarded(f: fn() -> Check) -> Check {
    panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 SPPMI matches pair enumeration", sppmi_oracle),
        ("2 joint factorization optimality", cofactor_checks),
        ("3 WMD matches LP oracle and is a metric", wmd_checks),
        ("4 lexical scorers", scorer_checks),
        ("5 evaluation metrics and t-test", metric_checks),
        ("6 label generation contract", labelgen_checks),
        ("7 end-to-end label benefit", end_to_end),
        ("8 byte-identical reruns", reproducibility),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        match guarded(f) {
            Ok(detail) => println!("PASS criterion {name} ({detail}) [{:.2}s]", t.elapsed().as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    match external_benchmark() {
        None => println!("SKIP criterion 9 external benchmark (TABSEARCH_BENCHMARK not set)"),
        Some(Ok(detail)) => println!("PASS criterion 9 external benchmark ({detail})"),
        Some(Err(why)) => {
            failed += 1;
            println!("FAIL criterion 9 external benchmark: {why}");
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Joint factorization of the preference matrix and the SPPMI label matrix.
//!
//! The loss couples a confidence-weighted matrix factorization of the
//! dataset-label matrix with a biased factorization of the SPPMI matrix,
//! sharing the label factors between the two:
//!
//! ```text
//! L = sum_{u,p} c_up (M_up - a_u.b_p)^2
//!   + sum_{S_pi != 0} (S_pi - b_p.g_i - bias_p - ctx_i)^2
//!   + la sum |a_u|^2 + lb sum |b_p|^2 + lg sum |g_i|^2
//! ```
//!
//! Optimization is vector-wise ALS: every latent vector is solved in closed
//! form while all other blocks are held fixed, so each block step is an
//! exact minimizer and the loss never increases.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cooccur::{PreferenceMatrix, SparseMatrix, SppmiMatrix};
use crate::error::{Error, Result};

const JITTER: f64 = 1e-10;

/// Row-major dense matrix of latent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    k: usize,
    data: Vec<f64>,
}

impl Factors {
    pub fn zeros(rows: usize, k: usize) -> Self {
        Factors {
            k,
            data: vec![0.0; rows * k],
        }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.k, self.k);
        for i in 0..self.rows() {
            add_outer(&mut g, self.row(i), 1.0);
        }
        g
    }

    fn set_rows(&mut self, rows: Vec<Vec<f64>>) {
        for (i, r) in rows.into_iter().enumerate() {
            self.row_mut(i).copy_from_slice(&r);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_outer(m: &mut DMatrix<f64>, v: &[f64], w: f64) {
    let k = v.len();
    for r in 0..k {
        for c in 0..k {
            m[(r, c)] += w * v[r] * v[c];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// Dataset factors, one row per dataset.
    pub datasets: Factors,
    /// Label factors shared between both terms of the loss.
    pub labels: Factors,
    /// Context factors of the SPPMI term.
    pub contexts: Factors,
    pub label_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoFactorConfig {
    pub k: usize,
    /// Confidence of observed cells (`M_up = 1`).
    pub c1: f64,
    /// Confidence of unobserved cells (`M_up = 0`).
    pub c0: f64,
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
    pub lambda_gamma: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for CoFactorConfig {
    fn default() -> Self {
        CoFactorConfig {
            k: 40,
            c1: 1.0,
            c0: 0.1,
            lambda_alpha: 1e-2,
            lambda_beta: 1e-2,
            lambda_gamma: 1e-2,
            max_sweeps: 100,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl CoFactorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::param("k", "latent dimension must be at least 1"));
        }
        if !(self.c0 > 0.0 && self.c1 > self.c0) {
            return Err(Error::param("c1/c0", "require c1 > c0 > 0"));
        }
        for (name, v) in [
            ("lambda_alpha", self.lambda_alpha),
            ("lambda_beta", self.lambda_beta),
            ("lambda_gamma", self.lambda_gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    fn weight(&self, observed: bool) -> f64 {
        if observed {
            self.c1
        } else {
            self.c0
        }
    }
}

pub fn init_model(m: usize, n: usize, k: usize, seed: u64) -> Result<FactorModel> {
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::param("dims", format!("zero dimension in ({m}, {n}, {k})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.5 / k as f64;
    let mut fill = |rows: usize| {
        let mut f = Factors::zeros(rows, k);
        for x in f.as_mut_slice() {
            *x = rng.random_range(-scale..=scale);
        }
        f
    };
    let datasets = fill(m);
    let labels = fill(n);
    let contexts = fill(n);
    Ok(FactorModel {
        datasets,
        labels,
        contexts,
        label_bias: vec![0.0; n],
        context_bias: vec![0.0; n],
    })
}

/// Column view of the SPPMI matrix: for context `i`, the labels `p` with
/// `S_pi != 0` and their values.
fn transpose(s: &SparseMatrix) -> Vec<Vec<(usize, f64)>> {
    let mut cols = vec![Vec::new(); s.n_cols()];
    for (p, i, v) in s.iter() {
        cols[i].push((p, v));
    }
    cols
}

fn check_shapes(model: &FactorModel, pref: &PreferenceMatrix, sppmi: &SppmiMatrix) -> Result<()> {
    let (m, n) = (model.datasets.rows(), model.labels.rows());
    if pref.n_rows() != m || pref.n_cols() != n || sppmi.n() != n || model.contexts.rows() != n
    {
        return Err(Error::param(
            "shapes",
            format!(
                "model is {m}x{n}, preference {}x{}, sppmi {}",
                pref.n_rows(),
                pref.n_cols(),
                sppmi.n()
            ),
        ));
    }
    Ok(())
}

impl FactorModel {
    pub fn k(&self) -> usize {
        self.labels.k()
    }

    /// Label representation used as a feature downstream.
    pub fn label_vector(&self, p: usize) -> &[f64] {
        self.labels.row(p)
    }

    fn embedding_residual(&self, p: usize, i: usize, s: f64) -> f64 {
        s - dot(self.labels.row(p), self.contexts.row(i)) - self.label_bias[p] - self.context_bias[i]
    }

    /// Solve every dataset vector. Returns the number of jittered solves.
    pub fn update_datasets(&mut self, pref: &PreferenceMatrix, cfg: &CoFactorConfig) -> usize {
        let k = self.k();
        let mut base = self.labels.gram() * cfg.c0;
        for d in 0..k {
            base[(d, d)] += cfg.lambda_alpha;
        }
        let labels = &self.labels;
        let solved: Vec<(Vec<f64>, bool)> = (0..pref.n_rows())
            .into_par_iter()
            .map(|u| {
                let mut a = base.clone();
                let mut rhs = DVector::zeros(k);
                for &p in pref.row(u) {
                    let beta = labels.row(p);
                    add_outer(&mut a, beta, cfg.c1 - cfg.c0);
                    for d in 0..k {
                        rhs[d] += cfg.c1 * beta[d];
                    }
                }
                solve_spd(a, rhs)
            })
            .collect();
        self.datasets.set_rows_reporting(solved)
    }

    pub fn update_labels(
        &mut self,
        pref: &PreferenceMatrix,
        sppmi: &SppmiMatrix,
        cfg: &CoFactorConfig,
    ) -> usize {
        let k = self.k();
        let mut base = self.datasets.gram() * cfg.c0;
        for d in 0..k {
            base[(d, d)] += cfg.lambda_beta;
        }
        let this = &*self;
        let solved: Vec<(Vec<f64>, bool)> = (0..pref.n_cols())
            .into_par_iter()
            .map(|p| {
                let mut a = base.clone();
                let mut rhs = DVector::zeros(k);
                for &u in pref.col(p) {
                    let alpha = this.datasets.row(u);
                    add_outer(&mut a, alpha, cfg.c1 - cfg.c0);
                    for d in 0..k {
                        rhs[d] += cfg.c1 * alpha[d];
                    }
                }
                for &(i, s) in sppmi.row(p) {
                    let gamma = this.contexts.row(i);
                    add_outer(&mut a, gamma, 1.0);
                    let target = s - this.label_bias[p] - this.context_bias[i];
                    for d in 0..k {
                        rhs[d] += target * gamma[d];
                    }
                }
                solve_spd(a, rhs)
            })
            .collect();
        self.labels.set_rows_reporting(solved)
    }

    pub fn update_contexts(&mut self, sppmi: &SppmiMatrix, cfg: &CoFactorConfig) -> usize {
        let k = self.k();
        let cols = transpose(&sppmi.matrix);
        let this = &*self;
        let solved: Vec<(Vec<f64>, bool)> = cols
            .par_iter()
            .enumerate()
            .map(|(i, col)| {
                let mut a = DMatrix::identity(k, k) * cfg.lambda_gamma;
                let mut rhs = DVector::zeros(k);
                for &(p, s) in col {
                    let beta = this.labels.row(p);
                    add_outer(&mut a, beta, 1.0);
                    let target = s - this.label_bias[p] - this.context_bias[i];
                    for d in 0..k {
                        rhs[d] += target * beta[d];
                    }
                }
                solve_spd(a, rhs)
            })
            .collect();
        self.contexts.set_rows_reporting(solved)
    }

    /// Each label bias becomes the mean residual over its nonzero SPPMI cells.
    pub fn update_label_bias(&mut self, sppmi: &SppmiMatrix) {
        for p in 0..sppmi.n() {
            let row = sppmi.row(p);
            self.label_bias[p] = if row.is_empty() {
                0.0
            } else {
                let total: f64 = row
                    .iter()
                    .map(|&(i, s)| s - dot(self.labels.row(p), self.contexts.row(i)) - self.context_bias[i])
                    .sum();
                total / row.len() as f64
            };
        }
    }

    pub fn update_context_bias(&mut self, sppmi: &SppmiMatrix) {
        let cols = transpose(&sppmi.matrix);
        for (i, col) in cols.iter().enumerate() {
            self.context_bias[i] = if col.is_empty() {
                0.0
            } else {
                let total: f64 = col
                    .iter()
                    .map(|&(p, s)| s - dot(self.labels.row(p), self.contexts.row(i)) - self.label_bias[p])
                    .sum();
                total / col.len() as f64
            };
        }
    }

    /// Gradient of the loss with respect to every parameter, evaluated densely.
    pub fn gradient(
        &self,
        pref: &PreferenceMatrix,
        sppmi: &SppmiMatrix,
        cfg: &CoFactorConfig,
    ) -> FactorModel {
        let (m, n, k) = (self.datasets.rows(), self.labels.rows(), self.k());
        let mut g = FactorModel {
            datasets: Factors::zeros(m, k),
            labels: Factors::zeros(n, k),
            contexts: Factors::zeros(n, k),
            label_bias: vec![0.0; n],
            context_bias: vec![0.0; n],
        };
        for u in 0..m {
            for p in 0..n {
                let obs = pref.get(u, p);
                let r = obs - dot(self.datasets.row(u), self.labels.row(p));
                let w = -2.0 * cfg.weight(obs == 1.0) * r;
                for d in 0..k {
                    g.datasets.row_mut(u)[d] += w * self.labels.row(p)[d];
                    g.labels.row_mut(p)[d] += w * self.datasets.row(u)[d];
                }
            }
        }
        for (p, i, s) in sppmi.matrix.iter() {
            let e = self.embedding_residual(p, i, s);
            for d in 0..k {
                g.labels.row_mut(p)[d] -= 2.0 * e * self.contexts.row(i)[d];
                g.contexts.row_mut(i)[d] -= 2.0 * e * self.labels.row(p)[d];
            }
            g.label_bias[p] -= 2.0 * e;
            g.context_bias[i] -= 2.0 * e;
        }
        let reg = |grad: &mut Factors, f: &Factors, lambda: f64| {
            for (gx, x) in grad.as_mut_slice().iter_mut().zip(f.as_slice()) {
                *gx += 2.0 * lambda * x;
            }
        };
        reg(&mut g.datasets, &self.datasets, cfg.lambda_alpha);
        reg(&mut g.labels, &self.labels, cfg.lambda_beta);
        reg(&mut g.contexts, &self.contexts, cfg.lambda_gamma);
        g
    }

    /// Text serialization: header `cofactor m n k`, then the three factor
    /// matrices row by row and the two bias vectors.
    pub fn to_text(&self) -> String {
        let (m, n, k) = (self.datasets.rows(), self.labels.rows(), self.k());
        let mut out = format!("cofactor {m} {n} {k}\n");
        let line = |out: &mut String, xs: &[f64]| {
            let parts: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
            writeln!(out, "{}", parts.join(" ")).unwrap();
        };
        for (name, f) in [
            ("datasets", &self.datasets),
            ("labels", &self.labels),
            ("contexts", &self.contexts),
        ] {
            writeln!(out, "{name}").unwrap();
            for r in 0..f.rows() {
                line(&mut out, f.row(r));
            }
        }
        writeln!(out, "label_bias").unwrap();
        line(&mut out, &self.label_bias);
        writeln!(out, "context_bias").unwrap();
        line(&mut out, &self.context_bias);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(n, l)| (n + 1, l))
                .ok_or_else(|| Error::parse("model", 0, format!("truncated before {expect}")))
        };
        let (_, header) = next("header")?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "cofactor" {
            return Err(Error::parse("model", 1, "expected `cofactor m n k`"));
        }
        let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::parse("model", 1, "bad dimension"));
        let (m, n, k) = (dim(parts[1])?, dim(parts[2])?, dim(parts[3])?);
        let floats = |n_line: usize, l: &str, len: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse("model", n_line, "bad number"))?;
            if v.len() != len {
                return Err(Error::parse("model", n_line, format!("expected {len} values")));
            }
            Ok(v)
        };
        let mut read_factors = |name: &str, rows: usize| -> Result<Factors> {
            let (ln, l) = next(name)?;
            if l.trim() != name {
                return Err(Error::parse("model", ln, format!("expected section {name}")));
            }
            let mut f = Factors::zeros(rows, k);
            for r in 0..rows {
                let (ln, l) = next(name)?;
                f.row_mut(r).copy_from_slice(&floats(ln, l, k)?);
            }
            Ok(f)
        };
        let datasets = read_factors("datasets", m)?;
        let labels = read_factors("labels", n)?;
        let contexts = read_factors("contexts", n)?;
        let mut read_vec = |name: &str| -> Result<Vec<f64>> {
            let (ln, l) = next(name)?;
            if l.trim() != name {
                return Err(Error::parse("model", ln, format!("expected section {name}")));
            }
            let (ln, l) = next(name)?;
            floats(ln, l, n)
        };
        let label_bias = read_vec("label_bias")?;
        let context_bias = read_vec("context_bias")?;
        Ok(FactorModel {
            datasets,
            labels,
            contexts,
            label_bias,
            context_bias,
        })
    }
}

impl Factors {
    fn set_rows_reporting(&mut self, solved: Vec<(Vec<f64>, bool)>) -> usize {
        let jittered = solved.iter().filter(|(_, j)| *j).count();
        self.set_rows(solved.into_iter().map(|(v, _)| v).collect());
        jittered
    }
}

/// Solve a symmetric positive (semi)definite system, adding a tiny ridge
/// when the factorization fails.
fn solve_spd(a: DMatrix<f64>, rhs: DVector<f64>) -> (Vec<f64>, bool) {
    if let Some(chol) = a.clone().cholesky() {
        return (chol.solve(&rhs).as_slice().to_vec(), false);
    }
    let k = a.nrows();
    let jittered = a + DMatrix::identity(k, k) * JITTER;
    let x = match jittered.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => jittered.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k)),
    };
    (x.as_slice().to_vec(), true)
}

/// Exact value of the joint loss.
pub fn objective(
    model: &FactorModel,
    pref: &PreferenceMatrix,
    sppmi: &SppmiMatrix,
    cfg: &CoFactorConfig,
) -> f64 {
    // sum over all cells of c0 (a.b)^2 via the two Gram matrices, then
    // correct the observed cells
    let ga = model.datasets.gram();
    let gb = model.labels.gram();
    let mut mf = cfg.c0 * ga.component_mul(&gb).sum();
    for u in 0..pref.n_rows() {
        for &p in pref.row(u) {
            let pred = dot(model.datasets.row(u), model.labels.row(p));
            mf += cfg.c1 * (1.0 - pred).powi(2) - cfg.c0 * pred * pred;
        }
    }
    let emb: f64 = sppmi
        .matrix
        .iter()
        .map(|(p, i, s)| model.embedding_residual(p, i, s).powi(2))
        .sum();
    let sq = |f: &Factors| f.as_slice().iter().map(|x| x * x).sum::<f64>();
    mf.max(0.0)
        + emb
        + cfg.lambda_alpha * sq(&model.datasets)
        + cfg.lambda_beta * sq(&model.labels)
        + cfg.lambda_gamma * sq(&model.contexts)
}

/// One pass over all blocks: datasets, labels, contexts, label bias,
/// context bias. Returns the number of solves that needed a ridge jitter.
pub fn als_sweep(
    model: &mut FactorModel,
    pref: &PreferenceMatrix,
    sppmi: &SppmiMatrix,
    cfg: &CoFactorConfig,
) -> Result<usize> {
    check_shapes(model, pref, sppmi)?;
    let mut jittered = model.update_datasets(pref, cfg);
    jittered += model.update_labels(pref, sppmi, cfg);
    jittered += model.update_contexts(sppmi, cfg);
    model.update_label_bias(sppmi);
    model.update_context_bias(sppmi);
    if jittered > 0 {
        warn!("{jittered} singular systems regularized with ridge jitter {JITTER:e}");
    }
    Ok(jittered)
}

#[derive(Debug, Clone)]
pub struct Training {
    pub model: FactorModel,
    /// Objective at initialization followed by the value after each sweep.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub jittered_solves: usize,
}

pub fn train(pref: &PreferenceMatrix, sppmi: &SppmiMatrix, cfg: &CoFactorConfig) -> Result<Training> {
    cfg.validate()?;
    let model = init_model(pref.n_rows(), pref.n_cols(), cfg.k, cfg.seed)?;
    train_from(model, pref, sppmi, cfg)
}

/// Run sweeps from a given starting point until the relative change of the
/// objective drops below the tolerance or `max_sweeps` is reached.
pub fn train_from(
    mut model: FactorModel,
    pref: &PreferenceMatrix,
    sppmi: &SppmiMatrix,
    cfg: &CoFactorConfig,
) -> Result<Training> {
    check_shapes(&model, pref, sppmi)?;
    let mut trace = vec![objective(&model, pref, sppmi, cfg)];
    let mut converged = false;
    let mut jittered_solves = 0;
    for sweep in 1..=cfg.max_sweeps {
        jittered_solves += als_sweep(&mut model, pref, sppmi, cfg)?;
        let value = objective(&model, pref, sppmi, cfg);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { sweep, value });
        }
        let prev = *trace.last().unwrap();
        trace.push(value);
        let rel = if prev > 0.0 { (prev - value).abs() / prev } else { 0.0 };
        if rel < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(Training {
        model,
        trace,
        converged,
        jittered_solves,
    })
}

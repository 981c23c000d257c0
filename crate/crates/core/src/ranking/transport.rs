//! Exact balanced transportation problem solver (u-v / MODI simplex).
//!
//! The basis is kept as a spanning tree over row and column nodes. Entering
//! and leaving cells follow Bland's rule (lowest index first), which rules
//! out cycling on the degenerate bases that uniform weights produce.

use std::collections::VecDeque;

use crate::error::{Error, Result};

const REDUCED_COST_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// Nonzero `(row, col, flow)` cells.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

/// Minimize `sum T_ij c_ij` subject to row sums `supply`, column sums
/// `demand` and `T >= 0`. Demand is rescaled to the supply total.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<TransportPlan> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::EmptyCloud);
    }
    if cost.len() != m || cost.iter().any(|r| r.len() != n) {
        return Err(Error::param("cost", "shape does not match marginals"));
    }
    if supply.iter().chain(demand).any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::param("weights", "must be finite and nonnegative"));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if total_s <= 0.0 || total_d <= 0.0 {
        return Err(Error::param("weights", "total mass must be positive"));
    }
    let scale = total_s / total_d;

    // northwest corner start: exactly m + n - 1 basic cells
    let mut flow = vec![vec![0.0; n]; m];
    let mut basic = vec![vec![false; n]; m];
    let mut s = supply.to_vec();
    let mut d: Vec<f64> = demand.iter().map(|x| x * scale).collect();
    let (mut i, mut j) = (0, 0);
    loop {
        let q = s[i].min(d[j]);
        flow[i][j] = q;
        basic[i][j] = true;
        if i == m - 1 && j == n - 1 {
            break;
        }
        let row_done = s[i] <= d[j];
        s[i] -= q;
        d[j] -= q;
        if j == n - 1 || (row_done && i < m - 1) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    for _ in 0..MAX_PIVOTS {
        potentials(&basic, cost, &mut u, &mut v);
        let entering = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| !basic[i][j] && cost[i][j] - u[i] - v[j] < -REDUCED_COST_EPS);
        let Some((ei, ej)) = entering else {
            let mut flows = Vec::new();
            let mut total = 0.0;
            for i in 0..m {
                for j in 0..n {
                    if basic[i][j] && flow[i][j] > 0.0 {
                        flows.push((i, j, flow[i][j]));
                        total += flow[i][j] * cost[i][j];
                    }
                }
            }
            return Ok(TransportPlan { flows, cost: total });
        };

        // tree path from column ej back to row ei; cells alternate -,+,-,...
        let path = tree_path(&basic, ej, ei);
        let minus = path.iter().step_by(2);
        let theta = minus.clone().map(|&(i, j)| flow[i][j]).fold(f64::INFINITY, f64::min);
        let leaving = *minus
            .filter(|&&(i, j)| flow[i][j] == theta)
            .min()
            .expect("cycle has a minus cell");
        for (k, &(i, j)) in path.iter().enumerate() {
            if k % 2 == 0 {
                flow[i][j] -= theta;
            } else {
                flow[i][j] += theta;
            }
        }
        flow[ei][ej] = theta;
        basic[ei][ej] = true;
        basic[leaving.0][leaving.1] = false;
        flow[leaving.0][leaving.1] = 0.0;
    }
    Err(Error::param("transport", "pivot limit exceeded"))
}

fn potentials(basic: &[Vec<bool>], cost: &[Vec<f64>], u: &mut [f64], v: &mut [f64]) {
    let (m, n) = (u.len(), v.len());
    let mut row_seen = vec![false; m];
    let mut col_seen = vec![false; n];
    let mut queue = VecDeque::new();
    u[0] = 0.0;
    row_seen[0] = true;
    queue.push_back((true, 0));
    while let Some((is_row, k)) = queue.pop_front() {
        if is_row {
            for j in 0..n {
                if basic[k][j] && !col_seen[j] {
                    v[j] = cost[k][j] - u[k];
                    col_seen[j] = true;
                    queue.push_back((false, j));
                }
            }
        } else {
            for i in 0..m {
                if basic[i][k] && !row_seen[i] {
                    u[i] = cost[i][k] - v[k];
                    row_seen[i] = true;
                    queue.push_back((true, i));
                }
            }
        }
    }
}

/// Cells on the unique basis-tree path from column node `col` to row node `row`.
fn tree_path(basic: &[Vec<bool>], col: usize, row: usize) -> Vec<(usize, usize)> {
    let (m, n) = (basic.len(), basic[0].len());
    // node ids: rows 0..m, columns m..m+n
    let mut parent = vec![usize::MAX; m + n];
    let start = m + col;
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == row {
            break;
        }
        if node < m {
            for j in 0..n {
                if basic[node][j] && parent[m + j] == usize::MAX {
                    parent[m + j] = node;
                    queue.push_back(m + j);
                }
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if basic[i][j] && parent[i] == usize::MAX {
                    parent[i] = node;
                    queue.push_back(i);
                }
            }
        }
    }
    let mut cells = Vec::new();
    let mut node = row;
    while node != start {
        let p = parent[node];
        let cell = if node < m { (node, p - m) } else { (p, node - m) };
        cells.push(cell);
        node = p;
    }
    cells.reverse();
    cells
}

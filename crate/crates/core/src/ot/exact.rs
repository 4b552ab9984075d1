//! Exact transport for tiny instances. Used as a reference by tests and the
//! acceptance suite, never by the pipeline itself.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView2};

use super::Coupling;
use crate::embed_io::check_probability;
use crate::error::{Error, Result};

/// Largest `rows * cols` accepted by [`exact_ot_oracle`].
pub const EXACT_MAX_CELLS: usize = 64;

/// Optimal plan and cost of the unregularized transport problem.
///
/// Square problems with uniform marginals are solved by enumerating every
/// permutation (the optimum is a vertex of the Birkhoff polytope); anything
/// else goes through the transportation simplex from a north-west corner
/// start, pivoting with Bland's rule.
pub fn exact_ot_oracle(
    a: &Array1<f64>,
    b: &Array1<f64>,
    cost: ArrayView2<f64>,
) -> Result<(Coupling, f64)> {
    let (k, l) = cost.dim();
    if (k, l) != (a.len(), b.len()) {
        return Err(Error::Dimension(format!(
            "cost is {:?} but marginals have lengths ({}, {})",
            cost.dim(),
            a.len(),
            b.len()
        )));
    }
    if k * l > EXACT_MAX_CELLS {
        return Err(Error::TooLarge {
            rows: k,
            cols: l,
            limit: EXACT_MAX_CELLS,
        });
    }
    check_probability(a, "row marginal")?;
    check_probability(b, "column marginal")?;

    let matrix = if k == l && is_uniform(a) && is_uniform(b) {
        best_permutation(cost).1
    } else {
        transportation_simplex(a, b, cost)?
    };
    let coupling = Coupling {
        matrix,
        row_marginal: a.clone(),
        col_marginal: b.clone(),
    };
    let total = coupling.transport_cost(cost);
    Ok((coupling, total))
}

fn is_uniform(v: &Array1<f64>) -> bool {
    let target = 1.0 / v.len() as f64;
    v.iter().all(|&x| (x - target).abs() <= 1e-12)
}

/// Minimum-cost permutation plan, scaled by `1/n`.
pub(crate) fn best_permutation(cost: ArrayView2<f64>) -> (Vec<usize>, Array2<f64>) {
    let n = cost.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
        if c < best_cost {
            best_cost = c;
            best.clone_from(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let mut plan = Array2::zeros((n, n));
    for (i, &j) in best.iter().enumerate() {
        plan[[i, j]] = 1.0 / n as f64;
    }
    (best, plan)
}

/// Every `n x n` permutation plan scaled by `1/n`, in lexicographic order.
#[cfg(test)]
pub(crate) fn permutation_plans(n: usize) -> impl Iterator<Item = Array2<f64>> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut plans = Vec::new();
    loop {
        let mut plan = Array2::zeros((n, n));
        for (i, &j) in perm.iter().enumerate() {
            plan[[i, j]] = 1.0 / n as f64;
        }
        plans.push(plan);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    plans.into_iter()
}

/// Advances to the next permutation in lexicographic order.
pub(crate) fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

fn transportation_simplex(a: &Array1<f64>, b: &Array1<f64>, cost: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (k, l) = cost.dim();
    let mut flow = Array2::<f64>::zeros((k, l));
    let mut basic = Array2::<bool>::from_elem((k, l), false);

    // North-west corner: exactly k + l - 1 basic cells, degenerate ones included.
    let (mut supply, mut demand) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = supply[i].min(demand[j]);
        flow[[i, j]] = x;
        basic[[i, j]] = true;
        supply[i] -= x;
        demand[j] -= x;
        if i == k - 1 && j == l - 1 {
            break;
        }
        if i == k - 1 {
            j += 1;
        } else if j == l - 1 || supply[i] <= demand[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let scale = cost.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
    for _ in 0..10_000 {
        let (u, v) = tree_potentials(&basic, cost);
        let entering = (0..k)
            .flat_map(|i| (0..l).map(move |j| (i, j)))
            .find(|&(i, j)| !basic[[i, j]] && cost[[i, j]] - u[i] - v[j] < -1e-12 * scale);
        let Some((ei, ej)) = entering else {
            return Ok(flow);
        };

        let path = tree_path(&basic, ei, ej);
        // Cells along the path alternate -, +, -, ... starting at the entering row.
        let minus: Vec<(usize, usize)> = path.iter().step_by(2).copied().collect();
        let plus: Vec<(usize, usize)> = path.iter().skip(1).step_by(2).copied().collect();
        let theta = minus.iter().map(|&c| flow[c]).fold(f64::INFINITY, f64::min);
        let leaving = minus
            .iter()
            .copied()
            .filter(|&c| flow[c] <= theta)
            .min()
            .expect("cycle has a minus cell");

        flow[[ei, ej]] += theta;
        for &c in &minus {
            flow[c] -= theta;
        }
        for &c in &plus {
            flow[c] += theta;
        }
        flow[leaving] = 0.0;
        basic[leaving] = false;
        basic[[ei, ej]] = true;
    }
    Err(Error::Numerical("transportation simplex did not terminate".into()))
}

/// Duals with `u[i] + v[j] = C[i][j]` on every basic cell, `u[0] = 0`.
fn tree_potentials(basic: &Array2<bool>, cost: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let (k, l) = basic.dim();
    let mut u = vec![f64::NAN; k];
    let mut v = vec![f64::NAN; l];
    u[0] = 0.0;
    let mut queue = VecDeque::from([Node::Row(0)]);
    while let Some(node) = queue.pop_front() {
        match node {
            Node::Row(i) => {
                for j in 0..l {
                    if basic[[i, j]] && v[j].is_nan() {
                        v[j] = cost[[i, j]] - u[i];
                        queue.push_back(Node::Col(j));
                    }
                }
            }
            Node::Col(j) => {
                for i in 0..k {
                    if basic[[i, j]] && u[i].is_nan() {
                        u[i] = cost[[i, j]] - v[j];
                        queue.push_back(Node::Row(i));
                    }
                }
            }
        }
    }
    (u, v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Node {
    Row(usize),
    Col(usize),
}

/// Basic cells on the tree path from row `start` to column `end`.
fn tree_path(basic: &Array2<bool>, start: usize, end: usize) -> Vec<(usize, usize)> {
    let (k, l) = basic.dim();
    let mut parent_row: Vec<Option<usize>> = vec![None; l];
    let mut parent_col: Vec<Option<usize>> = vec![None; k];
    let mut seen_row = vec![false; k];
    let mut seen_col = vec![false; l];
    seen_row[start] = true;
    let mut queue = VecDeque::from([Node::Row(start)]);
    while let Some(node) = queue.pop_front() {
        match node {
            Node::Row(i) => {
                for j in 0..l {
                    if basic[[i, j]] && !seen_col[j] {
                        seen_col[j] = true;
                        parent_row[j] = Some(i);
                        queue.push_back(Node::Col(j));
                    }
                }
            }
            Node::Col(j) => {
                for i in 0..k {
                    if basic[[i, j]] && !seen_row[i] {
                        seen_row[i] = true;
                        parent_col[i] = Some(j);
                        queue.push_back(Node::Row(i));
                    }
                }
            }
        }
    }
    // Walk back from the end column to the start row.
    let mut cells = Vec::new();
    let mut col = end;
    loop {
        let row = parent_row[col].expect("basis spans all columns");
        cells.push((row, col));
        if row == start {
            break;
        }
        col = parent_col[row].expect("basis spans all rows");
        cells.push((row, col));
    }
    cells.reverse();
    cells
}

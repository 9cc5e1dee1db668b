//! Optimal-transport domain adaptation.
//!
//! The transportation LP between `n_s` source and `n_t` target points is solved by
//! the transportation simplex. Bases are spanning trees of the bipartite
//! row/column graph with `n_s + n_t - 1` cells, which is the rank of the marginal
//! constraint matrix. Flows are kept in integer units of `1 / (n_s n_t)`, so row
//! sums are exactly `n_t` units and column sums exactly `n_s` units and
//! degenerate ties are detected exactly.

use nalgebra::{DMatrix, DVector};

use crate::datasets::TwoDomainDataset;
use crate::error::{Error, Result};
use crate::inference::LineParametrization;
use crate::interval::{quadratic_interval_around, TruncationRegion};

/// The map `y ↦ Θy` with `(Θy)[i n_t + j] = y_i - y_{n_s + j}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairDifferenceMap {
    n_s: usize,
    n_t: usize,
}

impl PairDifferenceMap {
    pub fn apply(&self, y: &DVector<f64>) -> Vec<f64> {
        assert_eq!(y.len(), self.n_s + self.n_t, "stacked vector length");
        let mut out = Vec::with_capacity(self.n_s * self.n_t);
        for i in 0..self.n_s {
            for j in 0..self.n_t {
                out.push(y[i] - y[self.n_s + j]);
            }
        }
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_s * self.n_t, self.n_s + self.n_t);
        for i in 0..self.n_s {
            for j in 0..self.n_t {
                m[(i * self.n_t + j, i)] = 1.0;
                m[(i * self.n_t + j, self.n_s + j)] = -1.0;
            }
        }
        m
    }
}

/// Marginal constraint matrix `H = (H_r; H_c)` over the row-major vectorized plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintMatrix {
    n_s: usize,
    n_t: usize,
}

impl ConstraintMatrix {
    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_s + self.n_t, self.n_s * self.n_t);
        for i in 0..self.n_s {
            for j in 0..self.n_t {
                m[(i, i * self.n_t + j)] = 1.0;
                m[(self.n_s + j, i * self.n_t + j)] = 1.0;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    n_s: usize,
    n_t: usize,
    /// `c'`: squared feature distances, row-major over `(i, j)`.
    pub feature_cost: Vec<f64>,
    pub pair_difference_map: PairDifferenceMap,
    pub constraint_matrix: ConstraintMatrix,
    /// `h`: `1/n_s` repeated `n_s` times, then `1/n_t` repeated `n_t` times.
    pub marginals: Vec<f64>,
}

pub fn build_problem(dataset: &TwoDomainDataset) -> TransportProblem {
    let xs = dataset.source_features();
    let xt = dataset.target_features();
    let (n_s, n_t) = (dataset.n_source(), dataset.n_target());
    let mut feature_cost = Vec::with_capacity(n_s * n_t);
    for i in 0..n_s {
        for j in 0..n_t {
            let d = (xs.row(i) - xt.row(j)).norm_squared();
            feature_cost.push(d);
        }
    }
    let mut marginals = vec![1.0 / n_s as f64; n_s];
    marginals.extend(std::iter::repeat_n(1.0 / n_t as f64, n_t));
    TransportProblem {
        n_s,
        n_t,
        feature_cost,
        pair_difference_map: PairDifferenceMap { n_s, n_t },
        constraint_matrix: ConstraintMatrix { n_s, n_t },
        marginals,
    }
}

impl TransportProblem {
    pub fn n_source(&self) -> usize {
        self.n_s
    }

    pub fn n_target(&self) -> usize {
        self.n_t
    }

    /// Total cost `c' + (Θy)∘(Θy)` for a stacked response `y`.
    pub fn cost_for(&self, response_stack: &DVector<f64>) -> Vec<f64> {
        self.pair_difference_map
            .apply(response_stack)
            .into_iter()
            .zip(&self.feature_cost)
            .map(|(d, c)| c + d * d)
            .collect()
    }
}

/// Optimal basic feasible solution of the transportation LP.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    n_s: usize,
    n_t: usize,
    /// Basic cells, ascending.
    basis: Vec<usize>,
    /// Flow on every cell in units of `1 / (n_s n_t)`; zero off the basis.
    units: Vec<i64>,
    objective: f64,
}

impl TransportSolution {
    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn plan(&self) -> DMatrix<f64> {
        let scale = (self.n_s * self.n_t) as f64;
        DMatrix::from_fn(self.n_s, self.n_t, |i, j| {
            self.units[i * self.n_t + j] as f64 / scale
        })
    }

    /// `Ω y = (n_s T̂ y^t; y^t)` for a stacked vector `y`.
    pub fn apply_omega(&self, y: &DVector<f64>) -> DVector<f64> {
        let (n_s, n_t) = (self.n_s, self.n_t);
        let mut out = DVector::zeros(n_s + n_t);
        for (cell, &w) in self.units.iter().enumerate() {
            if w != 0 {
                let (i, j) = (cell / n_t, cell % n_t);
                out[i] += w as f64 * y[n_s + j];
            }
        }
        for i in 0..n_s {
            // n_s * T_ij = units / n_t
            out[i] /= n_t as f64;
        }
        out.rows_mut(n_s, n_t).copy_from(&y.rows(n_s, n_t));
        out
    }

    /// `Ω X` for a stacked matrix with `n_s + n_t` rows.
    pub fn apply_omega_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for k in 0..x.ncols() {
            out.set_column(k, &self.apply_omega(&x.column(k).into_owned()));
        }
        out
    }

    /// Same basic cells and flows; used to detect whether two solves agree.
    pub fn same_vertex(&self, other: &Self) -> bool {
        self.basis == other.basis && self.units == other.units
    }

    pub fn same_plan(&self, other: &Self) -> bool {
        self.units == other.units
    }
}

/// Spanning-tree basis with flows, the working state of the simplex.
#[derive(Debug, Clone)]
struct TreeBasis {
    n_s: usize,
    n_t: usize,
    cells: Vec<usize>,
    is_basic: Vec<bool>,
    units: Vec<i64>,
}

impl TreeBasis {
    fn northwest_corner(n_s: usize, n_t: usize) -> Self {
        let mut supply = vec![n_t as i64; n_s];
        let mut demand = vec![n_s as i64; n_t];
        let mut cells = Vec::with_capacity(n_s + n_t - 1);
        let mut units = vec![0i64; n_s * n_t];
        let mut is_basic = vec![false; n_s * n_t];
        let (mut i, mut j) = (0, 0);
        loop {
            let amount = supply[i].min(demand[j]);
            let cell = i * n_t + j;
            cells.push(cell);
            is_basic[cell] = true;
            units[cell] = amount;
            supply[i] -= amount;
            demand[j] -= amount;
            if i == n_s - 1 && j == n_t - 1 {
                break;
            }
            if supply[i] == 0 && i < n_s - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            n_s,
            n_t,
            cells,
            is_basic,
            units,
        }
    }

    fn from_solution(sol: &TransportSolution) -> Self {
        let mut is_basic = vec![false; sol.n_s * sol.n_t];
        for &c in &sol.basis {
            is_basic[c] = true;
        }
        Self {
            n_s: sol.n_s,
            n_t: sol.n_t,
            cells: sol.basis.clone(),
            is_basic,
            units: sol.units.clone(),
        }
    }

    /// Adjacency over nodes `0..n_s` (rows) and `n_s..n_s+n_t` (columns).
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_s + self.n_t];
        for &cell in &self.cells {
            let (i, j) = (cell / self.n_t, cell % self.n_t);
            adj[i].push((self.n_s + j, cell));
            adj[self.n_s + j].push((i, cell));
        }
        adj
    }

    /// Potentials with `u_i + v_j = cost_ij` on basic cells and `u_0 = 0`.
    /// `None` when the basic cells do not form a spanning tree.
    fn potentials(&self, cost: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.cells.len() != self.n_s + self.n_t - 1 {
            return None;
        }
        let adj = self.adjacency();
        let n_nodes = self.n_s + self.n_t;
        let mut pot = vec![0.0; n_nodes];
        let mut seen = vec![false; n_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut visited = 1;
        while let Some(node) = stack.pop() {
            for &(next, cell) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    visited += 1;
                    pot[next] = cost[cell] - pot[node];
                    stack.push(next);
                }
            }
        }
        if visited != n_nodes {
            return None;
        }
        let v = pot.split_off(self.n_s);
        Some((pot, v))
    }

    /// Cells on the tree path from row node `row` to column node `n_s + col`.
    fn tree_path(&self, row: usize, col: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let n_nodes = self.n_s + self.n_t;
        let target = self.n_s + col;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n_nodes];
        let mut seen = vec![false; n_nodes];
        let mut queue = std::collections::VecDeque::from([row]);
        seen[row] = true;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, cell) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, cell));
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while node != row {
            let (prev, cell) = parent[node].expect("basis is a spanning tree");
            path.push(cell);
            node = prev;
        }
        path.reverse();
        path
    }

    fn pivot(&mut self, entering: usize) {
        let (row, col) = (entering / self.n_t, entering % self.n_t);
        let path = self.tree_path(row, col);
        // Along the path from the entering row, cells alternate -, +, -, ...
        let leaving = path
            .iter()
            .step_by(2)
            .copied()
            .min_by_key(|&c| (self.units[c], c))
            .expect("cycle has a decreasing cell");
        let theta = self.units[leaving];
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                self.units[cell] -= theta;
            } else {
                self.units[cell] += theta;
            }
        }
        self.units[entering] += theta;
        self.is_basic[leaving] = false;
        self.is_basic[entering] = true;
        let slot = self
            .cells
            .iter()
            .position(|&c| c == leaving)
            .expect("leaving cell is basic");
        self.cells[slot] = entering;
    }

    fn into_solution(mut self, cost: &[f64]) -> TransportSolution {
        self.cells.sort_unstable();
        let scale = (self.n_s * self.n_t) as f64;
        let objective = self
            .cells
            .iter()
            .map(|&c| self.units[c] as f64 * cost[c])
            .sum::<f64>()
            / scale;
        TransportSolution {
            n_s: self.n_s,
            n_t: self.n_t,
            basis: self.cells,
            units: self.units,
            objective,
        }
    }
}

fn optimality_tol(cost: &[f64]) -> f64 {
    1e-12 * cost.iter().fold(1.0f64, |m, c| m.max(c.abs()))
}

/// Transportation simplex on an explicit cost vector, optionally warm-started
/// from a previous solution of the same problem (any basis stays primal feasible
/// because only the cost changes).
pub fn solve_with_cost(
    problem: &TransportProblem,
    cost: &[f64],
    warm: Option<&TransportSolution>,
) -> TransportSolution {
    assert_eq!(cost.len(), problem.n_s * problem.n_t, "cost length");
    let mut basis = match warm {
        Some(sol) if sol.n_s == problem.n_s && sol.n_t == problem.n_t => TreeBasis::from_solution(sol),
        _ => TreeBasis::northwest_corner(problem.n_s, problem.n_t),
    };
    let tol = optimality_tol(cost);
    loop {
        let (u, v) = basis
            .potentials(cost)
            .expect("simplex maintains a spanning tree");
        // Bland's rule: lowest-index improving cell enters.
        let entering = (0..cost.len()).find(|&c| {
            !basis.is_basic[c] && cost[c] - u[c / problem.n_t] - v[c % problem.n_t] < -tol
        });
        match entering {
            Some(cell) => basis.pivot(cell),
            None => break,
        }
    }
    basis.into_solution(cost)
}

/// Solves the OT problem for the cost induced by `response_stack`.
pub fn solve_transport(problem: &TransportProblem, response_stack: &DVector<f64>) -> TransportSolution {
    let cost = problem.cost_for(response_stack);
    solve_with_cost(problem, &cost, None)
}

/// Reduced costs `c_ij - u_i - v_j` of every cell for `solution`'s basis; zero on basic cells.
pub fn reduced_costs(solution: &TransportSolution, cost: &[f64]) -> Result<Vec<f64>> {
    let basis = TreeBasis::from_solution(solution);
    let (u, v) = basis
        .potentials(cost)
        .ok_or_else(|| Error::Singular("transport basis is not a spanning tree".into()))?;
    let n_t = solution.n_t;
    Ok((0..cost.len())
        .map(|c| {
            if basis.is_basic[c] {
                0.0
            } else {
                cost[c] - u[c / n_t] - v[c % n_t]
            }
        })
        .collect())
}

/// Stacked transformed design `Ω (X^s; X^t)` and the transform `Ω` itself.
pub fn apply_transport(
    solution: &TransportSolution,
    dataset: &TwoDomainDataset,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n_s, n_t) = (solution.n_s, solution.n_t);
    let n = n_s + n_t;
    let mut omega = DMatrix::zeros(n, n);
    let plan = solution.plan();
    for i in 0..n_s {
        for j in 0..n_t {
            omega[(i, n_s + j)] = n_s as f64 * plan[(i, j)];
        }
    }
    for j in 0..n_t {
        omega[(n_s + j, n_s + j)] = 1.0;
    }
    let design = solution.apply_omega_matrix(&dataset.stacked_features());
    (design, omega)
}

/// Coefficients `(p, q, r)` of the reduced costs `p + q z + r z^2` of the
/// non-basic cells along the line `a + b z`.
pub fn reduced_cost_coefficients(
    problem: &TransportProblem,
    solution: &TransportSolution,
    line: &LineParametrization,
) -> Result<Vec<(f64, f64, f64)>> {
    let theta_a = problem.pair_difference_map.apply(line.anchor());
    let theta_b = problem.pair_difference_map.apply(line.direction());
    let p_tilde: Vec<f64> = problem
        .feature_cost
        .iter()
        .zip(&theta_a)
        .map(|(c, a)| c + a * a)
        .collect();
    let q_tilde: Vec<f64> = theta_a.iter().zip(&theta_b).map(|(a, b)| 2.0 * a * b).collect();
    let r_tilde: Vec<f64> = theta_b.iter().map(|b| b * b).collect();
    let p = reduced_costs(solution, &p_tilde)?;
    let q = reduced_costs(solution, &q_tilde)?;
    let r = reduced_costs(solution, &r_tilde)?;
    let basic: std::collections::HashSet<usize> = solution.basis.iter().copied().collect();
    Ok((0..p.len())
        .filter(|c| !basic.contains(c))
        .map(|c| (p[c], q[c], r[c]))
        .collect())
}

/// Maximal interval around `z_current` on which `solution`'s basis stays optimal,
/// without clipping to the sweep range.
pub(crate) fn basis_interval(
    problem: &TransportProblem,
    solution: &TransportSolution,
    line: &LineParametrization,
    z_current: f64,
) -> Result<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p, q, r) in reduced_cost_coefficients(problem, solution, line)? {
        let (l, h) = quadratic_interval_around(p, q, r, z_current);
        lo = lo.max(l);
        hi = hi.min(h);
    }
    Ok((lo.min(z_current), hi.max(z_current)))
}

/// Set of `z` in the sweep range for which the basis of `solution` stays optimal
/// for the cost at `a + b z`; the component containing `z_current`.
pub fn basis_region(
    problem: &TransportProblem,
    solution: &TransportSolution,
    line: &LineParametrization,
    z_current: f64,
) -> Result<TruncationRegion> {
    let (lo, hi) = basis_interval(problem, solution, line, z_current)?;
    let (z_min, z_max) = line.z_range();
    Ok(TruncationRegion::single(lo.max(z_min), hi.min(z_max)))
}

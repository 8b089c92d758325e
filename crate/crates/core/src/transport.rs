//! Exact discrete optimal transport.
//!
//! The transportation problem `min <C, P>` over couplings of two probability
//! vectors is solved with the transportation simplex method: a spanning-tree
//! basis is seeded by the northwest corner rule, node potentials are read off
//! the tree, and pivots use lowest-index (Bland) selection for both the
//! entering and the leaving cell so degenerate problems cannot cycle.
//! Every returned plan carries its dual potentials and is certified by a
//! duality-gap and reduced-cost check before it is handed out.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{validation, Error, Result};
use crate::model::DEFAULT_ENUMERATION_CAP;

/// Tolerance on marginal agreement and on the optimality certificate.
pub const TRANSPORT_TOLERANCE: f64 = 1e-9;

/// An optimal coupling together with its dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    mass: DMatrix<f64>,
    cost: f64,
    row_potential: Vec<f64>,
    col_potential: Vec<f64>,
    pivots: usize,
}

/// Primal/dual agreement of a solved plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub primal: f64,
    pub dual: f64,
    pub duality_gap: f64,
    /// `max(0, -min_ij (C_ij - u_i - v_j))`.
    pub dual_infeasibility: f64,
    pub marginal_error: f64,
}

impl TransportPlan {
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn row_potential(&self) -> &[f64] {
        &self.row_potential
    }

    pub fn col_potential(&self) -> &[f64] {
        &self.col_potential
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    pub fn certify(&self, cost: &DMatrix<f64>, left: &[f64], right: &[f64]) -> Certificate {
        let primal: f64 = self.mass.iter().zip(cost.iter()).map(|(x, c)| x * c).sum();
        let dual: f64 = left.iter().zip(&self.row_potential).map(|(a, u)| a * u).sum::<f64>()
            + right.iter().zip(&self.col_potential).map(|(b, v)| b * v).sum::<f64>();
        let mut worst = 0.0f64;
        for i in 0..cost.nrows() {
            for j in 0..cost.ncols() {
                let reduced = cost[(i, j)] - self.row_potential[i] - self.col_potential[j];
                worst = worst.max(-reduced);
            }
        }
        let mut marginal_error = 0.0f64;
        for (i, a) in left.iter().enumerate() {
            marginal_error = marginal_error.max((self.mass.row(i).sum() - a).abs());
        }
        for (j, b) in right.iter().enumerate() {
            marginal_error = marginal_error.max((self.mass.column(j).sum() - b).abs());
        }
        Certificate {
            primal,
            dual,
            duality_gap: (primal - dual).abs(),
            dual_infeasibility: worst,
            marginal_error,
        }
    }
}

fn check_marginal(p: &[f64], what: &str) -> Result<f64> {
    if p.is_empty() {
        return Err(validation(format!("{what} marginal is empty")));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(validation(format!("{what} marginal has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > TRANSPORT_TOLERANCE {
        return Err(validation(format!("{what} marginal sums to {s}, expected 1")));
    }
    Ok(s)
}

fn check_problem(cost: &DMatrix<f64>, left: &[f64], right: &[f64]) -> Result<()> {
    if cost.nrows() != left.len() || cost.ncols() != right.len() {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix {}x{} for marginals of length {} and {}",
            cost.nrows(),
            cost.ncols(),
            left.len(),
            right.len()
        )));
    }
    let sl = check_marginal(left, "left")?;
    let sr = check_marginal(right, "right")?;
    if (sl - sr).abs() > TRANSPORT_TOLERANCE {
        return Err(Error::MarginalMismatch { left: sl, right: sr });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(validation("cost matrix has non-finite entries"));
    }
    Ok(())
}

/// Optimal transport plan between `left` and `right` under `cost`.
pub fn solve_exact(cost: &DMatrix<f64>, left: &[f64], right: &[f64]) -> Result<TransportPlan> {
    solve_exact_capped(cost, left, right, DEFAULT_ENUMERATION_CAP)
}

pub fn solve_exact_capped(
    cost: &DMatrix<f64>,
    left: &[f64],
    right: &[f64],
    cap: u64,
) -> Result<TransportPlan> {
    check_problem(cost, left, right)?;
    let cells = (left.len() as u128) * (right.len() as u128);
    crate::model::check_cap(cells, cap)?;

    let mut solver = Simplex::northwest(cost, left, right);
    solver.run()?;
    let plan = solver.into_plan();

    let cert = plan.certify(cost, left, right);
    let scale = 1.0 + plan.cost.abs();
    if cert.duality_gap > TRANSPORT_TOLERANCE * scale
        || cert.dual_infeasibility > TRANSPORT_TOLERANCE * (1.0 + max_abs(cost))
        || cert.marginal_error > TRANSPORT_TOLERANCE
    {
        return Err(Error::Numeric(format!("transport plan failed certification: {cert:?}")));
    }
    Ok(plan)
}

fn max_abs(cost: &DMatrix<f64>) -> f64 {
    cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()))
}

const NONE: usize = usize::MAX;

struct Simplex<'a> {
    cost: &'a DMatrix<f64>,
    rows: usize,
    cols: usize,
    /// Basic cells as (row, col) with their flows.
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    /// Basic cell ids incident to each node; rows are `0..rows`, columns follow.
    adjacency: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
    pivots: usize,
}

impl<'a> Simplex<'a> {
    fn northwest(cost: &'a DMatrix<f64>, left: &[f64], right: &[f64]) -> Self {
        let (rows, cols) = (left.len(), right.len());
        let mut a = left.to_vec();
        let mut b = right.to_vec();
        let mut s = Self {
            cost,
            rows,
            cols,
            cells: Vec::with_capacity(rows + cols - 1),
            flow: Vec::with_capacity(rows + cols - 1),
            adjacency: vec![Vec::new(); rows + cols],
            u: vec![0.0; rows],
            v: vec![0.0; cols],
            pivots: 0,
        };
        let (mut i, mut j) = (0, 0);
        loop {
            if i == rows - 1 && j == cols - 1 {
                s.push_cell(i, j, (0.5 * (a[i] + b[j])).max(0.0));
                break;
            }
            if i == rows - 1 {
                let x = b[j].max(0.0);
                a[i] -= x;
                s.push_cell(i, j, x);
                j += 1;
            } else if j == cols - 1 || a[i] <= b[j] {
                let x = a[i].max(0.0);
                b[j] -= x;
                s.push_cell(i, j, x);
                i += 1;
            } else {
                let x = b[j].max(0.0);
                a[i] -= x;
                s.push_cell(i, j, x);
                j += 1;
            }
        }
        s
    }

    fn push_cell(&mut self, i: usize, j: usize, x: f64) {
        let id = self.cells.len();
        self.cells.push((i, j));
        self.flow.push(x);
        self.adjacency[i].push(id);
        self.adjacency[self.rows + j].push(id);
    }

    fn other_end(&self, cell: usize, node: usize) -> usize {
        let (i, j) = self.cells[cell];
        if node == i {
            self.rows + j
        } else {
            i
        }
    }

    fn update_potentials(&mut self) {
        let mut known = vec![false; self.rows + self.cols];
        let mut queue = VecDeque::from([0usize]);
        known[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &cell in &self.adjacency[node] {
                let next = self.other_end(cell, node);
                if known[next] {
                    continue;
                }
                let (i, j) = self.cells[cell];
                let c = self.cost[(i, j)];
                if next >= self.rows {
                    self.v[j] = c - self.u[i];
                } else {
                    self.u[i] = c - self.v[j];
                }
                known[next] = true;
                queue.push_back(next);
            }
        }
    }

    /// Lowest-index non-basic cell with negative reduced cost.
    fn entering(&self, tol: f64, in_basis: &[bool]) -> Option<(usize, usize)> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if in_basis[i * self.cols + j] {
                    continue;
                }
                if self.cost[(i, j)] - self.u[i] - self.v[j] < -tol {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Basic cells on the tree path from column node `j` to row node `i`, in order.
    fn tree_path(&self, i: usize, j: usize) -> Vec<usize> {
        let nodes = self.rows + self.cols;
        let mut parent_cell = vec![NONE; nodes];
        let mut seen = vec![false; nodes];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        let target = self.rows + j;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &cell in &self.adjacency[node] {
                let next = self.other_end(cell, node);
                if !seen[next] {
                    seen[next] = true;
                    parent_cell[next] = cell;
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while node != i {
            let cell = parent_cell[node];
            path.push(cell);
            node = self.other_end(cell, node);
        }
        path
    }

    fn run(&mut self) -> Result<()> {
        let tol = 1e-12 * (1.0 + max_abs(self.cost));
        let mut in_basis = vec![false; self.rows * self.cols];
        for &(i, j) in &self.cells {
            in_basis[i * self.cols + j] = true;
        }
        let limit = 50 * (self.rows * self.cols) + 1000;
        loop {
            self.update_potentials();
            let Some((ei, ej)) = self.entering(tol, &in_basis) else {
                return Ok(());
            };
            if self.pivots >= limit {
                return Err(Error::Numeric(format!("transport simplex exceeded {limit} pivots")));
            }
            self.pivots += 1;

            // Cycle: entering cell (+), then path edges from column ej back to row ei
            // alternating (-, +, -, ...).
            let path = self.tree_path(ei, ej);
            let mut theta = f64::INFINITY;
            for &cell in path.iter().step_by(2) {
                theta = theta.min(self.flow[cell]);
            }
            let leaving = path
                .iter()
                .step_by(2)
                .copied()
                .filter(|&cell| self.flow[cell] == theta)
                .min_by_key(|&cell| {
                    let (i, j) = self.cells[cell];
                    i * self.cols + j
                })
                .expect("cycle has a decreasing edge");
            for (k, &cell) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[cell] = (self.flow[cell] - theta).max(0.0);
                } else {
                    self.flow[cell] += theta;
                }
            }

            let (li, lj) = self.cells[leaving];
            in_basis[li * self.cols + lj] = false;
            in_basis[ei * self.cols + ej] = true;
            self.adjacency[li].retain(|&c| c != leaving);
            self.adjacency[self.rows + lj].retain(|&c| c != leaving);
            self.cells[leaving] = (ei, ej);
            self.flow[leaving] = theta;
            self.adjacency[ei].push(leaving);
            self.adjacency[self.rows + ej].push(leaving);
        }
    }

    fn into_plan(self) -> TransportPlan {
        let mut mass = DMatrix::zeros(self.rows, self.cols);
        let mut cost = 0.0;
        for (&(i, j), &x) in self.cells.iter().zip(&self.flow) {
            mass[(i, j)] += x;
            cost += x * self.cost[(i, j)];
        }
        TransportPlan {
            mass,
            cost,
            row_potential: self.u,
            col_potential: self.v,
            pivots: self.pivots,
        }
    }
}

/// Cost of the independent (product) coupling, `left^T C right`.
pub fn independent_product_cost(cost: &DMatrix<f64>, left: &[f64], right: &[f64]) -> Result<f64> {
    if cost.nrows() != left.len() || cost.ncols() != right.len() {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix {}x{} for marginals of length {} and {}",
            cost.nrows(),
            cost.ncols(),
            left.len(),
            right.len()
        )));
    }
    let mut total = 0.0;
    for (i, a) in left.iter().enumerate() {
        for (j, b) in right.iter().enumerate() {
            total += a * cost[(i, j)] * b;
        }
    }
    Ok(total)
}

/// Marginals with their common part (lattice infimum) removed and renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Disjointified {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// Mass left after removing the overlap, `1 - sum_i min(left_i, right_i)`.
    pub residual_mass: f64,
    /// Componentwise minimum of the inputs.
    pub common: Vec<f64>,
}

/// Removes the lattice infimum of two pmfs on a shared support.
pub fn disjointify(left: &[f64], right: &[f64]) -> Result<Disjointified> {
    if left.len() != right.len() {
        return Err(Error::DimensionMismatch(format!(
            "marginals of length {} and {} on a shared support",
            left.len(),
            right.len()
        )));
    }
    check_marginal(left, "left")?;
    check_marginal(right, "right")?;
    let common: Vec<f64> = left.iter().zip(right).map(|(a, b)| a.min(*b)).collect();
    let excess_left: Vec<f64> = left.iter().zip(&common).map(|(a, m)| a - m).collect();
    let excess_right: Vec<f64> = right.iter().zip(&common).map(|(b, m)| b - m).collect();
    let residual_mass: f64 = excess_left.iter().sum();
    if residual_mass <= 1e-12 {
        return Err(Error::ZeroResidualMass);
    }
    Ok(Disjointified {
        left: excess_left.iter().map(|x| x / residual_mass).collect(),
        right: excess_right.iter().map(|x| x / residual_mass).collect(),
        residual_mass,
        common,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn hamming(k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    /// Minimum cost over all vertices of the transportation polytope.
    ///
    /// Vertices are basic feasible solutions: spanning trees of the bipartite
    /// row/column graph whose unique flow is nonnegative.
    fn vertex_enumeration(cost: &DMatrix<f64>, left: &[f64], right: &[f64]) -> f64 {
        let (m, n) = (left.len(), right.len());
        let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let size = m + n - 1;
        let mut best = f64::INFINITY;
        let mut chosen = Vec::new();
        fn subsets(start: usize, total: usize, k: usize, chosen: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if chosen.len() == k {
                f(chosen);
                return;
            }
            for idx in start..total {
                chosen.push(idx);
                subsets(idx + 1, total, k, chosen, f);
                chosen.pop();
            }
        }
        subsets(0, cells.len(), size, &mut chosen, &mut |sel| {
            // Peel leaves: a node with one remaining incident cell fixes that flow.
            let mut a = left.to_vec();
            let mut b = right.to_vec();
            let mut remaining: Vec<(usize, usize)> = sel.iter().map(|&c| cells[c]).collect();
            let mut flow = 0.0;
            while !remaining.is_empty() {
                let mut progressed = false;
                for node in 0..(m + n) {
                    let incident: Vec<usize> = remaining
                        .iter()
                        .enumerate()
                        .filter(|(_, &(i, j))| if node < m { i == node } else { j == node - m })
                        .map(|(k, _)| k)
                        .collect();
                    if incident.len() == 1 {
                        let (i, j) = remaining.remove(incident[0]);
                        let x = if node < m { a[i] } else { b[j] };
                        a[i] -= x;
                        b[j] -= x;
                        if x < -1e-12 {
                            return;
                        }
                        flow += x * cost[(i, j)];
                        progressed = true;
                        break;
                    }
                }
                if !progressed {
                    return; // contains a cycle
                }
            }
            if a.iter().chain(&b).all(|r| r.abs() < 1e-9) {
                best = best.min(flow);
            }
        });
        best
    }

    #[test]
    fn identical_marginals_cost_zero() {
        let p = [0.2, 0.5, 0.3];
        let c = DMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64).abs() + if i == j { 0.0 } else { 0.5 });
        let plan = solve_exact(&c, &p, &p).unwrap();
        assert_abs_diff_eq!(plan.cost(), 0.0, epsilon = 1e-15);
        for i in 0..3 {
            assert_abs_diff_eq!(plan.mass()[(i, i)], p[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn two_point_hamming() {
        // Couplings of (0.3,0.7) and (0.5,0.5) are [[t, .3-t],[.5-t, .2+t]],
        // t in [0, .3]; off-diagonal mass .8 - 2t is minimal at t = .3.
        let brute = (0..=300)
            .map(|k| k as f64 / 1000.0)
            .map(|t| (0.3 - t) + (0.5 - t))
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(brute, 0.2, epsilon = 1e-12);
        let plan = solve_exact(&hamming(2), &[0.3, 0.7], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(plan.cost(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn forced_plan() {
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        let plan = solve_exact(&c, &[1.0], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(plan.cost(), 2.0, epsilon = 1e-15);
        assert_eq!(plan.mass(), &DMatrix::from_row_slice(1, 2, &[0.5, 0.5]));
    }

    #[test]
    fn validation_errors() {
        let c = hamming(2);
        assert!(matches!(solve_exact(&c, &[1.0], &[0.5, 0.5]), Err(Error::DimensionMismatch(_))));
        assert!(solve_exact(&c, &[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(solve_exact(&c, &[-0.5, 1.5], &[0.5, 0.5]).is_err());
        assert!(matches!(
            solve_exact_capped(&c, &[0.5, 0.5], &[0.5, 0.5], 3),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn product_cost_examples() {
        assert_abs_diff_eq!(
            independent_product_cost(&hamming(2), &[0.3, 0.7], &[0.5, 0.5]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(independent_product_cost(&hamming(2), &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            independent_product_cost(&hamming(2), &[0.5, 0.5], &[0.5, 0.5]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn disjointify_examples() {
        let d = disjointify(&[0.3, 0.7], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(d.residual_mass, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(d.left[0], 0.0);
        assert_abs_diff_eq!(d.left[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.right[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.right[1], 0.0);

        let d = disjointify(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.25, 0.75]).unwrap();
        assert_eq!(d.residual_mass, 1.0);
        assert_eq!(d.left, vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(d.right, vec![0.0, 0.0, 0.25, 0.75]);

        let d = disjointify(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!((d.left, d.right, d.residual_mass), (vec![1.0, 0.0], vec![0.0, 1.0], 1.0));

        assert_eq!(disjointify(&[0.4, 0.6], &[0.4, 0.6]).unwrap_err(), Error::ZeroResidualMass);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Many ties and zero-mass rows.
        let c = DMatrix::from_element(6, 6, 1.0);
        let p = [0.0, 0.25, 0.25, 0.0, 0.25, 0.25];
        let q = [0.25, 0.0, 0.25, 0.25, 0.0, 0.25];
        let plan = solve_exact(&c, &p, &q).unwrap();
        assert_abs_diff_eq!(plan.cost(), 1.0, epsilon = 1e-12);
    }

    fn pmf(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_vertex_enumeration(
            (m, n) in (1usize..=3, 1usize..=4).prop_filter("<=12 cells", |(m, n)| m * n <= 12),
            seed_costs in proptest::collection::vec(0.0f64..5.0, 12),
            raw_left in proptest::collection::vec(0.01f64..1.0, 3),
            raw_right in proptest::collection::vec(0.01f64..1.0, 4),
            zero_row in any::<bool>(),
        ) {
            let mut left = raw_left[..m].to_vec();
            if zero_row && m > 1 { left[0] = 0.0; }
            let left = pmf(left);
            let right = pmf(raw_right[..n].to_vec());
            let c = DMatrix::from_fn(m, n, |i, j| seed_costs[i * n + j].floor());
            let plan = solve_exact(&c, &left, &right).unwrap();
            let oracle = vertex_enumeration(&c, &left, &right);
            prop_assert!((plan.cost() - oracle).abs() <= 1e-9, "{} vs {}", plan.cost(), oracle);
            prop_assert!(plan.mass().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn symmetric_and_below_product_bound(
            pts in proptest::collection::vec(-2.0f64..2.0, 5),
            raw_left in proptest::collection::vec(0.01f64..1.0, 5),
            raw_right in proptest::collection::vec(0.01f64..1.0, 5),
        ) {
            let c = DMatrix::from_fn(5, 5, |i, j| (pts[i] - pts[j]).powi(2));
            let left = pmf(raw_left);
            let right = pmf(raw_right);
            let forward = solve_exact(&c, &left, &right).unwrap().cost();
            let backward = solve_exact(&c.transpose(), &right, &left).unwrap().cost();
            prop_assert!((forward - backward).abs() <= 1e-9);
            prop_assert!(forward <= independent_product_cost(&c, &left, &right).unwrap() + 1e-12);
        }

        #[test]
        fn hamming_cost_is_residual_mass(
            raw_left in proptest::collection::vec(0.01f64..1.0, 4),
            raw_right in proptest::collection::vec(0.01f64..1.0, 4),
        ) {
            let left = pmf(raw_left);
            let right = pmf(raw_right);
            let d = disjointify(&left, &right).unwrap();
            let plan = solve_exact(&hamming(4), &left, &right).unwrap();
            prop_assert!((plan.cost() - d.residual_mass).abs() <= 1e-9);
            for i in 0..4 {
                prop_assert!((d.residual_mass * d.left[i] + d.common[i] - left[i]).abs() <= 1e-15);
                prop_assert!(d.left[i] * d.right[i] == 0.0);
            }
        }
    }
}

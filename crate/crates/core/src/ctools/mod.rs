//! Generalized convexity on finite grids: c-transforms, c-concavity,
//! c-supergradients, averaged-cost supergradients, cross curvature and
//! convex-stability checks.

mod cost;
mod curvature;
pub(crate) mod fd;
mod stability;

pub use cost::{CostDerivatives, CostKind, CostSpec, Interval, TabulatedCost};
pub use curvature::{cross_curvature, cross_curvature_fd, mixed_derivative_sign};
pub use stability::{
    concave_combination_check, concave_combination_check_windows, convex_stability_check,
    mean_potential_hessian, CombinationEntry, CombinationReport, StabilityReport, StabilityVerdict,
    StabilityViolation, ViolationKind,
};

use crate::error::{validation, Error, Result};

/// Default tolerance for c-concavity and supergradient equalities.
pub const C_TOLERANCE: f64 = 1e-9;

/// Strictly increasing finite set of scalar points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(validation("grid must be nonempty"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(validation("grid points must be finite"));
        }
        if points.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(validation("grid points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `count` equally spaced points from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(validation("grid must be nonempty")),
            1 => Self::new(vec![lo]),
            _ => Self::new(
                (0..count)
                    .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    .collect(),
            ),
        }
    }

    /// `count` equally spaced points strictly inside a bounded interval.
    pub fn interior(domain: Interval, count: usize) -> Result<Self> {
        if !domain.lo.is_finite() || !domain.hi.is_finite() {
            return Err(validation("interior grid needs a bounded interval"));
        }
        let step = domain.width() / (count + 1) as f64;
        Self::new((1..=count).map(|i| domain.lo + step * i as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest gap between neighbours; infinite for a single point.
    pub fn min_spacing(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_within(&self, domain: &Interval) -> Result<()> {
        match self.points.iter().find(|p| !domain.contains(**p)) {
            Some(p) => Err(validation(format!(
                "grid point {p} outside ({}, {})",
                domain.lo, domain.hi
            ))),
            None => Ok(()),
        }
    }

    pub fn as_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| vec![*p]).collect()
    }
}

/// Outcome of a c-concavity test.
#[derive(Debug, Clone, PartialEq)]
pub struct CConcavity {
    pub concave: bool,
    /// `max (f^cc - f)` over the grid.
    pub max_gap: f64,
    /// Grid index of the largest gap when the test fails.
    pub witness: Option<usize>,
}

/// Cost matrix `c(x_i, y_j)` between a finite `x` set and a finite `y` set.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostTable {
    pub fn from_fn(rows: usize, cols: usize, mut c: impl FnMut(usize, usize) -> Result<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(validation("cost table needs nonempty x and y sets"));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(c(i, j)?);
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn scalar(cost: &CostSpec, xs: &[f64], ys: &[f64]) -> Result<Self> {
        Self::from_fn(xs.len(), ys.len(), |i, j| cost.eval_scalar(xs[i], ys[j]))
    }

    pub fn points(cost: &CostSpec, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Self> {
        Self::from_fn(xs.len(), ys.len(), |i, j| cost.eval(&xs[i], &ys[j]))
    }

    /// Table of the averaged window cost `c_n` over flattened windows.
    pub fn windows(cost: &CostSpec, xs: &[Vec<f64>], ys: &[Vec<f64>], dim: usize) -> Result<Self> {
        Self::from_fn(xs.len(), ys.len(), |i, j| cost.eval_window(&xs[i], &ys[j], dim))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Table with the roles of `x` and `y` exchanged.
    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        Self { rows: self.cols, cols: self.rows, values }
    }

    fn check_len(&self, f: &[f64], expected: usize, side: &str) -> Result<()> {
        if f.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "function has {} values, {side} set has {expected} points",
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(validation("function values must be finite"));
        }
        Ok(())
    }

    /// `f^c(y_j) = min_i c(x_i, y_j) - f(x_i)`.
    pub fn c_transform(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f, self.rows, "x")?;
        Ok((0..self.cols)
            .map(|j| {
                (0..self.rows)
                    .map(|i| self.get(i, j) - f[i])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect())
    }

    /// `g^c(x_i) = min_j c(x_i, y_j) - g(y_j)`.
    pub fn dual_transform(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g, self.cols, "y")?;
        Ok((0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.get(i, j) - g[j])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect())
    }

    pub fn double_transform(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.dual_transform(&self.c_transform(f)?)
    }

    /// Tests `f^cc = f` within `tol`; errors if `f^cc < f - tol` anywhere.
    pub fn c_concavity(&self, f: &[f64], tol: f64) -> Result<CConcavity> {
        let fcc = self.double_transform(f)?;
        let mut max_gap = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, (a, b)) in fcc.iter().zip(f).enumerate() {
            let gap = a - b;
            if gap < -tol {
                return Err(Error::Numeric(format!(
                    "f^cc < f at index {i} by {:e}",
                    -gap
                )));
            }
            if gap > max_gap {
                max_gap = gap;
                arg = i;
            }
        }
        let concave = max_gap <= tol;
        Ok(CConcavity { concave, max_gap, witness: (!concave).then_some(arg) })
    }

    /// Indices `j` with `c(x_i, y_j) - f(x_i) = min_z c(z, y_j) - f(z)` within `tol`.
    pub fn supergradient_set(&self, f: &[f64], i: usize, tol: f64) -> Result<Vec<usize>> {
        if i >= self.rows {
            return Err(validation(format!("x index {i} out of range")));
        }
        let fc = self.c_transform(f)?;
        Ok((0..self.cols)
            .filter(|&j| self.get(i, j) - f[i] <= fc[j] + tol)
            .collect())
    }
}

/// `f^c` on the `y` grid for `f` given on the `x` grid.
pub fn c_transform(f: &[f64], cost: &CostSpec, xs: &Grid, ys: &Grid) -> Result<Vec<f64>> {
    CostTable::scalar(cost, xs.points(), ys.points())?.c_transform(f)
}

/// `f^cc = f` test on the `x` grid with candidate `y` points.
pub fn is_c_concave(f: &[f64], cost: &CostSpec, xs: &Grid, ys: &[f64], tol: f64) -> Result<CConcavity> {
    CostTable::scalar(cost, xs.points(), ys)?.c_concavity(f, tol)
}

/// Candidate `y` points that are c-supergradients of `f` at `xs[i]`.
pub fn c_supergradient_set(f: &[f64], i: usize, cost: &CostSpec, xs: &Grid, ys: &[f64]) -> Result<Vec<f64>> {
    let table = CostTable::scalar(cost, xs.points(), ys)?;
    Ok(table
        .supergradient_set(f, i, C_TOLERANCE)?
        .into_iter()
        .map(|j| ys[j])
        .collect())
}

/// Solution `u0` of `grad_x c(x0, u0) = mean_k grad_x c(x0, y_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageSupergradient {
    pub point: Vec<f64>,
    /// Max-norm residual of the first-order condition.
    pub residual: f64,
}

/// Result of checking the defining infimum of a supergradient on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InfimumCheck {
    pub holds: bool,
    /// Largest amount by which some grid point undercuts `x0`.
    pub worst_gap: f64,
    pub witness: Option<Vec<f64>>,
}

/// c-supergradient at `x0` of `h(x) = (1/n) sum_k c(x, y_k)` from the first-order condition.
pub fn average_supergradient(cost: &CostSpec, x0: &[f64], ys: &[Vec<f64>]) -> Result<AverageSupergradient> {
    if ys.is_empty() {
        return Err(validation("average supergradient needs at least one y"));
    }
    if ys.iter().any(|y| y.len() != x0.len()) {
        return Err(Error::DimensionMismatch("all y points must match x0".into()));
    }
    let n = ys.len() as f64;
    if cost.is_squared() {
        for y in ys {
            cost.eval(x0, y)?;
        }
        let point: Vec<f64> = (0..x0.len())
            .map(|q| ys.iter().map(|y| y[q]).sum::<f64>() / n)
            .collect();
        return Ok(AverageSupergradient { point, residual: 0.0 });
    }
    let mut target = vec![0.0; x0.len()];
    for y in ys {
        for (t, g) in target.iter_mut().zip(cost.grad_x(x0, y)?) {
            *t += g / n;
        }
    }
    let point = if ys.len() == 1 {
        ys[0].clone()
    } else {
        cost.invert_grad_x(x0, &target)?
    };
    if x0.len() == 1 {
        let d = cost.derivatives(x0[0], point[0])?;
        if d.c_xy.abs() < cost::SINGULAR_TOLERANCE {
            return Err(Error::Singular(format!("c_xy vanishes at ({}, {})", x0[0], point[0])));
        }
    }
    let residual = cost
        .grad_x(x0, &point)?
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(AverageSupergradient { point, residual })
}

/// Checks `c(x0, u) - h(x0) <= c(z, u) - h(z) + tol` for every `z` in `grid`.
pub fn verify_supergradient_infimum(
    cost: &CostSpec,
    x0: &[f64],
    ys: &[Vec<f64>],
    u: &[f64],
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<InfimumCheck> {
    let n = ys.len() as f64;
    let h = |z: &[f64]| -> Result<f64> {
        let mut acc = 0.0;
        for y in ys {
            acc += cost.eval(z, y)?;
        }
        Ok(acc / n)
    };
    let base = cost.eval(x0, u)? - h(x0)?;
    let mut worst_gap = 0.0;
    let mut witness = None;
    for z in grid {
        let gap = base - (cost.eval(z, u)? - h(z)?);
        if gap > worst_gap {
            worst_gap = gap;
            witness = Some(z.clone());
        }
    }
    let holds = worst_gap <= tol;
    Ok(InfimumCheck { holds, worst_gap, witness: if holds { None } else { witness } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(v: &[f64]) -> Grid {
        Grid::new(v.to_vec()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![0.0, 0.0]).is_err());
        assert!(Grid::new(vec![1.0, 0.0]).is_err());
        let g = Grid::interior(Interval::new(0.0, 1.0).unwrap(), 3).unwrap();
        assert_eq!(g.points(), &[0.25, 0.5, 0.75]);
        assert!(g.check_within(&Interval::new(0.0, 1.0).unwrap()).is_ok());
        assert!(g.check_within(&Interval::new(0.3, 1.0).unwrap()).is_err());
    }

    #[test]
    fn transform_examples() {
        let g01 = grid(&[0.0, 1.0]);
        assert_eq!(c_transform(&[0.0, 0.0], &CostSpec::hamming(), &g01, &g01).unwrap(), vec![0.0, 0.0]);
        let fc = c_transform(&[0.0, 0.3], &CostSpec::squared_half(), &g01, &g01).unwrap();
        assert_relative_eq!(fc[0], 0.0);
        assert_relative_eq!(fc[1], -0.3);
        // f = c(., y0) has f^c(y0) = 0.
        let xs = grid(&[-1.0, 0.0, 0.5, 2.0]);
        let cost = CostSpec::p_power(3.0, None).unwrap();
        let f: Vec<f64> = xs.points().iter().map(|x| cost.eval_scalar(*x, 0.7).unwrap()).collect();
        let fc = c_transform(&f, &cost, &xs, &grid(&[0.7])).unwrap();
        assert!(fc[0].abs() < 1e-15);
    }

    #[test]
    fn concavity_examples() {
        let cost = CostSpec::squared_half();
        let xs = grid(&[-1.0, 0.0, 1.0]);
        let slice: Vec<f64> = xs.points().iter().map(|x| 0.5 * (x - 0.4) * (x - 0.4) - 2.0).collect();
        assert!(is_c_concave(&slice, &cost, &xs, &[-1.0, 0.0, 0.4, 1.0], C_TOLERANCE).unwrap().concave);
        let convex: Vec<f64> = xs.points().iter().map(|x| x * x).collect();
        let r = is_c_concave(&convex, &cost, &xs, xs.points(), C_TOLERANCE).unwrap();
        assert!(!r.concave);
        assert_eq!(r.witness, Some(1));
        let single = grid(&[0.3]);
        assert!(is_c_concave(&[7.0], &cost, &single, &[1.0], C_TOLERANCE).unwrap().concave);
    }

    fn brute_supergradients(f: &[f64], i: usize, cost: &CostSpec, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        ys.iter()
            .copied()
            .filter(|&y| {
                let lhs = cost.eval_scalar(xs[i], y).unwrap() - f[i];
                xs.iter()
                    .zip(f)
                    .all(|(z, fz)| lhs <= cost.eval_scalar(*z, y).unwrap() - fz + 1e-9)
            })
            .collect()
    }

    #[test]
    fn supergradient_examples() {
        let cost = CostSpec::squared_half();
        let xs = grid(&[-1.0, -0.5, 0.0, 0.5, 1.0]);
        let ys = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let y0 = 0.5;
        let slice: Vec<f64> = xs.points().iter().map(|x| cost.eval_scalar(*x, y0).unwrap()).collect();
        for i in 0..xs.len() {
            assert!(c_supergradient_set(&slice, i, &cost, &xs, &ys).unwrap().contains(&y0));
        }
        let quad: Vec<f64> = xs.points().iter().map(|x| 0.5 * x * x).collect();
        for i in 0..xs.len() {
            assert_eq!(
                c_supergradient_set(&quad, i, &cost, &xs, &ys).unwrap(),
                brute_supergradients(&quad, i, &cost, xs.points(), &ys)
            );
        }
        // Steep concave growth at the left endpoint: no equality point there.
        let xs = grid(&[0.0, 0.01, 0.25, 0.5, 1.0]);
        let root: Vec<f64> = xs.points().iter().map(|x| 10.0 * x.sqrt()).collect();
        let ys = [-1.0, 0.0, 0.5, 1.0, 2.0];
        assert!(c_supergradient_set(&root, 0, &cost, &xs, &ys).unwrap().is_empty());
        assert!(brute_supergradients(&root, 0, &cost, xs.points(), &ys).is_empty());
    }

    #[test]
    fn average_supergradient_examples() {
        let ys = vec![vec![0.0], vec![1.0], vec![2.0]];
        for x0 in [-3.0, 0.0, 0.7] {
            for cost in [CostSpec::squared(), CostSpec::squared_half()] {
                assert_eq!(average_supergradient(&cost, &[x0], &ys).unwrap().point, vec![1.0]);
            }
        }
        let p3 = CostSpec::p_power(3.0, None).unwrap();
        assert_eq!(average_supergradient(&p3, &[0.1], &[vec![-0.4]]).unwrap().point, vec![-0.4]);

        let e1 = Interval::new(0.0, 1.0).unwrap();
        let e2 = Interval::new(f64::NEG_INFINITY, 0.0).unwrap();
        let p4 = CostSpec::p_power(4.0, Some((e1, e2))).unwrap();
        let r = average_supergradient(&p4, &[0.5], &[vec![-1.0], vec![-2.0]]).unwrap();
        let h = 0.5 * (1.5f64.powi(3) + 2.5f64.powi(3));
        assert_relative_eq!(r.point[0], 0.5 - h.cbrt(), max_relative = 1e-14);
        assert!(r.residual <= 1e-10);
        let grid = Grid::interior(e1, 40).unwrap().as_points();
        let check = verify_supergradient_infimum(&p4, &[0.5], &[vec![-1.0], vec![-2.0]], &r.point, &grid, 1e-9).unwrap();
        assert!(check.holds);
        assert!(average_supergradient(&p4, &[0.5], &[]).is_err());
    }

    proptest! {
        #[test]
        fn double_transform_dominates(
            f in prop::collection::vec(-2.0f64..2.0, 2..12),
            shift in -1.0f64..1.0,
        ) {
            let xs: Vec<f64> = (0..f.len()).map(|i| i as f64 * 0.3 + shift).collect();
            let ys: Vec<f64> = (0..7).map(|i| i as f64 * 0.5 - 1.5).collect();
            for cost in [CostSpec::squared(), CostSpec::hamming(), CostSpec::p_power(3.0, None).unwrap()] {
                let t = CostTable::scalar(&cost, &xs, &ys).unwrap();
                let fcc = t.double_transform(&f).unwrap();
                for (a, b) in fcc.iter().zip(&f) {
                    prop_assert!(*a >= *b - 1e-9);
                }
                // f^c is c-concave for the swapped roles.
                let fc = t.c_transform(&f).unwrap();
                prop_assert!(t.transpose().c_concavity(&fc, 1e-9).unwrap().concave);
            }
        }

        #[test]
        fn supergradients_everywhere_imply_concavity(
            offsets in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let cost = CostSpec::p_power(3.0, None).unwrap();
            let xs: Vec<f64> = (0..9).map(|i| i as f64 * 0.25 - 1.0).collect();
            let ys = [-0.8, 0.1, 0.9];
            let f: Vec<f64> = xs
                .iter()
                .map(|x| {
                    ys.iter()
                        .zip(&offsets)
                        .map(|(y, a)| cost.eval_scalar(*x, *y).unwrap() - a)
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let t = CostTable::scalar(&cost, &xs, &ys).unwrap();
            for i in 0..xs.len() {
                prop_assert!(!t.supergradient_set(&f, i, 1e-9).unwrap().is_empty());
            }
            prop_assert!(t.c_concavity(&f, 1e-9).unwrap().concave);
        }
    }
}

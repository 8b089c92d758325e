use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cost::{CostKind, CostSpec};
use super::curvature::{cross_curvature, mixed_derivative_sign};
use super::{average_supergradient, CostTable, Grid, C_TOLERANCE};
use crate::error::{validation, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityVerdict {
    /// No violation found and the cross curvature is nonnegative on the probes.
    Stable,
    Violated,
    /// No violation found although the cross curvature is negative somewhere.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// The averaged slice `h(x) = mean_k c(x, y_k)` failed `h^cc = h`.
    CConcavity,
    /// `u -> c(x, eta_x(u)) - c(z, eta_x(u))` failed midpoint convexity.
    MidpointConvexity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityViolation {
    pub kind: ViolationKind,
    pub trial: usize,
    pub ys: Vec<f64>,
    pub x: f64,
    pub z: Option<f64>,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub n: usize,
    pub trials: usize,
    pub violations: Vec<StabilityViolation>,
    /// Smallest scalar cross curvature over the probe pairs.
    pub min_sigma: f64,
    pub verdict: StabilityVerdict,
}

const MAX_SIGMA_PROBES: usize = 25;

fn strided(points: &[f64], max: usize) -> Vec<f64> {
    let stride = points.len().div_ceil(max).max(1);
    points.iter().step_by(stride).copied().collect()
}

/// Randomized search for failures of convex stability of index `n`.
///
/// Each trial draws `n` points from `ys`, forms `h(x) = mean_k c(x, y_k)` on
/// `xs` and tests its c-concavity against `ys` together with the
/// first-order supergradients of `h`. A second test checks midpoint convexity
/// of `u -> c(x, eta_x(u)) - c(z, eta_x(u))` on the image `u = c_x(x, ys)`.
pub fn convex_stability_check(
    cost: &CostSpec,
    xs: &Grid,
    ys: &Grid,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if matches!(cost.kind(), CostKind::Hamming) {
        return Err(Error::CostDomain("convex stability needs a differentiable cost".into()));
    }
    if n == 0 || trials == 0 {
        return Err(validation("convex stability check needs n >= 1 and trials >= 1"));
    }
    if let Some((ex, ey)) = cost.domains() {
        xs.check_within(&ex)?;
        ys.check_within(&ey)?;
    }
    mixed_derivative_sign(cost, xs.points(), ys.points())?;

    let mut min_sigma = f64::INFINITY;
    for x in strided(xs.points(), MAX_SIGMA_PROBES) {
        for y in strided(ys.points(), MAX_SIGMA_PROBES) {
            min_sigma = min_sigma.min(cross_curvature(cost, &[x], &[y], &[1.0], &[1.0])?);
        }
    }

    let per_trial: Vec<Vec<StabilityViolation>> = (0..trials)
        .into_par_iter()
        .map(|trial| run_trial(cost, xs, ys, n, trial, seed))
        .collect::<Result<_>>()?;
    let violations: Vec<StabilityViolation> = per_trial.into_iter().flatten().collect();

    let verdict = if !violations.is_empty() {
        StabilityVerdict::Violated
    } else if min_sigma >= -C_TOLERANCE {
        StabilityVerdict::Stable
    } else {
        StabilityVerdict::Inconclusive
    };
    Ok(StabilityReport { n, trials, violations, min_sigma, verdict })
}

fn run_trial(
    cost: &CostSpec,
    xs: &Grid,
    ys: &Grid,
    n: usize,
    trial: usize,
    seed: u64,
) -> Result<Vec<StabilityViolation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let tuple: Vec<f64> = (0..n).map(|_| ys.points()[rng.gen_range(0..ys.len())]).collect();
    let tuple_pts: Vec<Vec<f64>> = tuple.iter().map(|y| vec![*y]).collect();
    let mut out = Vec::new();

    let mut h = Vec::with_capacity(xs.len());
    let mut candidates = ys.points().to_vec();
    for &x in xs.points() {
        let mut acc = 0.0;
        for y in &tuple {
            acc += cost.eval_scalar(x, *y)?;
        }
        h.push(acc / n as f64);
        candidates.push(average_supergradient(cost, &[x], &tuple_pts)?.point[0]);
    }
    let scale = 1.0 + h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let table = CostTable::scalar(cost, xs.points(), &candidates)?;
    let verdict = table.c_concavity(&h, C_TOLERANCE * scale)?;
    if let Some(i) = verdict.witness {
        out.push(StabilityViolation {
            kind: ViolationKind::CConcavity,
            trial,
            ys: tuple.clone(),
            x: xs.points()[i],
            z: None,
            gap: verdict.max_gap,
        });
    }

    if xs.len() >= 2 && ys.len() >= 2 {
        let i = rng.gen_range(0..xs.len());
        let mut k = rng.gen_range(0..xs.len() - 1);
        if k >= i {
            k += 1;
        }
        let (x, z) = (xs.points()[i], xs.points()[k]);
        if let Some(v) = midpoint_violation(cost, x, z, ys.points())? {
            out.push(StabilityViolation {
                kind: ViolationKind::MidpointConvexity,
                trial,
                ys: tuple,
                x,
                z: Some(z),
                gap: v,
            });
        }
    }
    Ok(out)
}

/// Largest midpoint-convexity defect of `u -> c(x, eta_x(u)) - c(z, eta_x(u))`.
fn midpoint_violation(cost: &CostSpec, x: f64, z: f64, ys: &[f64]) -> Result<Option<f64>> {
    let phi_y = |y: f64| -> Result<f64> { Ok(cost.eval_scalar(x, y)? - cost.eval_scalar(z, y)?) };
    let mut nodes = Vec::with_capacity(ys.len());
    for &y in ys {
        nodes.push((cost.grad_x(&[x], &[y])?[0], phi_y(y)?));
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let len = nodes.len();
    let mut gaps = vec![1, len / 4, len / 2, len - 1];
    gaps.retain(|g| *g >= 1);
    gaps.sort_unstable();
    gaps.dedup();
    let scale = 1.0 + nodes.iter().fold(0.0f64, |m, v| m.max(v.1.abs()));
    let mut worst: Option<f64> = None;
    for g in gaps {
        for a in 0..len - g {
            let (ua, pa) = nodes[a];
            let (ub, pb) = nodes[a + g];
            let mid = 0.5 * (ua + ub);
            let y = cost.invert_grad_x(&[x], &[mid])?[0];
            let defect = phi_y(y)? - 0.5 * (pa + pb);
            if defect > C_TOLERANCE * scale && worst.is_none_or(|w| defect > w) {
                worst = Some(defect);
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationEntry {
    pub lambda: f64,
    pub concave: bool,
    pub max_gap: f64,
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationReport {
    pub entries: Vec<CombinationEntry>,
    pub all_pass: bool,
}

/// Tests c-concavity of `(1 - lambda) f + lambda g` for scalar grid functions.
pub fn concave_combination_check(
    f: &[f64],
    g: &[f64],
    cost: &CostSpec,
    xs: &Grid,
    ys: &[f64],
    lambdas: &[f64],
    tol: f64,
) -> Result<CombinationReport> {
    let xs = xs.as_points();
    let ys: Vec<Vec<f64>> = ys.iter().map(|y| vec![*y]).collect();
    concave_combination_check_windows(f, g, cost, 1, &xs, &ys, lambdas, tol)
}

fn spread(set: &[usize]) -> Vec<usize> {
    match set.len() {
        0..=3 => set.to_vec(),
        l => vec![set[0], set[l / 2], set[l - 1]],
    }
}

/// Window version under the averaged cost `c_n`; points are flattened windows
/// of symbols of dimension `dim`.
///
/// Candidate `y` points are `ys` plus, at each `x`, the point whose `c_n`
/// gradient is the `lambda`-mixture of gradients at supergradients of `f` and `g`.
#[allow(clippy::too_many_arguments)]
pub fn concave_combination_check_windows(
    f: &[f64],
    g: &[f64],
    cost: &CostSpec,
    dim: usize,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    lambdas: &[f64],
    tol: f64,
) -> Result<CombinationReport> {
    if f.len() != xs.len() || g.len() != xs.len() {
        return Err(Error::DimensionMismatch("f and g must have one value per x point".into()));
    }
    if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(validation("mixture weights must lie in [0, 1]"));
    }
    let table = CostTable::windows(cost, xs, ys, dim)?;
    for (name, h) in [("f", f), ("g", g)] {
        let c = table.c_concavity(h, tol)?;
        if !c.concave {
            return Err(validation(format!(
                "{name} is not c-concave on the grid (gap {:e})",
                c.max_gap
            )));
        }
    }
    let mut sf = Vec::with_capacity(xs.len());
    let mut sg = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        sf.push(spread(&table.supergradient_set(f, i, tol)?));
        sg.push(spread(&table.supergradient_set(g, i, tol)?));
    }

    let mut entries = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mix: Vec<f64> = f.iter().zip(g).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        let mut candidates = ys.to_vec();
        if cost.is_differentiable() {
            for (i, x) in xs.iter().enumerate() {
                for &a in &sf[i] {
                    for &b in &sg[i] {
                        if let Some(y) = mixed_preimage(cost, dim, x, &ys[a], &ys[b], lambda) {
                            candidates.push(y);
                        }
                    }
                }
            }
        }
        let t = CostTable::windows(cost, xs, &candidates, dim)?;
        let c = t.c_concavity(&mix, tol)?;
        entries.push(CombinationEntry {
            lambda,
            concave: c.concave,
            max_gap: c.max_gap,
            witness: c.witness.map(|i| xs[i].clone()),
        });
    }
    let all_pass = entries.iter().all(|e| e.concave);
    Ok(CombinationReport { entries, all_pass })
}

/// Per-symbol point whose `c_x` is the mixture of `c_x` at `a` and `b`.
fn mixed_preimage(cost: &CostSpec, dim: usize, x: &[f64], a: &[f64], b: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let mut y = Vec::with_capacity(x.len());
    for ((xk, ak), bk) in x.chunks(dim).zip(a.chunks(dim)).zip(b.chunks(dim)) {
        let ga = cost.grad_x(xk, ak).ok()?;
        let gb = cost.grad_x(xk, bk).ok()?;
        let target: Vec<f64> = ga.iter().zip(&gb).map(|(p, q)| (1.0 - lambda) * p + lambda * q).collect();
        y.extend(cost.invert_grad_x(xk, &target).ok()?);
    }
    Some(y)
}

/// Hessian in `x` of `c_n(x, y) - A(mean x)` for the scalar p-power cost:
/// `delta_ij (p - 1) |x_i - y_i|^(p-2) / n - A''(mean x) / n^2`.
pub fn mean_potential_hessian(p: f64, a_second: f64, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::DimensionMismatch("x and y windows must have equal positive length".into()));
    }
    let n = x.len() as f64;
    let mut h = DMatrix::from_element(x.len(), x.len(), -a_second / (n * n));
    for i in 0..x.len() {
        h[(i, i)] += (p - 1.0) * (x[i] - y[i]).abs().powf(p - 2.0) / n;
    }
    Ok(h)
}

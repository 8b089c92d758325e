//! Window transport costs between stationary laws: the sequence of `rho_n`,
//! its bounds and superadditivity diagnostics, and the lattice-field variant.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ctools::CostSpec;
use crate::equivariant::{coupling_cost_exact_capped, SlidingBlockCode};
use crate::error::{validation, Error, Result};
use crate::model::{
    check_cap, check_sites, pushforward_window_marginal_capped, state_count, FieldSpec, JointWindowDistribution,
    SourceSpec, WindowDistribution, DEFAULT_ENUMERATION_CAP, MERGE_TOLERANCE,
};
use crate::transport::{independent_product_cost, solve_exact_capped, TransportPlan};

/// Tolerance of the superadditivity check.
pub const SUPERADDITIVITY_TOLERANCE: f64 = 1e-8;

/// A stationary law on `Z` with computable window marginals.
pub trait StationaryLaw: Sync {
    fn window_marginal(&self, n: usize, cap: u64) -> Result<WindowDistribution>;
}

impl StationaryLaw for SourceSpec {
    fn window_marginal(&self, n: usize, cap: u64) -> Result<WindowDistribution> {
        self.window_marginal_capped(n, cap)
    }
}

/// Law of `S(X)` for a source `X` and sliding block code `S`.
#[derive(Debug, Clone, Copy)]
pub struct CodedSource<'a> {
    pub source: &'a SourceSpec,
    pub code: &'a SlidingBlockCode,
}

impl<'a> CodedSource<'a> {
    pub fn new(source: &'a SourceSpec, code: &'a SlidingBlockCode) -> Self {
        Self { source, code }
    }
}

impl StationaryLaw for CodedSource<'_> {
    fn window_marginal(&self, n: usize, cap: u64) -> Result<WindowDistribution> {
        pushforward_window_marginal_capped(self.source, self.code, n, cap)
    }
}

/// Cost matrix of `c_n(x, y) = (1/n) sum_t c(x_t, y_t)` between two supports.
pub fn window_cost_matrix(left: &WindowDistribution, right: &WindowDistribution, cost: &CostSpec) -> Result<DMatrix<f64>> {
    if left.window_length() != right.window_length() || left.dim() != right.dim() {
        return Err(Error::DimensionMismatch(format!(
            "windows of length {}x{} and {}x{}",
            left.window_length(),
            left.dim(),
            right.window_length(),
            right.dim()
        )));
    }
    let mut c = DMatrix::zeros(left.len(), right.len());
    for (i, x) in left.support().iter().enumerate() {
        for (j, y) in right.support().iter().enumerate() {
            c[(i, j)] = cost.eval_window(x, y, left.dim())?;
        }
    }
    Ok(c)
}

/// Optimal transport between two window marginals.
#[derive(Debug, Clone)]
pub struct RhoN {
    pub n: usize,
    pub value: f64,
    pub plan: TransportPlan,
    pub left: WindowDistribution,
    pub right: WindowDistribution,
}

impl RhoN {
    /// The optimal plan as a joint law on pairs of windows.
    pub fn joint(&self) -> Result<JointWindowDistribution> {
        JointWindowDistribution::new(self.left.clone(), self.right.clone(), self.plan.mass().clone())
    }
}

fn transport_between(left: WindowDistribution, right: WindowDistribution, cost: &CostSpec, n: usize, cap: u64) -> Result<RhoN> {
    let c = window_cost_matrix(&left, &right, cost)?;
    let plan = solve_exact_capped(&c, left.mass(), right.mass(), cap)?;
    Ok(RhoN { n, value: plan.cost(), plan, left, right })
}

pub fn rho_n(p: &dyn StationaryLaw, q: &dyn StationaryLaw, cost: &CostSpec, n: usize) -> Result<RhoN> {
    rho_n_capped(p, q, cost, n, DEFAULT_ENUMERATION_CAP)
}

pub fn rho_n_capped(p: &dyn StationaryLaw, q: &dyn StationaryLaw, cost: &CostSpec, n: usize, cap: u64) -> Result<RhoN> {
    if n == 0 {
        return Err(validation("window length must be >= 1"));
    }
    transport_between(p.window_marginal(n, cap)?, q.window_marginal(n, cap)?, cost, n, cap)
}

/// A pair `(m, n)` breaking `(m + n) rho_{m+n} >= m rho_m + n rho_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperadditivityViolation {
    pub m: usize,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoReport {
    pub n_values: Vec<usize>,
    pub rho_n: Vec<f64>,
    /// `rho_1`.
    pub lower: f64,
    /// Cost of the independent coupling of the one-site marginals.
    pub upper: f64,
    pub superadditivity_violations: Vec<SuperadditivityViolation>,
    /// Largest computed window length; the supremum is not extrapolated.
    pub truncated_at: usize,
    /// `max_n rho_n` over the computed windows.
    pub rho_bar_lower: f64,
}

impl RhoReport {
    /// Every `rho_n <= upper + tol` and `rho_1 <= max_n rho_n`.
    pub fn within_bounds(&self, tol: f64) -> bool {
        self.rho_n.iter().all(|r| *r <= self.upper + tol) && self.lower <= self.rho_bar_lower + tol
    }
}

pub fn rho_sequence(p: &dyn StationaryLaw, q: &dyn StationaryLaw, cost: &CostSpec, n_max: usize) -> Result<RhoReport> {
    rho_sequence_capped(p, q, cost, n_max, DEFAULT_ENUMERATION_CAP)
}

pub fn rho_sequence_capped(
    p: &dyn StationaryLaw,
    q: &dyn StationaryLaw,
    cost: &CostSpec,
    n_max: usize,
    cap: u64,
) -> Result<RhoReport> {
    if n_max == 0 {
        return Err(validation("n_max must be >= 1"));
    }
    let results: Vec<RhoN> = (1..=n_max)
        .into_par_iter()
        .map(|n| rho_n_capped(p, q, cost, n, cap))
        .collect::<Result<_>>()?;
    let rho: Vec<f64> = results.iter().map(|r| r.value).collect();
    let first = &results[0];
    let c1 = window_cost_matrix(&first.left, &first.right, cost)?;
    let upper = independent_product_cost(&c1, first.left.mass(), first.right.mass())?;
    Ok(RhoReport {
        n_values: (1..=n_max).collect(),
        lower: rho[0],
        upper,
        superadditivity_violations: superadditivity_violations(&rho, SUPERADDITIVITY_TOLERANCE),
        truncated_at: n_max,
        rho_bar_lower: rho.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rho_n: rho,
    })
}

/// Pairs `(m, n)` with `m <= n`, `m + n <= len`, violating superadditivity
/// of `k -> k rho[k-1]` beyond `tol`.
pub fn superadditivity_violations(rho: &[f64], tol: f64) -> Vec<SuperadditivityViolation> {
    let mut out = Vec::new();
    for m in 1..=rho.len() {
        for n in m..=rho.len() {
            if m + n > rho.len() {
                break;
            }
            let lhs = (m + n) as f64 * rho[m + n - 1];
            let rhs = m as f64 * rho[m - 1] + n as f64 * rho[n - 1];
            if lhs < rhs - tol {
                out.push(SuperadditivityViolation { m, n, lhs, rhs });
            }
        }
    }
    out
}

/// `rho_n` for a source and its coded image against the exact coupling cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSandwich {
    pub coupling_cost: f64,
    pub report: RhoReport,
    /// `coupling_cost - rho_n` for each computed `n`.
    pub gaps: Vec<f64>,
}

impl CouplingSandwich {
    /// Whether `rho_n <= coupling_cost + tol` for all computed `n`.
    pub fn holds(&self, tol: f64) -> bool {
        self.gaps.iter().all(|g| *g >= -tol)
    }
}

pub fn coupling_sandwich(
    source: &SourceSpec,
    code: &SlidingBlockCode,
    cost: &CostSpec,
    n_max: usize,
    cap: u64,
) -> Result<CouplingSandwich> {
    let coupling_cost = coupling_cost_exact_capped(source, code, cost, cap)?;
    let image = CodedSource::new(source, code);
    let report = rho_sequence_capped(source, &image, cost, n_max, cap)?;
    let gaps = report.rho_n.iter().map(|r| coupling_cost - r).collect();
    Ok(CouplingSandwich { coupling_cost, report, gaps })
}

/// The box `{-n, ..., n}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FolnerBox {
    pub d: usize,
    pub n: usize,
}

impl FolnerBox {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 {
            return Err(validation("lattice dimension must be >= 1"));
        }
        Ok(Self { d, n })
    }

    /// `(2n + 1)^d`.
    pub fn size(&self) -> u128 {
        state_count(2 * self.n + 1, self.d)
    }

    /// Sites in lexicographic order.
    pub fn sites(&self) -> Vec<Vec<i64>> {
        let side = 2 * self.n + 1;
        crate::equivariant::box_sites(&vec![side; self.d])
            .into_iter()
            .map(|s| s.into_iter().map(|v| v - self.n as i64).collect())
            .collect()
    }

    /// `|F ∩ (h + F)|` counted exactly.
    pub fn overlap(&self, h: &[i64]) -> Result<u128> {
        if h.len() != self.d {
            return Err(Error::DimensionMismatch(format!("shift has dimension {}, box has {}", h.len(), self.d)));
        }
        let side = (2 * self.n + 1) as u128;
        Ok(h.iter()
            .map(|v| side.saturating_sub(v.unsigned_abs() as u128))
            .product())
    }
}

/// `|F_n ∩ (h + F_n)| / |F_n|`.
pub fn folner_ratio(bx: &FolnerBox, h: &[i64]) -> Result<f64> {
    Ok(bx.overlap(h)? as f64 / bx.size() as f64)
}

/// A random field on `Z^d` with computable marginals on finite site sets.
pub trait FieldLaw: Sync {
    fn sites_marginal(&self, sites: &[Vec<i64>], cap: u64) -> Result<WindowDistribution>;
}

impl FieldLaw for FieldSpec {
    fn sites_marginal(&self, sites: &[Vec<i64>], cap: u64) -> Result<WindowDistribution> {
        FieldSpec::sites_marginal(self, sites, cap)
    }
}

/// Law of a lattice code applied to an i.i.d. field.
#[derive(Debug, Clone, Copy)]
pub struct CodedField<'a> {
    pub field: &'a FieldSpec,
    pub code: &'a SlidingBlockCode,
}

impl<'a> CodedField<'a> {
    pub fn new(field: &'a FieldSpec, code: &'a SlidingBlockCode) -> Self {
        Self { field, code }
    }
}

impl FieldLaw for CodedField<'_> {
    fn sites_marginal(&self, sites: &[Vec<i64>], cap: u64) -> Result<WindowDistribution> {
        let d = self.field.lattice_dim();
        check_sites(sites, d)?;
        if self.code.lattice_dim() != d || self.code.alphabet() != self.field.alphabet() {
            return Err(validation("code does not match the field"));
        }
        // Every site read by the code at some site of `sites`.
        let mut reads: Vec<Vec<i64>> = Vec::new();
        let mut index: Vec<Vec<usize>> = Vec::with_capacity(sites.len());
        for s in sites {
            let mut row = Vec::with_capacity(self.code.offsets().len());
            for o in self.code.offsets() {
                let t: Vec<i64> = s.iter().zip(o).map(|(a, b)| a + b).collect();
                let pos = match reads.iter().position(|r| *r == t) {
                    Some(p) => p,
                    None => {
                        reads.push(t);
                        reads.len() - 1
                    }
                };
                row.push(pos);
            }
            index.push(row);
        }
        check_cap(state_count(self.field.alphabet().len(), reads.len()), cap)?;
        let m = self.code.output_dim();
        let mut ids = Vec::with_capacity(self.code.offsets().len());
        let atoms = self
            .field
            .configuration_probabilities(reads.len(), cap)?
            .into_iter()
            .map(|(cfg, p)| {
                let mut flat = Vec::with_capacity(sites.len() * m);
                for row in &index {
                    ids.clear();
                    ids.extend(row.iter().map(|&i| cfg[i]));
                    flat.extend_from_slice(self.code.output(&ids));
                }
                (flat, p)
            })
            .collect();
        WindowDistribution::from_atoms(sites.len(), m, atoms, MERGE_TOLERANCE)
    }
}

/// Optimal transport between the marginals of two fields on a finite site
/// set under the site-averaged cost.
pub fn rho_field(p: &dyn FieldLaw, q: &dyn FieldLaw, cost: &CostSpec, sites: &[Vec<i64>]) -> Result<RhoN> {
    rho_field_capped(p, q, cost, sites, DEFAULT_ENUMERATION_CAP)
}

pub fn rho_field_capped(p: &dyn FieldLaw, q: &dyn FieldLaw, cost: &CostSpec, sites: &[Vec<i64>], cap: u64) -> Result<RhoN> {
    let left = p.sites_marginal(sites, cap)?;
    let right = q.sites_marginal(sites, cap)?;
    transport_between(left, right, cost, sites.len(), cap)
}

//! Stationary finite-alphabet sources and their exact window marginals.
//!
//! A source is either i.i.d. or a stationary Markov chain over a finite
//! alphabet of points in `R^m`. Window marginals are computed by explicit
//! enumeration of all positive-probability windows, guarded by an
//! enumeration cap that fails loudly instead of truncating.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::equivariant::SlidingBlockCode;
use crate::error::{validation, Error, Result};

/// Default cap on the number of enumerated states.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Tolerance used when merging numerically equal pushforward atoms.
pub const MERGE_TOLERANCE: f64 = 1e-12;

const PMF_TOLERANCE: f64 = 1e-12;
const STATIONARITY_TOLERANCE: f64 = 1e-10;

/// A point of `R^m`.
pub type Point = Vec<f64>;

/// Ordered finite set of distinct points in `R^m`; the index is the symbol id.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    symbols: Vec<Point>,
    dim: usize,
}

impl Alphabet {
    pub fn new(symbols: Vec<Point>) -> Result<Self> {
        let first = symbols
            .first()
            .ok_or_else(|| validation("alphabet must be nonempty"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(validation("alphabet symbols must have dimension >= 1"));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "symbol {i} has dimension {}, expected {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(validation(format!("symbol {i} is not finite")));
            }
            if symbols[..i].iter().any(|t| t == s) {
                return Err(validation(format!("symbol {i} duplicates an earlier symbol")));
            }
        }
        Ok(Self { symbols, dim })
    }

    /// Alphabet of scalar symbols.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn symbol(&self, id: usize) -> &[f64] {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[Point] {
        &self.symbols
    }
}

/// Law of a stationary source.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Iid { pmf: Vec<f64> },
    Markov { transition: DMatrix<f64>, initial: Vec<f64> },
}

/// A stationary finite-alphabet process.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    alphabet: Alphabet,
    kind: SourceKind,
}

fn check_pmf(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(validation(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PMF_TOLERANCE {
        return Err(validation(format!("{what} sums to {s}, expected 1")));
    }
    Ok(())
}

fn check_stochastic(transition: &DMatrix<f64>) -> Result<()> {
    if transition.nrows() != transition.ncols() || transition.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "transition matrix must be square and nonempty, got {}x{}",
            transition.nrows(),
            transition.ncols()
        )));
    }
    for i in 0..transition.nrows() {
        let row: Vec<f64> = transition.row(i).iter().copied().collect();
        check_pmf(&row, &format!("transition row {i}"))?;
    }
    Ok(())
}

fn strongly_connected(transition: &DMatrix<f64>) -> bool {
    let k = transition.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..k {
                let w = if forward { transition[(i, j)] } else { transition[(j, i)] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Unique stationary distribution of an irreducible row-stochastic matrix.
pub fn stationary_distribution(transition: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_stochastic(transition)?;
    if !strongly_connected(transition) {
        return Err(Error::NoUniqueStationary("chain is reducible".into()));
    }
    let k = transition.nrows();
    // pi (P - I) = 0 with the last balance equation replaced by sum(pi) = 1.
    let mut a = transition.transpose() - DMatrix::<f64>::identity(k, k);
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    rhs[k - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoUniqueStationary("balance equations are singular".into()))?;
    let mut pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let residual = stationarity_residual(&pi, transition);
    if residual > STATIONARITY_TOLERANCE {
        return Err(Error::Numeric(format!(
            "stationary residual {residual:e} exceeds {STATIONARITY_TOLERANCE:e}"
        )));
    }
    Ok(pi)
}

/// `max_j |(pi P)_j - pi_j|`.
pub fn stationarity_residual(pi: &[f64], transition: &DMatrix<f64>) -> f64 {
    (0..transition.ncols())
        .map(|j| {
            let pj: f64 = (0..transition.nrows()).map(|i| pi[i] * transition[(i, j)]).sum();
            (pj - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// `base^exp` as a state count, saturating far above any sensible cap.
pub(crate) fn state_count(base: usize, exp: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base as u128);
    }
    acc
}

pub(crate) fn check_cap(requested: u128, cap: u64) -> Result<()> {
    if requested > cap as u128 {
        Err(Error::EnumerationTooLarge { requested, cap })
    } else {
        Ok(())
    }
}

impl SourceSpec {
    pub fn iid(alphabet: Alphabet, pmf: Vec<f64>) -> Result<Self> {
        if pmf.len() != alphabet.len() {
            return Err(Error::DimensionMismatch(format!(
                "pmf has {} entries for {} symbols",
                pmf.len(),
                alphabet.len()
            )));
        }
        check_pmf(&pmf, "pmf")?;
        Ok(Self { alphabet, kind: SourceKind::Iid { pmf } })
    }

    /// Markov source started from its unique stationary distribution.
    pub fn markov(alphabet: Alphabet, transition: DMatrix<f64>) -> Result<Self> {
        let initial = stationary_distribution(&transition)?;
        Self::markov_with_initial(alphabet, transition, initial)
    }

    /// Markov source with an explicitly supplied stationary initial law.
    pub fn markov_with_initial(
        alphabet: Alphabet,
        transition: DMatrix<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        check_stochastic(&transition)?;
        if transition.nrows() != alphabet.len() || initial.len() != alphabet.len() {
            return Err(Error::DimensionMismatch(format!(
                "transition {}x{} / initial {} for {} symbols",
                transition.nrows(),
                transition.ncols(),
                initial.len(),
                alphabet.len()
            )));
        }
        check_pmf(&initial, "initial distribution")?;
        let residual = stationarity_residual(&initial, &transition);
        if residual > STATIONARITY_TOLERANCE {
            return Err(validation(format!(
                "initial distribution is not stationary (residual {residual:e})"
            )));
        }
        Ok(Self { alphabet, kind: SourceKind::Markov { transition, initial } })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    /// True for i.i.d. sources, including Markov chains with identical rows.
    pub fn is_iid(&self) -> bool {
        match &self.kind {
            SourceKind::Iid { .. } => true,
            SourceKind::Markov { transition, .. } => (1..transition.nrows()).all(|i| {
                (0..transition.ncols())
                    .all(|j| (transition[(i, j)] - transition[(0, j)]).abs() <= PMF_TOLERANCE)
            }),
        }
    }

    /// One-dimensional marginal law.
    pub fn initial(&self) -> &[f64] {
        match &self.kind {
            SourceKind::Iid { pmf } => pmf,
            SourceKind::Markov { initial, .. } => initial,
        }
    }

    pub fn transition_prob(&self, from: usize, to: usize) -> f64 {
        match &self.kind {
            SourceKind::Iid { pmf } => pmf[to],
            SourceKind::Markov { transition, .. } => transition[(from, to)],
        }
    }

    /// All positive-probability windows of symbol ids of length `len`, in
    /// lexicographic order, with their exact probabilities.
    pub fn window_probabilities(&self, len: usize, cap: u64) -> Result<Vec<(Vec<usize>, f64)>> {
        if len == 0 {
            return Err(validation("window length must be >= 1"));
        }
        let k = self.alphabet.len();
        check_cap(state_count(k, len), cap)?;
        let mut out = Vec::new();
        let mut stack: Vec<(Vec<usize>, f64)> = (0..k)
            .rev()
            .filter(|&s| self.initial()[s] > 0.0)
            .map(|s| (vec![s], self.initial()[s]))
            .collect();
        while let Some((w, p)) = stack.pop() {
            if w.len() == len {
                out.push((w, p));
                continue;
            }
            let last = *w.last().expect("nonempty window");
            for s in (0..k).rev() {
                let q = p * self.transition_prob(last, s);
                if q > 0.0 {
                    let mut next = w.clone();
                    next.push(s);
                    stack.push((next, q));
                }
            }
        }
        Ok(out)
    }

    pub fn window_marginal(&self, n: usize) -> Result<WindowDistribution> {
        self.window_marginal_capped(n, DEFAULT_ENUMERATION_CAP)
    }

    pub fn window_marginal_capped(&self, n: usize, cap: u64) -> Result<WindowDistribution> {
        let windows = self.window_probabilities(n, cap)?;
        let m = self.alphabet.dim();
        let mut support = Vec::with_capacity(windows.len());
        let mut mass = Vec::with_capacity(windows.len());
        for (w, p) in windows {
            let mut flat = Vec::with_capacity(n * m);
            for &s in &w {
                flat.extend_from_slice(self.alphabet.symbol(s));
            }
            support.push(flat);
            mass.push(p);
        }
        WindowDistribution::new(n, m, support, mass)
    }

    /// Symbol ids of a path drawn from the stationary law.
    pub fn sample_path(&self, length: usize, seed: u64) -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = WeightedIndex::new(self.initial())
            .map_err(|e| Error::Numeric(e.to_string()))?
            .sample(&mut rng);
        self.continue_path(start, length, &mut rng)
    }

    /// Symbol ids of a path started deterministically from `start`.
    pub fn sample_path_from(&self, start: usize, length: usize, seed: u64) -> Result<Vec<usize>> {
        if start >= self.alphabet.len() {
            return Err(validation(format!("start state {start} out of range")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.continue_path(start, length, &mut rng)
    }

    pub(crate) fn sampler(&self) -> Result<PathSampler> {
        let k = self.alphabet.len();
        let rows = match &self.kind {
            SourceKind::Iid { pmf } => vec![WeightedIndex::new(pmf)],
            SourceKind::Markov { transition, .. } => (0..k)
                .map(|i| WeightedIndex::new(transition.row(i).iter().copied()))
                .collect(),
        };
        let rows = rows
            .into_iter()
            .collect::<core::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Numeric(e.to_string()))?;
        let initial =
            WeightedIndex::new(self.initial()).map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(PathSampler { initial, rows })
    }

    fn continue_path(&self, start: usize, length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        if length == 0 {
            return Err(validation("path length must be >= 1"));
        }
        let sampler = self.sampler()?;
        let mut path = Vec::with_capacity(length);
        path.push(start);
        while path.len() < length {
            let last = *path.last().expect("nonempty path");
            path.push(sampler.step(last, rng));
        }
        Ok(path)
    }
}

/// Precomputed categorical samplers for a source.
pub(crate) struct PathSampler {
    initial: WeightedIndex<f64>,
    rows: Vec<WeightedIndex<f64>>,
}

impl PathSampler {
    pub(crate) fn step<R: rand::Rng>(&self, from: usize, rng: &mut R) -> usize {
        let row = if self.rows.len() == 1 { &self.rows[0] } else { &self.rows[from] };
        row.sample(rng)
    }

    /// A window of length `len` drawn from the stationary law.
    pub(crate) fn window<R: rand::Rng>(&self, len: usize, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        out.push(self.initial.sample(rng));
        while out.len() < len {
            let last = *out.last().expect("nonempty window");
            out.push(self.step(last, rng));
        }
    }
}

/// Probability mass function on windows of `window_length` points in `R^dim`.
///
/// Each support entry is a flattened window of `window_length * dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDistribution {
    window_length: usize,
    dim: usize,
    support: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

impl WindowDistribution {
    pub fn new(window_length: usize, dim: usize, support: Vec<Vec<f64>>, mass: Vec<f64>) -> Result<Self> {
        if window_length == 0 || dim == 0 {
            return Err(validation("window length and dimension must be >= 1"));
        }
        if support.len() != mass.len() || support.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} support points vs {} masses",
                support.len(),
                mass.len()
            )));
        }
        if let Some(bad) = support.iter().find(|s| s.len() != window_length * dim) {
            return Err(Error::DimensionMismatch(format!(
                "support entry of length {} in a {}x{} window distribution",
                bad.len(),
                window_length,
                dim
            )));
        }
        check_pmf(&mass, "window mass")?;
        let mut order: Vec<usize> = (0..support.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(&support[a], &support[b]));
        if order.windows(2).any(|w| support[w[0]] == support[w[1]]) {
            return Err(validation("window support entries must be distinct"));
        }
        Ok(Self { window_length, dim, support, mass })
    }

    /// Builds a distribution by merging atoms whose coordinates agree within `tol`.
    pub fn from_atoms(window_length: usize, dim: usize, atoms: Vec<(Vec<f64>, f64)>, tol: f64) -> Result<Self> {
        let (support, mass) = merge_atoms(atoms, tol);
        Self::new(window_length, dim, support, mass)
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Coordinate `t` of support window `i`.
    pub fn point(&self, i: usize, t: usize) -> &[f64] {
        &self.support[i][t * self.dim..(t + 1) * self.dim]
    }

    /// Law of the first `window_length - 1` coordinates.
    pub fn drop_last(&self) -> Result<Self> {
        self.project(0)
    }

    /// Law of the last `window_length - 1` coordinates.
    pub fn drop_first(&self) -> Result<Self> {
        self.project(1)
    }

    fn project(&self, offset: usize) -> Result<Self> {
        if self.window_length < 2 {
            return Err(validation("cannot marginalize a window of length 1"));
        }
        let n = self.window_length - 1;
        let atoms = self
            .support
            .iter()
            .zip(&self.mass)
            .map(|(s, &p)| (s[offset * self.dim..(offset + n) * self.dim].to_vec(), p))
            .collect();
        Self::from_atoms(n, self.dim, atoms, 0.0)
    }

    /// Mass assigned to the atom within `tol` of `point`, or zero.
    pub fn mass_at(&self, point: &[f64], tol: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.mass)
            .filter(|(s, _)| s.iter().zip(point).all(|(a, b)| (a - b).abs() <= tol))
            .map(|(_, &p)| p)
            .sum()
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Sorts atoms lexicographically and merges those within `tol` in every coordinate.
pub(crate) fn merge_atoms(mut atoms: Vec<(Vec<f64>, f64)>, tol: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    atoms.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    let mut support: Vec<Vec<f64>> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    for (point, p) in atoms {
        // Representatives are sorted by first coordinate; only those whose first
        // coordinate is within tol can match.
        let mut hit = None;
        for idx in (0..support.len()).rev() {
            let rep = &support[idx];
            if rep[0] < point[0] - tol {
                break;
            }
            if rep.iter().zip(&point).all(|(a, b)| (a - b).abs() <= tol) {
                hit = Some(idx);
                break;
            }
        }
        match hit {
            Some(idx) => mass[idx] += p,
            None => {
                support.push(point);
                mass.push(p);
            }
        }
    }
    (support, mass)
}

/// Exact law of `(S_0(X), ..., S_{n-1}(X))` for a sliding block code `S`.
pub fn pushforward_window_marginal(
    source: &SourceSpec,
    code: &SlidingBlockCode,
    n: usize,
) -> Result<WindowDistribution> {
    pushforward_window_marginal_capped(source, code, n, DEFAULT_ENUMERATION_CAP)
}

pub fn pushforward_window_marginal_capped(
    source: &SourceSpec,
    code: &SlidingBlockCode,
    n: usize,
    cap: u64,
) -> Result<WindowDistribution> {
    if n == 0 {
        return Err(validation("window length must be >= 1"));
    }
    code.check_alphabet(source.alphabet())?;
    let r = code.radius();
    let span = 2 * r + 1;
    let windows = source.window_probabilities(n + 2 * r, cap)?;
    let m = code.output_dim();
    let atoms = windows
        .into_iter()
        .map(|(w, p)| {
            let mut flat = Vec::with_capacity(n * m);
            for t in 0..n {
                flat.extend_from_slice(code.output(&w[t..t + span]));
            }
            (flat, p)
        })
        .collect();
    WindowDistribution::from_atoms(n, m, atoms, MERGE_TOLERANCE)
}

/// Random field on `Z^d` whose sites are i.i.d. with the one-site law of a source.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    source: SourceSpec,
    lattice_dim: usize,
}

impl FieldSpec {
    pub fn new(source: SourceSpec, lattice_dim: usize) -> Result<Self> {
        if lattice_dim == 0 {
            return Err(validation("lattice dimension must be >= 1"));
        }
        Ok(Self { source, lattice_dim })
    }

    pub fn source(&self) -> &SourceSpec {
        &self.source
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.source.alphabet()
    }

    pub fn lattice_dim(&self) -> usize {
        self.lattice_dim
    }

    /// One-site law; only i.i.d. fields have exactly computable box marginals.
    pub fn site_pmf(&self) -> Result<&[f64]> {
        if !self.source.is_iid() {
            return Err(Error::UnsupportedField(
                "only i.i.d. site distributions are supported".into(),
            ));
        }
        Ok(self.source.initial())
    }

    /// All positive-probability configurations of `count` sites.
    pub fn configuration_probabilities(&self, count: usize, cap: u64) -> Result<Vec<(Vec<usize>, f64)>> {
        let pmf = self.site_pmf()?;
        if count == 0 {
            return Err(validation("site set must be nonempty"));
        }
        check_cap(state_count(pmf.len(), count), cap)?;
        let mut out = vec![(Vec::with_capacity(count), 1.0)];
        for _ in 0..count {
            let mut next = Vec::with_capacity(out.len() * pmf.len());
            for (w, p) in out {
                for (s, q) in pmf.iter().enumerate() {
                    if *q > 0.0 {
                        let mut v: Vec<usize> = w.clone();
                        v.push(s);
                        next.push((v, p * q));
                    }
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Exact law of the symbols at `sites`, in the given site order.
    pub fn sites_marginal(&self, sites: &[Vec<i64>], cap: u64) -> Result<WindowDistribution> {
        check_sites(sites, self.lattice_dim)?;
        let m = self.alphabet().dim();
        let configs = self.configuration_probabilities(sites.len(), cap)?;
        let mut support = Vec::with_capacity(configs.len());
        let mut mass = Vec::with_capacity(configs.len());
        for (w, p) in configs {
            support.push(w.iter().flat_map(|&s| self.alphabet().symbol(s).to_vec()).collect());
            mass.push(p);
        }
        WindowDistribution::new(sites.len(), m, support, mass)
    }
}

pub(crate) fn check_sites(sites: &[Vec<i64>], d: usize) -> Result<()> {
    if sites.is_empty() {
        return Err(validation("site set must be nonempty"));
    }
    if sites.iter().any(|s| s.len() != d) {
        return Err(Error::DimensionMismatch(format!("sites must lie in Z^{d}")));
    }
    if sites.iter().enumerate().any(|(i, s)| sites[..i].contains(s)) {
        return Err(validation("sites must be distinct"));
    }
    Ok(())
}

/// Joint law on pairs of windows; rows and columns reproduce the two marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct JointWindowDistribution {
    left: WindowDistribution,
    right: WindowDistribution,
    mass: DMatrix<f64>,
}

impl JointWindowDistribution {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(left: WindowDistribution, right: WindowDistribution, mass: DMatrix<f64>) -> Result<Self> {
        if mass.nrows() != left.len() || mass.ncols() != right.len() {
            return Err(Error::DimensionMismatch(format!(
                "joint mass {}x{} for marginals of size {} and {}",
                mass.nrows(),
                mass.ncols(),
                left.len(),
                right.len()
            )));
        }
        if mass.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(validation("joint mass must be nonnegative"));
        }
        for i in 0..mass.nrows() {
            let s = mass.row(i).sum();
            if (s - left.mass()[i]).abs() > Self::TOLERANCE {
                return Err(validation(format!("row {i} sums to {s}, marginal {}", left.mass()[i])));
            }
        }
        for j in 0..mass.ncols() {
            let s = mass.column(j).sum();
            if (s - right.mass()[j]).abs() > Self::TOLERANCE {
                return Err(validation(format!("column {j} sums to {s}, marginal {}", right.mass()[j])));
            }
        }
        Ok(Self { left, right, mass })
    }

    pub fn left(&self) -> &WindowDistribution {
        &self.left
    }

    pub fn right(&self) -> &WindowDistribution {
        &self.right
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn coin() -> SourceSpec {
        SourceSpec::iid(Alphabet::scalar(&[-1.0, 1.0]).unwrap(), vec![0.5, 0.5]).unwrap()
    }

    fn sticky() -> SourceSpec {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        SourceSpec::markov(Alphabet::scalar(&[-1.0, 1.0]).unwrap(), p).unwrap()
    }

    #[test]
    fn stationary_examples() {
        let one = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert_eq!(stationary_distribution(&one).unwrap(), vec![1.0]);

        let flip = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pi = stationary_distribution(&flip).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pi[1], 0.5, epsilon = 1e-15);

        // Balance: 0.1 pi0 = 0.2 pi1.
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let pi = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-14);
        assert!(stationarity_residual(&pi, &p) <= 1e-10);
    }

    #[test]
    fn reducible_and_non_stochastic_rejected() {
        let reducible = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            stationary_distribution(&reducible),
            Err(Error::NoUniqueStationary(_))
        ));
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.5, 0.5]);
        assert!(matches!(stationary_distribution(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn alphabet_validation() {
        assert!(Alphabet::new(vec![]).is_err());
        assert!(Alphabet::scalar(&[1.0, 1.0]).is_err());
        assert!(Alphabet::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn iid_window_marginal_is_product() {
        let w = coin().window_marginal(2).unwrap();
        assert_eq!(w.len(), 4);
        assert!(w.mass().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn markov_window_marginals() {
        let src = sticky();
        let w1 = src.window_marginal(1).unwrap();
        assert_abs_diff_eq!(w1.mass_at(&[-1.0], 0.0), 2.0 / 3.0, epsilon = 1e-14);
        let w2 = src.window_marginal(2).unwrap();
        assert_abs_diff_eq!(w2.mass_at(&[-1.0, -1.0], 0.0), 0.6, epsilon = 1e-14);
    }

    #[test]
    fn shift_consistency() {
        let src = sticky();
        for n in 1..5 {
            let wn = src.window_marginal(n).unwrap();
            let wn1 = src.window_marginal(n + 1).unwrap();
            for proj in [wn1.drop_last().unwrap(), wn1.drop_first().unwrap()] {
                assert_eq!(proj.len(), wn.len());
                for (s, &p) in wn.support().iter().zip(wn.mass()) {
                    assert_abs_diff_eq!(proj.mass_at(s, 0.0), p, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let err = coin().window_marginal_capped(20, 1000).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { requested, cap: 1000 } if requested == 1 << 20));
    }

    #[test]
    fn zero_probability_windows_are_skipped() {
        let flip = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let src = SourceSpec::markov(Alphabet::scalar(&[0.0, 1.0]).unwrap(), flip).unwrap();
        let w = src.window_marginal(3).unwrap();
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn sample_path_examples() {
        let point = SourceSpec::iid(Alphabet::scalar(&[3.0, 4.0]).unwrap(), vec![1.0, 0.0]).unwrap();
        assert_eq!(point.sample_path(5, 1).unwrap(), vec![0; 5]);

        let flip = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let src = SourceSpec::markov(Alphabet::scalar(&[0.0, 1.0]).unwrap(), flip).unwrap();
        assert_eq!(src.sample_path_from(0, 6, 9).unwrap(), vec![0, 1, 0, 1, 0, 1]);

        let n = 100_000;
        let path = coin().sample_path(n, 42).unwrap();
        let mean: f64 = path.iter().map(|&s| if s == 0 { -1.0 } else { 1.0 }).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 / (n as f64).sqrt());
        assert_eq!(path, coin().sample_path(n, 42).unwrap());
    }

    #[test]
    fn merge_respects_tolerance() {
        let atoms = vec![(vec![0.5], 0.25), (vec![0.5 + 1e-14], 0.25), (vec![0.5 + 1e-6], 0.5)];
        let (support, mass) = merge_atoms(atoms, MERGE_TOLERANCE);
        assert_eq!(support.len(), 2);
        assert_eq!(mass, vec![0.5, 0.5]);
    }

    #[test]
    fn markov_rejects_non_stationary_initial() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let a = Alphabet::scalar(&[0.0, 1.0]).unwrap();
        assert!(SourceSpec::markov_with_initial(a, p, vec![0.5, 0.5]).is_err());
    }
}

//! Equivariant sliding block codes built from convex and c-concave potentials,
//! their exact and Monte Carlo coupling costs, and the inverse of the
//! symmetric first-order moving average.

mod ar;
mod code;
mod mc;
mod potential;

use std::collections::HashSet;

pub use ar::{ar_inverse_coefficients, ArInverse};
pub use code::{apply_code, apply_field_code, LatticeConfig, SlidingBlockCode};
pub(crate) use code::box_sites;
pub use mc::{coupling_cost_mc, McEstimate};
pub use potential::{MeanFunction, Potential, PotentialForm, TabulatedPotential, UnivariatePiece};

use crate::ctools::{average_supergradient, verify_supergradient_infimum, CostSpec, C_TOLERANCE};
use crate::error::{validation, Error, Result};
use crate::model::{check_cap, check_sites, state_count, Alphabet, FieldSpec, SourceSpec, DEFAULT_ENUMERATION_CAP};

fn check_potential_alphabet(potential: &Potential, alphabet: &Alphabet) -> Result<()> {
    if potential.dim() != alphabet.dim() {
        return Err(Error::DimensionMismatch(format!(
            "potential acts on symbols of dimension {}, alphabet has {}",
            potential.dim(),
            alphabet.dim()
        )));
    }
    Ok(())
}

fn flatten(alphabet: &Alphabet, ids: &[usize]) -> Vec<f64> {
    ids.iter().flat_map(|&i| alphabet.symbol(i).iter().copied()).collect()
}

/// Code `S_0(x) = sum_k grad_k f(x_{-k}, ..., x_{-k+n-1})` of a convex potential.
pub fn build_code(potential: &Potential, alphabet: &Alphabet) -> Result<SlidingBlockCode> {
    potential.ensure_convex()?;
    check_potential_alphabet(potential, alphabet)?;
    let n = potential.order();
    let m = potential.dim();
    let r = n - 1;
    SlidingBlockCode::contiguous_from_ids_fn(alphabet, r, |w| {
        let mut out = vec![0.0; m];
        for k in 0..n {
            let x = flatten(alphabet, &w[r - k..r - k + n]);
            let g = potential.subgradient(&x)?;
            for (o, v) in out.iter_mut().zip(&g[k * m..(k + 1) * m]) {
                *o += v;
            }
        }
        Ok(out)
    })
}

/// Code `S_e(x) = sum_{g in F} grad_g f((x_{g' - g})_{g' in F})` on `Z^d`.
///
/// The code reads the offsets `F - F` in lexicographic order.
pub fn field_code(potential: &Potential, sites: &[Vec<i64>], alphabet: &Alphabet) -> Result<SlidingBlockCode> {
    potential.ensure_convex()?;
    check_potential_alphabet(potential, alphabet)?;
    let d = sites.first().map(Vec::len).unwrap_or(0);
    check_sites(sites, d)?;
    if d == 0 {
        return Err(validation("sites must have positive dimension"));
    }
    if potential.order() != sites.len() {
        return Err(Error::DimensionMismatch(format!(
            "potential of order {} for {} sites",
            potential.order(),
            sites.len()
        )));
    }
    let mut offsets: Vec<Vec<i64>> = sites
        .iter()
        .flat_map(|a| sites.iter().map(move |b| a.iter().zip(b).map(|(p, q)| p - q).collect()))
        .collect();
    offsets.sort();
    offsets.dedup();
    // position in `offsets` of g' - g, indexed by (g, g')
    let lookup: Vec<Vec<usize>> = sites
        .iter()
        .map(|g| {
            sites
                .iter()
                .map(|gp| {
                    let diff: Vec<i64> = gp.iter().zip(g).map(|(p, q)| p - q).collect();
                    offsets.binary_search(&diff).expect("difference is an offset")
                })
                .collect()
        })
        .collect();
    let m = potential.dim();
    SlidingBlockCode::from_ids_fn(alphabet, offsets.clone(), |w| {
        let mut out = vec![0.0; m];
        for (gi, row) in lookup.iter().enumerate() {
            let ids: Vec<usize> = row.iter().map(|&p| w[p]).collect();
            let grad = potential.subgradient(&flatten(alphabet, &ids))?;
            for (o, v) in out.iter_mut().zip(&grad[gi * m..(gi + 1) * m]) {
                *o += v;
            }
        }
        Ok(out)
    })
}

/// `F^n(x)` with `F_k = eta_{x_k}(n grad_k f(x))`, where `eta_x` inverts `y -> c_x(x, y)`.
///
/// This is the c_n-supergradient of a c_n-concave `f` selected by the
/// first-order condition; it is not verified here.
pub fn c_supergradient_map(potential: &Potential, cost: &CostSpec, x: &[f64]) -> Result<Vec<f64>> {
    let n = potential.order() as f64;
    let m = potential.dim();
    let grad = potential.subgradient(x)?;
    let mut out = Vec::with_capacity(x.len());
    for (xk, gk) in x.chunks(m).zip(grad.chunks(m)) {
        let target: Vec<f64> = gk.iter().map(|g| n * g).collect();
        out.extend(cost.invert_grad_x(xk, &target)?);
    }
    Ok(out)
}

/// Window where the averaged-slice supergradient failed its infimum check.
#[derive(Debug, Clone, PartialEq)]
pub struct InfimumWarning {
    pub window: Vec<usize>,
    pub gap: f64,
}

/// A code built from a c_n-concave potential together with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CCode {
    pub code: SlidingBlockCode,
    /// n-windows outside the source support where `F^n(x)` is not a c_n-supergradient.
    pub off_support: Vec<Vec<usize>>,
    /// (2n-1)-windows where `u_0` failed the infimum check on the alphabet.
    pub warnings: Vec<InfimumWarning>,
}

/// Builder for codes from c_n-concave potentials.
pub struct CCodeBuilder<'a> {
    potential: &'a Potential,
    cost: &'a CostSpec,
    alphabet: &'a Alphabet,
    support: Option<&'a SourceSpec>,
    tolerance: f64,
    cap: u64,
}

impl<'a> CCodeBuilder<'a> {
    pub fn new(potential: &'a Potential, cost: &'a CostSpec, alphabet: &'a Alphabet) -> Self {
        Self { potential, cost, alphabet, support: None, tolerance: C_TOLERANCE, cap: DEFAULT_ENUMERATION_CAP }
    }

    /// Only windows charged by this source must carry a c_n-supergradient.
    pub fn support(mut self, source: &'a SourceSpec) -> Self {
        self.support = Some(source);
        self
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn build(self) -> Result<CCode> {
        let Self { potential, cost, alphabet, support, tolerance, cap } = self;
        check_potential_alphabet(potential, alphabet)?;
        if !cost.is_differentiable() {
            return Err(Error::Inversion("cost has no gradient to invert".into()));
        }
        let n = potential.order();
        let m = potential.dim();
        let k = alphabet.len();
        check_cap(state_count(k, 2 * n - 1), cap)?;
        let on_support: Option<HashSet<Vec<usize>>> = match support {
            Some(src) => {
                if src.alphabet() != alphabet {
                    return Err(validation("support source uses a different alphabet"));
                }
                Some(src.window_probabilities(n, cap)?.into_iter().map(|(w, _)| w).collect())
            }
            None => None,
        };

        let windows: Vec<Vec<usize>> = (0..k.pow(n as u32))
            .map(|mut c| {
                let mut ids = vec![0; n];
                for slot in ids.iter_mut().rev() {
                    *slot = c % k;
                    c /= k;
                }
                ids
            })
            .collect();
        let points: Vec<Vec<f64>> = windows.iter().map(|w| flatten(alphabet, w)).collect();
        let mut values = Vec::with_capacity(points.len());
        for x in &points {
            values.push(potential.value(x)?);
        }

        let mut f_table: Vec<Vec<f64>> = Vec::with_capacity(windows.len());
        let mut off_support = Vec::new();
        for (wi, x) in points.iter().enumerate() {
            let fx = c_supergradient_map(potential, cost, x)?;
            if m == 1 {
                for (xk, yk) in x.iter().zip(&fx) {
                    let cxy = cost.derivatives(*xk, *yk)?.c_xy;
                    if cxy.abs() < 1e-12 {
                        return Err(Error::Singular(format!("c_xy vanishes at ({xk}, {yk})")));
                    }
                }
            }
            let base = cost.eval_window(x, &fx, m)? - values[wi];
            let mut best = f64::INFINITY;
            for (z, fz) in points.iter().zip(&values) {
                best = best.min(cost.eval_window(z, &fx, m)? - fz);
            }
            let gap = base - best;
            if gap > tolerance * (1.0 + base.abs()) {
                let charged = on_support.as_ref().is_none_or(|s| s.contains(&windows[wi]));
                if charged {
                    return Err(Error::EmptySupergradient { window: windows[wi].clone(), gap });
                }
                off_support.push(windows[wi].clone());
            }
            f_table.push(fx);
        }

        let grid: Vec<Vec<f64>> = alphabet.symbols().to_vec();
        let r = n - 1;
        let mut warnings = Vec::new();
        let code = SlidingBlockCode::contiguous_from_ids_fn(alphabet, r, |w| {
            let mut ys = Vec::with_capacity(n);
            for kk in 0..n {
                let idx = w[r - kk..r - kk + n].iter().fold(0, |acc, &i| acc * k + i);
                ys.push(f_table[idx][kk * m..(kk + 1) * m].to_vec());
            }
            let x0 = alphabet.symbol(w[r]);
            let u0 = average_supergradient(cost, x0, &ys)?.point;
            let check = verify_supergradient_infimum(cost, x0, &ys, &u0, &grid, tolerance)?;
            if !check.holds {
                warnings.push(InfimumWarning { window: w.to_vec(), gap: check.worst_gap });
            }
            Ok(u0)
        })?;
        Ok(CCode { code, off_support, warnings })
    }
}

/// Code from a c_n-concave potential without a support restriction.
pub fn build_c_code(potential: &Potential, cost: &CostSpec, alphabet: &Alphabet) -> Result<CCode> {
    CCodeBuilder::new(potential, cost, alphabet).build()
}

/// Exact `E c(X_0, S_0(X))` by enumerating source windows of length `2r + 1`.
pub fn coupling_cost_exact(source: &SourceSpec, code: &SlidingBlockCode, cost: &CostSpec) -> Result<f64> {
    coupling_cost_exact_capped(source, code, cost, DEFAULT_ENUMERATION_CAP)
}

pub fn coupling_cost_exact_capped(
    source: &SourceSpec,
    code: &SlidingBlockCode,
    cost: &CostSpec,
    cap: u64,
) -> Result<f64> {
    code.check_alphabet(source.alphabet())?;
    let r = code.radius();
    let mut acc = 0.0;
    for (w, p) in source.window_probabilities(2 * r + 1, cap)? {
        acc += p * cost.eval(source.alphabet().symbol(w[r]), code.output(&w))?;
    }
    Ok(acc)
}

/// Exact `E c(X_0, S_0(X))` for a lattice code applied to an i.i.d. field.
pub fn field_coupling_cost_exact(
    field: &FieldSpec,
    code: &SlidingBlockCode,
    cost: &CostSpec,
    cap: u64,
) -> Result<f64> {
    if code.alphabet() != field.alphabet() {
        return Err(validation("code was built for a different alphabet"));
    }
    if code.lattice_dim() != field.lattice_dim() {
        return Err(Error::DimensionMismatch("code and field live on different lattices".into()));
    }
    let origin = vec![0i64; field.lattice_dim()];
    let mut support: Vec<Vec<i64>> = code.offsets().to_vec();
    if !support.contains(&origin) {
        support.push(origin.clone());
    }
    let centre = support.iter().position(|s| *s == origin).expect("origin present");
    let reads = code.offsets().len();
    let mut acc = 0.0;
    for (ids, p) in field.configuration_probabilities(support.len(), cap)? {
        acc += p * cost.eval(field.alphabet().symbol(ids[centre]), code.output(&ids[..reads]))?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctools::Interval;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn coin_alphabet() -> Alphabet {
        Alphabet::scalar(&[-1.0, 1.0]).unwrap()
    }

    fn fair_coin() -> SourceSpec {
        SourceSpec::iid(coin_alphabet(), vec![0.5, 0.5]).unwrap()
    }

    fn markov() -> SourceSpec {
        SourceSpec::markov(coin_alphabet(), DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8])).unwrap()
    }

    #[test]
    fn build_code_examples() {
        let a = Alphabet::scalar(&[-1.0, 0.5, 2.0]).unwrap();
        let half = Potential::quadratic(DMatrix::identity(1, 1), 1).unwrap();
        let id = build_code(&half, &a).unwrap();
        for (ids, out) in id.entries() {
            assert_eq!(out, a.symbol(ids[0]));
        }
        let ar = build_code(&Potential::ar_quadratic(0.25).unwrap(), &a).unwrap();
        for (ids, out) in ar.entries() {
            let x: Vec<f64> = ids.iter().map(|&i| a.symbol(i)[0]).collect();
            assert_abs_diff_eq!(out[0], x[1] + 0.25 * (x[0] + x[2]), epsilon = 1e-15);
        }
        let pieces = vec![UnivariatePiece::Quadratic { a: 1.0, b: 0.0 }; 2];
        let sum = build_code(&Potential::sum_of_univariate(pieces, 1).unwrap(), &a).unwrap();
        for (ids, out) in sum.entries() {
            assert_eq!(out[0], 2.0 * a.symbol(ids[1])[0]);
        }
        let bad = Potential::quadratic(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1).unwrap();
        assert!(matches!(build_code(&bad, &a), Err(Error::NotConvex(_))));
    }

    #[test]
    fn field_code_examples() {
        let a = coin_alphabet();
        let half = Potential::quadratic(DMatrix::identity(1, 1), 1).unwrap();
        let id = field_code(&half, &[vec![0, 0]], &a).unwrap();
        for (ids, out) in id.entries() {
            assert_eq!(out, a.symbol(ids[0]));
        }
        let eps = 0.25;
        let f = Potential::ar_quadratic(eps).unwrap();
        let code = field_code(&f, &[vec![0, 0], vec![1, 0]], &a).unwrap();
        assert_eq!(code.offsets(), &[vec![-1, 0], vec![0, 0], vec![1, 0]]);
        for (ids, out) in code.entries() {
            let x: Vec<f64> = ids.iter().map(|&i| a.symbol(i)[0]).collect();
            assert_abs_diff_eq!(out[0], x[1] + eps * (x[0] + x[2]), epsilon = 1e-15);
        }
        // One-dimensional reduction.
        let b = Alphabet::scalar(&[-1.0, 0.0, 2.5]).unwrap();
        let g = Potential::quadratic(DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 1.5]), 1).unwrap();
        let lin = build_code(&g, &b).unwrap();
        let fld = field_code(&g, &[vec![0], vec![1], vec![2]], &b).unwrap();
        assert_eq!(lin.offsets(), fld.offsets());
        for ((_, u), (_, v)) in lin.entries().zip(fld.entries()) {
            assert_abs_diff_eq!(u[0], v[0], epsilon = 1e-15);
        }
    }

    #[test]
    fn exact_costs() {
        let code = build_code(&Potential::ar_quadratic(0.25).unwrap(), &coin_alphabet()).unwrap();
        let sq = CostSpec::squared();
        assert_abs_diff_eq!(coupling_cost_exact(&fair_coin(), &code, &sq).unwrap(), 0.125, epsilon = 1e-15);
        let id = SlidingBlockCode::identity(&coin_alphabet()).unwrap();
        assert_eq!(coupling_cost_exact(&markov(), &id, &sq).unwrap(), 0.0);
        // eps^2 E(X_{-1} + X_1)^2 = eps^2 (2 + 2 E X_{-1} X_1) for the Markov chain.
        let src = markov();
        let mut corr2 = 0.0;
        for (w, p) in src.window_probabilities(3, 1000).unwrap() {
            corr2 += p * src.alphabet().symbol(w[0])[0] * src.alphabet().symbol(w[2])[0];
        }
        let expected = 0.0625 * (2.0 + 2.0 * corr2);
        assert_abs_diff_eq!(coupling_cost_exact(&src, &code, &sq).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn c_code_squared_matches_convex_code() {
        let a = Alphabet::scalar(&[-1.0, 0.3, 1.0, 2.0]).unwrap();
        let g = Potential::ar_quadratic(0.2).unwrap();
        let convex = build_code(&g, &a).unwrap();
        for half in [true, false] {
            let cost = if half { CostSpec::squared_half() } else { CostSpec::squared() };
            let f = g.squared_cost_partner(half).unwrap();
            let cc = build_c_code(&f, &cost, &a).unwrap();
            assert!(cc.warnings.is_empty());
            for ((_, u), (_, v)) in convex.entries().zip(cc.code.entries()) {
                assert_abs_diff_eq!(u[0], v[0], epsilon = 1e-10);
            }
        }
        // f = 0 with n = 1 gives the identity.
        let zero = Potential::quadratic(DMatrix::zeros(1, 1), 1).unwrap();
        let cc = build_c_code(&zero, &CostSpec::squared_half(), &a).unwrap();
        for (ids, out) in cc.code.entries() {
            assert_eq!(out, a.symbol(ids[0]));
        }
    }

    #[test]
    fn c_code_rejects_non_concave_on_support() {
        let a = Alphabet::scalar(&[-1.0, 0.0, 1.0]).unwrap();
        // f = x^2 is not c-concave for the half squared cost on three points.
        let f = Potential::quadratic(DMatrix::from_element(1, 1, 2.0), 1).unwrap();
        let err = build_c_code(&f, &CostSpec::squared_half(), &a).unwrap_err();
        assert!(matches!(err, Error::EmptySupergradient { .. }), "{err:?}");
        // A bump at 0 breaks the supergradient at +-1 only; a source living
        // on 0 charges none of the failing windows.
        let bump = Potential::tabulated(
            1,
            1,
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            vec![0.5, 0.2, 0.5],
            vec![vec![-1.0], vec![0.0], vec![1.0]],
        )
        .unwrap();
        assert!(build_c_code(&bump, &CostSpec::squared_half(), &a).is_err());
        let src = SourceSpec::iid(a.clone(), vec![0.0, 1.0, 0.0]).unwrap();
        let cc = CCodeBuilder::new(&bump, &CostSpec::squared_half(), &a).support(&src).build().unwrap();
        assert_eq!(cc.off_support, vec![vec![0], vec![2]]);
    }

    #[test]
    fn mean_based_p4_code() {
        let e1 = Interval::new(0.0, 1.0).unwrap();
        let e2 = Interval::new(f64::NEG_INFINITY, 0.0).unwrap();
        let cost = CostSpec::p_power(4.0, Some((e1, e2))).unwrap();
        let a = Alphabet::scalar(&[0.2, 0.5, 0.9]).unwrap();
        let mean = MeanFunction::SqrtPlusLinear { slope: 1.0, sqrt_weight: 1.0 };
        let f = Potential::mean_based(2, mean).unwrap();
        let x = [0.2, 0.9];
        let y = c_supergradient_map(&f, &cost, &x).unwrap();
        let shift = mean.derivative(0.55).unwrap().cbrt();
        assert_abs_diff_eq!(y[0], 0.2 - shift, epsilon = 1e-14);
        assert_abs_diff_eq!(y[1], 0.9 - shift, epsilon = 1e-14);
        let cc = build_c_code(&f, &cost, &a).unwrap();
        assert!(cc.warnings.is_empty(), "{:?}", cc.warnings);
        assert_eq!(cc.code.radius(), 1);
    }

    #[test]
    fn monte_carlo() {
        let code = build_code(&Potential::ar_quadratic(0.25).unwrap(), &coin_alphabet()).unwrap();
        let est = coupling_cost_mc(&fair_coin(), &code, &CostSpec::squared(), 20_000, 7).unwrap();
        assert!((est.estimate - 0.125).abs() <= 4.0 * est.standard_error);
        let again = coupling_cost_mc(&fair_coin(), &code, &CostSpec::squared(), 20_000, 7).unwrap();
        assert_eq!(est, again);
        let id = SlidingBlockCode::identity(&coin_alphabet()).unwrap();
        let zero = coupling_cost_mc(&markov(), &id, &CostSpec::squared(), 1000, 1).unwrap();
        assert_eq!((zero.estimate, zero.standard_error), (0.0, 0.0));
        let point = SourceSpec::iid(coin_alphabet(), vec![0.0, 1.0]).unwrap();
        let single = coupling_cost_mc(&point, &code, &CostSpec::squared(), 500, 3).unwrap();
        assert_eq!(single.estimate, 0.25);
        assert!(coupling_cost_mc(&point, &code, &CostSpec::squared(), 99, 3).is_err());
    }

    #[test]
    fn field_exact_cost() {
        let field = FieldSpec::new(fair_coin(), 2).unwrap();
        let f = Potential::ar_quadratic(0.25).unwrap();
        let code = field_code(&f, &[vec![0, 0], vec![1, 0]], &coin_alphabet()).unwrap();
        let v = field_coupling_cost_exact(&field, &code, &CostSpec::squared(), 1000).unwrap();
        assert_abs_diff_eq!(v, 0.125, epsilon = 1e-15);
    }
}

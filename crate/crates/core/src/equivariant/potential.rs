//! Potentials `f` on windows `(R^m)^n` with subgradient selections.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const EIGEN_FLOOR: f64 = -1e-10;
const SUBGRADIENT_SLACK: f64 = 1e-8;
const TABULATED_MATCH: f64 = 1e-12;

/// Scalar function used as one additive piece `f_k` of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnivariatePiece {
    /// `a x^2 / 2 + b x`.
    Quadratic { a: f64, b: f64 },
    /// `weight |x - center|`.
    Abs { center: f64, weight: f64 },
    /// `weight exp(rate x)`.
    Exp { rate: f64, weight: f64 },
    /// `weight |x|^p / p` with `p >= 1`.
    PowerAbs { p: f64, weight: f64 },
    /// `weight sqrt(x)` on `x >= 0`.
    Sqrt { weight: f64 },
    /// `slope x + intercept`.
    Affine { slope: f64, intercept: f64 },
    Sum { terms: Vec<UnivariatePiece> },
}

impl UnivariatePiece {
    pub fn value(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Self::Quadratic { a, b } => 0.5 * a * x * x + b * x,
            Self::Abs { center, weight } => weight * (x - center).abs(),
            Self::Exp { rate, weight } => weight * (rate * x).exp(),
            Self::PowerAbs { p, weight } => weight * x.abs().powf(*p) / p,
            Self::Sqrt { weight } => {
                if x < 0.0 {
                    return Err(validation(format!("sqrt piece evaluated at {x} < 0")));
                }
                weight * x.sqrt()
            }
            Self::Affine { slope, intercept } => slope * x + intercept,
            Self::Sum { terms } => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.value(x)?;
                }
                acc
            }
        })
    }

    /// Derivative; the midpoint of the one-sided derivatives at kinks.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Self::Quadratic { a, b } => a * x + b,
            Self::Abs { center, weight } => {
                if x == *center {
                    0.0
                } else {
                    weight * (x - center).signum()
                }
            }
            Self::Exp { rate, weight } => weight * rate * (rate * x).exp(),
            Self::PowerAbs { p, weight } => {
                if x == 0.0 {
                    0.0
                } else {
                    weight * x.abs().powf(p - 1.0) * x.signum()
                }
            }
            Self::Sqrt { weight } => {
                if x <= 0.0 {
                    return Err(validation(format!("sqrt piece has no finite derivative at {x}")));
                }
                0.5 * weight / x.sqrt()
            }
            Self::Affine { slope, .. } => *slope,
            Self::Sum { terms } => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.derivative(x)?;
                }
                acc
            }
        })
    }

    pub fn is_convex(&self) -> bool {
        match self {
            Self::Quadratic { a, .. } => *a >= 0.0,
            Self::Abs { weight, .. } | Self::Exp { weight, .. } => *weight >= 0.0,
            Self::PowerAbs { p, weight } => *p >= 1.0 && *weight >= 0.0,
            Self::Sqrt { weight } => *weight <= 0.0,
            Self::Affine { .. } => true,
            Self::Sum { terms } => terms.iter().all(Self::is_convex),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        let ok = match self {
            Self::Quadratic { a, b } => finite(&[*a, *b]),
            Self::Abs { center, weight } => finite(&[*center, *weight]),
            Self::Exp { rate, weight } => finite(&[*rate, *weight]),
            Self::PowerAbs { p, weight } => finite(&[*p, *weight]) && *p >= 1.0,
            Self::Sqrt { weight } => weight.is_finite(),
            Self::Affine { slope, intercept } => finite(&[*slope, *intercept]),
            Self::Sum { terms } => {
                for t in terms {
                    t.validate()?;
                }
                true
            }
        };
        if ok {
            Ok(())
        } else {
            Err(validation(format!("invalid univariate piece {self:?}")))
        }
    }
}

/// Scalar function `A` of the window mean, with `A' >= 1` and `A'' <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanFunction {
    /// `slope xi`.
    Linear { slope: f64 },
    /// `slope xi + sqrt_weight sqrt(xi)` on `xi > 0`.
    SqrtPlusLinear { slope: f64, sqrt_weight: f64 },
}

impl MeanFunction {
    pub fn value(&self, xi: f64) -> Result<f64> {
        match *self {
            Self::Linear { slope } => Ok(slope * xi),
            Self::SqrtPlusLinear { slope, sqrt_weight } => {
                if xi < 0.0 {
                    return Err(validation(format!("mean function evaluated at {xi} < 0")));
                }
                Ok(slope * xi + sqrt_weight * xi.sqrt())
            }
        }
    }

    pub fn derivative(&self, xi: f64) -> Result<f64> {
        match *self {
            Self::Linear { slope } => Ok(slope),
            Self::SqrtPlusLinear { slope, sqrt_weight } => {
                if xi <= 0.0 {
                    return Err(validation(format!("mean function derivative undefined at {xi}")));
                }
                Ok(slope + 0.5 * sqrt_weight / xi.sqrt())
            }
        }
    }

    pub fn second_derivative(&self, xi: f64) -> Result<f64> {
        match *self {
            Self::Linear { .. } => Ok(0.0),
            Self::SqrtPlusLinear { sqrt_weight, .. } => {
                if xi <= 0.0 {
                    return Err(validation(format!("mean function curvature undefined at {xi}")));
                }
                Ok(-0.25 * sqrt_weight / (xi * xi.sqrt()))
            }
        }
    }

    /// Checks `A' >= 1` and `A'' <= 0` on a grid of `(0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for i in 1..=200 {
            let xi = i as f64 / 200.0;
            let d1 = self.derivative(xi)?;
            let d2 = self.second_derivative(xi)?;
            if d1.is_nan() || d2.is_nan() || d1 < 1.0 || d2 > 0.0 {
                return Err(validation(format!(
                    "mean function needs A' >= 1 and A'' <= 0; at {xi}: A' = {d1}, A'' = {d2}"
                )));
            }
        }
        Ok(())
    }
}

/// Potential given by values and chosen subgradients on a finite set of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    subgradients: Vec<Vec<f64>>,
}

impl TabulatedPotential {
    fn locate(&self, x: &[f64]) -> Result<usize> {
        self.points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= TABULATED_MATCH * (1.0 + a.abs())))
            .ok_or_else(|| Error::OffGrid(format!("{x:?} is not a tabulated point")))
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialForm {
    /// `f(x) = x^T A x / 2`.
    Quadratic(DMatrix<f64>),
    /// `f(x) = sum_k f_k(x_k)`, applied to every component of `x_k`.
    SumOfUnivariate(Vec<UnivariatePiece>),
    /// `f(x) = A(mean x)` for scalar symbols.
    MeanBased(MeanFunction),
    Tabulated(TabulatedPotential),
}

/// A potential of order `n` over symbols of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    order: usize,
    dim: usize,
    form: PotentialForm,
}

impl Potential {
    pub fn quadratic(matrix: DMatrix<f64>, dim: usize) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r == 0 || dim == 0 || r % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "quadratic matrix {r}x{c} incompatible with symbol dimension {dim}"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(validation("quadratic matrix must be finite"));
        }
        let scale = 1.0 + matrix.amax();
        for i in 0..r {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(validation(format!("quadratic matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { order: r / dim, dim, form: PotentialForm::Quadratic(matrix) })
    }

    /// `x_0^2/4 + eps x_0 x_1 + x_1^2/4`; its code is `x_0 + eps (x_{-1} + x_1)`.
    pub fn ar_quadratic(eps: f64) -> Result<Self> {
        Self::quadratic(DMatrix::from_row_slice(2, 2, &[0.5, eps, eps, 0.5]), 1)
    }

    pub fn sum_of_univariate(pieces: Vec<UnivariatePiece>, dim: usize) -> Result<Self> {
        if pieces.is_empty() || dim == 0 {
            return Err(validation("sum-of-univariate potential needs at least one piece"));
        }
        for p in &pieces {
            p.validate()?;
        }
        Ok(Self { order: pieces.len(), dim, form: PotentialForm::SumOfUnivariate(pieces) })
    }

    pub fn mean_based(order: usize, a: MeanFunction) -> Result<Self> {
        if order == 0 {
            return Err(validation("potential order must be >= 1"));
        }
        a.validate()?;
        Ok(Self { order, dim: 1, form: PotentialForm::MeanBased(a) })
    }

    pub fn tabulated(
        order: usize,
        dim: usize,
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
        subgradients: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let len = order * dim;
        if len == 0 || points.is_empty() {
            return Err(validation("tabulated potential needs points and positive order"));
        }
        if values.len() != points.len() || subgradients.len() != points.len() {
            return Err(Error::DimensionMismatch("tabulated potential arrays differ in length".into()));
        }
        if points.iter().chain(&subgradients).any(|p| p.len() != len) {
            return Err(Error::DimensionMismatch(format!("tabulated entries must have length {len}")));
        }
        let all_finite = points
            .iter()
            .chain(&subgradients)
            .flatten()
            .chain(&values)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(validation("tabulated potential entries must be finite"));
        }
        Ok(Self {
            order,
            dim,
            form: PotentialForm::Tabulated(TabulatedPotential { points, values, subgradients }),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &PotentialForm {
        &self.form
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.order * self.dim {
            return Err(Error::DimensionMismatch(format!(
                "potential expects {} coordinates, got {}",
                self.order * self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        match &self.form {
            PotentialForm::Quadratic(a) => {
                let mut acc = 0.0;
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        acc += x[i] * a[(i, j)] * x[j];
                    }
                }
                Ok(0.5 * acc)
            }
            PotentialForm::SumOfUnivariate(pieces) => {
                let mut acc = 0.0;
                for (piece, block) in pieces.iter().zip(x.chunks(self.dim)) {
                    for v in block {
                        acc += piece.value(*v)?;
                    }
                }
                Ok(acc)
            }
            PotentialForm::MeanBased(a) => a.value(x.iter().sum::<f64>() / x.len() as f64),
            PotentialForm::Tabulated(t) => Ok(t.values[t.locate(x)?]),
        }
    }

    /// Selected subgradient (the gradient where differentiable).
    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        match &self.form {
            PotentialForm::Quadratic(a) => Ok((0..x.len())
                .map(|i| (0..x.len()).map(|j| a[(i, j)] * x[j]).sum())
                .collect()),
            PotentialForm::SumOfUnivariate(pieces) => {
                let mut out = Vec::with_capacity(x.len());
                for (piece, block) in pieces.iter().zip(x.chunks(self.dim)) {
                    for v in block {
                        out.push(piece.derivative(*v)?);
                    }
                }
                Ok(out)
            }
            PotentialForm::MeanBased(a) => {
                let n = x.len() as f64;
                let d = a.derivative(x.iter().sum::<f64>() / n)?;
                Ok(vec![d / n; x.len()])
            }
            PotentialForm::Tabulated(t) => Ok(t.subgradients[t.locate(x)?].clone()),
        }
    }

    /// Rejects potentials that are not convex.
    pub fn ensure_convex(&self) -> Result<()> {
        match &self.form {
            PotentialForm::Quadratic(a) => {
                let min = a.clone().symmetric_eigen().eigenvalues.min();
                if min < EIGEN_FLOOR {
                    return Err(Error::NotConvex(format!("quadratic matrix has eigenvalue {min:e}")));
                }
            }
            PotentialForm::SumOfUnivariate(pieces) => {
                if let Some(k) = pieces.iter().position(|p| !p.is_convex()) {
                    return Err(Error::NotConvex(format!("piece {k} is not convex")));
                }
            }
            PotentialForm::MeanBased(a) => {
                if let MeanFunction::SqrtPlusLinear { sqrt_weight, .. } = a {
                    if *sqrt_weight > 0.0 {
                        return Err(Error::NotConvex("mean function is strictly concave".into()));
                    }
                }
            }
            PotentialForm::Tabulated(t) => {
                for (i, (xi, gi)) in t.points.iter().zip(&t.subgradients).enumerate() {
                    for (xz, fz) in t.points.iter().zip(&t.values) {
                        let lin: f64 = gi.iter().zip(xz.iter().zip(xi)).map(|(g, (z, x))| g * (z - x)).sum();
                        if fz - t.values[i] < lin - SUBGRADIENT_SLACK {
                            return Err(Error::NotConvex(format!(
                                "subgradient inequality fails at tabulated point {i}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The `c_n`-concave potential whose squared-cost code equals the convex
    /// code of `self`: `|x|^2 / (2n) - f` for the half convention and
    /// `|x|^2 / n - 2 f` otherwise. Only quadratic forms are supported.
    pub fn squared_cost_partner(&self, half: bool) -> Result<Self> {
        let PotentialForm::Quadratic(a) = &self.form else {
            return Err(validation("squared-cost partner is defined for quadratic potentials"));
        };
        let n = self.order as f64;
        let len = a.nrows();
        let m = if half {
            DMatrix::identity(len, len) / n - a
        } else {
            DMatrix::identity(len, len) * (2.0 / n) - a * 2.0
        };
        Self::quadratic(m, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn subgradient_examples() {
        let id = Potential::quadratic(DMatrix::identity(3, 3), 1).unwrap();
        assert_eq!(id.subgradient(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        let ar = Potential::ar_quadratic(0.25).unwrap();
        assert_eq!(ar.subgradient(&[1.0, -1.0]).unwrap(), vec![0.25, -0.25]);
        let mean = Potential::mean_based(4, MeanFunction::Linear { slope: 1.0 }).unwrap();
        assert_eq!(mean.subgradient(&[0.1, 0.2, 0.3, 0.9]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn validation_rules() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(Potential::quadratic(asym, 1).is_err());
        let indefinite = Potential::quadratic(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1).unwrap();
        assert!(matches!(indefinite.ensure_convex(), Err(Error::NotConvex(_))));
        assert!(Potential::ar_quadratic(0.25).unwrap().ensure_convex().is_ok());
        assert!(Potential::mean_based(2, MeanFunction::Linear { slope: 0.5 }).is_err());
        assert!(Potential::mean_based(2, MeanFunction::SqrtPlusLinear { slope: 1.0, sqrt_weight: 1.0 }).is_ok());
        assert!(Potential::mean_based(2, MeanFunction::SqrtPlusLinear { slope: 1.0, sqrt_weight: -1.0 }).is_err());
        let concave = Potential::sum_of_univariate(vec![UnivariatePiece::Sqrt { weight: 1.0 }], 1).unwrap();
        assert!(concave.ensure_convex().is_err());
    }

    #[test]
    fn kink_selection_is_midpoint() {
        let abs = UnivariatePiece::Abs { center: 1.0, weight: 2.0 };
        assert_eq!(abs.derivative(1.0).unwrap(), 0.0);
        assert_eq!(abs.derivative(1.5).unwrap(), 2.0);
        let p1 = UnivariatePiece::PowerAbs { p: 1.0, weight: 1.0 };
        assert_eq!(p1.derivative(0.0).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_lookup() {
        let pts = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let t = Potential::tabulated(1, 1, pts, vec![1.0, 0.0, 1.0], vec![vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
        assert!(t.ensure_convex().is_ok());
        assert_eq!(t.subgradient(&[1.0]).unwrap(), vec![1.0]);
        assert!(matches!(t.subgradient(&[0.5]), Err(Error::OffGrid(_))));
        let bad = Potential::tabulated(1, 1, vec![vec![-1.0], vec![0.0], vec![1.0]], vec![0.0, 1.0, 0.0], vec![vec![0.0]; 3]).unwrap();
        assert!(bad.ensure_convex().is_err());
    }

    #[test]
    fn squared_partner() {
        let g = Potential::ar_quadratic(0.25).unwrap();
        let f = g.squared_cost_partner(true).unwrap();
        let x = [0.3, -0.7];
        assert_relative_eq!(
            f.value(&x).unwrap(),
            (0.09 + 0.49) / 4.0 - g.value(&x).unwrap(),
            max_relative = 1e-14
        );
    }

    fn random_psd() -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-1.0f64..1.0, 9).prop_map(|v| {
            let b = DMatrix::from_vec(3, 3, v);
            &b * b.transpose()
        })
    }

    proptest! {
        #[test]
        fn subgradient_inequality_on_probes(
            a in random_psd(),
            x in prop::collection::vec(-2.0f64..2.0, 3),
            zs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 10),
        ) {
            let mut sym = a.clone();
            for i in 0..3 { for j in 0..3 { sym[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]); } }
            let f = Potential::quadratic(sym, 1).unwrap();
            let g = f.subgradient(&x).unwrap();
            let fx = f.value(&x).unwrap();
            for z in &zs {
                let lin: f64 = g.iter().zip(z.iter().zip(&x)).map(|(g, (z, x))| g * (z - x)).sum();
                prop_assert!(f.value(z).unwrap() - fx >= lin - 1e-8);
            }
        }

        #[test]
        fn univariate_subgradient_inequality(
            c in -1.0f64..1.0, w in 0.0f64..2.0, p in 1.0f64..4.0,
            x in -2.0f64..2.0, z in -2.0f64..2.0,
        ) {
            let piece = UnivariatePiece::Sum { terms: vec![
                UnivariatePiece::Abs { center: c, weight: w },
                UnivariatePiece::PowerAbs { p, weight: w },
                UnivariatePiece::Exp { rate: c, weight: w },
            ]};
            prop_assert!(piece.is_convex());
            let lin = piece.derivative(x).unwrap() * (z - x);
            prop_assert!(piece.value(z).unwrap() - piece.value(x).unwrap() >= lin - 1e-8);
        }
    }
}

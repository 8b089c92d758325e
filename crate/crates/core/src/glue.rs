//! Gluing of finite joint distributions along a shared middle marginal, and
//! the alternating-sign example of a non-stationary gluing.

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, Error, Result};

/// Tolerance on the shared middle marginal for floating-point inputs.
pub const MIDDLE_TOLERANCE: f64 = 1e-10;

/// Probability mass values: `f64` or exact rationals.
pub trait Mass:
    Clone + Debug + PartialOrd + Zero + std::ops::Add<Output = Self> + std::ops::Mul<Output = Self> + std::ops::Div<Output = Self> + std::ops::Sub<Output = Self>
{
    fn is_close(&self, other: &Self, tol: f64) -> bool;
    fn one() -> Self;
}

impl Mass for f64 {
    fn is_close(&self, other: &Self, tol: f64) -> bool {
        (self - other).abs() <= tol
    }

    fn one() -> Self {
        1.0
    }
}

impl Mass for Rational64 {
    fn is_close(&self, other: &Self, _tol: f64) -> bool {
        self == other
    }

    fn one() -> Self {
        Rational64::from_integer(1)
    }
}

fn sum<T: Mass>(values: impl Iterator<Item = T>) -> T {
    values.fold(T::zero(), |a, b| a + b)
}

/// Joint law of two finite coordinates, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint2<T> {
    shape: [usize; 2],
    mass: Vec<T>,
}

impl<T: Mass> FiniteJoint2<T> {
    pub fn new(rows: usize, cols: usize, mass: Vec<T>) -> Result<Self> {
        check_pmf([rows, cols].iter().product(), &mass)?;
        Ok(Self { shape: [rows, cols], mass })
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn get(&self, a: usize, b: usize) -> &T {
        &self.mass[a * self.shape[1] + b]
    }

    pub fn marginal_first(&self) -> Vec<T> {
        (0..self.shape[0])
            .map(|a| sum((0..self.shape[1]).map(|b| self.get(a, b).clone())))
            .collect()
    }

    pub fn marginal_second(&self) -> Vec<T> {
        (0..self.shape[1])
            .map(|b| sum((0..self.shape[0]).map(|a| self.get(a, b).clone())))
            .collect()
    }
}

fn check_pmf<T: Mass>(len: usize, mass: &[T]) -> Result<()> {
    if len == 0 || mass.len() != len {
        return Err(Error::DimensionMismatch(format!("mass has {} entries, expected {len}", mass.len())));
    }
    if mass.iter().any(|m| *m < T::zero()) {
        return Err(validation("mass must be nonnegative"));
    }
    let total = sum(mass.iter().cloned());
    if !total.is_close(&T::one(), 1e-12) {
        return Err(validation(format!("mass sums to {total:?}")));
    }
    Ok(())
}

/// Joint law of three finite coordinates, row-major with the last fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint3<T> {
    shape: [usize; 3],
    mass: Vec<T>,
}

impl<T: Mass> FiniteJoint3<T> {
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> &T {
        &self.mass[(a * self.shape[1] + b) * self.shape[2] + c]
    }

    fn project(&self, keep: [usize; 2]) -> FiniteJoint2<T> {
        let [p, q] = keep;
        let rows = self.shape[p];
        let cols = self.shape[q];
        let mut mass = vec![T::zero(); rows * cols];
        for a in 0..self.shape[0] {
            for b in 0..self.shape[1] {
                for c in 0..self.shape[2] {
                    let idx = [a, b, c];
                    let slot = &mut mass[idx[p] * cols + idx[q]];
                    *slot = slot.clone() + self.get(a, b, c).clone();
                }
            }
        }
        FiniteJoint2 { shape: [rows, cols], mass }
    }

    pub fn marginal_12(&self) -> FiniteJoint2<T> {
        self.project([0, 1])
    }

    pub fn marginal_23(&self) -> FiniteJoint2<T> {
        self.project([1, 2])
    }

    pub fn marginal_13(&self) -> FiniteJoint2<T> {
        self.project([0, 2])
    }
}

/// `P123(a, b, c) = P12(a, b) P23(b, c) / P2(b)`; middle atoms of zero mass are omitted.
pub fn glue_finite<T: Mass>(p12: &FiniteJoint2<T>, p23: &FiniteJoint2<T>) -> Result<FiniteJoint3<T>> {
    if p12.shape[1] != p23.shape[0] {
        return Err(Error::DimensionMismatch(format!(
            "middle axes have sizes {} and {}",
            p12.shape[1], p23.shape[0]
        )));
    }
    let mid12 = p12.marginal_second();
    let mid23 = p23.marginal_first();
    for (b, (u, v)) in mid12.iter().zip(&mid23).enumerate() {
        if !u.is_close(v, MIDDLE_TOLERANCE) {
            return Err(validation(format!("middle marginals differ at {b}: {u:?} vs {v:?}")));
        }
    }
    let [n1, n2] = p12.shape;
    let n3 = p23.shape[1];
    let mut mass = vec![T::zero(); n1 * n2 * n3];
    for b in 0..n2 {
        if mid12[b] <= T::zero() {
            continue;
        }
        for a in 0..n1 {
            for c in 0..n3 {
                mass[(a * n2 + b) * n3 + c] = p12.get(a, b).clone() * p23.get(b, c).clone() / mid12[b].clone();
            }
        }
    }
    Ok(FiniteJoint3 { shape: [n1, n2, n3], mass })
}

/// Paths of two independent fair signs and `Z_t = (-1)^t X_t Y_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlternatingGlue {
    pub x: Vec<i8>,
    pub y: Vec<i8>,
    pub z: Vec<i8>,
}

impl AlternatingGlue {
    pub fn sample(length: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sign = || if rng.gen::<bool>() { 1i8 } else { -1i8 };
        let x: Vec<i8> = (0..length).map(|_| sign()).collect();
        let y: Vec<i8> = (0..length).map(|_| sign()).collect();
        let z = (0..length)
            .map(|t| if t % 2 == 0 { x[t] * y[t] } else { -x[t] * y[t] })
            .collect();
        Self { x, y, z }
    }

    /// `X_t Y_t Z_t` for every `t`.
    pub fn products(&self) -> Vec<i8> {
        self.x.iter().zip(&self.y).zip(&self.z).map(|((a, b), c)| a * b * c).collect()
    }

    /// Whether `X_t Y_t Z_t = (-1)^t` along the whole path.
    pub fn alternates(&self) -> bool {
        self.products()
            .iter()
            .enumerate()
            .all(|(t, v)| *v == if t % 2 == 0 { 1 } else { -1 })
    }
}

/// Largest absolute entry of the difference of two joints.
pub fn max_abs_difference(a: &FiniteJoint2<f64>, b: &FiniteJoint2<f64>) -> f64 {
    if a.shape != b.shape {
        return f64::INFINITY;
    }
    a.mass.iter().zip(&b.mass).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

impl<T: Mass> FiniteJoint2<T> {
    pub fn entries(&self) -> &[T] {
        &self.mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn coin_examples() {
        let half = r(1, 2);
        let zero = r(0, 1);
        let quarter = r(1, 4);
        let diag = FiniteJoint2::new(2, 2, vec![half, zero, zero, half]).unwrap();
        let anti = FiniteJoint2::new(2, 2, vec![zero, half, half, zero]).unwrap();
        let prod = FiniteJoint2::new(2, 2, vec![quarter; 4]).unwrap();

        let g = glue_finite(&diag, &diag).unwrap();
        assert_eq!(*g.get(0, 0, 0), half);
        assert_eq!(*g.get(1, 1, 1), half);
        let g = glue_finite(&prod, &prod).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    assert_eq!(*g.get(a, b, c), r(1, 8));
                }
            }
        }
        let g = glue_finite(&diag, &anti).unwrap();
        assert_eq!(*g.get(0, 0, 1), half);
        assert_eq!(*g.get(1, 1, 0), half);
        assert_eq!(g.marginal_12(), diag);
        assert_eq!(g.marginal_23(), anti);
        assert_eq!(g.marginal_13(), anti);
    }

    #[test]
    fn mismatched_middle() {
        let a = FiniteJoint2::new(1, 2, vec![0.5, 0.5]).unwrap();
        let b = FiniteJoint2::new(2, 1, vec![0.3, 0.7]).unwrap();
        assert!(glue_finite(&a, &b).is_err());
        assert!(FiniteJoint2::new(1, 2, vec![0.5, 0.6]).is_err());
        assert!(FiniteJoint2::new(1, 2, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn alternating_signs() {
        let g = AlternatingGlue::sample(1000, 5);
        assert!(g.alternates());
        assert_eq!(g, AlternatingGlue::sample(1000, 5));
    }

    fn joint_with_middle(rows: usize, middle: Vec<f64>, seed: Vec<f64>, middle_first: bool) -> FiniteJoint2<f64> {
        let cols = middle.len();
        let mut mass = vec![0.0; rows * cols];
        for b in 0..cols {
            let w: Vec<f64> = (0..rows).map(|a| seed[(a * cols + b) % seed.len()] + 0.01).collect();
            let s: f64 = w.iter().sum();
            for a in 0..rows {
                mass[a * cols + b] = middle[b] * w[a] / s;
            }
        }
        if middle_first {
            let mut t = vec![0.0; rows * cols];
            for a in 0..rows {
                for b in 0..cols {
                    t[b * rows + a] = mass[a * cols + b];
                }
            }
            FiniteJoint2 { shape: [cols, rows], mass: t }
        } else {
            FiniteJoint2 { shape: [rows, cols], mass }
        }
    }

    proptest! {
        #[test]
        fn marginals_preserved(
            raw in prop::collection::vec(0.0f64..1.0, 2..5),
            zero_at in prop::option::of(0usize..4),
            s1 in prop::collection::vec(0.0f64..1.0, 1..12),
            s2 in prop::collection::vec(0.0f64..1.0, 1..12),
            n1 in 1usize..4,
            n3 in 1usize..4,
        ) {
            let mut middle = raw.clone();
            if let Some(z) = zero_at { let l = middle.len(); middle[z % l] = 0.0; }
            let total: f64 = middle.iter().sum();
            prop_assume!(total > 0.1);
            middle.iter_mut().for_each(|m| *m /= total);
            let p12 = joint_with_middle(n1, middle.clone(), s1, false);
            let p23 = joint_with_middle(n3, middle, s2, true);
            let g = glue_finite(&p12, &p23).unwrap();
            prop_assert!(max_abs_difference(&g.marginal_12(), &p12) <= 1e-12);
            prop_assert!(max_abs_difference(&g.marginal_23(), &p23) <= 1e-12);
        }
    }
}

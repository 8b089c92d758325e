//! Ground costs `c(x, y)` with derivative oracles and inversion of `y -> c_x(x, y)`.

use serde::{Deserialize, Serialize};

use super::fd::{mixed_partial, mixed_partial_richardson};
use crate::error::{validation, Error, Result};

/// Open interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(validation(format!("invalid interval ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_disjoint(&self, other: &Interval) -> bool {
        self.hi <= other.lo || other.hi <= self.lo
    }
}

/// Tabulated scalar cost on a rectangular grid, bilinearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCost {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major: `values[i * ys.len() + j] = c(xs[i], ys[j])`.
    values: Vec<f64>,
}

impl TabulatedCost {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        for (name, g) in [("x", &xs), ("y", &ys)] {
            if g.len() < 2 {
                return Err(validation(format!("tabulated cost needs >= 2 {name} nodes")));
            }
            if g.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) || g.iter().any(|v| !v.is_finite()) {
                return Err(validation(format!("tabulated {name} nodes must be finite and strictly increasing")));
            }
        }
        if values.len() != xs.len() * ys.len() {
            return Err(Error::DimensionMismatch(format!(
                "tabulated cost has {} values, expected {}",
                values.len(),
                xs.len() * ys.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(validation("tabulated cost values must be finite"));
        }
        Ok(Self { xs, ys, values })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    fn locate(nodes: &[f64], v: f64) -> Option<(usize, f64)> {
        let tol = 1e-12 * (1.0 + v.abs());
        if v < nodes[0] - tol || v > nodes[nodes.len() - 1] + tol {
            return None;
        }
        let k = match nodes.partition_point(|&n| n <= v) {
            0 => 0,
            p => (p - 1).min(nodes.len() - 2),
        };
        let t = ((v - nodes[k]) / (nodes[k + 1] - nodes[k])).clamp(0.0, 1.0);
        Some((k, t))
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let (i, s) = Self::locate(&self.xs, x)
            .ok_or_else(|| Error::OffGrid(format!("x = {x} outside tabulated range")))?;
        let (j, t) = Self::locate(&self.ys, y)
            .ok_or_else(|| Error::OffGrid(format!("y = {y} outside tabulated range")))?;
        let w = self.ys.len();
        let v = |a: usize, b: usize| self.values[a * w + b];
        Ok((1.0 - s) * (1.0 - t) * v(i, j)
            + s * (1.0 - t) * v(i + 1, j)
            + (1.0 - s) * t * v(i, j + 1)
            + s * t * v(i + 1, j + 1))
    }

    fn steps(&self) -> (f64, f64) {
        let min_gap = |g: &[f64]| g.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        (min_gap(&self.xs), min_gap(&self.ys))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// `||x - y||^2`, or `||x - y||^2 / 2` when `half` is set.
    Squared { half: bool },
    /// `||x - y||^p / p`.
    PPower { p: f64 },
    /// `log ||x - y||`.
    LogDistance,
    /// 0 on the diagonal, 1 elsewhere.
    Hamming,
    Tabulated(TabulatedCost),
}

/// All scalar partial derivatives of a cost at one point `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostDerivatives {
    pub c: f64,
    pub c_x: f64,
    pub c_y: f64,
    pub c_xx: f64,
    pub c_yy: f64,
    pub c_xy: f64,
    pub c_xxy: f64,
    pub c_xyy: f64,
    pub c_xxyy: f64,
}

impl CostDerivatives {
    /// Scalar cross curvature `-c_xx,yy + c_xx,y c_x,yy / c_x,y`.
    pub fn cross_curvature(&self) -> Result<f64> {
        if self.c_xy.abs() < SINGULAR_TOLERANCE {
            return Err(Error::Singular(format!("c_xy = {:e}", self.c_xy)));
        }
        Ok(-self.c_xxyy + self.c_xxy * self.c_xyy / self.c_xy)
    }
}

pub(crate) const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Cost function with optional domains `E_1` (for `x`) and `E_2` (for `y`).
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    kind: CostKind,
    domains: Option<(Interval, Interval)>,
}

impl CostSpec {
    pub fn squared() -> Self {
        Self { kind: CostKind::Squared { half: false }, domains: None }
    }

    pub fn squared_half() -> Self {
        Self { kind: CostKind::Squared { half: true }, domains: None }
    }

    pub fn hamming() -> Self {
        Self { kind: CostKind::Hamming, domains: None }
    }

    /// `||x - y||^p / p`. Exponents below 2 need disjoint domains.
    pub fn p_power(p: f64, domains: Option<(Interval, Interval)>) -> Result<Self> {
        if !p.is_finite() || p == 0.0 {
            return Err(validation(format!("p-power exponent must be finite and nonzero, got {p}")));
        }
        if p < 2.0 {
            match domains {
                Some((a, b)) if a.is_disjoint(&b) => {}
                _ => {
                    return Err(validation(format!(
                        "p-power cost with p = {p} < 2 requires disjoint domains"
                    )))
                }
            }
        }
        Ok(Self { kind: CostKind::PPower { p }, domains })
    }

    pub fn log_distance(x_domain: Interval, y_domain: Interval) -> Result<Self> {
        if !x_domain.is_disjoint(&y_domain) {
            return Err(validation("log-distance cost requires disjoint domains"));
        }
        Ok(Self { kind: CostKind::LogDistance, domains: Some((x_domain, y_domain)) })
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Ok(Self { kind: CostKind::Tabulated(TabulatedCost::new(xs, ys, values)?), domains: None })
    }

    /// Restrict a cost to declared domains; keeps the disjointness requirement.
    pub fn with_domains(mut self, x_domain: Interval, y_domain: Interval) -> Result<Self> {
        let needs_disjoint = match self.kind {
            CostKind::PPower { p } => p < 2.0,
            CostKind::LogDistance => true,
            _ => false,
        };
        if needs_disjoint && !x_domain.is_disjoint(&y_domain) {
            return Err(validation("cost requires disjoint domains"));
        }
        self.domains = Some((x_domain, y_domain));
        Ok(self)
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn domains(&self) -> Option<(Interval, Interval)> {
        self.domains
    }

    pub fn is_squared(&self) -> bool {
        matches!(self.kind, CostKind::Squared { .. })
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self.kind, CostKind::Hamming)
    }

    fn check_domains(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if let Some((ex, ey)) = self.domains {
            if x.len() != 1 || y.len() != 1 {
                return Err(Error::CostDomain("domains are declared for scalar points only".into()));
            }
            if !ex.contains(x[0]) {
                return Err(Error::CostDomain(format!("x = {} outside E_1 ({}, {})", x[0], ex.lo, ex.hi)));
            }
            if !ey.contains(y[0]) {
                return Err(Error::CostDomain(format!("y = {} outside E_2 ({}, {})", y[0], ey.lo, ey.hi)));
            }
        }
        Ok(())
    }

    /// `c(x, y)` for points of equal dimension.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "cost arguments have dimensions {} and {}",
                x.len(),
                y.len()
            )));
        }
        self.check_domains(x, y)?;
        let norm2 = || x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let v = match &self.kind {
            CostKind::Squared { half } => {
                let s = norm2();
                if *half {
                    0.5 * s
                } else {
                    s
                }
            }
            CostKind::PPower { p } => {
                let d = norm2().sqrt();
                if d == 0.0 && *p < 0.0 {
                    return Err(Error::CostDomain(format!("|x - y|^{p} undefined at x = y")));
                }
                d.powf(*p) / p
            }
            CostKind::LogDistance => {
                let d = norm2().sqrt();
                if d == 0.0 {
                    return Err(Error::CostDomain("log |x - y| undefined at x = y".into()));
                }
                d.ln()
            }
            CostKind::Hamming => {
                if x.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-12) {
                    0.0
                } else {
                    1.0
                }
            }
            CostKind::Tabulated(t) => {
                if x.len() != 1 {
                    return Err(Error::DimensionMismatch("tabulated cost is scalar".into()));
                }
                t.eval(x[0], y[0])?
            }
        };
        if !v.is_finite() {
            return Err(Error::CostDomain(format!("cost not finite at x = {x:?}, y = {y:?}")));
        }
        Ok(v)
    }

    pub fn eval_scalar(&self, x: f64, y: f64) -> Result<f64> {
        self.eval(&[x], &[y])
    }

    /// Per-coordinate average `c_n(x, y) = (1/n) sum_t c(x_t, y_t)` over flattened windows.
    pub fn eval_window(&self, x: &[f64], y: &[f64], dim: usize) -> Result<f64> {
        if dim == 0 || x.len() != y.len() || !x.len().is_multiple_of(dim) || x.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "window arguments of length {} and {} with symbol dimension {dim}",
                x.len(),
                y.len()
            )));
        }
        let n = x.len() / dim;
        let mut acc = 0.0;
        for (a, b) in x.chunks(dim).zip(y.chunks(dim)) {
            acc += self.eval(a, b)?;
        }
        Ok(acc / n as f64)
    }

    /// Local length scale for finite-difference steps.
    fn fd_scale(&self, x: f64, y: f64) -> f64 {
        let mut scale = f64::INFINITY;
        if let Some((ex, ey)) = self.domains {
            scale = scale.min(ex.width()).min(ey.width());
        }
        if matches!(self.kind, CostKind::PPower { .. } | CostKind::LogDistance) && x != y {
            scale = scale.min((x - y).abs());
        }
        if scale.is_finite() {
            scale.min(1.0)
        } else {
            1.0
        }
    }

    /// Scalar derivatives; analytic for squared, p-power and log costs.
    pub fn derivatives(&self, x: f64, y: f64) -> Result<CostDerivatives> {
        let c = self.eval_scalar(x, y)?;
        let d = x - y;
        match self.kind {
            CostKind::Squared { half } => {
                let w = if half { 1.0 } else { 2.0 };
                Ok(CostDerivatives {
                    c,
                    c_x: w * d,
                    c_y: -w * d,
                    c_xx: w,
                    c_yy: w,
                    c_xy: -w,
                    c_xxy: 0.0,
                    c_xyy: 0.0,
                    c_xxyy: 0.0,
                })
            }
            CostKind::PPower { p } => {
                let a = d.abs();
                if a == 0.0 {
                    return Err(Error::CostDomain("p-power derivatives need x != y".into()));
                }
                let s = d.signum();
                let k2 = (p - 1.0) * a.powf(p - 2.0);
                let k3 = (p - 1.0) * (p - 2.0) * a.powf(p - 3.0) * s;
                Ok(CostDerivatives {
                    c,
                    c_x: a.powf(p - 1.0) * s,
                    c_y: -a.powf(p - 1.0) * s,
                    c_xx: k2,
                    c_yy: k2,
                    c_xy: -k2,
                    c_xxy: -k3,
                    c_xyy: k3,
                    c_xxyy: (p - 1.0) * (p - 2.0) * (p - 3.0) * a.powf(p - 4.0),
                })
            }
            CostKind::LogDistance => Ok(CostDerivatives {
                c,
                c_x: 1.0 / d,
                c_y: -1.0 / d,
                c_xx: -1.0 / (d * d),
                c_yy: -1.0 / (d * d),
                c_xy: 1.0 / (d * d),
                c_xxy: -2.0 / d.powi(3),
                c_xyy: 2.0 / d.powi(3),
                c_xxyy: -6.0 / d.powi(4),
            }),
            CostKind::Hamming => Err(Error::CostDomain("Hamming cost is not differentiable".into())),
            CostKind::Tabulated(_) => self.fd_derivatives(x, y),
        }
    }

    /// Scalar derivatives by central finite differences.
    ///
    /// Orders up to two use `h = 1e-4 * scale`; third and fourth order use a
    /// larger step with one Richardson extrapolation. Tabulated costs use the
    /// grid spacing directly.
    pub fn fd_derivatives(&self, x: f64, y: f64) -> Result<CostDerivatives> {
        if !self.is_differentiable() {
            return Err(Error::CostDomain("Hamming cost is not differentiable".into()));
        }
        let c0 = self.eval_scalar(x, y)?;
        // Evaluate every stencil point up front so domain errors surface.
        let eval = |hx: f64, hy: f64| -> Result<Box<dyn Fn(f64, f64) -> f64 + '_>> {
            for i in -2..=2 {
                for j in -2..=2 {
                    self.eval_scalar(x + i as f64 * hx, y + j as f64 * hy)?;
                }
            }
            Ok(Box::new(move |s: f64, t: f64| self.eval_scalar(x + s * hx, y + t * hy).unwrap_or(f64::NAN)))
        };
        let out = if let CostKind::Tabulated(tab) = &self.kind {
            let (hx, hy) = tab.steps();
            let g = eval(hx, hy)?;
            let part = |a: usize, b: usize| mixed_partial(&g, a, b, 1.0) / (hx.powi(a as i32) * hy.powi(b as i32));
            CostDerivatives {
                c: c0,
                c_x: part(1, 0),
                c_y: part(0, 1),
                c_xx: part(2, 0),
                c_yy: part(0, 2),
                c_xy: part(1, 1),
                c_xxy: part(2, 1),
                c_xyy: part(1, 2),
                c_xxyy: part(2, 2),
            }
        } else {
            let scale = self.fd_scale(x, y);
            let h_lo = 1e-4 * scale;
            let h_hi = 2e-2 * scale;
            let g_lo = eval(h_lo, h_lo)?;
            let g_hi = eval(h_hi, h_hi)?;
            let lo = |a: usize, b: usize| mixed_partial(&g_lo, a, b, 1.0) / h_lo.powi((a + b) as i32);
            let hi = |a: usize, b: usize| mixed_partial_richardson(&g_hi, a, b, 1.0) / h_hi.powi((a + b) as i32);
            CostDerivatives {
                c: c0,
                c_x: lo(1, 0),
                c_y: lo(0, 1),
                c_xx: lo(2, 0),
                c_yy: lo(0, 2),
                c_xy: lo(1, 1),
                c_xxy: hi(2, 1),
                c_xyy: hi(1, 2),
                c_xxyy: hi(2, 2),
            }
        };
        let all = [out.c_x, out.c_y, out.c_xx, out.c_yy, out.c_xy, out.c_xxy, out.c_xyy, out.c_xxyy];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("finite differences not finite at ({x}, {y})")));
        }
        Ok(out)
    }

    /// `grad_x c(x, y)`.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.eval(x, y)?;
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        match &self.kind {
            CostKind::Squared { half } => {
                let w = if *half { 1.0 } else { 2.0 };
                Ok(d.iter().map(|v| w * v).collect())
            }
            CostKind::PPower { p } => {
                if norm == 0.0 {
                    if *p > 1.0 {
                        return Ok(vec![0.0; d.len()]);
                    }
                    return Err(Error::CostDomain("p-power gradient undefined at x = y".into()));
                }
                let k = norm.powf(p - 2.0);
                Ok(d.iter().map(|v| k * v).collect())
            }
            CostKind::LogDistance => {
                let n2 = norm * norm;
                Ok(d.iter().map(|v| v / n2).collect())
            }
            CostKind::Hamming => Err(Error::CostDomain("Hamming cost is not differentiable".into())),
            CostKind::Tabulated(_) => Ok(vec![self.fd_derivatives(x[0], y[0])?.c_x]),
        }
    }

    /// Solve `grad_x c(x, y) = target` for `y` (the map `eta_x`).
    pub fn invert_grad_x(&self, x: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        if x.len() != target.len() || x.is_empty() {
            return Err(Error::DimensionMismatch("inversion target must match point dimension".into()));
        }
        let tnorm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y: Vec<f64> = match &self.kind {
            CostKind::Squared { half } => {
                let w = if *half { 1.0 } else { 2.0 };
                x.iter().zip(target).map(|(a, t)| a - t / w).collect()
            }
            CostKind::PPower { p } => {
                if *p == 1.0 {
                    return Err(Error::Inversion("p = 1 gradient has unit norm and is not invertible".into()));
                }
                if tnorm == 0.0 {
                    if *p < 1.0 {
                        return Err(Error::Inversion("zero gradient not attained for p < 1".into()));
                    }
                    x.to_vec()
                } else {
                    let r = tnorm.powf(1.0 / (p - 1.0));
                    x.iter().zip(target).map(|(a, t)| a - r * t / tnorm).collect()
                }
            }
            CostKind::LogDistance => {
                if tnorm == 0.0 {
                    return Err(Error::Inversion("zero gradient not attained by log cost".into()));
                }
                let t2 = tnorm * tnorm;
                x.iter().zip(target).map(|(a, t)| a - t / t2).collect()
            }
            CostKind::Hamming => {
                return Err(Error::Inversion("Hamming cost has no gradient".into()));
            }
            CostKind::Tabulated(tab) => {
                if x.len() != 1 {
                    return Err(Error::DimensionMismatch("tabulated cost is scalar".into()));
                }
                vec![self.invert_tabulated(tab, x[0], target[0])?]
            }
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inversion(format!("non-finite preimage for target {target:?}")));
        }
        if let Some((_, ey)) = self.domains {
            if !ey.contains(y[0]) {
                return Err(Error::Inversion(format!(
                    "preimage y = {} outside E_2 ({}, {})",
                    y[0], ey.lo, ey.hi
                )));
            }
        }
        Ok(y)
    }

    fn invert_tabulated(&self, tab: &TabulatedCost, x: f64, target: f64) -> Result<f64> {
        let (_, hy) = tab.steps();
        let lo0 = tab.ys[0] + 2.0 * hy;
        let hi0 = tab.ys[tab.ys.len() - 1] - 2.0 * hy;
        if lo0 >= hi0 {
            return Err(Error::Inversion("tabulated y grid too small to invert".into()));
        }
        let g = |y: f64| -> Result<f64> { Ok(self.fd_derivatives(x, y)?.c_x - target) };
        let (mut lo, mut hi) = (lo0, hi0);
        let (mut glo, ghi) = (g(lo)?, g(hi)?);
        if glo == 0.0 {
            return Ok(lo);
        }
        if ghi == 0.0 {
            return Ok(hi);
        }
        if glo.signum() == ghi.signum() {
            return Err(Error::Inversion(format!("c_x(x = {x}, .) does not bracket {target}")));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let gm = g(mid)?;
            if gm == 0.0 || hi - lo <= 1e-14 * (1.0 + mid.abs()) {
                return Ok(mid);
            }
            if gm.signum() == glo.signum() {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn disjoint() -> (Interval, Interval) {
        (Interval::new(0.0, 1.0).unwrap(), Interval::new(f64::NEG_INFINITY, 0.0).unwrap())
    }

    #[test]
    fn construction_rules() {
        assert!(CostSpec::p_power(1.5, None).is_err());
        assert!(CostSpec::p_power(0.0, None).is_err());
        assert!(CostSpec::p_power(1.5, Some(disjoint())).is_ok());
        let overlap = (Interval::new(0.0, 1.0).unwrap(), Interval::new(0.5, 2.0).unwrap());
        assert!(CostSpec::p_power(1.5, Some(overlap)).is_err());
        assert!(CostSpec::log_distance(overlap.0, overlap.1).is_err());
        assert!(CostSpec::p_power(3.0, None).is_ok());
    }

    #[test]
    fn values() {
        assert_eq!(CostSpec::squared().eval(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(CostSpec::squared_half().eval_scalar(1.0, 3.0).unwrap(), 2.0);
        assert_eq!(CostSpec::hamming().eval_scalar(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(CostSpec::hamming().eval_scalar(1.0, -1.0).unwrap(), 1.0);
        let c = CostSpec::p_power(4.0, None).unwrap();
        assert_relative_eq!(c.eval_scalar(0.5, -0.5).unwrap(), 0.25);
        let (a, b) = disjoint();
        let lg = CostSpec::log_distance(a, b).unwrap();
        assert_relative_eq!(lg.eval_scalar(0.5, -0.5).unwrap(), 0.0);
        assert!(matches!(lg.eval_scalar(0.5, 0.5), Err(Error::CostDomain(_))));
        assert_relative_eq!(
            CostSpec::squared().eval_window(&[1.0, 0.0], &[0.0, 0.0], 1).unwrap(),
            0.5
        );
    }

    #[test]
    fn closed_form_curvature_examples() {
        let sq = CostSpec::squared();
        assert_eq!(sq.derivatives(0.3, -2.0).unwrap().cross_curvature().unwrap(), 0.0);
        let p4 = CostSpec::p_power(4.0, None).unwrap();
        assert_relative_eq!(p4.derivatives(0.5, -0.5).unwrap().cross_curvature().unwrap(), 6.0);
        let (a, b) = disjoint();
        let lg = CostSpec::log_distance(a, b).unwrap();
        assert_relative_eq!(
            lg.derivatives(0.5, -0.5).unwrap().cross_curvature().unwrap(),
            2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn tabulated_matches_source_cost_at_nodes() {
        let xs: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = (0..41).map(|i| -3.0 + i as f64 * 0.1).collect();
        let values: Vec<f64> = xs
            .iter()
            .flat_map(|x| ys.iter().map(move |y| 0.5 * (x - y) * (x - y)))
            .collect();
        let tab = CostSpec::tabulated(xs, ys, values).unwrap();
        assert_relative_eq!(tab.eval_scalar(1.0, -1.0).unwrap(), 2.0, max_relative = 1e-12);
        let d = tab.derivatives(1.0, -1.0).unwrap();
        assert_relative_eq!(d.c_x, 2.0, max_relative = 1e-9);
        assert_relative_eq!(d.c_xy, -1.0, max_relative = 1e-9);
        let y = tab.invert_grad_x(&[1.0], &[2.5]).unwrap();
        assert_relative_eq!(y[0], -1.5, max_relative = 1e-8);
        assert!(matches!(tab.eval_scalar(5.0, 0.0), Err(Error::OffGrid(_))));
    }

    #[test]
    fn hamming_is_not_invertible() {
        assert!(matches!(
            CostSpec::hamming().invert_grad_x(&[0.0], &[1.0]),
            Err(Error::Inversion(_))
        ));
    }

    proptest! {
        #[test]
        fn inversion_roundtrip(x in 0.05f64..0.95, y in -3.0f64..-0.05, p in prop::sample::select(vec![1.5, 3.0, 4.0, 0.5])) {
            let cost = CostSpec::p_power(p, Some(disjoint())).unwrap();
            let g = cost.grad_x(&[x], &[y]).unwrap();
            let back = cost.invert_grad_x(&[x], &g).unwrap();
            prop_assert!((back[0] - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }

        #[test]
        fn analytic_and_fd_agree(x in 0.05f64..0.95, y in -3.0f64..-0.05, p in prop::sample::select(vec![2.0, 3.0, 4.0, 1.5])) {
            let cost = CostSpec::p_power(p, Some(disjoint())).unwrap();
            let a = cost.derivatives(x, y).unwrap();
            let f = cost.fd_derivatives(x, y).unwrap();
            for (u, v) in [(a.c_x, f.c_x), (a.c_xy, f.c_xy), (a.c_xxy, f.c_xxy), (a.c_xyy, f.c_xyy), (a.c_xxyy, f.c_xxyy)] {
                prop_assert!((u - v).abs() <= 1e-5 * (1.0 + u.abs()), "{} vs {}", u, v);
            }
        }

        #[test]
        fn vector_squared_inverse(x in prop::collection::vec(-2.0f64..2.0, 3), t in prop::collection::vec(-2.0f64..2.0, 3)) {
            for cost in [CostSpec::squared(), CostSpec::squared_half(), CostSpec::p_power(3.0, None).unwrap()] {
                let y = cost.invert_grad_x(&x, &t).unwrap();
                let g = cost.grad_x(&x, &y).unwrap();
                for (a, b) in g.iter().zip(&t) {
                    prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
                }
            }
        }
    }
}

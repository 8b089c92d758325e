use nalgebra::{DMatrix, DVector};

use super::cost::{CostKind, CostSpec, SINGULAR_TOLERANCE};
use super::fd::{mixed_partial, mixed_partial_richardson};
use crate::error::{Error, Result};

fn check_dims(x: &[f64], y: &[f64], u: &[f64], v: &[f64]) -> Result<()> {
    let m = x.len();
    if m == 0 || y.len() != m || u.len() != m || v.len() != m {
        return Err(Error::DimensionMismatch(
            "cross curvature needs x, y, u, v of equal positive dimension".into(),
        ));
    }
    Ok(())
}

/// Cross curvature `sigma(x, y; u, v)`.
///
/// Scalar costs with analytic derivatives use
/// `(-c_xx,yy + c_xx,y c_x,yy / c_x,y) u^2 v^2`; squared costs are flat in any
/// dimension; everything else goes through [`cross_curvature_fd`].
pub fn cross_curvature(cost: &CostSpec, x: &[f64], y: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(x, y, u, v)?;
    match cost.kind() {
        CostKind::Hamming => Err(Error::CostDomain("Hamming cost has no curvature".into())),
        CostKind::Squared { .. } => {
            cost.eval(x, y)?;
            Ok(0.0)
        }
        CostKind::PPower { .. } | CostKind::LogDistance if x.len() == 1 => {
            let d = cost.derivatives(x[0], y[0])?;
            Ok(d.cross_curvature()? * u[0] * u[0] * v[0] * v[0])
        }
        _ => cross_curvature_fd(cost, x, y, u, v),
    }
}

/// Cross curvature from finite differences, in any dimension.
///
/// `sigma = -D_u^2 D_v^2 c + b^T C^{-1} a` with `C_pq = c_{x^p, y^q}`,
/// `a_q = D_u^2 c_{y^q}` and `b_p = D_v^2 c_{x^p}`.
pub fn cross_curvature_fd(cost: &CostSpec, x: &[f64], y: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(x, y, u, v)?;
    if !cost.is_differentiable() {
        return Err(Error::CostDomain("Hamming cost has no curvature".into()));
    }
    if x.len() == 1 {
        let d = cost.fd_derivatives(x[0], y[0])?;
        return Ok(d.cross_curvature()? * u[0] * u[0] * v[0] * v[0]);
    }
    let m = x.len();
    let dist = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale = if dist > 0.0 { dist.min(1.0) } else { 1.0 };
    let h_lo = 1e-4 * scale;
    let h_hi = 2e-2 * scale;
    let unit = |p: usize| -> Vec<f64> { (0..m).map(|i| if i == p { 1.0 } else { 0.0 }).collect() };
    let shifted = |base: &[f64], dir: &[f64], s: f64| -> Vec<f64> {
        base.iter().zip(dir).map(|(b, d)| b + s * d).collect()
    };
    let g = |dx: &[f64], dy: &[f64]| {
        let dx = dx.to_vec();
        let dy = dy.to_vec();
        move |s: f64, t: f64| cost.eval(&shifted(x, &dx, s), &shifted(y, &dy, t)).unwrap_or(f64::NAN)
    };
    let mut c = DMatrix::zeros(m, m);
    let mut a = DVector::zeros(m);
    let mut b = DVector::zeros(m);
    for p in 0..m {
        for q in 0..m {
            c[(p, q)] = mixed_partial(&g(&unit(p), &unit(q)), 1, 1, h_lo);
        }
        a[p] = mixed_partial_richardson(&g(u, &unit(p)), 2, 1, h_hi);
        b[p] = mixed_partial_richardson(&g(&unit(p), v), 1, 2, h_hi);
    }
    let four = mixed_partial_richardson(&g(u, v), 2, 2, h_hi);
    if !four.is_finite() || c.iter().chain(a.iter()).chain(b.iter()).any(|z| !z.is_finite()) {
        return Err(Error::CostDomain(format!("finite differences left the domain near ({x:?}, {y:?})")));
    }
    let norm = c.amax();
    let lu = c.clone().lu();
    if norm == 0.0 || lu.determinant().abs() < SINGULAR_TOLERANCE * norm.powi(m as i32) {
        return Err(Error::Singular(format!("mixed derivative matrix singular at ({x:?}, {y:?})")));
    }
    let z = lu
        .solve(&a)
        .ok_or_else(|| Error::Singular("mixed derivative matrix not invertible".into()))?;
    Ok(-four + b.dot(&z))
}

/// Common sign of `c_xy` on a scalar grid product, or a singularity error
/// when it vanishes or changes sign.
pub fn mixed_derivative_sign(cost: &CostSpec, xs: &[f64], ys: &[f64]) -> Result<f64> {
    let mut sign = 0.0;
    for &x in xs {
        for &y in ys {
            let cxy = cost.derivatives(x, y)?.c_xy;
            if cxy.abs() < SINGULAR_TOLERANCE {
                return Err(Error::Singular(format!("c_xy vanishes at ({x}, {y})")));
            }
            if sign == 0.0 {
                sign = cxy.signum();
            } else if cxy.signum() != sign {
                return Err(Error::Singular(format!("c_xy changes sign at ({x}, {y})")));
            }
        }
    }
    Ok(sign)
}

use crate::error::{validation, Result};

/// Coefficients `b_s`, `|s| <= s_max`, of the inverse of `x -> x_t + eps (x_{t-1} + x_{t+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArInverse {
    pub eps: f64,
    /// Root inside the unit disc; 0 when `eps = 0`.
    pub z_plus: f64,
    /// Root outside the unit disc; infinite when `eps = 0`.
    pub z_minus: f64,
    s_max: usize,
    coefficients: Vec<f64>,
}

impl ArInverse {
    pub fn s_max(&self) -> usize {
        self.s_max
    }

    /// `b_s`; zero outside the computed range.
    pub fn b(&self, s: i64) -> f64 {
        if s.unsigned_abs() as usize > self.s_max {
            return 0.0;
        }
        self.coefficients[(s + self.s_max as i64) as usize]
    }

    /// `b_{-s_max}, ..., b_{s_max}`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `max_{|t| <= t_max} |eps b_{t-1} + b_t + eps b_{t+1} - delta_t0|`.
    pub fn convolution_residual(&self, t_max: usize) -> f64 {
        (-(t_max as i64)..=t_max as i64)
            .map(|t| {
                let conv = self.eps * self.b(t - 1) + self.b(t) + self.eps * self.b(t + 1);
                let delta = if t == 0 { 1.0 } else { 0.0 };
                (conv - delta).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Closed-form inverse coefficients `b_s = z_+^|s| / (eps (z_+ - z_-))` with
/// `z_(+/-) = (-1 +/- sqrt(1 - 4 eps^2)) / (2 eps)`.
pub fn ar_inverse_coefficients(eps: f64, s_max: usize) -> Result<ArInverse> {
    if !eps.is_finite() {
        return Err(validation("eps must be finite"));
    }
    if eps.abs() >= 0.5 {
        return Err(validation(format!(
            "|eps| = {} >= 1/2: potential not convex / roots on unit circle",
            eps.abs()
        )));
    }
    let mut coefficients = vec![0.0; 2 * s_max + 1];
    if eps == 0.0 {
        coefficients[s_max] = 1.0;
        return Ok(ArInverse { eps, z_plus: 0.0, z_minus: f64::INFINITY, s_max, coefficients });
    }
    let root = (1.0 - 4.0 * eps * eps).sqrt();
    let z_plus = (-1.0 + root) / (2.0 * eps);
    let z_minus = (-1.0 - root) / (2.0 * eps);
    assert!(z_plus.abs() < 1.0 && z_minus.abs() > 1.0, "root separation failed for eps = {eps}");
    let scale = 1.0 / (eps * (z_plus - z_minus));
    for s in 0..=s_max {
        let b = scale * z_plus.powi(s as i32);
        coefficients[s_max + s] = b;
        coefficients[s_max - s] = b;
    }
    Ok(ArInverse { eps, z_plus, z_minus, s_max, coefficients })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quarter() {
        let ar = ar_inverse_coefficients(0.25, 22).unwrap();
        assert_abs_diff_eq!(ar.z_plus, -0.267949, epsilon = 1e-6);
        assert_abs_diff_eq!(ar.z_minus, -3.732051, epsilon = 1e-6);
        assert_abs_diff_eq!(ar.b(0), 1.154701, epsilon = 1e-6);
        assert_abs_diff_eq!(ar.b(1), -0.309401, epsilon = 1e-6);
        assert_eq!(ar.b(3), ar.b(-3));
        assert!(ar.convolution_residual(20) <= 1e-8);
    }

    #[test]
    fn degenerate_and_invalid() {
        let ar = ar_inverse_coefficients(0.0, 3).unwrap();
        assert_eq!(ar.coefficients(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(ar_inverse_coefficients(0.5, 3).is_err());
        assert!(ar_inverse_coefficients(-0.7, 3).is_err());
    }

    proptest! {
        #[test]
        fn inverse_identity(eps in -0.45f64..0.45) {
            let ar = ar_inverse_coefficients(eps, 60).unwrap();
            prop_assert!(ar.convolution_residual(58) <= 1e-8);
            for s in 0..=60 {
                prop_assert_eq!(ar.b(s), ar.b(-s));
            }
        }
    }
}

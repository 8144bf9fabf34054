use serde::{Deserialize, Serialize};

use super::{CgnsModel, Coefficients};
use crate::error::{Error, Result};

/// Two-variable linear time-invariant system
///
/// ```text
/// dx = (a y − c x) dt + σ_x dW₁
/// dy = −d y dt + σ_y dW₂
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    pub a: f64,
    pub c: f64,
    pub d: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            c: 0.0,
            d: 0.5,
            sigma_x: 0.5,
            sigma_y: 1.0,
        }
    }
}

impl LinearParams {
    /// Stationary filter variance, the positive root of
    /// `−2 d R + σ_y² − a² R² / σ_x² = 0`.
    pub fn riccati_root(&self) -> f64 {
        let (a, d, sx, sy) = (self.a, self.d, self.sigma_x, self.sigma_y);
        if a == 0.0 {
            return sy * sy / (2.0 * d);
        }
        sx * sx / (a * a) * (-d + (d * d + a * a * sy * sy / (sx * sx)).sqrt())
    }
}

pub fn linear_model(params: LinearParams) -> Result<CgnsModel> {
    if !(params.sigma_x > 0.0) || !(params.sigma_y >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "linear model needs sigma_x > 0 and sigma_y >= 0 (got {}, {})",
            params.sigma_x, params.sigma_y
        )));
    }
    let p = params;
    let model = CgnsModel::new("linear", 1, 1, 1, 1, move |_, x| {
        let mut c = Coefficients::zeros(1, 1, 1, 1);
        c.lambda_x[(0, 0)] = p.a;
        c.f_x[0] = -p.c * x[0];
        c.sigma_x1[(0, 0)] = p.sigma_x;
        c.lambda_y[(0, 0)] = -p.d;
        c.sigma_y2[(0, 0)] = p.sigma_y;
        c
    });
    Ok(model.with_labels(&["x"], &["y"]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riccati_root_solves_the_quadratic() {
        let p = LinearParams { a: 1.3, c: 0.0, d: 0.7, sigma_x: 0.4, sigma_y: 0.9 };
        let r = p.riccati_root();
        let residual = -2.0 * p.d * r + p.sigma_y.powi(2) - p.a.powi(2) * r * r / p.sigma_x.powi(2);
        assert!(r > 0.0);
        assert!(residual.abs() < 1e-14);
    }

    #[test]
    fn uncoupled_root_is_stationary_variance() {
        let p = LinearParams { a: 0.0, ..Default::default() };
        assert_eq!(p.riccati_root(), 1.0);
    }
}

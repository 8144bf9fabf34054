use serde::{Deserialize, Serialize};

use super::{CgnsModel, Coefficients};
use crate::error::{Error, Result};

/// Parameters of the nonlinear dyad
///
/// ```text
/// dx = (−d_x x + γ x y + f_x) dt + σ_x dW_x
/// dy = (−d_y y − γ x² + f_y) dt + σ_y dW_y
/// ```
///
/// with `x` observed and `y` hidden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DyadParams {
    pub d_x: f64,
    pub gamma: f64,
    pub f_x: f64,
    pub sigma_x: f64,
    pub d_y: f64,
    pub f_y: f64,
    pub sigma_y: f64,
}

impl Default for DyadParams {
    fn default() -> Self {
        Self {
            d_x: 0.5,
            gamma: 2.0,
            f_x: 0.5,
            sigma_x: 0.5,
            d_y: 0.5,
            f_y: 1.0,
            sigma_y: 1.0,
        }
    }
}

impl DyadParams {
    /// Level of `y` above which the net damping `−d_x + γ y` of `x` turns positive.
    pub fn anti_damping_threshold(&self) -> f64 {
        self.d_x / self.gamma
    }
}

pub fn dyad_model(params: DyadParams) -> Result<CgnsModel> {
    if !(params.sigma_x > 0.0) || !(params.sigma_y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dyad noise amplitudes must be positive (sigma_x = {}, sigma_y = {})",
            params.sigma_x, params.sigma_y
        )));
    }
    let p = params;
    let model = CgnsModel::new("dyad", 1, 1, 1, 1, move |_, x| {
        let x = x[0];
        let mut c = Coefficients::zeros(1, 1, 1, 1);
        c.lambda_x[(0, 0)] = p.gamma * x;
        c.f_x[0] = -p.d_x * x + p.f_x;
        c.sigma_x1[(0, 0)] = p.sigma_x;
        c.lambda_y[(0, 0)] = -p.d_y;
        c.f_y[0] = -p.gamma * x * x + p.f_y;
        c.sigma_y2[(0, 0)] = p.sigma_y;
        c
    });
    Ok(model.with_labels(&["x"], &["y"]))
}

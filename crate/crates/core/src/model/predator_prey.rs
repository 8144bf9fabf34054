use serde::{Deserialize, Serialize};

use super::{CgnsModel, Coefficients};
use crate::error::{Error, Result};

/// Parameters of the noisy predator-prey system
///
/// ```text
/// d(pred) = (β pred prey − α pred) dt + σ_x dW_x
/// d(prey) = (γ prey − δ pred prey) dt + σ_y dW_y
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredatorPreyParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_x: f64,
    pub gamma: f64,
    pub delta: f64,
    pub sigma_y: f64,
}

impl Default for PredatorPreyParams {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.1,
            sigma_x: 0.3,
            gamma: 1.1,
            delta: 0.4,
            sigma_y: 0.3,
        }
    }
}

impl PredatorPreyParams {
    /// Predator level above which prey growth turns into decay.
    pub fn predator_threshold(&self) -> f64 {
        self.gamma / self.delta
    }

    /// Prey level above which the predator grows.
    pub fn prey_threshold(&self) -> f64 {
        self.alpha / self.beta
    }
}

/// Which population is observed; the other one is hidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observed {
    Predator,
    Prey,
}

pub fn predator_prey_model(params: PredatorPreyParams, observed: Observed) -> Result<CgnsModel> {
    if !(params.sigma_x > 0.0) || !(params.sigma_y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "predator-prey noise amplitudes must be positive (sigma_x = {}, sigma_y = {})",
            params.sigma_x, params.sigma_y
        )));
    }
    let p = params;
    let model = match observed {
        Observed::Predator => CgnsModel::new("predator_prey", 1, 1, 1, 1, move |_, x| {
            let pred = x[0];
            let mut c = Coefficients::zeros(1, 1, 1, 1);
            c.lambda_x[(0, 0)] = p.beta * pred;
            c.f_x[0] = -p.alpha * pred;
            c.sigma_x1[(0, 0)] = p.sigma_x;
            c.lambda_y[(0, 0)] = p.gamma - p.delta * pred;
            c.sigma_y2[(0, 0)] = p.sigma_y;
            c
        })
        .with_labels(&["predator"], &["prey"]),
        Observed::Prey => CgnsModel::new("predator_prey", 1, 1, 1, 1, move |_, x| {
            let prey = x[0];
            let mut c = Coefficients::zeros(1, 1, 1, 1);
            c.lambda_x[(0, 0)] = -p.delta * prey;
            c.f_x[0] = p.gamma * prey;
            c.sigma_x1[(0, 0)] = p.sigma_y;
            c.lambda_y[(0, 0)] = p.beta * prey - p.alpha;
            c.sigma_y2[(0, 0)] = p.sigma_x;
            c
        })
        .with_labels(&["prey"], &["predator"]),
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_thresholds() {
        let p = PredatorPreyParams::default();
        assert!((p.predator_threshold() - 2.75).abs() < 1e-15);
        assert!((p.prey_threshold() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn no_coupling_decouples_both_factorizations() {
        let p = PredatorPreyParams { beta: 0.0, delta: 0.0, ..Default::default() };
        for obs in [Observed::Predator, Observed::Prey] {
            let m = predator_prey_model(p, obs).unwrap();
            let c = m.coefficients(0.0, &DVector::from_element(1, 3.0)).unwrap();
            assert_eq!(c.lambda_x[(0, 0)], 0.0);
        }
    }

    #[test]
    fn both_factorizations_match_hand_coded_drift() {
        let p = PredatorPreyParams::default();
        let by_pred = predator_prey_model(p, Observed::Predator).unwrap();
        let by_prey = predator_prey_model(p, Observed::Prey).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let pred: f64 = rng.random_range(0.0..8.0);
            let prey: f64 = rng.random_range(0.0..8.0);
            let dpred = p.beta * pred * prey - p.alpha * pred;
            let dprey = p.gamma * prey - p.delta * pred * prey;

            let c = by_pred.coefficients(0.0, &DVector::from_element(1, pred)).unwrap();
            let h = DVector::from_element(1, prey);
            assert!((c.drift_x(&h)[0] - dpred).abs() <= 1e-14 * (1.0 + dpred.abs()));
            assert!((c.drift_y(&h)[0] - dprey).abs() <= 1e-14 * (1.0 + dprey.abs()));

            let c = by_prey.coefficients(0.0, &DVector::from_element(1, prey)).unwrap();
            let h = DVector::from_element(1, pred);
            assert!((c.drift_x(&h)[0] - dprey).abs() <= 1e-14 * (1.0 + dprey.abs()));
            assert!((c.drift_y(&h)[0] - dpred).abs() <= 1e-14 * (1.0 + dpred.abs()));
        }
    }
}

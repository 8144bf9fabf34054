use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assim::ConditionalStrategy;
use crate::cir::ObjectiveMethod;
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::model::{
    dyad_model, enso_model, linear_model, predator_prey_model, CgnsModel, DyadParams, EnsoParams, EnsoVariable,
    LinearParams, ObservationPartition, Observed, PredatorPreyParams,
};
use crate::validate::{nil_conditional_chain, ValidationConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    #[default]
    Dyad,
    PredatorPrey,
    Linear,
    Enso,
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredatorPreyConfig {
    pub observed: Observed,
    pub params: PredatorPreyParams,
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        Self { observed: Observed::Predator, params: PredatorPreyParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsoConfig {
    pub hidden: EnsoVariable,
    /// Entries left out are taken from the shipped table.
    pub params: EnsoParams,
}

impl Default for EnsoConfig {
    fn default() -> Self {
        Self { hidden: EnsoVariable::Tc, params: EnsoParams::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: ModelName,
    pub dyad: DyadParams,
    pub predator_prey: PredatorPreyConfig,
    pub linear: LinearParams,
    pub enso: EnsoConfig,
}

impl ModelConfig {
    pub fn build(&self) -> Result<CgnsModel> {
        match self.name {
            ModelName::Dyad => dyad_model(self.dyad),
            ModelName::PredatorPrey => predator_prey_model(self.predator_prey.params, self.predator_prey.observed),
            ModelName::Linear => linear_model(self.linear),
            ModelName::Enso => enso_model(&self.enso.params.clone().or(&EnsoParams::shipped()), self.enso.hidden),
            ModelName::Chain => Ok(nil_conditional_chain()),
        }
    }

    /// Only the parameters of the selected model.
    fn active_json(&self) -> serde_json::Value {
        let params = match self.name {
            ModelName::Dyad => serde_json::to_value(self.dyad),
            ModelName::PredatorPrey => serde_json::to_value(&self.predator_prey),
            ModelName::Linear => serde_json::to_value(self.linear),
            ModelName::Enso => serde_json::to_value(EnsoConfig {
                hidden: self.enso.hidden,
                params: self.enso.params.clone().or(&EnsoParams::shipped()),
            }),
            ModelName::Chain => Ok(serde_json::Value::Null),
        };
        serde_json::json!({ "name": self.name, "params": params.expect("model parameters serialize") })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    /// Length of the kept trajectory, after burn-in.
    pub t_end: f64,
    pub burn_in: f64,
    pub seed: u64,
    /// Initial observed state; zeros when empty.
    pub x0: Vec<f64>,
    /// Initial hidden state; zeros when empty.
    pub y0: Vec<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 100.0, burn_in: 0.0, seed: 42, x0: Vec::new(), y0: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssimilationConfig {
    /// Prior mean of the hidden variables; zeros when empty.
    pub init_mean: Vec<f64>,
    /// Prior covariance, row-major; identity when empty.
    pub init_cov: Vec<f64>,
    /// Online-smoother window in steps; estimated from the data when absent.
    pub window: Option<usize>,
    /// Labels of the target observations. All observations are targets when
    /// empty; the rest are conditioned on otherwise.
    pub targets: Vec<String>,
    pub strategy: ConditionalStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Thresholds (nats) for the subjective range table; skipped when empty.
    pub thresholds: Vec<f64>,
    pub objective: ObjectiveMethod,
    /// Keep every `stride`-th row of the ACI and posterior outputs.
    pub stride: usize,
    /// Steps between CIR anchors; `max(1, N/1000)` when absent.
    pub anchor_stride: Option<usize>,
    /// Also write every lagged posterior of every anchor.
    pub lagged_audit: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { thresholds: Vec::new(), objective: ObjectiveMethod::Approx, stride: 1, anchor_stride: None, lagged_audit: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub json: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), json: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub simulation: SimulationConfig,
    pub assimilation: AssimilationConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
    pub validation: ValidationConfig,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hash of everything that affects numeric output (the output location
    /// excluded).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn model_hash(&self) -> String {
        sha256_hex(self.model.active_json().to_string().as_bytes())
    }

    /// Consistency checks that need no computation.
    pub fn check(&self) -> Result<()> {
        let s = &self.simulation;
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(Error::Config(format!("simulation.dt must be positive, got {}", s.dt)));
        }
        if !(s.t_end > 0.0) || !s.t_end.is_finite() {
            return Err(Error::Config(format!("simulation.t_end must be positive, got {}", s.t_end)));
        }
        if !(s.burn_in >= 0.0) {
            return Err(Error::Config(format!("simulation.burn_in must be nonnegative, got {}", s.burn_in)));
        }
        if self.steps() < 1 {
            return Err(Error::Config("simulation.t_end is shorter than one step".into()));
        }
        if self.analysis.stride == 0 || self.analysis.anchor_stride == Some(0) || self.assimilation.window == Some(0) {
            return Err(Error::Config("strides and window must be positive".into()));
        }
        if self.analysis.thresholds.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Config("thresholds must be nonnegative".into()));
        }
        Ok(())
    }

    /// Kept steps `N = round(t_end / dt)`.
    pub fn steps(&self) -> usize {
        (self.simulation.t_end / self.simulation.dt).round() as usize
    }

    pub fn initial_state(&self, model: &CgnsModel) -> Result<(DVector<f64>, DVector<f64>)> {
        let pick = |v: &[f64], n: usize, what: &'static str| {
            if v.is_empty() {
                Ok(DVector::zeros(n))
            } else if v.len() == n {
                Ok(DVector::from_column_slice(v))
            } else {
                Err(Error::DimensionMismatch { context: what, expected: n, found: v.len() })
            }
        };
        Ok((
            pick(&self.simulation.x0, model.k, "simulation.x0")?,
            pick(&self.simulation.y0, model.l, "simulation.y0")?,
        ))
    }

    pub fn prior(&self, model: &CgnsModel) -> Result<GaussianState> {
        let l = model.l;
        let a = &self.assimilation;
        let mean = if a.init_mean.is_empty() {
            DVector::zeros(l)
        } else if a.init_mean.len() == l {
            DVector::from_column_slice(&a.init_mean)
        } else {
            return Err(Error::DimensionMismatch { context: "assimilation.init_mean", expected: l, found: a.init_mean.len() });
        };
        let cov = if a.init_cov.is_empty() {
            DMatrix::identity(l, l)
        } else if a.init_cov.len() == l * l {
            DMatrix::from_row_slice(l, l, &a.init_cov)
        } else {
            return Err(Error::DimensionMismatch { context: "assimilation.init_cov", expected: l * l, found: a.init_cov.len() });
        };
        GaussianState::new(mean, cov)
    }

    pub fn partition(&self, model: &CgnsModel) -> Result<ObservationPartition> {
        if self.assimilation.targets.is_empty() {
            Ok(ObservationPartition::all_targets(model.k))
        } else {
            ObservationPartition::from_labels(model, &self.assimilation.targets)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn customized_round_trips() {
        let mut c = RunConfig::default();
        c.model.name = ModelName::Enso;
        c.model.enso.params = EnsoParams::shipped();
        c.assimilation.window = Some(300);
        c.assimilation.targets = vec!["T_E".into()];
        c.assimilation.init_cov = vec![0.5];
        c.analysis.thresholds = vec![1e-3, 0.1];
        c.analysis.anchor_stride = Some(7);
        c.simulation.dt = 0.1 + 0.2;
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[simulation]\ndtt = 1.0\n"), Err(Error::Config(_))));
    }

    #[test]
    fn bad_step_is_a_config_error() {
        let mut c = RunConfig::default();
        c.simulation.dt = 0.0;
        assert!(matches!(c.check(), Err(Error::Config(_))));
        c.simulation.dt = -1.0;
        assert!(matches!(c.check(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.simulation.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn every_model_builds() {
        for name in [ModelName::Dyad, ModelName::PredatorPrey, ModelName::Linear, ModelName::Enso, ModelName::Chain] {
            let cfg = ModelConfig { name, ..Default::default() };
            let m = cfg.build().unwrap();
            assert_eq!(m.observed_labels.len(), m.k);
        }
    }

    #[test]
    fn prior_shapes_are_checked() {
        let mut c = RunConfig::default();
        let m = c.model.build().unwrap();
        assert_eq!(c.prior(&m).unwrap(), GaussianState::standard(1));
        c.assimilation.init_cov = vec![1.0, 0.0];
        assert!(c.prior(&m).is_err());
    }
}

//! Time-resolved causal strength: the relative entropy between the smoother
//! and filter posteriors of the candidate cause at every grid point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assim::{conditional_paths, ConditionalStrategy};
use crate::error::{Error, Result};
use crate::gaussian::{signal_dispersion, GaussianPath, GaussianState};
use crate::model::{CgnsModel, ObservationPartition};
use crate::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AciMode {
    Unconditional,
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AciSeries {
    pub times: Vec<f64>,
    /// Nats.
    pub values: Vec<f64>,
    pub mode: AciMode,
    pub cause_labels: Vec<String>,
    pub effect_labels: Vec<String>,
    pub conditioning_labels: Vec<String>,
}

impl AciSeries {
    pub fn with_labels(mut self, cause: &[String], effect: &[String], conditioning: &[String]) -> Self {
        self.cause_labels = cause.to_vec();
        self.effect_labels = effect.to_vec();
        self.conditioning_labels = conditioning.to_vec();
        self
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

fn check_grids(filter: &GaussianPath, smoother: &GaussianPath) -> Result<()> {
    if filter.times != smoother.times {
        return Err(Error::GridMismatch(format!(
            "filter has {} points, smoother has {}",
            filter.len(),
            smoother.len()
        )));
    }
    if filter.dim() != smoother.dim() {
        return Err(Error::DimensionMismatch {
            context: "filter/smoother hidden dimension",
            expected: filter.dim(),
            found: smoother.dim(),
        });
    }
    Ok(())
}

/// Signal and dispersion components at every grid point.
pub fn aci_signal_dispersion_series(filter: &GaussianPath, smoother: &GaussianPath) -> Result<(Vec<f64>, Vec<f64>)> {
    check_grids(filter, smoother)?;
    let parts: Vec<(f64, f64)> = smoother
        .states
        .par_iter()
        .zip(filter.states.par_iter())
        .map(|(s, f)| signal_dispersion(s, f))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().unzip())
}

/// `P(smoother_j, filter_j)` for every `j`.
pub fn aci_series(filter: &GaussianPath, smoother: &GaussianPath) -> Result<AciSeries> {
    let (signal, dispersion) = aci_signal_dispersion_series(filter, smoother)?;
    Ok(AciSeries {
        times: filter.times.clone(),
        values: signal.iter().zip(&dispersion).map(|(s, d)| s + d).collect(),
        mode: AciMode::Unconditional,
        cause_labels: Vec::new(),
        effect_labels: Vec::new(),
        conditioning_labels: Vec::new(),
    })
}

/// Causal strength from the hidden variables to the target observations,
/// beyond what the non-target observations explain.
pub fn conditional_aci_series(
    model: &CgnsModel,
    trajectory: &Trajectory,
    partition: &ObservationPartition,
    init: &GaussianState,
    strategy: ConditionalStrategy,
) -> Result<AciSeries> {
    let (filter, smoother) = conditional_paths(model, &trajectory.x, trajectory.dt, partition, init, strategy)?;
    let mut series = aci_series(&filter, &smoother)?;
    let names = |idx: &[usize]| idx.iter().map(|&i| model.observed_labels[i].clone()).collect::<Vec<_>>();
    series.cause_labels = model.hidden_labels.clone();
    series.effect_labels = names(&partition.target_indices);
    series.conditioning_labels = names(&partition.nontarget_indices);
    if partition.has_nontarget() {
        series.mode = AciMode::Conditional;
    }
    Ok(series)
}

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::online::{sweep, LaggedFamily, OnlineSmoother};
use super::{filter_with, smooth_with};
use crate::error::Result;
use crate::gaussian::{GaussianPath, GaussianState};
use crate::model::{reduce_with_forcing, target_series, CgnsModel, ObservationPartition};

/// How the non-target observations are removed from the assimilation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionalStrategy {
    /// Null the non-target block of `Sxx⁻¹` in every gain.
    #[default]
    GainNulling,
    /// Treat the non-target observations as a prescribed forcing of a reduced model.
    ReducedForcing,
}

#[derive(Debug, Clone)]
pub struct ConditionalOutput {
    pub filter: GaussianPath,
    pub smoother: GaussianPath,
    pub families: BTreeMap<usize, LaggedFamily>,
    pub online: OnlineSmoother,
}

/// The model, observations and gain partition a strategy actually runs on.
struct Prepared {
    model: CgnsModel,
    x: Vec<DVector<f64>>,
    nulled: Option<ObservationPartition>,
}

fn prepare(model: &CgnsModel, x: &[DVector<f64>], dt: f64, partition: &ObservationPartition, strategy: ConditionalStrategy) -> Result<Prepared> {
    if !partition.has_nontarget() {
        return Ok(Prepared { model: model.clone(), x: x.to_vec(), nulled: None });
    }
    match strategy {
        ConditionalStrategy::GainNulling => Ok(Prepared {
            model: model.clone(),
            x: x.to_vec(),
            nulled: Some(partition.clone()),
        }),
        ConditionalStrategy::ReducedForcing => {
            let times = super::grid(x.len(), dt);
            Ok(Prepared {
                model: reduce_with_forcing(model, partition, &times, x)?,
                x: target_series(partition, x),
                nulled: None,
            })
        }
    }
}

/// Conditional filter and batch smoother only.
pub(crate) fn conditional_paths(
    model: &CgnsModel,
    x: &[DVector<f64>],
    dt: f64,
    partition: &ObservationPartition,
    init: &GaussianState,
    strategy: ConditionalStrategy,
) -> Result<(GaussianPath, GaussianPath)> {
    let p = prepare(model, x, dt, partition, strategy)?;
    let f = filter_with(&p.model, &p.x, dt, init, p.nulled.as_ref())?;
    let s = smooth_with(&p.model, &p.x, dt, &f, p.nulled.as_ref())?;
    Ok((f, s))
}

/// Filter, smoother and lagged families of `y` in which only the target
/// observations update the posterior; non-target observations still enter
/// every drift evaluation.
///
/// With an empty non-target block this runs the plain pipeline.
#[allow(clippy::too_many_arguments)]
pub fn conditional_filter_smoother(
    model: &CgnsModel,
    x: &[DVector<f64>],
    dt: f64,
    partition: &ObservationPartition,
    init: &GaussianState,
    strategy: ConditionalStrategy,
    window: usize,
    anchors: &[usize],
) -> Result<ConditionalOutput> {
    let p = prepare(model, x, dt, partition, strategy)?;
    let nulled = p.nulled.as_ref();
    let filter = filter_with(&p.model, &p.x, dt, init, nulled)?;
    let smoother = smooth_with(&p.model, &p.x, dt, &filter, nulled)?;
    let online = OnlineSmoother::with_partition(&p.model, &p.x, dt, &filter, nulled)?;
    let families = sweep(&online, window, anchors)?;
    Ok(ConditionalOutput { filter, smoother, families, online })
}

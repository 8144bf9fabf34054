//! Conditional Gaussian nonlinear systems.
//!
//! A CGNS splits the state into observed variables `x` (dimension `k`) and
//! hidden variables `y` (dimension `l`):
//!
//! ```text
//! dx = (Λx(t,x) y + fx(t,x)) dt + Σx1(t,x) dW1 + Σx2(t,x) dW2
//! dy = (Λy(t,x) y + fy(t,x)) dt + Σy1(t,x) dW1 + Σy2(t,x) dW2
//! ```
//!
//! Coefficient callbacks only ever see `(t, x)`, so conditional linearity in
//! `y` and the `y`-independence of the noise feedbacks hold by construction.

mod dyad;
pub mod enso;
mod linear;
mod predator_prey;
mod reduce;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{factor_spd, DEFAULT_CONDITION_CAP};

pub use dyad::{dyad_model, DyadParams};
pub use enso::{enso_model, EnsoParams, EnsoVariable};
pub use linear::{linear_model, LinearParams};
pub use predator_prey::{predator_prey_model, Observed, PredatorPreyParams};
pub use reduce::{reduce_with_forcing, target_series};

/// Coefficient values of a CGNS at one `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    /// `k × l`
    pub lambda_x: DMatrix<f64>,
    /// `k`
    pub f_x: DVector<f64>,
    /// `k × d1`
    pub sigma_x1: DMatrix<f64>,
    /// `k × d2`
    pub sigma_x2: DMatrix<f64>,
    /// `l × l`
    pub lambda_y: DMatrix<f64>,
    /// `l`
    pub f_y: DVector<f64>,
    /// `l × d1`
    pub sigma_y1: DMatrix<f64>,
    /// `l × d2`
    pub sigma_y2: DMatrix<f64>,
}

impl Coefficients {
    /// All-zero coefficients of the given shape.
    pub fn zeros(k: usize, l: usize, d1: usize, d2: usize) -> Self {
        Self {
            lambda_x: DMatrix::zeros(k, l),
            f_x: DVector::zeros(k),
            sigma_x1: DMatrix::zeros(k, d1),
            sigma_x2: DMatrix::zeros(k, d2),
            lambda_y: DMatrix::zeros(l, l),
            f_y: DVector::zeros(l),
            sigma_y1: DMatrix::zeros(l, d1),
            sigma_y2: DMatrix::zeros(l, d2),
        }
    }

    /// Drift of `x` given a hidden state.
    pub fn drift_x(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.lambda_x * y + &self.f_x
    }

    /// Drift of `y` given a hidden state.
    pub fn drift_y(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.lambda_y * y + &self.f_y
    }
}

pub type CoefficientFn = dyn Fn(f64, &DVector<f64>) -> Coefficients + Send + Sync;

/// One CGNS factorization `(observed x, hidden y)`.
///
/// Cheap to clone; the coefficient callback is shared.
#[derive(Clone)]
pub struct CgnsModel {
    pub name: String,
    pub k: usize,
    pub l: usize,
    pub d1: usize,
    pub d2: usize,
    pub observed_labels: Vec<String>,
    pub hidden_labels: Vec<String>,
    /// Largest accepted condition number of the observation Gramian.
    pub condition_cap: f64,
    coeff: Arc<CoefficientFn>,
}

impl fmt::Debug for CgnsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CgnsModel")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("l", &self.l)
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("observed_labels", &self.observed_labels)
            .field("hidden_labels", &self.hidden_labels)
            .finish_non_exhaustive()
    }
}

impl CgnsModel {
    /// Wrap a coefficient callback. Labels default to `x1..xk`, `y1..yl`.
    pub fn new<F>(name: impl Into<String>, k: usize, l: usize, d1: usize, d2: usize, coeff: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> Coefficients + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            k,
            l,
            d1,
            d2,
            observed_labels: (1..=k).map(|i| format!("x{i}")).collect(),
            hidden_labels: (1..=l).map(|i| format!("y{i}")).collect(),
            condition_cap: DEFAULT_CONDITION_CAP,
            coeff: Arc::new(coeff),
        }
    }

    pub fn with_labels(mut self, observed: &[&str], hidden: &[&str]) -> Self {
        assert_eq!(observed.len(), self.k, "one label per observed component");
        assert_eq!(hidden.len(), self.l, "one label per hidden component");
        self.observed_labels = observed.iter().map(|s| s.to_string()).collect();
        self.hidden_labels = hidden.iter().map(|s| s.to_string()).collect();
        self
    }

    /// Evaluate every coefficient at `(t, x)`, checking shapes.
    pub fn coefficients(&self, t: f64, x: &DVector<f64>) -> Result<Coefficients> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch {
                context: "observed state",
                expected: self.k,
                found: x.len(),
            });
        }
        let c = (self.coeff)(t, x);
        let shapes = [
            (c.lambda_x.shape(), (self.k, self.l)),
            (c.f_x.shape(), (self.k, 1)),
            (c.sigma_x1.shape(), (self.k, self.d1)),
            (c.sigma_x2.shape(), (self.k, self.d2)),
            (c.lambda_y.shape(), (self.l, self.l)),
            (c.f_y.shape(), (self.l, 1)),
            (c.sigma_y1.shape(), (self.l, self.d1)),
            (c.sigma_y2.shape(), (self.l, self.d2)),
        ];
        for (got, want) in shapes {
            if got != want {
                return Err(Error::DimensionMismatch {
                    context: "coefficient callback output",
                    expected: want.0 * want.1,
                    found: got.0 * got.1,
                });
            }
        }
        Ok(c)
    }

    pub(crate) fn raw_coefficients(&self, t: f64, x: &DVector<f64>) -> Coefficients {
        (self.coeff)(t, x)
    }

    /// The same model seen on a clock that starts at `offset`: coefficients
    /// at `t` are those of the original model at `t + offset`.
    pub fn time_shifted(&self, offset: f64) -> CgnsModel {
        let inner = Arc::clone(&self.coeff);
        let mut shifted = self.clone();
        shifted.coeff = Arc::new(move |t, x| inner(t + offset, x));
        shifted
    }
}

/// Target / non-target split of the observed variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationPartition {
    pub target_indices: Vec<usize>,
    pub nontarget_indices: Vec<usize>,
}

impl ObservationPartition {
    /// Validate a partition of `0..k`.
    pub fn new(k: usize, target: Vec<usize>, nontarget: Vec<usize>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::InvalidPartition("target block is empty".into()));
        }
        let mut seen = vec![false; k];
        for &i in target.iter().chain(&nontarget) {
            if i >= k {
                return Err(Error::InvalidPartition(format!("index {i} out of range 0..{k}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPartition(format!("index {i} listed twice")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidPartition("partition does not cover every observed index".into()));
        }
        Ok(Self {
            target_indices: target,
            nontarget_indices: nontarget,
        })
    }

    /// Everything is a target; the conditional pipeline reduces to the plain one.
    pub fn all_targets(k: usize) -> Self {
        Self {
            target_indices: (0..k).collect(),
            nontarget_indices: Vec::new(),
        }
    }

    /// Build from observed labels.
    pub fn from_labels(model: &CgnsModel, target: &[String]) -> Result<Self> {
        let mut t = Vec::new();
        for name in target {
            let i = model
                .observed_labels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::InvalidPartition(format!("unknown observed label `{name}`")))?;
            t.push(i);
        }
        let rest = (0..model.k).filter(|i| !t.contains(i)).collect();
        Self::new(model.k, t, rest)
    }

    pub fn k(&self) -> usize {
        self.target_indices.len() + self.nontarget_indices.len()
    }

    pub fn has_nontarget(&self) -> bool {
        !self.nontarget_indices.is_empty()
    }
}

/// The four noise Gramians at one `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianBundle {
    pub sxx: DMatrix<f64>,
    pub sxy: DMatrix<f64>,
    pub syx: DMatrix<f64>,
    pub syy: DMatrix<f64>,
}

impl GramianBundle {
    pub fn from_coefficients(c: &Coefficients) -> Self {
        let sxx = &c.sigma_x1 * c.sigma_x1.transpose() + &c.sigma_x2 * c.sigma_x2.transpose();
        let syx = &c.sigma_y1 * c.sigma_x1.transpose() + &c.sigma_y2 * c.sigma_x2.transpose();
        let syy = &c.sigma_y1 * c.sigma_y1.transpose() + &c.sigma_y2 * c.sigma_y2.transpose();
        let sxy = syx.transpose();
        Self { sxx, sxy, syx, syy }
    }
}

/// Noise Gramians of `model` at `(t, x)`, rejecting a singular `Sxx`.
pub fn gramians(model: &CgnsModel, t: f64, x: &DVector<f64>) -> Result<GramianBundle> {
    let c = model.coefficients(t, x)?;
    let g = GramianBundle::from_coefficients(&c);
    check_observation_gramian(&g.sxx, t, model.condition_cap)?;
    Ok(g)
}

/// Condition check on `Sxx` (no jitter is applied to observation noise).
pub(crate) fn check_observation_gramian(sxx: &DMatrix<f64>, t: f64, cap: f64) -> Result<()> {
    let condition = observation_condition(sxx);
    if condition.is_finite() && condition <= cap {
        Ok(())
    } else {
        Err(Error::SingularObservationGramian { t, condition })
    }
}

fn observation_condition(sxx: &DMatrix<f64>) -> f64 {
    if sxx.nrows() == 1 {
        return if sxx[(0, 0)] > 0.0 { 1.0 } else { f64::INFINITY };
    }
    let eig = sxx.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `Sxx⁻¹`, or its target-block restriction when `partition` has a non-target block.
///
/// Zeroing the non-target rows and columns is the infinite-uncertainty limit
/// for those observations; it requires the target/non-target cross block of
/// `Sxx` to vanish.
pub(crate) fn observation_precision(
    sxx: &DMatrix<f64>,
    t: f64,
    cap: f64,
    partition: Option<&ObservationPartition>,
) -> Result<DMatrix<f64>> {
    match partition.filter(|p| p.has_nontarget()) {
        None => {
            check_observation_gramian(sxx, t, cap)?;
            invert_gramian(sxx, t)
        }
        Some(p) => {
            let scale = 1.0 + sxx.amax();
            let mut cross = 0.0f64;
            for &a in &p.target_indices {
                for &b in &p.nontarget_indices {
                    cross = cross.max(sxx[(a, b)].abs()).max(sxx[(b, a)].abs());
                }
            }
            if cross > 1e-12 * scale {
                return Err(Error::CrossNoiseViolation { t, value: cross });
            }
            let ka = p.target_indices.len();
            let block = DMatrix::from_fn(ka, ka, |i, j| sxx[(p.target_indices[i], p.target_indices[j])]);
            check_observation_gramian(&block, t, cap)?;
            let inv = invert_gramian(&block, t)?;
            let mut out = DMatrix::zeros(sxx.nrows(), sxx.ncols());
            for (i, &a) in p.target_indices.iter().enumerate() {
                for (j, &b) in p.target_indices.iter().enumerate() {
                    out[(a, b)] = inv[(i, j)];
                }
            }
            Ok(out)
        }
    }
}

fn invert_gramian(sxx: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if sxx.nrows() == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0 / sxx[(0, 0)]));
    }
    factor_spd(sxx, f64::INFINITY)
        .map(|c| c.inverse())
        .ok_or(Error::SingularObservationGramian {
            t,
            condition: f64::INFINITY,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn independent_channels() -> CgnsModel {
        CgnsModel::new("unit", 1, 1, 1, 1, |_, _| {
            let mut c = Coefficients::zeros(1, 1, 1, 1);
            c.sigma_x1[(0, 0)] = 1.0;
            c.sigma_y2[(0, 0)] = 1.0;
            c
        })
    }

    #[test]
    fn gramians_of_independent_channels() {
        let g = gramians(&independent_channels(), 0.0, &DVector::zeros(1)).unwrap();
        assert_eq!(g.sxx[(0, 0)], 1.0);
        assert_eq!(g.syy[(0, 0)], 1.0);
        assert_eq!(g.sxy[(0, 0)], 0.0);
    }

    #[test]
    fn shared_channel_gives_cross_gramian() {
        let m = CgnsModel::new("shared", 1, 1, 2, 0, |_, _| {
            let mut c = Coefficients::zeros(1, 1, 2, 0);
            c.sigma_x1 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
            c.sigma_y1 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
            c
        });
        let g = gramians(&m, 0.0, &DVector::zeros(1)).unwrap();
        assert_eq!(g.sxy[(0, 0)], 1.0);
        assert_eq!(g.syx, g.sxy.transpose());
    }

    #[test]
    fn singular_observation_noise_is_rejected() {
        let m = CgnsModel::new("silent", 1, 1, 1, 1, |_, _| Coefficients::zeros(1, 1, 1, 1));
        assert!(matches!(
            gramians(&m, 0.0, &DVector::zeros(1)),
            Err(Error::SingularObservationGramian { .. })
        ));
    }

    #[test]
    fn wrong_callback_shape_is_caught() {
        let m = CgnsModel::new("bad", 2, 1, 1, 1, |_, _| Coefficients::zeros(1, 1, 1, 1));
        assert!(m.coefficients(0.0, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(ObservationPartition::new(3, vec![0], vec![1, 2]).is_ok());
        assert!(ObservationPartition::new(3, vec![], vec![0, 1, 2]).is_err());
        assert!(ObservationPartition::new(3, vec![0], vec![1]).is_err());
        assert!(ObservationPartition::new(3, vec![0, 0], vec![1, 2]).is_err());
        assert!(ObservationPartition::new(2, vec![0], vec![2]).is_err());
    }

    #[test]
    fn nulled_precision_keeps_only_target_block() {
        let sxx = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 8.0]));
        let p = ObservationPartition::new(3, vec![1], vec![0, 2]).unwrap();
        let prec = observation_precision(&sxx, 0.0, 1e12, Some(&p)).unwrap();
        let mut want = DMatrix::zeros(3, 3);
        want[(1, 1)] = 0.5;
        assert_eq!(prec, want);
    }

    #[test]
    fn nulled_precision_requires_block_diagonal_noise() {
        let sxx = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let p = ObservationPartition::new(2, vec![0], vec![1]).unwrap();
        assert!(matches!(
            observation_precision(&sxx, 0.0, 1e12, Some(&p)),
            Err(Error::CrossNoiseViolation { .. })
        ));
    }
}

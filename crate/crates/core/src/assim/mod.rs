//! Filter, batch smoother and online lagged smoother on the trajectory grid.
//!
//! All recursions are explicit Euler steps on `t_j = j·Δt`, driven by the
//! observed increments `x_{j+1} − x_j`. Coefficients are evaluated at
//! `(t_j, x_j)`.
//!
//! The batch smoother is integrated in difference form: it propagates
//! `δ = μ_s − μ_f` and `Δ = R_s − R_f` backward from zero at `T`,
//!
//! ```text
//! δ_j = δ_{j+1} − Δt M δ_{j+1} + R_f Λxᵀ Sxx⁻¹ ι_j
//! Δ_j = Δ_{j+1} − Δt (M Δ_{j+1} + Δ_{j+1} Mᵀ + R_f Λxᵀ Sxx⁻¹ Λx R_f)
//! ```
//!
//! with `M = A + B R_f⁻¹` and `ι_j` the filter innovation. Whenever the
//! observations carry no information about `y` (no coupling through `Λx`,
//! no shared noise) both corrections stay exactly zero, so smoother and
//! filter coincide bit for bit.

mod conditional;
mod online;
mod window;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{covariance_hygiene, spd_inverse, GaussianPath, GaussianState};
use crate::model::{observation_precision, CgnsModel, Coefficients, GramianBundle, ObservationPartition};

pub(crate) use conditional::conditional_paths;
pub use conditional::{conditional_filter_smoother, ConditionalOutput, ConditionalStrategy};
pub use online::{lagged_smoother_sweep, LaggedFamily, OnlineSmoother};
pub use window::{decorrelation_steps, default_window};

/// Largest filter-covariance trace accepted before a run is declared unstable.
pub const TRACE_CAP: f64 = 1e12;

/// Coefficients, Gramians and (possibly nulled) observation precision at one grid point.
pub(crate) struct StepTerms {
    pub c: Coefficients,
    pub g: GramianBundle,
    pub prec: DMatrix<f64>,
}

impl StepTerms {
    pub(crate) fn new(
        model: &CgnsModel,
        t: f64,
        x: &DVector<f64>,
        partition: Option<&ObservationPartition>,
    ) -> Result<Self> {
        let c = model.coefficients(t, x)?;
        let g = GramianBundle::from_coefficients(&c);
        let prec = observation_precision(&g.sxx, t, model.condition_cap, partition)?;
        Ok(Self { c, g, prec })
    }

    /// `x_{j+1} − x_j − (Λx μ + fx) Δt`
    pub(crate) fn innovation(&self, dx: &DVector<f64>, mean: &DVector<f64>, dt: f64) -> DVector<f64> {
        dx - (&self.c.lambda_x * mean + &self.c.f_x) * dt
    }
}

pub(crate) fn check_series(model: &CgnsModel, x: &[DVector<f64>], dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if x.len() < 2 {
        return Err(Error::GridMismatch("observation series needs at least two points".into()));
    }
    if let Some(bad) = x.iter().find(|v| v.len() != model.k) {
        return Err(Error::DimensionMismatch {
            context: "observation sample",
            expected: model.k,
            found: bad.len(),
        });
    }
    Ok(())
}

pub(crate) fn grid(len: usize, dt: f64) -> Vec<f64> {
    (0..len).map(|j| j as f64 * dt).collect()
}

/// Forward nonlinear filter.
pub fn filter(model: &CgnsModel, x: &[DVector<f64>], dt: f64, init: &GaussianState) -> Result<GaussianPath> {
    filter_with(model, x, dt, init, None)
}

pub(crate) fn filter_with(
    model: &CgnsModel,
    x: &[DVector<f64>],
    dt: f64,
    init: &GaussianState,
    partition: Option<&ObservationPartition>,
) -> Result<GaussianPath> {
    check_series(model, x, dt)?;
    if init.dim() != model.l || init.cov.nrows() != model.l {
        return Err(Error::DimensionMismatch {
            context: "filter initial state",
            expected: model.l,
            found: init.dim(),
        });
    }
    let n = x.len() - 1;
    let mut states = Vec::with_capacity(n + 1);
    states.push(GaussianState {
        mean: init.mean.clone(),
        cov: covariance_hygiene(&init.cov),
    });

    for j in 0..n {
        let t = j as f64 * dt;
        let s = StepTerms::new(model, t, &x[j], partition)?;
        let cur = &states[j];
        let innov = s.innovation(&(&x[j + 1] - &x[j]), &cur.mean, dt);
        let cross = &s.g.syx + &cur.cov * s.c.lambda_x.transpose();
        let gain = &cross * &s.prec;
        let mean = &cur.mean + (&s.c.lambda_y * &cur.mean + &s.c.f_y) * dt + &gain * &innov;
        let drift = &s.c.lambda_y * &cur.cov;
        let cov = &cur.cov + (&drift + drift.transpose() + &s.g.syy - &gain * cross.transpose()) * dt;
        let cov = covariance_hygiene(&cov);
        let trace = cov.trace();
        if !(trace <= TRACE_CAP) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { t: t + dt, value: trace });
        }
        states.push(GaussianState { mean, cov });
    }
    GaussianPath::new(grid(n + 1, dt), states)
}

/// Backward batch smoother started from the filter's terminal state.
pub fn smooth(model: &CgnsModel, x: &[DVector<f64>], dt: f64, filter_path: &GaussianPath) -> Result<GaussianPath> {
    smooth_with(model, x, dt, filter_path, None)
}

pub(crate) fn smooth_with(
    model: &CgnsModel,
    x: &[DVector<f64>],
    dt: f64,
    fp: &GaussianPath,
    partition: Option<&ObservationPartition>,
) -> Result<GaussianPath> {
    check_series(model, x, dt)?;
    if fp.len() != x.len() {
        return Err(Error::GridMismatch(format!(
            "filter path has {} points, observations have {}",
            fp.len(),
            x.len()
        )));
    }
    let n = x.len() - 1;
    let l = model.l;
    let mut delta = DVector::zeros(l);
    let mut spread = DMatrix::zeros(l, l);
    let mut states = vec![GaussianState::standard(l); n + 1];
    states[n] = fp.states[n].clone();

    for j in (0..n).rev() {
        let t = j as f64 * dt;
        let s = StepTerms::new(model, t, &x[j], partition)?;
        let f = &fp.states[j];
        let rinv = spd_inverse(&f.cov, model.condition_cap).ok_or(Error::SingularFilterCovariance { index: j })?;

        let ks = &s.g.syx * &s.prec;
        let a = &s.c.lambda_y - &ks * &s.c.lambda_x;
        let b = &s.g.syy - &ks * &s.g.sxy;
        let m = a + b * rinv;
        let gain = &f.cov * (s.c.lambda_x.transpose() * &s.prec);
        let innov = s.innovation(&(&x[j + 1] - &x[j]), &f.mean, dt);

        let next_delta = &delta - (&m * &delta) * dt + &gain * innov;
        let info = &gain * &s.c.lambda_x * &f.cov;
        let md = &m * &spread;
        let next_spread = &spread - (&md + md.transpose() + info) * dt;
        delta = next_delta;
        spread = next_spread;

        states[j] = GaussianState {
            mean: &f.mean + &delta,
            cov: covariance_hygiene(&(&f.cov + &spread)),
        };
    }
    GaussianPath::new(fp.times.clone(), states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::relative_entropy;
    use crate::model::{dyad_model, linear_model, DyadParams, LinearParams};
    use crate::sim::euler_maruyama;

    fn dyad_run(gamma: f64, n: usize) -> (CgnsModel, Vec<DVector<f64>>) {
        let m = dyad_model(DyadParams { gamma, ..Default::default() }).unwrap();
        let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), 1e-3, n, 17).unwrap();
        (m, tr.x)
    }

    #[test]
    fn decoupled_filter_is_moment_propagation() {
        let (m, x) = dyad_run(0.0, 2000);
        let init = GaussianState::standard(1);
        let fp = filter(&m, &x, 1e-3, &init).unwrap();
        let (mut mu, mut r) = (0.0f64, 1.0f64);
        let p = DyadParams { gamma: 0.0, ..Default::default() };
        for (j, st) in fp.states.iter().enumerate() {
            assert!((st.mean[0] - mu).abs() < 1e-12, "mean at {j}");
            assert!((st.cov[(0, 0)] - r).abs() < 1e-12, "cov at {j}");
            let xj = x[j.min(x.len() - 1)][0];
            mu += (-p.d_y * mu - 0.0 * xj * xj + p.f_y) * 1e-3;
            r += (-2.0 * p.d_y * r + p.sigma_y * p.sigma_y) * 1e-3;
        }
    }

    #[test]
    fn decoupled_smoother_equals_filter_exactly() {
        let (m, x) = dyad_run(0.0, 3000);
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        let sp = smooth(&m, &x, 1e-3, &fp).unwrap();
        assert_eq!(sp.states, fp.states);
    }

    #[test]
    fn terminal_state_is_the_filter_state() {
        let (m, x) = dyad_run(2.0, 3000);
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        let sp = smooth(&m, &x, 1e-3, &fp).unwrap();
        assert_eq!(sp.states.last(), fp.states.last());
        assert!(sp.states[0] != fp.states[0]);
    }

    #[test]
    fn smoother_never_increases_uncertainty() {
        let (m, x) = dyad_run(2.0, 5000);
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        let sp = smooth(&m, &x, 1e-3, &fp).unwrap();
        for (s, f) in sp.states.iter().zip(&fp.states) {
            assert!(s.cov[(0, 0)] <= f.cov[(0, 0)] * (1.0 + 1e-12));
            assert!(relative_entropy(s, f).unwrap() >= 0.0);
        }
    }

    #[test]
    fn filter_variance_reaches_riccati_root() {
        let p = LinearParams { a: 1.0, c: 0.0, d: 0.5, sigma_x: 0.5, sigma_y: 1.0 };
        let m = linear_model(p).unwrap();
        let x = vec![DVector::zeros(1); 40_001];
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        let last = fp.states.last().unwrap().cov[(0, 0)];
        assert!((last - p.riccati_root()).abs() < 1e-3);
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let (m, x) = dyad_run(2.0, 100);
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        assert!(matches!(smooth(&m, &x[..50], 1e-3, &fp), Err(Error::GridMismatch(_))));
        assert!(filter(&m, &x, 1e-3, &GaussianState::standard(2)).is_err());
    }
}

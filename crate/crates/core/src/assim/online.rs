//! Online lagged smoother.
//!
//! For every grid step `i → i+1` the one-step smoother correction at `t_i`
//! is condensed into three pieces: the mean innovation `m^i`, the covariance
//! innovation `c^i`, and the propagator `E^i`. The posterior of `y(t_j)`
//! given observations up to `t_n` is then
//!
//! ```text
//! μ^{j,n} = μ^{j,n−1} + D m^{n−1}
//! R^{j,n} = R^{j,n−1} + D c^{n−1} Dᵀ,      D = E^j E^{j+1} ⋯ E^{n−2}
//! ```
//!
//! starting from the filter posterior at `n = j`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_series, StepTerms};
use crate::error::{Error, Result};
use crate::gaussian::{covariance_hygiene, spd_inverse, GaussianPath, GaussianState};
use crate::model::{CgnsModel, ObservationPartition};

/// Posteriors of `y(t_j)` for a fixed anchor `j` and growing horizons `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedFamily {
    pub anchor: usize,
    /// `states[i]` conditions on observations up to `t_{anchor + i}`.
    pub states: Vec<GaussianState>,
    pub window: usize,
    /// The family stops before the end of the data.
    pub truncated: bool,
}

impl LaggedFamily {
    /// Horizon index of `states[i]`.
    pub fn horizon(&self, i: usize) -> usize {
        self.anchor + i
    }

    pub fn last_horizon(&self) -> usize {
        self.anchor + self.states.len() - 1
    }

    /// The longest-horizon posterior, used as the complete reference.
    pub fn complete(&self) -> &GaussianState {
        self.states.last().expect("family has at least the anchor state")
    }
}

/// Precomputed one-step terms for every grid step, stored flat and column-major.
#[derive(Debug, Clone)]
pub struct OnlineSmoother {
    l: usize,
    steps: usize,
    mean_innov: Vec<f64>,
    cov_innov: Vec<f64>,
    propagator: Vec<f64>,
    filter: Vec<GaussianState>,
}

impl OnlineSmoother {
    pub fn new(model: &CgnsModel, x: &[DVector<f64>], dt: f64, filter_path: &GaussianPath) -> Result<Self> {
        Self::with_partition(model, x, dt, filter_path, None)
    }

    pub(crate) fn with_partition(
        model: &CgnsModel,
        x: &[DVector<f64>],
        dt: f64,
        fp: &GaussianPath,
        partition: Option<&ObservationPartition>,
    ) -> Result<Self> {
        check_series(model, x, dt)?;
        if fp.len() != x.len() {
            return Err(Error::GridMismatch(format!(
                "filter path has {} points, observations have {}",
                fp.len(),
                x.len()
            )));
        }
        let l = model.l;
        let n = x.len() - 1;
        let mut mean_innov = Vec::with_capacity(n * l);
        let mut cov_innov = Vec::with_capacity(n * l * l);
        let mut propagator = Vec::with_capacity(n * l * l);
        let eye = DMatrix::<f64>::identity(l, l);

        for i in 0..n {
            let t = i as f64 * dt;
            let s = StepTerms::new(model, t, &x[i], partition)?;
            let f = &fp.states[i];
            let r = &f.cov;
            let rinv = spd_inverse(r, model.condition_cap).ok_or(Error::SingularFilterCovariance { index: i })?;
            let (lx, ly) = (&s.c.lambda_x, &s.c.lambda_y);

            let gx = lx + &s.g.sxy * &rinv;
            let gy = ly + &s.g.syy * &rinv;
            let lyr = ly * r;
            let h = &rinv * (&lyr + lyr.transpose() + &s.g.syy);
            let k = &s.prec * &gx;
            let kt = k.transpose();
            let e = &eye + (&s.g.syx * &s.prec * &gx - gy) * dt;

            let krk = &k * r * &kt;
            let inner = &kt
                + (gx.transpose() * &krk - &rinv * h.transpose() * r * &kt + ly.transpose() * &kt) * dt
                - lx.transpose() * (&s.prec + krk * dt);
            let fmat = -(r * inner);

            let innov = s.innovation(&(&x[i + 1] - &x[i]), &f.mean, dt);
            let kf = (&s.g.syx + r * lx.transpose()) * &s.prec;
            let m = &e * (&kf * &innov) + &fmat * &innov;

            let rl = r * lx.transpose() * &s.prec;
            let info = &rl * lx * r;
            let c = -(&e * info * e.transpose()) * dt;

            mean_innov.extend_from_slice(m.as_slice());
            cov_innov.extend_from_slice(c.as_slice());
            propagator.extend_from_slice(e.as_slice());
        }

        Ok(Self {
            l,
            steps: n,
            mean_innov,
            cov_innov,
            propagator,
            filter: fp.states.clone(),
        })
    }

    /// Number of grid steps `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    fn m(&self, i: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.mean_innov[i * self.l..(i + 1) * self.l], self.l)
    }

    fn c(&self, i: usize) -> DMatrixView<'_, f64> {
        let q = self.l * self.l;
        DMatrixView::from_slice(&self.cov_innov[i * q..(i + 1) * q], self.l, self.l)
    }

    fn e(&self, i: usize) -> DMatrixView<'_, f64> {
        let q = self.l * self.l;
        DMatrixView::from_slice(&self.propagator[i * q..(i + 1) * q], self.l, self.l)
    }

    /// Lagged posteriors of `y(t_anchor)` for horizons `anchor ..= min(anchor + window, N)`.
    pub fn family(&self, anchor: usize, window: usize) -> Result<LaggedFamily> {
        if anchor > self.steps {
            return Err(Error::InvalidParameter(format!(
                "anchor {anchor} beyond the last grid index {}",
                self.steps
            )));
        }
        if window == 0 {
            return Err(Error::InvalidParameter("window must be at least one step".into()));
        }
        let end = anchor.saturating_add(window).min(self.steps);
        let mut states = Vec::with_capacity(end - anchor + 1);
        let start = self.filter[anchor].clone();
        states.push(start.clone());

        if self.l == 1 {
            let (mut mu, mut r, mut d) = (start.mean[0], start.cov[(0, 0)], 1.0f64);
            for i in anchor..end {
                mu += d * self.mean_innov[i];
                r += d * self.cov_innov[i] * d;
                d *= self.propagator[i];
                let cov = covariance_hygiene(&DMatrix::from_element(1, 1, r));
                states.push(GaussianState { mean: DVector::from_element(1, mu), cov });
            }
        } else {
            let l = self.l;
            let mut mu = start.mean;
            let mut r = start.cov;
            let mut d = DMatrix::<f64>::identity(l, l);
            let mut dc = DMatrix::<f64>::zeros(l, l);
            let mut next_d = DMatrix::<f64>::zeros(l, l);
            for i in anchor..end {
                mu.gemv(1.0, &d, &self.m(i), 1.0);
                dc.gemm(1.0, &d, &self.c(i), 0.0);
                r.gemm(1.0, &dc, &d.transpose(), 1.0);
                next_d.gemm(1.0, &d, &self.e(i), 0.0);
                std::mem::swap(&mut d, &mut next_d);
                states.push(GaussianState { mean: mu.clone(), cov: covariance_hygiene(&r) });
            }
        }

        Ok(LaggedFamily {
            anchor,
            states,
            window,
            truncated: end < self.steps,
        })
    }
}

/// Lagged families for every requested anchor, computed in parallel.
pub fn lagged_smoother_sweep(
    model: &CgnsModel,
    x: &[DVector<f64>],
    dt: f64,
    filter_path: &GaussianPath,
    window: usize,
    anchors: &[usize],
) -> Result<BTreeMap<usize, LaggedFamily>> {
    let online = OnlineSmoother::new(model, x, dt, filter_path)?;
    sweep(&online, window, anchors)
}

pub(crate) fn sweep(online: &OnlineSmoother, window: usize, anchors: &[usize]) -> Result<BTreeMap<usize, LaggedFamily>> {
    let families: Vec<LaggedFamily> = anchors
        .par_iter()
        .map(|&j| online.family(j, window))
        .collect::<Result<_>>()?;
    Ok(families.into_iter().map(|f| (f.anchor, f)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assim::{filter, smooth};
    use crate::model::{dyad_model, Coefficients, DyadParams};
    use crate::sim::euler_maruyama;

    fn dyad(gamma: f64, n: usize, dt: f64) -> (CgnsModel, Vec<DVector<f64>>) {
        let m = dyad_model(DyadParams { gamma, ..Default::default() }).unwrap();
        let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), dt, n, 23).unwrap();
        (m, tr.x)
    }

    #[test]
    fn anchor_state_is_the_filter() {
        let (m, x) = dyad(2.0, 2000, 1e-3);
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        let fams = lagged_smoother_sweep(&m, &x, 1e-3, &fp, 500, &[0, 700, 2000]).unwrap();
        for (j, fam) in &fams {
            assert_eq!(&fam.states[0], &fp.states[*j]);
        }
        assert!(fams[&0].truncated);
        assert!(!fams[&2000].truncated);
        assert_eq!(fams[&2000].states.len(), 1);
    }

    #[test]
    fn decoupled_families_stay_at_the_filter() {
        let (m, x) = dyad(0.0, 2000, 1e-3);
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        let fams = lagged_smoother_sweep(&m, &x, 1e-3, &fp, 5000, &[0, 1000]).unwrap();
        for (j, fam) in &fams {
            assert!(fam.states.iter().all(|s| s == &fp.states[*j]));
        }
    }

    #[test]
    fn complete_family_tracks_batch_smoother() {
        let (m, x) = dyad(2.0, 4000, 1e-3);
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        let sp = smooth(&m, &x, 1e-3, &fp).unwrap();
        let fams = lagged_smoother_sweep(&m, &x, 1e-3, &fp, 4000, &[0, 1500, 3000]).unwrap();
        for (j, fam) in &fams {
            let c = fam.complete();
            assert!((c.mean[0] - sp.states[*j].mean[0]).abs() < 0.05);
            assert!((c.cov[(0, 0)] - sp.states[*j].cov[(0, 0)]).abs() < 0.05);
        }
    }

    #[test]
    fn matrix_path_agrees_with_scalar_path() {
        // Two identical uncoupled copies of the dyad hidden variable: the
        // l = 2 recursion must reproduce the l = 1 result on each copy.
        let p = DyadParams::default();
        let two = CgnsModel::new("twin", 1, 2, 1, 2, move |_, x| {
            let x = x[0];
            let mut c = Coefficients::zeros(1, 2, 1, 2);
            c.lambda_x[(0, 0)] = p.gamma * x;
            c.f_x[0] = -p.d_x * x + p.f_x;
            c.sigma_x1[(0, 0)] = p.sigma_x;
            c.lambda_y[(0, 0)] = -p.d_y;
            c.lambda_y[(1, 1)] = -p.d_y;
            c.f_y[0] = -p.gamma * x * x + p.f_y;
            c.f_y[1] = -p.gamma * x * x + p.f_y;
            c.sigma_y2[(0, 0)] = p.sigma_y;
            c.sigma_y2[(1, 1)] = p.sigma_y;
            c
        });
        let (one, x) = dyad(2.0, 1500, 1e-3);
        let f1 = filter(&one, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        let f2 = filter(&two, &x, 1e-3, &GaussianState::standard(2)).unwrap();
        let a = lagged_smoother_sweep(&one, &x, 1e-3, &f1, 800, &[100]).unwrap();
        let b = lagged_smoother_sweep(&two, &x, 1e-3, &f2, 800, &[100]).unwrap();
        for (s1, s2) in a[&100].states.iter().zip(&b[&100].states) {
            assert!((s1.mean[0] - s2.mean[0]).abs() < 1e-9);
            assert!((s1.cov[(0, 0)] - s2.cov[(0, 0)]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_window_is_rejected() {
        let (m, x) = dyad(2.0, 100, 1e-3);
        let fp = filter(&m, &x, 1e-3, &GaussianState::standard(1)).unwrap();
        assert!(lagged_smoother_sweep(&m, &x, 1e-3, &fp, 0, &[0]).is_err());
        assert!(lagged_smoother_sweep(&m, &x, 1e-3, &fp, 10, &[101]).is_err());
    }
}

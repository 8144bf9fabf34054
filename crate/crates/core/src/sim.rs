//! Euler–Maruyama simulation of CGNS models.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CgnsModel;

/// Largest state magnitude tolerated before a run is declared unstable.
pub const DEFAULT_BLOWUP_CAP: f64 = 1e8;

/// A simulated realization on the uniform grid `t_j = j·Δt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub seed: u64,
    pub dt: f64,
}

impl Trajectory {
    /// Number of steps `N` (one less than the number of grid points).
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn span(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    /// Keep every `stride`-th grid point. The result observes the same
    /// Brownian path on a coarser grid.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        assert!(stride >= 1, "stride must be positive");
        let pick = |v: &Vec<DVector<f64>>| v.iter().step_by(stride).cloned().collect::<Vec<_>>();
        let x = pick(&self.x);
        let dt = self.dt * stride as f64;
        Trajectory {
            times: uniform_grid(x.len(), dt),
            y: pick(&self.y),
            x,
            seed: self.seed,
            dt,
        }
    }

    /// Times, observed path and hidden path reassembled from raw columns.
    pub fn from_parts(times: Vec<f64>, x: Vec<DVector<f64>>, y: Vec<DVector<f64>>, seed: u64) -> Result<Self> {
        if times.len() < 2 || x.len() != times.len() || y.len() != times.len() {
            return Err(Error::GridMismatch(format!(
                "trajectory needs matching lengths of at least 2 (times {}, x {}, y {})",
                times.len(),
                x.len(),
                y.len()
            )));
        }
        let dt = times[1] - times[0];
        check_uniform(&times, dt)?;
        Ok(Self { times, x, y, seed, dt })
    }
}

pub(crate) fn uniform_grid(len: usize, dt: f64) -> Vec<f64> {
    (0..len).map(|j| j as f64 * dt).collect()
}

pub(crate) fn check_uniform(times: &[f64], dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::GridMismatch(format!("grid step {dt} is not positive")));
    }
    let t0 = times[0];
    for (j, &t) in times.iter().enumerate() {
        if (t - t0 - j as f64 * dt).abs() > 1e-12 * dt * (j as f64).max(1.0) {
            return Err(Error::GridMismatch(format!("grid is not uniform at index {j}")));
        }
    }
    Ok(())
}

/// Integrate `model` from `(x0, y0)` for `n` steps of size `dt`.
///
/// Both Wiener channels are drawn from one ChaCha8 stream seeded by `seed`,
/// `d1` components then `d2` components per step, so the output depends only
/// on `(model, x0, y0, dt, n, seed)`.
pub fn euler_maruyama(
    model: &CgnsModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    euler_maruyama_with_cap(model, x0, y0, dt, n, seed, DEFAULT_BLOWUP_CAP)
}

pub fn euler_maruyama_with_cap(
    model: &CgnsModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    dt: f64,
    n: usize,
    seed: u64,
    cap: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("step count must be at least 1".into()));
    }
    if x0.len() != model.k {
        return Err(Error::DimensionMismatch { context: "initial x", expected: model.k, found: x0.len() });
    }
    if y0.len() != model.l {
        return Err(Error::DimensionMismatch { context: "initial y", expected: model.l, found: y0.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq = dt.sqrt();
    let mut xs = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    xs.push(x0.clone());
    ys.push(y0.clone());
    let mut dw1 = DVector::zeros(model.d1);
    let mut dw2 = DVector::zeros(model.d2);

    for j in 0..n {
        let t = j as f64 * dt;
        let (x, y) = (&xs[j], &ys[j]);
        let c = model.coefficients(t, x)?;
        for v in dw1.iter_mut().chain(dw2.iter_mut()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = sq * z;
        }
        let xn = x + c.drift_x(y) * dt + &c.sigma_x1 * &dw1 + &c.sigma_x2 * &dw2;
        let yn = y + c.drift_y(y) * dt + &c.sigma_y1 * &dw1 + &c.sigma_y2 * &dw2;
        let mag = xn.amax().max(yn.amax());
        if !(mag <= cap) {
            return Err(Error::NumericalBlowup { t: t + dt, value: mag });
        }
        xs.push(xn);
        ys.push(yn);
    }

    Ok(Trajectory {
        times: uniform_grid(n + 1, dt),
        x: xs,
        y: ys,
        seed,
        dt,
    })
}

/// Number of grid points dropped by [`burn_in_split`]: `burn / Δt` rounded down.
pub fn burn_in_steps(dt: f64, burn: f64) -> usize {
    (burn / dt + 1e-9).floor().max(0.0) as usize
}

/// Drop the initial `burn` time units and re-origin the grid at 0.
pub fn burn_in_split(traj: &Trajectory, burn: f64) -> Result<Trajectory> {
    let span = traj.span();
    let skip = burn_in_steps(traj.dt, burn);
    if !(burn >= 0.0) || skip >= traj.steps() {
        return Err(Error::InvalidBurn { burn, span });
    }
    let x = traj.x[skip..].to_vec();
    Ok(Trajectory {
        times: uniform_grid(x.len(), traj.dt),
        y: traj.y[skip..].to_vec(),
        x,
        seed: traj.seed,
        dt: traj.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dyad_model, Coefficients, DyadParams};

    fn ou(a: f64, sigma: f64) -> CgnsModel {
        CgnsModel::new("ou", 1, 1, 1, 1, move |_, _| {
            let mut c = Coefficients::zeros(1, 1, 1, 1);
            c.sigma_x1[(0, 0)] = 1.0;
            c.lambda_y[(0, 0)] = -a;
            c.sigma_y2[(0, 0)] = sigma;
            c
        })
    }

    #[test]
    fn frozen_dynamics_stay_at_the_initial_point() {
        let m = CgnsModel::new("frozen", 2, 1, 1, 1, |_, _| Coefficients::zeros(2, 1, 1, 1));
        let x0 = DVector::from_vec(vec![1.5, -2.0]);
        let y0 = DVector::from_element(1, 0.25);
        let tr = euler_maruyama(&m, &x0, &y0, 0.01, 50, 1).unwrap();
        assert!(tr.x.iter().all(|x| x == &x0));
        assert!(tr.y.iter().all(|y| y == &y0));
    }

    #[test]
    fn same_seed_same_path() {
        let m = dyad_model(DyadParams::default()).unwrap();
        let x0 = DVector::zeros(1);
        let a = euler_maruyama(&m, &x0, &x0, 1e-3, 2000, 42).unwrap();
        let b = euler_maruyama(&m, &x0, &x0, 1e-3, 2000, 42).unwrap();
        let c = euler_maruyama(&m, &x0, &x0, 1e-3, 2000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn ou_stationary_variance() {
        let (a, sigma) = (1.0, 0.8);
        let tr = euler_maruyama(&ou(a, sigma), &DVector::zeros(1), &DVector::zeros(1), 0.01, 1_000_000, 7).unwrap();
        let ys: Vec<f64> = tr.y.iter().skip(1000).map(|y| y[0]).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ys.len() as f64;
        let want = sigma * sigma / (2.0 * a);
        assert!((var - want).abs() < 0.05 * want, "variance {var} vs {want}");
    }

    #[test]
    fn channels_are_uncorrelated() {
        let m = CgnsModel::new("noise", 1, 1, 1, 1, |_, _| {
            let mut c = Coefficients::zeros(1, 1, 1, 1);
            c.sigma_x1[(0, 0)] = 1.0;
            c.sigma_y2[(0, 0)] = 1.0;
            c
        });
        let n = 1_000_000;
        let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), 1.0, n, 9).unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for j in 0..n {
            let dx = tr.x[j + 1][0] - tr.x[j][0];
            let dy = tr.y[j + 1][0] - tr.y[j][0];
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn blowup_is_detected() {
        let m = CgnsModel::new("explode", 1, 1, 1, 1, |_, x| {
            let mut c = Coefficients::zeros(1, 1, 1, 1);
            c.f_x[0] = 10.0 * x[0];
            c.sigma_x1[(0, 0)] = 1.0;
            c
        });
        let r = euler_maruyama(&m, &DVector::from_element(1, 1.0), &DVector::zeros(1), 0.5, 1000, 0);
        assert!(matches!(r, Err(Error::NumericalBlowup { .. })));
    }

    #[test]
    fn invalid_step_is_rejected() {
        let m = dyad_model(DyadParams::default()).unwrap();
        assert!(euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), 0.0, 10, 0).is_err());
    }

    #[test]
    fn burn_in_arithmetic() {
        let m = dyad_model(DyadParams::default()).unwrap();
        let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), 0.01, 2000, 3).unwrap();
        assert_eq!(burn_in_split(&tr, 0.0).unwrap(), tr);
        let cut = burn_in_split(&tr, 10.0).unwrap();
        assert_eq!(cut.times.len(), 1001);
        assert_eq!(cut.times[0], 0.0);
        assert_eq!(cut.x[0], tr.x[1000]);
        let rounded = burn_in_split(&tr, 10.005).unwrap();
        assert_eq!(rounded.x[0], tr.x[1000]);
        assert!(matches!(burn_in_split(&tr, 20.0), Err(Error::InvalidBurn { .. })));
    }

    #[test]
    fn subsampling_keeps_the_path() {
        let m = dyad_model(DyadParams::default()).unwrap();
        let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), 1e-3, 100, 3).unwrap();
        let coarse = tr.subsample(4);
        assert_eq!(coarse.times.len(), 26);
        assert_eq!(coarse.x[5], tr.x[20]);
        assert!((coarse.dt - 4e-3).abs() < 1e-18);
    }
}

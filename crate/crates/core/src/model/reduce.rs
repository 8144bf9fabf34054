use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{CgnsModel, Coefficients, GramianBundle, ObservationPartition};
use crate::error::{Error, Result};

/// Turn the non-target observations into a prescribed forcing.
///
/// The returned model observes only the target block `x_A`; whenever its
/// coefficients are evaluated at `t`, `x_B` is taken from `x_path` on the
/// grid `times` by sample-and-hold (the latest grid point at or before `t`).
/// With an empty non-target block the original model is returned.
pub fn reduce_with_forcing(
    model: &CgnsModel,
    partition: &ObservationPartition,
    times: &[f64],
    x_path: &[DVector<f64>],
) -> Result<CgnsModel> {
    if partition.k() != model.k {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} observed components, model has {}",
            partition.k(),
            model.k
        )));
    }
    if !partition.has_nontarget() {
        return Ok(model.clone());
    }
    if times.len() != x_path.len() || times.len() < 2 {
        return Err(Error::GridMismatch(format!(
            "forcing series has {} times and {} samples",
            times.len(),
            x_path.len()
        )));
    }
    let t0 = times[0];
    let dt = times[1] - times[0];
    for (j, &t) in times.iter().enumerate() {
        if (t - (t0 + j as f64 * dt)).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::GridMismatch(format!("forcing grid is not uniform at index {j}")));
        }
    }
    if let Some(bad) = x_path.iter().position(|x| x.len() != model.k) {
        return Err(Error::DimensionMismatch {
            context: "forcing series sample",
            expected: model.k,
            found: x_path[bad].len(),
        });
    }

    for (&t, x) in times.iter().zip(x_path) {
        let c = model.coefficients(t, x)?;
        let s = GramianBundle::from_coefficients(&c).sxx;
        let scale = 1.0 + s.amax();
        for &a in &partition.target_indices {
            for &b in &partition.nontarget_indices {
                let v = s[(a, b)].abs().max(s[(b, a)].abs());
                if v > 1e-12 * scale {
                    return Err(Error::CrossNoiseViolation { t, value: v });
                }
            }
        }
    }

    let a_idx = partition.target_indices.clone();
    let forcing: Arc<Vec<DVector<f64>>> = Arc::new(x_path.to_vec());
    let inner = model.clone();
    let last = times.len() - 1;
    let ka = a_idx.len();
    let (l, d1, d2) = (model.l, model.d1, model.d2);
    let idx = a_idx.clone();

    let reduced = CgnsModel::new(format!("{}|forced", model.name), ka, l, d1, d2, move |t, xa| {
        let step = ((t - t0) / dt + 1e-9).floor().max(0.0) as usize;
        let held = &forcing[step.min(last)];
        let mut x = held.clone();
        for (slot, &i) in idx.iter().enumerate() {
            x[i] = xa[slot];
        }
        let full = inner.raw_coefficients(t, &x);
        let rows = |m: &DMatrix<f64>| DMatrix::from_fn(ka, m.ncols(), |r, c| m[(idx[r], c)]);
        Coefficients {
            lambda_x: rows(&full.lambda_x),
            f_x: DVector::from_fn(ka, |r, _| full.f_x[idx[r]]),
            sigma_x1: rows(&full.sigma_x1),
            sigma_x2: rows(&full.sigma_x2),
            lambda_y: full.lambda_y,
            f_y: full.f_y,
            sigma_y1: full.sigma_y1,
            sigma_y2: full.sigma_y2,
        }
    });
    let obs: Vec<&str> = a_idx.iter().map(|&i| model.observed_labels[i].as_str()).collect();
    let hid: Vec<&str> = model.hidden_labels.iter().map(String::as_str).collect();
    let mut reduced = reduced.with_labels(&obs, &hid);
    reduced.condition_cap = model.condition_cap;
    Ok(reduced)
}

/// Rows of `x_path` restricted to the target block.
pub fn target_series(partition: &ObservationPartition, x_path: &[DVector<f64>]) -> Vec<DVector<f64>> {
    x_path
        .iter()
        .map(|x| DVector::from_iterator(partition.target_indices.len(), partition.target_indices.iter().map(|&i| x[i])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dyad_model, DyadParams};

    fn chain() -> CgnsModel {
        // x = (x_A, x_B), y hidden; x_A driven by x_B only, x_B by y.
        CgnsModel::new("chain", 2, 1, 2, 1, |_, x| {
            let mut c = Coefficients::zeros(2, 1, 2, 1);
            c.f_x[0] = -x[0] + 0.5 * x[1];
            c.lambda_x[(1, 0)] = 1.0;
            c.f_x[1] = -x[1];
            c.sigma_x1[(0, 0)] = 0.3;
            c.sigma_x1[(1, 1)] = 0.4;
            c.lambda_y[(0, 0)] = -0.5;
            c.sigma_y2[(0, 0)] = 1.0;
            c
        })
    }

    #[test]
    fn empty_nontarget_block_returns_the_model() {
        let m = dyad_model(DyadParams::default()).unwrap();
        let r = reduce_with_forcing(&m, &ObservationPartition::all_targets(1), &[], &[]).unwrap();
        assert_eq!(r.name, m.name);
        assert_eq!(r.k, 1);
    }

    #[test]
    fn forcing_is_sample_and_hold() {
        let m = chain();
        let p = ObservationPartition::new(2, vec![0], vec![1]).unwrap();
        let times = vec![0.0, 0.1, 0.2];
        let xs = vec![
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![0.0, 2.0]),
            DVector::from_vec(vec![0.0, 3.0]),
        ];
        let r = reduce_with_forcing(&m, &p, &times, &xs).unwrap();
        assert_eq!(r.k, 1);
        let xa = DVector::from_element(1, 1.0);
        assert_eq!(r.coefficients(0.15, &xa).unwrap().f_x[0], -1.0 + 0.5 * 2.0);
        assert_eq!(r.coefficients(0.2, &xa).unwrap().f_x[0], -1.0 + 0.5 * 3.0);
        assert_eq!(r.coefficients(9.0, &xa).unwrap().f_x[0], -1.0 + 0.5 * 3.0);
    }

    #[test]
    fn correlated_block_noise_is_rejected() {
        let m = CgnsModel::new("mixed", 2, 1, 1, 1, |_, _| {
            let mut c = Coefficients::zeros(2, 1, 1, 1);
            c.sigma_x1[(0, 0)] = 1.0;
            c.sigma_x1[(1, 0)] = 1.0;
            c.sigma_y2[(0, 0)] = 1.0;
            c
        });
        let p = ObservationPartition::new(2, vec![0], vec![1]).unwrap();
        let xs = vec![DVector::zeros(2); 2];
        assert!(matches!(
            reduce_with_forcing(&m, &p, &[0.0, 1.0], &xs),
            Err(Error::CrossNoiseViolation { .. })
        ));
    }

    #[test]
    fn irregular_grid_is_rejected() {
        let p = ObservationPartition::new(2, vec![0], vec![1]).unwrap();
        let xs = vec![DVector::zeros(2); 3];
        assert!(matches!(
            reduce_with_forcing(&chain(), &p, &[0.0, 1.0, 3.0], &xs),
            Err(Error::GridMismatch(_))
        ));
    }
}

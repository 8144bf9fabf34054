//! Gaussian posteriors and the relative entropy between them.
//!
//! Every causal metric in this crate is a relative entropy between two
//! Gaussian posteriors of the hidden variables. For `p = N(μp, Rp)` and
//! `q = N(μq, Rq)` in dimension `l`,
//!
//! ```text
//! P(p, q) = ½ (μp − μq)ᵀ Rq⁻¹ (μp − μq)            (signal)
//!         + ½ (tr(Rp Rq⁻¹) − l − ln det(Rp Rq⁻¹))   (dispersion)
//! ```
//!
//! The dispersion is evaluated from the eigenvalues `λᵢ` of the whitened
//! matrix `Lq⁻¹ Rp Lq⁻ᵀ` as `½ Σ (λᵢ − 1 − ln λᵢ)`, which never forms a
//! determinant and stays accurate when the two covariances nearly agree.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest condition number accepted for a covariance that must be inverted.
pub const DEFAULT_CONDITION_CAP: f64 = 1e14;

/// Relative jitter (times `trace / l`) added when a factorization fails.
pub(crate) const JITTER_LADDER: [f64; 2] = [1e-10, 1e-8];

/// Mean and covariance of a Gaussian posterior over the hidden variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::DimensionMismatch {
                context: "covariance must be square",
                expected: cov.nrows(),
                found: cov.ncols(),
            });
        }
        if mean.len() != cov.nrows() {
            return Err(Error::DimensionMismatch {
                context: "mean/covariance",
                expected: cov.nrows(),
                found: mean.len(),
            });
        }
        Ok(Self { mean, cov })
    }

    /// Standard normal in dimension `l`.
    pub fn standard(l: usize) -> Self {
        Self {
            mean: DVector::zeros(l),
            cov: DMatrix::identity(l, l),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Symmetry and semidefiniteness within the tolerances used throughout the crate.
    pub fn satisfies_invariants(&self) -> bool {
        let l = self.dim();
        if l == 0 {
            return true;
        }
        let scale = 1.0 + self.cov.amax();
        let asym = (&self.cov - self.cov.transpose()).amax();
        if !(asym <= 1e-10 * scale) {
            return false;
        }
        let sym = symmetrize(&self.cov);
        let min_eig = sym.symmetric_eigenvalues().min();
        min_eig >= -1e-10 * self.cov.trace().abs() / l as f64
    }
}

/// A posterior trajectory on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPath {
    pub times: Vec<f64>,
    pub states: Vec<GaussianState>,
}

impl GaussianPath {
    pub fn new(times: Vec<f64>, states: Vec<GaussianState>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::DimensionMismatch {
                context: "path times/states",
                expected: times.len(),
                found: states.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch(
                "path times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Hidden dimension, or 0 for an empty path.
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, GaussianState::dim)
    }
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn eigen_floor(cov: &DMatrix<f64>) -> f64 {
    let l = cov.nrows().max(1) as f64;
    1e-12 * (cov.trace() / l).max(1.0)
}

/// Symmetrize and floor the spectrum of a covariance matrix.
///
/// Eigenvalues below `1e-12 · max(1, trace / l)` are raised to that floor.
/// Matrices that are already symmetric with a spectrum comfortably above the
/// floor are returned unchanged, bit for bit.
pub fn covariance_hygiene(cov: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(cov.nrows(), cov.ncols(), "covariance must be square");
    let l = cov.nrows();
    if l == 0 {
        return cov.clone();
    }
    if l == 1 {
        let v = cov[(0, 0)];
        let floor = eigen_floor(cov);
        return if v >= 0.5 * floor {
            cov.clone()
        } else {
            DMatrix::from_element(1, 1, floor)
        };
    }

    let sym = if cov == &cov.transpose() {
        cov.clone()
    } else {
        symmetrize(cov)
    };
    let floor = eigen_floor(&sym);

    // Fast acceptance: every eigenvalue already exceeds half the floor.
    let mut shifted = sym.clone();
    for i in 0..l {
        shifted[(i, i)] -= 0.5 * floor;
    }
    if Cholesky::new(shifted).is_some() {
        return sym;
    }

    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= 0.5 * floor {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|v| if v.is_nan() { v } else { v.max(floor) });
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&rebuilt)
}

/// Estimate of the spectral condition number from a Cholesky factor.
fn cholesky_condition(chol: &Cholesky<f64, Dyn>) -> f64 {
    let d = chol.l_dirty().diagonal();
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        (hi / lo).powi(2)
    }
}

/// Cholesky factor of a hygienic covariance, escalating through the jitter
/// ladder when the plain factorization fails or is too ill-conditioned.
pub(crate) fn factor_spd(cov: &DMatrix<f64>, cap: f64) -> Option<Cholesky<f64, Dyn>> {
    let clean = covariance_hygiene(cov);
    if let Some(chol) = Cholesky::new(clean.clone()) {
        if cholesky_condition(&chol) <= cap {
            return Some(chol);
        }
    }
    let l = clean.nrows().max(1) as f64;
    let scale = (clean.trace() / l).abs().max(f64::MIN_POSITIVE);
    for rel in JITTER_LADDER {
        let mut jittered = clean.clone();
        for i in 0..clean.nrows() {
            jittered[(i, i)] += rel * scale;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            if cholesky_condition(&chol) <= cap {
                return Some(chol);
            }
        }
    }
    None
}

/// Inverse of a covariance through [`factor_spd`].
pub(crate) fn spd_inverse(cov: &DMatrix<f64>, cap: f64) -> Option<DMatrix<f64>> {
    if cov.nrows() == 1 {
        let v = covariance_hygiene(cov)[(0, 0)];
        return (v > 0.0 && v.is_finite()).then(|| DMatrix::from_element(1, 1, 1.0 / v));
    }
    factor_spd(cov, cap).map(|c| c.inverse())
}

/// `λ − 1 − ln λ`, accurate for `λ` close to one.
fn dispersion_term(lambda: f64) -> f64 {
    let lambda = lambda.max(f64::MIN_POSITIVE);
    let u = lambda - 1.0;
    (u - u.ln_1p()).max(0.0)
}

/// Signal and dispersion parts of `P(N(mean_p, cov_p), N(mean_q, cov_q))`.
pub(crate) fn signal_dispersion_parts(
    mean_p: &DVector<f64>,
    cov_p: &DMatrix<f64>,
    mean_q: &DVector<f64>,
    cov_q: &DMatrix<f64>,
    cap: f64,
) -> Result<(f64, f64)> {
    let l = mean_q.len();
    if mean_p.len() != l || cov_p.nrows() != l || cov_q.nrows() != l {
        return Err(Error::DimensionMismatch {
            context: "relative entropy operands",
            expected: l,
            found: mean_p.len(),
        });
    }
    if l == 0 || (mean_p == mean_q && cov_p == cov_q) {
        return Ok((0.0, 0.0));
    }

    if l == 1 {
        let floor_q = eigen_floor(cov_q);
        let q = if cov_q[(0, 0)] >= 0.5 * floor_q { cov_q[(0, 0)] } else { floor_q };
        let floor_p = eigen_floor(cov_p);
        let p = if cov_p[(0, 0)] >= 0.5 * floor_p { cov_p[(0, 0)] } else { floor_p };
        if !(q.is_finite() && p.is_finite()) {
            return Err(Error::SingularCovariance("non-finite variance".into()));
        }
        let d = mean_p[0] - mean_q[0];
        return Ok((0.5 * d * d / q, 0.5 * dispersion_term(p / q)));
    }

    let chol = factor_spd(cov_q, cap).ok_or_else(|| {
        Error::SingularCovariance(format!("reference covariance of dimension {l}"))
    })?;
    let lower = chol.l();
    let diff = mean_p - mean_q;
    let white = lower
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::SingularCovariance("triangular solve failed".into()))?;
    let signal = 0.5 * white.norm_squared();

    let cp = covariance_hygiene(cov_p);
    let half = lower
        .solve_lower_triangular(&cp)
        .ok_or_else(|| Error::SingularCovariance("triangular solve failed".into()))?;
    let whitened = lower
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| Error::SingularCovariance("triangular solve failed".into()))?;
    let whitened = symmetrize(&whitened);
    let dispersion = 0.5 * whitened.symmetric_eigenvalues().iter().map(|&v| dispersion_term(v)).sum::<f64>();
    Ok((signal, dispersion))
}

/// Relative entropy `P(p, q)` in nats.
pub fn relative_entropy(p: &GaussianState, q: &GaussianState) -> Result<f64> {
    signal_dispersion(p, q).map(|(s, d)| s + d)
}

/// The signal (mean-shift) and dispersion (covariance-ratio) parts of `P(p, q)`.
pub fn signal_dispersion(p: &GaussianState, q: &GaussianState) -> Result<(f64, f64)> {
    signal_dispersion_parts(&p.mean, &p.cov, &q.mean, &q.cov, DEFAULT_CONDITION_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(mean: f64, var: f64) -> GaussianState {
        GaussianState::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var)).unwrap()
    }

    #[test]
    fn identical_standard_normals() {
        let p = GaussianState::standard(2);
        assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        assert_eq!(signal_dispersion(&p, &p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn unit_mean_shift_is_half() {
        let v = relative_entropy(&scalar(1.0, 1.0), &scalar(0.0, 1.0)).unwrap();
        assert_relative_eq!(v, 0.5, epsilon = 1e-15);
        let (s, d) = signal_dispersion(&scalar(1.0, 1.0), &scalar(0.0, 1.0)).unwrap();
        assert_relative_eq!(s, 0.5, epsilon = 1e-15);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn doubled_covariance_in_two_dims() {
        let p = GaussianState::new(DVector::zeros(2), DMatrix::identity(2, 2) * 2.0).unwrap();
        let q = GaussianState::standard(2);
        let v = relative_entropy(&p, &q).unwrap();
        assert_relative_eq!(v, 1.0 - 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn scalar_variance_ratio_dispersion() {
        let (s, d) = signal_dispersion(&scalar(0.0, 2.0), &scalar(0.0, 1.0)).unwrap();
        assert_eq!(s, 0.0);
        assert_relative_eq!(d, 0.5 * (1.0 - 2f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = relative_entropy(&GaussianState::standard(2), &GaussianState::standard(3));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hygiene_identity_is_fixed_point() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(covariance_hygiene(&eye), eye);
    }

    #[test]
    fn hygiene_symmetrizes_then_floors() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let out = covariance_hygiene(&a);
        // (A + Aᵀ)/2 = [[1,1],[1,1]] has eigenvalues {0, 2}; the zero is floored.
        let floor = 1e-12;
        let eig = out.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        assert_relative_eq!(vals[0], floor, max_relative = 1e-3);
        assert_relative_eq!(vals[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(out[(0, 1)], out[(1, 0)]);
        assert_relative_eq!(out[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hygiene_negative_scalar_goes_to_floor() {
        let out = covariance_hygiene(&DMatrix::from_element(1, 1, -1.0));
        assert_eq!(out[(0, 0)], 1e-12);
    }

    #[test]
    fn hygiene_is_idempotent_after_flooring() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, -2.0]);
        let once = covariance_hygiene(&a);
        let twice = covariance_hygiene(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn singular_reference_is_regularized_or_rejected() {
        let p = GaussianState::standard(2);
        let q = GaussianState::new(DVector::zeros(2), DMatrix::zeros(2, 2)).unwrap();
        // Floors to 1e-12·I, which is perfectly conditioned: finite but huge.
        let v = relative_entropy(&p, &q).unwrap();
        assert!(v.is_finite() && v > 1e10);
    }

    #[test]
    fn ill_conditioned_reference_gets_jitter() {
        let q = GaussianState::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-20]),
        )
        .unwrap();
        let p = GaussianState::standard(2);
        assert!(relative_entropy(&p, &q).unwrap().is_finite());
    }

    #[test]
    fn path_rejects_non_increasing_times() {
        let s = GaussianState::standard(1);
        assert!(GaussianPath::new(vec![0.0, 0.0], vec![s.clone(), s]).is_err());
    }
}

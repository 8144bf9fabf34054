//! Causal influence ranges.
//!
//! For an anchor `j`, the lagged divergence profile `P^j_n` measures how much
//! the complete smoother posterior of `y(t_j)` still differs from the one
//! that has only seen observations up to `t_n`. The subjective range at a
//! threshold `ε` is the last lag at which `P^j_n > ε`; the objective range
//! averages the subjective range over `ε ∈ [0, M]`, `M = max_n P^j_n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assim::{LaggedFamily, OnlineSmoother};
use crate::error::Result;
use crate::gaussian::{relative_entropy, GaussianState};

/// Default number of threshold nodes for the exact objective range.
pub const DEFAULT_THRESHOLDS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedDivergenceProfile {
    pub anchor: usize,
    /// `values[i] = P^j_{j+i}` in nats.
    pub values: Vec<f64>,
    pub max: f64,
    /// The window ends before the data does; the reference is the longest lag.
    pub truncated: bool,
    /// The profile was still changing near the end of a truncated window.
    pub window_warning: bool,
}

impl LaggedDivergenceProfile {
    /// Profile from raw values (used for synthetic profiles and tests).
    pub fn from_values(anchor: usize, values: Vec<f64>) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        Self { anchor, values, max, truncated: false, window_warning: false }
    }

    /// Number of lags after the anchor covered by the profile.
    pub fn span_steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// `P(complete, family.states[i])` for every horizon in the family.
pub fn lagged_divergence_profile(family: &LaggedFamily, complete: &GaussianState) -> Result<LaggedDivergenceProfile> {
    let values = family
        .states
        .iter()
        .map(|s| relative_entropy(complete, s))
        .collect::<Result<Vec<_>>>()?;
    let mut profile = LaggedDivergenceProfile::from_values(family.anchor, values);
    profile.truncated = family.truncated;
    if family.truncated && family.states.len() > 1 {
        let last = family.states.len() - 1;
        let back = (family.states.len() / 10).max(1);
        let drift = relative_entropy(&family.states[last], &family.states[last - back])?;
        profile.window_warning = drift > 1e-3 * profile.max;
    }
    Ok(profile)
}

/// `(max{i : P_i > ε}) · Δt`, or 0 when no lag exceeds `ε`.
pub fn subjective_cir(profile: &LaggedDivergenceProfile, epsilon: f64, dt: f64) -> f64 {
    profile
        .values
        .iter()
        .rposition(|&v| v > epsilon)
        .map_or(0.0, |i| i as f64 * dt)
}

/// Profile-mean objective range `(Δt / M) Σ_{i ≥ 1} P_i`.
pub fn objective_cir_approx(profile: &LaggedDivergenceProfile, dt: f64) -> f64 {
    if !(profile.max > 0.0) {
        return 0.0;
    }
    let sum: f64 = profile.values.iter().skip(1).sum();
    dt * sum / profile.max
}

/// Mean of the subjective range over `n_thresholds` midpoint nodes in `[0, M]`.
pub fn objective_cir_exact(profile: &LaggedDivergenceProfile, dt: f64, n_thresholds: usize) -> f64 {
    if !(profile.max > 0.0) {
        return 0.0;
    }
    let n = n_thresholds.max(2);
    let h = profile.max / n as f64;
    let total: f64 = (0..n).map(|i| subjective_cir(profile, (i as f64 + 0.5) * h, dt)).sum();
    total / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveTable {
    pub thresholds: Vec<f64>,
    /// `lengths[a][e]`: anchor `a`, threshold `e`.
    pub lengths: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirSeries {
    pub anchors: Vec<usize>,
    pub times: Vec<f64>,
    pub objective: Vec<f64>,
    pub truncated: Vec<bool>,
    pub window_warning: Vec<bool>,
    pub subjective: Option<SubjectiveTable>,
}

/// How the objective range is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMethod {
    #[default]
    Approx,
    Exact,
}

pub fn cir_series(
    profiles: &[LaggedDivergenceProfile],
    dt: f64,
    thresholds: Option<&[f64]>,
    method: ObjectiveMethod,
) -> CirSeries {
    let objective = profiles
        .iter()
        .map(|p| match method {
            ObjectiveMethod::Approx => objective_cir_approx(p, dt),
            ObjectiveMethod::Exact => objective_cir_exact(p, dt, DEFAULT_THRESHOLDS),
        })
        .collect();
    let subjective = thresholds.map(|eps| SubjectiveTable {
        thresholds: eps.to_vec(),
        lengths: profiles
            .iter()
            .map(|p| eps.iter().map(|&e| subjective_cir(p, e, dt)).collect())
            .collect(),
    });
    CirSeries {
        anchors: profiles.iter().map(|p| p.anchor).collect(),
        times: profiles.iter().map(|p| p.anchor as f64 * dt).collect(),
        objective,
        truncated: profiles.iter().map(|p| p.truncated).collect(),
        window_warning: profiles.iter().map(|p| p.window_warning).collect(),
        subjective,
    }
}

/// Profiles for many anchors; each lagged family is built, reduced to its
/// profile and dropped, in parallel.
pub fn anchor_profiles(online: &OnlineSmoother, anchors: &[usize], window: usize) -> Result<Vec<LaggedDivergenceProfile>> {
    anchors
        .par_iter()
        .map(|&j| {
            let family = online.family(j, window)?;
            lagged_divergence_profile(&family, family.complete())
        })
        .collect()
}

/// Every `stride`-th grid index, always including the last one.
pub fn anchor_grid(steps: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut anchors: Vec<usize> = (0..=steps).step_by(stride).collect();
    if anchors.last() != Some(&steps) {
        anchors.push(steps);
    }
    anchors
}

/// One anchor per `max(1, N / 1000)` steps.
pub fn default_anchor_stride(steps: usize) -> usize {
    (steps / 1000).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prof(v: &[f64]) -> LaggedDivergenceProfile {
        LaggedDivergenceProfile::from_values(0, v.to_vec())
    }

    /// Exact integral of the subjective range over `[0, M]`, divided by `M`:
    /// the range equals `i·Δt` exactly on `ε ∈ [S_{i+1}, S_i)` where `S_i` is
    /// the suffix maximum of the profile.
    fn closed_form_exact(v: &[f64], dt: f64) -> f64 {
        let m = v.iter().copied().fold(0.0, f64::max);
        if m <= 0.0 {
            return 0.0;
        }
        let mut suffix = vec![0.0f64; v.len() + 1];
        for i in (0..v.len()).rev() {
            suffix[i] = suffix[i + 1].max(v[i]);
        }
        (1..v.len()).map(|i| i as f64 * dt * (suffix[i] - suffix[i + 1])).sum::<f64>() / m
    }

    #[test]
    fn subjective_range_examples() {
        let p = prof(&[0.1, 0.02, 0.05, 0.0]);
        assert_eq!(subjective_cir(&p, 0.03, 0.5), 1.0);
        assert_eq!(subjective_cir(&p, 0.1, 0.5), 0.0);
        assert_eq!(subjective_cir(&p, 0.2, 0.5), 0.0);
        let q = prof(&[0.3, 0.2, 0.1, 0.0, 0.0]);
        assert_eq!(subjective_cir(&q, 0.0, 1.0), 2.0);
    }

    #[test]
    fn constant_profile_spans_the_window() {
        let p = prof(&[1.0; 11]);
        assert!((objective_cir_approx(&p, 0.1) - 1.0).abs() < 1e-12);
        assert!((objective_cir_exact(&p, 0.1, 256) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_decay_gives_half_the_window() {
        let n = 1000;
        let dt = 1e-3;
        let v: Vec<f64> = (0..=n).map(|i| 1.0 - i as f64 / n as f64).collect();
        let span = n as f64 * dt;
        assert!((objective_cir_approx(&prof(&v), dt) - span / 2.0).abs() <= dt);
        assert!((objective_cir_exact(&prof(&v), dt, 256) - span / 2.0).abs() <= dt + span / 256.0);
    }

    #[test]
    fn non_monotone_profile_has_strict_gap() {
        let p = prof(&[1.0, 0.0, 0.5, 0.0]);
        let approx = objective_cir_approx(&p, 1.0);
        let exact = objective_cir_exact(&p, 1.0, 256);
        assert!((approx - 0.5).abs() < 1e-12);
        assert!((exact - 1.0).abs() < 1e-12);
        assert!(exact > approx);
    }

    #[test]
    fn flat_zero_profile_gives_zero() {
        let p = prof(&[0.0; 5]);
        assert_eq!(objective_cir_approx(&p, 1.0), 0.0);
        assert_eq!(objective_cir_exact(&p, 1.0, 256), 0.0);
        assert_eq!(subjective_cir(&p, 0.0, 1.0), 0.0);
    }

    #[test]
    fn single_point_profile_has_no_range() {
        let p = prof(&[0.4]);
        assert_eq!(objective_cir_approx(&p, 1.0), 0.0);
        assert_eq!(objective_cir_exact(&p, 1.0, 256), 0.0);
    }

    #[test]
    fn anchor_grid_includes_the_end() {
        assert_eq!(anchor_grid(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(anchor_grid(8, 4), vec![0, 4, 8]);
        assert_eq!(default_anchor_stride(500), 1);
        assert_eq!(default_anchor_stride(500_000), 500);
    }

    fn profile_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..60).prop_map(|mut v| {
            *v.last_mut().unwrap() = 0.0;
            v
        })
    }

    proptest! {
        #[test]
        fn approx_is_bounded_by_exact(v in profile_strategy()) {
            let dt = 0.01;
            let p = prof(&v);
            let span = p.span_steps() as f64 * dt;
            let approx = objective_cir_approx(&p, dt);
            let exact = objective_cir_exact(&p, dt, 256);
            prop_assert!(approx <= exact + span / 256.0 + 1e-12);
            prop_assert!(approx <= closed_form_exact(&v, dt) + 1e-12);
        }

        #[test]
        fn quadrature_converges_to_closed_form(v in profile_strategy()) {
            let dt = 0.01;
            let p = prof(&v);
            let span = p.span_steps() as f64 * dt;
            let exact = objective_cir_exact(&p, dt, 256);
            prop_assert!((exact - closed_form_exact(&v, dt)).abs() <= span / 256.0 + 1e-12);
        }

        #[test]
        fn monotone_profiles_make_the_bound_tight(mut v in profile_strategy()) {
            v.sort_by(|a, b| b.total_cmp(a));
            let dt = 0.01;
            let p = prof(&v);
            let approx = objective_cir_approx(&p, dt);
            prop_assert!((approx - closed_form_exact(&v, dt)).abs() <= 1e-9);
        }

        #[test]
        fn subjective_is_nonincreasing_in_threshold(v in profile_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = prof(&v);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(subjective_cir(&p, lo, 0.1) >= subjective_cir(&p, hi, 0.1));
        }

        #[test]
        fn ranges_stay_inside_the_window(v in profile_strategy()) {
            let dt = 0.05;
            let p = prof(&v);
            let span = p.span_steps() as f64 * dt;
            for value in [objective_cir_approx(&p, dt), objective_cir_exact(&p, dt, 64), subjective_cir(&p, 0.0, dt)] {
                prop_assert!((0.0..=span + 1e-12).contains(&value));
            }
        }
    }
}

//! Executable checks of the properties the pipeline must satisfy, with a
//! machine-readable pass/fail report.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aci::{aci_series, conditional_aci_series};
use crate::assim::{conditional_filter_smoother, default_window, filter, smooth, ConditionalStrategy, OnlineSmoother};
use crate::cir::{
    anchor_grid, anchor_profiles, objective_cir_approx, objective_cir_exact, subjective_cir, LaggedDivergenceProfile,
    DEFAULT_THRESHOLDS,
};
use crate::error::{Error, Result};
use crate::gaussian::{relative_entropy, GaussianPath, GaussianState};
use crate::model::{
    dyad_model, linear_model, predator_prey_model, CgnsModel, Coefficients, DyadParams, LinearParams,
    ObservationPartition, Observed, PredatorPreyParams,
};
use crate::sim::{euler_maruyama, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Pass iff `measured ≤ tolerance`.
    UpperBound,
    /// Pass iff `|measured| ≤ tolerance`.
    Equality,
    /// Pass iff `measured ≥ tolerance`.
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub check_name: String,
    pub status: CheckStatus,
    pub kind: CheckKind,
    pub measured: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub details: String,
}

impl ValidationReport {
    pub fn new(check_name: &str, kind: CheckKind, measured: f64, tolerance: f64, seed: u64, details: String) -> Self {
        let ok = match kind {
            CheckKind::UpperBound => measured <= tolerance,
            CheckKind::Equality => measured.abs() <= tolerance,
            CheckKind::LowerBound => measured >= tolerance,
        };
        Self {
            check_name: check_name.to_string(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            kind,
            measured,
            tolerance,
            seed,
            details,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    /// Checks to run, in report order.
    pub checks: Vec<String>,
    /// Per-check tolerance overrides.
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    /// Simulated time span of the dyad-based checks.
    pub horizon: f64,
    pub random_profiles: usize,
    pub mc_pairs: usize,
    pub mc_samples: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            checks: CHECKS.iter().map(|c| c.name.to_string()).collect(),
            tolerances: BTreeMap::new(),
            seed: 20_240_917,
            horizon: 100.0,
            random_profiles: 1000,
            mc_pairs: 100,
            mc_samples: 1_000_000,
        }
    }
}

type CheckFn = fn(&ValidationConfig, u64) -> Result<(f64, String)>;

struct Check {
    name: &'static str,
    kind: CheckKind,
    tolerance: f64,
    run: CheckFn,
}

const CHECKS: [Check; 10] = [
    Check { name: "nil_causality", kind: CheckKind::UpperBound, tolerance: 1e-10, run: nil_causality },
    Check { name: "nil_conditional_causality", kind: CheckKind::UpperBound, tolerance: 1e-10, run: nil_conditional_causality },
    Check { name: "terminal_equality", kind: CheckKind::Equality, tolerance: 0.0, run: terminal_equality },
    Check { name: "classical_limit", kind: CheckKind::UpperBound, tolerance: 1e-10, run: classical_limit },
    Check { name: "riccati_root", kind: CheckKind::UpperBound, tolerance: 1e-6, run: riccati_root },
    Check { name: "online_batch_order", kind: CheckKind::LowerBound, tolerance: 0.7, run: online_batch_order },
    Check { name: "cir_bound", kind: CheckKind::UpperBound, tolerance: 1.0, run: cir_bound },
    Check { name: "cir_range_anchor", kind: CheckKind::UpperBound, tolerance: 1e-12, run: cir_range_anchor },
    Check { name: "relative_entropy_mc", kind: CheckKind::UpperBound, tolerance: 3.0, run: relative_entropy_mc },
    Check {
        name: "conditional_strategies_equivalence",
        kind: CheckKind::UpperBound,
        tolerance: 1e-8,
        run: conditional_strategies_equivalence,
    },
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

/// Runs the selected checks in parallel. Errors and panics inside a check are
/// recorded as failures; only an unknown check name is an error.
pub fn run_validation_suite(config: &ValidationConfig) -> Result<Vec<ValidationReport>> {
    let selected = config
        .checks
        .iter()
        .map(|name| {
            CHECKS
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| Error::Config(format!("unknown check `{name}`; known: {}", check_names().join(", "))))
        })
        .collect::<Result<Vec<_>>>()?;
    for name in config.tolerances.keys() {
        if !CHECKS.iter().any(|c| c.name == name) {
            return Err(Error::Config(format!("tolerance given for unknown check `{name}`")));
        }
    }
    Ok(selected
        .par_iter()
        .map(|&i| {
            let check = &CHECKS[i];
            let seed = config.seed.wrapping_add(i as u64);
            let tolerance = config.tolerances.get(check.name).copied().unwrap_or(check.tolerance);
            let (measured, details) = match catch_unwind(AssertUnwindSafe(|| (check.run)(config, seed))) {
                Ok(Ok(out)) => out,
                Ok(Err(e)) => (f64::NAN, format!("error: {e}")),
                Err(_) => (f64::NAN, "panicked".to_string()),
            };
            ValidationReport::new(check.name, check.kind, measured, tolerance, seed, details)
        })
        .collect())
}

fn steps(span: f64, dt: f64) -> usize {
    (span / dt).round().max(1.0) as usize
}

fn run_dyad(gamma: f64, span: f64, dt: f64, seed: u64) -> Result<(CgnsModel, Trajectory, GaussianPath, GaussianPath)> {
    let m = dyad_model(DyadParams { gamma, ..Default::default() })?;
    let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), dt, steps(span, dt), seed)?;
    let f = filter(&m, &tr.x, dt, &GaussianState::standard(1))?;
    let s = smooth(&m, &tr.x, dt, &f)?;
    Ok((m, tr, f, s))
}

/// Three-block chain `y → x_B → x_A` with block-diagonal observation noise:
/// given `x_B`, `y` has no route into `x_A`.
pub fn nil_conditional_chain() -> CgnsModel {
    CgnsModel::new("chain", 2, 1, 2, 1, |_, x| {
        let mut c = Coefficients::zeros(2, 1, 2, 1);
        c.f_x[0] = -x[0] + 0.8 * x[1].tanh();
        c.f_x[1] = -0.5 * x[1];
        c.lambda_x[(1, 0)] = 1.0;
        c.sigma_x1[(0, 0)] = 0.3;
        c.sigma_x1[(1, 1)] = 0.4;
        c.lambda_y[(0, 0)] = -0.5 - 0.2 * x[0] * x[0] / (1.0 + x[0] * x[0]);
        c.f_y[0] = 0.2 * x[0];
        c.sigma_y2[(0, 0)] = 1.0;
        c
    })
    .with_labels(&["x_a", "x_b"], &["y"])
}

/// Chain in which `x_A` also sees `y` directly, with state-dependent coupling.
pub fn coupled_chain() -> CgnsModel {
    CgnsModel::new("coupled-chain", 2, 1, 2, 1, |_, x| {
        let mut c = Coefficients::zeros(2, 1, 2, 1);
        c.lambda_x[(0, 0)] = 0.7 + 0.2 * x[1].tanh();
        c.f_x[0] = -x[0] + 0.3 * x[1];
        c.lambda_x[(1, 0)] = 1.0;
        c.f_x[1] = -0.5 * x[1];
        c.sigma_x1[(0, 0)] = 0.3;
        c.sigma_x1[(1, 1)] = 0.4;
        c.lambda_y[(0, 0)] = -0.5 - 0.1 * x[0].abs().min(2.0);
        c.f_y[0] = 0.2 * x[0];
        c.sigma_y2[(0, 0)] = 1.0;
        c
    })
    .with_labels(&["x_a", "x_b"], &["y"])
}

fn nil_causality(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let (_, tr, f, s) = run_dyad(0.0, cfg.horizon, 1e-3, seed)?;
    let aci = aci_series(&f, &s)?;
    Ok((aci.max(), format!("decoupled dyad, {} steps, max ACI over the path", tr.steps())))
}

fn nil_conditional_causality(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let m = nil_conditional_chain();
    let tr = euler_maruyama(&m, &DVector::zeros(2), &DVector::zeros(1), 1e-3, steps(cfg.horizon, 1e-3), seed)?;
    let p = ObservationPartition::new(2, vec![0], vec![1])?;
    let aci = conditional_aci_series(&m, &tr, &p, &GaussianState::standard(1), ConditionalStrategy::GainNulling)?;
    let plain = {
        let f = filter(&m, &tr.x, tr.dt, &GaussianState::standard(1))?;
        aci_series(&f, &smooth(&m, &tr.x, tr.dt, &f)?)?
    };
    Ok((
        aci.max(),
        format!("chain y -> x_b -> x_a given x_b; unconditional max ACI for contrast {:.3e}", plain.max()),
    ))
}

fn state_gap(a: &GaussianState, b: &GaussianState) -> f64 {
    (&a.mean - &b.mean).amax().max((&a.cov - &b.cov).amax())
}

fn terminal_equality(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let span = cfg.horizon.min(20.0);
    let mut worst: f64 = 0.0;
    let (_, _, f, s) = run_dyad(2.0, span, 1e-3, seed)?;
    worst = worst.max(state_gap(f.states.last().unwrap(), s.states.last().unwrap()));

    let pp = predator_prey_model(PredatorPreyParams::default(), Observed::Predator)?;
    let tr = euler_maruyama(&pp, &DVector::from_element(1, 3.0), &DVector::from_element(1, 3.0), 1e-3, steps(span, 1e-3), seed)?;
    let f = filter(&pp, &tr.x, tr.dt, &GaussianState::new(DVector::from_element(1, 3.0), DMatrix::identity(1, 1))?)?;
    let s = smooth(&pp, &tr.x, tr.dt, &f)?;
    worst = worst.max(state_gap(f.states.last().unwrap(), s.states.last().unwrap()));

    let m = coupled_chain();
    let tr = euler_maruyama(&m, &DVector::zeros(2), &DVector::zeros(1), 1e-3, steps(span, 1e-3), seed)?;
    let p = ObservationPartition::new(2, vec![0], vec![1])?;
    let out = conditional_filter_smoother(&m, &tr.x, tr.dt, &p, &GaussianState::standard(1), ConditionalStrategy::GainNulling, 10, &[])?;
    worst = worst.max(state_gap(out.filter.states.last().unwrap(), out.smoother.states.last().unwrap()));
    Ok((worst, "dyad, predator-prey and conditional chain: max |smoother(T) - filter(T)|".into()))
}

/// Scalar Kalman–Bucy filter and Rauch–Tung–Striebel smoother for
/// `dx = (a y − c x) dt + σx dW1`, `dy = −d y dt + σy dW2`, in the
/// same explicit Euler discretization.
/// `(mean, variance)` per grid point.
type ScalarPath = Vec<(f64, f64)>;

fn textbook_linear(p: &LinearParams, x: &[f64], dt: f64, m0: f64, p0: f64) -> (ScalarPath, ScalarPath) {
    let (h, f, q, r) = (p.a, -p.d, p.sigma_y * p.sigma_y, p.sigma_x * p.sigma_x);
    let n = x.len() - 1;
    let mut kf = Vec::with_capacity(n + 1);
    let (mut m, mut pp) = (m0, p0);
    kf.push((m, pp));
    for j in 0..n {
        let dz = x[j + 1] - x[j] + p.c * x[j] * dt;
        let k = pp * h / r;
        m += f * m * dt + k * (dz - h * m * dt);
        pp += (2.0 * f * pp + q - k * h * pp) * dt;
        kf.push((m, pp));
    }
    let mut rts = vec![kf[n]; n + 1];
    let (mut dm, mut dp) = (0.0, 0.0);
    for j in (0..n).rev() {
        let (mf, pf) = kf[j];
        let a = f + q / pf;
        let dz = x[j + 1] - x[j] + p.c * x[j] * dt;
        let k = pf * h / r;
        let ndm = dm - a * dm * dt + k * (dz - h * mf * dt);
        let ndp = dp - (2.0 * a * dp + k * h * pf) * dt;
        dm = ndm;
        dp = ndp;
        rts[j] = (mf + dm, pf + dp);
    }
    (kf, rts)
}

fn classical_limit(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let p = LinearParams { a: 1.0, c: 0.3, d: 0.5, sigma_x: 0.5, sigma_y: 1.0 };
    let m = linear_model(p)?;
    let dt = 1e-3;
    let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), dt, steps(cfg.horizon.min(20.0), dt), seed)?;
    let init = GaussianState::new(DVector::from_element(1, 0.2), DMatrix::from_element(1, 1, 1.5))?;
    let f = filter(&m, &tr.x, dt, &init)?;
    let s = smooth(&m, &tr.x, dt, &f)?;
    let xs: Vec<f64> = tr.x.iter().map(|v| v[0]).collect();
    let (kf, rts) = textbook_linear(&p, &xs, dt, 0.2, 1.5);
    let gap = |path: &GaussianPath, r: &[(f64, f64)]| {
        path.states
            .iter()
            .zip(r)
            .map(|(st, &(mu, var))| (st.mean[0] - mu).abs().max((st.cov[(0, 0)] - var).abs()))
            .fold(0.0, f64::max)
    };
    let (gf, gs) = (gap(&f, &kf), gap(&s, &rts));
    Ok((gf.max(gs), format!("filter gap {gf:.3e}, smoother gap {gs:.3e} against scalar Kalman-Bucy/RTS")))
}

fn riccati_root(_: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let p = LinearParams { a: 1.0, c: 0.0, d: 0.5, sigma_x: 0.5, sigma_y: 1.0 };
    let m = linear_model(p)?;
    let kappa = (p.d * p.d + p.a * p.a * p.sigma_y * p.sigma_y / (p.sigma_x * p.sigma_x)).sqrt();
    let relax = 1.0 / (2.0 * kappa);
    let dt = 1e-3;
    let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), dt, steps(20.0 * relax, dt), seed)?;
    let f = filter(&m, &tr.x, dt, &GaussianState::standard(1))?;
    let last = f.states.last().unwrap().cov[(0, 0)];
    Ok(((last - p.riccati_root()).abs(), format!("variance {last:.12} after 20 relaxation times, root {:.12}", p.riccati_root())))
}

/// Largest gap between the complete online posterior and the batch smoother
/// over `anchor_times`, as (mean gap, covariance gap).
pub fn online_batch_gap(model: &CgnsModel, tr: &Trajectory, anchor_times: &[f64]) -> Result<(f64, f64)> {
    let f = filter(model, &tr.x, tr.dt, &GaussianState::standard(model.l))?;
    let s = smooth(model, &tr.x, tr.dt, &f)?;
    let online = OnlineSmoother::new(model, &tr.x, tr.dt, &f)?;
    let n = tr.steps();
    let mut gaps = (0.0f64, 0.0f64);
    for &t in anchor_times {
        let j = ((t / tr.dt).round() as usize).min(n);
        let fam = online.family(j, (n - j).max(1))?;
        let c = fam.complete();
        gaps.0 = gaps.0.max((&c.mean - &s.states[j].mean).amax());
        gaps.1 = gaps.1.max((&c.cov - &s.states[j].cov).amax());
    }
    Ok(gaps)
}

/// Least-squares slope of `log2 gap` against `log2 Δt`.
pub fn convergence_order(dts: &[f64], gaps: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.log2()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.log2()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn online_batch_order(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let m = dyad_model(DyadParams::default())?;
    let span = (cfg.horizon / 2.0).max(10.0);
    let fine = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), 5e-4, steps(span, 5e-4), seed)?;
    let anchors: Vec<f64> = (0..span as usize).map(|i| i as f64).collect();
    let mut dts = Vec::new();
    let mut gaps = Vec::new();
    let mut details = Vec::new();
    for stride in [4, 2, 1] {
        let tr = fine.subsample(stride);
        let (gm, gc) = online_batch_gap(&m, &tr, &anchors)?;
        details.push(format!("dt {:.0e}: mean gap {gm:.3e}, cov gap {gc:.3e}", tr.dt));
        dts.push(tr.dt);
        gaps.push(gm.max(gc));
    }
    Ok((convergence_order(&dts, &gaps), details.join("; ")))
}

/// A mix of arbitrary, nonincreasing, spiky and flat profiles.
pub fn random_profile(rng: &mut impl Rng) -> Vec<f64> {
    let len = rng.random_range(2..200);
    let mut v: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    match rng.random_range(0..4) {
        0 => v.sort_by(|a, b| b.total_cmp(a)),
        1 => v.iter_mut().for_each(|x| *x = if *x > 0.9 { *x } else { 0.0 }),
        2 => {
            let end = rng.random_range(0..len);
            v[end..].iter_mut().for_each(|x| *x = 0.0);
        }
        _ => {}
    }
    v
}

fn is_nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

/// `max(approx − exact) / q` over all profiles and `max |approx − exact| / (2q)`
/// over nonincreasing ones, with `q = span / n_thresholds`.
fn bound_ratio(profiles: &[LaggedDivergenceProfile], dt: f64) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut monotone = 0;
    for p in profiles {
        let span = p.span_steps() as f64 * dt;
        if span == 0.0 {
            continue;
        }
        let q = span / DEFAULT_THRESHOLDS as f64;
        let approx = objective_cir_approx(p, dt);
        let exact = objective_cir_exact(p, dt, DEFAULT_THRESHOLDS);
        worst = worst.max((approx - exact) / q);
        if is_nonincreasing(&p.values) {
            monotone += 1;
            worst = worst.max((approx - exact).abs() / (2.0 * q));
        }
    }
    (worst, monotone)
}

fn dyad_profiles(span: f64, dt: f64, seed: u64) -> Result<(Trajectory, GaussianPath, GaussianPath, Vec<LaggedDivergenceProfile>)> {
    let (m, tr, f, s) = run_dyad(2.0, span, dt, seed)?;
    let online = OnlineSmoother::new(&m, &tr.x, dt, &f)?;
    let anchors = anchor_grid(tr.steps(), (1.0 / dt).round() as usize);
    let profiles = anchor_profiles(&online, &anchors, default_window(&tr.x))?;
    Ok((tr, f, s, profiles))
}

fn cir_bound(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let synthetic: Vec<LaggedDivergenceProfile> = (0..cfg.random_profiles)
        .map(|_| LaggedDivergenceProfile::from_values(0, random_profile(&mut rng)))
        .collect();
    let (r1, m1) = bound_ratio(&synthetic, 0.01);
    let (_, _, _, dyad) = dyad_profiles(cfg.horizon, 1e-3, seed)?;
    let (r2, m2) = bound_ratio(&dyad, 1e-3);
    Ok((
        r1.max(r2),
        format!(
            "{} random profiles ({m1} nonincreasing), {} dyad profiles ({m2} nonincreasing); measured in units of the quadrature allowance",
            synthetic.len(),
            dyad.len()
        ),
    ))
}

fn cir_range_anchor(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let dt = 1e-3;
    let (tr, f, s, profiles) = dyad_profiles(cfg.horizon, dt, seed)?;
    let span = tr.span();
    let thresholds: Vec<f64> = (1..=8).map(|i| i as f64 * 1e-3).collect();
    let mut range_violation: f64 = 0.0;
    let mut anchor_gap: f64 = 0.0;
    let mut batch_gap: f64 = 0.0;
    let batch_aci = aci_series(&f, &s)?;
    let online = OnlineSmoother::new(&dyad_model(DyadParams::default())?, &tr.x, dt, &f)?;
    for p in &profiles {
        let remaining = span - p.anchor as f64 * dt;
        let mut lengths = vec![objective_cir_approx(p, dt), objective_cir_exact(p, dt, DEFAULT_THRESHOLDS)];
        lengths.extend(thresholds.iter().map(|&e| subjective_cir(p, e, dt)));
        for len in lengths {
            range_violation = range_violation.max(-len).max(len - remaining);
        }
        let complete = online.family(p.anchor, (tr.steps() - p.anchor).max(1))?;
        let aci_j = relative_entropy(complete.complete(), &f.states[p.anchor])?;
        if !p.truncated {
            anchor_gap = anchor_gap.max((p.values[0] - aci_j).abs());
        }
        batch_gap = batch_gap.max((aci_j - batch_aci.values[p.anchor]).abs());
    }
    Ok((
        range_violation.max(anchor_gap),
        format!(
            "{} anchors: range violation {range_violation:.3e}, |P^j_j - ACI_j| {anchor_gap:.3e}; ACI from the batch smoother differs by up to {batch_gap:.3e}",
            profiles.len()
        ),
    ))
}

/// Random Gaussian with mean of unit scale and well-conditioned covariance.
pub fn random_gaussian(l: usize, rng: &mut impl Rng) -> GaussianState {
    let mean = DVector::from_fn(l, |_, _| StandardNormal.sample(rng));
    let a = DMatrix::from_fn(l, l, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z / (l as f64).sqrt()
    });
    let cov = &a * a.transpose() + DMatrix::identity(l, l) * 0.2;
    GaussianState { mean, cov }
}

/// Monte-Carlo estimate of `KL(p ‖ q)` from `samples` draws of `p`, with its
/// standard error.
pub fn relative_entropy_monte_carlo(p: &GaussianState, q: &GaussianState, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let l = p.dim();
    let lp = p.cov.clone().cholesky().ok_or_else(|| Error::SingularCovariance("sampling covariance".into()))?;
    let lq = q.cov.clone().cholesky().ok_or_else(|| Error::SingularCovariance("reference covariance".into()))?;
    let lp = lp.l();
    let lq = lq.l();
    let logdet = |m: &DMatrix<f64>| (0..l).map(|i| m[(i, i)].ln()).sum::<f64>();
    let offset = logdet(&lq) - logdet(&lp);
    let shift = &p.mean - &q.mean;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut xi = [0.0f64; 8];
    let mut d = [0.0f64; 8];
    for _ in 0..samples {
        for v in xi.iter_mut().take(l) {
            *v = StandardNormal.sample(&mut rng);
        }
        for i in 0..l {
            d[i] = shift[i] + (0..=i).map(|k| lp[(i, k)] * xi[k]).sum::<f64>();
        }
        // forward substitution with lq
        let mut quad_q = 0.0;
        let mut w = [0.0f64; 8];
        for i in 0..l {
            let s = d[i] - (0..i).map(|k| lq[(i, k)] * w[k]).sum::<f64>();
            w[i] = s / lq[(i, i)];
            quad_q += w[i] * w[i];
        }
        let quad_p: f64 = xi[..l].iter().map(|v| v * v).sum();
        let log_ratio = offset + 0.5 * (quad_q - quad_p);
        sum += log_ratio;
        sum_sq += log_ratio * log_ratio;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

fn relative_entropy_mc(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(GaussianState, GaussianState)> = (0..cfg.mc_pairs)
        .map(|_| {
            let l = rng.random_range(1..=4);
            (random_gaussian(l, &mut rng), random_gaussian(l, &mut rng))
        })
        .collect();
    let z: Vec<f64> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (p, q))| {
            let exact = relative_entropy(p, q)?;
            let (mc, se) = relative_entropy_monte_carlo(p, q, cfg.mc_samples, seed.wrapping_add(1 + i as u64))?;
            Ok((exact - mc).abs() / se)
        })
        .collect::<Result<_>>()?;
    let worst = z.iter().copied().fold(0.0, f64::max);
    let over2 = z.iter().filter(|&&v| v > 2.0).count();
    Ok((
        worst,
        format!("{} pairs x {} samples; largest deviation in standard errors, {over2} pairs beyond 2 SE", pairs.len(), cfg.mc_samples),
    ))
}

fn conditional_strategies_equivalence(cfg: &ValidationConfig, seed: u64) -> Result<(f64, String)> {
    let m = coupled_chain();
    let tr = euler_maruyama(&m, &DVector::zeros(2), &DVector::zeros(1), 1e-3, steps(cfg.horizon.min(20.0), 1e-3), seed)?;
    let p = ObservationPartition::new(2, vec![0], vec![1])?;
    let init = GaussianState::standard(1);
    let anchors = anchor_grid(tr.steps(), 2000);
    let run = |s| conditional_filter_smoother(&m, &tr.x, tr.dt, &p, &init, s, 1000, &anchors);
    let a = run(ConditionalStrategy::GainNulling)?;
    let b = run(ConditionalStrategy::ReducedForcing)?;
    let path_gap = |u: &GaussianPath, v: &GaussianPath| u.states.iter().zip(&v.states).map(|(x, y)| state_gap(x, y)).fold(0.0, f64::max);
    let mut worst = path_gap(&a.filter, &b.filter).max(path_gap(&a.smoother, &b.smoother));
    for (j, fam) in &a.families {
        for (x, y) in fam.states.iter().zip(&b.families[j].states) {
            worst = worst.max(state_gap(x, y));
        }
    }
    Ok((worst, "gain nulling vs reduced forcing on filter, smoother and lagged families".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ValidationConfig {
        ValidationConfig { horizon: 20.0, random_profiles: 200, mc_pairs: 10, mc_samples: 100_000, ..Default::default() }
    }

    #[test]
    fn report_status_follows_kind() {
        assert!(ValidationReport::new("a", CheckKind::UpperBound, 1.0, 1.0, 0, String::new()).passed());
        assert!(!ValidationReport::new("a", CheckKind::UpperBound, 1.1, 1.0, 0, String::new()).passed());
        assert!(ValidationReport::new("a", CheckKind::Equality, -0.5, 1.0, 0, String::new()).passed());
        assert!(!ValidationReport::new("a", CheckKind::LowerBound, 0.5, 0.7, 0, String::new()).passed());
        assert!(!ValidationReport::new("a", CheckKind::UpperBound, f64::NAN, 1.0, 0, String::new()).passed());
    }

    #[test]
    fn empty_selection_gives_empty_report() {
        let cfg = ValidationConfig { checks: vec![], ..Default::default() };
        assert!(run_validation_suite(&cfg).unwrap().is_empty());
    }

    #[test]
    fn unknown_names_are_config_errors() {
        let cfg = ValidationConfig { checks: vec!["nope".into()], ..Default::default() };
        assert!(matches!(run_validation_suite(&cfg), Err(Error::Config(_))));
        let mut cfg = ValidationConfig { checks: vec![], ..Default::default() };
        cfg.tolerances.insert("nope".into(), 1.0);
        assert!(matches!(run_validation_suite(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn quick_suite_passes() {
        let reports = run_validation_suite(&quick()).unwrap();
        assert_eq!(reports.len(), CHECKS.len());
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn zero_tolerance_forces_failure() {
        let mut cfg = quick();
        cfg.checks = vec!["riccati_root".into()];
        cfg.tolerances.insert("riccati_root".into(), 0.0);
        let r = run_validation_suite(&cfg).unwrap();
        assert!(!r[0].passed(), "{r:?}");
    }

    #[test]
    fn monte_carlo_matches_identical_and_shifted_pairs() {
        let p = GaussianState::standard(2);
        let (mc, se) = relative_entropy_monte_carlo(&p, &p, 1000, 1).unwrap();
        assert!(mc.abs() < 1e-12 && se < 1e-12);
        let q = GaussianState { mean: DVector::from_vec(vec![1.0, 0.0]), cov: DMatrix::identity(2, 2) };
        let (mc, se) = relative_entropy_monte_carlo(&p, &q, 200_000, 2).unwrap();
        assert!((mc - 0.5).abs() < 4.0 * se, "{mc} ± {se}");
    }

    #[test]
    fn order_of_exact_first_order_data() {
        let dts = [2e-3, 1e-3, 5e-4];
        let gaps: Vec<f64> = dts.iter().map(|d| 3.0 * d).collect();
        assert!((convergence_order(&dts, &gaps) - 1.0).abs() < 1e-12);
    }
}

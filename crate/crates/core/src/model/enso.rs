//! Six-variable stochastic ENSO model.
//!
//! State `[u, h_W, T_C, T_E, τ, I]`:
//!
//! ```text
//! du   = (−r u − δ_u (T_C + T_E)/2 + β_u(I) τ) dt + σ_u dW_u
//! dh_W = (−r h_W − δ_h (T_C + T_E)/2 + β_h(I) τ) dt + σ_h dW_h
//! dT_C = ((r_C − c1(t,T_C)) T_C + ζ_C T_E + γ_C h_W + σ(I) u + C_u + β_C(I) τ) dt + σ_C dW_C
//! dT_E = ((r_E − c2(t)) T_E − ζ_E T_C + γ_E h_W + β_E(I) τ) dt + σ_E dW_E
//! dτ   = −d_τ τ dt + σ_τ(t,T_C) dW_τ
//! dI   = −λ (I − m) dt + σ_I(I) dW_I
//! ```
//!
//! One variable is hidden and the other five are observed. The shipped
//! parameter file (`configs/enso.toml`) holds illustrative values only.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CgnsModel, Coefficients};
use crate::error::{Error, Result};

/// Default parameter table, time unit = months.
pub const DEFAULT_ENSO_TOML: &str = include_str!("../../configs/enso.toml");

pub const LABELS: [&str; 6] = ["u", "h_W", "T_C", "T_E", "tau", "I"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnsoVariable {
    #[serde(rename = "u")]
    U,
    #[serde(rename = "h_W")]
    Hw,
    #[serde(rename = "T_C")]
    Tc,
    #[serde(rename = "T_E")]
    Te,
    #[serde(rename = "tau")]
    Tau,
    #[serde(rename = "I")]
    I,
}

impl EnsoVariable {
    pub const ALL: [EnsoVariable; 6] = [Self::U, Self::Hw, Self::Tc, Self::Te, Self::Tau, Self::I];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        LABELS[self.index()]
    }

    pub fn from_label(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown ENSO variable `{s}`")))
    }
}

/// A scalar coefficient `f(t, s)` where `s` is the state variable it may depend on.
pub trait CoefficientFunction: Send + Sync {
    fn eval(&self, t: f64, s: f64) -> f64;
    /// Whether the value changes with `s`.
    fn depends_on_state(&self) -> bool;
}

/// Tabulated coefficient shapes readable from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientProfile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude · sin(2π (t − phase) / period)`
    Seasonal {
        mean: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `intercept + slope · s`
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// `below` for `s < breakpoint`, `above` otherwise.
    Piecewise {
        breakpoint: f64,
        below: f64,
        above: f64,
    },
    /// Seasonal cycle plus `slope · s`.
    SeasonalLinear {
        mean: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
        slope: f64,
    },
}

fn seasonal(t: f64, mean: f64, amplitude: f64, period: f64, phase: f64) -> f64 {
    mean + amplitude * (std::f64::consts::TAU * (t - phase) / period).sin()
}

impl CoefficientFunction for CoefficientProfile {
    fn eval(&self, t: f64, s: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Seasonal { mean, amplitude, period, phase } => seasonal(t, mean, amplitude, period, phase),
            Self::Linear { intercept, slope } => intercept + slope * s,
            Self::Piecewise { breakpoint, below, above } => {
                if s < breakpoint {
                    below
                } else {
                    above
                }
            }
            Self::SeasonalLinear { mean, amplitude, period, phase, slope } => {
                seasonal(t, mean, amplitude, period, phase) + slope * s
            }
        }
    }

    fn depends_on_state(&self) -> bool {
        match *self {
            Self::Constant { .. } | Self::Seasonal { .. } => false,
            Self::Linear { slope, .. } | Self::SeasonalLinear { slope, .. } => slope != 0.0,
            Self::Piecewise { below, above, .. } => below != above,
        }
    }
}

/// Closure-backed coefficient plugin.
pub struct FnCoefficient<F> {
    f: F,
    state_dependent: bool,
}

impl<F> FnCoefficient<F>
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    pub fn new(state_dependent: bool, f: F) -> Self {
        Self { f, state_dependent }
    }
}

impl<F> CoefficientFunction for FnCoefficient<F>
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    fn eval(&self, t: f64, s: f64) -> f64 {
        (self.f)(t, s)
    }

    fn depends_on_state(&self) -> bool {
        self.state_dependent
    }
}

/// Scalar parameters and coefficient profiles. Every field must be present
/// before a model can be built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsoParams {
    pub r: Option<f64>,
    pub delta_u: Option<f64>,
    pub delta_h: Option<f64>,
    pub r_c: Option<f64>,
    pub r_e: Option<f64>,
    pub zeta_c: Option<f64>,
    pub zeta_e: Option<f64>,
    pub gamma_c: Option<f64>,
    pub gamma_e: Option<f64>,
    pub c_u: Option<f64>,
    pub d_tau: Option<f64>,
    pub lambda: Option<f64>,
    pub m: Option<f64>,
    pub sigma_u: Option<f64>,
    pub sigma_h: Option<f64>,
    pub sigma_c: Option<f64>,
    pub sigma_e: Option<f64>,
    #[serde(default)]
    pub coefficients: EnsoProfiles,
}

/// Coefficient functions; `c1` and `sigma_tau` take `(t, T_C)`, `c2` takes
/// `t`, the rest take `I`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsoProfiles {
    pub c1: Option<CoefficientProfile>,
    pub c2: Option<CoefficientProfile>,
    pub sigma_tau: Option<CoefficientProfile>,
    pub sigma_i: Option<CoefficientProfile>,
    pub beta_u: Option<CoefficientProfile>,
    pub beta_h: Option<CoefficientProfile>,
    pub beta_c: Option<CoefficientProfile>,
    pub beta_e: Option<CoefficientProfile>,
    pub sigma_adv: Option<CoefficientProfile>,
}

impl EnsoParams {
    /// The shipped illustrative parameter set.
    pub fn shipped() -> Self {
        Self::from_toml(DEFAULT_ENSO_TOML).expect("shipped ENSO table parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fill every missing entry from `other`.
    pub fn or(mut self, other: &EnsoParams) -> Self {
        macro_rules! fill {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = other.$f; } )* };
        }
        fill!(r, delta_u, delta_h, r_c, r_e, zeta_c, zeta_e, gamma_c, gamma_e, c_u, d_tau, lambda, m, sigma_u, sigma_h, sigma_c, sigma_e);
        macro_rules! fill_profile {
            ($($f:ident),*) => { $( if self.coefficients.$f.is_none() { self.coefficients.$f = other.coefficients.$f.clone(); } )* };
        }
        fill_profile!(c1, c2, sigma_tau, sigma_i, beta_u, beta_h, beta_c, beta_e, sigma_adv);
        self
    }
}

type Plugin = Arc<dyn CoefficientFunction>;

/// Coefficient plugins that take precedence over the profiles in [`EnsoParams`].
#[derive(Clone, Default)]
pub struct EnsoPlugins {
    pub c1: Option<Plugin>,
    pub c2: Option<Plugin>,
    pub sigma_tau: Option<Plugin>,
    pub sigma_i: Option<Plugin>,
    pub beta_u: Option<Plugin>,
    pub beta_h: Option<Plugin>,
    pub beta_c: Option<Plugin>,
    pub beta_e: Option<Plugin>,
    pub sigma_adv: Option<Plugin>,
}

struct Resolved {
    r: f64,
    delta_u: f64,
    delta_h: f64,
    r_c: f64,
    r_e: f64,
    zeta_c: f64,
    zeta_e: f64,
    gamma_c: f64,
    gamma_e: f64,
    c_u: f64,
    d_tau: f64,
    lambda: f64,
    m: f64,
    sigma_u: f64,
    sigma_h: f64,
    sigma_c: f64,
    sigma_e: f64,
    c1: Plugin,
    c2: Plugin,
    sigma_tau: Plugin,
    sigma_i: Plugin,
    beta_u: Plugin,
    beta_h: Plugin,
    beta_c: Plugin,
    beta_e: Plugin,
    sigma_adv: Plugin,
}

fn need(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::MissingCoefficient(name.to_string()))
}

fn need_fn(plugin: &Option<Plugin>, profile: &Option<CoefficientProfile>, name: &str) -> Result<Plugin> {
    if let Some(p) = plugin {
        return Ok(p.clone());
    }
    profile
        .clone()
        .map(|p| Arc::new(p) as Plugin)
        .ok_or_else(|| Error::MissingCoefficient(name.to_string()))
}

impl Resolved {
    fn new(p: &EnsoParams, plug: &EnsoPlugins) -> Result<Self> {
        let c = &p.coefficients;
        Ok(Self {
            r: need(p.r, "r")?,
            delta_u: need(p.delta_u, "delta_u")?,
            delta_h: need(p.delta_h, "delta_h")?,
            r_c: need(p.r_c, "r_c")?,
            r_e: need(p.r_e, "r_e")?,
            zeta_c: need(p.zeta_c, "zeta_c")?,
            zeta_e: need(p.zeta_e, "zeta_e")?,
            gamma_c: need(p.gamma_c, "gamma_c")?,
            gamma_e: need(p.gamma_e, "gamma_e")?,
            c_u: need(p.c_u, "c_u")?,
            d_tau: need(p.d_tau, "d_tau")?,
            lambda: need(p.lambda, "lambda")?,
            m: need(p.m, "m")?,
            sigma_u: need(p.sigma_u, "sigma_u")?,
            sigma_h: need(p.sigma_h, "sigma_h")?,
            sigma_c: need(p.sigma_c, "sigma_c")?,
            sigma_e: need(p.sigma_e, "sigma_e")?,
            c1: need_fn(&plug.c1, &c.c1, "c1")?,
            c2: need_fn(&plug.c2, &c.c2, "c2")?,
            sigma_tau: need_fn(&plug.sigma_tau, &c.sigma_tau, "sigma_tau")?,
            sigma_i: need_fn(&plug.sigma_i, &c.sigma_i, "sigma_i")?,
            beta_u: need_fn(&plug.beta_u, &c.beta_u, "beta_u")?,
            beta_h: need_fn(&plug.beta_h, &c.beta_h, "beta_h")?,
            beta_c: need_fn(&plug.beta_c, &c.beta_c, "beta_c")?,
            beta_e: need_fn(&plug.beta_e, &c.beta_e, "beta_e")?,
            sigma_adv: need_fn(&plug.sigma_adv, &c.sigma_adv, "sigma_adv")?,
        })
    }

    /// Linear part `J`, constant part `b` and noise amplitudes `s` of
    /// `dz = (J z + b) dt + diag(s) dW`, given the current `(t, T_C, I)`.
    fn linearize(&self, t: f64, tc: f64, i: f64) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let mut j = DMatrix::zeros(6, 6);
        let (u, h, c, e, w, d) = (0, 1, 2, 3, 4, 5);
        j[(u, u)] = -self.r;
        j[(u, c)] = -0.5 * self.delta_u;
        j[(u, e)] = -0.5 * self.delta_u;
        j[(u, w)] = self.beta_u.eval(t, i);

        j[(h, h)] = -self.r;
        j[(h, c)] = -0.5 * self.delta_h;
        j[(h, e)] = -0.5 * self.delta_h;
        j[(h, w)] = self.beta_h.eval(t, i);

        j[(c, c)] = self.r_c - self.c1.eval(t, tc);
        j[(c, e)] = self.zeta_c;
        j[(c, h)] = self.gamma_c;
        j[(c, u)] = self.sigma_adv.eval(t, i);
        j[(c, w)] = self.beta_c.eval(t, i);

        j[(e, e)] = self.r_e - self.c2.eval(t, 0.0);
        j[(e, c)] = -self.zeta_e;
        j[(e, h)] = self.gamma_e;
        j[(e, w)] = self.beta_e.eval(t, i);

        j[(w, w)] = -self.d_tau;
        j[(d, d)] = -self.lambda;

        let mut b = DVector::zeros(6);
        b[c] = self.c_u;
        b[d] = self.lambda * self.m;

        let s = DVector::from_vec(vec![
            self.sigma_u,
            self.sigma_h,
            self.sigma_c,
            self.sigma_e,
            self.sigma_tau.eval(t, tc),
            self.sigma_i.eval(t, i),
        ]);
        (j, b, s)
    }
}

fn check_hidden(res: &Resolved, hidden: EnsoVariable) -> Result<()> {
    match hidden {
        EnsoVariable::I => Err(Error::ConditionalLinearityViolation(
            "I enters through β(I)τ, σ(I)u and σ_I(I); it cannot be the hidden variable".into(),
        )),
        EnsoVariable::Tc if res.c1.depends_on_state() => Err(Error::ConditionalLinearityViolation(
            "c1 depends on T_C, so c1(t,T_C)·T_C is nonlinear in the hidden T_C".into(),
        )),
        EnsoVariable::Tc if res.sigma_tau.depends_on_state() => Err(Error::ConditionalLinearityViolation(
            "sigma_tau depends on T_C, so the noise of τ would depend on the hidden T_C".into(),
        )),
        _ => Ok(()),
    }
}

/// Build the ENSO CGNS with `hidden` as the only hidden variable.
pub fn enso_model(params: &EnsoParams, hidden: EnsoVariable) -> Result<CgnsModel> {
    enso_model_with(params, &EnsoPlugins::default(), hidden)
}

/// As [`enso_model`], with closure plugins overriding tabulated profiles.
pub fn enso_model_with(params: &EnsoParams, plugins: &EnsoPlugins, hidden: EnsoVariable) -> Result<CgnsModel> {
    let res = Resolved::new(params, plugins)?;
    check_hidden(&res, hidden)?;
    let h = hidden.index();
    let observed: Vec<usize> = (0..6).filter(|&i| i != h).collect();
    let obs_labels: Vec<&str> = observed.iter().map(|&i| LABELS[i]).collect();
    let k = observed.len();

    let obs = observed.clone();
    let model = CgnsModel::new("enso", k, 1, k, 1, move |t, x| {
        let mut z = DVector::zeros(6);
        for (slot, &i) in obs.iter().enumerate() {
            z[i] = x[slot];
        }
        let (j, b, s) = res.linearize(t, z[EnsoVariable::Tc.index()], z[EnsoVariable::I.index()]);
        let mut c = Coefficients::zeros(k, 1, k, 1);
        for (r, &i) in obs.iter().enumerate() {
            c.lambda_x[(r, 0)] = j[(i, h)];
            let mut f = b[i];
            for (q, &m) in obs.iter().enumerate() {
                f += j[(i, m)] * x[q];
            }
            c.f_x[r] = f;
            c.sigma_x1[(r, r)] = s[i];
        }
        c.lambda_y[(0, 0)] = j[(h, h)];
        let mut f = b[h];
        for (q, &m) in obs.iter().enumerate() {
            f += j[(h, m)] * x[q];
        }
        c.f_y[0] = f;
        c.sigma_y2[(0, 0)] = s[h];
        c
    });
    Ok(model.with_labels(&obs_labels, &[LABELS[h]]))
}

/// Full-state drift and noise amplitudes, for checking factorizations.
pub fn enso_full_drift(params: &EnsoParams, t: f64, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let res = Resolved::new(params, &EnsoPlugins::default())?;
    let (j, b, s) = res.linearize(t, z[2], z[5]);
    Ok((j * z + b, s))
}

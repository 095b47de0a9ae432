//! Model inputs: rate constants, the five-component state, delay kernels and
//! initial histories.
//!
//! Everything here is immutable once constructed and validated. All
//! quantities are in arbitrary but consistent concentration/time units.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Index, Mul, Sub};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};
use thiserror::Error;

/// Tolerance on the total mass of a tabulated kernel.
pub const KERNEL_MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParameters(Vec<ParameterViolation>),
    #[error("invalid delay kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid initial history: {0}")]
    InvalidHistory(String),
    #[error("history queried at positive time {0}")]
    PositiveTheta(f64),
}

fn join_violations(violations: &[ParameterViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// A single constraint broken by a raw parameter map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParameterViolation {
    MissingField(String),
    NonFiniteField(String),
    NonPositiveField(String),
    UnknownField(String),
}

impl fmt::Display for ParameterViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingField(name) => write!(f, "missing field `{name}`"),
            Self::NonFiniteField(name) => write!(f, "field `{name}` is not finite"),
            Self::NonPositiveField(name) => write!(f, "field `{name}` must be strictly positive"),
            Self::UnknownField(name) => write!(f, "unknown field `{name}`"),
        }
    }
}

/// Rate constants of the within-host model.
///
/// `c_ctl` is the CTL proliferation rate; it is called `c` in configuration
/// files as well (both spellings are accepted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// Recruitment of uninfected cells.
    pub lambda: f64,
    /// Virus-to-cell infection rate.
    pub beta1: f64,
    /// Cytokine-enhanced infection rate.
    pub beta2: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub d5: f64,
    /// Pyroptosis death rate of infected cells.
    pub alpha1: f64,
    /// Cytokine production per infected cell.
    pub alpha2: f64,
    /// Virion burst rate.
    pub k: f64,
    /// CTL proliferation rate.
    pub c_ctl: f64,
    /// CTL killing rate.
    pub p: f64,
    /// CTL saturation constant.
    pub h: f64,
    /// Mortality during the infection delay.
    pub m1: f64,
    /// Mortality during the production delay.
    pub m2: f64,
}

impl ModelParameters {
    /// Canonical field names, in declaration order.
    pub const FIELD_NAMES: [&'static str; 16] = [
        "lambda", "beta1", "beta2", "d1", "d2", "d3", "d4", "d5", "alpha1", "alpha2", "k",
        "c_ctl", "p", "h", "m1", "m2",
    ];

    pub fn fields(&self) -> [(&'static str, f64); 16] {
        let values = [
            self.lambda,
            self.beta1,
            self.beta2,
            self.d1,
            self.d2,
            self.d3,
            self.d4,
            self.d5,
            self.alpha1,
            self.alpha2,
            self.k,
            self.c_ctl,
            self.p,
            self.h,
            self.m1,
            self.m2,
        ];
        let mut out = [("", 0.0); 16];
        for (slot, (name, value)) in out.iter_mut().zip(Self::FIELD_NAMES.iter().zip(values)) {
            *slot = (name, value);
        }
        out
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.fields()
            .iter()
            .map(|(name, value)| (name.to_string(), *value))
            .collect()
    }

    /// Checks every field; collects all violations rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ModelError> {
        let violations: Vec<_> = self
            .fields()
            .iter()
            .filter_map(|(name, value)| check_value(name, *value))
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParameters(violations))
        }
    }

    /// Disease-free uninfected-cell level λ/d₁.
    pub fn x0(&self) -> f64 {
        self.lambda / self.d1
    }

    /// Stable 64-bit FNV-1a hash over the bit patterns of all fields.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, value) in self.fields() {
            for byte in value.to_bits().to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{hash:016x}")
    }
}

fn check_value(name: &str, value: f64) -> Option<ParameterViolation> {
    if !value.is_finite() {
        Some(ParameterViolation::NonFiniteField(name.to_string()))
    } else if value <= 0.0 {
        Some(ParameterViolation::NonPositiveField(name.to_string()))
    } else {
        None
    }
}

/// Builds validated parameters from a raw name → value map.
///
/// Accepts `c` as an alias for `c_ctl`. Every violated constraint is
/// reported in one error.
pub fn validate_parameters(raw: &BTreeMap<String, f64>) -> Result<ModelParameters, ModelError> {
    let mut violations = Vec::new();
    for key in raw.keys() {
        let known = key == "c" || ModelParameters::FIELD_NAMES.contains(&key.as_str());
        if !known {
            violations.push(ParameterViolation::UnknownField(key.clone()));
        }
    }
    if raw.contains_key("c") && raw.contains_key("c_ctl") {
        violations.push(ParameterViolation::UnknownField("c (duplicate of c_ctl)".into()));
    }

    let mut values = [f64::NAN; 16];
    for (slot, name) in values.iter_mut().zip(ModelParameters::FIELD_NAMES) {
        let found = raw
            .get(name)
            .or_else(|| if name == "c_ctl" { raw.get("c") } else { None });
        match found {
            Some(&value) => {
                if let Some(violation) = check_value(name, value) {
                    violations.push(violation);
                }
                *slot = value;
            }
            None => violations.push(ParameterViolation::MissingField(name.to_string())),
        }
    }
    if !violations.is_empty() {
        return Err(ModelError::InvalidParameters(violations));
    }
    let [lambda, beta1, beta2, d1, d2, d3, d4, d5, alpha1, alpha2, k, c_ctl, p, h, m1, m2] =
        values;
    Ok(ModelParameters {
        lambda,
        beta1,
        beta2,
        d1,
        d2,
        d3,
        d4,
        d5,
        alpha1,
        alpha2,
        k,
        c_ctl,
        p,
        h,
        m1,
        m2,
    })
}

/// Concentrations (x, y, c, v, z): uninfected cells, infected cells,
/// cytokines, free virus and CTLs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State5 {
    pub x: f64,
    pub y: f64,
    pub c: f64,
    pub v: f64,
    pub z: f64,
}

impl State5 {
    pub const NAMES: [&'static str; 5] = ["x", "y", "c", "v", "z"];

    pub const fn new(x: f64, y: f64, c: f64, v: f64, z: f64) -> Self {
        Self { x, y, c, v, z }
    }

    pub const fn from_array([x, y, c, v, z]: [f64; 5]) -> Self {
        Self { x, y, c, v, z }
    }

    pub const fn to_array(self) -> [f64; 5] {
        [self.x, self.y, self.c, self.v, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.to_array().iter().all(|&v| v >= 0.0)
    }

    pub fn min_component(&self) -> f64 {
        self.to_array().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().into_iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &State5) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_array(self.to_array().map(f))
    }
}

impl Index<usize> for State5 {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        match index {
            0 => &self.x,
            1 => &self.y,
            2 => &self.c,
            3 => &self.v,
            4 => &self.z,
            _ => panic!("state component index {index} out of range"),
        }
    }
}

impl Add for State5 {
    type Output = State5;

    fn add(self, rhs: State5) -> State5 {
        State5::new(
            self.x + rhs.x,
            self.y + rhs.y,
            self.c + rhs.c,
            self.v + rhs.v,
            self.z + rhs.z,
        )
    }
}

impl Sub for State5 {
    type Output = State5;

    fn sub(self, rhs: State5) -> State5 {
        State5::new(
            self.x - rhs.x,
            self.y - rhs.y,
            self.c - rhs.c,
            self.v - rhs.v,
            self.z - rhs.z,
        )
    }
}

impl Mul<f64> for State5 {
    type Output = State5;

    fn mul(self, rhs: f64) -> State5 {
        self.map(|v| v * rhs)
    }
}

/// Discretised delay kernel: a finite set of delay nodes with probability
/// weights. Mass beyond the last node (for truncated densities) is kept in
/// `tail_mass` and is *not* redistributed over the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedKernel {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    tail_mass: f64,
}

impl TabulatedKernel {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }
}

/// Probability density of the delay length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DelayKernel {
    /// Point mass: a discrete lag `tau`.
    Dirac { tau: f64 },
    Tabulated(TabulatedKernel),
}

impl DelayKernel {
    pub fn dirac(tau: f64) -> Result<Self, ModelError> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(ModelError::InvalidKernel(format!(
                "dirac delay must be finite and >= 0, got {tau}"
            )));
        }
        Ok(Self::Dirac { tau })
    }

    /// Tabulated kernel whose weights must sum to one.
    pub fn tabulated(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self, ModelError> {
        Self::tabulated_with_tail(nodes, weights, 0.0)
    }

    fn tabulated_with_tail(
        nodes: Vec<f64>,
        weights: Vec<f64>,
        tail_mass: f64,
    ) -> Result<Self, ModelError> {
        let invalid = |msg: String| Err(ModelError::InvalidKernel(msg));
        if nodes.is_empty() {
            return invalid("tabulated kernel needs at least one node".into());
        }
        if nodes.len() != weights.len() {
            return invalid(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            ));
        }
        if nodes.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return invalid("nodes must be finite and >= 0".into());
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("nodes must be strictly increasing".into());
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return invalid("weights must be finite and >= 0".into());
        }
        let mass: f64 = weights.iter().sum::<f64>() + tail_mass;
        if (mass - 1.0).abs() > KERNEL_MASS_TOLERANCE {
            return invalid(format!("total mass {mass} differs from 1"));
        }
        Ok(Self::Tabulated(TabulatedKernel {
            nodes,
            weights,
            tail_mass,
        }))
    }

    /// Uniform density on `[center - width/2, center + width/2]`, discretised
    /// by the midpoint rule on `n` equal bins.
    pub fn uniform(center: f64, width: f64, n: usize) -> Result<Self, ModelError> {
        if n == 0 || !(width > 0.0) || center - width / 2.0 < 0.0 {
            return Err(ModelError::InvalidKernel(format!(
                "uniform kernel needs n > 0, width > 0 and support in [0, inf), got center {center}, width {width}, n {n}"
            )));
        }
        let bin = width / n as f64;
        let lo = center - width / 2.0;
        let nodes = (0..n).map(|j| lo + (j as f64 + 0.5) * bin).collect();
        let weights = vec![1.0 / n as f64; n];
        Self::tabulated(nodes, weights)
    }

    /// Gamma density with the given shape and scale, truncated where the
    /// remaining tail mass drops below `eps` and binned into `n_bins` equal
    /// bins. Each node sits at its bin midpoint and carries the exact bin mass.
    pub fn gamma(shape: f64, scale: f64, n_bins: usize, eps: f64) -> Result<Self, ModelError> {
        let dist = Gamma::new(shape, 1.0 / scale)
            .map_err(|e| ModelError::InvalidKernel(format!("gamma kernel: {e}")))?;
        if n_bins == 0 || !(eps > 0.0 && eps < 1.0) {
            return Err(ModelError::InvalidKernel(
                "gamma kernel needs n_bins > 0 and eps in (0, 1)".into(),
            ));
        }
        let s_max = dist.inverse_cdf(1.0 - eps);
        let bin = s_max / n_bins as f64;
        let edges: Vec<f64> = (0..=n_bins).map(|j| j as f64 * bin).collect();
        let cdf: Vec<f64> = edges.iter().map(|&s| dist.cdf(s)).collect();
        let weights: Vec<f64> = cdf.windows(2).map(|w| w[1] - w[0]).collect();
        let nodes = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let tail_mass = 1.0 - cdf[n_bins] + cdf[0];
        Self::tabulated_with_tail(nodes, weights, tail_mass)
    }

    /// `(delay, weight)` pairs.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Dirac { tau } => vec![(*tau, 1.0)],
            Self::Tabulated(t) => t.nodes.iter().copied().zip(t.weights.iter().copied()).collect(),
        }
    }

    pub fn tail_mass(&self) -> f64 {
        match self {
            Self::Dirac { .. } => 0.0,
            Self::Tabulated(t) => t.tail_mass,
        }
    }

    pub fn max_delay(&self) -> f64 {
        match self {
            Self::Dirac { tau } => *tau,
            Self::Tabulated(t) => *t.nodes.last().expect("non-empty by construction"),
        }
    }
}

/// The pair of kernels: `infection` (f₁, paired with m₁) delays the
/// appearance of newly infected cells, `production` (f₂, paired with m₂)
/// delays virion release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayKernels {
    pub infection: DelayKernel,
    pub production: DelayKernel,
}

impl DelayKernels {
    pub fn new(infection: DelayKernel, production: DelayKernel) -> Self {
        Self {
            infection,
            production,
        }
    }

    /// Two discrete lags, the setting used throughout the scenario registry.
    pub fn dirac(tau1: f64, tau2: f64) -> Result<Self, ModelError> {
        Ok(Self::new(DelayKernel::dirac(tau1)?, DelayKernel::dirac(tau2)?))
    }

    pub fn max_delay(&self) -> f64 {
        self.infection.max_delay().max(self.production.max_delay())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedHistory {
    times: Vec<f64>,
    states: Vec<State5>,
}

impl TabulatedHistory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[State5] {
        &self.states
    }
}

/// Initial data on (-∞, 0].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum InitialHistory {
    Constant(State5),
    /// Piecewise-linear samples ending at θ = 0; earlier times hold the first sample.
    Tabulated(TabulatedHistory),
}

impl InitialHistory {
    pub fn constant(value: State5) -> Result<Self, ModelError> {
        if !value.is_finite() {
            return Err(ModelError::InvalidHistory("non-finite value".into()));
        }
        Ok(Self::Constant(value))
    }

    pub fn tabulated(times: Vec<f64>, states: Vec<State5>) -> Result<Self, ModelError> {
        let invalid = |msg: &str| Err(ModelError::InvalidHistory(msg.into()));
        if times.is_empty() || times.len() != states.len() {
            return invalid("times and states must be non-empty and of equal length");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("times must be strictly increasing");
        }
        if *times.last().unwrap() != 0.0 {
            return invalid("times must end at 0");
        }
        if times.iter().any(|t| !t.is_finite()) || states.iter().any(|s| !s.is_finite()) {
            return invalid("non-finite sample");
        }
        Ok(Self::Tabulated(TabulatedHistory { times, states }))
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Self::Constant(value) => value.is_nonnegative(),
            Self::Tabulated(t) => t.states.iter().all(State5::is_nonnegative),
        }
    }

    /// Value at θ = 0, the integrator's starting point.
    pub fn initial_value(&self) -> State5 {
        self.value_at(0.0)
    }

    /// Like [`history_at`] but without the sign check; positive θ is treated as 0.
    pub(crate) fn value_at(&self, theta: f64) -> State5 {
        match self {
            Self::Constant(value) => *value,
            Self::Tabulated(t) => {
                let times = &t.times;
                if theta <= times[0] {
                    return t.states[0];
                }
                if theta >= 0.0 {
                    return *t.states.last().unwrap();
                }
                let hi = times.partition_point(|&s| s < theta);
                let lo = hi - 1;
                let frac = (theta - times[lo]) / (times[hi] - times[lo]);
                t.states[lo] + (t.states[hi] - t.states[lo]) * frac
            }
        }
    }
}

/// Value of the initial history at `theta <= 0`.
pub fn history_at(history: &InitialHistory, theta: f64) -> Result<State5, ModelError> {
    if theta > 0.0 {
        return Err(ModelError::PositiveTheta(theta));
    }
    Ok(history.value_at(theta))
}

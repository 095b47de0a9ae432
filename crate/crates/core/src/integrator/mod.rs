//! Fixed-step integration of the delay model.

mod steps;

pub use steps::{solve, DelaySystem, DenseSolution, Interpolation, Past, StepFailure};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DelayKernel, DelayKernels, InitialHistory, ModelError, ModelParameters, State5};

/// Any component beyond this magnitude aborts integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integration config: {0}")]
    Config(String),
    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },
    #[error("non-finite state or derivative")]
    NonFiniteState,
    #[error("time {0} is outside the trajectory")]
    OutOfRange(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Tail-mass bound used when truncating infinite-support kernels.
    #[serde(default = "default_eps")]
    pub kernel_truncation_eps: f64,
    #[serde(default)]
    pub interpolation: Interpolation,
}

fn default_eps() -> f64 {
    DEFAULT_TRUNCATION_EPS
}

impl IntegrationConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            kernel_truncation_eps: DEFAULT_TRUNCATION_EPS,
            interpolation: Interpolation::CubicHermite,
        }
    }

    /// Number of steps; `t_end` has to be a whole number of steps.
    pub fn steps(&self) -> Result<usize, IntegrationError> {
        let bad = |msg: String| Err(IntegrationError::Config(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be finite and positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be finite and positive, got {}", self.t_end));
        }
        if self.dt > self.t_end {
            return bad(format!("dt {} exceeds t_end {}", self.dt, self.t_end));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return bad(format!(
                "t_end {} is not a multiple of dt {}",
                self.t_end, self.dt
            ));
        }
        Ok(steps as usize)
    }
}

/// Delayed quantity φ read through a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayedQuantity {
    Component(usize),
    /// x·v, the virus-to-cell contact rate.
    XV,
    /// x·c, the cytokine-enhanced contact rate.
    XC,
}

impl DelayedQuantity {
    fn of(self, s: &State5) -> f64 {
        match self {
            Self::Component(i) => s[i],
            Self::XV => s.x * s.v,
            Self::XC => s.x * s.c,
        }
    }
}

/// ∫ f(s) e^{-m s} φ(t - s) ds by the kernel's own nodes.
pub fn delayed_term<P: Past<5>>(
    kernel: &DelayKernel,
    m: f64,
    past: &P,
    t: f64,
    quantity: DelayedQuantity,
) -> f64 {
    kernel
        .nodes()
        .into_iter()
        .map(|(s, w)| w * (-m * s).exp() * quantity.of(&State5::from_array(past.at(t - s))))
        .sum()
}

/// The five-equation model with its kernels pre-weighted by survival.
#[derive(Debug, Clone)]
pub struct ViralSystem {
    params: ModelParameters,
    /// (delay, weight · e^{-m₁ s})
    infection: Vec<(f64, f64)>,
    /// (delay, weight · e^{-m₂ s})
    production: Vec<(f64, f64)>,
    project_past: bool,
}

impl ViralSystem {
    pub fn new(params: &ModelParameters, kernels: &DelayKernels) -> Self {
        let weigh = |kernel: &DelayKernel, m: f64| {
            kernel
                .nodes()
                .into_iter()
                .map(|(s, w)| (s, w * (-m * s).exp()))
                .collect()
        };
        Self {
            params: *params,
            infection: weigh(&kernels.infection, params.m1),
            production: weigh(&kernels.production, params.m2),
            project_past: false,
        }
    }

    /// Clamps interpolated past values (t - s > 0) at zero. Valid whenever
    /// the history is nonnegative, since the exact solution then stays in
    /// the cone; it removes Hermite undershoot near off-grid kinks.
    pub fn with_nonnegative_past(mut self, on: bool) -> Self {
        self.project_past = on;
        self
    }

    pub fn rhs<P: Past<5>>(&self, t: f64, current: &State5, past: &P) -> State5 {
        let p = &self.params;
        let State5 { x, y, c, v, z } = *current;
        let lookup = |s: f64| {
            if s == 0.0 {
                *current
            } else if self.project_past && t > s {
                State5::from_array(past.at(t - s)).map(|u| u.max(0.0))
            } else {
                State5::from_array(past.at(t - s))
            }
        };
        let delayed_infection: f64 = self
            .infection
            .iter()
            .map(|&(s, w)| {
                let then = lookup(s);
                w * (p.beta1 * then.x * then.v + p.beta2 * then.x * then.c)
            })
            .sum();
        let delayed_production: f64 = self
            .production
            .iter()
            .map(|&(s, w)| w * lookup(s).y)
            .sum();
        State5::new(
            p.lambda - p.beta1 * x * v - p.beta2 * x * c - p.d1 * x,
            delayed_infection - (p.alpha1 + p.d2) * y - p.p * y * z,
            p.alpha2 * y - p.d3 * c,
            p.k * delayed_production - p.d4 * v,
            p.c_ctl * y * z / (p.h + z) - p.d5 * z,
        )
    }
}

impl DelaySystem<5> for ViralSystem {
    fn derivative<P: Past<5>>(&self, t: f64, current: &[f64; 5], past: &P) -> [f64; 5] {
        self.rhs(t, &State5::from_array(*current), past).to_array()
    }
}

/// Model right-hand side at time `t`, delayed terms read from `past`.
pub fn rhs<P: Past<5>>(
    params: &ModelParameters,
    kernels: &DelayKernels,
    past: &P,
    t: f64,
    current: &State5,
) -> Result<State5, IntegrationError> {
    if !current.is_finite() {
        return Err(IntegrationError::NonFiniteState);
    }
    let out = ViralSystem::new(params, kernels).rhs(t, current, past);
    if !out.is_finite() {
        return Err(IntegrationError::NonFiniteState);
    }
    Ok(out)
}

/// Provenance recorded with every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub config: IntegrationConfig,
    pub parameter_fingerprint: String,
    /// Probability mass of (f₁, f₂) lost to truncation.
    pub truncated_mass: (f64, f64),
}

/// Dense solution on [0, t_end] plus the history it was started from.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    solution: DenseSolution<5>,
    history: InitialHistory,
    metadata: TrajectoryMetadata,
}

impl Trajectory {
    pub fn from_parts(
        solution: DenseSolution<5>,
        history: InitialHistory,
        metadata: TrajectoryMetadata,
    ) -> Self {
        Self {
            solution,
            history,
            metadata,
        }
    }

    /// A trajectory sitting at `point` forever, history included.
    pub fn constant(point: State5, dt: f64, t_end: f64) -> Result<Self, IntegrationError> {
        let config = IntegrationConfig::new(dt, t_end);
        let n = config.steps()?;
        let solution = DenseSolution::from_parts(
            dt,
            vec![point.to_array(); n + 1],
            vec![[0.0; 5]; n + 1],
            Interpolation::CubicHermite,
        );
        Ok(Self {
            solution,
            history: InitialHistory::constant(point)?,
            metadata: TrajectoryMetadata {
                config,
                parameter_fingerprint: String::new(),
                truncated_mass: (0.0, 0.0),
            },
        })
    }

    /// Applies `f` to every stored state, derivative and the history. For
    /// constructing synthetic trajectories only: the result is no longer a
    /// solution of anything.
    pub fn map_states(&self, f: impl Fn(State5) -> State5) -> Self {
        let values = self
            .solution
            .values()
            .iter()
            .map(|s| f(State5::from_array(*s)).to_array())
            .collect();
        let history = match &self.history {
            InitialHistory::Constant(v) => InitialHistory::Constant(f(*v)),
            InitialHistory::Tabulated(t) => InitialHistory::tabulated(
                t.times().to_vec(),
                t.states().iter().map(|s| f(*s)).collect(),
            )
            .expect("mapping preserves the time grid"),
        };
        let derivatives = self.solution.derivatives().to_vec();
        Self {
            solution: DenseSolution::from_parts(
                self.dt(),
                values,
                derivatives,
                self.solution.interpolation(),
            ),
            history,
            metadata: self.metadata.clone(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.solution.dt()
    }

    pub fn t_end(&self) -> f64 {
        self.solution.t_end()
    }

    pub fn len(&self) -> usize {
        self.solution.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solution.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.solution.time(i)
    }

    pub fn state(&self, i: usize) -> State5 {
        State5::from_array(self.solution.values()[i])
    }

    pub fn derivative(&self, i: usize) -> State5 {
        State5::from_array(self.solution.derivatives()[i])
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = State5> + '_ {
        self.solution.values().iter().map(|s| State5::from_array(*s))
    }

    pub fn history(&self) -> &InitialHistory {
        &self.history
    }

    pub fn metadata(&self) -> &TrajectoryMetadata {
        &self.metadata
    }

    pub fn solution(&self) -> &DenseSolution<5> {
        &self.solution
    }

    /// Dense output on [0, t_end].
    pub fn interpolate(&self, t: f64) -> Result<State5, IntegrationError> {
        self.solution
            .interpolate(t)
            .map(State5::from_array)
            .ok_or(IntegrationError::OutOfRange(t))
    }

    /// History for t ≤ 0, dense output afterwards (clamped at t_end).
    pub fn state_at(&self, t: f64) -> State5 {
        if t <= 0.0 {
            self.history.value_at(t)
        } else {
            State5::from_array(self.solution.interpolate_clamped(t))
        }
    }
}

impl Past<5> for Trajectory {
    fn at(&self, t: f64) -> [f64; 5] {
        self.state_at(t).to_array()
    }
}

/// Dense output of a trajectory at `t`.
pub fn interpolate(traj: &Trajectory, t: f64) -> Result<State5, IntegrationError> {
    traj.interpolate(t)
}

/// Method-of-steps RK4 from `history` over [0, t_end].
pub fn integrate(
    params: &ModelParameters,
    kernels: &DelayKernels,
    history: &InitialHistory,
    config: &IntegrationConfig,
) -> Result<Trajectory, IntegrationError> {
    params.validate()?;
    let steps = config.steps()?;
    let system = ViralSystem::new(params, kernels).with_nonnegative_past(history.is_nonnegative());
    let past = |t: f64| history.value_at(t).to_array();
    let solution = solve(
        &system,
        &past,
        config.dt,
        steps,
        config.interpolation,
        BLOW_UP_THRESHOLD,
    )
    .map_err(|failure| IntegrationError::BlowUp { t: failure.t })?;
    Ok(Trajectory {
        solution,
        history: history.clone(),
        metadata: TrajectoryMetadata {
            config: *config,
            parameter_fingerprint: params.fingerprint(),
            truncated_mass: (kernels.infection.tail_mass(), kernels.production.tail_mass()),
        },
    })
}

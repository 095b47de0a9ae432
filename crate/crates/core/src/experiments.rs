//! The published numerical program: the three parameter rows with their
//! initial histories and lag pairs, attractor classification of finished
//! runs, and threshold sweeps over the two lags.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    equilibria, predict_regime, reproduction_numbers, AnalysisError, EquilibriumSet, FormulaMode,
    Regime, ReproductionNumbers, SurvivalFactors,
};
use crate::certificates::{
    check_boundedness, check_monotone_decrease, CertificateError, CertificateReport,
    LyapunovFunctional, BOUNDEDNESS_REL_TOL, MONOTONE_REL_TOL,
};
use crate::integrator::{integrate, IntegrationConfig, IntegrationError, Trajectory, DEFAULT_DT};
use crate::model::{DelayKernels, InitialHistory, ModelError, ModelParameters, State5};

/// Absolute convergence tolerance in state units.
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-3;
/// Trailing fraction of the horizon inspected by [`classify`].
pub const DEFAULT_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("unknown scenario {0:?} (expected E0, E1 or E2)")]
    UnknownScenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioName {
    E0,
    E1,
    E2,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 3] = [Self::E0, Self::E1, Self::E2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::E0 => "E0",
            Self::E1 => "E1",
            Self::E2 => "E2",
        }
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "E0" => Ok(Self::E0),
            "E1" => Ok(Self::E1),
            "E2" => Ok(Self::E2),
            _ => Err(ExperimentError::UnknownScenario(s.to_string())),
        }
    }
}

/// One row of the numerical program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub params: ModelParameters,
    /// Constant initial histories Φ₁, Φ₂, Φ₃.
    pub histories: Vec<State5>,
    /// Discrete lags (τ₁′, τ₂′); the first pair is the reference pair.
    pub lag_pairs: Vec<(f64, f64)>,
    /// Default integration horizon.
    pub horizon: f64,
}

#[allow(clippy::too_many_arguments)]
const fn row(
    lambda: f64,
    beta1: f64,
    beta2: f64,
    d1: f64,
    m1: f64,
    alpha1: f64,
    d2: f64,
    p: f64,
    alpha2: f64,
    d3: f64,
    k: f64,
    m2: f64,
    d4: f64,
    c_ctl: f64,
    h: f64,
    d5: f64,
) -> ModelParameters {
    ModelParameters {
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
    }
}

const E0_PARAMS: ModelParameters = row(
    1.0, 0.004, 0.005, 0.2, 0.3, 0.1, 0.25, 0.2, 0.1, 0.25, 8.0, 0.3, 0.25, 0.3, 0.01, 0.25,
);
const E1_PARAMS: ModelParameters = row(
    20.0, 0.004, 0.005, 0.2, 0.3, 0.1, 0.25, 0.02, 0.6, 0.25, 20.0, 0.3, 0.25, 0.003, 0.03, 0.25,
);
const E2_PARAMS: ModelParameters = row(
    20.0, 0.004, 0.005, 0.2, 0.3, 0.1, 0.25, 0.02, 0.6, 0.25, 20.0, 0.3, 0.25, 0.03, 0.03, 0.25,
);

/// The embedded registry entry for `name`.
pub fn scenario(name: ScenarioName) -> Scenario {
    let s = State5::new;
    match name {
        ScenarioName::E0 => Scenario {
            name,
            params: E0_PARAMS,
            histories: vec![
                s(5.0, 5.0, 6.0, 3.0, 3.5),
                s(6.0, 2.0, 7.0, 2.0, 4.5),
                s(4.0, 3.0, 8.0, 4.0, 4.0),
            ],
            lag_pairs: vec![(5.0, 3.0), (5.0, 2.0), (2.0, 3.0)],
            horizon: 1000.0,
        },
        ScenarioName::E1 => Scenario {
            name,
            params: E1_PARAMS,
            histories: vec![
                s(5.0, 5.0, 6.0, 3.0, 35.0),
                s(6.0, 2.0, 7.0, 2.0, 45.0),
                s(4.0, 3.0, 8.0, 4.0, 25.0),
            ],
            lag_pairs: vec![(5.0, 3.0), (5.0, 2.0), (4.0, 7.0)],
            horizon: 2000.0,
        },
        ScenarioName::E2 => Scenario {
            name,
            params: E2_PARAMS,
            histories: vec![
                s(12.0, 4.0, 35.0, 1.0, 10.0),
                s(25.0, 3.0, 40.0, 2.0, 15.0),
                s(40.0, 10.0, 25.0, 4.0, 13.0),
            ],
            lag_pairs: vec![(5.0, 4.0), (5.0, 2.0), (2.0, 4.0)],
            horizon: 2000.0,
        },
    }
}

pub fn scenario_by_name(name: &str) -> Result<Scenario, ExperimentError> {
    Ok(scenario(name.parse()?))
}

/// Which (Φ, lags) combinations a scenario run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunDesign {
    /// Every Φ at every lag pair.
    Full,
    /// Every Φ at the reference lags, plus Φ₁ at each other lag pair.
    Figures,
}

/// One run of a scenario: indices into `histories` and `lag_pairs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub history: usize,
    pub lags: usize,
}

impl RunSpec {
    /// File stem such as `E2_phi1_lags2` (1-based).
    pub fn label(&self, name: ScenarioName) -> String {
        format!("{name}_phi{}_lags{}", self.history + 1, self.lags + 1)
    }
}

impl Scenario {
    pub fn runs(&self, design: RunDesign) -> Vec<RunSpec> {
        match design {
            RunDesign::Full => (0..self.lag_pairs.len())
                .flat_map(|lags| (0..self.histories.len()).map(move |history| RunSpec { history, lags }))
                .collect(),
            RunDesign::Figures => (0..self.histories.len())
                .map(|history| RunSpec { history, lags: 0 })
                .chain((1..self.lag_pairs.len()).map(|lags| RunSpec { history: 0, lags }))
                .collect(),
        }
    }

    pub fn kernels(&self, run: RunSpec) -> DelayKernels {
        let (tau1, tau2) = self.lag_pairs[run.lags];
        DelayKernels::dirac(tau1, tau2).expect("registry lags are valid")
    }

    pub fn history(&self, run: RunSpec) -> InitialHistory {
        InitialHistory::constant(self.histories[run.history]).expect("registry histories are finite")
    }
}

/// Observed attractor of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    E0,
    E1,
    E2,
    NotConverged,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::E0 => "E0",
            Self::E1 => "E1",
            Self::E2 => "E2",
            Self::NotConverged => "NotConverged",
        }
    }

    pub fn regime(&self) -> Option<Regime> {
        match self {
            Self::E0 => Some(Regime::E0),
            Self::E1 => Some(Regime::E1),
            Self::E2 => Some(Regime::E2),
            Self::NotConverged => None,
        }
    }
}

/// Nodes with t ≥ (1 − window)·t_end.
fn trailing_window(traj: &Trajectory, window: f64) -> std::ops::Range<usize> {
    let n = traj.len();
    let start = ((1.0 - window.clamp(0.0, 1.0)) * (n - 1) as f64).floor() as usize;
    start.min(n - 1)..n
}

/// Largest sup-norm distance between the trailing window and `point`.
pub fn window_distance(traj: &Trajectory, window: f64, point: &State5) -> f64 {
    trailing_window(traj, window)
        .map(|i| traj.state(i).distance(point))
        .fold(0.0, f64::max)
}

/// Largest range (max − min) of any component over the trailing window.
pub fn window_oscillation(traj: &Trajectory, window: f64) -> f64 {
    let mut lo = [f64::INFINITY; 5];
    let mut hi = [f64::NEG_INFINITY; 5];
    for i in trailing_window(traj, window) {
        let s = traj.state(i).to_array();
        for j in 0..5 {
            lo[j] = lo[j].min(s[j]);
            hi[j] = hi[j].max(s[j]);
        }
    }
    (0..5).map(|j| hi[j] - lo[j]).fold(0.0, f64::max)
}

/// Names the equilibrium the trailing window sits within `tol` of. The window
/// must also be settled: no component may vary by more than `tol` across it.
pub fn classify(traj: &Trajectory, eqs: &EquilibriumSet, window: f64, tol: f64) -> Classification {
    if !(window_oscillation(traj, window) <= tol) {
        return Classification::NotConverged;
    }
    let candidates = [
        (Classification::E0, Some(eqs.e0)),
        (Classification::E1, eqs.e1),
        (Classification::E2, eqs.e2),
    ];
    candidates
        .into_iter()
        .filter_map(|(c, p)| p.map(|p| (c, window_distance(traj, window, &p))))
        .filter(|(_, d)| *d < tol)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(Classification::NotConverged, |(c, _)| c)
}

/// Result of simulating one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observed {
    Classified(Classification),
    Failed(String),
}

impl Observed {
    pub fn label(&self) -> &str {
        match self {
            Self::Classified(c) => c.as_str(),
            Self::Failed(_) => "failed",
        }
    }
}

/// Thresholds at one (τ₁′, τ₂′).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCell {
    pub tau1: f64,
    pub tau2: f64,
    pub derivation: ReproductionNumbers,
    pub paper: ReproductionNumbers,
    /// From the derivation-mode thresholds.
    pub predicted: Regime,
    /// What the printed-form thresholds would predict.
    pub predicted_paper: Regime,
    pub observed: Option<Observed>,
}

/// Simulation settings for [`sweep`] cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSimulation {
    pub history: InitialHistory,
    pub config: IntegrationConfig,
    pub window: f64,
    pub tol: f64,
}

fn simulate_cell(
    params: &ModelParameters,
    kernels: &DelayKernels,
    factors: &SurvivalFactors,
    sim: &SweepSimulation,
) -> Observed {
    let run = || -> Result<Classification, ExperimentError> {
        let eqs = equilibria(params, factors)?;
        let traj = integrate(params, kernels, &sim.history, &sim.config)?;
        Ok(classify(&traj, &eqs, sim.window, sim.tol))
    };
    match run() {
        Ok(c) => Observed::Classified(c),
        Err(e) => Observed::Failed(e.to_string()),
    }
}

/// Evaluates every grid cell, in parallel, returned row-major in `tau1`.
/// A failing simulation is recorded in its cell and does not stop the grid.
pub fn sweep(
    params: &ModelParameters,
    tau1_grid: &[f64],
    tau2_grid: &[f64],
    simulation: Option<&SweepSimulation>,
) -> Result<Vec<RegimeCell>, ExperimentError> {
    params.validate()?;
    let cells: Vec<(f64, f64)> = tau1_grid
        .iter()
        .flat_map(|&a| tau2_grid.iter().map(move |&b| (a, b)))
        .collect();
    for &(a, b) in &cells {
        DelayKernels::dirac(a, b)?;
    }
    Ok(cells
        .into_par_iter()
        .map(|(tau1, tau2)| {
            let kernels = DelayKernels::dirac(tau1, tau2).expect("checked above");
            let factors = SurvivalFactors::from_kernels(params, &kernels);
            let derivation = reproduction_numbers(params, &factors, FormulaMode::Derivation);
            let paper = reproduction_numbers(params, &factors, FormulaMode::PaperPrinted);
            RegimeCell {
                tau1,
                tau2,
                derivation,
                paper,
                predicted: predict_regime(&derivation),
                predicted_paper: predict_regime(&paper),
                observed: simulation.map(|sim| simulate_cell(params, &kernels, &factors, sim)),
            }
        })
        .collect())
}

/// Tolerances for [`assess`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssessOptions {
    pub window: f64,
    pub classify_tol: f64,
    pub monotone_rel_tol: f64,
    pub boundedness_rel_tol: f64,
    /// Refinement of the inner quadrature mesh of the Lyapunov memory terms.
    pub quadrature_refine: usize,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            classify_tol: DEFAULT_CLASSIFY_TOL,
            monotone_rel_tol: MONOTONE_REL_TOL,
            boundedness_rel_tol: BOUNDEDNESS_REL_TOL,
            quadrature_refine: 1,
        }
    }
}

/// Everything known about one finished run.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub trajectory: Trajectory,
    pub factors: SurvivalFactors,
    pub derivation: ReproductionNumbers,
    pub paper: ReproductionNumbers,
    pub predicted: Regime,
    pub predicted_paper: Regime,
    pub equilibria: EquilibriumSet,
    pub classification: Classification,
    /// Sup distance of the trailing window to the observed equilibrium.
    pub distance: Option<f64>,
    pub boundedness: CertificateReport,
    /// Monotone decrease of the functional for the derivation-mode regime;
    /// `None` in the boundary regime.
    pub lyapunov: Option<CertificateReport>,
    pub lyapunov_series: Option<crate::certificates::LyapunovSeries>,
    pub options: AssessOptions,
    pub notes: Vec<String>,
}

impl Assessment {
    /// True when the two formula modes predict different attractors.
    pub fn mode_disagreement(&self) -> bool {
        self.predicted != self.predicted_paper
    }

    /// Convergence to the predicted equilibrium as a report: the worst
    /// violation is the larger of the window's distance to that equilibrium
    /// and its oscillation. `None` in the boundary regime.
    pub fn convergence(&self) -> Option<CertificateReport> {
        let target = self.equilibria.get(self.predicted)?;
        let window = self.options.window;
        let distance = window_distance(&self.trajectory, window, &target);
        let oscillation = window_oscillation(&self.trajectory, window);
        Some(CertificateReport::new(
            format!("convergence_{}", self.predicted.as_str()),
            distance.max(oscillation),
            Some(self.trajectory.t_end()),
            self.options.classify_tol,
            format!(
                "classified {}; window distance {distance:e}, oscillation {oscillation:e}",
                self.classification.as_str()
            ),
        ))
    }

    /// Convergence, boundedness and Lyapunov reports, in that order.
    pub fn reports(&self) -> Vec<CertificateReport> {
        self.convergence()
            .into_iter()
            .chain(Some(self.boundedness.clone()))
            .chain(self.lyapunov.clone())
            .collect()
    }

    /// Every report passed.
    pub fn passed(&self) -> bool {
        self.reports().iter().all(|r| r.passed)
    }
}

/// Integrates one run and applies classification and all trajectory
/// certificates.
pub fn assess(
    params: &ModelParameters,
    kernels: &DelayKernels,
    history: &InitialHistory,
    config: &IntegrationConfig,
    options: &AssessOptions,
) -> Result<Assessment, ExperimentError> {
    let factors = SurvivalFactors::from_kernels(params, kernels);
    let eqs = equilibria(params, &factors)?;
    let trajectory = integrate(params, kernels, history, config)?;
    let derivation = reproduction_numbers(params, &factors, FormulaMode::Derivation);
    let paper = reproduction_numbers(params, &factors, FormulaMode::PaperPrinted);
    let predicted = predict_regime(&derivation);
    let predicted_paper = predict_regime(&paper);
    let classification = classify(&trajectory, &eqs, options.window, options.classify_tol);
    let distance = classification
        .regime()
        .and_then(|r| eqs.get(r))
        .map(|p| window_distance(&trajectory, options.window, &p));
    let boundedness = check_boundedness(
        params,
        &factors,
        kernels,
        &trajectory,
        options.boundedness_rel_tol,
    );

    let mut notes = Vec::new();
    if predicted != predicted_paper {
        notes.push(format!(
            "regime predictions disagree: derivation mode {}, paper mode {}",
            predicted.as_str(),
            predicted_paper.as_str()
        ));
    }
    if classification.regime() != Some(predicted) {
        notes.push(format!(
            "observed {} differs from predicted {}",
            classification.as_str(),
            predicted.as_str()
        ));
    }
    let functional = LyapunovFunctional::for_regime(predicted, params, &factors, kernels, &eqs)?;
    let (lyapunov, lyapunov_series) = match functional {
        Some(f) => {
            let series = f.series(&trajectory, options.quadrature_refine);
            let report = check_monotone_decrease(&series, options.monotone_rel_tol);
            (Some(report), Some(series))
        }
        None => {
            notes.push("boundary regime: no Lyapunov certificate applies".into());
            (None, None)
        }
    };
    Ok(Assessment {
        trajectory,
        factors,
        derivation,
        paper,
        predicted,
        predicted_paper,
        equilibria: eqs,
        classification,
        distance,
        boundedness,
        lyapunov,
        lyapunov_series,
        options: *options,
        notes,
    })
}

/// Default integration settings for a scenario.
pub fn default_config(scenario: &Scenario) -> IntegrationConfig {
    IntegrationConfig::new(DEFAULT_DT, scenario.horizon)
}

//! JSON run configuration.
//!
//! ```json
//! {
//!   "parameters": {"lambda": 1, "beta1": 0.004, "c": 0.3, ...},
//!   "kernel1": {"type": "dirac", "tau": 5},
//!   "kernel2": {"type": "tabulated", "nodes": [2.5, 3.5], "weights": [0.5, 0.5]},
//!   "history": {"type": "constant", "value": [5, 5, 6, 3, 3.5]},
//!   "integration": {"dt": 0.01, "t_end": 1000},
//!   "mode": "derivation"
//! }
//! ```
//!
//! Kernels may also be `{"type":"uniform","center":5,"width":1,"n":8}` or
//! `{"type":"gamma","shape":4,"scale":1.25,"bins":200}`; gamma kernels are
//! truncated at `integration.kernel_truncation_eps`. Histories may be
//! `{"type":"tabulated","times":[-2,-1,0],"values":[[...],[...],[...]]}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::analysis::FormulaMode;
use crate::experiments::{RunSpec, Scenario};
use crate::integrator::{IntegrationConfig, DEFAULT_TRUNCATION_EPS};
use crate::model::{
    validate_parameters, DelayKernel, DelayKernels, InitialHistory, ModelParameters, State5,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Dirac { tau: f64 },
    Tabulated { nodes: Vec<f64>, weights: Vec<f64> },
    Uniform { center: f64, width: f64, n: usize },
    Gamma { shape: f64, scale: f64, bins: usize },
}

impl KernelSpec {
    pub fn build(&self, truncation_eps: f64) -> Result<DelayKernel, crate::model::ModelError> {
        match self {
            Self::Dirac { tau } => DelayKernel::dirac(*tau),
            Self::Tabulated { nodes, weights } => DelayKernel::tabulated(nodes.clone(), weights.clone()),
            Self::Uniform { center, width, n } => DelayKernel::uniform(*center, *width, *n),
            Self::Gamma { shape, scale, bins } => {
                DelayKernel::gamma(*shape, *scale, *bins, truncation_eps)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistorySpec {
    Constant { value: [f64; 5] },
    Tabulated { times: Vec<f64>, values: Vec<[f64; 5]> },
}

impl HistorySpec {
    pub fn build(&self) -> Result<InitialHistory, crate::model::ModelError> {
        match self {
            Self::Constant { value } => InitialHistory::constant(State5::from_array(*value)),
            Self::Tabulated { times, values } => InitialHistory::tabulated(
                times.clone(),
                values.iter().map(|v| State5::from_array(*v)).collect(),
            ),
        }
    }
}

/// The configuration file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub parameters: BTreeMap<String, f64>,
    pub kernel1: KernelSpec,
    pub kernel2: KernelSpec,
    pub history: HistorySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration: Option<IntegrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<FormulaMode>,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParameters,
    pub kernels: DelayKernels,
    pub history: InitialHistory,
    pub integration: Option<IntegrationConfig>,
    pub mode: FormulaMode,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Configuration reproducing one scenario run with Dirac lags.
    pub fn from_scenario(scenario: &Scenario, run: RunSpec, integration: IntegrationConfig) -> Self {
        let (tau1, tau2) = scenario.lag_pairs[run.lags];
        let mut parameters: BTreeMap<String, f64> = scenario.params.to_map();
        if let Some(c) = parameters.remove("c_ctl") {
            parameters.insert("c".into(), c);
        }
        Self {
            parameters,
            kernel1: KernelSpec::Dirac { tau: tau1 },
            kernel2: KernelSpec::Dirac { tau: tau2 },
            history: HistorySpec::Constant {
                value: scenario.histories[run.history].to_array(),
            },
            integration: Some(integration),
            mode: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("configuration serializes");
        text.push('\n');
        text
    }

    pub fn validate(&self) -> Result<RunConfig, CliError> {
        let params = validate_parameters(&self.parameters)?;
        let eps = self
            .integration
            .map_or(DEFAULT_TRUNCATION_EPS, |i| i.kernel_truncation_eps);
        let kernels = DelayKernels::new(self.kernel1.build(eps)?, self.kernel2.build(eps)?);
        let history = self.history.build()?;
        if let Some(integration) = &self.integration {
            integration.steps()?;
        }
        Ok(RunConfig {
            params,
            kernels,
            history,
            integration: self.integration,
            mode: self.mode.unwrap_or_default(),
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        ConfigFile::read(path)?.validate()
    }

    /// The integration settings with command-line overrides applied.
    pub fn integration_with(
        &self,
        dt: Option<f64>,
        t_end: Option<f64>,
    ) -> Result<IntegrationConfig, CliError> {
        let mut config = match (self.integration, t_end) {
            (Some(c), _) => c,
            (None, Some(t)) => IntegrationConfig::new(crate::integrator::DEFAULT_DT, t),
            (None, None) => {
                return Err(CliError::Config(
                    "no \"integration\" section and no --t-end given".into(),
                ))
            }
        };
        if let Some(dt) = dt {
            config.dt = dt;
        }
        if let Some(t) = t_end {
            config.t_end = t;
        }
        config.steps()?;
        Ok(config)
    }
}

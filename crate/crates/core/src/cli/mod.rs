//! The `viral-delay` command line.
//!
//! | command     | output                                                  |
//! |-------------|---------------------------------------------------------|
//! | `analyze`   | thresholds and equilibria (stdout, optional JSON)       |
//! | `simulate`  | trajectory CSV, optionally with `L,B` monitor columns   |
//! | `certify`   | run summary JSON with every applicable certificate      |
//! | `sweep`     | regime grid CSV over (τ₁′, τ₂′)                          |
//! | `reproduce` | one CSV (and SVG) per scenario run plus `summary.json`  |
//!
//! Exit codes: 0 success, 1 invalid configuration, flags or unwritable
//! output, 2 a certificate failed, 3 numerical failure.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{AnalysisError, FormulaMode, SurvivalFactors};
use crate::certificates::{boundedness_series, check_cone_faces, CertificateError, LyapunovFunctional};
use crate::experiments::{
    assess, default_config, scenario, sweep, AssessOptions, ExperimentError, RunDesign,
    ScenarioName, SweepSimulation,
};
use crate::integrator::{integrate, IntegrationConfig, IntegrationError};
use crate::model::{DelayKernels, ModelError, State5};

pub use config::{ConfigFile, HistorySpec, KernelSpec, RunConfig};
pub use output::{RunSummary, SWEEP_HEADER, TRAJECTORY_HEADER};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("invalid model input: {0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Io(String),
    #[error("certificate failed: {0}")]
    CertificateFailed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) | Self::Model(_) | Self::Io(_) => 1,
            Self::CertificateFailed(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<IntegrationError> for CliError {
    fn from(e: IntegrationError) -> Self {
        match e {
            IntegrationError::Config(msg) => Self::Config(msg),
            IntegrationError::Model(m) => Self::Model(m),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<CertificateError> for CliError {
    fn from(e: CertificateError) -> Self {
        match e {
            CertificateError::Integration(i) => i.into(),
            CertificateError::NegativeHistory | CertificateError::OutsideCone(_) => {
                Self::Config(e.to_string())
            }
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::UnknownScenario(_) => Self::Usage(e.to_string()),
            ExperimentError::Model(m) => Self::Model(m),
            ExperimentError::Analysis(a) => a.into(),
            ExperimentError::Integration(i) => i.into(),
            ExperimentError::Certificate(c) => c.into(),
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "viral-delay", version, about = "Within-host viral dynamics with distributed delays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Derivation,
    Paper,
}

impl From<ModeArg> for FormulaMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Derivation => FormulaMode::Derivation,
            ModeArg::Paper => FormulaMode::PaperPrinted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    /// Every Φ at every lag pair.
    Full,
    /// Every Φ at the first lag pair plus Φ₁ at the others.
    Figures,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reproduction numbers and equilibria.
    Analyze {
        #[arg(long, conflicts_with_all = ["scenario", "lags"])]
        config: Option<PathBuf>,
        #[arg(long, requires = "lags")]
        scenario: Option<String>,
        /// Dirac lags as `tau1,tau2`.
        #[arg(long, requires = "scenario")]
        lags: Option<String>,
        /// Formula for the printed R0/R1 (overrides the configuration).
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Also write the summary JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a configuration and write the trajectory CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Add Lyapunov (L) and boundedness (B) columns.
        #[arg(long)]
        monitors: bool,
        /// Write every n-th node.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Run the positivity, boundedness, convergence and Lyapunov checks.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
    },
    /// Threshold regimes over a grid of Dirac lags.
    Sweep {
        #[arg(long)]
        scenario: String,
        /// `lo:hi:step` (inclusive) or a single value.
        #[arg(long)]
        tau1: String,
        #[arg(long)]
        tau2: String,
        /// Integrate every cell from Φ₁ and classify the outcome.
        #[arg(long)]
        simulate: bool,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every run of a scenario with CSV output and a combined summary.
    Reproduce {
        scenario: String,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Also render one SVG per run.
        #[arg(long)]
        svg: bool,
        #[arg(long, value_enum, default_value_t = DesignArg::Full)]
        design: DesignArg,
        /// Write every n-th node to the CSV files.
        #[arg(long, default_value_t = 100)]
        stride: usize,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
    },
}

/// Entry point of the binary: parses `std::env::args` and returns the exit code.
pub fn main() -> i32 {
    let stdout = io::stdout();
    run(std::env::args_os(), &mut stdout.lock())
}

/// Parses `args` (program name first), runs the command and maps the
/// outcome to an exit code; errors go to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Analyze {
            config,
            scenario,
            lags,
            mode,
            out,
        } => analyze(config.as_deref(), scenario.as_deref(), lags.as_deref(), *mode, out.as_deref(), stdout),
        Command::Simulate {
            config,
            out,
            dt,
            t_end,
            monitors,
            stride,
        } => simulate(config, out, *dt, *t_end, *monitors, *stride),
        Command::Certify {
            config,
            out,
            dt,
            t_end,
        } => certify(config, out, *dt, *t_end, stdout),
        Command::Sweep {
            scenario,
            tau1,
            tau2,
            simulate,
            dt,
            t_end,
            out,
        } => sweep_command(scenario, tau1, tau2, *simulate, *dt, *t_end, out),
        Command::Reproduce {
            scenario,
            out_dir,
            svg,
            design,
            stride,
            dt,
            t_end,
        } => reproduce(scenario, out_dir, *svg, *design, *stride, *dt, *t_end, stdout),
    }
}

fn parse_number(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Usage(format!("{what}: {s:?} is not a finite number")))
}

/// `a,b` into two numbers.
pub fn parse_lags(s: &str) -> Result<(f64, f64), CliError> {
    match s.split(',').collect::<Vec<_>>().as_slice() {
        [a, b] => Ok((parse_number(a, "--lags")?, parse_number(b, "--lags")?)),
        _ => Err(CliError::Usage(format!("--lags expects tau1,tau2, got {s:?}"))),
    }
}

/// `lo:hi:step` into `lo, lo + step, …` up to `hi` inclusive (within 1e-9
/// steps); a single number gives a one-point grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let (lo, hi, step) = match parts.as_slice() {
        [v] => {
            let v = parse_number(v, "grid")?;
            (v, v, 1.0)
        }
        [lo, hi, step] => (
            parse_number(lo, "grid")?,
            parse_number(hi, "grid")?,
            parse_number(step, "grid")?,
        ),
        _ => return Err(CliError::Usage(format!("grid must be lo:hi:step, got {s:?}"))),
    };
    if !(step > 0.0) || hi < lo || lo < 0.0 {
        return Err(CliError::Usage(format!(
            "grid {s:?} needs 0 <= lo <= hi and step > 0"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(CliError::Usage(format!("grid {s:?} has too many points")));
    }
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn fmt_state(s: &State5) -> String {
    format!("(x={}, y={}, c={}, v={}, z={})", s.x, s.y, s.c, s.v, s.z)
}

fn analyze(
    config: Option<&Path>,
    scenario_name: Option<&str>,
    lags: Option<&str>,
    mode: Option<ModeArg>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let (params, kernels, config_mode) = match (config, scenario_name, lags) {
        (Some(path), _, _) => {
            let c = RunConfig::load(path)?;
            (c.params, c.kernels, c.mode)
        }
        (None, Some(name), Some(lags)) => {
            let s = scenario(name.parse().map_err(CliError::from)?);
            let (tau1, tau2) = parse_lags(lags)?;
            (s.params, DelayKernels::dirac(tau1, tau2)?, FormulaMode::Derivation)
        }
        _ => {
            return Err(CliError::Usage(
                "analyze needs --config FILE or --scenario NAME --lags a,b".into(),
            ))
        }
    };
    let mode = mode.map_or(config_mode, FormulaMode::from);
    let summary = RunSummary::analysis(&params, &kernels)?;
    let numbers = match mode {
        FormulaMode::Derivation => summary.reproduction_numbers.derivation,
        FormulaMode::PaperPrinted => summary.reproduction_numbers.paper,
    };
    let regime = match mode {
        FormulaMode::Derivation => summary.predicted_regime.derivation,
        FormulaMode::PaperPrinted => summary.predicted_regime.paper,
    };
    let eqs = &summary.equilibria;
    let mode_name = match mode {
        FormulaMode::Derivation => "derivation",
        FormulaMode::PaperPrinted => "paper",
    };
    let mut text = format!(
        "mode: {mode_name}\nA1 = {}\nA2 = {}\nR0 = {}\nR1 = {}\npredicted: {}\n",
        summary.survival_factors.a1,
        summary.survival_factors.a2,
        numbers.r0,
        numbers.r1,
        regime.as_str()
    );
    if summary.mode_disagreement {
        text.push_str(&format!(
            "note: derivation mode predicts {}, paper mode predicts {}\n",
            summary.predicted_regime.derivation.as_str(),
            summary.predicted_regime.paper.as_str()
        ));
    }
    text.push_str(&format!("E0 = {}\n", fmt_state(&eqs.e0)));
    for (name, point) in [("E1", eqs.e1), ("E2", eqs.e2)] {
        match point {
            Some(p) => text.push_str(&format!("{name} = {}\n", fmt_state(&p))),
            None => text.push_str(&format!("{name} does not exist\n")),
        }
    }
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    if let Some(path) = out {
        write_text(path, &output::to_sorted_json(&summary))?;
    }
    Ok(())
}

fn simulate(
    config: &Path,
    out: &Path,
    dt: Option<f64>,
    t_end: Option<f64>,
    monitors: bool,
    stride: usize,
) -> Result<(), CliError> {
    let c = RunConfig::load(config)?;
    let integration = c.integration_with(dt, t_end)?;
    let traj = integrate(&c.params, &c.kernels, &c.history, &integration)?;
    let mut file = create(out)?;
    if monitors {
        let factors = SurvivalFactors::from_kernels(&c.params, &c.kernels);
        let eqs = crate::analysis::equilibria(&c.params, &factors)?;
        let regime = eqs_regime(&eqs);
        let series = LyapunovFunctional::for_regime(regime, &c.params, &factors, &c.kernels, &eqs)?
            .map(|f| f.series(&traj, 1));
        let bound = boundedness_series(&c.params, &c.kernels, &traj);
        let m = output::Monitors {
            lyapunov: series.as_ref().map(|s| s.values.as_slice()),
            bound: &bound,
        };
        output::write_trajectory_csv(&mut file, &traj, stride, Some(&m))
    } else {
        output::write_trajectory_csv(&mut file, &traj, stride, None)
    }
    .and_then(|_| file.flush())
    .map_err(|e| io_error(out, e))
}

fn eqs_regime(eqs: &crate::analysis::EquilibriumSet) -> crate::analysis::Regime {
    crate::analysis::predict_regime(&eqs.numbers)
}

fn certify(
    config: &Path,
    out: &Path,
    dt: Option<f64>,
    t_end: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let c = RunConfig::load(config)?;
    let integration = c.integration_with(dt, t_end)?;
    let a = assess(&c.params, &c.kernels, &c.history, &integration, &AssessOptions::default())?;
    let mut bases = vec![c.history.initial_value(), a.equilibria.e0];
    bases.extend(a.equilibria.e1);
    bases.extend(a.equilibria.e2);
    let cone = check_cone_faces(&c.params, &c.kernels, &bases, &c.history)?;
    let mut summary = RunSummary::from_assessment(&c.params, &a);
    summary.certificates.insert(0, cone);
    write_text(out, &output::to_sorted_json(&summary))?;
    report_lines(&summary, stdout)?;
    if summary.passed() {
        Ok(())
    } else {
        Err(CliError::CertificateFailed(failed_names(&summary)))
    }
}

fn report_lines(summary: &RunSummary, stdout: &mut dyn Write) -> Result<(), CliError> {
    for r in &summary.certificates {
        writeln!(
            stdout,
            "{} {} (worst {:e}, tolerance {:e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.worst_violation,
            r.tolerance
        )
        .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    }
    Ok(())
}

fn failed_names(summary: &RunSummary) -> String {
    summary
        .certificates
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn sweep_command(
    scenario_name: &str,
    tau1: &str,
    tau2: &str,
    simulate: bool,
    dt: Option<f64>,
    t_end: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let s = scenario(scenario_name.parse().map_err(CliError::from)?);
    let tau1 = parse_grid(tau1)?;
    let tau2 = parse_grid(tau2)?;
    let simulation = if simulate {
        let mut config = default_config(&s);
        if let Some(dt) = dt {
            config.dt = dt;
        }
        if let Some(t) = t_end {
            config.t_end = t;
        }
        config.steps()?;
        Some(SweepSimulation {
            history: s.history(crate::experiments::RunSpec { history: 0, lags: 0 }),
            config,
            window: crate::experiments::DEFAULT_WINDOW,
            tol: crate::experiments::DEFAULT_CLASSIFY_TOL,
        })
    } else {
        None
    };
    let cells = sweep(&s.params, &tau1, &tau2, simulation.as_ref())?;
    let mut file = create(out)?;
    output::write_sweep_csv(&mut file, &cells)
        .and_then(|_| file.flush())
        .map_err(|e| io_error(out, e))
}

#[derive(Serialize)]
struct ReproduceSummary<'a> {
    scenario: ScenarioName,
    design: &'static str,
    all_passed: bool,
    runs: std::collections::BTreeMap<String, RunEntry<'a>>,
}

#[derive(Serialize)]
struct RunEntry<'a> {
    history: State5,
    lags: (f64, f64),
    csv: String,
    summary: &'a RunSummary,
}

#[allow(clippy::too_many_arguments)]
fn reproduce(
    scenario_name: &str,
    out_dir: &Path,
    svg: bool,
    design: DesignArg,
    stride: usize,
    dt: Option<f64>,
    t_end: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let name: ScenarioName = scenario_name.parse().map_err(CliError::from)?;
    let s = scenario(name);
    let mut config: IntegrationConfig = default_config(&s);
    if let Some(dt) = dt {
        config.dt = dt;
    }
    if let Some(t) = t_end {
        config.t_end = t;
    }
    config.steps()?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let (design, design_name) = match design {
        DesignArg::Full => (RunDesign::Full, "full"),
        DesignArg::Figures => (RunDesign::Figures, "figures"),
    };
    let runs = s.runs(design);
    let results: Vec<Result<RunSummary, CliError>> = runs
        .par_iter()
        .map(|&run| {
            let kernels = s.kernels(run);
            let a = assess(&s.params, &kernels, &s.history(run), &config, &AssessOptions::default())?;
            let label = run.label(name);
            let path = out_dir.join(format!("{label}.csv"));
            let bound = boundedness_series(&s.params, &kernels, &a.trajectory);
            let monitors = output::Monitors {
                lyapunov: a.lyapunov_series.as_ref().map(|l| l.values.as_slice()),
                bound: &bound,
            };
            let mut file = create(&path)?;
            output::write_trajectory_csv(&mut file, &a.trajectory, stride, Some(&monitors))
                .and_then(|_| file.flush())
                .map_err(|e| io_error(&path, e))?;
            if svg {
                let (tau1, tau2) = s.lag_pairs[run.lags];
                let title = format!("{label}: lags ({tau1}, {tau2}), {}", a.classification.as_str());
                let path = out_dir.join(format!("{label}.svg"));
                write_text(&path, &output::trajectory_svg(&a.trajectory, &title))?;
            }
            Ok(RunSummary::from_assessment(&s.params, &a))
        })
        .collect();
    let mut summaries = Vec::with_capacity(results.len());
    for result in results {
        summaries.push(result?);
    }
    let entries = runs
        .iter()
        .zip(&summaries)
        .map(|(run, summary)| {
            let label = run.label(name);
            let entry = RunEntry {
                history: s.histories[run.history],
                lags: s.lag_pairs[run.lags],
                csv: format!("{label}.csv"),
                summary,
            };
            (label, entry)
        })
        .collect();
    let all_passed = summaries.iter().all(RunSummary::passed);
    let combined = ReproduceSummary {
        scenario: name,
        design: design_name,
        all_passed,
        runs: entries,
    };
    write_text(&out_dir.join("summary.json"), &output::to_sorted_json(&combined))?;
    for (run, summary) in runs.iter().zip(&summaries) {
        writeln!(
            stdout,
            "{} {} classified {}",
            if summary.passed() { "PASS" } else { "FAIL" },
            run.label(name),
            summary.classification.map_or("-", |c| c.as_str())
        )
        .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    }
    if all_passed {
        Ok(())
    } else {
        let failed: Vec<String> = runs
            .iter()
            .zip(&summaries)
            .filter(|(_, s)| !s.passed())
            .map(|(r, s)| format!("{} ({})", r.label(name), failed_names(s)))
            .collect();
        Err(CliError::CertificateFailed(failed.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("0:0.3:0.1").unwrap().len(), 4);
        assert_eq!(parse_grid("5").unwrap(), vec![5.0]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a:b").is_err());
    }

    #[test]
    fn lags() {
        assert_eq!(parse_lags("5,3").unwrap(), (5.0, 3.0));
        assert!(parse_lags("5").is_err());
        assert!(parse_lags("5,nan").is_err());
    }

    #[test]
    fn analyze_paper_mode_prints_published_values() {
        let mut out = Vec::new();
        let code = run(
            ["viral-delay", "analyze", "--scenario", "E1", "--lags", "5,3", "--mode", "paper"],
            &mut out,
        );
        assert_eq!(code, 0);
        let text = String::from_utf8(out).unwrap();
        let value = |key: &str| -> f64 {
            let line = text.lines().find(|l| l.starts_with(key)).unwrap();
            line.split(" = ").nth(1).unwrap().parse().unwrap()
        };
        assert!((value("R0") - 2.2648).abs() < 5e-4);
        assert!((value("R1") - 0.7121).abs() < 5e-4);
        assert!(text.contains("note: derivation mode predicts E2, paper mode predicts E1"));
    }

    #[test]
    fn usage_errors_exit_one() {
        let mut out = Vec::new();
        assert_eq!(run(["viral-delay", "analyze", "--scenario", "E7", "--lags", "5,3"], &mut out), 1);
        assert_eq!(run(["viral-delay", "analyze"], &mut out), 1);
        assert_eq!(run(["viral-delay", "frobnicate"], &mut out), 1);
        assert_eq!(run(["viral-delay", "--help"], &mut out), 0);
    }
}

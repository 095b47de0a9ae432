//! Trajectory and sweep CSV, the run summary JSON and SVG plots.
//!
//! Numbers in CSV files are written with 17 significant digits in Rust's
//! locale-independent exponent form (`5.0000000000000000e0`), lines end in
//! LF. JSON documents have sorted keys and a trailing newline.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;

use crate::analysis::{
    equilibria, predict_regime, reproduction_numbers, AnalysisError, EquilibriumSet, FormulaMode,
    Regime, ReproductionNumbers, SurvivalFactors,
};
use crate::certificates::CertificateReport;
use crate::experiments::{Assessment, Classification, RegimeCell};
use crate::integrator::{Trajectory, TrajectoryMetadata};
use crate::model::{DelayKernels, ModelParameters, State5};

pub const TRAJECTORY_HEADER: &str = "t,x,y,c,v,z";
pub const MONITOR_HEADER: &str = ",L,B";
pub const SWEEP_HEADER: &str =
    "tau1,tau2,r0_derivation,r1_derivation,r0_paper,r1_paper,predicted,observed";

pub fn number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-node monitor columns: the Lyapunov value (empty where not evaluable)
/// and B(t) from the boundedness estimate.
pub struct Monitors<'a> {
    pub lyapunov: Option<&'a [Option<f64>]>,
    pub bound: &'a [f64],
}

/// Writes every `stride`-th node, always including the last one.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    traj: &Trajectory,
    stride: usize,
    monitors: Option<&Monitors>,
) -> io::Result<()> {
    let stride = stride.max(1);
    let mut header = TRAJECTORY_HEADER.to_string();
    if monitors.is_some() {
        header.push_str(MONITOR_HEADER);
    }
    writeln!(out, "{header}")?;
    let last = traj.len() - 1;
    let mut line = String::with_capacity(160);
    for i in (0..traj.len()).filter(|i| i % stride == 0 || *i == last) {
        line.clear();
        line.push_str(&number(traj.time(i)));
        for v in traj.state(i).to_array() {
            line.push(',');
            line.push_str(&number(v));
        }
        if let Some(m) = monitors {
            line.push(',');
            if let Some(Some(l)) = m.lyapunov.map(|l| l[i]) {
                line.push_str(&number(l));
            }
            line.push(',');
            line.push_str(&number(m.bound[i]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: &mut W, cells: &[RegimeCell]) -> io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            number(c.tau1),
            number(c.tau2),
            number(c.derivation.r0),
            number(c.derivation.r1),
            number(c.paper.r0),
            number(c.paper.r1),
            c.predicted.as_str(),
            c.observed.as_ref().map_or("", |o| o.label()),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ByMode<T> {
    pub derivation: T,
    pub paper: T,
}

/// Everything reported about one configuration or run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub parameter_fingerprint: String,
    pub parameters: ModelParameters,
    pub survival_factors: SurvivalFactors,
    pub reproduction_numbers: ByMode<ReproductionNumbers>,
    pub predicted_regime: ByMode<Regime>,
    pub mode_disagreement: bool,
    pub equilibria: EquilibriumSet,
    pub classification: Option<Classification>,
    pub certificates: Vec<CertificateReport>,
    pub integration: Option<TrajectoryMetadata>,
    pub notes: Vec<String>,
}

impl RunSummary {
    /// Thresholds and equilibria only.
    pub fn analysis(params: &ModelParameters, kernels: &DelayKernels) -> Result<Self, AnalysisError> {
        let factors = SurvivalFactors::from_kernels(params, kernels);
        let derivation = reproduction_numbers(params, &factors, FormulaMode::Derivation);
        let paper = reproduction_numbers(params, &factors, FormulaMode::PaperPrinted);
        let predicted = ByMode {
            derivation: predict_regime(&derivation),
            paper: predict_regime(&paper),
        };
        let mut notes = Vec::new();
        if predicted.derivation != predicted.paper {
            notes.push(format!(
                "regime predictions disagree: derivation mode {}, paper mode {}",
                predicted.derivation.as_str(),
                predicted.paper.as_str()
            ));
        }
        Ok(Self {
            parameter_fingerprint: params.fingerprint(),
            parameters: *params,
            survival_factors: factors,
            reproduction_numbers: ByMode { derivation, paper },
            predicted_regime: predicted,
            mode_disagreement: predicted.derivation != predicted.paper,
            equilibria: equilibria(params, &factors)?,
            classification: None,
            certificates: Vec::new(),
            integration: None,
            notes,
        })
    }

    pub fn from_assessment(params: &ModelParameters, a: &Assessment) -> Self {
        Self {
            parameter_fingerprint: params.fingerprint(),
            parameters: *params,
            survival_factors: a.factors,
            reproduction_numbers: ByMode {
                derivation: a.derivation,
                paper: a.paper,
            },
            predicted_regime: ByMode {
                derivation: a.predicted,
                paper: a.predicted_paper,
            },
            mode_disagreement: a.mode_disagreement(),
            equilibria: a.equilibria,
            classification: Some(a.classification),
            certificates: a.reports(),
            integration: Some(a.trajectory.metadata().clone()),
            notes: a.notes.clone(),
        }
    }

    pub fn passed(&self) -> bool {
        self.certificates.iter().all(|r| r.passed)
    }
}

/// Pretty JSON with keys sorted at every level.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    // serde_json's map type is ordered by key
    let value = serde_json::to_value(value).expect("summaries serialize");
    let mut text = serde_json::to_string_pretty(&value).expect("values serialize");
    text.push('\n');
    text
}

/// Five stacked panels, one polyline per state component, each with its
/// own linear axis range.
pub fn trajectory_svg(traj: &Trajectory, title: &str) -> String {
    const WIDTH: f64 = 720.0;
    const PANEL: f64 = 120.0;
    const LEFT: f64 = 90.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const GAP: f64 = 24.0;
    const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

    let height = TOP + 5.0 * (PANEL + GAP) + 20.0;
    let plot_width = WIDTH - LEFT - RIGHT;
    let t_end = traj.t_end();
    // about two points per horizontal pixel
    let stride = (traj.len() / (2 * plot_width as usize)).max(1);
    let rows: Vec<(f64, State5)> = (0..traj.len())
        .filter(|i| i % stride == 0 || *i == traj.len() - 1)
        .map(|i| (traj.time(i), traj.state(i)))
        .collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for (j, name) in State5::NAMES.iter().enumerate() {
        let top = TOP + j as f64 * (PANEL + GAP);
        let (mut lo, mut hi) = rows
            .iter()
            .map(|(_, s)| s[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        }
        let x_of = |t: f64| LEFT + plot_width * t / t_end;
        let y_of = |v: f64| top + PANEL * (hi - v) / (hi - lo);
        let _ = writeln!(
            svg,
            r##"<rect x="{LEFT}" y="{top}" width="{plot_width}" height="{PANEL}" fill="none" stroke="#888"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{name}</text>"#,
            LEFT - 50.0,
            top + PANEL / 2.0
        );
        for (value, y) in [(hi, top + 10.0), (lo, top + PANEL)] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
                LEFT - 4.0,
                tick(value)
            );
        }
        let mut points = String::with_capacity(rows.len() * 16);
        for (t, s) in &rows {
            let _ = write!(points, "{:.2},{:.2} ", x_of(*t), y_of(s[j]));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            COLORS[j],
            points.trim_end()
        );
    }
    let bottom = TOP + 5.0 * (PANEL + GAP) - GAP + 14.0;
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="{bottom}">0</text>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{bottom}" text-anchor="end">t = {}</text>"#,
        WIDTH - RIGHT,
        tick(t_end)
    );
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

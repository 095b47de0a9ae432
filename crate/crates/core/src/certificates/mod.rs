//! Runtime checks of the model's qualitative guarantees along computed
//! trajectories: the nonnegative cone is forward invariant, the solution
//! respects an explicit exponential envelope, and the Lyapunov functionals
//! of each equilibrium do not increase.

mod lyapunov;

pub use lyapunov::{
    lyapunov_l0, lyapunov_l1, lyapunov_l2, LyapunovFunctional, LyapunovSeries, LyapunovValue,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SurvivalFactors;
use crate::integrator::{rhs, IntegrationError, Trajectory};
use crate::model::{DelayKernels, InitialHistory, ModelParameters, State5};

pub const MONOTONE_REL_TOL: f64 = 1e-6;
pub const BOUNDEDNESS_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("g is only defined for positive arguments, got {0}")]
    NonPositiveArgument(f64),
    #[error("state {0:?} has no zero component")]
    NotOnBoundary(State5),
    #[error("state {0:?} has a negative component")]
    OutsideCone(State5),
    #[error("history must be nonnegative")]
    NegativeHistory,
    #[error("functional not evaluable at t = {t}: {reason}")]
    NotEvaluable { t: f64, reason: String },
    #[error("equilibrium {0} does not exist for these parameters")]
    MissingEquilibrium(&'static str),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Outcome of one check. `passed` is exactly `worst_violation <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub worst_time: Option<f64>,
    pub tolerance: f64,
    pub notes: String,
}

impl CertificateReport {
    pub fn new(
        name: impl Into<String>,
        worst_violation: f64,
        worst_time: Option<f64>,
        tolerance: f64,
        notes: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed: worst_violation <= tolerance,
            worst_violation,
            worst_time,
            tolerance,
            notes: notes.into(),
        }
    }
}

/// s − 1 − ln s, nonnegative with its only zero at s = 1.
pub fn g(s: f64) -> Result<f64, CertificateError> {
    if !(s > 0.0) {
        return Err(CertificateError::NonPositiveArgument(s));
    }
    Ok(g_unchecked(s))
}

pub(crate) fn g_unchecked(s: f64) -> f64 {
    let d = s - 1.0;
    // ln_1p keeps relative accuracy near the minimum
    (d - d.ln_1p()).max(0.0)
}

/// Evaluates the vector field at a point of the cone's boundary and checks
/// that every vanishing component has a nonnegative derivative.
pub fn check_cone_invariance(
    params: &ModelParameters,
    kernels: &DelayKernels,
    boundary_state: &State5,
    history: &InitialHistory,
) -> Result<CertificateReport, CertificateError> {
    if boundary_state.min_component() < 0.0 {
        return Err(CertificateError::OutsideCone(*boundary_state));
    }
    let zero: Vec<usize> = (0..5).filter(|&i| boundary_state[i] == 0.0).collect();
    if zero.is_empty() {
        return Err(CertificateError::NotOnBoundary(*boundary_state));
    }
    if !history.is_nonnegative() {
        return Err(CertificateError::NegativeHistory);
    }
    // The boundary point is the state at t = 0, preceded by the history.
    let past = |t: f64| {
        if t >= 0.0 {
            boundary_state.to_array()
        } else {
            history.value_at(t).to_array()
        }
    };
    let derivative = rhs(params, kernels, &past, 0.0, boundary_state)?;
    let worst = zero
        .iter()
        .map(|&i| -derivative[i])
        .fold(0.0f64, f64::max);
    let names: Vec<_> = zero.iter().map(|&i| State5::NAMES[i]).collect();
    Ok(CertificateReport::new(
        "cone_invariance",
        worst,
        Some(0.0),
        0.0,
        format!("zero components: {}", names.join(",")),
    ))
}

/// Runs [`check_cone_invariance`] on every boundary face through each base
/// state: all 31 ways of zeroing a nonempty subset of its components.
pub fn check_cone_faces(
    params: &ModelParameters,
    kernels: &DelayKernels,
    bases: &[State5],
    history: &InitialHistory,
) -> Result<CertificateReport, CertificateError> {
    let mut worst = 0.0f64;
    let mut count = 0usize;
    let mut worst_note = String::new();
    for base in bases {
        if base.min_component() < 0.0 {
            return Err(CertificateError::OutsideCone(*base));
        }
        for mask in 1u32..32 {
            let mut point = base.to_array();
            for (i, value) in point.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    *value = 0.0;
                }
            }
            let report = check_cone_invariance(params, kernels, &State5::from_array(point), history)?;
            count += 1;
            if report.worst_violation > worst || worst_note.is_empty() {
                worst = worst.max(report.worst_violation);
                worst_note = report.notes;
            }
        }
    }
    Ok(CertificateReport::new(
        "cone_invariance",
        worst,
        Some(0.0),
        0.0,
        format!("{count} boundary states; worst case {worst_note}"),
    ))
}

/// B(t) = ∫ e^{-m₁s} f₁(s) x(t − s) ds + y(t) at every grid node.
pub fn boundedness_series(
    params: &ModelParameters,
    kernels: &DelayKernels,
    traj: &Trajectory,
) -> Vec<f64> {
    let nodes: Vec<(f64, f64)> = kernels
        .infection
        .nodes()
        .into_iter()
        .map(|(s, w)| (s, w * (-params.m1 * s).exp()))
        .collect();
    (0..traj.len())
        .map(|i| {
            let t = traj.time(i);
            let delayed: f64 = nodes
                .iter()
                .map(|&(s, w)| {
                    let x = if s == 0.0 {
                        traj.state(i).x
                    } else {
                        traj.state_at(t - s).x
                    };
                    w * x
                })
                .sum();
            delayed + traj.state(i).y
        })
        .collect()
}

/// Checks B(t) ≤ λA₁/r + |rB₀ − λA₁|/(r e^{rt}) and y(t) ≤ C₁ at every node,
/// with r = min(d₁, α₁ + d₂). Violations are measured relative to the bound.
pub fn check_boundedness(
    params: &ModelParameters,
    factors: &SurvivalFactors,
    kernels: &DelayKernels,
    traj: &Trajectory,
    rel_tol: f64,
) -> CertificateReport {
    let b = boundedness_series(params, kernels, traj);
    let r = params.d1.min(params.alpha1 + params.d2);
    let limit = params.lambda * factors.a1 / r;
    let transient = (r * b[0] - params.lambda * factors.a1).abs() / r;
    let c1 = limit + transient;

    let mut worst = f64::NEG_INFINITY;
    let mut worst_time = None;
    let mut worst_kind = "";
    for (i, &bi) in b.iter().enumerate() {
        let t = traj.time(i);
        let envelope = limit + transient * (-r * t).exp();
        let excess_b = (bi - envelope) / envelope;
        let excess_y = (traj.state(i).y - c1) / c1;
        for (excess, kind) in [(excess_b, "B(t) envelope"), (excess_y, "y <= C1")] {
            if excess > worst {
                worst = excess;
                worst_time = Some(t);
                worst_kind = kind;
            }
        }
    }
    CertificateReport::new(
        "boundedness",
        worst,
        worst_time,
        rel_tol,
        format!("r = {r}, C1 = {c1}; largest relative excess from {worst_kind}"),
    )
}

/// Passes iff every forward difference between consecutive evaluable
/// values is at most `rel_tol · max|value|`.
pub fn check_monotone_decrease(series: &LyapunovSeries, rel_tol: f64) -> CertificateReport {
    let scale = series
        .values
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = rel_tol * scale;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_time = None;
    let mut previous: Option<f64> = None;
    let mut skipped = 0usize;
    for (t, value) in series.times.iter().zip(&series.values) {
        match value {
            Some(v) => {
                if let Some(p) = previous {
                    if v - p > worst {
                        worst = v - p;
                        worst_time = Some(*t);
                    }
                }
                previous = Some(*v);
            }
            None => skipped += 1,
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    let mut notes = format!("max |L| = {scale:e}");
    if skipped > 0 {
        notes.push_str(&format!(
            "; not evaluable at {skipped} of {} times (a state component <= 0)",
            series.times.len()
        ));
    }
    CertificateReport::new(
        format!("{}_monotone", series.name),
        worst,
        worst_time,
        tolerance,
        notes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::dirac_factors;
    use crate::experiments::{scenario, ScenarioName};
    use crate::integrator::{integrate, IntegrationConfig};
    use proptest::prelude::*;

    #[test]
    fn g_reference_values() {
        assert_eq!(g(1.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((g(e).unwrap() - (e - 2.0)).abs() < 1e-15);
        assert!((g(e).unwrap() - 0.7182818).abs() < 1e-7);
        assert!((g(0.5).unwrap() - (0.5 - 1.0 + 2f64.ln())).abs() < 1e-16);
        assert!((g(0.5).unwrap() - 0.1931472).abs() < 1e-7);
        assert_eq!(g(0.0), Err(CertificateError::NonPositiveArgument(0.0)));
        assert!(g(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn g_is_nonnegative_with_unique_zero(e in -8.0f64..8.0) {
            let s = 10f64.powf(e);
            let v = g(s).unwrap();
            prop_assert!(v >= 0.0);
            if (s - 1.0).abs() > 1e-6 {
                prop_assert!(v > 0.0);
            }
        }
    }

    fn e0_setup() -> (ModelParameters, DelayKernels) {
        (scenario(ScenarioName::E0).params, DelayKernels::dirac(5.0, 3.0).unwrap())
    }

    #[test]
    fn cone_case_x_zero() {
        let (p, k) = e0_setup();
        let h = InitialHistory::constant(State5::new(1.0, 2.0, 3.0, 4.0, 5.0)).unwrap();
        let s = State5::new(0.0, 2.0, 3.0, 4.0, 5.0);
        let report = check_cone_invariance(&p, &k, &s, &h).unwrap();
        assert!(report.passed);
        let past = |t: f64| if t >= 0.0 { s.to_array() } else { h.value_at(t).to_array() };
        let d = rhs(&p, &k, &past, 0.0, &s).unwrap();
        assert_eq!(d.x, p.lambda);
    }

    #[test]
    fn cone_case_z_zero_is_tangent() {
        let (p, k) = e0_setup();
        let h = InitialHistory::constant(State5::new(1.0, 2.0, 3.0, 4.0, 0.0)).unwrap();
        let s = State5::new(1.0, 2.0, 3.0, 4.0, 0.0);
        let past = |_: f64| s.to_array();
        assert_eq!(rhs(&p, &k, &past, 0.0, &s).unwrap().z, 0.0);
        assert!(check_cone_invariance(&p, &k, &s, &h).unwrap().passed);
    }

    #[test]
    fn cone_faces_through_registry_histories() {
        let (p, k) = e0_setup();
        let s = scenario(ScenarioName::E0);
        let h = InitialHistory::constant(s.histories[0]).unwrap();
        let report = check_cone_faces(&p, &k, &s.histories, &h).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.notes.starts_with("93 boundary states"));
    }

    #[test]
    fn cone_requires_boundary() {
        let (p, k) = e0_setup();
        let h = InitialHistory::constant(State5::new(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(
            check_cone_invariance(&p, &k, &State5::new(1.0, 1.0, 1.0, 1.0, 1.0), &h),
            Err(CertificateError::NotOnBoundary(_))
        ));
    }

    #[test]
    fn boundedness_is_tight_at_disease_free_state() {
        let (p, k) = e0_setup();
        let f = dirac_factors(&p, 5.0, 3.0);
        let traj = Trajectory::constant(State5::new(5.0, 0.0, 0.0, 0.0, 0.0), 0.01, 20.0).unwrap();
        let b = boundedness_series(&p, &k, &traj);
        let limit = p.lambda * f.a1 / p.d1;
        assert!(b.iter().all(|v| (v - limit).abs() < 1e-15));
        let report = check_boundedness(&p, &f, &k, &traj, BOUNDEDNESS_REL_TOL);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn boundedness_detects_scaled_trajectory() {
        let (p, k) = e0_setup();
        let f = dirac_factors(&p, 5.0, 3.0);
        let h = InitialHistory::constant(State5::new(5.0, 5.0, 6.0, 3.0, 3.5)).unwrap();
        let traj = integrate(&p, &k, &h, &IntegrationConfig::new(0.01, 100.0)).unwrap();
        assert!(check_boundedness(&p, &f, &k, &traj, BOUNDEDNESS_REL_TOL).passed);
        let scaled = traj.map_states(|s| s * 1e6);
        let report = check_boundedness(&p, &f, &k, &scaled, BOUNDEDNESS_REL_TOL);
        assert!(!report.passed);
        assert!(report.worst_violation > 0.0);
    }

    fn series(values: Vec<f64>) -> LyapunovSeries {
        LyapunovSeries::from_values("L", values)
    }

    #[test]
    fn monotone_check_cases() {
        let decreasing = series((0..100).map(|i| 10.0 - i as f64 * 0.1).collect());
        assert!(check_monotone_decrease(&decreasing, 1e-6).passed);

        let zero = series(vec![0.0; 50]);
        assert!(check_monotone_decrease(&zero, 1e-6).passed);

        let mut bumped: Vec<f64> = (0..100).map(|i| 10.0 - i as f64 * 0.01).collect();
        let jump = 10.0 * 1e-6 * 10.0;
        for v in bumped.iter_mut().skip(40) {
            *v += jump + 0.01;
        }
        let report = check_monotone_decrease(&series(bumped), 1e-6);
        assert!(!report.passed);
        assert_eq!(report.worst_time, Some(40.0));
    }
}

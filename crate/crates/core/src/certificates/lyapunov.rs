//! Lyapunov functionals of the three equilibria.
//!
//! Each functional is a sum of pointwise terms in the current state and
//! memory terms of the form
//!
//! ```text
//! coef · ∫₀^∞ f(s) e^{-m s} ∫_{t-s}^{t} F(η) dη ds
//! ```
//!
//! The outer integral runs over the kernel's own nodes (exact for point
//! masses). The inner integral uses the trapezoidal rule on the trajectory
//! grid, optionally refined by an integer factor through the dense output.

use serde::{Deserialize, Serialize};

use super::{g_unchecked, CertificateError};
use crate::analysis::{
    reproduction_numbers, EquilibriumSet, FormulaMode, Regime, SurvivalFactors,
};
use crate::integrator::Trajectory;
use crate::model::{DelayKernel, DelayKernels, ModelParameters, State5};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovValue {
    pub t: f64,
    pub value: f64,
    /// Named contributions; they sum to `value`.
    pub components: Vec<(String, f64)>,
}

/// Values of one functional on the trajectory grid; `None` where some
/// logarithm argument was not positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl LyapunovSeries {
    /// Series on the integer times 0, 1, 2, …
    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            times: (0..values.len()).map(|i| i as f64).collect(),
            values: values.into_iter().map(Some).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// Disease-free: R₀ enters the c and v coefficients.
    L0 { x0: f64, r0: f64 },
    L1 { eq: State5 },
    L2 { eq: State5 },
}

/// Integrand of a memory term.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Integrand {
    /// β·x·v (or β·x·c with `cytokine`), no logarithm.
    Contact { beta: f64, cytokine: bool },
    /// k·y
    Production { k: f64 },
    /// scale · g(x·v / ref) or scale · g(x·c / ref)
    ContactG { scale: f64, reference: f64, cytokine: bool },
    /// scale · g(y / ref)
    InfectedG { scale: f64, reference: f64 },
}

impl Integrand {
    fn eval(&self, s: &State5) -> Option<f64> {
        let ratio_g = |num: f64, reference: f64| {
            let r = num / reference;
            (r > 0.0).then(|| g_unchecked(r))
        };
        match *self {
            Self::Contact { beta, cytokine } => {
                Some(beta * s.x * if cytokine { s.c } else { s.v })
            }
            Self::Production { k } => Some(k * s.y),
            Self::ContactG {
                scale,
                reference,
                cytokine,
            } => ratio_g(s.x * if cytokine { s.c } else { s.v }, reference).map(|g| scale * g),
            Self::InfectedG { scale, reference } => ratio_g(s.y, reference).map(|g| scale * g),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MemoryTerm {
    name: &'static str,
    coefficient: f64,
    /// (delay, kernel weight · survival)
    nodes: Vec<(f64, f64)>,
    integrand: Integrand,
}

/// A Lyapunov functional bound to its parameters, kernels and equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovFunctional {
    name: &'static str,
    kind: Kind,
    params: ModelParameters,
    factors: SurvivalFactors,
    memory: Vec<MemoryTerm>,
}

fn weighted(kernel: &DelayKernel, m: f64) -> Vec<(f64, f64)> {
    kernel
        .nodes()
        .into_iter()
        .map(|(s, w)| (s, w * (-m * s).exp()))
        .collect()
}

impl LyapunovFunctional {
    /// Functional for the disease-free equilibrium, using derivation-mode R₀.
    pub fn l0(params: &ModelParameters, factors: &SurvivalFactors, kernels: &DelayKernels) -> Self {
        let x0 = params.x0();
        let r0 = reproduction_numbers(params, factors, FormulaMode::Derivation).r0;
        let f1 = weighted(&kernels.infection, params.m1);
        let f2 = weighted(&kernels.production, params.m2);
        let v_coef = params.beta1 * factors.a1 * x0 / (params.d4 * r0);
        Self {
            name: "L0",
            kind: Kind::L0 { x0, r0 },
            params: *params,
            factors: *factors,
            memory: vec![
                MemoryTerm {
                    name: "N01",
                    coefficient: 1.0,
                    nodes: f1.clone(),
                    integrand: Integrand::Contact {
                        beta: params.beta1,
                        cytokine: false,
                    },
                },
                MemoryTerm {
                    name: "N02",
                    coefficient: 1.0,
                    nodes: f1,
                    integrand: Integrand::Contact {
                        beta: params.beta2,
                        cytokine: true,
                    },
                },
                MemoryTerm {
                    name: "N03",
                    coefficient: v_coef,
                    nodes: f2,
                    integrand: Integrand::Production { k: params.k },
                },
            ],
        }
    }

    fn around(
        name: &'static str,
        kind: Kind,
        eq: State5,
        params: &ModelParameters,
        factors: &SurvivalFactors,
        kernels: &DelayKernels,
    ) -> Self {
        let f1 = weighted(&kernels.infection, params.m1);
        let f2 = weighted(&kernels.production, params.m2);
        let inv_a1 = 1.0 / factors.a1;
        let [n1, n2, n3] = match name {
            "L1" => ["N11", "N12", "N13"],
            _ => ["N21", "N22", "N23"],
        };
        Self {
            name,
            kind,
            params: *params,
            factors: *factors,
            memory: vec![
                MemoryTerm {
                    name: n1,
                    coefficient: inv_a1,
                    nodes: f1.clone(),
                    integrand: Integrand::ContactG {
                        scale: params.beta1 * eq.x * eq.v,
                        reference: eq.x * eq.v,
                        cytokine: false,
                    },
                },
                MemoryTerm {
                    name: n2,
                    coefficient: inv_a1,
                    nodes: f1,
                    integrand: Integrand::ContactG {
                        scale: params.beta2 * eq.x * eq.c,
                        reference: eq.x * eq.c,
                        cytokine: true,
                    },
                },
                MemoryTerm {
                    name: n3,
                    coefficient: 1.0,
                    nodes: f2,
                    integrand: Integrand::InfectedG {
                        scale: params.k * params.beta1 * eq.x * eq.y / params.d4,
                        reference: eq.y,
                    },
                },
            ],
        }
    }

    /// Functional for the immunity-inactivated equilibrium E₁.
    pub fn l1(
        params: &ModelParameters,
        factors: &SurvivalFactors,
        kernels: &DelayKernels,
        eqs: &EquilibriumSet,
    ) -> Result<Self, CertificateError> {
        let eq = eqs.e1.ok_or(CertificateError::MissingEquilibrium("E1"))?;
        Ok(Self::around("L1", Kind::L1 { eq }, eq, params, factors, kernels))
    }

    /// Functional for the immunity-activated equilibrium E₂.
    pub fn l2(
        params: &ModelParameters,
        factors: &SurvivalFactors,
        kernels: &DelayKernels,
        eqs: &EquilibriumSet,
    ) -> Result<Self, CertificateError> {
        let eq = eqs.e2.ok_or(CertificateError::MissingEquilibrium("E2"))?;
        Ok(Self::around("L2", Kind::L2 { eq }, eq, params, factors, kernels))
    }

    /// The functional certifying `regime`, if there is one.
    pub fn for_regime(
        regime: Regime,
        params: &ModelParameters,
        factors: &SurvivalFactors,
        kernels: &DelayKernels,
        eqs: &EquilibriumSet,
    ) -> Result<Option<Self>, CertificateError> {
        Ok(match regime {
            Regime::E0 => Some(Self::l0(params, factors, kernels)),
            Regime::E1 => Some(Self::l1(params, factors, kernels, eqs)?),
            Regime::E2 => Some(Self::l2(params, factors, kernels, eqs)?),
            Regime::Boundary => None,
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Pointwise terms; `None` if a logarithm argument is not positive.
    fn local_terms(&self, s: &State5) -> Option<Vec<(&'static str, f64)>> {
        let p = &self.params;
        let a1 = self.factors.a1;
        let ratio_g = |value: f64, reference: f64| {
            let r = value / reference;
            (r > 0.0).then(|| g_unchecked(r))
        };
        Some(match self.kind {
            Kind::L0 { x0, r0 } => vec![
                ("x", a1 * x0 * ratio_g(s.x, x0)?),
                ("y", s.y),
                ("c", p.beta2 * a1 * x0 / (p.d3 * r0) * s.c),
                ("v", p.beta1 * a1 * x0 / (p.d4 * r0) * s.v),
                ("z", p.p * p.h / p.c_ctl * s.z),
            ],
            Kind::L1 { eq } | Kind::L2 { eq } => {
                let z_term = match self.kind {
                    Kind::L1 { .. } => p.p * p.h / (p.c_ctl * a1) * s.z,
                    _ => p.p * eq.y / (p.d5 * a1) * eq.z * ratio_g(s.z, eq.z)?,
                };
                vec![
                    ("x", eq.x * ratio_g(s.x, eq.x)?),
                    ("y", eq.y / a1 * ratio_g(s.y, eq.y)?),
                    ("c", p.beta2 * eq.x * eq.c / p.d3 * ratio_g(s.c, eq.c)?),
                    ("v", p.beta1 * eq.x * eq.v / p.d4 * ratio_g(s.v, eq.v)?),
                    ("z", z_term),
                ]
            }
        })
    }

    /// Value at any `t` in [0, t_end], memory integrals by direct trapezoid
    /// on the mesh of spacing `dt / refine`.
    pub fn evaluate(
        &self,
        traj: &Trajectory,
        t: f64,
        refine: usize,
    ) -> Result<LyapunovValue, CertificateError> {
        let not_evaluable = |reason: &str| CertificateError::NotEvaluable {
            t,
            reason: reason.to_string(),
        };
        let state = traj.state_at(t);
        let mut components: Vec<(String, f64)> = self
            .local_terms(&state)
            .ok_or_else(|| not_evaluable("state component <= 0"))?
            .into_iter()
            .map(|(n, v)| (n.to_string(), v))
            .collect();
        let h = traj.dt() / refine.max(1) as f64;
        for term in &self.memory {
            let mut total = 0.0;
            for &(s, w) in &term.nodes {
                if s == 0.0 {
                    continue;
                }
                let integral = trapezoid(traj, &term.integrand, t - s, t, h)
                    .ok_or_else(|| not_evaluable(term.name))?;
                total += w * integral;
            }
            components.push((term.name.to_string(), term.coefficient * total));
        }
        let value = components.iter().map(|(_, v)| v).sum();
        Ok(LyapunovValue {
            t,
            value,
            components,
        })
    }

    /// Values at every grid node, memory integrals through cumulative
    /// trapezoid sums (same rule as [`evaluate`](Self::evaluate)).
    pub fn series(&self, traj: &Trajectory, refine: usize) -> LyapunovSeries {
        let refine = refine.max(1);
        let h = traj.dt() / refine as f64;
        let last = (traj.len() - 1) * refine;
        let max_delay = self
            .memory
            .iter()
            .flat_map(|m| m.nodes.iter().map(|(s, _)| *s))
            .fold(0.0, f64::max);
        let k_min = -((max_delay / h).floor() as i64) - 1;
        let offset = (-k_min) as usize;
        let sample_count = offset + last + 1;

        let sample_state = |k: i64| -> State5 {
            if k >= 0 && (k as usize).is_multiple_of(refine) {
                traj.state(k as usize / refine)
            } else {
                traj.state_at(k as f64 * h)
            }
        };
        let states: Vec<State5> = (k_min..=last as i64).map(sample_state).collect();

        struct Prefix {
            integral: Vec<f64>,
            bad: Vec<u32>,
            samples: Vec<Option<f64>>,
        }
        let prefixes: Vec<Prefix> = self
            .memory
            .iter()
            .map(|term| {
                let samples: Vec<Option<f64>> =
                    states.iter().map(|s| term.integrand.eval(s)).collect();
                let mut integral = Vec::with_capacity(sample_count);
                let mut bad = Vec::with_capacity(sample_count);
                integral.push(0.0);
                bad.push(u32::from(samples[0].is_none()));
                for k in 1..sample_count {
                    let step = match (samples[k - 1], samples[k]) {
                        (Some(a), Some(b)) => 0.5 * h * (a + b),
                        _ => 0.0,
                    };
                    integral.push(integral[k - 1] + step);
                    bad.push(bad[k - 1] + u32::from(samples[k].is_none()));
                }
                Prefix {
                    integral,
                    bad,
                    samples,
                }
            })
            .collect();

        let mut values = Vec::with_capacity(traj.len());
        for n in 0..traj.len() {
            let t = traj.time(n);
            let Some(local) = self.local_terms(&traj.state(n)) else {
                values.push(None);
                continue;
            };
            let mut value: f64 = local.iter().map(|(_, v)| v).sum();
            let end = offset + n * refine;
            let mut ok = true;
            'terms: for (term, prefix) in self.memory.iter().zip(&prefixes) {
                let mut total = 0.0;
                for &(s, w) in &term.nodes {
                    if s == 0.0 {
                        continue;
                    }
                    let q = t - s;
                    let kq = ((q / h).floor() as i64).max(k_min);
                    let iq = (kq - k_min) as usize;
                    let Some(fq) = term.integrand.eval(&traj.state_at(q)) else {
                        ok = false;
                        break 'terms;
                    };
                    if prefix.bad[end] - prefix.bad[iq] > 0 {
                        ok = false;
                        break 'terms;
                    }
                    // [q, next node] gets its own trapezoid, as in `evaluate`
                    let Some(f_next) = prefix.samples[iq + 1] else {
                        ok = false;
                        break 'terms;
                    };
                    let head = ((kq + 1) as f64 * h - q) * 0.5 * (fq + f_next);
                    total += w * (prefix.integral[end] - prefix.integral[iq + 1] + head);
                }
                value += term.coefficient * total;
            }
            values.push(ok.then_some(value));
        }
        LyapunovSeries {
            name: self.name.to_string(),
            times: (0..traj.len()).map(|n| traj.time(n)).collect(),
            values,
        }
    }
}

/// ∫_a^b F over mesh points k·h strictly inside (a, b) plus both endpoints.
fn trapezoid(traj: &Trajectory, integrand: &Integrand, a: f64, b: f64, h: f64) -> Option<f64> {
    let eval = |t: f64| integrand.eval(&traj.state_at(t));
    let first = (a / h).floor() as i64 + 1;
    let last = (b / h).ceil() as i64 - 1;
    let mut prev_t = a;
    let mut prev_f = eval(a)?;
    let mut total = 0.0;
    for k in first..=last {
        let t = k as f64 * h;
        if t <= a + 1e-9 * h || t >= b - 1e-9 * h {
            continue;
        }
        let f = eval(t)?;
        total += 0.5 * (t - prev_t) * (prev_f + f);
        prev_t = t;
        prev_f = f;
    }
    let f = eval(b)?;
    total += 0.5 * (b - prev_t) * (prev_f + f);
    Some(total)
}

/// L₀ at time `t` (grid-resolution quadrature).
pub fn lyapunov_l0(
    params: &ModelParameters,
    factors: &SurvivalFactors,
    kernels: &DelayKernels,
    traj: &Trajectory,
    t: f64,
) -> Result<LyapunovValue, CertificateError> {
    LyapunovFunctional::l0(params, factors, kernels).evaluate(traj, t, 1)
}

/// L₁ at time `t` around the given E₁.
pub fn lyapunov_l1(
    params: &ModelParameters,
    factors: &SurvivalFactors,
    kernels: &DelayKernels,
    traj: &Trajectory,
    t: f64,
    eqs: &EquilibriumSet,
) -> Result<LyapunovValue, CertificateError> {
    LyapunovFunctional::l1(params, factors, kernels, eqs)?.evaluate(traj, t, 1)
}

/// L₂ at time `t` around the given E₂.
pub fn lyapunov_l2(
    params: &ModelParameters,
    factors: &SurvivalFactors,
    kernels: &DelayKernels,
    traj: &Trajectory,
    t: f64,
    eqs: &EquilibriumSet,
) -> Result<LyapunovValue, CertificateError> {
    LyapunovFunctional::l2(params, factors, kernels, eqs)?.evaluate(traj, t, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{dirac_factors, equilibria};
    use crate::certificates::{check_monotone_decrease, MONOTONE_REL_TOL};
    use crate::experiments::{scenario, ScenarioName};
    use crate::integrator::{integrate, IntegrationConfig};
    use crate::model::InitialHistory;

    struct Setup {
        params: ModelParameters,
        factors: SurvivalFactors,
        kernels: DelayKernels,
        eqs: EquilibriumSet,
    }

    fn setup(name: ScenarioName, tau1: f64, tau2: f64) -> Setup {
        let params = scenario(name).params;
        let factors = dirac_factors(&params, tau1, tau2);
        Setup {
            params,
            factors,
            kernels: DelayKernels::dirac(tau1, tau2).unwrap(),
            eqs: equilibria(&params, &factors).unwrap(),
        }
    }

    #[test]
    fn each_functional_vanishes_at_its_equilibrium() {
        let s = setup(ScenarioName::E0, 5.0, 3.0);
        let traj = Trajectory::constant(s.eqs.e0, 0.01, 10.0).unwrap();
        for t in [0.0, 3.3, 10.0] {
            let v = lyapunov_l0(&s.params, &s.factors, &s.kernels, &traj, t).unwrap();
            assert_eq!(v.value, 0.0);
        }

        let s = setup(ScenarioName::E1, 5.0, 3.0);
        // E1 exists in derivation mode for this row
        let e1 = s.eqs.e1.unwrap();
        let traj = Trajectory::constant(e1, 0.01, 10.0).unwrap();
        let v = lyapunov_l1(&s.params, &s.factors, &s.kernels, &traj, 7.0, &s.eqs).unwrap();
        assert!(v.value.abs() < 1e-12, "{v:?}");

        let s = setup(ScenarioName::E2, 5.0, 4.0);
        let e2 = s.eqs.e2.unwrap();
        let traj = Trajectory::constant(e2, 0.01, 10.0).unwrap();
        let v = lyapunov_l2(&s.params, &s.factors, &s.kernels, &traj, 7.0, &s.eqs).unwrap();
        assert!(v.value.abs() < 1e-12, "{v:?}");
        let z = v.components.iter().find(|(n, _)| n == "z").unwrap().1;
        assert_eq!(z, 0.0);
    }

    #[test]
    fn saturation_constant_scales_only_the_ctl_term() {
        let s = setup(ScenarioName::E0, 5.0, 3.0);
        let h = InitialHistory::constant(State5::new(5.0, 5.0, 6.0, 3.0, 3.5)).unwrap();
        let traj = integrate(&s.params, &s.kernels, &h, &IntegrationConfig::new(0.01, 20.0)).unwrap();
        let base = lyapunov_l0(&s.params, &s.factors, &s.kernels, &traj, 12.0).unwrap();
        let mut doubled = s.params;
        doubled.h *= 2.0;
        let twice = lyapunov_l0(&doubled, &s.factors, &s.kernels, &traj, 12.0).unwrap();
        for ((name, a), (_, b)) in base.components.iter().zip(&twice.components) {
            if name == "z" {
                assert!((b - 2.0 * a).abs() < 1e-14 * b.abs());
            } else {
                assert_eq!(a, b, "{name}");
            }
        }
    }

    #[test]
    fn l1_is_nonnegative_on_positive_trajectories() {
        let s = setup(ScenarioName::E1, 5.0, 3.0);
        let h = InitialHistory::constant(State5::new(5.0, 5.0, 6.0, 3.0, 35.0)).unwrap();
        let traj = integrate(&s.params, &s.kernels, &h, &IntegrationConfig::new(0.01, 60.0)).unwrap();
        let f = LyapunovFunctional::l1(&s.params, &s.factors, &s.kernels, &s.eqs).unwrap();
        let series = f.series(&traj, 1);
        assert!(series.values.iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn l1_requires_e1() {
        let s = setup(ScenarioName::E0, 5.0, 3.0);
        let traj = Trajectory::constant(s.eqs.e0, 0.01, 1.0).unwrap();
        assert_eq!(
            lyapunov_l1(&s.params, &s.factors, &s.kernels, &traj, 0.5, &s.eqs),
            Err(CertificateError::MissingEquilibrium("E1"))
        );
    }

    #[test]
    fn l2_not_evaluable_when_ctl_vanishes() {
        let s = setup(ScenarioName::E2, 5.0, 4.0);
        let h = InitialHistory::constant(State5::new(12.0, 4.0, 35.0, 1.0, 0.0)).unwrap();
        let traj = integrate(&s.params, &s.kernels, &h, &IntegrationConfig::new(0.01, 5.0)).unwrap();
        assert!(matches!(
            lyapunov_l2(&s.params, &s.factors, &s.kernels, &traj, 2.0, &s.eqs),
            Err(CertificateError::NotEvaluable { .. })
        ));
        let f = LyapunovFunctional::l2(&s.params, &s.factors, &s.kernels, &s.eqs).unwrap();
        let series = f.series(&traj, 1);
        assert!(series.values.iter().all(Option::is_none));
        let report = check_monotone_decrease(&series, MONOTONE_REL_TOL);
        assert!(report.notes.contains("not evaluable"));
    }

    #[test]
    fn cumulative_and_direct_quadrature_agree() {
        let s = setup(ScenarioName::E2, 5.0, 4.0);
        let h = InitialHistory::constant(State5::new(12.0, 4.0, 35.0, 1.0, 10.0)).unwrap();
        let traj = integrate(&s.params, &s.kernels, &h, &IntegrationConfig::new(0.01, 30.0)).unwrap();
        let kernels = DelayKernels::new(
            DelayKernel::uniform(5.0, 0.5, 4).unwrap(),
            DelayKernel::dirac(4.0).unwrap(),
        );
        for kernels in [s.kernels.clone(), kernels] {
            let f = LyapunovFunctional::l2(&s.params, &s.factors, &kernels, &s.eqs).unwrap();
            for refine in [1, 3] {
                let series = f.series(&traj, refine);
                for n in [0, 1, 250, 499, 500, 1777, 3000] {
                    let direct = f.evaluate(&traj, traj.time(n), refine).unwrap().value;
                    let cumulative = series.values[n].unwrap();
                    assert!(
                        (direct - cumulative).abs() < 1e-9 * direct.abs().max(1.0),
                        "n={n} refine={refine}: {direct} vs {cumulative}"
                    );
                }
            }
        }
    }
}

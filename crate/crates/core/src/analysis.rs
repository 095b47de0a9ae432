//! Closed-form threshold quantities: survival factors, reproduction numbers
//! and the three equilibria.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DelayKernel, DelayKernels, ModelParameters, State5};

/// Existence margin above a threshold of one.
pub const EXISTENCE_MARGIN: f64 = 1e-12;
/// Relative residual an equilibrium must meet (times its largest component).
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Half-width of the band around one that is classified as a boundary regime.
pub const BOUNDARY_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("negative discriminant {0} with R1 > 1")]
    NegativeDiscriminant(f64),
    #[error("equilibrium {which} has residual {residual:e} above {tolerance:e}")]
    ResidualCheckFailed {
        which: &'static str,
        residual: f64,
        tolerance: f64,
    },
}

/// Probability of surviving the delay period: ∫ f(s) e^{-m s} ds.
pub fn survival_factor(kernel: &DelayKernel, m: f64) -> f64 {
    match kernel {
        DelayKernel::Dirac { tau } => (-m * tau).exp(),
        DelayKernel::Tabulated(t) => {
            let terms = t
                .nodes()
                .iter()
                .zip(t.weights())
                .map(|(s, w)| w * (-m * s).exp());
            compensated_sum(terms)
        }
    }
}

fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    terms.fold(Dd::ZERO, |acc, t| acc.add_f64(t)).value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalFactors {
    pub a1: f64,
    pub a2: f64,
}

impl SurvivalFactors {
    pub fn from_kernels(params: &ModelParameters, kernels: &DelayKernels) -> Self {
        Self {
            a1: survival_factor(&kernels.infection, params.m1),
            a2: survival_factor(&kernels.production, params.m2),
        }
    }
}

/// Which printed form of R₀ to use.
///
/// `Derivation` is the next-generation form whose threshold matches the
/// equilibria; `PaperPrinted` omits the d₄ factor from the denominator and
/// reproduces the published scenario numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaMode {
    #[default]
    Derivation,
    #[serde(rename = "paper")]
    PaperPrinted,
}

impl std::str::FromStr for FormulaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "derivation" => Ok(Self::Derivation),
            "paper" => Ok(Self::PaperPrinted),
            other => Err(format!("unknown mode `{other}` (expected derivation|paper)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproductionNumbers {
    pub r0: f64,
    pub r1: f64,
    pub mode: FormulaMode,
}

/// β₁kA₂d₃ + β₂α₂d₄, the combined per-infected-cell infectivity that appears
/// in every equilibrium formula.
fn infectivity(params: &ModelParameters, f: &SurvivalFactors) -> Dd {
    let viral = Dd::from(params.beta1)
        .mul_f64(params.k)
        .mul_f64(f.a2)
        .mul_f64(params.d3);
    let cytokine = Dd::from(params.beta2).mul_f64(params.alpha2).mul_f64(params.d4);
    viral.add(cytokine)
}

fn r0_dd(params: &ModelParameters, f: &SurvivalFactors, mode: FormulaMode) -> Dd {
    let x0 = Dd::from(params.lambda).div(Dd::from(params.d1));
    let numerator = Dd::from(params.beta1)
        .mul_f64(f.a1)
        .mul_f64(params.k)
        .mul_f64(f.a2)
        .mul_f64(params.d3)
        .mul(x0)
        .add(
            Dd::from(params.beta2)
                .mul_f64(f.a1)
                .mul_f64(params.alpha2)
                .mul(x0)
                .mul_f64(params.d4),
        );
    let removal = Dd::from(params.alpha1).add_f64(params.d2);
    let denominator = match mode {
        FormulaMode::Derivation => removal.mul_f64(params.d3).mul_f64(params.d4),
        FormulaMode::PaperPrinted => removal.mul_f64(params.d3),
    };
    numerator.div(denominator)
}

fn r1_from_r0(params: &ModelParameters, f: &SurvivalFactors, r0: Dd) -> Dd {
    Dd::from(params.c_ctl)
        .mul_f64(params.d1)
        .mul_f64(params.d3)
        .mul_f64(params.d4)
        .mul(r0.add_f64(-1.0))
        .div(Dd::from(params.h).mul_f64(params.d5).mul(infectivity(params, f)))
}

/// R₀ and R₁ under the chosen formula; R₁ always uses the same mode's R₀.
pub fn reproduction_numbers(
    params: &ModelParameters,
    factors: &SurvivalFactors,
    mode: FormulaMode,
) -> ReproductionNumbers {
    let r0 = r0_dd(params, factors, mode);
    let r1 = r1_from_r0(params, factors, r0);
    ReproductionNumbers {
        r0: r0.value(),
        r1: r1.value(),
        mode,
    }
}

/// Attractor predicted by the threshold conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    E0,
    E1,
    E2,
    /// R₀ or R₁ within [`BOUNDARY_BAND`] of one; not certified either way.
    Boundary,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::E0 => "E0",
            Self::E1 => "E1",
            Self::E2 => "E2",
            Self::Boundary => "Boundary",
        }
    }
}

pub fn predict_regime(numbers: &ReproductionNumbers) -> Regime {
    if (numbers.r0 - 1.0).abs() < BOUNDARY_BAND {
        Regime::Boundary
    } else if numbers.r0 < 1.0 {
        Regime::E0
    } else if (numbers.r1 - 1.0).abs() < BOUNDARY_BAND {
        Regime::Boundary
    } else if numbers.r1 < 1.0 {
        Regime::E1
    } else {
        Regime::E2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResiduals {
    pub e0: f64,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
}

/// Disease-free, immunity-inactivated and immunity-activated equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub e0: State5,
    pub e1: Option<State5>,
    pub e2: Option<State5>,
    /// Derivation-mode numbers the existence tests were made with.
    pub numbers: ReproductionNumbers,
    /// Discriminant of the quadratic for the CTL level at E₂.
    pub delta: f64,
    pub residual_norms: EquilibriumResiduals,
}

impl EquilibriumSet {
    pub fn get(&self, regime: Regime) -> Option<State5> {
        match regime {
            Regime::E0 => Some(self.e0),
            Regime::E1 => self.e1,
            Regime::E2 => self.e2,
            Regime::Boundary => None,
        }
    }
}

/// Coefficients (a, b, c) of a·z² + b·z + c = 0 whose positive root is z₂.
pub fn z2_quadratic(params: &ModelParameters, factors: &SurvivalFactors) -> (f64, f64, f64) {
    let numbers = reproduction_numbers(params, factors, FormulaMode::Derivation);
    let s = infectivity(params, factors);
    let removal = params.alpha1 + params.d2;
    let a = Dd::from(params.p).mul_f64(params.d5).mul(s);
    let b = Dd::from(params.d5)
        .mul_f64(removal + params.p * params.h)
        .mul(s)
        .add(
            Dd::from(params.d1)
                .mul_f64(params.d3)
                .mul_f64(params.d4)
                .mul_f64(params.p)
                .mul_f64(params.c_ctl),
        );
    let c = s
        .mul_f64(params.h)
        .mul_f64(removal)
        .mul_f64(params.d5)
        .mul_f64(numbers.r1 - 1.0)
        .neg();
    (a.value(), b.value(), c.value())
}

/// All equilibria, always from the derivation-mode R₀, each validated
/// against the steady-state residual.
pub fn equilibria(
    params: &ModelParameters,
    factors: &SurvivalFactors,
) -> Result<EquilibriumSet, AnalysisError> {
    let numbers = reproduction_numbers(params, factors, FormulaMode::Derivation);
    let r0 = r0_dd(params, factors, FormulaMode::Derivation);
    let s = infectivity(params, factors);
    let x0 = params.x0();
    let e0 = State5::new(x0, 0.0, 0.0, 0.0, 0.0);

    let e1 = (numbers.r0 > 1.0 + EXISTENCE_MARGIN).then(|| {
        let y1 = Dd::from(params.d1)
            .mul_f64(params.d3)
            .mul_f64(params.d4)
            .mul(r0.add_f64(-1.0))
            .div(s)
            .value();
        State5::new(
            Dd::from(params.lambda)
                .div(Dd::from(params.d1).mul(r0))
                .value(),
            y1,
            params.alpha2 / params.d3 * y1,
            params.k * factors.a2 / params.d4 * y1,
            0.0,
        )
    });

    let removal = params.alpha1 + params.d2;
    let s_val = s.value();
    let linear = params.d5 * (removal + params.p * params.h) * s_val
        + params.d1 * params.d3 * params.d4 * params.p * params.c_ctl;
    let delta = linear * linear
        + 4.0 * params.p * s_val * s_val * params.h * removal * params.d5 * params.d5
            * (numbers.r1 - 1.0);

    let e2 = if numbers.r1 > 1.0 + EXISTENCE_MARGIN {
        if delta < 0.0 {
            return Err(AnalysisError::NegativeDiscriminant(delta));
        }
        // (-b + √Δ)/(2a) rewritten as 2|c|/(b + √Δ) to avoid cancellation
        // when R₁ is close to one.
        let (_, b, c) = z2_quadratic(params, factors);
        let z2 = -2.0 * c / (b + delta.sqrt());
        let scale = params.d5 * (params.h + z2) / params.c_ctl;
        Some(State5::new(
            (removal + params.p * z2) * params.d3 * params.d4 / (factors.a1 * s_val),
            scale,
            params.alpha2 / params.d3 * scale,
            params.k * factors.a2 / params.d4 * scale,
            z2,
        ))
    } else {
        None
    };

    let check = |which: &'static str, point: State5| -> Result<f64, AnalysisError> {
        let residual = steady_state_residual(params, factors, &point).max_abs();
        let tolerance = RESIDUAL_TOLERANCE * point.max_abs();
        if residual < tolerance || residual == 0.0 {
            Ok(residual)
        } else {
            Err(AnalysisError::ResidualCheckFailed {
                which,
                residual,
                tolerance,
            })
        }
    };
    let residual_norms = EquilibriumResiduals {
        e0: check("E0", e0)?,
        e1: e1.map(|p| check("E1", p)).transpose()?,
        e2: e2.map(|p| check("E2", p)).transpose()?,
    };

    Ok(EquilibriumSet {
        e0,
        e1,
        e2,
        numbers,
        delta,
        residual_norms,
    })
}

/// Right-hand side of the model at a constant history equal to `point`.
/// Each delayed term collapses to its survival factor times the current value.
pub fn steady_state_residual(
    params: &ModelParameters,
    factors: &SurvivalFactors,
    point: &State5,
) -> State5 {
    let State5 { x, y, c, v, z } = *point;
    let infection = params.beta1 * x * v + params.beta2 * x * c;
    State5::new(
        params.lambda - infection - params.d1 * x,
        factors.a1 * infection - (params.alpha1 + params.d2) * y - params.p * y * z,
        params.alpha2 * y - params.d3 * c,
        params.k * factors.a2 * y - params.d4 * v,
        params.c_ctl * y * z / (params.h + z) - params.d5 * z,
    )
}

/// Double-double arithmetic (an unevaluated sum hi + lo) for the products
/// of six rate constants in the threshold formulas.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn value(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: err }
    }

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd {
            hi: s,
            lo: b - (s - a),
        }
    }

    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn add(self, other: Dd) -> Dd {
        let s = Self::two_sum(self.hi, other.hi);
        let t = Self::two_sum(self.lo, other.lo);
        let u = Self::quick_two_sum(s.hi, s.lo + t.hi);
        Self::quick_two_sum(u.hi, u.lo + t.lo)
    }

    fn add_f64(self, other: f64) -> Dd {
        self.add(Dd::from(other))
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn mul(self, other: Dd) -> Dd {
        let p = Self::two_prod(self.hi, other.hi);
        let lo = p.lo + (self.hi * other.lo + self.lo * other.hi);
        Self::quick_two_sum(p.hi, lo)
    }

    fn mul_f64(self, other: f64) -> Dd {
        self.mul(Dd::from(other))
    }

    fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.add(other.mul_f64(q1).neg());
        let q2 = r.hi / other.hi;
        let r = r.add(other.mul_f64(q2).neg());
        let q3 = r.hi / other.hi;
        Self::quick_two_sum(q1, q2).add_f64(q3)
    }
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }
}

/// Survival factors for two discrete lags.
pub fn dirac_factors(params: &ModelParameters, tau1: f64, tau2: f64) -> SurvivalFactors {
    SurvivalFactors {
        a1: (-params.m1 * tau1).exp(),
        a2: (-params.m2 * tau2).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{scenario, ScenarioName};
    use proptest::prelude::*;

    fn row(name: ScenarioName) -> ModelParameters {
        scenario(name).params
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn dirac_survival_factor() {
        let k = DelayKernel::dirac(5.0).unwrap();
        assert!(close(survival_factor(&k, 0.3), (-1.5f64).exp(), 1e-16));
        assert!(close(survival_factor(&k, 0.3), 0.2231302, 1e-7));
        assert_eq!(survival_factor(&DelayKernel::dirac(0.0).unwrap(), 0.7), 1.0);
    }

    #[test]
    fn narrow_tabulated_kernel_matches_dirac_oracle() {
        let oracle = survival_factor(&DelayKernel::dirac(3.0).unwrap(), 0.3);
        let narrow = DelayKernel::uniform(3.0, 0.05, 11).unwrap();
        let got = survival_factor(&narrow, 0.3);
        assert!(close(got, oracle, 1e-4), "{got} vs {oracle}");
        assert!(close(oracle, 0.4065697, 1e-7));
    }

    #[test]
    fn printed_scenario_numbers() {
        let p = row(ScenarioName::E1);
        let n = reproduction_numbers(&p, &dirac_factors(&p, 5.0, 3.0), FormulaMode::PaperPrinted);
        assert!(close(n.r0, 2.2648, 5e-4) && close(n.r1, 0.7121, 5e-4), "{n:?}");
        let p = row(ScenarioName::E2);
        let n = reproduction_numbers(&p, &dirac_factors(&p, 5.0, 4.0), FormulaMode::PaperPrinted);
        assert!(close(n.r0, 1.7274, 5e-4) && close(n.r1, 5.3690, 5e-4), "{n:?}");
    }

    #[test]
    fn e0_derivation_value_matches_extended_precision_oracle() {
        // 40-digit evaluation of the derivation formula.
        let p = row(ScenarioName::E0);
        let f = dirac_factors(&p, 5.0, 3.0);
        let n = reproduction_numbers(&p, &f, FormulaMode::Derivation);
        assert!(close(n.r0, 0.172_259_404_876_309_43, 1e-15), "{}", n.r0);
        assert!(close(n.r1, -367.606_169_346_266_36, 1e-11), "{}", n.r1);
        let paper = reproduction_numbers(&p, &f, FormulaMode::PaperPrinted);
        assert!(paper.r0 < 1.0);
    }

    #[test]
    fn r1_vanishes_at_threshold() {
        let mut p = row(ScenarioName::E2);
        let f = dirac_factors(&p, 5.0, 4.0);
        let n = reproduction_numbers(&p, &f, FormulaMode::Derivation);
        // scale lambda so that R0 hits one exactly (R0 is linear in lambda)
        p.lambda /= n.r0;
        let n = reproduction_numbers(&p, &f, FormulaMode::Derivation);
        assert!(close(n.r0, 1.0, 1e-15));
        assert!(n.r1.abs() < 1e-12, "{}", n.r1);
        assert_eq!(predict_regime(&n), Regime::Boundary);
        let eq = equilibria(&p, &f).unwrap();
        assert!(eq.e1.is_none());
    }

    #[test]
    fn disease_free_equilibrium() {
        let p = row(ScenarioName::E0);
        for (t1, t2) in [(5.0, 3.0), (5.0, 2.0), (2.0, 3.0)] {
            let eq = equilibria(&p, &dirac_factors(&p, t1, t2)).unwrap();
            assert_eq!(eq.e0, State5::new(5.0, 0.0, 0.0, 0.0, 0.0));
            assert!(eq.e1.is_none() && eq.e2.is_none());
            assert_eq!(eq.residual_norms.e0, 0.0);
        }
    }

    #[test]
    fn e1_matches_closed_form_oracle() {
        let p = row(ScenarioName::E1);
        let f = dirac_factors(&p, 5.0, 3.0);
        let eq = equilibria(&p, &f).unwrap();
        let e1 = eq.e1.unwrap();
        // 40-digit evaluation with derivation R0 = 9.0592305641123312
        let oracle = [11.038465054211643, 11.342858022573653, 27.222859254176767, 368.9329541378956];
        for (got, want) in e1.to_array().iter().zip(oracle) {
            assert!(close(*got, want, 1e-12 * want), "{got} vs {want}");
        }
        assert_eq!(e1.z, 0.0);
        assert!(steady_state_residual(&p, &f, &e1).max_abs() < 1e-9);
    }

    #[test]
    fn e2_matches_closed_form_oracle() {
        let p = row(ScenarioName::E2);
        let f = dirac_factors(&p, 5.0, 4.0);
        let eq = equilibria(&p, &f).unwrap();
        let e2 = eq.e2.unwrap();
        let oracle = [
            15.450155202805454,
            10.098391665367459,
            24.2361399968819,
            243.32616953848814,
            1.181806999844095,
        ];
        for (got, want) in e2.to_array().iter().zip(oracle) {
            assert!(close(*got, want, 1e-11 * want), "{got} vs {want}");
        }
        assert!(e2.z > 0.0);
        assert!(close(eq.delta, 4.641_495_122_539_263e-7, 1e-20));
        assert!(eq.residual_norms.e2.unwrap() < 1e-9);
    }

    #[test]
    fn residual_of_perturbed_e0() {
        let p = row(ScenarioName::E0);
        let f = dirac_factors(&p, 5.0, 3.0);
        let e0 = State5::new(5.0, 0.0, 0.0, 0.0, 0.0);
        assert!(steady_state_residual(&p, &f, &e0).max_abs() < 1e-12);
        let r = steady_state_residual(&p, &f, &(e0 + State5::new(1.0, 0.0, 0.0, 0.0, 0.0)));
        assert!(close(r.x, -p.d1, 1e-15));
    }

    #[test]
    fn modes_differ_by_d4() {
        let p = row(ScenarioName::E1);
        let f = dirac_factors(&p, 5.0, 3.0);
        let d = reproduction_numbers(&p, &f, FormulaMode::Derivation);
        let pp = reproduction_numbers(&p, &f, FormulaMode::PaperPrinted);
        assert!(close(d.r0, pp.r0 / p.d4, 1e-15 * d.r0));
        assert_eq!(predict_regime(&d), Regime::E2);
        assert_eq!(predict_regime(&pp), Regime::E1);
    }

    fn log_uniform() -> impl Strategy<Value = f64> {
        (-2.0f64..1.0).prop_map(|e| 10f64.powf(e))
    }

    fn any_params() -> impl Strategy<Value = ModelParameters> {
        proptest::collection::vec(log_uniform(), 16).prop_map(|v| ModelParameters {
            lambda: v[0],
            beta1: v[1],
            beta2: v[2],
            d1: v[3],
            d2: v[4],
            d3: v[5],
            d4: v[6],
            d5: v[7],
            alpha1: v[8],
            alpha2: v[9],
            k: v[10],
            c_ctl: v[11],
            p: v[12],
            h: v[13],
            m1: v[14],
            m2: v[15],
        })
    }

    proptest! {
        #[test]
        fn r0_decreases_with_each_lag(p in any_params(), t1 in 0.0f64..10.0, t2 in 0.0f64..10.0, dt in 0.01f64..2.0) {
            for mode in [FormulaMode::Derivation, FormulaMode::PaperPrinted] {
                let base = reproduction_numbers(&p, &dirac_factors(&p, t1, t2), mode).r0;
                let later1 = reproduction_numbers(&p, &dirac_factors(&p, t1 + dt, t2), mode).r0;
                let later2 = reproduction_numbers(&p, &dirac_factors(&p, t1, t2 + dt), mode).r0;
                prop_assert!(later1 < base);
                prop_assert!(later2 <= base);
                // strict unless the virus route is below double resolution
                let f = dirac_factors(&p, t1, t2);
                if p.beta1 * p.k * f.a2 * p.d3 > 1e-10 * p.beta2 * p.alpha2 * p.d4 {
                    prop_assert!(later2 < base);
                }
            }
        }

        #[test]
        fn derivation_is_paper_over_d4(p in any_params(), t1 in 0.0f64..10.0, t2 in 0.0f64..10.0) {
            let f = dirac_factors(&p, t1, t2);
            let d = reproduction_numbers(&p, &f, FormulaMode::Derivation).r0;
            let pp = reproduction_numbers(&p, &f, FormulaMode::PaperPrinted).r0;
            prop_assert!((d - pp / p.d4).abs() <= 4.0 * f64::EPSILON * d);
        }

        #[test]
        fn r1_sign_tracks_r0(p in any_params(), t1 in 0.0f64..10.0, t2 in 0.0f64..10.0) {
            let f = dirac_factors(&p, t1, t2);
            for mode in [FormulaMode::Derivation, FormulaMode::PaperPrinted] {
                let n = reproduction_numbers(&p, &f, mode);
                prop_assert!(n.r0 > 0.0);
                prop_assert_eq!(n.r1 > 0.0, n.r0 > 1.0);
            }
        }

        #[test]
        fn equilibria_are_fixed_points(p in any_params(), t1 in 0.0f64..10.0, t2 in 0.0f64..10.0) {
            let f = dirac_factors(&p, t1, t2);
            let eq = equilibria(&p, &f).unwrap();
            if let Some(e2) = eq.e2 {
                prop_assert!(e2.z > 0.0);
                prop_assert!(eq.delta >= 0.0);
                let (a, b, c) = z2_quadratic(&p, &f);
                let q = a * e2.z * e2.z + b * e2.z + c;
                let scale = (a * e2.z * e2.z).abs() + (b * e2.z).abs() + c.abs();
                prop_assert!(q.abs() <= 1e-10 * scale);
                // Same root as the display formula (-b + √Δ) / (2a).
                let display = (-b + eq.delta.sqrt()) / (2.0 * a);
                let cancellation_scale = (b.abs() + eq.delta.sqrt()) / (2.0 * a);
                prop_assert!((display - e2.z).abs() <= 1e-10 * cancellation_scale);
            }
            prop_assert_eq!(eq.e1.is_some(), eq.numbers.r0 > 1.0 + EXISTENCE_MARGIN);
        }
    }
}

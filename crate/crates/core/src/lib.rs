//! Simulation and certification of a five-component within-host viral
//! infection model with distributed intracellular delays, cytokine-enhanced
//! infection and saturated CTL activation.
//!
//! ```text
//! x' = λ − β₁xv − β₂xc − d₁x
//! y' = ∫ f₁(s) e^{-m₁s} (β₁xv + β₂xc)(t − s) ds − (α₁ + d₂)y − pyz
//! c' = α₂y − d₃c
//! v' = k ∫ f₂(s) e^{-m₂s} y(t − s) ds − d₄v
//! z' = c·yz/(h + z) − d₅z
//! ```
//!
//! * [`model`]: parameters, state, delay kernels and initial histories.
//! * [`analysis`]: survival factors, R₀ and R₁, the equilibria E₀, E₁, E₂.
//! * [`integrator`]: fixed-step RK4 method of steps with dense output.
//! * [`certificates`]: positivity, boundedness and Lyapunov checks.
//! * [`experiments`]: the scenario registry, classification and sweeps.
//! * [`cli`]: configuration files, CSV/JSON output and the command runner.

// negated comparisons below deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod certificates;
pub mod cli;
pub mod experiments;
pub mod integrator;
pub mod model;

// Survival factors, both forms of R0/R1 and the equilibria for each
// registry row at its reference lags.

use std::error::Error;

use viral_delay::analysis::{
    equilibria, predict_regime, reproduction_numbers, FormulaMode, SurvivalFactors,
};
use viral_delay::experiments::{scenario, ScenarioName};
use viral_delay::model::DelayKernels;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for name in ScenarioName::ALL {
        let s = scenario(name);
        let (tau1, tau2) = s.lag_pairs[0];
        let kernels = DelayKernels::dirac(tau1, tau2)?;
        let factors = SurvivalFactors::from_kernels(&s.params, &kernels);
        println!("{name} at lags ({tau1}, {tau2}): A1 = {:.6}, A2 = {:.6}", factors.a1, factors.a2);
        for mode in [FormulaMode::Derivation, FormulaMode::PaperPrinted] {
            let n = reproduction_numbers(&s.params, &factors, mode);
            println!(
                "  {mode:?}: R0 = {:.4}, R1 = {:.4} -> {}",
                n.r0,
                n.r1,
                predict_regime(&n).as_str()
            );
        }
        let eqs = equilibria(&s.params, &factors)?;
        println!("  E0 = {:?}", eqs.e0.to_array());
        if let Some(e1) = eqs.e1 {
            println!("  E1 = {:?}", e1.to_array());
        }
        if let Some(e2) = eqs.e2 {
            println!("  E2 = {:?} (discriminant {:e})", e2.to_array(), eqs.delta);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}

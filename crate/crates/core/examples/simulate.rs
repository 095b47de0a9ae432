// Integrates the E2 row from Φ1 at lags (5, 4) and reports how the run ends.

use std::error::Error;

use viral_delay::analysis::{equilibria, SurvivalFactors};
use viral_delay::experiments::{classify, scenario, ScenarioName, DEFAULT_CLASSIFY_TOL};
use viral_delay::integrator::{integrate, IntegrationConfig};
use viral_delay::model::{DelayKernels, InitialHistory};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let s = scenario(ScenarioName::E2);
    let kernels = DelayKernels::dirac(5.0, 4.0)?;
    let history = InitialHistory::constant(s.histories[0])?;
    let traj = integrate(&s.params, &kernels, &history, &IntegrationConfig::new(0.01, 2000.0))?;

    for t in [0.0, 10.0, 50.0, 200.0, 2000.0] {
        let st = traj.interpolate(t)?;
        println!(
            "t = {t:>6}: x = {:9.4} y = {:9.4} c = {:9.4} v = {:9.4} z = {:9.4}",
            st.x, st.y, st.c, st.v, st.z
        );
    }
    let eqs = equilibria(&s.params, &SurvivalFactors::from_kernels(&s.params, &kernels))?;
    let class = classify(&traj, &eqs, 0.1, DEFAULT_CLASSIFY_TOL);
    println!("classified as {}", class.as_str());
    assert_eq!(class.as_str(), "E2");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}

// Narrow uniform kernels around tau = 5 approach the discrete lag.

use std::error::Error;

use viral_delay::experiments::{scenario, ScenarioName};
use viral_delay::integrator::{integrate, IntegrationConfig};
use viral_delay::model::{DelayKernel, DelayKernels, InitialHistory};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let s = scenario(ScenarioName::E0);
    let history = InitialHistory::constant(s.histories[0])?;
    let config = IntegrationConfig::new(0.01, 100.0);
    let reference = integrate(&s.params, &DelayKernels::dirac(5.0, 3.0)?, &history, &config)?;

    let mut previous = f64::INFINITY;
    for width in [0.4, 0.2, 0.1] {
        let kernels = DelayKernels::new(DelayKernel::uniform(5.0, width, 8)?, DelayKernel::dirac(3.0)?);
        let traj = integrate(&s.params, &kernels, &history, &config)?;
        let distance = (0..traj.len())
            .map(|i| traj.state(i).distance(&reference.state(i)))
            .fold(0.0, f64::max);
        println!("width {width:<4}: sup distance to Dirac(5) = {distance:.3e}");
        assert!(distance < previous);
        previous = distance;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}

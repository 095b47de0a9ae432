// Positivity, boundedness, convergence and Lyapunov checks on the E0 row.

use std::error::Error;

use viral_delay::certificates::check_cone_faces;
use viral_delay::experiments::{
    assess, default_config, scenario, AssessOptions, RunSpec, ScenarioName,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let s = scenario(ScenarioName::E0);
    let run = RunSpec { history: 0, lags: 0 };
    let kernels = s.kernels(run);
    let history = s.history(run);

    let cone = check_cone_faces(&s.params, &kernels, &s.histories, &history)?;
    let a = assess(&s.params, &kernels, &history, &default_config(&s), &AssessOptions::default())?;
    for r in std::iter::once(cone).chain(a.reports()) {
        println!(
            "{:<22} {}  worst {:+.3e} (tolerance {:.1e})",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.worst_violation,
            r.tolerance
        );
    }
    if let Some(series) = &a.lyapunov_series {
        let first = series.values[0].unwrap_or(f64::NAN);
        let last = series.values.last().copied().flatten().unwrap_or(f64::NAN);
        println!("{}: {first:.6} at t = 0, {last:.3e} at t = {}", series.name, a.trajectory.t_end());
    }
    assert!(a.passed());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}

// Regime map of the E1 row over a grid of lags. The two formula modes
// disagree on part of it.

use std::error::Error;

use viral_delay::experiments::{scenario, sweep, ScenarioName};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let s = scenario(ScenarioName::E1);
    let tau1: Vec<f64> = (0..=6).map(|i| 2.0 * i as f64).collect();
    let tau2: Vec<f64> = (0..=4).map(|i| 2.0 * i as f64).collect();
    let cells = sweep(&s.params, &tau1, &tau2, None)?;

    print!("tau1 \\ tau2");
    for t in &tau2 {
        print!("{t:>8}");
    }
    println!();
    for row in cells.chunks(tau2.len()) {
        print!("{:>11}", row[0].tau1);
        for c in row {
            let mark = if c.predicted == c.predicted_paper { " " } else { "*" };
            print!("{:>7}{mark}", c.predicted.as_str());
        }
        println!();
    }
    println!("* paper-printed thresholds predict a different regime");
    let disagreeing = cells.iter().filter(|c| c.predicted != c.predicted_paper).count();
    println!("{disagreeing} of {} cells disagree", cells.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}

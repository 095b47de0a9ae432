// Writes a configuration file and drives the command runner with it, the
// same way the `viral-delay` binary does.

use std::error::Error;

use viral_delay::cli::{self, ConfigFile};
use viral_delay::experiments::{scenario, RunSpec, ScenarioName};
use viral_delay::integrator::IntegrationConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join(format!("viral-delay-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let s = scenario(ScenarioName::E2);
    let config = ConfigFile::from_scenario(
        &s,
        RunSpec { history: 0, lags: 0 },
        IntegrationConfig::new(0.01, 2000.0),
    );
    let config_path = dir.join("e2.json");
    std::fs::write(&config_path, config.to_json())?;
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let (config_arg, csv_arg, report_arg) = (path("e2.json"), path("e2.csv"), path("report.json"));

    let mut stdout = std::io::stdout();
    let commands: [Vec<&str>; 3] = [
        vec!["analyze", "--config", &config_arg, "--mode", "paper"],
        vec!["simulate", "--config", &config_arg, "--out", &csv_arg, "--monitors", "--stride", "1000"],
        vec!["certify", "--config", &config_arg, "--out", &report_arg],
    ];
    for args in commands {
        println!("$ viral-delay {}", args.join(" "));
        let code = cli::run(std::iter::once("viral-delay").chain(args), &mut stdout);
        assert_eq!(code, 0);
    }
    print!("{}", std::fs::read_to_string(dir.join("e2.csv"))?.lines().take(4).collect::<Vec<_>>().join("\n"));
    println!("\n...");
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}

// Every Φ × lags run of a scenario with CSV, SVG and summary output.
// Pass E0, E1 or E2 and an output directory; defaults to E2 in a
// temporary directory.

use std::error::Error;

use viral_delay::cli;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    reproduce("E2", None)
}

fn reproduce(name: &str, out_dir: Option<String>) -> Result<(), Box<dyn Error>> {
    let (dir, keep) = match out_dir {
        Some(d) => (std::path::PathBuf::from(d), true),
        None => (std::env::temp_dir().join(format!("viral-delay-{name}-{}", std::process::id())), false),
    };
    let dir_arg = dir.to_string_lossy().into_owned();
    let code = cli::run(
        ["viral-delay", "reproduce", name, "--out-dir", &dir_arg, "--svg"],
        &mut std::io::stdout(),
    );
    let mut files: Vec<String> = std::fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    files.sort();
    println!("{} files in {}: {}", files.len(), dir.display(), files.join(" "));
    if !keep {
        std::fs::remove_dir_all(&dir)?;
    }
    if code != 0 {
        return Err(format!("reproduce exited with {code}").into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "E2".into());
    reproduce(&name, args.next()).unwrap();
}

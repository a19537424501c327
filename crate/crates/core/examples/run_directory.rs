//! A config file in, a run directory out; the same path the `bohmlab run` command takes.

use bohm_limit::config::{execute, RunConfig};

const CONFIG: &str = r#"
units = "natural: hbar=m=1"
scenario = "two_packet_well_env"
size = "smoke"

[overrides]
particles = 300
seed = 3
"#;

fn main() -> bohm_limit::Result<()> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    let job = cfg.resolve()?;
    let dir = std::env::temp_dir().join("bohm_limit_example_run");
    execute(&job, &dir, CONFIG, cfg.threads)?;
    let mut names: Vec<String> = std::fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    names.sort();
    println!("{}: {}", dir.display(), names.join(", "));
    Ok(())
}

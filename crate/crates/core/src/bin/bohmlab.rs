//! `bohmlab run|verify <config.toml>` and `bohmlab list-scenarios [--json]`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bohm_limit::config::{execute, Report, RunConfig};
use bohm_limit::experiments::{scales_json, scenario_library, Job};

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    version,
    about = "Bohmian trajectories and their classical limit in one dimension"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario or sweep and write its run directory.
    Run { config: PathBuf },
    /// Validate a config without computing anything.
    Verify { config: PathBuf },
    /// List the built-in scenarios.
    ListScenarios {
        /// Print a JSON array instead of a table.
        #[arg(long)]
        json: bool,
    },
}

const INVALID: u8 = 2;
const FAILED: u8 = 3;

fn load(path: &Path) -> Result<(RunConfig, String, Job), ExitCode> {
    let checked = RunConfig::load(path).and_then(|(c, text)| c.resolve().map(|job| (c, text, job)));
    checked.map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(INVALID)
    })
}

fn run(path: &Path) -> ExitCode {
    let (cfg, text, job) = match load(path) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let dir = cfg.output_dir(&job);
    match execute(&job, &dir, &text, cfg.threads) {
        Ok(Report::Single(o)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&scales_json(&o.scales)).unwrap_or_default()
            );
            if let Some(note) = &o.deviation_note {
                println!("note: {note}");
            }
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Ok(Report::Sweep(r)) => {
            for p in &r.points {
                println!(
                    "{}: epsilon {:.4e}, median sup|D| {:.4e}{}",
                    p.name,
                    p.epsilon,
                    p.d_median,
                    p.error
                        .as_deref()
                        .map(|e| format!(" (failed: {e})"))
                        .unwrap_or_default()
                );
            }
            println!(
                "slope {:.3}, median non-increasing {}",
                r.slope, r.median_non_increasing
            );
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(FAILED)
        }
    }
}

fn list(json: bool) -> ExitCode {
    let lib = scenario_library();
    if lib.is_empty() {
        eprintln!("error: the scenario library is empty");
        return ExitCode::from(FAILED);
    }
    if json {
        let items: Vec<_> = lib
            .iter()
            .map(|e| serde_json::json!({ "name": e.name, "description": e.description }))
            .collect();
        println!("{}", serde_json::Value::Array(items));
    } else {
        let w = lib.iter().map(|e| e.name.len()).max().unwrap_or(0);
        for e in lib {
            println!("{:<w$}  {}", e.name, e.description);
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config } => run(&config),
        Command::Verify { config } => match load(&config) {
            Ok(_) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::ListScenarios { json } => list(json),
    }
}

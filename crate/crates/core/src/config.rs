//! Run configuration files (TOML) and their execution into a run directory.
//!
//! A config names exactly one of: a library scenario (`scenario`, optionally with
//! `size` and an `[overrides]` table), an inline `[definition]`, or a `[sweep]`.
//!
//! ```toml
//! units = "natural: hbar=m=1"
//! scenario = "free_gaussian"
//! size = "smoke"
//! output = "free"
//!
//! [overrides]
//! particles = 500
//! seed = 7
//! ```
//!
//! Relative `output` paths live under `$BOHM_OUTPUT_ROOT` (default `runs`); the
//! default output is the scenario or sweep name.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentPolicy;
use crate::experiments::{
    ensure_dir_target, lookup, run_scenario, run_sweep, write_json, write_run_dir, GridSpec, Job,
    Outcome, Scenario, Size, SweepResult, SweepSpec,
};
use crate::{Error, Result};

/// Environment variable overriding the root of relative output paths.
pub const OUTPUT_ROOT_VAR: &str = "BOHM_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";
pub const DEFAULT_UNITS: &str = "natural: hbar=m=1";

fn default_units() -> String {
    DEFAULT_UNITS.to_string()
}

/// Per-run changes applied on top of a library scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub grid: Option<GridSpec>,
    pub particles: Option<usize>,
    pub seed: Option<u64>,
    pub deltas: Option<Vec<f64>>,
    pub l_o: Option<f64>,
    pub environment: Option<EnvironmentPolicy>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) {
        if let Some(g) = self.grid {
            s.grid = g;
        }
        if let Some(n) = self.particles {
            s.particles = n;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(d) = &self.deltas {
            s.deltas = d.clone();
        }
        if let Some(l) = self.l_o {
            s.l_o = Some(l);
        }
        if let Some(e) = self.environment {
            s.environment = e;
        }
    }

    fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Unit convention of every physical quantity in the file.
    #[serde(default = "default_units")]
    pub units: String,
    pub scenario: Option<String>,
    pub size: Option<Size>,
    pub overrides: Option<Overrides>,
    pub definition: Option<Scenario>,
    pub sweep: Option<SweepSpec>,
    pub output: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    pub threads: Option<usize>,
}

/// What a run produced.
#[derive(Debug)]
pub enum Report {
    Single(Box<Outcome>),
    Sweep(SweepResult),
}

impl RunConfig {
    /// Parses TOML; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_toml(&text)?, text))
    }

    /// Checks the whole config and builds the job without computing anything.
    pub fn resolve(&self) -> Result<Job> {
        if self.units.trim().is_empty() {
            return Err(Error::config("units", "unit convention must not be empty"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        let chosen = [
            self.scenario.is_some(),
            self.definition.is_some(),
            self.sweep.is_some(),
        ];
        if chosen.iter().filter(|&&c| c).count() != 1 {
            return Err(Error::config(
                "scenario",
                "give exactly one of `scenario`, `[definition]` or `[sweep]`",
            ));
        }
        let library_only =
            self.size.is_some() || self.overrides.as_ref().is_some_and(|o| !o.is_empty());
        if library_only && self.scenario.is_none() {
            return Err(Error::config(
                "size",
                "`size` and `[overrides]` only apply to a library `scenario`",
            ));
        }
        let job = if let Some(name) = &self.scenario {
            let entry = lookup(name).map_err(|e| Error::config("scenario", e.to_string()))?;
            match entry.build(self.size.unwrap_or_default())? {
                Job::Single(mut s) => {
                    if let Some(o) = &self.overrides {
                        o.apply(&mut s);
                    }
                    Job::Single(s)
                }
                Job::Sweep(spec) => {
                    if self.overrides.is_some() {
                        return Err(Error::config(
                            "overrides",
                            "library sweeps take no overrides; use `[sweep]`",
                        ));
                    }
                    Job::Sweep(spec)
                }
            }
        } else if let Some(s) = &self.definition {
            Job::Single(s.clone())
        } else {
            Job::Sweep(self.sweep.clone().expect("one source is set"))
        };
        match &job {
            Job::Single(s) => s.validate()?,
            Job::Sweep(spec) => spec.validate()?,
        }
        Ok(job)
    }

    /// Output directory, relative paths resolved under `root`.
    pub fn output_dir_in(&self, root: &Path, job: &Job) -> PathBuf {
        let out = self
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from(job_name(job)));
        if out.is_absolute() {
            out
        } else {
            root.join(out)
        }
    }

    /// Output directory under `$BOHM_OUTPUT_ROOT` or `runs`.
    pub fn output_dir(&self, job: &Job) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
        self.output_dir_in(&root, job)
    }
}

fn job_name(job: &Job) -> String {
    match job {
        Job::Single(s) => s.name.clone(),
        Job::Sweep(spec) => format!(
            "sweep_{}",
            serde_json::to_value(spec.family)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default()
        ),
    }
}

/// Runs a resolved job on `threads` workers and writes `dir`. `config_text` is stored
/// verbatim so the run can be repeated from the directory alone.
pub fn execute(job: &Job, dir: &Path, config_text: &str, threads: Option<usize>) -> Result<Report> {
    ensure_dir_target(dir)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match job {
        Job::Single(s) => {
            info!("running {} into {}", s.name, dir.display());
            let o = run_scenario(s)?;
            write_run_dir(dir, &o, config_text)?;
            Ok(Report::Single(Box::new(o)))
        }
        Job::Sweep(spec) => {
            info!(
                "running a {}-point sweep into {}",
                spec.k0.len(),
                dir.display()
            );
            let r = run_sweep(spec)?;
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.snapshot"), config_text)?;
            r.write_csv(fs::File::create(dir.join("sweep.csv"))?)?;
            write_json(dir, "summary.json", &serde_json::to_value(&r)?)?;
            Ok(Report::Sweep(r))
        }
    })
}

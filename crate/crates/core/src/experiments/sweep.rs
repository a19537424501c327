//! Epsilon sweeps: one scenario family run at decreasing `lambda / L`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentPolicy;
use crate::quantum::{scale_report, Exceedance};
use crate::stats;
use crate::{Error, Result};

use super::run::run_scenario;
use super::scenario::{sweep_point, Scenario, Size, DEFAULT_DELTAS};

/// Smallest ensemble a sweep point may use.
pub const MIN_SWEEP_PARTICLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    /// Packet started at `x = -L` in `V = g4 x^4`, `L` from the region `[-24.5, 24.5]`.
    Quartic,
    /// Coherent-width packet from the centre of a harmonic trap, `epsilon = lambda / L_o`.
    HarmonicLo,
}

fn default_particles() -> usize {
    MIN_SWEEP_PARTICLES
}

fn default_deltas() -> Vec<f64> {
    DEFAULT_DELTAS.to_vec()
}

/// A family and the carrier wavenumbers driving `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub family: SweepFamily,
    pub k0: Vec<f64>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub environment: EnvironmentPolicy,
    #[serde(default)]
    pub size: Size,
}

impl SweepSpec {
    /// `k0 in {10, 20, 40, 80}` (`{0.5, 1, 2, 4}` or `{1, 2, 4, 8}` at smoke size).
    pub fn standard(family: SweepFamily, size: Size) -> Self {
        let k0 = match (size, family) {
            (Size::Full, _) => vec![10.0, 20.0, 40.0, 80.0],
            (Size::Smoke, SweepFamily::Quartic) => vec![0.5, 1.0, 2.0, 4.0],
            (Size::Smoke, SweepFamily::HarmonicLo) => vec![1.0, 2.0, 4.0, 8.0],
        };
        SweepSpec {
            family,
            k0,
            particles: MIN_SWEEP_PARTICLES,
            seed: 1,
            deltas: default_deltas(),
            environment: EnvironmentPolicy::Off,
            size,
        }
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        self.k0
            .iter()
            .map(|&k0| {
                let mut s = sweep_point(self.family, k0, self.size)?;
                s.particles = self.particles;
                s.seed = self.seed;
                s.deltas = self.deltas.clone();
                s.environment = self.environment;
                Ok(s)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k0.len() < 4 {
            return Err(Error::InvalidSweep(format!(
                "{} points given",
                self.k0.len()
            )));
        }
        if self.k0.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::config("sweep.k0", "wavenumbers must be positive"));
        }
        if self.particles < MIN_SWEEP_PARTICLES {
            return Err(Error::config(
                "sweep.particles",
                format!("at least {MIN_SWEEP_PARTICLES} particles per point"),
            ));
        }
        if self.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::config("sweep.deltas", "thresholds must be positive"));
        }
        for s in self.scenarios()? {
            s.validate()?;
        }
        Ok(())
    }
}

/// One sweep point; `error` is set when its run failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub name: String,
    pub epsilon: f64,
    pub lambda: f64,
    pub d_median: f64,
    pub d_p90: f64,
    pub d_p99: f64,
    pub exceedance: Vec<Exceedance>,
    pub l2_mean: f64,
    pub flagged_frac: f64,
    pub t_lpw_over_tau: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub deltas: Vec<f64>,
    /// Least-squares slope of `log d_median` against `log epsilon`.
    pub slope: f64,
    pub median_non_increasing: bool,
    pub median_strictly_decreasing: bool,
    /// Per delta: `P(sup|D| > delta)` non-increasing as `epsilon` decreases.
    pub exceedance_non_increasing: Vec<bool>,
}

impl SweepResult {
    pub fn p_exceed(&self, delta: f64) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| {
                p.exceedance
                    .iter()
                    .find(|e| e.delta == delta)
                    .map(|e| e.p_hat)
                    .unwrap_or(f64::NAN)
            })
            .collect()
    }

    /// `sweep.csv`: one row per point, slope and verdicts as trailing `#` lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "epsilon,d_median,d_p90,d_p99")?;
        for d in &self.deltas {
            write!(w, ",p_exceed_{d}")?;
        }
        writeln!(w, ",flagged_frac,t_lpw_over_tau")?;
        for p in &self.points {
            write!(
                w,
                "{:.10e},{:.10e},{:.10e},{:.10e}",
                p.epsilon, p.d_median, p.d_p90, p.d_p99
            )?;
            for d in &self.deltas {
                let v = p
                    .exceedance
                    .iter()
                    .find(|e| e.delta == *d)
                    .map(|e| e.p_hat)
                    .unwrap_or(f64::NAN);
                write!(w, ",{v}")?;
            }
            let lpw = p.t_lpw_over_tau.map(|r| r.to_string()).unwrap_or_default();
            writeln!(w, ",{},{lpw}", p.flagged_frac)?;
        }
        writeln!(w, "# slope={}", self.slope)?;
        writeln!(w, "# median_non_increasing={}", self.median_non_increasing)?;
        writeln!(
            w,
            "# median_strictly_decreasing={}",
            self.median_strictly_decreasing
        )?;
        Ok(())
    }
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

/// Runs every scenario (in parallel) and assembles the sweep.
///
/// `scenarios` must have at least 4 points with strictly decreasing `epsilon`; a point whose
/// run fails is recorded with its error and the sweep continues.
pub fn epsilon_sweep(scenarios: &[Scenario], deltas: &[f64]) -> Result<SweepResult> {
    if scenarios.len() < 4 {
        return Err(Error::InvalidSweep(format!(
            "{} points given",
            scenarios.len()
        )));
    }
    let eps: Vec<f64> = scenarios
        .iter()
        .map(|s| Ok(scale_report(&s.initial_wave()?, &s.potential, s.l_o)?.epsilon))
        .collect::<Result<_>>()?;
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidSweep(format!(
            "epsilon values {eps:?} are not strictly decreasing"
        )));
    }
    let points: Vec<SweepPoint> = scenarios
        .par_iter()
        .zip(&eps)
        .map(|(s, &epsilon)| {
            let mut s = s.clone();
            s.deltas = deltas.to_vec();
            let failed = |e: String| SweepPoint {
                name: s.name.clone(),
                epsilon,
                lambda: f64::NAN,
                d_median: f64::NAN,
                d_p90: f64::NAN,
                d_p99: f64::NAN,
                exceedance: Vec::new(),
                l2_mean: f64::NAN,
                flagged_frac: f64::NAN,
                t_lpw_over_tau: None,
                error: Some(e),
            };
            let o = match run_scenario(&s) {
                Ok(o) => o,
                Err(e) => return failed(e.to_string()),
            };
            let Some(d) = &o.deviation else {
                return failed(o.deviation_note.clone().unwrap_or_default());
            };
            SweepPoint {
                name: s.name.clone(),
                epsilon,
                lambda: o.scales.lambda,
                d_median: d.q50,
                d_p90: d.q90,
                d_p99: d.q99,
                exceedance: d.exceedance.clone(),
                l2_mean: d.l2_mean,
                flagged_frac: o.run.ensemble.flagged_count() as f64
                    / o.run.ensemble.n_particles() as f64,
                t_lpw_over_tau: o.lpw.ratio,
                error: None,
            }
        })
        .collect();

    let ok: Vec<&SweepPoint> = points.iter().filter(|p| p.error.is_none()).collect();
    let medians: Vec<f64> = ok.iter().map(|p| p.d_median).collect();
    let fit: Vec<(f64, f64)> = ok
        .iter()
        .filter(|p| p.d_median > 0.0)
        .map(|p| (p.epsilon.ln(), p.d_median.ln()))
        .collect();
    let slope = if fit.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        stats::slope(&x, &y)
    } else {
        f64::NAN
    };
    let all_ok = ok.len() == points.len();
    let exceedance_non_increasing = deltas
        .iter()
        .map(|&delta| {
            let v: Vec<f64> = ok
                .iter()
                .map(|p| {
                    p.exceedance
                        .iter()
                        .find(|e| e.delta == delta)
                        .map(|e| e.p_hat)
                        .unwrap_or(f64::NAN)
                })
                .collect();
            all_ok && non_increasing(&v)
        })
        .collect();
    Ok(SweepResult {
        median_non_increasing: all_ok && non_increasing(&medians),
        median_strictly_decreasing: all_ok && medians.windows(2).all(|w| w[1] < w[0]),
        exceedance_non_increasing,
        slope,
        deltas: deltas.to_vec(),
        points,
    })
}

/// Validates `spec`, builds its scenarios and runs [`epsilon_sweep`].
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    epsilon_sweep(&spec.scenarios()?, &spec.deltas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_points_is_rejected() {
        let mut spec = SweepSpec::standard(SweepFamily::Quartic, Size::Smoke);
        spec.k0.truncate(1);
        assert!(matches!(run_sweep(&spec), Err(Error::InvalidSweep(_))));
        let scen = SweepSpec::standard(SweepFamily::Quartic, Size::Smoke)
            .scenarios()
            .unwrap();
        assert!(matches!(
            epsilon_sweep(&scen[..1], &DEFAULT_DELTAS),
            Err(Error::InvalidSweep(_))
        ));
    }

    #[test]
    fn increasing_epsilon_is_rejected() {
        let mut scen = SweepSpec::standard(SweepFamily::HarmonicLo, Size::Smoke)
            .scenarios()
            .unwrap();
        scen.reverse();
        assert!(matches!(
            epsilon_sweep(&scen, &DEFAULT_DELTAS),
            Err(Error::InvalidSweep(_))
        ));
    }

    #[test]
    fn small_ensembles_are_rejected() {
        let mut spec = SweepSpec::standard(SweepFamily::Quartic, Size::Smoke);
        spec.particles = 10;
        assert!(matches!(spec.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn csv_layout() {
        let r = SweepResult {
            points: vec![SweepPoint {
                name: "p".into(),
                epsilon: 0.1,
                lambda: 1.0,
                d_median: 0.2,
                d_p90: 0.3,
                d_p99: 0.4,
                exceedance: vec![Exceedance {
                    delta: 0.1,
                    p_hat: 0.5,
                }],
                l2_mean: 0.2,
                flagged_frac: 0.0,
                t_lpw_over_tau: Some(0.0),
                error: None,
            }],
            deltas: vec![0.1],
            slope: 1.0,
            median_non_increasing: true,
            median_strictly_decreasing: true,
            exceedance_non_increasing: vec![true],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epsilon,d_median,d_p90,d_p99,p_exceed_0.1,flagged_frac,t_lpw_over_tau"
        );
        assert!(text.contains("# slope=1"));
    }
}

//! Running a scenario end to end and writing its run directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::bohm::{equivariance_test, sample_equilibrium};
use crate::environment::{integrate_with_environment, EnvironmentRun};
use crate::field::{WaveField, DEFAULT_NODE_FLOOR};
use crate::localplane::{free_evolve, local_structure, DEFAULT_LPW_THRESHOLD};
use crate::potential::PotentialKind;
use crate::quantum::{deviation_with, scale_report, DeviationRecord, QuantumField, ScaleReport};
use crate::{Error, Result};

use super::deviation::{classical_partners, trajectory_deviation, TrajectoryDeviation};
use super::scenario::Scenario;

/// Local-plane-wave verdicts over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpwTimeline {
    pub times: Vec<f64>,
    pub scores: Vec<f64>,
    pub is_lpw: Vec<bool>,
    /// Earliest recorded time (from the start) after which every verdict is positive.
    pub t_lpw: Option<f64>,
    pub tau: f64,
    pub ratio: Option<f64>,
}

/// Verdicts for each wave in `snapshots` and the formation time relative to `tau`.
pub fn lpw_timeline(snapshots: &[WaveField], threshold: f64, tau: f64) -> Result<LpwTimeline> {
    let verdicts: Vec<(f64, bool)> = snapshots
        .par_iter()
        .map(|s| local_structure(s, threshold).map(|l| (l.score, l.is_lpw)))
        .collect::<Result<_>>()?;
    let t0 = snapshots.first().map(|s| s.time()).unwrap_or(0.0);
    let times: Vec<f64> = snapshots.iter().map(|s| s.time() - t0).collect();
    let mut t_lpw = None;
    for (i, (_, ok)) in verdicts.iter().enumerate().rev() {
        if !ok {
            break;
        }
        t_lpw = Some(times[i]);
    }
    Ok(LpwTimeline {
        ratio: t_lpw.map(|t| t / tau),
        times,
        scores: verdicts.iter().map(|v| v.0).collect(),
        is_lpw: verdicts.iter().map(|v| v.1).collect(),
        t_lpw,
        tau,
    })
}

/// [`lpw_timeline`] of exact free evolution of `psi0` sampled at `times`.
pub fn lpw_formation(psi0: &WaveField, times: &[f64], threshold: f64) -> Result<LpwTimeline> {
    let snaps: Vec<WaveField> = times.par_iter().map(|&t| free_evolve(psi0, t)).collect();
    let tau = psi0.hbar() / crate::field::kinetic_energy(psi0);
    lpw_timeline(&snaps, threshold, tau)
}

/// Everything computed for one scenario.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: Scenario,
    pub scales: ScaleReport,
    pub run: EnvironmentRun,
    pub deviation: Option<DeviationRecord>,
    /// Why `deviation` is missing.
    pub deviation_note: Option<String>,
    pub trajectory: TrajectoryDeviation,
    /// KS distance per recorded time while a single branch exists.
    pub ks: Vec<Option<f64>>,
    pub lpw: LpwTimeline,
    pub norm_drift: f64,
}

/// Representative wave per recorded time: the single branch, or the one guiding most particles.
fn dominant_waves(run: &EnvironmentRun) -> Vec<WaveField> {
    run.snapshots
        .iter()
        .zip(&run.branch_history)
        .map(|(branches, of)| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &b in of {
                *counts.entry(b).or_default() += 1;
            }
            let best = counts
                .iter()
                .max_by_key(|(id, c)| (**c, std::cmp::Reverse(**id)))
                .map(|(id, _)| *id);
            branches
                .iter()
                .find(|(id, _)| Some(*id) == best)
                .unwrap_or(&branches[0])
                .1
                .clone()
        })
        .collect()
}

/// `D` along every trajectory, each particle read against the branch guiding it.
pub fn branch_deviation(
    run: &EnvironmentRun,
    scales: &ScaleReport,
    deltas: &[f64],
) -> Result<DeviationRecord> {
    let fields: Vec<BTreeMap<usize, QuantumField>> = run
        .snapshots
        .par_iter()
        .map(|branches| {
            branches
                .iter()
                .map(|(id, w)| QuantumField::new(w, DEFAULT_NODE_FLOOR).map(|q| (*id, q)))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    deviation_with(&run.ensemble, scales, deltas, |p, k, x| {
        fields[k].get(&run.branch_history[k][p])?.force(x).ok()
    })
}

/// Validates, evolves and analyses `s`.
pub fn run_scenario(s: &Scenario) -> Result<Outcome> {
    s.validate()?;
    let psi0 = s.initial_wave()?;
    let scales = scale_report(&psi0, &s.potential, s.l_o)?;
    let start = sample_equilibrium(&psi0, s.particles, s.seed)?;
    let run = integrate_with_environment(
        &psi0,
        &s.potential,
        &s.plan,
        start,
        s.seed,
        s.environment,
        s.gap_floor,
    )?;

    let (deviation, deviation_note) = if scales.quadratic_case {
        (
            None,
            Some("epsilon = 0: L is infinite and no L_o was given".to_string()),
        )
    } else {
        match branch_deviation(&run, &scales, &s.deltas) {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };

    let length = if let PotentialKind::InfiniteWell { width, .. } = s.potential.kind {
        width
    } else if scales.length().is_finite() {
        scales.length()
    } else {
        psi0.grid().length()
    };
    let partners = classical_partners(&run.ensemble, &psi0, &s.potential, &s.plan)?;
    let trajectory = trajectory_deviation(&run.ensemble, &partners, length)?;

    let ks = run
        .snapshots
        .par_iter()
        .enumerate()
        .map(|(k, b)| (b.len() == 1).then(|| equivariance_test(&run.ensemble, &b[0].1, k)))
        .collect();
    let waves = dominant_waves(&run);
    let lpw = lpw_timeline(&waves, DEFAULT_LPW_THRESHOLD, scales.tau)?;
    let norm_drift = waves
        .iter()
        .map(|w| (w.norm_sq() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        scenario: s.clone(),
        scales,
        run,
        deviation,
        deviation_note,
        trajectory,
        ks,
        lpw,
        norm_drift,
    })
}

/// `scales.json` content: the report plus the infinite-`L` flag.
pub fn scales_json(scales: &ScaleReport) -> serde_json::Value {
    serde_json::json!({
        "lambda": scales.lambda,
        "L": if scales.l.is_finite() { serde_json::json!(scales.l) } else { serde_json::json!("inf") },
        "L_infinite": !scales.l.is_finite(),
        "L_o": scales.l_o,
        "epsilon": scales.epsilon,
        "quadratic_case": scales.quadratic_case,
        "v": scales.v,
        "T": if scales.t.is_finite() { serde_json::json!(scales.t) } else { serde_json::json!("inf") },
        "tau": scales.tau,
        "tau_over_T": if scales.t.is_finite() { serde_json::json!(scales.tau_over_t()) } else { serde_json::Value::Null },
        "E_kin": scales.e_kin,
        "mass": scales.mass,
    })
}

/// Summary written to `summary.json`.
pub fn summary_json(o: &Outcome) -> serde_json::Value {
    let ks_max = o.ks.iter().flatten().cloned().fold(f64::NAN, f64::max);
    let ks_crit = crate::stats::ks_critical_1pct(o.run.ensemble.n_particles());
    let t_end = o.scenario.total_time();
    serde_json::json!({
        "scenario": o.scenario.name,
        "particles": o.run.ensemble.n_particles(),
        "flagged": o.run.ensemble.flagged_count(),
        "t_end": t_end,
        "t_end_over_T": if o.scales.t.is_finite() { serde_json::json!(t_end / o.scales.t) } else { serde_json::Value::Null },
        "deviation": o.deviation.as_ref().map(|d| d.summary_json()),
        "deviation_note": o.deviation_note,
        "trajectory": {
            "length": o.trajectory.length,
            "q50": o.trajectory.q50,
            "q90": o.trajectory.q90,
            "q99": o.trajectory.q99,
            "excluded": o.trajectory.excluded,
        },
        "equivariance": {
            "ks_max": if ks_max.is_nan() { serde_json::Value::Null } else { serde_json::json!(ks_max) },
            "ks_critical_1pct": ks_crit,
        },
        "local_plane_wave": {
            "t_lpw": o.lpw.t_lpw,
            "tau": o.lpw.tau,
            "t_lpw_over_tau": o.lpw.ratio,
            "final_score": o.lpw.scores.last(),
        },
        "environment": {
            "policy": o.scenario.environment,
            "events": o.run.events.len(),
            "deferred": o.run.deferred,
            "final_branches": o.run.snapshots.last().map(|b| b.len()),
        },
        "norm_drift": o.norm_drift,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub(crate) fn write_json(dir: &Path, name: &str, v: &serde_json::Value) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    Ok(())
}

/// Recorded indices written under `snapshots/`: at most `count`, first and last included.
fn snapshot_indices(total: usize, count: usize) -> Vec<usize> {
    if total <= count {
        return (0..total).collect();
    }
    let mut v: Vec<usize> = (0..count).map(|i| i * (total - 1) / (count - 1)).collect();
    v.dedup();
    v
}

/// Number of wave snapshots written per run.
pub const SNAPSHOT_FILES: usize = 11;

/// Writes the run directory. `config_text` is stored verbatim as `config.snapshot`.
pub fn write_run_dir(dir: &Path, o: &Outcome, config_text: &str) -> Result<()> {
    fs::create_dir_all(dir.join("snapshots"))?;
    fs::write(dir.join("config.snapshot"), config_text)?;
    write_json(dir, "scales.json", &scales_json(&o.scales))?;
    {
        let mut w = create(dir, "deviation.csv")?;
        match &o.deviation {
            Some(d) => d.write_csv(&mut w)?,
            None => writeln!(w, "t_prime,particle_id,D")?,
        }
    }
    {
        let mut w = create(dir, "trajectory_deviation.csv")?;
        writeln!(w, "particle_id,sup_deviation")?;
        for (id, s) in o.trajectory.particle_ids.iter().zip(&o.trajectory.sup) {
            writeln!(w, "{id},{s:.10e}")?;
        }
    }
    o.run.ensemble.write_csv(create(dir, "ensemble.csv")?)?;
    o.run.write_events_jsonl(create(dir, "events.jsonl")?)?;
    write_json(dir, "summary.json", &summary_json(o))?;
    for k in snapshot_indices(o.run.snapshots.len(), SNAPSHOT_FILES) {
        let branches = &o.run.snapshots[k];
        for (id, w) in branches {
            let name = if branches.len() == 1 {
                format!("t_{k}.csv")
            } else {
                format!("t_{k}_b{id}.csv")
            };
            w.write_csv(create(&dir.join("snapshots"), &name)?)?;
        }
    }
    Ok(())
}

/// Error for a path that already holds something other than a directory.
pub(crate) fn ensure_dir_target(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "{} exists and is not a directory",
            dir.display()
        )));
    }
    Ok(())
}

//! Trajectory-level comparisons with Newtonian motion.

use rayon::prelude::*;
use serde::Serialize;

use crate::bohm::{velocity, EnsembleRun, ParticleFlag, TrajectoryEnsemble};
use crate::classical::{classical_integrate, ClassicalPath};
use crate::field::{WaveField, DEFAULT_NODE_FLOOR};
use crate::potential::PotentialSpec;
use crate::propagator::{evolve, StepPlan};
use crate::quantum::QuantumField;
use crate::stats::quantile_sorted;
use crate::{Error, Result};

/// Newtonian partner of every particle, started at `(X(0), m v(psi0, X(0)))`.
pub fn classical_partners(
    ensemble: &TrajectoryEnsemble,
    psi0: &WaveField,
    pot: &PotentialSpec,
    plan: &StepPlan,
) -> Result<Vec<ClassicalPath>> {
    let m = psi0.mass();
    ensemble
        .positions
        .par_iter()
        .map(|path| {
            let x0 = path[0];
            let v0 = velocity(psi0, x0)?.value;
            Ok(classical_integrate(x0, m * v0, m, pot, plan))
        })
        .collect()
}

/// `|X(t) - x_cl(t)| / length` per particle and recorded time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryDeviation {
    pub length: f64,
    pub times: Vec<f64>,
    /// Ensemble indices of the unflagged particles compared.
    pub particle_ids: Vec<usize>,
    /// `series[i][k]` for particle `particle_ids[i]` at `times[k]`.
    pub series: Vec<Vec<f64>>,
    /// `sup_t` of the normalised deviation per particle.
    pub sup: Vec<f64>,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub excluded: usize,
}

impl TrajectoryDeviation {
    /// Normalised deviations of all compared particles at recorded time `k`.
    pub fn at(&self, k: usize) -> Vec<f64> {
        self.series.iter().map(|s| s[k]).collect()
    }

    pub fn quantile_at(&self, k: usize, q: f64) -> f64 {
        let mut v = self.at(k);
        v.sort_by(|a, b| a.total_cmp(b));
        quantile_sorted(&v, q)
    }

    /// Index of the recorded time closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &tk) in self.times.iter().enumerate() {
            if (tk - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }
}

/// Per-particle `sup_t |X(t) - x_cl(t)| / length`, flagged particles excluded.
pub fn trajectory_deviation(
    ensemble: &TrajectoryEnsemble,
    partners: &[ClassicalPath],
    length: f64,
) -> Result<TrajectoryDeviation> {
    if partners.len() != ensemble.n_particles() {
        return Err(Error::LengthMismatch {
            expected: ensemble.n_particles(),
            got: partners.len(),
        });
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "normalising length {length} must be positive"
        )));
    }
    let mut particle_ids = Vec::new();
    let mut series = Vec::new();
    for (i, (path, cl)) in ensemble.positions.iter().zip(partners).enumerate() {
        if ensemble.flags[i] != ParticleFlag::Ok {
            continue;
        }
        if cl.x.len() != path.len() {
            return Err(Error::LengthMismatch {
                expected: path.len(),
                got: cl.x.len(),
            });
        }
        particle_ids.push(i);
        series.push(
            path.iter()
                .zip(&cl.x)
                .map(|(x, c)| (x - c).abs() / length)
                .collect::<Vec<f64>>(),
        );
    }
    let sup: Vec<f64> = series
        .iter()
        .map(|s| s.iter().cloned().fold(0.0, f64::max))
        .collect();
    let mut sorted = sup.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (q50, q90, q99) = if sorted.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            quantile_sorted(&sorted, 0.5),
            quantile_sorted(&sorted, 0.9),
            quantile_sorted(&sorted, 0.99),
        )
    };
    Ok(TrajectoryDeviation {
        length,
        times: ensemble.times.clone(),
        excluded: ensemble.n_particles() - particle_ids.len(),
        particle_ids,
        series,
        sup,
        q50,
        q90,
        q99,
    })
}

/// Outcome of comparing `m X''` with `F + F_Q` along every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonClosure {
    /// Unflagged trajectories with a valid `F_Q` at every interior time.
    pub checked: usize,
    /// Trajectories within tolerance at every interior time.
    pub passed: usize,
    pub fraction: f64,
    /// Median over trajectories of `max_t |m X'' - F - F_Q| / tolerance`.
    pub median_excess: f64,
}

/// Second differences of recorded positions against `F(X) + F_Q(X, t)`.
///
/// At each interior time the tolerance is `max(rel_tol (|F| + |F_Q|), 2 |d4 X| m / (12 h^2))`;
/// the second term is twice the leading truncation error `h^2 X'''' / 12` of the central
/// second difference, estimated from the largest fourth difference `d4 X` centred on the
/// time or its two neighbours (a single one can vanish where `X''''` changes sign).
pub fn newton_closure(
    run: &EnsembleRun,
    pot: &PotentialSpec,
    rel_tol: f64,
) -> Result<NewtonClosure> {
    let ens = &run.ensemble;
    let nt = ens.times.len();
    if nt < 7 {
        return Err(Error::InvalidArgument(
            "closure needs at least 7 recorded times".into(),
        ));
    }
    let h = ens.times[1] - ens.times[0];
    let m = run.snapshots[0].mass();
    let fields: Vec<QuantumField> = run
        .snapshots
        .par_iter()
        .map(|s| QuantumField::new(s, DEFAULT_NODE_FLOOR))
        .collect::<Result<_>>()?;
    let results: Vec<Option<f64>> = (0..ens.n_particles())
        .into_par_iter()
        .map(|i| {
            if ens.flags[i] != ParticleFlag::Ok {
                return None;
            }
            let x = &ens.positions[i];
            let d4: Vec<f64> = (2..nt - 2)
                .map(|k| (x[k + 2] - 4.0 * x[k + 1] + 6.0 * x[k] - 4.0 * x[k - 1] + x[k - 2]).abs())
                .collect();
            let mut worst: f64 = 0.0;
            for k in 3..nt - 3 {
                let acc = (x[k + 1] - 2.0 * x[k] + x[k - 1]) / (h * h);
                let d4 = d4[k - 3].max(d4[k - 2]).max(d4[k - 1]);
                let f = pot.force(x[k]);
                let fq = fields[k].force(x[k]).ok()?;
                let tol = (rel_tol * (f.abs() + fq.abs())).max(2.0 * m * d4 / (12.0 * h * h));
                let excess = (m * acc - f - fq).abs() / tol.max(f64::MIN_POSITIVE);
                worst = worst.max(excess);
            }
            Some(worst)
        })
        .collect();
    let mut excess: Vec<f64> = results.into_iter().flatten().collect();
    excess.sort_by(|a, b| a.total_cmp(b));
    let checked = excess.len();
    let passed = excess.iter().filter(|&&e| e <= 1.0).count();
    Ok(NewtonClosure {
        checked,
        passed,
        fraction: if checked > 0 {
            passed as f64 / checked as f64
        } else {
            0.0
        },
        median_excess: if checked > 0 {
            quantile_sorted(&excess, 0.5)
        } else {
            f64::NAN
        },
    })
}

/// Wave moment `<X>(t)` against the Newtonian path of the initial moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentDeviation {
    /// `Delta sup|V'''| / sup|V'|` at `t = 0`, with `Delta` the position variance.
    pub condition: f64,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub classical: Vec<f64>,
    /// `max_t |<X> - x_cl|`.
    pub max_deviation: f64,
}

pub fn moment_deviation(
    psi0: &WaveField,
    pot: &PotentialSpec,
    plan: &StepPlan,
) -> Result<MomentDeviation> {
    let snaps = evolve(psi0, pot, plan)?;
    let path = classical_integrate(
        psi0.mean_position(),
        psi0.mean_momentum(),
        psi0.mass(),
        pot,
        plan,
    );
    let (s1, s3) = pot.derivative_sups(pot.region);
    let condition = if s1 > 0.0 {
        psi0.position_variance() * s3 / s1
    } else {
        0.0
    };
    let mean: Vec<f64> = snaps.iter().map(|s| s.mean_position()).collect();
    let max_deviation = mean
        .iter()
        .zip(&path.x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(MomentDeviation {
        condition,
        times: snaps.iter().map(|s| s.time()).collect(),
        mean,
        classical: path.x,
        max_deviation,
    })
}

//! Guidance law, equilibrium sampling and trajectory ensembles.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{classical_integrate, ClassicalPath};
use crate::field::{Grid, WaveField, DEFAULT_NODE_FLOOR};
use crate::interp;
use crate::potential::PotentialSpec;
use crate::propagator::{warn_boundary, Propagator, StepPlan};
use crate::spectral;
use crate::stats;
use crate::{Error, Result};

/// Per-particle status, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleFlag {
    Ok,
    Clamped,
    NearNode,
}

impl ParticleFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParticleFlag::Ok => "ok",
            ParticleFlag::Clamped => "clamped",
            ParticleFlag::NearNode => "near_node",
        }
    }
}

/// Guidance velocity at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub value: f64,
    pub flag: ParticleFlag,
}

/// `psi` and `psi'` on the grid, ready for off-grid evaluation.
#[derive(Debug, Clone)]
pub struct GuidanceField {
    grid: Grid,
    hbar_over_m: f64,
    psi: Vec<Complex64>,
    dpsi: Vec<Complex64>,
    threshold: f64,
}

impl GuidanceField {
    pub fn new(psi: &WaveField, node_floor: f64) -> Self {
        GuidanceField {
            grid: *psi.grid(),
            hbar_over_m: psi.hbar() / psi.mass(),
            psi: psi.amplitudes().to_vec(),
            dpsi: spectral::derivative(psi.amplitudes(), psi.grid(), 1),
            threshold: node_floor * psi.max_abs(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Interpolated `(psi, psi')` at `x`.
    pub fn sample(&self, x: f64) -> (Complex64, Complex64) {
        (
            interp::cubic(&self.psi, &self.grid, x),
            interp::cubic(&self.dpsi, &self.grid, x),
        )
    }

    pub fn velocity(&self, x: f64, v_clamp: f64) -> Velocity {
        let (p, d) = self.sample(x);
        velocity_from(p, d, self.hbar_over_m, self.threshold, v_clamp)
    }

    /// Velocity from `(1-a) * self + a * next`, interpolated at `x`.
    pub fn velocity_between(&self, next: &GuidanceField, a: f64, x: f64, v_clamp: f64) -> Velocity {
        let (p0, d0) = self.sample(x);
        let (p1, d1) = next.sample(x);
        let p = p0 * (1.0 - a) + p1 * a;
        let d = d0 * (1.0 - a) + d1 * a;
        let threshold = self.threshold * (1.0 - a) + next.threshold * a;
        velocity_from(p, d, self.hbar_over_m, threshold, v_clamp)
    }
}

fn velocity_from(
    p: Complex64,
    d: Complex64,
    hbar_over_m: f64,
    threshold: f64,
    v_clamp: f64,
) -> Velocity {
    let raw = if p.norm_sqr() > 0.0 {
        hbar_over_m * (d / p).im
    } else {
        0.0
    };
    if p.norm() < threshold {
        let sign = if raw < 0.0 { -1.0 } else { 1.0 };
        let value = if v_clamp.is_finite() {
            sign * v_clamp
        } else {
            raw
        };
        return Velocity {
            value,
            flag: ParticleFlag::NearNode,
        };
    }
    if raw.abs() > v_clamp {
        return Velocity {
            value: raw.signum() * v_clamp,
            flag: ParticleFlag::Clamped,
        };
    }
    Velocity {
        value: raw,
        flag: ParticleFlag::Ok,
    }
}

/// `(hbar/m) Im(psi'/psi)` at `x` with the default node floor and no clamp.
pub fn velocity(psi: &WaveField, x: f64) -> Result<Velocity> {
    let g = psi.grid();
    if !g.contains(x) {
        return Err(Error::OutOfDomain {
            x,
            lo: g.x_min(),
            hi: g.x_max(),
        });
    }
    Ok(GuidanceField::new(psi, DEFAULT_NODE_FLOOR).velocity(x, f64::INFINITY))
}

/// Normalized trapezoidal CDF of `|psi|^2` at the grid points.
pub fn density_cdf(psi: &WaveField) -> Vec<f64> {
    let rho = psi.density();
    let mut cdf = Vec::with_capacity(rho.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for w in rho.windows(2) {
        acc += 0.5 * (w[0] + w[1]);
        cdf.push(acc);
    }
    let total = acc;
    cdf.iter_mut().for_each(|c| *c /= total);
    cdf
}

fn cdf_at(grid: &Grid, cdf: &[f64], x: f64) -> f64 {
    let s = (x - grid.x_min()) / grid.dx();
    if s <= 0.0 {
        return 0.0;
    }
    let j = s.floor() as usize;
    if j + 1 >= cdf.len() {
        return 1.0;
    }
    let f = s - j as f64;
    cdf[j] * (1.0 - f) + cdf[j + 1] * f
}

fn invert_cdf(grid: &Grid, cdf: &[f64], u: f64) -> f64 {
    let j = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1) - 1;
    let (c0, c1) = (cdf[j], cdf[j + 1]);
    let f = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
    grid.x(j) + f.clamp(0.0, 1.0) * grid.dx()
}

/// Uniform draw for `(seed, index)`, independent of evaluation order.
pub fn particle_uniform(seed: u64, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.gen::<f64>()
}

/// Inverse-CDF samples from `|psi|^2`.
pub fn sample_equilibrium(psi: &WaveField, n: usize, seed: u64) -> Result<Vec<f64>> {
    sample_equilibrium_with(psi, n, seed, false)
}

/// With `stratified`, particle `i` draws from the `i`-th of `n` equal-probability strata.
pub fn sample_equilibrium_with(
    psi: &WaveField,
    n: usize,
    seed: u64,
    stratified: bool,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    let cdf = density_cdf(psi);
    let grid = psi.grid();
    Ok((0..n)
        .map(|i| {
            let u = particle_uniform(seed, i);
            let u = if stratified {
                (i as f64 + u) / n as f64
            } else {
                u
            };
            invert_cdf(grid, &cdf, u)
        })
        .collect())
}

/// Positions of every particle at the recorded times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryEnsemble {
    /// `positions[particle][time_index]`.
    pub positions: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub seed: u64,
    pub flags: Vec<ParticleFlag>,
}

impl TrajectoryEnsemble {
    pub fn n_particles(&self) -> usize {
        self.positions.len()
    }

    pub fn at(&self, t_index: usize) -> Vec<f64> {
        self.positions.iter().map(|p| p[t_index]).collect()
    }

    pub fn flagged_count(&self) -> usize {
        self.flags
            .iter()
            .filter(|f| **f != ParticleFlag::Ok)
            .count()
    }

    /// Fraction of particle pairs whose order changed between the first and last record.
    pub fn order_violations(&self) -> f64 {
        let n = self.n_particles();
        if n < 2 {
            return 0.0;
        }
        let first = self.at(0);
        let last = self.at(self.times.len() - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| first[a].total_cmp(&first[b]));
        // count inversions of `last` in initial order (O(n^2) on small ensembles, sampled otherwise)
        let stride = (n / 2000).max(1);
        let sel: Vec<usize> = idx.iter().copied().step_by(stride).collect();
        let mut bad = 0usize;
        let mut pairs = 0usize;
        for i in 0..sel.len() {
            for j in i + 1..sel.len() {
                pairs += 1;
                if last[sel[i]] > last[sel[j]] + 1e-9 {
                    bad += 1;
                }
            }
        }
        bad as f64 / pairs.max(1) as f64
    }

    /// Writes `t,particle_id,x,flag` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,particle_id,x,flag")?;
        for (ti, t) in self.times.iter().enumerate() {
            for (pid, path) in self.positions.iter().enumerate() {
                writeln!(
                    w,
                    "{t:.10e},{pid},{:.17e},{}",
                    path[ti],
                    self.flags[pid].as_str()
                )?;
            }
        }
        Ok(())
    }
}

/// Joint wave / particle evolution.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub ensemble: TrajectoryEnsemble,
    /// Wave snapshots at `ensemble.times`.
    pub snapshots: Vec<WaveField>,
}

/// Particle clamp speed `dx / dt_traj`.
pub fn clamp_speed(grid: &Grid, dt_traj: f64) -> f64 {
    grid.dx() / dt_traj
}

/// RK4 step of every particle on the field linearly interpolated in time between `a` and `b`.
pub fn advance_particles(
    a: &GuidanceField,
    b: &GuidanceField,
    positions: &mut [f64],
    flags: &mut [ParticleFlag],
    dt: f64,
    v_clamp: f64,
) {
    positions
        .par_iter_mut()
        .zip(flags.par_iter_mut())
        .for_each(|(x, flag)| {
            let v = |s: f64, y: f64| a.velocity_between(b, s, y, v_clamp);
            let k1 = v(0.0, *x);
            let k2 = v(0.5, *x + 0.5 * dt * k1.value);
            let k3 = v(0.5, *x + 0.5 * dt * k2.value);
            let k4 = v(1.0, *x + dt * k3.value);
            *x += dt / 6.0 * (k1.value + 2.0 * k2.value + 2.0 * k3.value + k4.value);
            let worst = k1.flag.max(k2.flag).max(k3.flag).max(k4.flag);
            *flag = (*flag).max(worst);
        });
}

/// Evolves `psi0` on `plan` and carries `n_particles` equilibrium samples along.
pub fn integrate_ensemble(
    psi0: &WaveField,
    pot: &PotentialSpec,
    plan: &StepPlan,
    n_particles: usize,
    seed: u64,
) -> Result<EnsembleRun> {
    let start = sample_equilibrium(psi0, n_particles, seed)?;
    integrate_from(psi0, pot, plan, start, seed)
}

/// Same as [`integrate_ensemble`] with given initial positions.
pub fn integrate_from(
    psi0: &WaveField,
    pot: &PotentialSpec,
    plan: &StepPlan,
    start: Vec<f64>,
    seed: u64,
) -> Result<EnsembleRun> {
    let plan = plan.validated()?;
    let grid = *psi0.grid();
    let prop = Propagator::new(grid, psi0.units(), pot, plan.wave_dt())?;
    let v_clamp = clamp_speed(&grid, plan.dt);
    let n = start.len();
    let mut x = start;
    let mut flags = vec![ParticleFlag::Ok; n];
    let mut positions: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let mut times = vec![psi0.time()];
    let mut snapshots = vec![psi0.clone()];

    let mut amps = psi0.amplitudes().to_vec();
    let mut field = GuidanceField::new(psi0, DEFAULT_NODE_FLOOR);
    for step in 1..=plan.n_steps {
        prop.advance_in_place(&mut amps, plan.wave_substeps);
        let t = psi0.time() + step as f64 * plan.dt;
        let psi = WaveField::from_parts_unchecked(grid, amps.clone(), t, psi0.units());
        let next = GuidanceField::new(&psi, DEFAULT_NODE_FLOOR);
        advance_particles(&field, &next, &mut x, &mut flags, plan.dt, v_clamp);
        field = next;
        if step % plan.snapshot_stride == 0 {
            times.push(t);
            for (p, &xi) in positions.iter_mut().zip(&x) {
                p.push(xi);
            }
            snapshots.push(psi);
        }
    }
    if let Some(last) = snapshots.last() {
        warn_boundary(last);
    }
    Ok(EnsembleRun {
        ensemble: TrajectoryEnsemble {
            positions,
            times,
            seed,
            flags,
        },
        snapshots,
    })
}

/// KS distance between ensemble positions at `t_index` and the CDF of `|psi_t|^2`.
pub fn equivariance_test(ensemble: &TrajectoryEnsemble, psi_t: &WaveField, t_index: usize) -> f64 {
    let cdf = density_cdf(psi_t);
    let grid = *psi_t.grid();
    stats::ks_distance(&ensemble.at(t_index), |x| cdf_at(&grid, &cdf, x))
}

/// KS distance at every recorded time.
pub fn ks_curve(run: &EnsembleRun) -> Vec<f64> {
    (0..run.snapshots.len())
        .map(|i| equivariance_test(&run.ensemble, &run.snapshots[i], i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EhrenfestRecord {
    pub times: Vec<f64>,
    /// `<X>(t)` from `|psi_t|^2`.
    pub mean: Vec<f64>,
    /// `<X^2> - <X>^2`.
    pub covariance: Vec<f64>,
    /// Ensemble-average position, the Monte-Carlo estimate of `mean`.
    pub ensemble_mean: Vec<f64>,
    /// Newtonian path from `(<X>(t0), <P>(t0))`.
    pub classical_reference: Vec<f64>,
    /// `Delta(t) sup|V'''| / sup|V'|` on the potential's region.
    pub condition_ratio: Vec<f64>,
}

impl EhrenfestRecord {
    pub fn max_deviation(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.classical_reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Moments of the run against the classical path of its initial moments.
///
/// `plan` must be the plan the run was produced with.
pub fn ehrenfest_record(
    run: &EnsembleRun,
    pot: &PotentialSpec,
    plan: &StepPlan,
) -> EhrenfestRecord {
    let psi0 = &run.snapshots[0];
    let path: ClassicalPath = classical_integrate(
        psi0.mean_position(),
        psi0.mean_momentum(),
        psi0.mass(),
        pot,
        plan,
    );
    let (s1, s3) = pot.derivative_sups(pot.region);
    let ratio = if s1 > 0.0 { s3 / s1 } else { 0.0 };
    let covariance: Vec<f64> = run
        .snapshots
        .iter()
        .map(|s| s.position_variance())
        .collect();
    EhrenfestRecord {
        times: run.ensemble.times.clone(),
        mean: run.snapshots.iter().map(|s| s.mean_position()).collect(),
        ensemble_mean: (0..run.ensemble.times.len())
            .map(|i| stats::mean(&run.ensemble.at(i)))
            .collect(),
        condition_ratio: covariance.iter().map(|d| d * ratio).collect(),
        covariance,
        classical_reference: path.x,
    }
}

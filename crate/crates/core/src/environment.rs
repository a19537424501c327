//! Effective environment: detect spatially separated components of the wave
//! and collapse onto the one holding the actual particle.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bohm::{
    advance_particles, clamp_speed, integrate_from, EnsembleRun, GuidanceField, ParticleFlag,
    TrajectoryEnsemble,
};
use crate::field::{Grid, WaveField, DEFAULT_NODE_FLOOR};
use crate::localplane::{local_structure, DEFAULT_LPW_THRESHOLD};
use crate::potential::PotentialSpec;
use crate::propagator::{warn_boundary, Propagator, StepPlan};
use crate::{Error, Result};

pub const DEFAULT_GAP_FLOOR: f64 = 1e-4;
/// Roll-off of the collapse window, in grid points.
pub const COLLAPSE_ROLLOFF: usize = 8;
/// Gaps of at most this many grid points are isolated interference nodes and always bridged.
pub const NODE_GAP_POINTS: usize = 2;

/// A maximal run of grid points with `|psi|^2 >= gap_floor * max |psi|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Component {
    pub lo: usize,
    pub hi: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    /// `int |psi|^2` over the component.
    pub weight: f64,
}

impl Component {
    pub fn contains(&self, grid: &Grid, x: f64) -> bool {
        let h = 0.5 * grid.dx();
        x >= self.x_lo - h && x <= self.x_hi + h
    }
}

/// Separated components of `psi`; gaps narrower than the local wavelength at their edges are bridged.
pub fn detect_components(psi: &WaveField, gap_floor: f64) -> Vec<Component> {
    let grid = *psi.grid();
    let rho = psi.density();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let cut = gap_floor * peak;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (j, &r) in rho.iter().enumerate() {
        match (r >= cut, start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                runs.push((s, j - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, rho.len() - 1));
    }
    if runs.len() > 1 {
        let k = local_structure(psi, DEFAULT_LPW_THRESHOLD)
            .map(|ls| ls.k_field)
            .unwrap_or_else(|_| vec![f64::NAN; rho.len()]);
        let mut merged = vec![runs[0]];
        for &(lo, hi) in &runs[1..] {
            let last = merged.last_mut().expect("non-empty");
            let kk = k[last.1].abs().max(k[lo].abs());
            let gap = (lo - last.1) as f64 * grid.dx();
            // without a wave vector shorter than the box the only fringes are isolated nodes
            let node = lo - last.1 - 1 <= NODE_GAP_POINTS;
            let fringe = kk.is_finite() && kk * grid.length() > 2.0 * PI && gap < 2.0 * PI / kk;
            if node || fringe {
                last.1 = hi;
            } else {
                merged.push((lo, hi));
            }
        }
        runs = merged;
    }
    runs.into_iter()
        .map(|(lo, hi)| Component {
            lo,
            hi,
            x_lo: grid.x(lo),
            x_hi: grid.x(hi),
            weight: rho[lo..=hi].iter().sum::<f64>() * grid.dx(),
        })
        .collect()
}

/// Index of the component holding `x`. Points beyond the outermost components belong to
/// them; points in a gap between two components belong to none.
pub fn component_of(components: &[Component], grid: &Grid, x: f64) -> Option<usize> {
    let first = components.first()?;
    let last = components.len() - 1;
    if x < first.x_lo {
        return Some(0);
    }
    if x > components[last].x_hi {
        return Some(last);
    }
    components.iter().position(|c| c.contains(grid, x))
}

/// `psi` windowed onto component `index` of `components`, renormalised.
///
/// The window is 1 on the component and rolls off over 8 dx with a raised cosine;
/// the outermost components keep everything out to the grid edge.
pub fn collapse_onto(psi: &WaveField, components: &[Component], index: usize) -> Result<WaveField> {
    let grid = *psi.grid();
    let c = components[index];
    let lo = if index == 0 {
        f64::NEG_INFINITY
    } else {
        c.x_lo
    };
    let hi = if index + 1 == components.len() {
        f64::INFINITY
    } else {
        c.x_hi
    };
    let r = COLLAPSE_ROLLOFF as f64 * grid.dx();
    let amps: Vec<Complex64> = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let x = grid.x(j);
            let d = if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            };
            let w = if d >= r {
                0.0
            } else {
                0.5 * (1.0 + (PI * d / r).cos())
            };
            v * w
        })
        .collect();
    WaveField::new(grid, amps, psi.time(), psi.units())
}

/// Collapse onto the component containing `x_particle`.
pub fn collapse(psi: &WaveField, x_particle: f64, components: &[Component]) -> Result<WaveField> {
    if components.len() < 2 {
        return Err(Error::SingleComponent(components.len()));
    }
    let i = component_of(components, psi.grid(), x_particle)
        .ok_or(Error::ParticleInGap { x: x_particle })?;
    collapse_onto(psi, components, i)
}

/// When the environment acts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentPolicy {
    #[default]
    Off,
    /// Collapse at the first snapshot (including the initial one) showing two or more components.
    AtSeparation,
    /// Check for components `rate` times per unit time.
    Periodic { rate: f64 },
}

pub fn environment_schedule(policy: EnvironmentPolicy) -> EnvironmentPolicy {
    policy
}

/// One collapse of one branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseEvent {
    pub time: f64,
    /// Branch that was split.
    pub branch: usize,
    pub intervals: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
    /// Interval indices that received particles, one new branch each.
    pub selected: Vec<usize>,
    pub new_branches: Vec<usize>,
    /// `weights[selected[i]]`.
    pub norm_of_selected: Vec<f64>,
    /// Particles per interval.
    pub particle_counts: Vec<usize>,
    pub particle_positions: Vec<f64>,
}

/// Trajectories guided by per-branch collapsed waves.
#[derive(Debug, Clone)]
pub struct EnvironmentRun {
    pub ensemble: TrajectoryEnsemble,
    pub events: Vec<CollapseEvent>,
    /// Branch of each particle at the end of the run.
    pub branch_of: Vec<usize>,
    /// `snapshots[t]` lists `(branch id, wave)` for every live branch at recorded time `t`.
    pub snapshots: Vec<Vec<(usize, WaveField)>>,
    /// `branch_history[t][p]`: branch guiding particle `p` at recorded time `t`.
    pub branch_history: Vec<Vec<usize>>,
    /// Number of checks postponed because a particle sat in a gap.
    pub deferred: usize,
}

impl EnvironmentRun {
    fn from_plain(run: EnsembleRun) -> Self {
        let n = run.ensemble.n_particles();
        EnvironmentRun {
            ensemble: run.ensemble,
            events: Vec::new(),
            branch_of: vec![0; n],
            branch_history: vec![vec![0; n]; run.snapshots.len()],
            snapshots: run.snapshots.into_iter().map(|s| vec![(0, s)]).collect(),
            deferred: 0,
        }
    }

    pub fn write_events_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

struct Branch {
    id: usize,
    amps: Vec<Complex64>,
    field: GuidanceField,
    particles: Vec<usize>,
}

/// Outcome of a component check on one branch.
enum Split {
    Keep,
    Defer,
    Into(Box<CollapseEvent>, Vec<Branch>),
}

fn try_split(
    branch: &Branch,
    psi: &WaveField,
    x: &[f64],
    gap_floor: f64,
    next_id: &mut usize,
) -> Result<Split> {
    let comps = detect_components(psi, gap_floor);
    if comps.len() < 2 {
        return Ok(Split::Keep);
    }
    let grid = psi.grid();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &p in &branch.particles {
        match component_of(&comps, grid, x[p]) {
            Some(c) => groups.entry(c).or_default().push(p),
            None => return Ok(Split::Defer),
        }
    }
    let mut counts = vec![0; comps.len()];
    let mut children = Vec::new();
    let mut selected = Vec::new();
    let mut new_ids = Vec::new();
    for (c, members) in groups {
        counts[c] = members.len();
        let wave = collapse_onto(psi, &comps, c)?;
        let id = *next_id;
        *next_id += 1;
        selected.push(c);
        new_ids.push(id);
        children.push(Branch {
            id,
            field: GuidanceField::new(&wave, DEFAULT_NODE_FLOOR),
            amps: wave.into_amplitudes(),
            particles: members,
        });
    }
    let event = CollapseEvent {
        time: psi.time(),
        branch: branch.id,
        intervals: comps.iter().map(|c| (c.x_lo, c.x_hi)).collect(),
        weights: comps.iter().map(|c| c.weight).collect(),
        norm_of_selected: selected.iter().map(|&c| comps[c].weight).collect(),
        selected,
        new_branches: new_ids,
        particle_counts: counts,
        particle_positions: branch.particles.iter().map(|&p| x[p]).collect(),
    };
    Ok(Split::Into(Box::new(event), children))
}

/// Joint evolution with the environment acting on per-branch wave clones.
///
/// With [`EnvironmentPolicy::Off`] this is exactly [`integrate_from`].
pub fn integrate_with_environment(
    psi0: &WaveField,
    pot: &PotentialSpec,
    plan: &StepPlan,
    start: Vec<f64>,
    seed: u64,
    policy: EnvironmentPolicy,
    gap_floor: f64,
) -> Result<EnvironmentRun> {
    let period = match policy {
        EnvironmentPolicy::Off => None,
        EnvironmentPolicy::Periodic { rate } if !(rate > 0.0) => None,
        EnvironmentPolicy::Periodic { rate } => Some(1.0 / rate),
        EnvironmentPolicy::AtSeparation => Some(f64::NAN),
    };
    let Some(period) = period else {
        return Ok(EnvironmentRun::from_plain(integrate_from(
            psi0, pot, plan, start, seed,
        )?));
    };
    let at_separation = period.is_nan();

    let plan = plan.validated()?;
    let grid = *psi0.grid();
    let units = psi0.units();
    let prop = Propagator::new(grid, units, pot, plan.wave_dt())?;
    let v_clamp = clamp_speed(&grid, plan.dt);
    let n = start.len();
    let mut x = start;
    let mut flags = vec![ParticleFlag::Ok; n];
    let mut positions: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let t0 = psi0.time();
    let mut times = vec![t0];
    let mut events = Vec::new();
    let mut deferred = 0;
    let mut next_id = 1;
    let mut branches = vec![Branch {
        id: 0,
        amps: psi0.amplitudes().to_vec(),
        field: GuidanceField::new(psi0, DEFAULT_NODE_FLOOR),
        particles: (0..n).collect(),
    }];

    let mut check = |branches: &mut Vec<Branch>,
                     t: f64,
                     x: &[f64],
                     events: &mut Vec<CollapseEvent>,
                     deferred: &mut usize|
     -> Result<()> {
        let mut out = Vec::with_capacity(branches.len());
        for b in branches.drain(..) {
            let psi = WaveField::from_parts_unchecked(grid, b.amps.clone(), t, units);
            match try_split(&b, &psi, x, gap_floor, &mut next_id)? {
                Split::Keep => out.push(b),
                Split::Defer => {
                    *deferred += 1;
                    out.push(b);
                }
                Split::Into(e, children) => {
                    events.push(*e);
                    out.extend(children);
                }
            }
        }
        *branches = out;
        Ok(())
    };
    let snapshot = |branches: &[Branch], t: f64| -> Vec<(usize, WaveField)> {
        branches
            .iter()
            .map(|b| {
                (
                    b.id,
                    WaveField::from_parts_unchecked(grid, b.amps.clone(), t, units),
                )
            })
            .collect()
    };

    if at_separation {
        check(&mut branches, t0, &x, &mut events, &mut deferred)?;
    }
    let membership = |branches: &[Branch]| -> Vec<usize> {
        let mut of = vec![0; n];
        for b in branches {
            for &p in &b.particles {
                of[p] = b.id;
            }
        }
        of
    };
    let mut snapshots = vec![snapshot(&branches, t0)];
    let mut branch_history = vec![membership(&branches)];
    let mut next_trigger = t0 + period;

    for step in 1..=plan.n_steps {
        let t = t0 + step as f64 * plan.dt;
        for b in branches.iter_mut() {
            prop.advance_in_place(&mut b.amps, plan.wave_substeps);
            let psi = WaveField::from_parts_unchecked(grid, b.amps.clone(), t, units);
            let next = GuidanceField::new(&psi, DEFAULT_NODE_FLOOR);
            let mut xs: Vec<f64> = b.particles.iter().map(|&p| x[p]).collect();
            let mut fs: Vec<ParticleFlag> = b.particles.iter().map(|&p| flags[p]).collect();
            advance_particles(&b.field, &next, &mut xs, &mut fs, plan.dt, v_clamp);
            for (k, &p) in b.particles.iter().enumerate() {
                x[p] = xs[k];
                flags[p] = fs[k];
            }
            b.field = next;
        }
        let recorded = step % plan.snapshot_stride == 0;
        let due = if at_separation {
            recorded
        } else if t >= next_trigger - 1e-12 * plan.dt {
            while next_trigger <= t + 1e-12 * plan.dt {
                next_trigger += period;
            }
            true
        } else {
            false
        };
        if due {
            check(&mut branches, t, &x, &mut events, &mut deferred)?;
        }
        if recorded {
            times.push(t);
            for (p, &xi) in positions.iter_mut().zip(&x) {
                p.push(xi);
            }
            snapshots.push(snapshot(&branches, t));
            branch_history.push(membership(&branches));
        }
    }
    for b in &branches {
        warn_boundary(&WaveField::from_parts_unchecked(
            grid,
            b.amps.clone(),
            t0,
            units,
        ));
    }
    let branch_of = membership(&branches);
    Ok(EnvironmentRun {
        ensemble: TrajectoryEnsemble {
            positions,
            times,
            seed,
            flags,
        },
        events,
        branch_of,
        snapshots,
        branch_history,
        deferred,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bohm::{integrate_ensemble, sample_equilibrium};
    use crate::field::{make_gaussian, superpose};

    fn grid() -> Grid {
        Grid::new(-20.0, 20.0, 512).unwrap()
    }

    fn two_packets(sep: f64, k0: f64) -> WaveField {
        let g = grid();
        let a = make_gaussian(g, -sep / 2.0, 1.0, -k0).unwrap();
        let b = make_gaussian(g, sep / 2.0, 1.0, k0).unwrap();
        superpose(&[a, b]).unwrap()
    }

    #[test]
    fn component_counts() {
        let single = make_gaussian(grid(), 0.0, 1.0, 0.0).unwrap();
        assert_eq!(detect_components(&single, DEFAULT_GAP_FLOOR).len(), 1);
        let apart = two_packets(10.0, 0.0);
        let comps = detect_components(&apart, DEFAULT_GAP_FLOOR);
        assert_eq!(comps.len(), 2);
        assert!(comps[0].x_hi < comps[1].x_lo);
        assert!((comps[0].weight - 0.5).abs() < 1e-3);
        let overlapping = two_packets(1.0, 0.0);
        assert_eq!(detect_components(&overlapping, DEFAULT_GAP_FLOOR).len(), 1);
        // counter-propagating overlap: fringe nodes are narrower than a wavelength
        let fringes = two_packets(1.0, 4.0);
        assert_eq!(detect_components(&fringes, DEFAULT_GAP_FLOOR).len(), 1);
        // real standing wave: no phase gradient, nodes are single-point gaps
        let standing = two_packets(0.0, 4.0);
        assert_eq!(detect_components(&standing, DEFAULT_GAP_FLOOR).len(), 1);
    }

    #[test]
    fn collapse_keeps_the_particle_side() {
        let psi = two_packets(14.0, 2.0);
        let comps = detect_components(&psi, DEFAULT_GAP_FLOOR);
        let left = collapse(&psi, -7.3, &comps).unwrap();
        assert!((left.norm_sq() - 1.0).abs() < 1e-12);
        let g = psi.grid();
        let c = comps[0];
        let inside: f64 = left.density()[c.lo..=c.hi].iter().sum::<f64>() * g.dx();
        assert!(inside >= 0.999);
        assert!(matches!(
            collapse(&psi, 0.0, &comps),
            Err(Error::ParticleInGap { .. })
        ));
        assert!(matches!(
            collapse(&psi, -7.0, &comps[..1]),
            Err(Error::SingleComponent(1))
        ));
    }

    #[test]
    fn velocity_away_from_the_cut_is_unchanged() {
        let psi = two_packets(12.0, 2.0);
        let comps = detect_components(&psi, DEFAULT_GAP_FLOOR);
        let right = collapse(&psi, 6.0, &comps).unwrap();
        let before = GuidanceField::new(&psi, DEFAULT_NODE_FLOOR);
        let after = GuidanceField::new(&right, DEFAULT_NODE_FLOOR);
        // local wavelength is 2 pi / 2; stay 5 of them inside the window
        let lambda = PI;
        let c = comps[1];
        let mut x = c.x_lo + 5.0 * lambda;
        while x < c.x_hi - 5.0 * lambda {
            let v0 = before.velocity(x, f64::INFINITY).value;
            let v1 = after.velocity(x, f64::INFINITY).value;
            assert!((v0 - v1).abs() <= 1e-6 * v0.abs());
            x += 0.37;
        }
    }

    #[test]
    fn branch_fractions_follow_born_weights() {
        let psi = two_packets(12.0, 0.0);
        let n = 10_000;
        let start = sample_equilibrium(&psi, n, 17).unwrap();
        let plan = StepPlan::new(1e-4, 0, 1).unwrap();
        let pot = PotentialSpec::free((-20.0, 20.0));
        let run = integrate_with_environment(
            &psi,
            &pot,
            &plan,
            start,
            17,
            EnvironmentPolicy::AtSeparation,
            DEFAULT_GAP_FLOOR,
        )
        .unwrap();
        assert_eq!(run.events.len(), 1, "deferred {}", run.deferred);
        let e = &run.events[0];
        assert_eq!(e.particle_counts.iter().sum::<usize>(), n);
        let left = e.particle_counts[0] as f64 / n as f64;
        assert!(
            (left - 0.5).abs() < 3.0 / (n as f64).sqrt(),
            "left fraction {left}"
        );
        assert!(
            (left - e.weights[0] / (e.weights[0] + e.weights[1])).abs() < 4.0 / (n as f64).sqrt()
        );
        let mut buf = Vec::new();
        run.write_events_jsonl(&mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(line.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        assert_eq!(v["selected"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn off_policy_matches_bare_integration() {
        let g = Grid::new(-20.0, 20.0, 256).unwrap();
        let psi = make_gaussian(g, 0.0, 1.0, 1.0).unwrap();
        let pot = PotentialSpec::free((-20.0, 20.0));
        let plan = StepPlan::new(1e-3, 100, 10).unwrap();
        let bare = integrate_ensemble(&psi, &pot, &plan, 50, 4).unwrap();
        let start = sample_equilibrium(&psi, 50, 4).unwrap();
        for policy in [
            EnvironmentPolicy::Off,
            EnvironmentPolicy::Periodic { rate: 0.0 },
        ] {
            let env = integrate_with_environment(
                &psi,
                &pot,
                &plan,
                start.clone(),
                4,
                policy,
                DEFAULT_GAP_FLOOR,
            )
            .unwrap();
            assert_eq!(env.ensemble, bare.ensemble);
            assert!(env.events.is_empty());
        }
    }

    #[test]
    fn separating_packets_collapse_once_per_branch() {
        let g = Grid::new(-40.0, 40.0, 1024).unwrap();
        let a = make_gaussian(g, -1.0, 1.0, -6.0).unwrap();
        let b = make_gaussian(g, 1.0, 1.0, 6.0).unwrap();
        let psi = superpose(&[a, b]).unwrap();
        let pot = PotentialSpec::free((-40.0, 40.0));
        let plan = StepPlan::new(1e-3, 2500, 50)
            .unwrap()
            .with_substeps(2)
            .unwrap();
        let start = sample_equilibrium(&psi, 400, 9).unwrap();
        let run = integrate_with_environment(
            &psi,
            &pot,
            &plan,
            start,
            9,
            EnvironmentPolicy::AtSeparation,
            DEFAULT_GAP_FLOOR,
        )
        .unwrap();
        assert_eq!(
            run.events.len(),
            1,
            "{:?}",
            run.events.iter().map(|e| e.time).collect::<Vec<_>>()
        );
        assert!(run.events[0].time > 0.0);
        // collapsed branches stay on their side
        let last = run.ensemble.times.len() - 1;
        for (p, path) in run.ensemble.positions.iter().enumerate() {
            let side = path[last].signum();
            let branch = run.branch_of[p];
            let wave = &run.snapshots[last]
                .iter()
                .find(|(id, _)| *id == branch)
                .unwrap()
                .1;
            assert_eq!(wave.mean_position().signum(), side);
        }
    }
}

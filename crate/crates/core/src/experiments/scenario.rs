//! Scenario definitions and the named library.

use serde::{Deserialize, Serialize};

use crate::environment::{EnvironmentPolicy, DEFAULT_GAP_FLOOR};
use crate::field::{make_gaussian_in, superpose, Grid, Units, WaveField};
use crate::potential::{PotentialKind, PotentialSpec};
use crate::propagator::{step_phase, StepPlan};
use crate::quantum::scale_report;
use crate::{Error, Result};

use super::sweep::{SweepFamily, SweepSpec};

/// Default exceedance thresholds for `P(D > delta)`.
pub const DEFAULT_DELTAS: [f64; 4] = [0.01, 0.03, 0.1, 0.3];

/// Resolution class of a library scenario; `Smoke` runs in well under a second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Size {
    Smoke,
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.x_min, self.x_max, self.n)
    }
}

/// Gaussian packet `exp(-(x-c)^2 / 4 sigma^2 + i k0 x)`; a scenario's wave is their normalised sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub center: f64,
    pub sigma: f64,
    pub k0: f64,
}

fn default_gap_floor() -> f64 {
    DEFAULT_GAP_FLOOR
}

fn default_deltas() -> Vec<f64> {
    DEFAULT_DELTAS.to_vec()
}

/// Everything needed for one joint wave / ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub units: Units,
    pub packets: Vec<Packet>,
    pub potential: PotentialSpec,
    pub plan: StepPlan,
    #[serde(default)]
    pub environment: EnvironmentPolicy,
    #[serde(default = "default_gap_floor")]
    pub gap_floor: f64,
    pub particles: usize,
    #[serde(default)]
    pub seed: u64,
    /// User length for potentials with `L = inf`.
    #[serde(default)]
    pub l_o: Option<f64>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

impl Scenario {
    pub fn initial_wave(&self) -> Result<WaveField> {
        let grid = self.grid.build()?;
        let parts = self
            .packets
            .iter()
            .map(|p| make_gaussian_in(grid, p.center, p.sigma, p.k0, self.units))
            .collect::<Result<Vec<_>>>()?;
        superpose(&parts)
    }

    pub fn total_time(&self) -> f64 {
        self.plan.total_time()
    }

    /// Checks every precondition a run depends on; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build().map_err(|e| {
            match self.grid.n.is_power_of_two() && self.grid.n >= 8 {
                true => Error::config("grid.x_max", e.to_string()),
                false => Error::config("grid.n", e.to_string()),
            }
        })?;
        if !(self.units.hbar > 0.0 && self.units.mass > 0.0) {
            return Err(Error::config("units", "hbar and mass must be positive"));
        }
        if self.packets.is_empty() {
            return Err(Error::config("packets", "at least one packet is required"));
        }
        for (i, p) in self.packets.iter().enumerate() {
            make_gaussian_in(grid, p.center, p.sigma, p.k0, self.units).map_err(|e| {
                let field = match e {
                    Error::SigmaUnderresolved { .. } => "sigma",
                    _ => "center",
                };
                Error::config(format!("packets[{i}].{field}"), e.to_string())
            })?;
        }
        let (lo, hi) = self.potential.region;
        if !(hi > lo) {
            return Err(Error::config(
                "potential.region",
                "region must satisfy lo < hi",
            ));
        }
        if let PotentialKind::InfiniteWell {
            width,
            height,
            edge,
        } = self.potential.kind
        {
            if !(width > 0.0 && height > 0.0 && edge > 0.0) {
                return Err(Error::config(
                    "potential",
                    "well width, height and edge must be positive",
                ));
            }
        }
        let plan = self.plan;
        if !(plan.dt > 0.0 && plan.dt.is_finite()) {
            return Err(Error::config("plan.dt", "must be positive"));
        }
        if plan.snapshot_stride == 0 {
            return Err(Error::config("plan.snapshot_stride", "must be >= 1"));
        }
        if plan.wave_substeps == 0 {
            return Err(Error::config("plan.wave_substeps", "must be >= 1"));
        }
        if plan.n_steps == 0 {
            return Err(Error::config("plan.n_steps", "must be >= 1"));
        }
        let phase = step_phase(&grid, self.units, &self.potential, plan.wave_dt());
        if phase > 0.5 {
            return Err(Error::config(
                "plan.dt",
                Error::StepTooLarge {
                    dt: plan.wave_dt(),
                    phase,
                }
                .to_string(),
            ));
        }
        if let EnvironmentPolicy::Periodic { rate } = self.environment {
            if !rate.is_finite() {
                return Err(Error::config("environment.rate", "must be finite"));
            }
        }
        if !(self.gap_floor > 0.0 && self.gap_floor < 1.0) {
            return Err(Error::config("gap_floor", "must lie in (0, 1)"));
        }
        if self.particles == 0 {
            return Err(Error::config("particles", "must be >= 1"));
        }
        if let Some(l) = self.l_o {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config("l_o", "must be positive and finite"));
            }
        }
        if self.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::config("deltas", "thresholds must be positive"));
        }
        Ok(())
    }
}

/// A library entry builds either a single run or a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Single(Scenario),
    Sweep(SweepSpec),
}

pub struct LibraryEntry {
    pub name: &'static str,
    pub description: &'static str,
    build: fn(Size) -> Result<Job>,
}

impl LibraryEntry {
    pub fn build(&self, size: Size) -> Result<Job> {
        (self.build)(size)
    }
}

impl std::fmt::Debug for LibraryEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LibraryEntry")
            .field("name", &self.name)
            .finish()
    }
}

fn single(s: Result<Scenario>) -> Result<Job> {
    s.map(Job::Single)
}

static LIBRARY: &[LibraryEntry] = &[
    LibraryEntry {
        name: "free_gaussian",
        description: "free Gaussian packet at rest, equivariance and spreading trajectories",
        build: |s| single(free_gaussian(s)),
    },
    LibraryEntry {
        name: "coherent_harmonic",
        description: "displaced coherent state in a harmonic trap over one period",
        build: |s| single(coherent_harmonic(s)),
    },
    LibraryEntry {
        name: "quartic_packet",
        description: "packet released from rest in a weak quartic well",
        build: |s| single(quartic_packet(s)),
    },
    LibraryEntry {
        name: "two_packet_well",
        description: "counter-propagating packets from the centre of a box, past the first caustic",
        build: |s| single(two_packet_well(5.0, s)),
    },
    LibraryEntry {
        name: "two_packet_well_env",
        description: "packets launched apart in a box with collapse at separation",
        build: |s| single(two_packet_well_launched(EnvironmentPolicy::AtSeparation, s)),
    },
    LibraryEntry {
        name: "two_packet_free",
        description: "overlapping counter-propagating free packets forming local plane waves",
        build: |s| single(two_packet_free(s)),
    },
    LibraryEntry {
        name: "dispersed_lpw",
        description: "moving free packet dispersed into a local plane wave",
        build: |s| single(dispersed_lpw(s)),
    },
    LibraryEntry {
        name: "ehrenfest_narrow",
        description: "narrow fast packet in a quartic well, Ehrenfest condition satisfied",
        build: |s| single(ehrenfest_pair(s).map(|p| p.0)),
    },
    LibraryEntry {
        name: "ehrenfest_wide",
        description: "packet as wide as the potential scale, Ehrenfest condition violated",
        build: |s| single(ehrenfest_pair(s).map(|p| p.1)),
    },
    LibraryEntry {
        name: "sweep_quartic",
        description: "epsilon sweep over k0 in the quartic potential",
        build: |s| Ok(Job::Sweep(SweepSpec::standard(SweepFamily::Quartic, s))),
    },
    LibraryEntry {
        name: "sweep_harmonic_Lo",
        description: "epsilon sweep over k0 in the harmonic trap with a user length L_o",
        build: |s| Ok(Job::Sweep(SweepSpec::standard(SweepFamily::HarmonicLo, s))),
    },
];

pub fn scenario_library() -> &'static [LibraryEntry] {
    LIBRARY
}

pub fn lookup(name: &str) -> Result<&'static LibraryEntry> {
    LIBRARY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

/// Builds the named single-run scenario.
pub fn scenario(name: &str, size: Size) -> Result<Scenario> {
    match lookup(name)?.build(size)? {
        Job::Single(s) => Ok(s),
        Job::Sweep(_) => Err(Error::InvalidArgument(format!(
            "`{name}` is a sweep, not a single run"
        ))),
    }
}

/// Plan covering `[0, t_end]` with about `snapshots` recorded intervals.
pub fn plan_for(t_end: f64, dt: f64, wave_substeps: usize, snapshots: usize) -> Result<StepPlan> {
    let n_steps = ((t_end / dt).round() as usize).max(1);
    let stride = (n_steps / snapshots.max(1)).max(1);
    StepPlan::new(dt, n_steps, stride)?.with_substeps(wave_substeps)
}

/// Smallest substep count keeping the split step within its phase limit (with 10% margin).
pub fn substeps_for(grid: &Grid, units: Units, pot: &PotentialSpec, dt: f64) -> usize {
    let phase = step_phase(grid, units, pot, dt);
    ((phase / 0.45).ceil() as usize).max(1)
}

#[allow(clippy::too_many_arguments)]
fn build(
    name: &str,
    description: &str,
    grid: GridSpec,
    units: Units,
    packets: Vec<Packet>,
    potential: PotentialSpec,
    t_end: f64,
    dt: f64,
    snapshots: usize,
    particles: usize,
) -> Result<Scenario> {
    let g = grid.build()?;
    let substeps = substeps_for(&g, units, &potential, dt);
    Ok(Scenario {
        name: name.into(),
        description: description.into(),
        grid,
        units,
        packets,
        potential,
        plan: plan_for(t_end, dt, substeps, snapshots)?,
        environment: EnvironmentPolicy::Off,
        gap_floor: DEFAULT_GAP_FLOOR,
        particles,
        seed: 1,
        l_o: None,
        deltas: default_deltas(),
    })
}

fn particles(size: Size, full: usize) -> usize {
    match size {
        Size::Smoke => 100,
        Size::Full => full,
    }
}

/// `hbar = m = sigma0 = 1`, at rest, free, `t in [0, 10]`.
pub fn free_gaussian(size: Size) -> Result<Scenario> {
    let (grid, sigma, t_end) = match size {
        Size::Full => (
            GridSpec {
                x_min: -50.0,
                x_max: 50.0,
                n: 1024,
            },
            1.0,
            10.0,
        ),
        Size::Smoke => (
            GridSpec {
                x_min: -40.0,
                x_max: 40.0,
                n: 128,
            },
            2.0,
            4.0,
        ),
    };
    build(
        "free_gaussian",
        "free Gaussian packet at rest",
        grid,
        Units::default(),
        vec![Packet {
            center: 0.0,
            sigma,
            k0: 0.0,
        }],
        PotentialSpec::free((grid.x_min, grid.x_max)),
        t_end,
        5e-3,
        100,
        particles(size, 10_000),
    )
}

/// `omega = 1`, coherent width `sqrt(hbar / 2 m omega)`, displaced to `x0 = 2`, one period;
/// `L_o = 10 x0`.
pub fn coherent_harmonic(size: Size) -> Result<Scenario> {
    let n = match size {
        Size::Full => 512,
        Size::Smoke => 128,
    };
    let grid = GridSpec {
        x_min: -16.0,
        x_max: 16.0,
        n,
    };
    let period = 2.0 * std::f64::consts::PI;
    let mut s = build(
        "coherent_harmonic",
        "displaced coherent state in a harmonic trap",
        grid,
        Units::default(),
        vec![Packet {
            center: 2.0,
            sigma: 0.5f64.sqrt(),
            k0: 0.0,
        }],
        PotentialSpec::harmonic(1.0, 1.0, (-16.0, 16.0)),
        period,
        period / 2000.0,
        100,
        particles(size, 2000),
    )?;
    s.l_o = Some(20.0);
    Ok(s)
}

/// `V = 0.01 x^4`, `sigma = 1`, released from rest at `x = -4`.
pub fn quartic_packet(size: Size) -> Result<Scenario> {
    // n = 2048 and h = 4e-3 between records keep the cubic-interpolation noise in
    // second differences of the trajectories below the closure tolerance
    let (n, t_end, snapshots) = match size {
        Size::Full => (2048, 4.0, 1000),
        Size::Smoke => (128, 1.0, 250),
    };
    let grid = GridSpec {
        x_min: -16.0,
        x_max: 16.0,
        n,
    };
    build(
        "quartic_packet",
        "packet released from rest in a quartic well",
        grid,
        Units::default(),
        vec![Packet {
            center: -4.0,
            sigma: 1.0,
            k0: 0.0,
        }],
        PotentialSpec::quartic(0.01, (-8.0, 8.0)),
        t_end,
        2e-3,
        snapshots,
        particles(size, 1000),
    )
}

/// Parameters of the two-packet box construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellPair {
    pub width: f64,
    pub hbar: f64,
    /// Packet momentum `p = hbar k0`.
    pub momentum: f64,
    pub sigma0: f64,
    /// Packets start at `+-offset`, moving away from the centre.
    pub offset: f64,
    pub n: usize,
    pub t_end: f64,
    pub dt: f64,
}

impl WellPair {
    /// `t_c` from free flight at `p / m`: out to the wall and back to the middle.
    pub fn predicted_caustic_time(&self) -> f64 {
        (self.width - self.offset) / self.momentum
    }
}

/// Builds the box scenario; the wall height follows the packet energy.
pub fn well_pair(
    name: &str,
    w: WellPair,
    environment: EnvironmentPolicy,
    size: Size,
) -> Result<Scenario> {
    let half = w.width / 2.0 + 1.0;
    let grid = GridSpec {
        x_min: -half,
        x_max: half,
        n: w.n,
    };
    let units = Units {
        hbar: w.hbar,
        mass: 1.0,
    };
    let k0 = w.momentum / w.hbar;
    let e_kin = w.hbar * w.hbar * (k0 * k0 + 1.0 / (4.0 * w.sigma0 * w.sigma0)) / 2.0;
    let g = grid.build()?;
    let potential = PotentialSpec::infinite_well(w.width, e_kin, &g);
    let mut s = build(
        name,
        "two packets in an infinite well",
        grid,
        units,
        vec![
            Packet {
                center: -w.offset,
                sigma: w.sigma0,
                k0: -k0,
            },
            Packet {
                center: w.offset,
                sigma: w.sigma0,
                k0,
            },
        ],
        potential,
        w.t_end,
        w.dt,
        ((w.t_end / 0.01).round() as usize).max(10),
        particles(size, 1000),
    )?;
    s.environment = environment;
    Ok(s)
}

/// The box of width 20 with packets starting in the middle (`W = 20`, `p = 5` gives `t_c = 4`).
pub fn two_packet_well_params(momentum: f64, size: Size) -> WellPair {
    match size {
        Size::Full => WellPair {
            width: 20.0,
            hbar: 0.1,
            momentum,
            sigma0: 0.4,
            offset: 0.0,
            n: if momentum > 7.5 { 2048 } else { 1024 },
            t_end: 1.25 * 20.0 / momentum,
            dt: 5e-3 / momentum,
        },
        Size::Smoke => WellPair {
            width: 20.0,
            hbar: 0.5,
            momentum,
            sigma0: 0.8,
            offset: 0.0,
            n: 128,
            t_end: 1.0,
            dt: 1e-2,
        },
    }
}

pub fn two_packet_well(momentum: f64, size: Size) -> Result<Scenario> {
    well_pair(
        "two_packet_well",
        two_packet_well_params(momentum, size),
        EnvironmentPolicy::Off,
        size,
    )
}

/// Packets launched apart from `+-4` with `p = 5`, run to `2 t_c`.
pub fn two_packet_well_launched_params(size: Size) -> WellPair {
    let mut w = two_packet_well_params(5.0, size);
    w.offset = 4.0;
    w.sigma0 = 0.8;
    match size {
        Size::Full => {
            w.t_end = 2.0 * w.predicted_caustic_time();
            // Fringe crossings during the bounces need a clamp speed ~ 8x the packet speed.
            w.dt /= 8.0;
        }
        Size::Smoke => w.offset = 3.0,
    }
    w
}

pub fn two_packet_well_launched(environment: EnvironmentPolicy, size: Size) -> Result<Scenario> {
    let name = match environment {
        EnvironmentPolicy::Off => "two_packet_well_launched",
        _ => "two_packet_well_env",
    };
    well_pair(
        name,
        two_packet_well_launched_params(size),
        environment,
        size,
    )
}

/// Free packets `sigma0 = 1`, `k0 = +-8` on top of each other; `tau = hbar / E_kin ~ 0.031`.
pub fn two_packet_free(size: Size) -> Result<Scenario> {
    let (grid, k0, t_end) = match size {
        Size::Full => (
            GridSpec {
                x_min: -20.0,
                x_max: 20.0,
                n: 1024,
            },
            8.0,
            0.6,
        ),
        Size::Smoke => (
            GridSpec {
                x_min: -16.0,
                x_max: 16.0,
                n: 128,
            },
            2.0,
            0.5,
        ),
    };
    build(
        "two_packet_free",
        "overlapping counter-propagating free packets",
        grid,
        Units::default(),
        vec![
            Packet {
                center: 0.0,
                sigma: 1.0,
                k0: -k0,
            },
            Packet {
                center: 0.0,
                sigma: 1.0,
                k0,
            },
        ],
        PotentialSpec::free((grid.x_min, grid.x_max)),
        t_end,
        2e-3,
        60,
        particles(size, 1000),
    )
}

/// Free packet `sigma0 = 1`, `k0 = 1`, evolved to `t = 20 >> 2 m sigma0^2 / hbar`.
pub fn dispersed_lpw(size: Size) -> Result<Scenario> {
    let (grid, sigma, k0) = match size {
        Size::Full => (
            GridSpec {
                x_min: -60.0,
                x_max: 100.0,
                n: 2048,
            },
            1.0,
            1.0,
        ),
        Size::Smoke => (
            GridSpec {
                x_min: -40.0,
                x_max: 60.0,
                n: 128,
            },
            3.0,
            0.5,
        ),
    };
    build(
        "dispersed_lpw",
        "moving free packet dispersed into a local plane wave",
        grid,
        Units::default(),
        vec![Packet {
            center: 0.0,
            sigma,
            k0,
        }],
        PotentialSpec::free((grid.x_min, grid.x_max)),
        20.0,
        1e-2,
        100,
        particles(size, 1000),
    )
}

/// Matched quartic runs from `x = 0` with `v0 = 50` (turning point `A = 20`, `L = A / sqrt 6`):
/// a narrow packet with `sigma^2 sup|V'''| / sup|V'| ~ 1e-3` and one with `sigma = L`.
pub fn ehrenfest_pair(size: Size) -> Result<(Scenario, Scenario)> {
    let (grid, v0, amp, narrow, t_end) = match size {
        Size::Full => (
            GridSpec {
                x_min: -56.0,
                x_max: 56.0,
                n: 4096,
            },
            50.0,
            20.0,
            0.25,
            2.2,
        ),
        Size::Smoke => (
            GridSpec {
                x_min: -56.0,
                x_max: 56.0,
                n: 128,
            },
            2.0,
            20.0,
            2.0,
            2.0,
        ),
    };
    let g4: f64 = v0 * v0 / 2.0 / f64::powi(amp, 4);
    let potential = PotentialSpec::quartic(g4, (-amp, amp));
    let l = amp / 6f64.sqrt();
    let make = |name: &str, sigma: f64| {
        build(
            name,
            "Ehrenfest contrast in a quartic well",
            grid,
            Units::default(),
            vec![Packet {
                center: 0.0,
                sigma,
                k0: v0,
            }],
            potential,
            t_end,
            2e-3,
            200,
            particles(size, 200),
        )
    };
    Ok((
        make("ehrenfest_narrow", narrow)?,
        make("ehrenfest_wide", l)?,
    ))
}

/// Library used by the sweeps: `sigma` fixed, `k0` varied.
pub fn sweep_point(family: SweepFamily, k0: f64, size: Size) -> Result<Scenario> {
    let units = Units::default();
    match family {
        SweepFamily::Quartic => {
            let (grid, sigma) = match size {
                Size::Full => (
                    GridSpec {
                        x_min: -32.0,
                        x_max: 32.0,
                        n: 4096,
                    },
                    0.5,
                ),
                Size::Smoke => (
                    GridSpec {
                        x_min: -32.0,
                        x_max: 32.0,
                        n: 128,
                    },
                    1.5,
                ),
            };
            let potential = PotentialSpec::quartic(1.6e-4, (-24.5, 24.5));
            let l = potential.scale_l().length;
            let psi0 = make_gaussian_in(grid.build()?, -l, sigma, k0, units)?;
            let scales = scale_report(&psi0, &potential, None)?;
            let g = grid.build()?;
            let dt = 0.8 * g.dx() / (k0 + 4.0 / sigma);
            build(
                &format!("sweep_quartic_k{k0}"),
                "quartic sweep point",
                grid,
                units,
                vec![Packet {
                    center: -l,
                    sigma,
                    k0,
                }],
                potential,
                2.0 * scales.t,
                dt,
                200,
                1000,
            )
        }
        SweepFamily::HarmonicLo => {
            let n = match size {
                Size::Full => 2048,
                Size::Smoke => 128,
            };
            let grid = GridSpec {
                x_min: -16.0,
                x_max: 16.0,
                n,
            };
            let potential = PotentialSpec::harmonic(1.0, 1.0, (-16.0, 16.0));
            let sigma = 0.5f64.sqrt();
            let l_o = 5.0;
            let psi0 = make_gaussian_in(grid.build()?, 0.0, sigma, k0, units)?;
            let scales = scale_report(&psi0, &potential, Some(l_o))?;
            let g = grid.build()?;
            let dt = 0.8 * g.dx() / (k0 + 4.0 / sigma);
            let mut s = build(
                &format!("sweep_harmonic_Lo_k{k0}"),
                "harmonic sweep point with user length",
                grid,
                units,
                vec![Packet {
                    center: 0.0,
                    sigma,
                    k0,
                }],
                potential,
                scales.t,
                dt,
                200,
                1000,
            )?;
            s.l_o = Some(l_o);
            Ok(s)
        }
    }
}

//! Symmetric split-step propagation of `i hbar dpsi/dt = -(hbar^2/2m) psi'' + V psi`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::{kinetic_energy, Grid, Units, WaveField};
use crate::potential::PotentialSpec;
use crate::spectral;
use crate::{Error, Result};

/// Boundary amplitude (relative to the maximum) above which the domain is too small.
pub const BOUNDARY_WARN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepPlan {
    /// Macro step; trajectories and snapshots live on this clock.
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_stride: usize,
    /// Split-step substeps per macro step (the wave advances with `dt / wave_substeps`).
    #[serde(default = "one")]
    pub wave_substeps: usize,
}

fn one() -> usize {
    1
}

impl StepPlan {
    pub fn new(dt: f64, n_steps: usize, snapshot_stride: usize) -> Result<Self> {
        StepPlan {
            dt,
            n_steps,
            snapshot_stride,
            wave_substeps: 1,
        }
        .validated()
    }

    pub fn with_substeps(mut self, wave_substeps: usize) -> Result<Self> {
        self.wave_substeps = wave_substeps;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if self.snapshot_stride == 0 || self.wave_substeps == 0 {
            return Err(Error::InvalidArgument(
                "snapshot_stride and wave_substeps must be >= 1".into(),
            ));
        }
        Ok(self)
    }

    pub fn wave_dt(&self) -> f64 {
        self.dt / self.wave_substeps as f64
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn snapshot_times(&self, t0: f64) -> Vec<f64> {
        (0..=self.n_steps)
            .step_by(self.snapshot_stride)
            .map(|i| t0 + i as f64 * self.dt)
            .collect()
    }
}

/// Largest phase advanced by a single split step of length `dt`.
pub fn step_phase(grid: &Grid, units: Units, pot: &PotentialSpec, dt: f64) -> f64 {
    let kmax = grid.k_max();
    let v_max = pot
        .values_on(grid)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    dt * (units.hbar * kmax * kmax / (2.0 * units.mass)).max(v_max / units.hbar)
}

/// Largest `dt` accepted by [`Propagator::new`].
pub fn max_stable_dt(grid: &Grid, units: Units, pot: &PotentialSpec) -> f64 {
    0.5 / step_phase(grid, units, pot, 1.0)
}

/// `0.1 * min(2 m / (hbar k_max^2), hbar / |V|_max)`.
pub fn default_dt(grid: &Grid, units: Units, pot: &PotentialSpec) -> f64 {
    let kmax = grid.k_max();
    let v_max = pot
        .values_on(grid)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let kin = 2.0 * units.mass / (units.hbar * kmax * kmax);
    let pot_t = if v_max > 0.0 {
        units.hbar / v_max
    } else {
        f64::INFINITY
    };
    0.1 * kin.min(pot_t)
}

/// Precomputed exponentials for one split step.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Grid,
    units: Units,
    dt: f64,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    potential: Vec<f64>,
}

impl Propagator {
    pub fn new(grid: Grid, units: Units, pot: &PotentialSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} must be positive"
            )));
        }
        let phase = step_phase(&grid, units, pot, dt);
        if phase > 0.5 {
            return Err(Error::StepTooLarge { dt, phase });
        }
        let potential = pot.values_on(&grid);
        let half_potential = potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * units.hbar)))
            .collect();
        let kinetic = spectral::wavenumbers(&grid)
            .iter()
            .map(|k| Complex64::from_polar(1.0, -units.hbar * k * k * dt / (2.0 * units.mass)))
            .collect();
        Ok(Propagator {
            grid,
            units,
            dt,
            half_potential,
            kinetic,
            potential,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances the amplitudes in place by `count` steps.
    pub fn advance_in_place(&self, amps: &mut [Complex64], count: usize) {
        for _ in 0..count {
            for (a, p) in amps.iter_mut().zip(&self.half_potential) {
                *a *= p;
            }
            spectral::fft_in_place(amps);
            for (a, k) in amps.iter_mut().zip(&self.kinetic) {
                *a *= k;
            }
            spectral::ifft_in_place(amps);
            for (a, p) in amps.iter_mut().zip(&self.half_potential) {
                *a *= p;
            }
        }
    }

    pub fn advance(&self, psi: &WaveField, count: usize) -> Result<WaveField> {
        self.check(psi)?;
        let mut amps = psi.amplitudes().to_vec();
        self.advance_in_place(&mut amps, count);
        Ok(WaveField::from_parts_unchecked(
            self.grid,
            amps,
            psi.time() + count as f64 * self.dt,
            self.units,
        ))
    }

    fn check(&self, psi: &WaveField) -> Result<()> {
        if *psi.grid() != self.grid || psi.units() != self.units {
            return Err(Error::InvalidArgument(
                "wave field grid or units differ from the propagator's".into(),
            ));
        }
        Ok(())
    }

    /// `<H>` with the propagator's potential.
    pub fn energy(&self, psi: &WaveField) -> f64 {
        let dx = self.grid.dx();
        let pot: f64 = psi
            .amplitudes()
            .iter()
            .zip(&self.potential)
            .map(|(a, v)| v * a.norm_sqr())
            .sum::<f64>()
            * dx;
        kinetic_energy(psi) + pot
    }
}

/// One Strang step `e^{-iV dt/2h} e^{-iT dt/h} e^{-iV dt/2h}`.
pub fn step(psi: &WaveField, pot: &PotentialSpec, dt: f64) -> Result<WaveField> {
    Propagator::new(*psi.grid(), psi.units(), pot, dt)?.advance(psi, 1)
}

/// `<H>` for an arbitrary potential.
pub fn energy(psi: &WaveField, pot: &PotentialSpec) -> f64 {
    let dx = psi.grid().dx();
    let v: f64 = psi
        .amplitudes()
        .iter()
        .zip(psi.grid().points())
        .map(|(a, x)| pot.value(x) * a.norm_sqr())
        .sum::<f64>()
        * dx;
    kinetic_energy(psi) + v
}

/// Snapshots at every `snapshot_stride` macro steps, starting with `psi`.
pub fn evolve(psi: &WaveField, pot: &PotentialSpec, plan: &StepPlan) -> Result<Vec<WaveField>> {
    let plan = plan.validated()?;
    let prop = Propagator::new(*psi.grid(), psi.units(), pot, plan.wave_dt())?;
    let mut out = vec![psi.clone()];
    let mut amps = psi.amplitudes().to_vec();
    let mut done = 0;
    while done < plan.n_steps {
        let chunk = plan.snapshot_stride.min(plan.n_steps - done);
        prop.advance_in_place(&mut amps, chunk * plan.wave_substeps);
        done += chunk;
        if done % plan.snapshot_stride == 0 {
            out.push(WaveField::from_parts_unchecked(
                *psi.grid(),
                amps.clone(),
                psi.time() + done as f64 * plan.dt,
                psi.units(),
            ));
        }
    }
    if let Some(last) = out.last() {
        warn_boundary(last);
    }
    Ok(out)
}

pub fn warn_boundary(psi: &WaveField) {
    let r = psi.boundary_ratio();
    if r > BOUNDARY_WARN {
        log::warn!(
            "boundary amplitude {r:.2e} of max at t = {:.4}; domain may be too small",
            psi.time()
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_gaussian, make_gaussian_in};
    use std::f64::consts::PI;

    fn free() -> PotentialSpec {
        PotentialSpec::free((-5.0, 5.0))
    }

    #[test]
    fn free_gaussian_spreads_analytically() {
        let g = Grid::new(-40.0, 40.0, 1024).unwrap();
        let psi = make_gaussian(g, 0.0, 1.0, 0.0).unwrap();
        let plan = StepPlan::new(5e-4, 4000, 4000).unwrap();
        let snaps = evolve(&psi, &free(), &plan).unwrap();
        let last = snaps.last().unwrap();
        assert!((last.time() - 2.0).abs() < 1e-12);
        let width = last.position_variance().sqrt();
        assert!((width - 2f64.sqrt()).abs() < 1e-4, "width {width}");
    }

    #[test]
    fn coherent_state_oscillates() {
        let g = Grid::new(-16.0, 16.0, 512).unwrap();
        let units = Units::default();
        let sigma = (units.hbar / 2.0).sqrt();
        let psi = make_gaussian_in(g, 3.0, sigma, 0.0, units).unwrap();
        let pot = PotentialSpec::harmonic(1.0, 1.0, (-4.0, 4.0));
        let dt = 2e-4;
        let n = (2.0 * PI / dt).round() as usize;
        let plan = StepPlan::new(2.0 * PI / n as f64, n, 500).unwrap();
        let snaps = evolve(&psi, &pot, &plan).unwrap();
        let worst = snaps
            .iter()
            .map(|s| (s.mean_position() - 3.0 * s.time().cos()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "worst {worst}");
    }

    #[test]
    fn plane_wave_gets_global_phase() {
        let g = Grid::new(-PI, PI, 64).unwrap();
        let k = 3.0;
        let psi =
            WaveField::from_fn(g, Units::default(), |x| Complex64::new(0.0, k * x).exp()).unwrap();
        let t = 0.3;
        let plan = StepPlan::new(t / 600.0, 600, 600).unwrap();
        let out = evolve(&psi, &free(), &plan).unwrap();
        let phase = Complex64::from_polar(1.0, -k * k * t / 2.0);
        for (a, b) in out[1].amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b * phase).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_steps_returns_initial() {
        let g = Grid::new(-20.0, 20.0, 256).unwrap();
        let psi = make_gaussian(g, 0.0, 1.0, 1.0).unwrap();
        let plan = StepPlan::new(1e-3, 0, 1).unwrap();
        let out = evolve(&psi, &free(), &plan).unwrap();
        assert_eq!(out, vec![psi]);
    }

    #[test]
    fn rejects_large_steps() {
        let g = Grid::new(-20.0, 20.0, 256).unwrap();
        let psi = make_gaussian(g, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            step(&psi, &free(), 1.0),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(StepPlan::new(0.0, 1, 1).is_err());
        assert!(StepPlan::new(0.1, 1, 0).is_err());
    }

    #[test]
    fn unitarity_and_energy_over_many_steps() {
        let g = Grid::new(-16.0, 16.0, 256).unwrap();
        let units = Units::default();
        let pots = [
            PotentialSpec::free((-5.0, 5.0)),
            PotentialSpec::harmonic(1.0, 1.0, (-5.0, 5.0)),
            PotentialSpec::quartic(0.05, (-5.0, 5.0)),
            PotentialSpec::new(
                crate::potential::PotentialKind::UniformField { g: 0.1 },
                (-5.0, 5.0),
            )
            .unwrap(),
            PotentialSpec::new(
                crate::potential::PotentialKind::GaussianBarrier { h: 1.0, w: 1.0 },
                (-5.0, 5.0),
            )
            .unwrap(),
        ];
        for pot in pots {
            let psi = make_gaussian_in(g, -2.0, 1.0, 1.0, units).unwrap();
            let dt = 0.4 * 0.5 / step_phase(&g, units, &pot, 1.0);
            let prop = Propagator::new(g, units, &pot, dt).unwrap();
            let e0 = prop.energy(&psi);
            let out = prop.advance(&psi, 10_000).unwrap();
            assert!((out.norm_sq() - 1.0).abs() < 1e-10, "{pot:?}");
            let e1 = prop.energy(&out);
            assert!(((e1 - e0) / e0).abs() < 1e-6, "{pot:?}: {e0} -> {e1}");
        }
    }

    #[test]
    fn second_order_in_dt() {
        let units = Units::default();
        let g = Grid::new(-16.0, 16.0, 128).unwrap();
        let pot = PotentialSpec::new(
            crate::potential::PotentialKind::GaussianBarrier { h: 2.0, w: 1.0 },
            (-5.0, 5.0),
        )
        .unwrap();
        let psi = make_gaussian_in(g, -2.0, 1.0, 1.0, units).unwrap();
        let t = 0.5;
        let run = |n: usize| {
            Propagator::new(g, units, &pot, t / n as f64)
                .unwrap()
                .advance(&psi, n)
                .unwrap()
        };
        let reference = run(256 * 8);
        let err = |n: usize| {
            let p = run(n);
            (p.amplitudes()
                .iter()
                .zip(reference.amplitudes())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                * g.dx())
            .sqrt()
        };
        let ratio = err(128) / err(256);
        assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
    }
}

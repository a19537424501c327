//! Newtonian reference motion `m x'' = -V'(x)`.

use serde::Serialize;

use crate::potential::PotentialSpec;
use crate::propagator::StepPlan;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalPath {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub mass: f64,
}

impl ClassicalPath {
    pub fn energy(&self, pot: &PotentialSpec, i: usize) -> f64 {
        self.p[i] * self.p[i] / (2.0 * self.mass) + pot.value(self.x[i])
    }

    /// Largest relative energy change along the path.
    pub fn energy_drift(&self, pot: &PotentialSpec) -> f64 {
        let e0 = self.energy(pot, 0);
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        (0..self.times.len())
            .map(|i| (self.energy(pot, i) - e0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

fn rk4(x: f64, p: f64, mass: f64, pot: &PotentialSpec, h: f64) -> (f64, f64) {
    let f = |x: f64, p: f64| (p / mass, pot.force(x));
    let (k1x, k1p) = f(x, p);
    let (k2x, k2p) = f(x + 0.5 * h * k1x, p + 0.5 * h * k1p);
    let (k3x, k3p) = f(x + 0.5 * h * k2x, p + 0.5 * h * k2p);
    let (k4x, k4p) = f(x + h * k3x, p + h * k3p);
    (
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )
}

/// RK4 on the plan's microstep `dt / wave_substeps`, recorded at the snapshot stride.
pub fn classical_integrate(
    x0: f64,
    p0: f64,
    mass: f64,
    pot: &PotentialSpec,
    plan: &StepPlan,
) -> ClassicalPath {
    let h = plan.wave_dt();
    let mut path = ClassicalPath {
        times: vec![0.0],
        x: vec![x0],
        p: vec![p0],
        mass,
    };
    let (mut x, mut p) = (x0, p0);
    for step in 1..=plan.n_steps {
        for _ in 0..plan.wave_substeps {
            (x, p) = rk4(x, p, mass, pot, h);
        }
        if step % plan.snapshot_stride == 0 {
            path.times.push(step as f64 * plan.dt);
            path.x.push(x);
            path.p.push(p);
        }
    }
    path
}

//! Potential library with analytic first and third derivatives.

use serde::{Deserialize, Serialize};

use crate::field::Grid;
use crate::{Error, Result};

/// Shape of the external potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialKind {
    Free,
    /// `V = g x`, a constant force `-g`.
    UniformField {
        g: f64,
    },
    /// `V = m omega^2 x^2 / 2`.
    Harmonic {
        omega: f64,
        mass: f64,
    },
    /// `V = g4 x^4`.
    Quartic {
        g4: f64,
    },
    /// `V = h exp(-x^2 / 2 w^2)`.
    GaussianBarrier {
        h: f64,
        w: f64,
    },
    /// Box `[-width/2, width/2]` with smooth tanh walls of height `height`;
    /// `edge` is the tanh length, the wall rises over roughly `4 edge`.
    InfiniteWell {
        width: f64,
        height: f64,
        edge: f64,
    },
}

/// A potential together with the region on which its scale is assessed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub region: (f64, f64),
}

/// Result of the `sqrt(sup|V'| / sup|V'''|)` estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLength {
    /// `f64::INFINITY` when `V'''` vanishes on the region.
    pub length: f64,
    /// Set when both `V'` and `V'''` vanish (free motion).
    pub zero_force: bool,
}

/// Wall height of [`PotentialSpec::infinite_well`] in units of the packet energy.
pub const WELL_HEIGHT_FACTOR: f64 = 100.0;

fn step_fn(u: f64) -> (f64, f64, f64) {
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    ((1.0 + t) / 2.0, sech2 / 2.0, sech2 * (3.0 * t * t - 1.0))
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, region: (f64, f64)) -> Result<Self> {
        if !(region.1 > region.0) {
            return Err(Error::InvalidArgument(format!(
                "degenerate region [{}, {}]",
                region.0, region.1
            )));
        }
        Ok(PotentialSpec { kind, region })
    }

    pub fn free(region: (f64, f64)) -> Self {
        PotentialSpec {
            kind: PotentialKind::Free,
            region,
        }
    }

    pub fn harmonic(omega: f64, mass: f64, region: (f64, f64)) -> Self {
        PotentialSpec {
            kind: PotentialKind::Harmonic { omega, mass },
            region,
        }
    }

    pub fn quartic(g4: f64, region: (f64, f64)) -> Self {
        PotentialSpec {
            kind: PotentialKind::Quartic { g4 },
            region,
        }
    }

    /// Well whose wall height and steepness follow the grid and the packet energy:
    /// `height = 100 * e_kin`, wall rise over `4 dx`.
    pub fn infinite_well(width: f64, e_kin: f64, grid: &Grid) -> Self {
        PotentialSpec {
            kind: PotentialKind::InfiniteWell {
                width,
                height: WELL_HEIGHT_FACTOR * e_kin,
                edge: grid.dx(),
            },
            region: (-width / 2.0, width / 2.0),
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, PotentialKind::Free)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::UniformField { g } => g * x,
            PotentialKind::Harmonic { omega, mass } => 0.5 * mass * omega * omega * x * x,
            PotentialKind::Quartic { g4 } => g4 * x.powi(4),
            PotentialKind::GaussianBarrier { h, w } => h * (-x * x / (2.0 * w * w)).exp(),
            PotentialKind::InfiniteWell {
                width,
                height,
                edge,
            } => {
                let a = width / 2.0;
                height * (step_fn((x - a) / edge).0 + step_fn((-x - a) / edge).0)
            }
        }
    }

    /// `dV/dx`.
    pub fn d1(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::UniformField { g } => g,
            PotentialKind::Harmonic { omega, mass } => mass * omega * omega * x,
            PotentialKind::Quartic { g4 } => 4.0 * g4 * x.powi(3),
            PotentialKind::GaussianBarrier { h, w } => {
                -h * x / (w * w) * (-x * x / (2.0 * w * w)).exp()
            }
            PotentialKind::InfiniteWell {
                width,
                height,
                edge,
            } => {
                let a = width / 2.0;
                height / edge * (step_fn((x - a) / edge).1 - step_fn((-x - a) / edge).1)
            }
        }
    }

    /// `d^3V/dx^3`.
    pub fn d3(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Free
            | PotentialKind::UniformField { .. }
            | PotentialKind::Harmonic { .. } => 0.0,
            PotentialKind::Quartic { g4 } => 24.0 * g4 * x,
            PotentialKind::GaussianBarrier { h, w } => {
                let w2 = w * w;
                h * (3.0 * x / (w2 * w2) - x.powi(3) / (w2 * w2 * w2)) * (-x * x / (2.0 * w2)).exp()
            }
            PotentialKind::InfiniteWell {
                width,
                height,
                edge,
            } => {
                let a = width / 2.0;
                height / edge.powi(3) * (step_fn((x - a) / edge).2 - step_fn((-x - a) / edge).2)
            }
        }
    }

    pub fn force(&self, x: f64) -> f64 {
        -self.d1(x)
    }

    pub fn values_on(&self, grid: &Grid) -> Vec<f64> {
        grid.points().map(|x| self.value(x)).collect()
    }

    /// `sup_region |V'|` and `sup_region |V'''|` on a dense sample of the region.
    pub fn derivative_sups(&self, region: (f64, f64)) -> (f64, f64) {
        const SAMPLES: usize = 8192;
        let (a, b) = region;
        let mut s1: f64 = 0.0;
        let mut s3: f64 = 0.0;
        for i in 0..=SAMPLES {
            let x = a + (b - a) * i as f64 / SAMPLES as f64;
            s1 = s1.max(self.d1(x).abs());
            s3 = s3.max(self.d3(x).abs());
        }
        (s1, s3)
    }

    /// Scale of variation on the declared region.
    pub fn scale_l(&self) -> ScaleLength {
        self.scale_l_on(self.region)
    }

    pub fn scale_l_on(&self, region: (f64, f64)) -> ScaleLength {
        let (s1, s3) = self.derivative_sups(region);
        if s3 == 0.0 {
            ScaleLength {
                length: f64::INFINITY,
                zero_force: s1 == 0.0,
            }
        } else {
            ScaleLength {
                length: (s1 / s3).sqrt(),
                zero_force: false,
            }
        }
    }
}

/// Free-function form of [`PotentialSpec::scale_l`].
pub fn scale_l(pot: &PotentialSpec) -> ScaleLength {
    pot.scale_l()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(p: &PotentialSpec, x: f64) -> (f64, f64) {
        let h = 1e-3;
        let d1 = (p.value(x + h) - p.value(x - h)) / (2.0 * h);
        let d3 = (p.value(x + 2.0 * h) - 2.0 * p.value(x + h) + 2.0 * p.value(x - h)
            - p.value(x - 2.0 * h))
            / (2.0 * h.powi(3));
        (d1, d3)
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let kinds = [
            PotentialKind::UniformField { g: 0.7 },
            PotentialKind::Harmonic {
                omega: 1.3,
                mass: 2.0,
            },
            PotentialKind::Quartic { g4: 0.3 },
            PotentialKind::GaussianBarrier { h: 2.0, w: 0.8 },
            PotentialKind::InfiniteWell {
                width: 4.0,
                height: 10.0,
                edge: 0.5,
            },
        ];
        for kind in kinds {
            let p = PotentialSpec::new(kind, (-3.0, 3.0)).unwrap();
            for &x in &[-2.3, -1.1, 0.2, 1.7, 2.05] {
                let (d1, d3) = finite_diff(&p, x);
                assert!(
                    (p.d1(x) - d1).abs() < 1e-4 * (1.0 + d1.abs()),
                    "{kind:?} d1 at {x}"
                );
                assert!(
                    (p.d3(x) - d3).abs() < 1e-3 * (1.0 + d3.abs()),
                    "{kind:?} d3 at {x}"
                );
            }
        }
    }

    #[test]
    fn quadratic_potentials_have_infinite_scale() {
        let h = PotentialSpec::harmonic(1.0, 1.0, (-5.0, 5.0)).scale_l();
        assert!(h.length.is_infinite() && !h.zero_force);
        let f = PotentialSpec::free((-5.0, 5.0)).scale_l();
        assert!(f.length.is_infinite() && f.zero_force);
        let u = PotentialSpec::new(PotentialKind::UniformField { g: 1.0 }, (-1.0, 1.0))
            .unwrap()
            .scale_l();
        assert!(u.length.is_infinite());
    }

    #[test]
    fn quartic_scale_is_a_over_sqrt6() {
        for &a in &[0.5, 2.0, 7.0] {
            let l = PotentialSpec::quartic(0.37, (-a, a)).scale_l().length;
            assert!((l - a / 6f64.sqrt()).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn degenerate_region_rejected() {
        assert!(PotentialSpec::new(PotentialKind::Free, (1.0, 1.0)).is_err());
    }
}

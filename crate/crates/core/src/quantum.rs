//! Quantum potential and force, the modified Hamilton-Jacobi residual,
//! classicality scales and the deviation statistic `D`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bohm::{ParticleFlag, TrajectoryEnsemble};
use crate::field::{kinetic_energy, polar_decompose, Grid, WaveField, DEFAULT_NODE_FLOOR};
use crate::interp;
use crate::potential::PotentialSpec;
use crate::spectral;
use crate::stats;
use crate::{Error, Result};

/// A real grid field with points that carry no meaningful value.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField {
    pub values: Vec<f64>,
    /// `true` at node points; `values` holds NaN there.
    pub masked: Vec<bool>,
}

impl MaskedField {
    /// Unmasked `(index, value)` pairs.
    pub fn valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.masked)
            .enumerate()
            .filter(|(_, (_, m))| !**m)
            .map(|(j, (v, _))| (j, *v))
    }
}

/// `V_Q` and `F_Q = -V_Q'` on the grid, ready for off-grid evaluation.
#[derive(Debug, Clone)]
pub struct QuantumField {
    grid: Grid,
    time: f64,
    potential: Vec<f64>,
    force: Vec<f64>,
    masked: Vec<bool>,
}

impl QuantumField {
    pub fn new(psi: &WaveField, node_floor: f64) -> Result<Self> {
        let grid = *psi.grid();
        let amps = psi.amplitudes();
        let threshold = node_floor * psi.max_abs();
        if !(psi.max_abs() > 0.0) {
            return Err(Error::AllNodes);
        }
        let d1 = spectral::derivative(amps, &grid, 1);
        let d2 = spectral::derivative(amps, &grid, 2);
        let d3 = spectral::derivative(amps, &grid, 3);
        let c = psi.hbar() * psi.hbar() / (2.0 * psi.mass());
        let n = grid.n();
        let mut potential = vec![f64::NAN; n];
        let mut force = vec![f64::NAN; n];
        let mut masked = vec![false; n];
        for j in 0..n {
            if amps[j].norm() < threshold {
                masked[j] = true;
                continue;
            }
            let a = d1[j] / amps[j];
            let b = d2[j] / amps[j];
            let cc = d3[j] / amps[j];
            // R''/R and its x-derivative, using (psi^(n)/psi)' = psi^(n+1)/psi - (psi^(n)/psi)(psi'/psi)
            let q = b.re + a.im * a.im;
            let dq = (cc - a * b).re + 2.0 * a.im * (b - a * a).im;
            potential[j] = -c * q;
            force[j] = c * dq;
        }
        Ok(QuantumField {
            grid,
            time: psi.time(),
            potential,
            force,
            masked,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn potential(&self) -> MaskedField {
        MaskedField {
            values: self.potential.clone(),
            masked: self.masked.clone(),
        }
    }

    pub fn force_field(&self) -> MaskedField {
        MaskedField {
            values: self.force.clone(),
            masked: self.masked.clone(),
        }
    }

    /// Cubic interpolation of `F_Q` at `x`.
    pub fn force(&self, x: f64) -> Result<f64> {
        let (idx, w) = interp::stencil(&self.grid, x);
        if idx.iter().any(|&j| self.masked[j]) {
            return Err(Error::NearNode { x });
        }
        Ok(idx.iter().zip(&w).map(|(&j, &wj)| self.force[j] * wj).sum())
    }
}

/// `V_Q = -(hbar^2/2m) R''/R` on the grid, NaN and masked at nodes.
pub fn quantum_potential(psi: &WaveField) -> Result<MaskedField> {
    Ok(QuantumField::new(psi, DEFAULT_NODE_FLOOR)?.potential())
}

/// `F_Q(x) = -dV_Q/dx`, interpolated.
pub fn quantum_force(psi: &WaveField, x: f64) -> Result<f64> {
    let g = psi.grid();
    if !g.contains(x) {
        return Err(Error::OutOfDomain {
            x,
            lo: g.x_min(),
            hi: g.x_max(),
        });
    }
    QuantumField::new(psi, DEFAULT_NODE_FLOOR)?.force(x)
}

/// Pointwise residuals of the modified Hamilton-Jacobi and continuity equations.
#[derive(Debug, Clone, PartialEq)]
pub struct HjResidual {
    /// `dS/dt + S'^2/2m + V + V_Q`.
    pub hamilton_jacobi: MaskedField,
    /// `d rho/dt + (rho S'/m)'`.
    pub continuity: Vec<f64>,
}

/// Residuals at `snapshots[t_index]`, using its two neighbours for time derivatives.
///
/// Snapshots must be equally spaced in time.
pub fn hj_residual(
    snapshots: &[WaveField],
    t_index: usize,
    pot: &PotentialSpec,
) -> Result<HjResidual> {
    if t_index == 0 || t_index + 1 >= snapshots.len() {
        return Err(Error::InvalidArgument(format!(
            "t_index {t_index} needs a neighbour on each side ({} snapshots)",
            snapshots.len()
        )));
    }
    let (prev, cur, next) = (
        &snapshots[t_index - 1],
        &snapshots[t_index],
        &snapshots[t_index + 1],
    );
    let grid = *cur.grid();
    let dt = 0.5 * (next.time() - prev.time());
    let hbar = cur.hbar();
    let m = cur.mass();

    let floor = DEFAULT_NODE_FLOOR;
    let p0 = polar_decompose(prev, floor)?;
    let p1 = polar_decompose(cur, floor)?;
    let p2 = polar_decompose(next, floor)?;
    let masked: Vec<bool> = (0..grid.n())
        .map(|j| p0.node_mask[j] || p1.node_mask[j] || p2.node_mask[j])
        .collect();
    let s0 = align_branch(&p0.s, &p1.s, &masked, hbar);
    let s2 = align_branch(&p2.s, &p1.s, &masked, hbar);

    let q = QuantumField::new(cur, floor)?;
    let amps = cur.amplitudes();
    let d1 = spectral::derivative(amps, &grid, 1);
    let v = pot.values_on(&grid);
    let hj: Vec<f64> = (0..grid.n())
        .map(|j| {
            if masked[j] || q.masked[j] {
                return f64::NAN;
            }
            let ds = hbar * (d1[j] / amps[j]).im;
            (s2[j] - s0[j]) / (2.0 * dt) + ds * ds / (2.0 * m) + v[j] + q.potential[j]
        })
        .collect();
    let hj_mask: Vec<bool> = hj.iter().map(|v| v.is_nan()).collect();

    // current j = (hbar/m) Im(conj(psi) psi') is smooth where S' is not
    let current: Vec<Complex64> = amps
        .iter()
        .zip(&d1)
        .map(|(p, d)| Complex64::new(hbar / m * (p.conj() * d).im, 0.0))
        .collect();
    let div = spectral::derivative(&current, &grid, 1);
    let rho0 = prev.density();
    let rho2 = next.density();
    let continuity = (0..grid.n())
        .map(|j| (rho2[j] - rho0[j]) / (2.0 * dt) + div[j].re)
        .collect();

    Ok(HjResidual {
        hamilton_jacobi: MaskedField {
            values: hj,
            masked: hj_mask,
        },
        continuity,
    })
}

/// Shifts `s` by the multiple of `2 pi hbar` that minimises its L2 distance to `reference`.
fn align_branch(s: &[f64], reference: &[f64], masked: &[bool], hbar: f64) -> Vec<f64> {
    let period = 2.0 * PI * hbar;
    let diffs: Vec<f64> = s
        .iter()
        .zip(reference)
        .zip(masked)
        .filter(|(_, m)| !**m)
        .map(|((a, b), _)| a - b)
        .collect();
    if diffs.is_empty() {
        return s.to_vec();
    }
    let shift = (stats::mean(&diffs) / period).round() * period;
    s.iter().map(|v| v - shift).collect()
}

/// de Broglie wavelength `h / sqrt(2 m E_kin)`.
pub fn lambda_of_psi(psi: &WaveField) -> Result<f64> {
    let e = kinetic_energy(psi);
    if !(e > 0.0) {
        return Err(Error::ZeroKineticEnergy);
    }
    Ok(2.0 * PI * psi.hbar() / (2.0 * psi.mass() * e).sqrt())
}

/// Classicality scales of a wave function in a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleReport {
    pub lambda: f64,
    /// Scale of variation of the potential; infinite for quadratic and free potentials.
    pub l: f64,
    pub epsilon: f64,
    /// `h / (m lambda)`.
    pub v: f64,
    /// `L / v`, with `L_o` in place of an infinite `L`.
    pub t: f64,
    /// `hbar / E_kin`.
    pub tau: f64,
    pub l_o: Option<f64>,
    /// Set when `L` is infinite and no `L_o` was supplied: `epsilon = 0`.
    pub quadratic_case: bool,
    pub e_kin: f64,
    pub mass: f64,
}

impl ScaleReport {
    /// The length used for rescaling: `L`, or `L_o` when `L` is infinite.
    pub fn length(&self) -> f64 {
        if self.l.is_finite() {
            self.l
        } else {
            self.l_o.unwrap_or(f64::INFINITY)
        }
    }

    pub fn tau_over_t(&self) -> f64 {
        self.tau / self.t
    }

    /// Errors with `MissingLo` unless every scale is finite.
    pub fn require_finite(self) -> Result<Self> {
        if self.quadratic_case {
            Err(Error::MissingLo)
        } else {
            Ok(self)
        }
    }
}

pub fn scale_report(psi: &WaveField, pot: &PotentialSpec, l_o: Option<f64>) -> Result<ScaleReport> {
    let e_kin = kinetic_energy(psi);
    let lambda = lambda_of_psi(psi)?;
    let m = psi.mass();
    let l = pot.scale_l().length;
    let v = 2.0 * PI * psi.hbar() / (m * lambda);
    let tau = psi.hbar() / e_kin;
    let effective = if l.is_finite() { Some(l) } else { l_o };
    let (epsilon, t, quadratic_case) = match effective {
        Some(len) => (lambda / len, len / v, false),
        None => (0.0, f64::INFINITY, true),
    };
    Ok(ScaleReport {
        lambda,
        l,
        epsilon,
        v,
        t,
        tau,
        l_o,
        quadratic_case,
        e_kin,
        mass: m,
    })
}

/// Largest fraction of flagged particles `deviation_d` accepts.
pub const MAX_FLAGGED_FRACTION: f64 = 0.1;

/// Describes how `D` is normalised, written into summaries.
pub const D_CONVENTION: &str = "D = T^2 F_Q / (m L)";
pub const D_ALTERNATIVE: &str = "D = T^2 F_Q / L (without 1/m)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exceedance {
    pub delta: f64,
    pub p_hat: f64,
}

/// Per-particle `D(t')` series and their summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationRecord {
    /// `(t - t0) / T`.
    pub t_prime: Vec<f64>,
    /// Ensemble index of each retained particle.
    pub particle_ids: Vec<usize>,
    /// `series[i][k]` is `D` of particle `particle_ids[i]` at `t_prime[k]`.
    pub series: Vec<Vec<f64>>,
    /// `sup_t |D|` per retained particle.
    pub sup_abs: Vec<f64>,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    /// Fraction of retained particles with `sup |D| > delta`.
    pub exceedance: Vec<Exceedance>,
    /// Root mean square of `D` over particles and times.
    pub l2_mean: f64,
    pub excluded: usize,
    pub scales: ScaleReport,
}

impl DeviationRecord {
    pub fn median_sup(&self) -> f64 {
        self.q50
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_prime,particle_id,D")?;
        for (id, s) in self.particle_ids.iter().zip(&self.series) {
            for (t, d) in self.t_prime.iter().zip(s) {
                writeln!(w, "{t},{id},{d}")?;
            }
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "quantiles": { "50": self.q50, "90": self.q90, "99": self.q99 },
            "exceedance": self.exceedance,
            "l2_mean": self.l2_mean,
            "particles": self.particle_ids.len(),
            "excluded": self.excluded,
            "scales": self.scales,
            "convention": D_CONVENTION,
            "alternative_convention": D_ALTERNATIVE,
        })
    }
}

/// `D(t') = (T^2 / (m L)) F_Q(X(t), t)` along each trajectory.
///
/// Flagged particles, and particles that pass through a masked segment, are excluded;
/// more than 10% excluded is an error.
pub fn deviation_d(
    ensemble: &TrajectoryEnsemble,
    snapshots: &[WaveField],
    scales: &ScaleReport,
    deltas: &[f64],
) -> Result<DeviationRecord> {
    let scales = scales.require_finite()?;
    if snapshots.len() != ensemble.times.len() {
        return Err(Error::LengthMismatch {
            expected: ensemble.times.len(),
            got: snapshots.len(),
        });
    }
    let fields: Vec<QuantumField> = snapshots
        .par_iter()
        .map(|s| QuantumField::new(s, DEFAULT_NODE_FLOOR))
        .collect::<Result<_>>()?;
    deviation_with(ensemble, &scales, deltas, |_, k, x| fields[k].force(x).ok())
}

/// [`deviation_d`] with the quantum force supplied per `(particle, time index, x)`;
/// `None` excludes the particle.
pub fn deviation_with<F>(
    ensemble: &TrajectoryEnsemble,
    scales: &ScaleReport,
    deltas: &[f64],
    force: F,
) -> Result<DeviationRecord>
where
    F: Fn(usize, usize, f64) -> Option<f64> + Sync,
{
    let scales = scales.require_finite()?;
    let length = scales.length();
    let factor = scales.t * scales.t / (scales.mass * length);

    let rows: Vec<Option<Vec<f64>>> = (0..ensemble.n_particles())
        .into_par_iter()
        .map(|i| {
            if ensemble.flags[i] != ParticleFlag::Ok {
                return None;
            }
            ensemble.positions[i]
                .iter()
                .enumerate()
                .map(|(k, &x)| force(i, k, x).map(|fq| factor * fq))
                .collect()
        })
        .collect();

    let total = rows.len();
    let excluded = rows.iter().filter(|r| r.is_none()).count();
    if total == 0 || excluded as f64 > MAX_FLAGGED_FRACTION * total as f64 {
        return Err(Error::TooManyFlagged {
            flagged: excluded,
            total,
        });
    }
    let mut particle_ids = Vec::new();
    let mut series = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        if let Some(s) = r {
            particle_ids.push(i);
            series.push(s);
        }
    }
    let sup_abs: Vec<f64> = series
        .iter()
        .map(|s| s.iter().fold(0.0, |a: f64, d| a.max(d.abs())))
        .collect();
    let mut sorted = sup_abs.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let count = (series.len() * ensemble.times.len()) as f64;
    let l2_mean = (series.iter().flatten().map(|d| d * d).sum::<f64>() / count).sqrt();
    let exceedance = deltas
        .iter()
        .map(|&delta| Exceedance {
            delta,
            p_hat: sup_abs.iter().filter(|&&s| s > delta).count() as f64 / sup_abs.len() as f64,
        })
        .collect();
    let t0 = ensemble.times[0];
    Ok(DeviationRecord {
        t_prime: ensemble.times.iter().map(|t| (t - t0) / scales.t).collect(),
        particle_ids,
        series,
        q50: stats::quantile_sorted(&sorted, 0.5),
        q90: stats::quantile_sorted(&sorted, 0.9),
        q99: stats::quantile_sorted(&sorted, 0.99),
        sup_abs,
        exceedance,
        l2_mean,
        excluded,
        scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bohm::integrate_ensemble;
    use crate::field::{make_gaussian_in, Units};
    use crate::propagator::{evolve, StepPlan};

    fn gaussian(sigma: f64, k0: f64) -> WaveField {
        let g = Grid::new(-20.0, 20.0, 1024).unwrap();
        make_gaussian_in(g, 0.0, sigma, k0, Units::default()).unwrap()
    }

    fn plane_wave(k: f64) -> WaveField {
        let g = Grid::new(-PI, PI, 64).unwrap();
        WaveField::from_fn(g, Units::default(), |x| Complex64::new(0.0, k * x).exp()).unwrap()
    }

    #[test]
    fn plane_wave_has_no_quantum_potential() {
        let psi = plane_wave(3.0);
        let vq = quantum_potential(&psi).unwrap();
        assert!(vq.valid().all(|(_, v)| v.abs() < 1e-9));
        for &x in &[-2.0, 0.3, 1.7] {
            assert!(quantum_force(&psi, x).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_potential_and_force() {
        let psi = gaussian(1.0, 0.0);
        let vq = quantum_potential(&psi).unwrap();
        let g = *psi.grid();
        let mut checked = 0;
        for (j, v) in vq.valid() {
            let x = g.x(j);
            if x.abs() < 8.0 {
                assert!((v - (0.25 - x * x / 8.0)).abs() < 1e-6, "x {x}: {v}");
                checked += 1;
            }
        }
        assert!(checked > 300);
        for &x in &[-3.3, -1.0, 0.05, 2.5, 4.1] {
            assert!((quantum_force(&psi, x).unwrap() - x / 4.0).abs() < 1e-5);
        }
    }

    #[test]
    fn moving_gaussian_has_same_quantum_potential() {
        let psi = gaussian(1.0, 5.0);
        for (j, v) in quantum_potential(&psi).unwrap().valid() {
            let x = psi.grid().x(j);
            if x.abs() < 6.0 {
                assert!((v - (0.25 - x * x / 8.0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn harmonic_ground_state_identity() {
        // V + V_Q = E = 1/2 for the real ground state, F_Q cancels the classical force
        let psi = gaussian((0.5f64).sqrt(), 0.0);
        let pot = PotentialSpec::harmonic(1.0, 1.0, (-5.0, 5.0));
        let vq = quantum_potential(&psi).unwrap();
        for (j, v) in vq.valid() {
            let x = psi.grid().x(j);
            if x.abs() < 6.0 {
                assert!((v + pot.value(x) - 0.5).abs() < 1e-6);
            }
        }
        for &x in &[-2.0, 0.7, 3.0] {
            let total = quantum_force(&psi, x).unwrap() + pot.force(x);
            assert!(total.abs() < 1e-5);
        }
    }

    #[test]
    fn force_matches_difference_of_potential() {
        let g = Grid::new(-20.0, 20.0, 4096).unwrap();
        let a = make_gaussian_in(g, -3.0, 1.0, 2.0, Units::default()).unwrap();
        let b = make_gaussian_in(g, 3.0, 1.5, -1.0, Units::default()).unwrap();
        let psi = crate::field::superpose(&[a, b]).unwrap();
        let q = QuantumField::new(&psi, DEFAULT_NODE_FLOOR).unwrap();
        let vq = q.potential();
        let fq = q.force_field();
        let dx = g.dx();
        let rho = psi.density();
        let rho_max = rho.iter().cloned().fold(0.0, f64::max);
        for j in 2..g.n() - 2 {
            if (j - 2..=j + 2).any(|i| vq.masked[i]) || rho[j] < 1e-3 * rho_max {
                continue;
            }
            let v = &vq.values;
            let fd = -(-v[j + 2] + 8.0 * v[j + 1] - 8.0 * v[j - 1] + v[j - 2]) / (12.0 * dx);
            let f = fq.values[j];
            assert!(
                (fd - f).abs() < 1e-4 * (1.0 + f.abs()),
                "x {}: {fd} vs {f}",
                g.x(j)
            );
        }
    }

    #[test]
    fn masked_region_reports_near_node() {
        let g = Grid::new(-PI, PI, 128).unwrap();
        let psi =
            WaveField::from_fn(g, Units::default(), |x| Complex64::new(x.sin(), 0.0)).unwrap();
        let vq = quantum_potential(&psi).unwrap();
        assert!(vq.masked[g.index_of(0.0)]);
        assert!(vq.values[g.index_of(0.0)].is_nan());
        assert!(matches!(
            quantum_force(&psi, 0.0),
            Err(Error::NearNode { .. })
        ));
        // sin is an eigenfunction of the kinetic term: V_Q = hbar^2/2m off the nodes
        for (_, v) in vq.valid() {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn plane_wave_residuals_vanish() {
        let psi0 = plane_wave(2.0);
        let pot = PotentialSpec::free((-PI, PI));
        let plan = StepPlan::new(5e-4, 60, 20).unwrap();
        let snaps = evolve(&psi0, &pot, &plan).unwrap();
        let r = hj_residual(&snaps, 1, &pot).unwrap();
        assert!(r.hamilton_jacobi.valid().all(|(_, v)| v.abs() < 1e-8));
        assert!(r.continuity.iter().all(|v| v.abs() < 1e-8));
        assert!(hj_residual(&snaps, 0, &pot).is_err());
    }

    #[test]
    fn free_gaussian_residuals_small() {
        let g = Grid::new(-20.0, 20.0, 256).unwrap();
        let psi0 = make_gaussian_in(g, -2.0, 1.0, 1.0, Units::default()).unwrap();
        let pot = PotentialSpec::free((-20.0, 20.0));
        let plan = StepPlan::new(1e-3, 1000, 10).unwrap();
        let snaps = evolve(&psi0, &pot, &plan).unwrap();
        let cur = &snaps[50];
        let (mu, sd) = (cur.mean_position(), cur.position_variance().sqrt());
        let r = hj_residual(&snaps, 50, &pot).unwrap();
        for (j, v) in r.hamilton_jacobi.valid() {
            if (g.x(j) - mu).abs() < 3.0 * sd {
                assert!(v.abs() < 1e-4, "x {}: {v}", g.x(j));
            }
        }
        assert!(r.continuity.iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn coherent_state_residuals_small() {
        let g = Grid::new(-12.0, 12.0, 128).unwrap();
        let sigma = (0.5f64).sqrt();
        let psi0 = make_gaussian_in(g, 3.0, sigma, 0.0, Units::default()).unwrap();
        let pot = PotentialSpec::harmonic(1.0, 1.0, (-5.0, 5.0));
        let plan = StepPlan::new(1e-3, 2000, 2).unwrap();
        let snaps = evolve(&psi0, &pot, &plan).unwrap();
        for &i in &[185, 600, 999] {
            let t = snaps[i].time();
            let x_cl = 3.0 * t.cos();
            let r = hj_residual(&snaps, i, &pot).unwrap();
            for (j, v) in r.hamilton_jacobi.valid() {
                if (g.x(j) - x_cl).abs() < 3.0 * sigma {
                    assert!(v.abs() < 1e-4, "t {t} x {}: {v}", g.x(j));
                }
            }
        }
    }

    #[test]
    fn wavelength_examples() {
        let psi = plane_wave(3.0);
        assert!((lambda_of_psi(&psi).unwrap() - 2.0 * PI / 3.0).abs() < 1e-10);
        // 2 m E_kin = hbar^2 (k0^2 + 1 / (4 sigma^2))
        let psi = gaussian(1.0, 10.0);
        assert!((lambda_of_psi(&psi).unwrap() - 2.0 * PI / 100.25f64.sqrt()).abs() < 1e-4);
        let psi = gaussian(1.0, 0.0);
        assert!((lambda_of_psi(&psi).unwrap() - 4.0 * PI).abs() < 1e-4);
        let g = Grid::new(-PI, PI, 64).unwrap();
        let flat = WaveField::from_fn(g, Units::default(), |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            lambda_of_psi(&flat),
            Err(Error::ZeroKineticEnergy)
        ));
    }

    #[test]
    fn doubling_k0_halves_lambda() {
        let a = lambda_of_psi(&gaussian(2.0, 20.0)).unwrap();
        let b = lambda_of_psi(&gaussian(2.0, 40.0)).unwrap();
        assert!((a / b - 2.0).abs() < 0.01);
    }

    #[test]
    fn scale_report_cases() {
        let psi = gaussian(1.0, 10.0);
        let harmonic = PotentialSpec::harmonic(1.0, 1.0, (-5.0, 5.0));
        let r = scale_report(&psi, &harmonic, None).unwrap();
        assert!(r.quadratic_case);
        assert_eq!(r.epsilon, 0.0);
        assert!(matches!(r.require_finite(), Err(Error::MissingLo)));

        let lambda = r.lambda;
        let free = PotentialSpec::free((-5.0, 5.0));
        let r = scale_report(&psi, &free, Some(10.0 * lambda)).unwrap();
        assert!((r.epsilon - 0.1).abs() < 1e-12);

        // quartic on [-a, a] has L = a / sqrt(6); pick a so that lambda = L / 6
        let a = 6.0 * lambda * 6f64.sqrt();
        let quartic = PotentialSpec::quartic(1e-3, (-a, a));
        let r = scale_report(&psi, &quartic, None).unwrap();
        assert!((r.epsilon - 1.0 / 6.0).abs() < 1e-6);
        // tau / T = epsilon / pi
        assert!((r.tau_over_t() - r.epsilon / PI).abs() < 1e-9);
        assert!((r.v - 2.0 * r.e_kin.sqrt() / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn deviation_of_coherent_state_is_bounded() {
        let g = Grid::new(-12.0, 12.0, 128).unwrap();
        let sigma = (0.5f64).sqrt();
        let x0 = 3.0;
        let psi0 = make_gaussian_in(g, x0, sigma, 0.0, Units::default()).unwrap();
        let pot = PotentialSpec::harmonic(1.0, 1.0, (-5.0, 5.0));
        let plan = StepPlan::new(2e-3, 500, 25).unwrap();
        let run = integrate_ensemble(&psi0, &pot, &plan, 2000, 5).unwrap();
        let l_o = 10.0 * x0;
        let scales = scale_report(&psi0, &pot, Some(l_o)).unwrap();
        // F_Q = hbar^2 (x - x_cl) / (4 m sigma^4), bounded at 3 sigma
        let bound = scales.t * scales.t / l_o * 3.0 * sigma / (4.0 * sigma.powi(4));
        let rec = deviation_d(&run.ensemble, &run.snapshots, &scales, &[1e-3, bound]).unwrap();
        assert!(rec.q99 <= bound);
        assert!(rec.exceedance[1].p_hat <= 0.01);
        assert!(rec.exceedance[0].p_hat > 0.5);
        assert!((rec.t_prime[1] - 25.0 * 2e-3 / scales.t).abs() < 1e-12);

        let mut csv = Vec::new();
        rec.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("t_prime,particle_id,D\n"));
        let summary = rec.summary_json();
        assert_eq!(summary["convention"], D_CONVENTION);
    }

    #[test]
    fn deviation_rejects_flagged_ensembles() {
        let psi0 = gaussian(1.0, 1.0);
        let pot = PotentialSpec::quartic(1e-3, (-10.0, 10.0));
        let plan = StepPlan::new(1e-4, 2, 1).unwrap();
        let mut run = integrate_ensemble(&psi0, &pot, &plan, 100, 1).unwrap();
        for f in run.ensemble.flags.iter_mut().take(20) {
            *f = ParticleFlag::Clamped;
        }
        let scales = scale_report(&psi0, &pot, None).unwrap();
        assert!(matches!(
            deviation_d(&run.ensemble, &run.snapshots, &scales, &[]),
            Err(Error::TooManyFlagged {
                flagged: 20,
                total: 100
            })
        ));
    }
}

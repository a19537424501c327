//! Local plane-wave diagnostics: local wave vector, slow-variation verdict,
//! packet decomposition, momentum readout and the free stationary-phase oracle.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::bohm::TrajectoryEnsemble;
use crate::field::{Grid, WaveField, DEFAULT_NODE_FLOOR};
use crate::interp;
use crate::potential::PotentialSpec;
use crate::spectral;
use crate::{Error, Result};

pub const DEFAULT_LPW_THRESHOLD: f64 = 0.1;
/// Fraction of `|psi|^2` the core interval holds.
pub const CORE_MASS: f64 = 0.99;
/// Half-width, in grid points, of the raised-cosine overlap between cells.
pub const PARTITION_HALF_WIDTH: usize = 8;

/// Local wave vector field and slow-variation measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalStructure {
    pub x: Vec<f64>,
    /// `S'(x) / hbar`.
    pub k_field: Vec<f64>,
    /// `2 pi / |k(x)|`.
    pub lambda_field: Vec<f64>,
    /// `|R'/R| / |k|`: relative change of `R` over one reduced wavelength `1/|k|`.
    pub variation_r: Vec<f64>,
    /// `|k'| / k^2`: relative change of `k` over one reduced wavelength.
    pub variation_k: Vec<f64>,
    pub masked: Vec<bool>,
    /// Grid index range `[lo, hi]` of the smallest interval holding 99% of `|psi|^2`.
    pub core: (usize, usize),
    /// Density-weighted core mean of `min(max(var_R, var_k), 1)`.
    pub score: f64,
    /// Largest `max(var_R, var_k)` on unmasked core points.
    pub max_variation: f64,
    pub threshold: f64,
    pub is_lpw: bool,
}

impl LocalStructure {
    pub fn core_interval(&self) -> (f64, f64) {
        (self.x[self.core.0], self.x[self.core.1])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,k,lambda,var_R,var_k,masked")?;
        for j in 0..self.x.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.x[j],
                self.k_field[j],
                self.lambda_field[j],
                self.variation_r[j],
                self.variation_k[j],
                self.masked[j]
            )?;
        }
        Ok(())
    }
}

/// Smallest index interval holding `mass` of the density.
pub fn core_region(psi: &WaveField, mass: f64) -> (usize, usize) {
    let rho = psi.density();
    let total: f64 = rho.iter().sum();
    let target = mass * total;
    let n = rho.len();
    let mut best = (0, n - 1);
    let mut best_mass = total;
    let mut acc = 0.0;
    let mut lo = 0;
    for hi in 0..n {
        acc += rho[hi];
        while lo < hi && acc - rho[lo] >= target {
            acc -= rho[lo];
            lo += 1;
        }
        let width = hi - lo;
        let span = best.1 - best.0;
        // among equally short intervals keep the heaviest
        if acc >= target && (width < span || (width == span && acc > best_mass)) {
            best = (lo, hi);
            best_mass = acc;
        }
    }
    best
}

pub fn local_structure(psi: &WaveField, lpw_threshold: f64) -> Result<LocalStructure> {
    let grid = *psi.grid();
    let amps = psi.amplitudes();
    if !(psi.max_abs() > 0.0) {
        return Err(Error::AllNodes);
    }
    let threshold = DEFAULT_NODE_FLOOR * psi.max_abs();
    let d1 = spectral::derivative(amps, &grid, 1);
    let d2 = spectral::derivative(amps, &grid, 2);
    let n = grid.n();
    let mut k_field = vec![f64::NAN; n];
    let mut lambda_field = vec![f64::NAN; n];
    let mut variation_r = vec![f64::NAN; n];
    let mut variation_k = vec![f64::NAN; n];
    let mut masked = vec![false; n];
    for j in 0..n {
        if amps[j].norm() < threshold {
            masked[j] = true;
            continue;
        }
        let a = d1[j] / amps[j];
        let b = d2[j] / amps[j];
        let k = a.im;
        let dk = (b - a * a).im;
        k_field[j] = k;
        lambda_field[j] = 2.0 * PI / k.abs();
        variation_r[j] = a.re.abs() / k.abs();
        variation_k[j] = dk.abs() / (k * k);
    }
    let core = core_region(psi, CORE_MASS);
    let rho = psi.density();
    let mut weighted = 0.0;
    let mut weight = 0.0;
    let mut max_variation: f64 = 0.0;
    for j in core.0..=core.1 {
        let v = if masked[j] {
            1.0
        } else {
            let v = variation_r[j].max(variation_k[j]);
            max_variation = max_variation.max(v);
            v.min(1.0)
        };
        weighted += rho[j] * v;
        weight += rho[j];
    }
    let score = weighted / weight;
    Ok(LocalStructure {
        x: grid.points().collect(),
        k_field,
        lambda_field,
        variation_r,
        variation_k,
        masked,
        core,
        score,
        max_variation,
        threshold: lpw_threshold,
        is_lpw: score < lpw_threshold,
    })
}

/// Cells of nearly constant wave vector and the matching components of `psi`.
#[derive(Debug, Clone)]
pub struct PacketDecomposition {
    /// Cell intervals in position; the first and last extend to the grid edges.
    pub cells: Vec<(f64, f64)>,
    /// Representative wavenumber of each cell (midrange of `k` over the cell's core points).
    pub k: Vec<f64>,
    /// `theta_i psi` for a smooth partition of unity `theta_i`.
    pub components: Vec<WaveField>,
}

impl PacketDecomposition {
    pub fn sum(&self) -> Vec<Complex64> {
        let n = self.components[0].grid().n();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(c.amplitudes()) {
                *o += v;
            }
        }
        out
    }
}

/// Smooth step from 0 to 1 over `[-w, w]`.
fn raised_cosine_step(u: f64, w: f64) -> f64 {
    if u <= -w {
        0.0
    } else if u >= w {
        1.0
    } else {
        0.5 * (1.0 - (PI * (u + w) / (2.0 * w)).cos())
    }
}

/// Greedy left-to-right split of the core into cells of nearly constant `k`.
///
/// A cell is closed once it is at least one local wavelength long and adding the
/// next point would push `k` outside `k_i (1 +- k_var_tol)`.
pub fn decompose_packets(psi: &WaveField, k_var_tol: f64) -> Result<PacketDecomposition> {
    let ls = local_structure(psi, DEFAULT_LPW_THRESHOLD)?;
    if !ls.is_lpw {
        return Err(Error::NotLocalPlaneWave);
    }
    let grid = *psi.grid();
    let dx = grid.dx();
    let (lo, hi) = ls.core;
    let mut boundaries: Vec<usize> = Vec::new();
    let mut start = lo;
    let mut kmin = f64::INFINITY;
    let mut kmax = f64::NEG_INFINITY;
    for j in lo..=hi {
        if ls.masked[j] {
            continue;
        }
        let k = ls.k_field[j];
        let (nmin, nmax) = (kmin.min(k), kmax.max(k));
        let mid = 0.5 * (nmin + nmax);
        let fits = nmax - nmin <= 2.0 * k_var_tol * mid.abs();
        let long_enough = (j - start) as f64 * dx >= ls.lambda_field[j];
        if !fits && long_enough {
            boundaries.push(j);
            start = j;
            kmin = k;
            kmax = k;
        } else {
            kmin = nmin;
            kmax = nmax;
        }
    }

    let w = PARTITION_HALF_WIDTH as f64 * dx;
    let edges: Vec<f64> = boundaries.iter().map(|&j| grid.x(j) - 0.5 * dx).collect();
    let n_cells = edges.len() + 1;
    let mut cells = Vec::with_capacity(n_cells);
    let mut ks = Vec::with_capacity(n_cells);
    let mut components = Vec::with_capacity(n_cells);
    let core_bounds: Vec<usize> = std::iter::once(lo)
        .chain(boundaries.iter().copied())
        .chain(std::iter::once(hi + 1))
        .collect();
    for i in 0..n_cells {
        let left = if i == 0 {
            f64::NEG_INFINITY
        } else {
            edges[i - 1]
        };
        let right = if i + 1 == n_cells {
            f64::INFINITY
        } else {
            edges[i]
        };
        cells.push((left.max(grid.x_min()), right.min(grid.x_max())));
        let (a, b) = (core_bounds[i], core_bounds[i + 1]);
        let (mn, mx) = (a..b)
            .filter(|&j| !ls.masked[j])
            .map(|j| ls.k_field[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(m, n), k| {
                (m.min(k), n.max(k))
            });
        ks.push(0.5 * (mn + mx));
        let amps: Vec<Complex64> = psi
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let x = grid.x(j);
                let up = if left.is_finite() {
                    raised_cosine_step(x - left, w)
                } else {
                    1.0
                };
                let down = if right.is_finite() {
                    raised_cosine_step(x - right, w)
                } else {
                    0.0
                };
                v * (up - down)
            })
            .collect();
        components.push(WaveField::from_parts_unchecked(
            grid,
            amps,
            psi.time(),
            psi.units(),
        ));
    }
    Ok(PacketDecomposition {
        cells,
        k: ks,
        components,
    })
}

/// Fourier transform `(2 pi)^{-1/2} int psi(x) e^{-ikx} dx` at the grid wavenumbers.
fn continuous_transform(psi: &WaveField) -> (Vec<f64>, Vec<Complex64>) {
    let grid = psi.grid();
    let ks = spectral::wavenumbers(grid);
    let hat = spectral::fft(psi.amplitudes());
    let x0 = grid.x_min();
    let c = grid.dx() / (2.0 * PI).sqrt();
    let values = hat
        .iter()
        .zip(&ks)
        .map(|(h, &k)| h * Complex64::from_polar(c, -k * x0))
        .collect();
    (ks, values)
}

/// Exact free evolution by `exp(-i hbar k^2 t / 2m)` in Fourier space.
pub fn free_evolve(psi0: &WaveField, t: f64) -> WaveField {
    let grid = *psi0.grid();
    let ks = spectral::wavenumbers(&grid);
    let (hbar, m) = (psi0.hbar(), psi0.mass());
    let mut buf = psi0.amplitudes().to_vec();
    spectral::fft_in_place(&mut buf);
    for (v, k) in buf.iter_mut().zip(&ks) {
        *v *= Complex64::from_polar(1.0, -hbar * k * k * t / (2.0 * m));
    }
    spectral::ifft_in_place(&mut buf);
    WaveField::from_parts_unchecked(grid, buf, psi0.time() + t, psi0.units())
}

/// Long-time free asymptotics `(m / (i hbar t))^{1/2} e^{i m x^2 / 2 hbar t} psi_hat(m x / hbar t)`
/// and its relative L2 error against exact free evolution on the core of the exact wave.
pub fn stationary_phase_oracle(
    psi0: &WaveField,
    pot: &PotentialSpec,
    t: f64,
) -> Result<(WaveField, f64)> {
    if !pot.is_free() {
        return Err(Error::NonFreePotential);
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "stationary phase needs t > 0, got {t}"
        )));
    }
    let grid = *psi0.grid();
    let (hbar, m) = (psi0.hbar(), psi0.mass());
    let (ks, hat) = continuous_transform(psi0);
    // reorder to ascending k for interpolation
    let n = grid.n();
    let half = n / 2;
    let k_sorted: Vec<f64> = (0..n).map(|i| ks[(i + half) % n]).collect();
    let hat_sorted: Vec<Complex64> = (0..n).map(|i| hat[(i + half) % n]).collect();
    let k_grid = Grid::new(
        k_sorted[0],
        k_sorted[0] + n as f64 * (k_sorted[1] - k_sorted[0]),
        n,
    )?;
    let prefactor = (Complex64::new(0.0, -m / (hbar * t))).sqrt();
    let approx: Vec<Complex64> = grid
        .points()
        .map(|x| {
            let k = m * x / (hbar * t);
            if k < k_sorted[0] || k > k_sorted[n - 1] {
                return Complex64::new(0.0, 0.0);
            }
            let h = interp::cubic(&hat_sorted, &k_grid, k);
            prefactor * Complex64::from_polar(1.0, m * x * x / (2.0 * hbar * t)) * h
        })
        .collect();
    let exact = free_evolve(psi0, t);
    let (lo, hi) = core_region(&exact, CORE_MASS);
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, e) in approx[lo..=hi].iter().zip(&exact.amplitudes()[lo..=hi]) {
        num += (a - e).norm_sqr();
        den += e.norm_sqr();
    }
    let approx = WaveField::from_parts_unchecked(grid, approx, psi0.time() + t, psi0.units());
    Ok((approx, (num / den).sqrt()))
}

/// `p = hbar k(X)` for every particle at every recorded time.
pub fn momentum_readout(
    ensemble: &TrajectoryEnsemble,
    snapshots: &[WaveField],
) -> Result<Vec<Vec<f64>>> {
    if snapshots.len() != ensemble.times.len() {
        return Err(Error::LengthMismatch {
            expected: ensemble.times.len(),
            got: snapshots.len(),
        });
    }
    let fields: Vec<LocalStructure> = snapshots
        .iter()
        .map(|s| local_structure(s, DEFAULT_LPW_THRESHOLD))
        .collect::<Result<_>>()?;
    ensemble
        .positions
        .iter()
        .map(|path| {
            path.iter()
                .zip(&fields)
                .zip(snapshots)
                .map(|((&x, f), s)| {
                    let (idx, w) = interp::stencil(s.grid(), x);
                    if idx.iter().any(|&j| f.masked[j]) {
                        return Err(Error::NearNode { x });
                    }
                    let k: f64 = idx.iter().zip(&w).map(|(&j, &wj)| f.k_field[j] * wj).sum();
                    Ok(s.hbar() * k)
                })
                .collect()
        })
        .collect()
}

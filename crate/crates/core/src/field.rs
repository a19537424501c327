//! Grid representation of the one-body wave function.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spectral;
use crate::{Error, Result};

/// Default relative threshold below which a grid point counts as a node.
pub const DEFAULT_NODE_FLOOR: f64 = 1e-6;

/// Uniform periodic grid `x_j = x_min + j dx`, `j = 0..n`, wrapping at `x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two >= 8"
            )));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Grid { x_min, x_max, n })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.x(j))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x < self.x_max
    }

    /// Largest retained wavenumber `pi / dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx()
    }

    /// Nearest grid index to `x` (clamped, no wrap).
    pub fn index_of(&self, x: f64) -> usize {
        let j = ((x - self.x_min) / self.dx()).round();
        j.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// Reduced Planck constant and particle mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

/// Wave function sampled on a [`Grid`] at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: Grid,
    amplitudes: Vec<Complex64>,
    time: f64,
    units: Units,
}

impl WaveField {
    /// Wraps raw amplitudes and normalizes them.
    pub fn new(grid: Grid, amplitudes: Vec<Complex64>, time: f64, units: Units) -> Result<Self> {
        if amplitudes.len() != grid.n() {
            return Err(Error::LengthMismatch {
                expected: grid.n(),
                got: amplitudes.len(),
            });
        }
        if amplitudes
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::InvalidArgument("amplitudes must be finite".into()));
        }
        let mut psi = WaveField {
            grid,
            amplitudes,
            time,
            units,
        };
        let norm = psi.norm_sq();
        if norm <= 0.0 {
            return Err(Error::InvalidArgument("wave function has zero norm".into()));
        }
        let s = norm.sqrt().recip();
        psi.amplitudes.iter_mut().for_each(|v| *v *= s);
        Ok(psi)
    }

    /// Builds from a closure evaluated at the grid points.
    pub fn from_fn(grid: Grid, units: Units, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let amps = grid.points().map(f).collect();
        WaveField::new(grid, amps, 0.0, units)
    }

    /// Used by the propagator, which preserves the norm by construction.
    pub(crate) fn from_parts_unchecked(
        grid: Grid,
        amplitudes: Vec<Complex64>,
        time: f64,
        units: Units,
    ) -> Self {
        WaveField {
            grid,
            amplitudes,
            time,
            units,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn hbar(&self) -> f64 {
        self.units.hbar
    }

    pub fn mass(&self) -> f64 {
        self.units.mass
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitudes.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn mean_position(&self) -> f64 {
        let dx = self.grid.dx();
        self.amplitudes
            .iter()
            .zip(self.grid.points())
            .map(|(v, x)| x * v.norm_sqr())
            .sum::<f64>()
            * dx
    }

    pub fn position_variance(&self) -> f64 {
        let mean = self.mean_position();
        let dx = self.grid.dx();
        self.amplitudes
            .iter()
            .zip(self.grid.points())
            .map(|(v, x)| (x - mean).powi(2) * v.norm_sqr())
            .sum::<f64>()
            * dx
    }

    /// `<p>` evaluated in Fourier space.
    pub fn mean_momentum(&self) -> f64 {
        let hat = spectral::fft(&self.amplitudes);
        let ks = spectral::wavenumbers(&self.grid);
        let w = self.grid.dx() / self.grid.n() as f64;
        self.units.hbar
            * hat
                .iter()
                .zip(&ks)
                .map(|(v, k)| k * v.norm_sqr())
                .sum::<f64>()
            * w
    }

    /// Ratio of the largest amplitude in the outer 2% of the grid to the global maximum.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.amplitudes.len();
        let m = (n / 50).max(1);
        let edge = self.amplitudes[..m]
            .iter()
            .chain(&self.amplitudes[n - m..])
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        edge / self.max_abs()
    }

    /// Writes `x,re_psi,im_psi,abs2` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,re_psi,im_psi,abs2")?;
        for (x, v) in self.grid.points().zip(&self.amplitudes) {
            writeln!(
                w,
                "{x:.17e},{:.17e},{:.17e},{:.17e}",
                v.re,
                v.im,
                v.norm_sqr()
            )?;
        }
        Ok(())
    }

    /// Binary snapshot: one JSON header line, then little-endian `f64` pairs `(re, im)`.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let header = SnapshotHeader {
            grid: self.grid,
            time: self.time,
            hbar: self.units.hbar,
            mass: self.units.mass,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in &self.amplitudes {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: SnapshotHeader = serde_json::from_str(line.trim_end())?;
        let grid = Grid::new(header.grid.x_min, header.grid.x_max, header.grid.n)?;
        let mut buf = [0u8; 8];
        let mut amps = Vec::with_capacity(grid.n());
        for _ in 0..grid.n() {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf);
            r.read_exact(&mut buf)?;
            let im = f64::from_le_bytes(buf);
            amps.push(Complex64::new(re, im));
        }
        Ok(WaveField {
            grid,
            amplitudes: amps,
            time: header.time,
            units: Units {
                hbar: header.hbar,
                mass: header.mass,
            },
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    grid: Grid,
    time: f64,
    hbar: f64,
    mass: f64,
}

/// Normalized sum of wave functions sharing a grid.
pub fn superpose(parts: &[WaveField]) -> Result<WaveField> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("superpose needs at least one component".into()))?;
    let mut amps = vec![Complex64::new(0.0, 0.0); first.grid.n()];
    for p in parts {
        if p.grid != first.grid {
            return Err(Error::InvalidArgument(
                "components live on different grids".into(),
            ));
        }
        for (a, b) in amps.iter_mut().zip(&p.amplitudes) {
            *a += b;
        }
    }
    WaveField::new(first.grid, amps, first.time, first.units)
}

/// Gaussian packet `exp(-(x-c)^2 / 4 sigma^2) exp(i k0 x)` in natural units.
pub fn make_gaussian(grid: Grid, center: f64, sigma: f64, k0: f64) -> Result<WaveField> {
    make_gaussian_in(grid, center, sigma, k0, Units::default())
}

pub fn make_gaussian_in(
    grid: Grid,
    center: f64,
    sigma: f64,
    k0: f64,
    units: Units,
) -> Result<WaveField> {
    let dx = grid.dx();
    if !(sigma > 2.0 * dx) {
        return Err(Error::SigmaUnderresolved { sigma, dx });
    }
    let (lo, hi) = (center - 6.0 * sigma, center + 6.0 * sigma);
    if lo < grid.x_min() || hi > grid.x_max() {
        return Err(Error::EdgeOverlap { lo, hi });
    }
    WaveField::from_fn(grid, units, |x| {
        let env = (-(x - center).powi(2) / (4.0 * sigma * sigma)).exp();
        Complex64::from_polar(env, k0 * x)
    })
}

/// Amplitude / phase-action split `psi = R exp(i S / hbar)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPair {
    pub r: Vec<f64>,
    /// Phase action in units of action (not divided by hbar).
    pub s: Vec<f64>,
    /// `true` where `R < node_floor * max R`; `s` is not meaningful there.
    pub node_mask: Vec<bool>,
    pub hbar: f64,
}

impl PolarPair {
    pub fn recompose(&self) -> Vec<Complex64> {
        self.r
            .iter()
            .zip(&self.s)
            .map(|(&r, &s)| Complex64::from_polar(r, s / self.hbar))
            .collect()
    }

    pub fn first_valid(&self) -> Option<usize> {
        self.node_mask.iter().position(|m| !m)
    }
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Polar decomposition with left-to-right phase unwrapping through non-node points.
pub fn polar_decompose(psi: &WaveField, node_floor: f64) -> Result<PolarPair> {
    if !(node_floor > 0.0 && node_floor <= 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "node_floor {node_floor} outside (0, 1e-2]"
        )));
    }
    let hbar = psi.hbar();
    let threshold = node_floor * psi.max_abs();
    let r: Vec<f64> = psi.amplitudes.iter().map(|v| v.norm()).collect();
    let node_mask: Vec<bool> = r.iter().map(|&v| v < threshold).collect();
    let start = node_mask.iter().position(|m| !m).ok_or(Error::AllNodes)?;

    let mut s = vec![0.0; r.len()];
    let mut phase = wrap_pi(psi.amplitudes[start].arg());
    let mut last_arg = psi.amplitudes[start].arg();
    for j in 0..r.len() {
        if j > start && !node_mask[j] {
            let a = psi.amplitudes[j].arg();
            phase += wrap_pi(a - last_arg);
            last_arg = a;
        }
        // masked points and the leading masked run carry the last valid phase
        s[j] = hbar * phase;
    }
    Ok(PolarPair {
        r,
        s,
        node_mask,
        hbar,
    })
}

/// `<psi, -(hbar^2/2m) d^2/dx^2 psi>` evaluated spectrally.
pub fn kinetic_energy(psi: &WaveField) -> f64 {
    let hat = spectral::fft(&psi.amplitudes);
    let ks = spectral::wavenumbers(&psi.grid);
    let w = psi.grid.dx() / psi.grid.n() as f64;
    let Units { hbar, mass } = psi.units;
    hat.iter()
        .zip(&ks)
        .map(|(v, k)| hbar * hbar * k * k / (2.0 * mass) * v.norm_sqr())
        .sum::<f64>()
        * w
}

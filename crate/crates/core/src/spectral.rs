//! FFT-backed calculus on the periodic grid.
//!
//! Transforms follow the unnormalized forward / `1/n` inverse convention, so
//! `ifft(fft(f)) == f` and the discrete Parseval identity reads
//! `sum |f_j|^2 dx == (dx / n) sum |f_hat_k|^2`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::Grid;

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> Plans {
    type Cache = Mutex<(FftPlanner<f64>, HashMap<usize, Plans>)>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, map) = &mut *guard;
    if let Some(p) = map.get(&n) {
        return p.clone();
    }
    let p = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    map.insert(n, p.clone());
    p
}

/// Forward transform in place (unnormalized).
pub fn fft_in_place(buf: &mut [Complex64]) {
    let (fwd, _) = plans(buf.len());
    fwd.process(buf);
}

/// Inverse transform in place, including the `1/n` factor.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    let (_, inv) = plans(n);
    inv.process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn fft(f: &[Complex64]) -> Vec<Complex64> {
    let mut buf = f.to_vec();
    fft_in_place(&mut buf);
    buf
}

pub fn ifft(f: &[Complex64]) -> Vec<Complex64> {
    let mut buf = f.to_vec();
    ifft_in_place(&mut buf);
    buf
}

/// Angular wavenumbers in FFT order: `0, dk, ..., -(n/2) dk, ..., -dk`.
pub fn wavenumbers(grid: &Grid) -> Vec<f64> {
    let n = grid.n();
    let dk = 2.0 * std::f64::consts::PI / grid.length();
    (0..n)
        .map(|j| {
            if j < n / 2 {
                j as f64 * dk
            } else {
                (j as f64 - n as f64) * dk
            }
        })
        .collect()
}

/// `order`-th derivative through the Fourier multiplier `(ik)^order`.
///
/// The Nyquist mode has no well-defined odd derivative and is zeroed for odd
/// orders.
pub fn derivative(f: &[Complex64], grid: &Grid, order: u32) -> Vec<Complex64> {
    let n = grid.n();
    assert_eq!(f.len(), n, "derivative: length mismatch");
    let ks = wavenumbers(grid);
    let mut buf = fft(f);
    for (j, (v, &k)) in buf.iter_mut().zip(ks.iter()).enumerate() {
        if order % 2 == 1 && j == n / 2 {
            *v = Complex64::new(0.0, 0.0);
            continue;
        }
        *v *= Complex64::new(0.0, k).powu(order);
    }
    ifft_in_place(&mut buf);
    buf
}

/// The Fourier-multiplier gradient `ik`.
pub fn spectral_gradient(f: &[Complex64], grid: &Grid) -> crate::Result<Vec<Complex64>> {
    if f.len() != grid.n() {
        return Err(crate::Error::LengthMismatch {
            expected: grid.n(),
            got: f.len(),
        });
    }
    Ok(derivative(f, grid, 1))
}

/// Real-valued convenience wrapper around [`derivative`].
pub fn derivative_real(f: &[f64], grid: &Grid, order: u32) -> Vec<f64> {
    let c: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    derivative(&c, grid, order)
        .into_iter()
        .map(|v| v.re)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn commensurate() -> Grid {
        Grid::new(-PI, PI, 64).unwrap()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_of_fourier_mode() {
        let g = commensurate();
        let f: Vec<_> = g
            .points()
            .map(|x| Complex64::new(0.0, 3.0 * x).exp())
            .collect();
        let want: Vec<_> = f.iter().map(|v| Complex64::new(0.0, 3.0) * v).collect();
        let got = spectral_gradient(&f, &g).unwrap();
        assert!(max_err(&got, &want) < 1e-10);
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = commensurate();
        let f = vec![Complex64::new(1.0, 0.0); g.n()];
        let got = spectral_gradient(&f, &g).unwrap();
        assert!(got.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn gradient_of_sine_is_cosine() {
        let g = commensurate();
        let f: Vec<_> = g.points().map(|x| Complex64::new(x.sin(), 0.0)).collect();
        let want: Vec<_> = g.points().map(|x| Complex64::new(x.cos(), 0.0)).collect();
        assert!(max_err(&spectral_gradient(&f, &g).unwrap(), &want) < 1e-10);
    }

    #[test]
    fn gradient_rejects_wrong_length() {
        let g = commensurate();
        let f = vec![Complex64::new(1.0, 0.0); 10];
        assert!(spectral_gradient(&f, &g).is_err());
    }

    #[test]
    fn gradient_matches_fourth_order_differences() {
        // smooth, effectively periodic test function
        let g = Grid::new(-20.0, 20.0, 512).unwrap();
        let dx = g.dx();
        let f: Vec<_> = g
            .points()
            .map(|x| Complex64::new((-x * x / 4.0).exp() * (2.0 * x).cos(), 0.0))
            .collect();
        let d = spectral_gradient(&f, &g).unwrap();
        let n = g.n();
        let mut worst: f64 = 0.0;
        for j in 2..n - 2 {
            let fd = (-f[j + 2] + 8.0 * f[j + 1] - 8.0 * f[j - 1] + f[j - 2]) / (12.0 * dx);
            worst = worst.max((fd - d[j]).norm());
        }
        // fifth derivative of f is O(50); error constant dx^4/30
        assert!(worst < 60.0 * dx.powi(4), "worst {worst}");
    }

    #[test]
    fn parseval_holds() {
        let g = Grid::new(-10.0, 10.0, 256).unwrap();
        let f: Vec<_> = g
            .points()
            .map(|x| Complex64::new((-x * x).exp(), (x / 3.0).sin() * (-x * x / 2.0).exp()))
            .collect();
        let direct: f64 = f.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dx();
        let spec: f64 = fft(&f).iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dx() / g.n() as f64;
        assert!((direct - spec).abs() < 1e-10);
    }
}

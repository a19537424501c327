//! Four-point Lagrange interpolation on the periodic grid.

use std::ops::{Add, Mul};

use crate::field::Grid;

/// Stencil start index (wrapped) and weights for the point `x`.
///
/// The stencil covers grid indices `j-1, j, j+1, j+2` with `x_j <= x < x_{j+1}`.
pub fn stencil(grid: &Grid, x: f64) -> ([usize; 4], [f64; 4]) {
    let n = grid.n() as isize;
    let s = (x - grid.x_min()) / grid.dx();
    let j = s.floor();
    let p = s - j;
    let j = j as isize;
    let idx = [j - 1, j, j + 1, j + 2].map(|i| i.rem_euclid(n) as usize);
    let w = [
        -p * (p - 1.0) * (p - 2.0) / 6.0,
        (p + 1.0) * (p - 1.0) * (p - 2.0) / 2.0,
        -(p + 1.0) * p * (p - 2.0) / 2.0,
        (p + 1.0) * p * (p - 1.0) / 6.0,
    ];
    (idx, w)
}

pub fn cubic<T>(values: &[T], grid: &Grid, x: f64) -> T
where
    T: Copy + Mul<f64, Output = T> + Add<Output = T>,
{
    let (idx, w) = stencil(grid, x);
    values[idx[0]] * w[0] + values[idx[1]] * w[1] + values[idx[2]] * w[2] + values[idx[3]] * w[3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubic_polynomials() {
        let g = Grid::new(-4.0, 4.0, 64).unwrap();
        let f = |x: f64| 0.5 * x * x * x - x * x + 2.0 * x - 1.0;
        let vals: Vec<f64> = g.points().map(f).collect();
        for &x in &[-1.23, 0.0, 0.017, 2.5, 3.1] {
            assert!((cubic(&vals, &g, x) - f(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn reproduces_grid_values() {
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let vals: Vec<f64> = (0..16).map(|j| (j * j) as f64).collect();
        for j in 0..16 {
            assert!((cubic(&vals, &g, g.x(j)) - vals[j]).abs() < 1e-12);
        }
    }
}

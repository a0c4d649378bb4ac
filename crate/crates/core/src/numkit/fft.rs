//! Radix-2 two-dimensional FFT on square row-major grids.
//!
//! Both directions are unnormalized: `ifft2(fft2(x)) == n² · x`.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::NumError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

fn check_size(n: usize, len: usize) -> Result<(), NumError> {
    if n == 0 || !n.is_power_of_two() {
        return Err(NumError::NotPowerOfTwo(n));
    }
    if len != n * n {
        return Err(NumError::DimensionMismatch {
            expected: n * n,
            found: len,
        });
    }
    Ok(())
}

/// In-place iterative Cooley-Tukey transform of a power-of-two length slice.
pub fn fft1_in_place(data: &mut [Complex64], dir: Direction) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let sign = match dir {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for chunk in data.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
            }
        }
        len *= 2;
    }
}

fn transform2(grid: &mut [Complex64], n: usize, dir: Direction) -> Result<(), NumError> {
    check_size(n, grid.len())?;
    for row in grid.chunks_exact_mut(n) {
        fft1_in_place(row, dir);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            column[i] = grid[i * n + j];
        }
        fft1_in_place(&mut column, dir);
        for i in 0..n {
            grid[i * n + j] = column[i];
        }
    }
    Ok(())
}

/// Forward 2-D DFT, `X[k1,k2] = Σ x[j1,j2] exp(-2πi (k1 j1 + k2 j2)/n)`.
pub fn fft2(grid: &mut [Complex64], n: usize) -> Result<(), NumError> {
    transform2(grid, n, Direction::Forward)
}

/// Unnormalized inverse 2-D DFT (positive exponent, no 1/n² factor).
pub fn ifft2(grid: &mut [Complex64], n: usize) -> Result<(), NumError> {
    transform2(grid, n, Direction::Inverse)
}

pub fn real_to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

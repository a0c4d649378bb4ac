//! Summed-area tables for constant-time rectangle sums.

use std::ops::{Add, Sub};

use super::NumError;

/// Entry types a table can accumulate.
pub trait TableValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> {
    fn to_f64(self) -> f64;
}

impl TableValue for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

impl TableValue for i64 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// `(rows+1) × (cols+1)` prefix sums; `cumulative[(i, j)]` is the sum of all
/// entries strictly above and to the left of `(i, j)`.
#[derive(Debug, Clone)]
pub struct SummedAreaTable<T> {
    rows: usize,
    cols: usize,
    cumulative: Vec<T>,
}

impl<T: TableValue> SummedAreaTable<T> {
    /// Builds the table from a row-major `rows × cols` grid.
    pub fn new(rows: usize, cols: usize, values: &[T]) -> Self {
        assert_eq!(values.len(), rows * cols);
        let stride = cols + 1;
        let mut cumulative = vec![T::default(); (rows + 1) * stride];
        for i in 0..rows {
            let mut row_sum = T::default();
            for j in 0..cols {
                row_sum = row_sum + values[i * cols + j];
                cumulative[(i + 1) * stride + j + 1] = cumulative[i * stride + j + 1] + row_sum;
            }
        }
        Self {
            rows,
            cols,
            cumulative,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sum over rows `i0..i1` and columns `j0..j1` (half-open), unchecked.
    #[inline]
    pub fn rect_sum(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> T {
        let s = self.cols + 1;
        let c = &self.cumulative;
        c[i1 * s + j1] - c[i0 * s + j1] - c[i1 * s + j0] + c[i0 * s + j0]
    }

    /// Checked sum over the rectangle `[i0, i1) × [j0, j1)`.
    pub fn box_sum(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> Result<T, NumError> {
        if i0 > i1 || j0 > j1 || i1 > self.rows || j1 > self.cols {
            return Err(NumError::BoxOutOfBounds {
                top: i0,
                left: j0,
                side: i1.saturating_sub(i0).max(j1.saturating_sub(j0)),
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.rect_sum(i0, j0, i1, j1))
    }

    /// Mean over the `side × side` square with top-left corner `(top, left)`.
    pub fn box_mean(&self, top: usize, left: usize, side: usize) -> Result<f64, NumError> {
        if side == 0 || top + side > self.rows || left + side > self.cols {
            return Err(NumError::BoxOutOfBounds {
                top,
                left,
                side,
                rows: self.rows,
                cols: self.cols,
            });
        }
        let sum = self.rect_sum(top, left, top + side, left + side).to_f64();
        Ok(sum / (side * side) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[test]
    fn all_ones_mean_is_one() {
        let t = SummedAreaTable::new(5, 5, &[1.0f64; 25]);
        for side in 1..=5 {
            for top in 0..=5 - side {
                for left in 0..=5 - side {
                    assert_eq!(t.box_mean(top, left, side).unwrap(), 1.0);
                }
            }
        }
    }

    #[test]
    fn two_by_two_average() {
        let t = SummedAreaTable::new(2, 2, &[1.0f64, 0.0, 0.0, 3.0]);
        assert_eq!(t.box_mean(0, 0, 2).unwrap(), 1.0);
    }

    #[test]
    fn random_grid_matches_brute_force() {
        let mut rng = Rng::new(8);
        let n = 16;
        let grid: Vec<f64> = (0..n * n).map(|_| rng.standard_normal()).collect();
        let t = SummedAreaTable::new(n, n, &grid);
        for side in 1..=8 {
            for top in 0..=n - side {
                for left in 0..=n - side {
                    let mut s = 0.0;
                    for i in top..top + side {
                        for j in left..left + side {
                            s += grid[i * n + j];
                        }
                    }
                    let brute = s / (side * side) as f64;
                    let fast = t.box_mean(top, left, side).unwrap();
                    assert!((fast - brute).abs() <= 1e-12 * brute.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn integer_sums_are_exact() {
        let mut rng = Rng::new(10);
        let n = 32;
        let grid: Vec<i64> = (0..n * n).map(|_| rng.poisson(40.0).unwrap() as i64).collect();
        let t = SummedAreaTable::new(n, n, &grid);
        for (top, left, side) in [(0, 0, 32), (3, 5, 7), (31, 31, 1), (10, 0, 20)] {
            let brute: i64 = (top..top + side)
                .flat_map(|i| (left..left + side).map(move |j| (i, j)))
                .map(|(i, j)| grid[i * n + j])
                .sum();
            assert_eq!(t.box_sum(top, left, top + side, left + side).unwrap(), brute);
        }
    }

    #[test]
    fn out_of_bounds_rejected() {
        let t = SummedAreaTable::new(4, 4, &[0.0f64; 16]);
        assert!(t.box_mean(2, 2, 3).is_err());
        assert!(t.box_mean(0, 0, 0).is_err());
        assert!(t.box_sum(0, 0, 5, 1).is_err());
    }
}

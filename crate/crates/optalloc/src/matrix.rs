//! Minimal dense matrix support for the small `J x J` and `N x J`
//! matrices this crate works with, plus a cyclic Jacobi eigensolver for
//! symmetric matrices (used for positive-semidefiniteness verdicts).

use alloc::vec::Vec;

/// Row-major dense `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: alloc::vec![0.0; rows * cols],
        }
    }

    /// Build from nested rows. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self - other`; panics on shape mismatch.
    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }

    /// Eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi
    /// rotations. Panics if the matrix is not square.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        assert_eq!(self.rows, self.cols, "eigenvalues need a square matrix");
        let n = self.rows;
        if n == 0 {
            return Vec::new();
        }
        let mut a = self.data.clone();
        let idx = |r: usize, c: usize| r * n + c;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);

        for _sweep in 0..64 {
            let mut off = 0.0;
            for r in 0..n {
                for c in (r + 1)..n {
                    off += a[idx(r, c)] * a[idx(r, c)];
                }
            }
            if libm::sqrt(off) <= 1e-15 * scale {
                break;
            }
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    let apq = a[idx(p, q)];
                    if libm::fabs(apq) <= 1e-300 {
                        continue;
                    }
                    let theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                    } else {
                        -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                    };
                    let c = 1.0 / libm::sqrt(t * t + 1.0);
                    let s = t * c;
                    // Rotate rows/columns p and q.
                    for i in 0..n {
                        let aip = a[idx(i, p)];
                        let aiq = a[idx(i, q)];
                        a[idx(i, p)] = c * aip - s * aiq;
                        a[idx(i, q)] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let api = a[idx(p, i)];
                        let aqi = a[idx(q, i)];
                        a[idx(p, i)] = c * api - s * aqi;
                        a[idx(q, i)] = s * api + c * aqi;
                    }
                }
            }
        }

        let mut eig: Vec<f64> = (0..n).map(|i| a[idx(i, i)]).collect();
        eig.sort_by(f64::total_cmp);
        eig
    }
}

/// Neumaier-compensated accumulator; the running error term makes the sum
/// insensitive to magnitude ordering.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if libm::fabs(self.sum) >= libm::fabs(v) {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jacobi_matches_known_spectrum() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let m = Mat::from_rows(&[alloc::vec![2.0, 1.0], alloc::vec![1.0, 2.0]]);
        let e = m.sym_eigenvalues();
        assert_abs_diff_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn jacobi_matches_nalgebra_on_random_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for n in [2usize, 3, 5, 8] {
            let mut m = Mat::zeros(n, n);
            for r in 0..n {
                for c in r..n {
                    let v: f64 = rng.gen_range(-3.0..3.0);
                    m.set(r, c, v);
                    m.set(c, r, v);
                }
            }
            let ours = m.sym_eigenvalues();
            let na = nalgebra::DMatrix::from_fn(n, n, |r, c| m.get(r, c))
                .symmetric_eigen()
                .eigenvalues;
            let mut theirs: Vec<f64> = na.iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (a, b) in ours.iter().zip(&theirs) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }
}

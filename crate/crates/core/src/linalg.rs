//! Sparse helpers and banded direct solvers.
//!
//! Structured phantom meshes numbered row by row give global operators with
//! bandwidth about `2 (nx + 2)`, so banded LU (for the indefinite harmonic
//! operator) and banded Cholesky (for the noise covariance) are the direct
//! factorizations used throughout.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

pub type Csr = CsrMatrix<f64>;

/// `y = A x`.
pub fn csr_mul(a: &Csr, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    a.row_iter()
        .map(|row| {
            row.col_indices()
                .iter()
                .zip(row.values())
                .map(|(&j, &v)| v * x[j])
                .sum()
        })
        .collect()
}

/// `y = A^T x`.
pub fn csr_mul_transpose(a: &Csr, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.nrows(), x.len());
    let mut y = vec![0.0; a.ncols()];
    for (i, row) in a.row_iter().enumerate() {
        let xi = x[i];
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            y[j] += v * xi;
        }
    }
    y
}

/// Sums duplicate triplets into a CSR matrix.
pub fn csr_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> Csr {
    let mut coo = CooMatrix::new(nrows, ncols);
    for (i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

pub fn csr_to_dense(a: &Csr) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, &v) in a.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

/// Linear combination `alpha A + beta B` of equally shaped matrices.
pub fn csr_axpby(alpha: f64, a: &Csr, beta: f64, b: &Csr) -> Csr {
    csr_from_triplets(
        a.nrows(),
        a.ncols(),
        a.triplet_iter()
            .map(|(i, j, &v)| (i, j, alpha * v))
            .chain(b.triplet_iter().map(|(i, j, &v)| (i, j, beta * v))),
    )
}

/// Largest `|i - j|` over the stored entries of a square matrix.
pub fn bandwidth(a: &Csr) -> usize {
    a.triplet_iter()
        .map(|(i, j, _)| i.abs_diff(j))
        .max()
        .unwrap_or(0)
}

/// Maximum absolute asymmetry `max |A_ij - A_ji|`.
pub fn asymmetry(a: &Csr) -> f64 {
    let t = a.transpose();
    csr_axpby(1.0, a, -1.0, &t)
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// LU factorization with partial pivoting of a square banded matrix.
///
/// Row `i` is stored over columns `i - kl ..= i + ku + kl`; the extra `kl`
/// superdiagonals absorb fill-in from row interchanges. Multipliers are kept
/// unpermuted, as in LAPACK's `gbtrf`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    condition_estimate: f64,
}

impl BandedLu {
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "banded LU (square)",
                expected: n,
                actual: a.ncols(),
            });
        }
        let kl = bandwidth(a);
        let ku = kl;
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
            condition_estimate: 0.0,
        };
        for (i, j, &v) in a.triplet_iter() {
            let k = lu.idx(i, j);
            lu.data[k] += v;
        }
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut max_pivot = 0.0f64;
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.pivots[k] = p;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular {
                    condition_estimate: f64::INFINITY,
                });
            }
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            max_pivot = max_pivot.max(pivot.abs());
            min_pivot = min_pivot.min(pivot.abs());
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        self.condition_estimate = max_pivot / min_pivot;
        Ok(())
    }

    /// Ratio of largest to smallest pivot magnitude; a cheap lower-bound
    /// style indicator, not a true condition number.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    x[i] -= self.data[self.idx(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + ku + kl).min(n - 1) {
                s -= self.data[self.idx(k, j)] * x[j];
            }
            x[k] = s / self.data[self.idx(k, k)];
        }
        x
    }
}

/// Cholesky factorization `A = L L^T` of a symmetric positive definite
/// banded matrix. Only the lower band of the input is read.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    kb: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "banded Cholesky (square)",
                expected: n,
                actual: a.ncols(),
            });
        }
        let kb = bandwidth(a);
        let mut ch = Self {
            n,
            kb,
            data: vec![0.0; n * (kb + 1)],
        };
        for (i, j, &v) in a.triplet_iter() {
            if j <= i {
                let k = ch.idx(i, j);
                ch.data[k] += v;
            }
        }
        for j in 0..n {
            let j0 = j.saturating_sub(kb);
            let mut d = ch.data[ch.idx(j, j)];
            for k in j0..j {
                let l = ch.data[ch.idx(j, k)];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            let jj = ch.idx(j, j);
            ch.data[jj] = d;
            for i in j + 1..=(j + kb).min(n - 1) {
                let i0 = i.saturating_sub(kb).max(j0);
                let mut s = ch.data[ch.idx(i, j)];
                for k in i0..j {
                    s -= ch.data[ch.idx(i, k)] * ch.data[ch.idx(j, k)];
                }
                let ij = ch.idx(i, j);
                ch.data[ij] = s / d;
            }
        }
        Ok(ch)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kb + 1) + (j + self.kb - i)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kb) = (self.n, self.kb);
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(kb)..i {
                s -= self.data[self.idx(i, k)] * x[k];
            }
            x[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..=(i + kb).min(n - 1) {
                s -= self.data[self.idx(k, i)] * x[k];
            }
            x[i] = s / self.data[self.idx(i, i)];
        }
        x
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n)
            .map(|i| 2.0 * self.data[self.idx(i, i)].ln())
            .sum()
    }

    pub fn min_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[self.idx(i, i)].powi(2))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, bw: usize, seed: u64, diag_boost: f64) -> Csr {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                let mut v: f64 = rng.random_range(-1.0..1.0);
                if i == j {
                    v += diag_boost;
                }
                t.push((i, j, v));
            }
        }
        csr_from_triplets(n, n, t)
    }

    #[test]
    fn banded_lu_matches_dense_solve() {
        // Zero diagonal shift forces row interchanges.
        for (seed, boost) in [(1, 0.0), (2, 0.1), (3, 5.0)] {
            let a = random_band(40, 4, seed, boost);
            let lu = BandedLu::factor(&a).unwrap();
            let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
            let x = lu.solve(&b);
            let r = csr_mul(&a, &x);
            let err: f64 = r
                .iter()
                .zip(&b)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "seed {seed}: residual {err}");
        }
    }

    #[test]
    fn banded_lu_detects_singular() {
        let a = csr_from_triplets(
            3,
            3,
            [
                (0, 0, 1.0),
                (0, 1, 2.0),
                (1, 0, 2.0),
                (1, 1, 4.0),
                (2, 2, 1.0),
            ],
        );
        let err = BandedLu::factor(&a);
        assert!(
            matches!(err, Err(Error::Singular { .. })) || err.unwrap().condition_estimate() > 1e14
        );
    }

    #[test]
    fn banded_cholesky_solve_and_logdet() {
        let a0 = random_band(30, 3, 9, 0.0);
        let d0 = csr_to_dense(&a0);
        let spd = &d0 * d0.transpose() + DMatrix::identity(30, 30);
        let a = csr_from_triplets(
            30,
            30,
            (0..30)
                .flat_map(|i| (0..30).map(move |j| (i, j)))
                .filter_map(|(i, j)| {
                    let v = spd[(i, j)];
                    (v != 0.0).then_some((i, j, v))
                }),
        );
        let ch = BandedCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..30).map(|i| i as f64 * 0.1 - 1.0).collect();
        let x = ch.solve(&b);
        let r = csr_mul(&a, &x);
        for (p, q) in r.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
        let dense_ld = spd
            .clone()
            .cholesky()
            .unwrap()
            .l()
            .diagonal()
            .iter()
            .map(|v| 2.0 * v.ln())
            .sum::<f64>();
        assert!((ch.log_det() - dense_ld).abs() < 1e-10);
    }

    #[test]
    fn banded_cholesky_reports_pivot() {
        let a = csr_from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        match BandedCholesky::factor(&a) {
            Err(Error::NotPositiveDefinite { row, pivot }) => {
                assert_eq!(row, 1);
                assert!((pivot + 3.0).abs() < 1e-14);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}

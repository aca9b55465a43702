//! Dense least squares via complete orthogonal factorization.
//!
//! Column-pivoted Householder QR reveals the numerical rank; a rank-deficient
//! leading block is reduced further by an orthogonal factorization from the
//! right so the minimum-norm solution is returned.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Lstsq<T> {
    pub x: Vec<T>,
    pub rank: usize,
    /// `‖A x − b‖₂`.
    pub residual: T,
}

/// Householder QR of a row-major `m x n` matrix in place, optionally with
/// column pivoting. Returns Householder vectors (stored below the diagonal),
/// their scales `tau`, and the column permutation.
struct Qr<T> {
    m: usize,
    n: usize,
    a: Vec<T>,
    tau: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> Qr<T> {
    fn factor(mut a: Vec<T>, m: usize, n: usize, pivot: bool) -> Self {
        let k = m.min(n);
        let mut tau = vec![T::zero(); k];
        let mut perm: Vec<usize> = (0..n).collect();
        let col_norm2 = |a: &[T], j: usize, from: usize| -> T {
            (from..m).map(|i| a[i * n + j] * a[i * n + j]).sum()
        };
        for j in 0..k {
            if pivot {
                let (best, _) = (j..n)
                    .map(|c| (c, col_norm2(&a, c, j)))
                    .fold((j, -T::one()), |acc, (c, v)| if v > acc.1 { (c, v) } else { acc });
                if best != j {
                    for i in 0..m {
                        a.swap(i * n + j, i * n + best);
                    }
                    perm.swap(j, best);
                }
            }
            let alpha = a[j * n + j];
            let sigma: T = ((j + 1)..m).map(|i| a[i * n + j] * a[i * n + j]).sum();
            if sigma == T::zero() {
                tau[j] = T::zero();
                continue;
            }
            let norm = (alpha * alpha + sigma).sqrt();
            let beta = if alpha > T::zero() { -norm } else { norm };
            let scale = alpha - beta;
            for i in (j + 1)..m {
                a[i * n + j] /= scale;
            }
            tau[j] = (beta - alpha) / beta;
            a[j * n + j] = beta;
            // Apply H = I - tau v vᵀ (v_j = 1) to the trailing columns.
            for c in (j + 1)..n {
                let mut dot = a[j * n + c];
                for i in (j + 1)..m {
                    dot += a[i * n + j] * a[i * n + c];
                }
                let f = tau[j] * dot;
                a[j * n + c] -= f;
                for i in (j + 1)..m {
                    let vij = a[i * n + j];
                    a[i * n + c] -= f * vij;
                }
            }
        }
        Self { m, n, a, tau, perm }
    }

    fn r(&self, i: usize, j: usize) -> T {
        self.a[i * self.n + j]
    }

    /// `Qᵀ b` in place.
    fn apply_qt(&self, b: &mut [T]) {
        let (m, n) = (self.m, self.n);
        for j in 0..self.tau.len() {
            if self.tau[j] == T::zero() {
                continue;
            }
            let mut dot = b[j];
            for i in (j + 1)..m {
                dot += self.a[i * n + j] * b[i];
            }
            let f = self.tau[j] * dot;
            b[j] -= f;
            for i in (j + 1)..m {
                b[i] -= f * self.a[i * n + j];
            }
        }
    }

    /// `Q y` in place (`y` has length `m`).
    fn apply_q(&self, y: &mut [T]) {
        let (m, n) = (self.m, self.n);
        for j in (0..self.tau.len()).rev() {
            if self.tau[j] == T::zero() {
                continue;
            }
            let mut dot = y[j];
            for i in (j + 1)..m {
                dot += self.a[i * n + j] * y[i];
            }
            let f = self.tau[j] * dot;
            y[j] -= f;
            for i in (j + 1)..m {
                y[i] -= f * self.a[i * n + j];
            }
        }
    }
}

/// Default relative tolerance on `|R_kk| / |R_00|` for rank decisions.
pub fn default_rcond<T: Real>() -> T {
    T::epsilon().sqrt() * T::lit(16.0)
}

/// Least-squares solution of `A x ≈ b` for a row-major `m x n` matrix.
///
/// Columns whose pivoted diagonal falls below `rcond · |R_00|` are treated as
/// dependent; the minimum-norm solution is returned in that case.
pub fn lstsq<T: Real>(a: &[T], m: usize, n: usize, b: &[T], rcond: T) -> Lstsq<T> {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), m);
    let qr = Qr::factor(a.to_vec(), m, n, true);
    let k = m.min(n);
    let r00 = if k > 0 { qr.r(0, 0).abs() } else { T::zero() };
    let rank = (0..k)
        .take_while(|&i| r00 > T::zero() && qr.r(i, i).abs() > rcond * r00)
        .count();

    let mut c = b.to_vec();
    qr.apply_qt(&mut c);

    let mut y = vec![T::zero(); n];
    if rank == n {
        for i in (0..n).rev() {
            let s: T = ((i + 1)..n).map(|j| qr.r(i, j) * y[j]).sum();
            y[i] = (c[i] - s) / qr.r(i, i);
        }
    } else if rank > 0 {
        // [R11 R12] (rank x n) = L Z with L lower triangular: factor its transpose.
        let mut top_t = vec![T::zero(); n * rank];
        for i in 0..rank {
            for j in i..n {
                top_t[j * rank + i] = qr.r(i, j);
            }
        }
        let lq = Qr::factor(top_t, n, rank, false);
        // Lᵀ is lq's R (rank x rank); solve L z = c[..rank] by forward substitution.
        let mut z = vec![T::zero(); n];
        for i in 0..rank {
            let s: T = (0..i).map(|j| lq.r(j, i) * z[j]).sum();
            z[i] = (c[i] - s) / lq.r(i, i);
        }
        lq.apply_q(&mut z);
        y = z;
    }

    let mut x = vec![T::zero(); n];
    for (j, &p) in qr.perm.iter().enumerate() {
        x[p] = y[j];
    }
    let residual = (0..m)
        .map(|i| {
            let r: T = (0..n).map(|j| a[i * n + j] * x[j]).sum::<T>() - b[i];
            r * r
        })
        .sum::<T>()
        .sqrt();
    Lstsq { x, rank, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Normal-equation solve of a 2-column system by Cramer's rule.
    fn normal_2(a: &[f64], b: &[f64]) -> [f64; 2] {
        let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (row, &bi) in a.chunks(2).zip(b) {
            s00 += row[0] * row[0];
            s01 += row[0] * row[1];
            s11 += row[1] * row[1];
            t0 += row[0] * bi;
            t1 += row[1] * bi;
        }
        let det = s00 * s11 - s01 * s01;
        [(t0 * s11 - t1 * s01) / det, (s00 * t1 - s01 * t0) / det]
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = rng.random_range(3..30);
            let a: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let got = lstsq(&a, m, 2, &b, default_rcond());
            let want = normal_2(&a, &b);
            assert_eq!(got.rank, 2);
            assert!((got.x[0] - want[0]).abs() < 1e-9 && (got.x[1] - want[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn square_system_exact() {
        let a = [2.0, 1.0, 1.0, 1.0, 3.0, 2.0, 1.0, 0.0, 0.0];
        let x = [1.0, -2.0, 3.0];
        let b: Vec<f64> = a.chunks(3).map(|r| r.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
        let s = lstsq(&a, 3, 3, &b, default_rcond());
        assert_eq!(s.rank, 3);
        for (g, w) in s.x.iter().zip(&x) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn rank_deficient_minimum_norm() {
        // Columns identical: every x with x0 + x1 = 2 fits; minimum norm is (1, 1).
        let a = [1.0f64, 1.0, 2.0, 2.0, -1.0, -1.0];
        let b = [2.0, 4.0, -2.0];
        let s = lstsq(&a, 3, 2, &b, default_rcond());
        assert_eq!(s.rank, 1);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);

        let a3 = [1.0f64, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0, 3.0, 6.0, 0.0];
        let b3 = [5.0, 10.0, 0.0, 15.0];
        let s3 = lstsq(&a3, 4, 3, &b3, default_rcond());
        assert_eq!(s3.rank, 1);
        // x ∝ (1, 2, 0) with 1·x0 + 2·x1 = 5.
        assert!((s3.x[0] - 1.0).abs() < 1e-12 && (s3.x[1] - 2.0).abs() < 1e-12 && s3.x[2].abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let s = lstsq(&[0.0f64; 6], 3, 2, &[1.0, 2.0, 3.0], default_rcond());
        assert_eq!(s.rank, 0);
        assert_eq!(s.x, vec![0.0, 0.0]);
    }

    #[test]
    fn works_in_f32() {
        let a = [1.0f32, 0.0, 0.0, 1.0, 1.0, 1.0];
        let b = [1.0f32, 2.0, 3.0];
        let s = lstsq(&a, 3, 2, &b, default_rcond());
        assert!((s.x[0] - 1.0).abs() < 1e-5 && (s.x[1] - 2.0).abs() < 1e-5);
    }
}

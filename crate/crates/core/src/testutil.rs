//! Independent reference routines for unit tests. Nothing here is shared with
//! the production code paths it checks.

use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{CMatrix, C64};
use crate::rng::complex_normal;

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng, 1.0))
}

/// `A Aᴴ + I`, Hermitian positive-definite.
pub fn random_pd<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    let a = random_matrix(n, n, rng);
    let mut p = CMatrix::identity(n);
    for r in 0..n {
        for c in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for t in 0..n {
                s += a[(r, t)] * a[(c, t)].conj();
            }
            p[(r, c)] += s;
        }
    }
    p
}

/// Determinant by cofactor expansion along the first row.
pub fn naive_det(a: &CMatrix) -> C64 {
    let n = a.rows();
    if n == 1 {
        return a[(0, 0)];
    }
    let mut det = C64::new(0.0, 0.0);
    for c in 0..n {
        let minor = CMatrix::from_fn(n - 1, n - 1, |r, cc| a[(r + 1, if cc < c { cc } else { cc + 1 })]);
        let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
        det += a[(0, c)] * naive_det(&minor) * sign;
    }
    det
}

/// Explicit inverse by Gauss-Jordan elimination on `[A | I]`.
pub fn gauss_jordan_inverse(a: &CMatrix) -> CMatrix {
    let n = a.rows();
    let mut aug: Vec<Vec<C64>> = (0..n)
        .map(|r| {
            (0..2 * n)
                .map(|c| if c < n { a[(r, c)] } else if c - n == r { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
                .collect()
        })
        .collect();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| aug[i][k].norm().total_cmp(&aug[j][k].norm())).unwrap();
        aug.swap(k, piv);
        let d = aug[k][k];
        for v in aug[k].iter_mut() {
            *v /= d;
        }
        for i in 0..n {
            if i != k {
                let f = aug[i][k];
                for c in 0..2 * n {
                    let t = aug[k][c];
                    aug[i][c] -= f * t;
                }
            }
        }
    }
    CMatrix::from_fn(n, n, |r, c| aug[r][c + n])
}

/// `log₂ det(A)` for a matrix with positive real determinant, via cofactors.
pub fn naive_log2_det(a: &CMatrix) -> f64 {
    let d = naive_det(a);
    libm::log2(d.re)
}

//! Dense complex matrices and the handful of factorizations the simulator needs.
//!
//! Storage is column-major so that [`CMatrix::vec`] is the usual column-stacking
//! `vec(·)` operator without a copy-reorder.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::LinalgError;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major nested slices; convenient in tests.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        Self::from_fn(nr, nc, |r, c| rows[r][c])
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Inverse of [`CMatrix::vec`]: reshapes a column-stacked vector.
    pub fn from_vec(rows: usize, cols: usize, v: &[C64]) -> Self {
        assert_eq!(v.len(), rows * cols, "vec length does not match shape");
        Self { rows, cols, data: v.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column-stacked entries, i.e. `vec(A)`.
    #[inline]
    pub fn vec(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn col(&self, c: usize) -> &[C64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, c: usize) -> &mut [C64] {
        let r = self.rows;
        &mut self.data[c * r..(c + 1) * r]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_mut(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &CMatrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    /// Scales column `c` by `s`, i.e. right-multiplication by a diagonal matrix one column at a time.
    pub fn scale_col(&mut self, c: usize, s: f64) {
        for z in self.col_mut(c) {
            *z *= s;
        }
    }

    /// Right-multiplication by `diag(d)`.
    pub fn mul_diag(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for (c, &s) in d.iter().enumerate() {
            out.scale_col(c, s);
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.frobenius_sq())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| libm::sqrt(z.norm_sqr())).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `(A + Aᴴ) / 2`.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5)
    }

    /// Copy of rows `r0..r1`.
    pub fn row_block(&self, r0: usize, r1: usize) -> Self {
        Self::from_fn(r1 - r0, self.cols, |r, c| self[(r0 + r, c)])
    }

    /// Copy of columns `c0..c1`.
    pub fn col_block(&self, c0: usize, c1: usize) -> Self {
        Self { rows: self.rows, cols: c1 - c0, data: self.data[c0 * self.rows..c1 * self.rows].to_vec() }
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        for c in 0..block.cols {
            for r in 0..block.rows {
                self[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }

    /// Horizontal concatenation `[A_1, A_2, ...]`.
    pub fn hstack(blocks: &[CMatrix]) -> Self {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let mut data = Vec::with_capacity(rows * blocks.iter().map(|b| b.cols).sum::<usize>());
        let mut cols = 0;
        for b in blocks {
            assert_eq!(b.rows, rows, "hstack row mismatch");
            data.extend_from_slice(&b.data);
            cols += b.cols;
        }
        Self { rows, cols, data }
    }

    /// Vertical concatenation.
    pub fn vstack(blocks: &[CMatrix]) -> Self {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack column mismatch");
            out.set_block(r0, 0, b);
            r0 += b.rows;
        }
        out
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let oc = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for p in 0..self.cols {
                let b = rhs.data[j * rhs.rows + p];
                if b == ZERO {
                    continue;
                }
                let ac = &self.data[p * self.rows..(p + 1) * self.rows];
                for (o, a) in oc.iter_mut().zip(ac) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᴴ · rhs` without materializing the adjoint.
    pub fn adjoint_mul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, rhs.rows, "adjoint_mul inner dimension mismatch");
        let mut out = CMatrix::zeros(self.cols, rhs.cols);
        for j in 0..rhs.cols {
            let bc = rhs.col(j);
            for i in 0..self.cols {
                out.data[j * self.cols + i] = dotc(self.col(i), bc);
            }
        }
        out
    }

    /// `self · rhsᴴ`.
    pub fn mul_adjoint(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.cols, "mul_adjoint inner dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.rows);
        for p in 0..self.cols {
            let ac = self.col(p);
            let bc = rhs.col(p);
            for (j, b) in bc.iter().enumerate() {
                let b = b.conj();
                let oc = &mut out.data[j * self.rows..(j + 1) * self.rows];
                for (o, a) in oc.iter_mut().zip(ac) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Accumulates `s · A Aᴴ` into `self`, filling only the lower triangle.
    ///
    /// Pair with [`CMatrix::fill_upper_from_lower`] once all terms are in.
    pub fn add_gram_lower(&mut self, a: &CMatrix, s: f64) {
        assert!(self.is_square() && self.rows == a.rows);
        let n = self.rows;
        for p in 0..a.cols {
            let ac = a.col(p);
            for j in 0..n {
                let b = ac[j].conj() * s;
                if b == ZERO {
                    continue;
                }
                let oc = &mut self.data[j * n..(j + 1) * n];
                for i in j..n {
                    oc[i] += ac[i] * b;
                }
            }
        }
    }

    pub fn fill_upper_from_lower(&mut self) {
        let n = self.rows;
        for j in 0..n {
            self.data[j * n + j].im = 0.0;
            for i in (j + 1)..n {
                self.data[i * n + j] = self.data[j * n + i].conj();
            }
        }
    }
}

/// `Σ conj(a_i) b_i`.
#[inline]
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[c * self.rows + r]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[c * self.rows + r]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Cholesky factor `A = L Lᴴ` of a Hermitian positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: CMatrix,
}

impl Cholesky {
    /// Factorizes using the lower triangle of `a` only.
    pub fn new(a: &CMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
        }
        let n = a.rows;
        let mut l = a.clone();
        // Left-looking column Cholesky on the lower triangle.
        for j in 0..n {
            for p in 0..j {
                let ljp = l.data[p * n + j].conj();
                if ljp == ZERO {
                    continue;
                }
                let (head, tail) = l.data.split_at_mut(j * n);
                let src = &head[p * n..(p + 1) * n];
                let dst = &mut tail[..n];
                for i in j..n {
                    dst[i] -= src[i] * ljp;
                }
            }
            let d = l.data[j * n + j].re;
            if !(d > 0.0) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j });
            }
            let d = libm::sqrt(d);
            l.data[j * n + j] = C64::new(d, 0.0);
            let inv = 1.0 / d;
            for i in (j + 1)..n {
                l.data[j * n + i] *= inv;
            }
            for i in 0..j {
                l.data[j * n + i] = ZERO;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &CMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves `L X = B` in place.
    pub fn forward_solve_mut(&self, b: &mut CMatrix) {
        let n = self.l.rows;
        assert_eq!(b.rows, n, "forward_solve dimension mismatch");
        for c in 0..b.cols {
            let x = b.col_mut(c);
            for j in 0..n {
                let xj = x[j] / self.l.data[j * n + j].re;
                x[j] = xj;
                if xj == ZERO {
                    continue;
                }
                let lc = &self.l.data[j * n..(j + 1) * n];
                for i in (j + 1)..n {
                    x[i] -= lc[i] * xj;
                }
            }
        }
    }

    /// Solves `Lᴴ X = B` in place.
    pub fn backward_solve_mut(&self, b: &mut CMatrix) {
        let n = self.l.rows;
        assert_eq!(b.rows, n, "backward_solve dimension mismatch");
        for c in 0..b.cols {
            let x = b.col_mut(c);
            for j in (0..n).rev() {
                let lc = &self.l.data[j * n..(j + 1) * n];
                let s = dotc(&lc[j + 1..], &x[j + 1..]);
                x[j] = (x[j] - s) / lc[j].re;
            }
        }
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let mut x = b.clone();
        self.forward_solve_mut(&mut x);
        self.backward_solve_mut(&mut x);
        x
    }

    /// `L⁻¹ B`.
    pub fn whiten(&self, b: &CMatrix) -> CMatrix {
        let mut x = b.clone();
        self.forward_solve_mut(&mut x);
        x
    }

    pub fn inverse(&self) -> CMatrix {
        self.solve(&CMatrix::identity(self.dim()))
    }

    /// Natural log of `det(A)`, accumulated from the pivots.
    pub fn ln_det(&self) -> f64 {
        let n = self.l.rows;
        2.0 * (0..n).map(|i| libm::log(self.l.data[i * n + i].re)).sum::<f64>()
    }

    pub fn log2_det(&self) -> f64 {
        self.ln_det() / core::f64::consts::LN_2
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &CMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[(k, k)].norm_sqr();
            for i in (k + 1)..n {
                let v = lu[(i, k)].norm_sqr();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LinalgError::Singular { pivot: k });
            }
            if piv != k {
                for c in 0..n {
                    let t = lu[(k, c)];
                    lu[(k, c)] = lu[(piv, c)];
                    lu[(piv, c)] = t;
                }
                perm.swap(k, piv);
                sign = -sign;
            }
            let d = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f == ZERO {
                    continue;
                }
                for c in (k + 1)..n {
                    let u = lu[(k, c)];
                    lu[(i, c)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let n = self.lu.rows;
        assert_eq!(b.rows, n, "lu solve dimension mismatch");
        let mut x = CMatrix::from_fn(n, b.cols, |r, c| b[(self.perm[r], c)]);
        for c in 0..b.cols {
            for i in 0..n {
                let mut s = x[(i, c)];
                for p in 0..i {
                    s -= self.lu[(i, p)] * x[(p, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for p in (i + 1)..n {
                    s -= self.lu[(i, p)] * x[(p, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        x
    }

    pub fn inverse(&self) -> CMatrix {
        self.solve(&CMatrix::identity(self.lu.rows))
    }

    pub fn det(&self) -> C64 {
        let n = self.lu.rows;
        (0..n).fold(C64::new(self.sign, 0.0), |acc, i| acc * self.lu[(i, i)])
    }
}

/// `log₂ det(I + Sᴴ N⁻¹ S)` for Hermitian positive-definite `N = L Lᴴ`.
///
/// Evaluated as `I + XᴴX` with `X = L⁻¹ S`, which keeps the matrix inside the
/// determinant Hermitian positive-definite.
pub fn log2det_whitened_gram(noise: &Cholesky, signal: &CMatrix) -> Result<f64, LinalgError> {
    let x = noise.whiten(signal);
    let mut g = CMatrix::identity(x.cols);
    g.add_gram_lower(&x.adjoint(), 1.0);
    g.fill_upper_from_lower();
    Ok(Cholesky::new(&g)?.log2_det().max(0.0))
}

/// Frobenius-norm condition number `‖A‖_F ‖A⁻¹‖_F`, an upper bound on the
/// spectral one within a factor of the dimension.
pub fn condition_frobenius(a: &CMatrix) -> f64 {
    match Lu::new(a) {
        Ok(lu) => {
            let inv = lu.inverse();
            if inv.is_finite() {
                a.frobenius() * inv.frobenius()
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Checks `A + tol·I ⪰ 0` by attempting a Cholesky factorization.
pub fn is_psd(a: &CMatrix, tol: f64) -> bool {
    let mut shifted = a.hermitian_part();
    for i in 0..a.rows {
        shifted[(i, i)] += tol;
    }
    Cholesky::new(&shifted).is_ok()
}

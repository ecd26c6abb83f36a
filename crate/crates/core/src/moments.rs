//! Mergeable running moments. All accumulators here combine with `merge` so
//! shards of an ensemble can be reduced in any grouping.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{CMatrix, C64};

/// Running means and (cross-)co-moments of a paired vector stream `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMoments {
    n: usize,
    mean_x: Vec<C64>,
    mean_y: Vec<C64>,
    m_xx: CMatrix,
    m_xy: CMatrix,
    m_yy: CMatrix,
}

impl CrossMoments {
    pub fn new(dx: usize, dy: usize) -> Self {
        Self {
            n: 0,
            mean_x: vec![C64::new(0.0, 0.0); dx],
            mean_y: vec![C64::new(0.0, 0.0); dy],
            m_xx: CMatrix::zeros(dx, dx),
            m_xy: CMatrix::zeros(dx, dy),
            m_yy: CMatrix::zeros(dy, dy),
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, x: &[C64], y: &[C64]) {
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        let old_dx: Vec<C64> = x.iter().zip(&self.mean_x).map(|(a, m)| a - m).collect();
        let old_dy: Vec<C64> = y.iter().zip(&self.mean_y).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean_x.iter_mut().zip(&old_dx) {
            *m += d * inv;
        }
        for (m, d) in self.mean_y.iter_mut().zip(&old_dy) {
            *m += d * inv;
        }
        let new_dx: Vec<C64> = x.iter().zip(&self.mean_x).map(|(a, m)| a - m).collect();
        let new_dy: Vec<C64> = y.iter().zip(&self.mean_y).map(|(a, m)| a - m).collect();
        outer_add(&mut self.m_xx, &old_dx, &new_dx, 1.0);
        outer_add(&mut self.m_xy, &old_dx, &new_dy, 1.0);
        outer_add(&mut self.m_yy, &old_dy, &new_dy, 1.0);
    }

    pub fn merge(&mut self, other: &CrossMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dx: Vec<C64> = other.mean_x.iter().zip(&self.mean_x).map(|(b, a)| b - a).collect();
        let dy: Vec<C64> = other.mean_y.iter().zip(&self.mean_y).map(|(b, a)| b - a).collect();
        let w = na * nb / n;
        self.m_xx = &self.m_xx + &other.m_xx;
        self.m_xy = &self.m_xy + &other.m_xy;
        self.m_yy = &self.m_yy + &other.m_yy;
        outer_add(&mut self.m_xx, &dx, &dx, w);
        outer_add(&mut self.m_xy, &dx, &dy, w);
        outer_add(&mut self.m_yy, &dy, &dy, w);
        for (m, d) in self.mean_x.iter_mut().zip(&dx) {
            *m += d * (nb / n);
        }
        for (m, d) in self.mean_y.iter_mut().zip(&dy) {
            *m += d * (nb / n);
        }
        self.n += other.n;
    }

    pub fn mean_x(&self) -> &[C64] {
        &self.mean_x
    }

    pub fn mean_y(&self) -> &[C64] {
        &self.mean_y
    }

    /// Sample covariances normalized by `n`, Hermitian parts symmetrized.
    pub fn cov_xx(&self) -> CMatrix {
        self.m_xx.scale(1.0 / self.n.max(1) as f64).hermitian_part()
    }

    pub fn cov_xy(&self) -> CMatrix {
        self.m_xy.scale(1.0 / self.n.max(1) as f64)
    }

    pub fn cov_yy(&self) -> CMatrix {
        self.m_yy.scale(1.0 / self.n.max(1) as f64).hermitian_part()
    }
}

/// `acc += s · a bᴴ`.
fn outer_add(acc: &mut CMatrix, a: &[C64], b: &[C64], s: f64) {
    for (c, bc) in b.iter().enumerate() {
        let bc = bc.conj() * s;
        for (r, ar) in a.iter().enumerate() {
            acc[(r, c)] += ar * bc;
        }
    }
}

/// Running mean of equally-shaped matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMean {
    n: usize,
    sum: CMatrix,
}

impl MatrixMean {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { n: 0, sum: CMatrix::zeros(rows, cols) }
    }

    pub fn push(&mut self, a: &CMatrix) {
        self.n += 1;
        self.sum.axpy(1.0, a);
    }

    pub fn merge(&mut self, other: &MatrixMean) {
        self.n += other.n;
        self.sum.axpy(1.0, &other.sum);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> CMatrix {
        self.sum.scale(1.0 / self.n.max(1) as f64)
    }
}

/// Welford mean/variance of a scalar stream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl ScalarStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &ScalarStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.n += other.n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            libm::sqrt(self.variance() / self.n as f64)
        }
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

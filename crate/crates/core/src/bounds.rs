//! Spectral-efficiency bounds and the channel-hardening diagnostic.
//!
//! Three achievable downlink SEs per user, all evaluated from the same
//! effective-channel draws:
//!
//! * no CSI at the user: the mean channel `B̄_kk` is the only channel knowledge
//!   and everything else is lumped into colored noise `Ξ_k`;
//! * perfect CSI: `B_kk` known per realization, interference treated as noise;
//! * downlink pilots: LMMSE estimate `B̂_kk`, ZF combining, and the covariance
//!   `C_n'` of the residual after combining.
//!
//! Expectations over data and receiver noise are inserted analytically; the
//! ones over channels are sample averages kept in mergeable accumulators.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{log2det_whitened_gram, CMatrix, Cholesky, C64};
use crate::moments::{CrossMoments, MatrixMean, ScalarStats};
use crate::precoding::EffectiveChannelSet;
use crate::rng::Seed;
use crate::system::{Geometry, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BoundKind {
    NoCsi,
    PerfectCsi,
    DlPilots,
}

impl BoundKind {
    pub const ALL: [BoundKind; 3] = [BoundKind::NoCsi, BoundKind::PerfectCsi, BoundKind::DlPilots];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::NoCsi => "no_csi",
            BoundKind::PerfectCsi => "perfect_csi",
            BoundKind::DlPilots => "dl_pilots",
        }
    }

    pub fn prelog(self, config: &SystemConfig) -> f64 {
        match self {
            BoundKind::NoCsi | BoundKind::PerfectCsi => config.prelog_single(),
            BoundKind::DlPilots => config.prelog_double(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeResult {
    pub kind: BoundKind,
    /// bit/s/Hz, pre-log included.
    pub per_user_se: Vec<f64>,
    /// Monte Carlo standard error of each entry of `per_user_se`.
    pub per_user_stderr: Vec<f64>,
    pub sum_se: f64,
    pub prelog: f64,
    /// Realizations where ZF combining was rejected, summed over users.
    pub outages: usize,
}

impl SeResult {
    pub fn new(kind: BoundKind, prelog: f64, per_user_se: Vec<f64>, per_user_stderr: Vec<f64>, outages: usize) -> Self {
        let sum_se = per_user_se.iter().sum();
        Self { kind, per_user_se, per_user_stderr, sum_se, prelog, outages }
    }
}

fn sqrt_diag(q: &[f64]) -> Vec<f64> {
    q.iter().map(|&x| libm::sqrt(x)).collect()
}

/// `Σ_{i≠k} B_ki Q_i B_kiᴴ`.
pub fn interference_cov(eff: &EffectiveChannelSet, powers: &[Vec<f64>], k: usize) -> CMatrix {
    let m = eff.get(k, k).rows();
    let mut acc = CMatrix::zeros(m, m);
    for i in (0..eff.k).filter(|&i| i != k) {
        let s = eff.get(k, i).mul_diag(&sqrt_diag(&powers[i]));
        acc.add_gram_lower(&s, 1.0);
    }
    acc.fill_upper_from_lower();
    acc
}

fn plus_identity(mut a: CMatrix) -> CMatrix {
    for i in 0..a.rows() {
        a[(i, i)].re += 1.0;
    }
    a
}

pub fn mean_effective_channel(ensemble: &[CMatrix]) -> CMatrix {
    assert!(!ensemble.is_empty(), "empty ensemble");
    let mut acc = MatrixMean::new(ensemble[0].rows(), ensemble[0].cols());
    for b in ensemble {
        acc.push(b);
    }
    acc.mean()
}

/// Streaming pieces of the no-CSI bound for one user.
#[derive(Debug, Clone)]
pub struct NoCsiAccumulator {
    m: usize,
    q: Vec<f64>,
    desired: CrossMoments,
    interference: MatrixMean,
}

impl NoCsiAccumulator {
    pub fn new(m: usize, q: &[f64]) -> Self {
        Self { m, q: q.to_vec(), desired: CrossMoments::new(m * m, 0), interference: MatrixMean::new(m, m) }
    }

    pub fn push(&mut self, b_kk: &CMatrix, interference: &CMatrix) {
        self.desired.push(b_kk.vec(), &[]);
        self.interference.push(interference);
    }

    pub fn merge(&mut self, other: &NoCsiAccumulator) {
        self.desired.merge(&other.desired);
        self.interference.merge(&other.interference);
    }

    pub fn count(&self) -> usize {
        self.desired.count()
    }

    pub fn mean_channel(&self) -> CMatrix {
        CMatrix::from_vec(self.m, self.m, self.desired.mean_x())
    }

    /// `Ξ = Ê{(B − B̄) Q (B − B̄)ᴴ} + Ê{Σ_{i≠k} B_ki Q_i B_kiᴴ} + I`.
    pub fn noise_cov(&self) -> CMatrix {
        let m = self.m;
        let cov = self.desired.cov_xx();
        // column c of B occupies vec indices c*m..(c+1)*m
        let mut xi = CMatrix::from_fn(m, m, |r, s| (0..m).map(|c| cov[(c * m + r, c * m + s)] * self.q[c]).sum::<C64>());
        xi.axpy(1.0, &self.interference.mean());
        plus_identity(xi).hermitian_part()
    }

    pub fn se(&self, config: &SystemConfig) -> Result<f64> {
        se_no_csi(&self.mean_channel(), &self.noise_cov(), &self.q, config)
    }
}

/// `Ξ_k` from an ensemble of `(B_kk, {B_ki}_{i≠k})` draws, the `Q` of every
/// user, and the mean `B̄_kk`.
pub fn hardening_noise_cov(ensemble: &[EffectiveChannelSet], powers: &[Vec<f64>], k: usize, b_bar: &CMatrix) -> CMatrix {
    let m = b_bar.rows();
    let qk = sqrt_diag(&powers[k]);
    let mut acc = MatrixMean::new(m, m);
    for eff in ensemble {
        let dev = (eff.get(k, k) - b_bar).mul_diag(&qk);
        let mut term = dev.mul_adjoint(&dev);
        term.axpy(1.0, &interference_cov(eff, powers, k));
        acc.push(&term);
    }
    plus_identity(acc.mean()).hermitian_part()
}

/// `(1 − τ_p/τ_c) log₂ det(I + Q B̄ᴴ Ξ⁻¹ B̄)`.
pub fn se_no_csi(b_bar: &CMatrix, xi: &CMatrix, q: &[f64], config: &SystemConfig) -> Result<f64> {
    let chol = Cholesky::new(xi).map_err(Error::numerical("no-CSI noise covariance"))?;
    let v = log2det_whitened_gram(&chol, &b_bar.mul_diag(&sqrt_diag(q))).map_err(Error::numerical("no-CSI log-det"))?;
    Ok(config.prelog_single() * v)
}

/// `log₂ det(I + Q B_kkᴴ Ξ̃⁻¹ B_kk)` for one realization, without pre-log.
pub fn perfect_csi_log2det(b_kk: &CMatrix, interference: &CMatrix, q: &[f64]) -> Result<f64> {
    let xi = plus_identity(interference.clone());
    let chol = Cholesky::new(&xi).map_err(Error::numerical("perfect-CSI noise covariance"))?;
    log2det_whitened_gram(&chol, &b_kk.mul_diag(&sqrt_diag(q))).map_err(Error::numerical("perfect-CSI log-det"))
}

/// Perfect-CSI bound averaged over an ensemble: per user mean and
/// standard error.
pub fn se_perfect_csi(ensemble: &[EffectiveChannelSet], powers: &[Vec<f64>], k: usize, config: &SystemConfig) -> Result<(f64, f64)> {
    let mut acc = ScalarStats::default();
    for eff in ensemble {
        acc.push(perfect_csi_log2det(eff.get(k, k), &interference_cov(eff, powers, k), &powers[k])?);
    }
    let p = config.prelog_single();
    Ok((p * acc.mean(), p * acc.std_error()))
}

/// One ZF-combined trial: `U (B̃ Q_k B̃ᴴ + Σ_{i≠k} B_ki Q_i B_kiᴴ + I) Uᴴ`.
pub fn zf_trial_cov(u_h: &CMatrix, b_kk: &CMatrix, b_hat: &CMatrix, interference: &CMatrix, q: &[f64]) -> CMatrix {
    let err = (b_kk - b_hat).mul_diag(&sqrt_diag(q));
    let mut inner = err.mul_adjoint(&err);
    inner.axpy(1.0, interference);
    let inner = plus_identity(inner);
    u_h.matmul(&inner).mul_adjoint(u_h).hermitian_part()
}

/// Running `C_n'` for one user with an outage tally.
#[derive(Debug, Clone)]
pub struct ZfNoiseAccumulator {
    cov: MatrixMean,
    outages: usize,
}

impl ZfNoiseAccumulator {
    pub fn new(m: usize) -> Self {
        Self { cov: MatrixMean::new(m, m), outages: 0 }
    }

    pub fn push(&mut self, trial_cov: &CMatrix) {
        self.cov.push(trial_cov);
    }

    pub fn push_outage(&mut self) {
        self.outages += 1;
    }

    pub fn merge(&mut self, other: &ZfNoiseAccumulator) {
        self.cov.merge(&other.cov);
        self.outages += other.outages;
    }

    pub fn outages(&self) -> usize {
        self.outages
    }

    pub fn trials(&self) -> usize {
        self.cov.count() + self.outages
    }

    pub fn noise_cov(&self) -> CMatrix {
        self.cov.mean().hermitian_part()
    }

    /// The downlink-pilot SE, scaled by the fraction of trials not in outage.
    pub fn se(&self, q: &[f64], config: &SystemConfig) -> Result<f64> {
        if self.cov.count() == 0 {
            return Ok(0.0);
        }
        let usable = self.cov.count() as f64 / self.trials() as f64;
        Ok(usable * se_dl_pilots(&self.noise_cov(), q, config)?)
    }
}

/// `C_n'` averaged over `(U, B_kk, B̂_kk, Σ B_ki Q_i B_kiᴴ)` trials.
pub fn zf_noise_cov(trials: &[(CMatrix, CMatrix, CMatrix, CMatrix)], q: &[f64]) -> CMatrix {
    let m = q.len();
    let mut acc = ZfNoiseAccumulator::new(m);
    for (u_h, b, b_hat, interf) in trials {
        acc.push(&zf_trial_cov(u_h, b, b_hat, interf, q));
    }
    acc.noise_cov()
}

/// `(1 − 2τ_p/τ_c) log₂ det(I + Q C_n'⁻¹)`, evaluated as
/// `log₂ det(I + Q^{1/2} C_n'⁻¹ Q^{1/2})`.
pub fn se_dl_pilots(c_nprime: &CMatrix, q: &[f64], config: &SystemConfig) -> Result<f64> {
    let chol = Cholesky::new(c_nprime).map_err(Error::numerical("ZF residual covariance"))?;
    let v = log2det_whitened_gram(&chol, &CMatrix::from_real_diag(&sqrt_diag(q))).map_err(Error::numerical("dl-pilot log-det"))?;
    Ok(config.prelog_double() * v)
}

/// Concentration statistics of a single-user MR effective channel `HᴴH`
/// normalized by `E{‖h_m‖²}` at one AP antenna count.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HardeningRow {
    pub n: usize,
    pub trials: usize,
    pub diag_mean: f64,
    pub diag_var: f64,
    /// Standard error of `diag_var` from the sample fourth moment.
    pub diag_var_stderr: f64,
    pub offdiag_mean: C64,
    pub offdiag_var: f64,
    pub offdiag_var_stderr: f64,
    /// `Σ_l β_l² / (N (Σ_l β_l)²)`, equal to `1/N` for a single AP. Both the
    /// diagonal and the off-diagonal ratios share it.
    pub var_theory: f64,
}

fn variance_with_stderr(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| libm::pow(x - mean, 4.0)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    (mean, var, libm::sqrt(((m4 - m2 * m2) / n).max(0.0)))
}

/// MR precoding with perfect CSI for user `user` alone, repeated for every
/// `N` in `n_list`.
pub fn hardening_diagnostic(config: &SystemConfig, geometry: &Geometry, user: usize, n_list: &[usize], trials: usize, seed: Seed) -> Vec<HardeningRow> {
    use crate::channel::{draw_channels, ChannelRealization};
    use crate::precoding::{effective_channels, PrecoderSet};

    let betas: Vec<f64> = (0..config.l).map(|l| geometry.beta(l, user)).collect();
    let single = Geometry::from_beta(
        geometry.ap_positions.clone(),
        alloc::vec![geometry.user_positions[user]],
        betas.iter().map(|&b| alloc::vec![b]).collect(),
    );
    let sum_b: f64 = betas.iter().sum();
    let sum_b2: f64 = betas.iter().map(|b| b * b).sum();
    let m = config.m;
    n_list
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let cfg = SystemConfig { n, k: 1, k_prime: 1, tau_p: m, ..config.clone() };
            let expected = n as f64 * sum_b;
            let mut diag = Vec::with_capacity(trials * m);
            let mut off_sq = Vec::with_capacity(trials);
            let mut off = Vec::with_capacity(trials);
            for t in 0..trials {
                let ch: ChannelRealization = draw_channels(&single, &cfg, seed.path(&[idx as u64, t as u64]));
                let prec = PrecoderSet { l: cfg.l, n, w: ch.h.clone(), q: alloc::vec![alloc::vec![1.0; m]] };
                let b = effective_channels(&ch, &prec);
                let b = b.get(0, 0);
                for c in 0..m {
                    diag.push(b[(c, c)].re / expected);
                }
                for r in 0..m {
                    for c in (r + 1)..m {
                        let z = b[(r, c)] / expected;
                        off.push(z);
                        off_sq.push(z.norm_sqr());
                    }
                }
            }
            let (diag_mean, diag_var, diag_var_stderr) = variance_with_stderr(&diag);
            // Off-diagonal entries are zero-mean; E|z|² is their variance.
            let cnt = off.len().max(1) as f64;
            let offdiag_mean = off.iter().sum::<C64>() / cnt;
            let (offdiag_var, sq_var, _) = variance_with_stderr(&off_sq);
            let offdiag_var_stderr = libm::sqrt(sq_var / cnt);
            HardeningRow {
                n,
                trials,
                diag_mean,
                diag_var,
                diag_var_stderr,
                offdiag_mean,
                offdiag_var,
                offdiag_var_stderr,
                var_theory: sum_b2 / (n as f64 * sum_b * sum_b),
            }
        })
        .collect()
}

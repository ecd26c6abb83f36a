//! Centralized MMSE precoding, per-AP power normalization and effective channels.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::{ChannelRealization, UplinkEstimate};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};
use crate::system::SystemConfig;

/// How the per-AP power budget is met after precoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum NormalizationPolicy {
    /// One scalar for all APs and users; the loudest AP is tight.
    #[default]
    CommonScalar,
    /// Each AP rescaled on its own so every AP is tight.
    PerApScalar,
}

/// Weighting of the estimate Gram terms inside the regularized inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum GramWeighting {
    /// `Σ_i q_i (Ĥ_i Ĥ_iᴴ + C_i) + I`, with `q_i` the noise-normalized uplink power.
    UplinkPower,
    /// `Σ_i (ρ_d/K)(Ĥ_i Ĥ_iᴴ + C_i) + I`: the per-user share of the AP budget,
    /// so the precoder moves toward zero forcing as `ρ_d` grows.
    #[default]
    DownlinkPower,
    /// `Σ_i (Ĥ_i Ĥ_iᴴ + C_i) + I`.
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub l: usize,
    pub n: usize,
    /// `w[k]` is the stacked `LN × M` precoder of user `k`.
    pub w: Vec<CMatrix>,
    /// Diagonal of the power matrix `Q_k`, one entry per stream.
    pub q: Vec<Vec<f64>>,
}

impl PrecoderSet {
    pub fn num_users(&self) -> usize {
        self.w.len()
    }

    pub fn power(&self, k: usize) -> &[f64] {
        &self.q[k]
    }

    /// `Σ_k tr(W_lk Q_k W_lkᴴ)` for AP `l`.
    pub fn ap_power(&self, l: usize) -> f64 {
        let rows = l * self.n..(l + 1) * self.n;
        self.w
            .iter()
            .zip(&self.q)
            .map(|(w, q)| {
                q.iter()
                    .enumerate()
                    .map(|(c, &qc)| qc * w.col(c)[rows.clone()].iter().map(|z| z.norm_sqr()).sum::<f64>())
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn ap_powers(&self) -> Vec<f64> {
        (0..self.l).map(|l| self.ap_power(l)).collect()
    }
}

/// `W_k = [Σ_i w_i (Ĥ_i Ĥ_iᴴ + C_i) + I]⁻¹ Ĥ_k` for every user at once, with
/// `Q_k = I`. `C_i` is the diagonal error covariance of user `i`.
pub fn mmse_precoder(est: &UplinkEstimate, config: &SystemConfig, weighting: GramWeighting) -> Result<PrecoderSet> {
    let (l_aps, n, k_users, m) = (est.l, est.n, est.num_users(), config.m);
    let ln = l_aps * n;
    let weight = match weighting {
        GramWeighting::UplinkPower => config.q_ul,
        GramWeighting::DownlinkPower => config.rho_d / k_users as f64,
        GramWeighting::Unit => 1.0,
    };
    let mut gram = CMatrix::zeros(ln, ln);
    for h in &est.h_hat {
        gram.add_gram_lower(h, weight);
    }
    for l in 0..l_aps {
        let diag = 1.0 + weight * (0..k_users).map(|i| est.err_var(l, i)).sum::<f64>();
        for r in l * n..(l + 1) * n {
            gram[(r, r)].re += diag;
        }
    }
    let chol = Cholesky::new(&gram).map_err(Error::numerical("MMSE precoder Gram matrix"))?;
    let all = chol.solve(&CMatrix::hstack(&est.h_hat));
    let w = (0..k_users).map(|k| all.col_block(k * m, (k + 1) * m)).collect();
    Ok(PrecoderSet { l: l_aps, n, w, q: vec![vec![1.0; m]; k_users] })
}

/// Equal power allocation (`Q_k = I`) followed by scaling the precoders so the
/// per-AP budget `rho_d` holds according to `policy`.
pub fn normalize_and_allocate(raw: &PrecoderSet, config: &SystemConfig, policy: NormalizationPolicy) -> Result<PrecoderSet> {
    let m = raw.w.first().map_or(0, |w| w.cols());
    let mut out = PrecoderSet { l: raw.l, n: raw.n, w: raw.w.clone(), q: vec![vec![1.0; m]; raw.num_users()] };
    let powers = out.ap_powers();
    let loudest = powers.iter().copied().fold(0.0, f64::max);
    if !(loudest > 0.0) || !loudest.is_finite() {
        return Err(Error::ZeroPrecoder);
    }
    match policy {
        NormalizationPolicy::CommonScalar => {
            let alpha = libm::sqrt(config.rho_d / loudest);
            for w in &mut out.w {
                w.scale_mut(alpha);
            }
        }
        NormalizationPolicy::PerApScalar => {
            let n = out.n;
            for (l, &p) in powers.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let alpha = libm::sqrt(config.rho_d / p);
                for w in &mut out.w {
                    let rows = w.rows();
                    for c in 0..w.cols() {
                        for z in &mut w.as_mut_slice()[c * rows + l * n..c * rows + (l + 1) * n] {
                            *z *= alpha;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `B[k][i] = H_kᴴ W_i`, stored `k * K + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannelSet {
    pub k: usize,
    pub b: Vec<CMatrix>,
}

impl EffectiveChannelSet {
    #[inline]
    pub fn get(&self, k: usize, i: usize) -> &CMatrix {
        &self.b[k * self.k + i]
    }

    pub fn zeros(k: usize, m: usize) -> Self {
        Self { k, b: vec![CMatrix::zeros(m, m); k * k] }
    }
}

pub fn effective_channels(channels: &ChannelRealization, prec: &PrecoderSet) -> EffectiveChannelSet {
    let k_users = channels.num_users();
    let m = channels.h.first().map_or(0, |h| h.cols());
    let all = CMatrix::hstack(&channels.h).adjoint_mul(&CMatrix::hstack(&prec.w));
    let mut b = Vec::with_capacity(k_users * k_users);
    for k in 0..k_users {
        for i in 0..k_users {
            b.push(CMatrix::from_fn(m, m, |r, c| all[(k * m + r, i * m + c)]));
        }
    }
    EffectiveChannelSet { k: k_users, b }
}

//! Small-scale fading, the uplink pilot phase and per-AP MMSE channel estimation.

use alloc::vec::Vec;

use crate::linalg::CMatrix;
use crate::rng::{complex_normal, complex_normal_matrix, Seed};
use crate::system::{Geometry, PilotBook, SystemConfig};

/// One coherence block of channels. `h[k]` is the stacked `LN × M` matrix of
/// user `k`, whose rows `lN..(l+1)N` form the block `H_lk`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub l: usize,
    pub n: usize,
    pub h: Vec<CMatrix>,
}

impl ChannelRealization {
    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    pub fn stacked(&self, k: usize) -> &CMatrix {
        &self.h[k]
    }

    /// Copy of the `N × M` block `H_lk`.
    pub fn block(&self, l: usize, k: usize) -> CMatrix {
        self.h[k].row_block(l * self.n, (l + 1) * self.n)
    }
}

/// Draws `H_lk` with i.i.d. `CN(0, β_lk)` entries. Entries are drawn user by
/// user, AP by AP, column-major within each block.
pub fn draw_channels(geometry: &Geometry, config: &SystemConfig, seed: Seed) -> ChannelRealization {
    let mut rng = seed.rng();
    let (l_aps, n, m) = (config.l, config.n, config.m);
    let h = (0..config.k)
        .map(|k| {
            let blocks: Vec<CMatrix> = (0..l_aps)
                .map(|l| complex_normal_matrix(&mut rng, n, m, geometry.beta(l, k)))
                .collect();
            CMatrix::vstack(&blocks)
        })
        .collect();
    ChannelRealization { l: l_aps, n, h }
}

/// Pilot observations after correlation with each user's pilot, stacked like
/// [`ChannelRealization`]: `y[k]` holds `Y_lk` in row block `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkObservation {
    pub y: Vec<CMatrix>,
}

/// `Y_lk = √(q τ_p) H_lk + Σ_{i∈P_k, i≠k} √(q τ_p) H_li + N_lk` with caller-supplied
/// correlated-domain noise `noise[k]` (stacked `LN × M`).
pub fn uplink_observation_with_noise(
    channels: &ChannelRealization,
    pilots: &PilotBook,
    config: &SystemConfig,
    noise: &[CMatrix],
) -> UplinkObservation {
    let amp = libm::sqrt(config.q_ul * config.tau_p as f64);
    let y = (0..channels.num_users())
        .map(|k| {
            let mut yk = noise[k].clone();
            for &i in pilots.sharing_set(k) {
                yk.axpy(amp, &channels.h[i]);
            }
            yk
        })
        .collect();
    UplinkObservation { y }
}

/// Uplink pilot phase with unit-variance receiver noise drawn directly in the
/// correlated domain.
pub fn uplink_pilot_phase(channels: &ChannelRealization, pilots: &PilotBook, config: &SystemConfig, seed: Seed) -> UplinkObservation {
    let mut rng = seed.rng();
    let rows = channels.l * channels.n;
    let noise: Vec<CMatrix> = (0..channels.num_users())
        .map(|_| complex_normal_matrix(&mut rng, rows, config.m, 1.0))
        .collect();
    uplink_observation_with_noise(channels, pilots, config, &noise)
}

/// Per-AP MMSE estimates and their per-entry statistics, laid out `[l * K + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkEstimate {
    pub l: usize,
    pub n: usize,
    pub h_hat: Vec<CMatrix>,
    pub gamma: Vec<f64>,
    pub err_var: Vec<f64>,
}

impl UplinkEstimate {
    pub fn num_users(&self) -> usize {
        self.h_hat.len()
    }

    #[inline]
    pub fn gamma(&self, l: usize, k: usize) -> f64 {
        self.gamma[l * self.num_users() + k]
    }

    #[inline]
    pub fn err_var(&self, l: usize, k: usize) -> f64 {
        self.err_var[l * self.num_users() + k]
    }
}

/// Scalar MMSE coefficient and estimate variance for one entry of `H_lk`.
///
/// `contamination` is `Σ_{i∈P_k} q_i β_li`, user `k` included.
#[inline]
pub fn mmse_coefficient(q_k: f64, tau_p: f64, beta_lk: f64, contamination: f64) -> (f64, f64) {
    let denom = tau_p * contamination + 1.0;
    let c = libm::sqrt(q_k * tau_p) * beta_lk / denom;
    let gamma = q_k * tau_p * beta_lk * beta_lk / denom;
    (c, gamma)
}

/// The coefficient `β_lk / (q_k τ_p Σ_{i∈P_k} β_lk² + 1)`, kept alongside
/// [`mmse_coefficient`] so the two forms can be compared numerically. It is
/// not used by the pipeline.
pub fn uncorrected_coefficient(q_k: f64, tau_p: f64, beta_lk: f64, sharing_set_size: usize) -> f64 {
    beta_lk / (q_k * tau_p * sharing_set_size as f64 * beta_lk * beta_lk + 1.0)
}

pub fn mmse_uplink_estimate(obs: &UplinkObservation, geometry: &Geometry, pilots: &PilotBook, config: &SystemConfig) -> UplinkEstimate {
    let (l_aps, n, k_users) = (config.l, config.n, config.k);
    let tau_p = config.tau_p as f64;
    let q = config.q_ul;
    let mut gamma = Vec::with_capacity(l_aps * k_users);
    let mut err_var = Vec::with_capacity(l_aps * k_users);
    let mut coeffs = Vec::with_capacity(l_aps * k_users);
    for l in 0..l_aps {
        for k in 0..k_users {
            let contamination: f64 = pilots.sharing_set(k).iter().map(|&i| q * geometry.beta(l, i)).sum();
            let beta = geometry.beta(l, k);
            let (c, g) = mmse_coefficient(q, tau_p, beta, contamination);
            coeffs.push(c);
            gamma.push(g);
            err_var.push((beta - g).max(0.0));
        }
    }
    let h_hat = (0..k_users)
        .map(|k| {
            let mut est = obs.y[k].clone();
            let m = est.cols();
            let rows = est.rows();
            for c in 0..m {
                let col = &mut est.as_mut_slice()[c * rows..(c + 1) * rows];
                for l in 0..l_aps {
                    let s = coeffs[l * k_users + k];
                    for z in &mut col[l * n..(l + 1) * n] {
                        *z *= s;
                    }
                }
            }
            est
        })
        .collect();
    UplinkEstimate { l: l_aps, n, h_hat, gamma, err_var }
}

/// Draws unit-variance noise shaped like a stacked realization; shared by tests
/// and the downlink pilot phase.
pub(crate) fn unit_noise(rng: &mut crate::rng::SimRng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng, 1.0))
}

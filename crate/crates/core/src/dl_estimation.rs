//! Downlink pilots, LMMSE estimation of the vectorized effective channel
//! `b_kk = vec(B_kk)`, and ZF combining.
//!
//! The effective channel is not Gaussian, so the estimator is the best linear
//! one built from long-term first and second moments. Those moments are
//! learned from a calibration ensemble drawn with the same geometry and the
//! same precoding pipeline as the evaluation.

use alloc::vec::Vec;

use crate::channel::unit_noise;
use crate::error::{Error, Result};
use crate::linalg::{condition_frobenius, CMatrix, Cholesky, Lu, C64};
use crate::moments::CrossMoments;
use crate::pipeline::{realize, PipelineOptions};
use crate::precoding::EffectiveChannelSet;
use crate::rng::{Purpose, Seed};
use crate::system::{Geometry, PilotBook, SystemConfig};

/// Default relative ridge on the observation covariance.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;
/// Default condition-number limit above which ZF combining declares an outage.
pub const DEFAULT_ZF_COND_LIMIT: f64 = 1e12;

/// `Ỹ_k = √τ_p Σ_{i∈P_k} B_ki Q_i^{1/2} + N_k` for one user, with caller noise.
///
/// With `Q_i = q I` this is `√(q τ_p) B_kk + Σ_{i≠k} √(q τ_p) B_ki + N_k`.
pub fn dl_observation_with_noise(
    eff: &EffectiveChannelSet,
    powers: &[Vec<f64>],
    pilots: &PilotBook,
    config: &SystemConfig,
    k: usize,
    noise: &CMatrix,
) -> CMatrix {
    let tau = config.tau_p as f64;
    let mut y = noise.clone();
    for &i in pilots.sharing_set(k) {
        let amps: Vec<f64> = powers[i].iter().map(|q| libm::sqrt(q * tau)).collect();
        y = &y + &eff.get(k, i).mul_diag(&amps);
    }
    y
}

/// Downlink pilot phase for all users; noise is drawn user by user.
pub fn dl_pilot_phase(eff: &EffectiveChannelSet, powers: &[Vec<f64>], pilots: &PilotBook, config: &SystemConfig, seed: Seed) -> Vec<CMatrix> {
    let mut rng = seed.rng();
    let m = config.m;
    (0..eff.k)
        .map(|k| {
            let noise = unit_noise(&mut rng, m, m);
            dl_observation_with_noise(eff, powers, pilots, config, k, &noise)
        })
        .collect()
}

/// Long-term moments of `b_kk` and `ỹ_k` for one user.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EffChanStats {
    pub mean_b: Vec<C64>,
    pub mean_y: Vec<C64>,
    pub c_b: CMatrix,
    pub c_by: CMatrix,
    pub c_y: CMatrix,
    pub sample_count: usize,
    /// Ridge added to `c_y` before inversion.
    pub ridge: f64,
}

impl EffChanStats {
    pub fn from_moments(acc: &CrossMoments, ridge_scale: f64) -> Self {
        let c_y = acc.cov_yy();
        let dim = c_y.rows().max(1) as f64;
        let ridge = ridge_scale * c_y.trace().re / dim;
        Self {
            mean_b: acc.mean_x().to_vec(),
            mean_y: acc.mean_y().to_vec(),
            c_b: acc.cov_xx(),
            c_by: acc.cov_xy(),
            c_y,
            sample_count: acc.count(),
            ridge,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean_b.len()
    }
}

/// Smallest calibration ensemble accepted for `M`-antenna users.
pub fn min_calibration_size(m: usize) -> usize {
    10 * m * m
}

/// Accumulates per-user moments over `n_stat` draws produced by `draw`.
///
/// `draw(r)` returns the effective channels and power matrices of draw `r`;
/// downlink pilot noise for draw `r` comes from `noise_seed.child(r)`.
pub fn calibrate_with<F>(
    config: &SystemConfig,
    pilots: &PilotBook,
    n_stat: usize,
    ridge_scale: f64,
    noise_seed: Seed,
    mut draw: F,
) -> Result<Vec<EffChanStats>>
where
    F: FnMut(usize) -> Result<(EffectiveChannelSet, Vec<Vec<f64>>)>,
{
    let min = min_calibration_size(config.m);
    if n_stat < min {
        return Err(Error::CalibrationTooSmall { n_stat, min });
    }
    let d = config.m * config.m;
    let mut acc: Vec<CrossMoments> = (0..config.k).map(|_| CrossMoments::new(d, d)).collect();
    for r in 0..n_stat {
        let (eff, powers) = draw(r)?;
        let obs = dl_pilot_phase(&eff, &powers, pilots, config, noise_seed.child(r as u64));
        for (k, a) in acc.iter_mut().enumerate() {
            a.push(eff.get(k, k).vec(), obs[k].vec());
        }
    }
    Ok(acc.iter().map(|a| EffChanStats::from_moments(a, ridge_scale)).collect())
}

/// Calibration pass over the full uplink-estimation and precoding pipeline.
pub fn calibrate_eff_stats(
    config: &SystemConfig,
    geometry: &Geometry,
    pilots: &PilotBook,
    options: PipelineOptions,
    n_stat: usize,
    ridge_scale: f64,
    seed: Seed,
) -> Result<Vec<EffChanStats>> {
    let ch_seed = seed.purpose(Purpose::CalibrationChannel);
    let ul_seed = seed.purpose(Purpose::CalibrationUplinkNoise);
    calibrate_with(config, pilots, n_stat, ridge_scale, seed.purpose(Purpose::CalibrationDownlinkNoise), |r| {
        let real = realize(config, geometry, pilots, options, ch_seed.child(r as u64), ul_seed.child(r as u64))?;
        Ok((real.effective, real.precoders.q))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkEstimate {
    pub b_hat: Vec<C64>,
    pub b_hat_mat: CMatrix,
    pub c_err: CMatrix,
    pub mse: f64,
}

/// The LMMSE map `ỹ ↦ E{b} + C_by C_y⁻¹ (ỹ − E{ỹ})` prepared once per user.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    m: usize,
    mean_b: Vec<C64>,
    mean_y: Vec<C64>,
    gain: CMatrix,
    c_err: CMatrix,
    mse: f64,
}

impl LmmseFilter {
    pub fn new(stats: &EffChanStats) -> Result<Self> {
        let d = stats.dim();
        let m = libm::round(libm::sqrt(d as f64)) as usize;
        let mut c_y = stats.c_y.clone();
        for i in 0..d {
            c_y[(i, i)].re += stats.ridge;
        }
        let chol = Cholesky::new(&c_y).map_err(Error::numerical("downlink observation covariance"))?;
        // C_y Hermitian: C_by C_y⁻¹ = (C_y⁻¹ C_byᴴ)ᴴ
        let gain = chol.solve(&stats.c_by.adjoint()).adjoint();
        let c_err = (&stats.c_b - &gain.mul_adjoint(&stats.c_by)).hermitian_part();
        let mse = c_err.trace().re;
        Ok(Self { m, mean_b: stats.mean_b.clone(), mean_y: stats.mean_y.clone(), gain, c_err, mse })
    }

    pub fn gain(&self) -> &CMatrix {
        &self.gain
    }

    pub fn error_covariance(&self) -> &CMatrix {
        &self.c_err
    }

    pub fn mse(&self) -> f64 {
        self.mse
    }

    pub fn apply(&self, obs: &CMatrix) -> DownlinkEstimate {
        let centered: Vec<C64> = obs.vec().iter().zip(&self.mean_y).map(|(y, m)| y - m).collect();
        let innov = self.gain.matmul(&CMatrix::from_vec(centered.len(), 1, &centered));
        let b_hat: Vec<C64> = self.mean_b.iter().zip(innov.vec()).map(|(m, v)| m + v).collect();
        let b_hat_mat = CMatrix::from_vec(self.m, self.m, &b_hat);
        DownlinkEstimate { b_hat, b_hat_mat, c_err: self.c_err.clone(), mse: self.mse }
    }
}

pub fn lmmse_estimate(obs: &CMatrix, stats: &EffChanStats) -> Result<DownlinkEstimate> {
    Ok(LmmseFilter::new(stats)?.apply(obs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combiner {
    /// `U_kᴴ`, applied from the left.
    pub u_h: CMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankDeficient {
    pub condition: f64,
}

/// `U_kᴴ = (B̂ᴴ B̂)⁻¹ B̂ᴴ`. For the square `B̂` used here this is `B̂⁻¹`,
/// computed by LU. Estimates whose Frobenius condition number exceeds
/// `cond_limit` are rejected.
pub fn zf_combiner(b_hat: &CMatrix, cond_limit: f64) -> core::result::Result<Combiner, RankDeficient> {
    let condition = condition_frobenius(b_hat);
    if !(condition <= cond_limit) {
        return Err(RankDeficient { condition });
    }
    let u_h = if b_hat.is_square() {
        Lu::new(b_hat).map_err(|_| RankDeficient { condition })?.inverse()
    } else {
        let gram = b_hat.adjoint_mul(b_hat);
        Lu::new(&gram).map_err(|_| RankDeficient { condition })?.solve(&b_hat.adjoint())
    };
    Ok(Combiner { u_h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::system::PilotBook;
    use crate::testutil::random_matrix;
    use alloc::vec;

    fn cfg(k: usize, m: usize, k_prime: usize) -> SystemConfig {
        SystemConfig { l: 1, n: 2, k, m, k_prime, tau_p: k_prime * m, ..SystemConfig::default() }
    }

    #[test]
    fn noise_free_singleton_observation() {
        let c = cfg(2, 2, 2);
        let mut rng = Seed(1).rng();
        let eff = EffectiveChannelSet { k: 2, b: (0..4).map(|_| random_matrix(2, 2, &mut rng)).collect() };
        let book = PilotBook::orthogonal(&c).unwrap();
        let q = vec![vec![3.0, 3.0]; 2];
        let y = dl_observation_with_noise(&eff, &q, &book, &c, 1, &CMatrix::zeros(2, 2));
        assert!((&y - &eff.get(1, 1).scale(libm::sqrt(3.0 * 4.0))).max_abs() < 1e-14);
    }

    #[test]
    fn zero_channels_leave_unit_noise() {
        let c = cfg(1, 2, 1);
        let eff = EffectiveChannelSet::zeros(1, 2);
        let book = PilotBook::orthogonal(&c).unwrap();
        let q = vec![vec![1.0; 2]];
        let mut pow = 0.0;
        let n = 20_000;
        for r in 0..n {
            let y = dl_pilot_phase(&eff, &q, &book, &c, Seed(4).child(r));
            pow += y[0].frobenius_sq();
        }
        let per_entry = pow / (n as f64 * 4.0);
        assert!((per_entry - 1.0).abs() < 0.03, "{per_entry}");
    }

    #[test]
    fn correlated_domain_matches_explicit_pilot_transmission() {
        // Ỹ^pilot = Σ_i √(q τ) B_ki Φ_iᴴ + N, then correlate with Φ_k.
        let c = cfg(4, 2, 2);
        let book = PilotBook::from_assignment(4, 2, 2, vec![0, 1, 1, 0]).unwrap();
        let mut rng = Seed(2).rng();
        let eff = EffectiveChannelSet { k: 4, b: (0..16).map(|_| random_matrix(2, 2, &mut rng)).collect() };
        let q = vec![vec![0.7, 0.7]; 4];
        let amp = libm::sqrt(0.7 * 4.0);
        let n_full = random_matrix(2, 4, &mut rng);
        for k in 0..4 {
            let mut rx = n_full.clone();
            for i in 0..4 {
                rx = &rx + &eff.get(k, i).mul_adjoint(book.pilot(i)).scale(amp);
            }
            let explicit = rx.matmul(book.pilot(k));
            let direct = dl_observation_with_noise(&eff, &q, &book, &c, k, &n_full.matmul(book.pilot(k)));
            assert!((&explicit - &direct).max_abs() < 1e-10);
        }
    }

    fn stats_from(c_b: CMatrix, c_by: CMatrix, c_y: CMatrix, mean_b: Vec<C64>) -> EffChanStats {
        let d = c_b.rows();
        EffChanStats { mean_y: vec![C64::new(0.0, 0.0); d], mean_b, c_b, c_by, c_y, sample_count: 1, ridge: 0.0 }
    }

    #[test]
    fn uninformative_observation_returns_prior() {
        let mut rng = Seed(3).rng();
        let a = random_matrix(4, 4, &mut rng);
        let c_b = a.mul_adjoint(&a);
        let mean_b: Vec<C64> = (0..4).map(|i| C64::new(i as f64, 1.0)).collect();
        let st = stats_from(c_b.clone(), CMatrix::zeros(4, 4), CMatrix::identity(4), mean_b.clone());
        let est = lmmse_estimate(&random_matrix(2, 2, &mut rng), &st).unwrap();
        assert_eq!(est.b_hat, mean_b);
        assert!((&est.c_err - &c_b).max_abs() < 1e-12);
    }

    #[test]
    fn perfect_observation_limit() {
        // ỹ = b exactly: C_by = C_y = C_b.
        let mut rng = Seed(5).rng();
        let a = random_matrix(4, 4, &mut rng);
        let c_b = &a.mul_adjoint(&a) + &CMatrix::identity(4);
        let st = stats_from(c_b.clone(), c_b.clone(), c_b, vec![C64::new(0.0, 0.0); 4]);
        let b = random_matrix(2, 2, &mut rng);
        let est = lmmse_estimate(&b, &st).unwrap();
        assert!((&est.b_hat_mat - &b).max_abs() < 1e-10);
        assert!(est.mse.abs() < 1e-10);
    }

    #[test]
    fn singular_observation_covariance_is_reported() {
        let st = stats_from(CMatrix::identity(1), CMatrix::zeros(1, 1), CMatrix::zeros(1, 1), vec![C64::new(0.0, 0.0)]);
        assert!(matches!(LmmseFilter::new(&st), Err(Error::Numerical { .. })));
    }

    #[test]
    fn zf_examples() {
        let u = zf_combiner(&CMatrix::identity(2), DEFAULT_ZF_COND_LIMIT).unwrap();
        assert!((&u.u_h - &CMatrix::identity(2)).max_abs() < 1e-15);
        let u = zf_combiner(&CMatrix::from_real_diag(&[2.0, 4.0]), DEFAULT_ZF_COND_LIMIT).unwrap();
        assert!((&u.u_h - &CMatrix::from_real_diag(&[0.5, 0.25])).max_abs() < 1e-15);
        let mut rng = Seed(6).rng();
        let b = &random_matrix(3, 3, &mut rng) + &CMatrix::identity(3).scale(3.0);
        let u = zf_combiner(&b, DEFAULT_ZF_COND_LIMIT).unwrap();
        assert!((&u.u_h.matmul(&b) - &CMatrix::identity(3)).max_abs() < 1e-10);
    }

    #[test]
    fn zf_flags_rank_deficiency() {
        let b = CMatrix::from_rows(&[&[ONE, ONE], &[ONE, ONE]]);
        assert!(zf_combiner(&b, DEFAULT_ZF_COND_LIMIT).is_err());
        let nearly = CMatrix::from_real_diag(&[1.0, 1e-14]);
        let err = zf_combiner(&nearly, DEFAULT_ZF_COND_LIMIT).unwrap_err();
        assert!(err.condition > 1e12);
    }

    #[test]
    fn calibration_size_is_enforced() {
        let c = cfg(1, 2, 1);
        let book = PilotBook::orthogonal(&c).unwrap();
        let r = calibrate_with(&c, &book, 39, DEFAULT_RIDGE_SCALE, Seed(0), |_| unreachable!());
        assert_eq!(r.unwrap_err(), Error::CalibrationTooSmall { n_stat: 39, min: 40 });
    }
}

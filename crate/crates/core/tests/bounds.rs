use cellfree_core::bounds::{hardening_noise_cov, mean_effective_channel, se_no_csi, BoundKind, NoCsiAccumulator};
use cellfree_core::harness::{run_point, SimOptions};
use cellfree_core::linalg::{log2det_whitened_gram, Cholesky};
use cellfree_core::precoding::EffectiveChannelSet;
use cellfree_core::rng::complex_normal_matrix;
use cellfree_core::{CMatrix, Seed, SystemConfig, C64};
use proptest::prelude::*;

/// `log₂|det A|` by Gaussian elimination with partial pivoting, written
/// independently of the crate's factorizations.
fn log2_abs_det(a: &CMatrix) -> f64 {
    let n = a.rows();
    let mut m: Vec<Vec<C64>> = (0..n).map(|r| (0..n).map(|c| a[(r, c)]).collect()).collect();
    let mut acc = 0.0;
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm())).unwrap();
        m.swap(col, p);
        let piv = m[col][col];
        acc += piv.norm().log2();
        for r in col + 1..n {
            let f = m[r][col] / piv;
            for c in col..n {
                let v = m[col][c];
                m[r][c] -= f * v;
            }
        }
    }
    acc
}

fn random(seed: u64, r: usize, c: usize) -> CMatrix {
    complex_normal_matrix(&mut Seed(seed).rng(), r, c, 1.0)
}

proptest! {
    #[test]
    fn determinant_identity(seed in any::<u64>(), m in 1usize..5, p in 1usize..7) {
        let a = random(seed, m, p);
        let b = random(seed ^ 1, p, m);
        let lhs = log2_abs_det(&(&CMatrix::identity(m) + &a.matmul(&b)));
        let rhs = log2_abs_det(&(&CMatrix::identity(p) + &b.matmul(&a)));
        prop_assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn whitened_gram_log_det_is_finite_and_non_negative(seed in any::<u64>(), m in 1usize..5, scale in -6.0f64..6.0) {
        let s = random(seed, m, m).scale(10f64.powf(scale));
        let x = random(seed ^ 2, m, m + 2);
        let noise = &x.mul_adjoint(&x) + &CMatrix::identity(m);
        let v = log2det_whitened_gram(&Cholesky::new(&noise).unwrap(), &s).unwrap();
        prop_assert!(v.is_finite() && v >= 0.0);
        let oracle = log2_abs_det(&(&noise + &s.mul_adjoint(&s))) - log2_abs_det(&noise);
        prop_assert!((v - oracle).abs() < 1e-8 * oracle.abs().max(1.0));
    }

    #[test]
    fn no_csi_bound_is_invariant_to_receive_rotation(seed in any::<u64>(), m in 1usize..4) {
        let config = SystemConfig { k: 2, k_prime: 2, m, tau_p: 2 * m, ..SystemConfig::default() };
        // a Haar-ish unitary from the QR of a Gaussian matrix via Gram-Schmidt
        let g = random(seed ^ 7, m, m);
        let mut u = CMatrix::zeros(m, m);
        for c in 0..m {
            let mut v: Vec<C64> = g.col(c).to_vec();
            for p in 0..c {
                let proj: C64 = (0..m).map(|r| u[(r, p)].conj() * v[r]).sum();
                for r in 0..m {
                    v[r] -= proj * u[(r, p)];
                }
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for r in 0..m {
                u.as_mut_slice()[c * m + r] = v[r] / norm;
            }
        }
        let q = vec![vec![1.0; m], vec![0.7; m]];
        let ens: Vec<EffectiveChannelSet> = (0..30)
            .map(|r| EffectiveChannelSet { k: 2, b: (0..4).map(|i| &random(seed.wrapping_add(r * 4 + i), m, m) + &CMatrix::identity(m).scale(2.0)).collect() })
            .collect();
        let rotated: Vec<EffectiveChannelSet> = ens.iter().map(|e| EffectiveChannelSet { k: 2, b: e.b.iter().map(|b| u.matmul(b)).collect() }).collect();
        let se = |ens: &[EffectiveChannelSet]| {
            let b_bar = mean_effective_channel(&ens.iter().map(|e| e.get(0, 0).clone()).collect::<Vec<_>>());
            se_no_csi(&b_bar, &hardening_noise_cov(ens, &q, 0, &b_bar), &q[0], &config).unwrap()
        };
        let (a, b) = (se(&ens), se(&rotated));
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn streaming_and_batch_noise_covariances_agree(seed in any::<u64>(), m in 1usize..4, split in 1usize..19) {
        let q = vec![vec![0.5; m], vec![2.0; m]];
        let ens: Vec<EffectiveChannelSet> = (0..20)
            .map(|r| EffectiveChannelSet { k: 2, b: (0..4).map(|i| random(seed.wrapping_add(r * 4 + i), m, m)).collect() })
            .collect();
        let b_bar = mean_effective_channel(&ens.iter().map(|e| e.get(0, 0).clone()).collect::<Vec<_>>());
        let batch = hardening_noise_cov(&ens, &q, 0, &b_bar);
        let mut a = NoCsiAccumulator::new(m, &q[0]);
        let mut b = NoCsiAccumulator::new(m, &q[0]);
        for (r, e) in ens.iter().enumerate() {
            let i = cellfree_core::bounds::interference_cov(e, &q, 0);
            if r < split { a.push(e.get(0, 0), &i) } else { b.push(e.get(0, 0), &i) }
        }
        a.merge(&b);
        prop_assert!((&a.noise_cov() - &batch).max_abs() < 1e-10 * batch.max_abs());
        prop_assert!((&a.mean_channel() - &b_bar).max_abs() < 1e-12 * b_bar.max_abs().max(1.0));
    }
}

#[test]
fn bound_ordering_on_random_setups() {
    let options = SimOptions { n_stat: 200, n_realizations: 100, ..SimOptions::default() };
    for s in 0..12u64 {
        let m = 1 + (s % 2) as usize;
        let config = SystemConfig { l: 6, n: 2, k: 3, m, k_prime: 3, tau_p: 3 * m, ..SystemConfig::default() };
        let p = run_point(&config, Seed(400 + s), &options).unwrap();
        for k in 0..3 {
            let (nc, pc) = (&p.no_csi, &p.perfect_csi);
            let band = 2.0 * (nc.per_user_stderr[k].powi(2) + pc.per_user_stderr[k].powi(2)).sqrt();
            assert!(pc.per_user_se[k] + band >= nc.per_user_se[k], "setup {s} user {k}: {} < {}", pc.per_user_se[k], nc.per_user_se[k]);
        }
        for kind in BoundKind::ALL {
            assert!(p.get(kind).per_user_se.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}

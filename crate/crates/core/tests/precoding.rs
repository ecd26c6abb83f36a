use cellfree_core::bounds::hardening_diagnostic;
use cellfree_core::channel::{draw_channels, mmse_uplink_estimate, uplink_pilot_phase, UplinkEstimate};
use cellfree_core::precoding::{effective_channels, mmse_precoder, normalize_and_allocate, GramWeighting, NormalizationPolicy};
use cellfree_core::{build_pilot_book, generate_geometry, Geometry, Seed, SystemConfig};
use proptest::prelude::*;

fn small_config(l: usize, n: usize, k: usize, m: usize) -> SystemConfig {
    SystemConfig { l, n, k, m, k_prime: k, tau_p: k * m, tau_c: 4 * k * m + 2, ..SystemConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn per_ap_budget_holds_after_normalization(
        l in 1usize..5, n in 1usize..4, k in 1usize..4, m in 1usize..3, seed in any::<u64>(), rho_db in 80.0f64..140.0,
        per_ap in any::<bool>(), weighting in prop_oneof![Just(GramWeighting::UplinkPower), Just(GramWeighting::DownlinkPower), Just(GramWeighting::Unit)],
    ) {
        let mut config = small_config(l, n, k, m);
        config.rho_d = 10f64.powf(rho_db / 10.0);
        let geo = generate_geometry(&config, Seed(seed));
        let pilots = build_pilot_book(&config, Seed(seed).child(1)).unwrap();
        let ch = draw_channels(&geo, &config, Seed(seed).child(2));
        let est = mmse_uplink_estimate(&uplink_pilot_phase(&ch, &pilots, &config, Seed(seed).child(3)), &geo, &pilots, &config);
        let raw = mmse_precoder(&est, &config, weighting).unwrap();
        let policy = if per_ap { NormalizationPolicy::PerApScalar } else { NormalizationPolicy::CommonScalar };
        let prec = normalize_and_allocate(&raw, &config, policy).unwrap();
        let powers = prec.ap_powers();
        let tight = powers.iter().filter(|&&p| (p - config.rho_d).abs() <= 1e-9 * config.rho_d).count();
        prop_assert!(powers.iter().all(|&p| p <= config.rho_d * (1.0 + 1e-9)));
        prop_assert!(tight >= 1);
        if per_ap {
            prop_assert_eq!(tight, l);
        }
        prop_assert!(prec.q.iter().flatten().all(|&q| q > 0.0));
    }
}

/// `Σ_{i≠k} ‖B_ki‖² / ‖B_kk‖²` averaged over users and draws, with perfect
/// estimates so only the regularization differs between points.
fn interference_ratio(config: &SystemConfig, geo: &Geometry, draws: u64) -> f64 {
    let mut acc = 0.0;
    for r in 0..draws {
        let ch = draw_channels(geo, config, Seed(77).child(r));
        let est = UplinkEstimate {
            l: config.l,
            n: config.n,
            h_hat: ch.h.clone(),
            gamma: (0..config.l).flat_map(|l| (0..config.k).map(move |k| (l, k))).map(|(l, k)| geo.beta(l, k)).collect(),
            err_var: vec![0.0; config.l * config.k],
        };
        let raw = mmse_precoder(&est, config, GramWeighting::DownlinkPower).unwrap();
        let prec = normalize_and_allocate(&raw, config, NormalizationPolicy::CommonScalar).unwrap();
        let eff = effective_channels(&ch, &prec);
        for k in 0..config.k {
            let leak: f64 = (0..config.k).filter(|&i| i != k).map(|i| eff.get(k, i).frobenius_sq()).sum();
            acc += leak / eff.get(k, k).frobenius_sq();
        }
    }
    acc / (draws as f64 * config.k as f64)
}

#[test]
fn interference_falls_as_downlink_power_grows() {
    let base = small_config(4, 2, 3, 2);
    let geo = generate_geometry(&base, Seed(3));
    let ratios: Vec<f64> = [90.0, 100.0, 110.0, 120.0, 130.0, 140.0]
        .iter()
        .map(|db| {
            let c = SystemConfig { rho_d: 10f64.powf(db / 10.0), ..base.clone() };
            interference_ratio(&c, &geo, 200)
        })
        .collect();
    for w in ratios.windows(2) {
        assert!(w[1] < w[0], "{ratios:?}");
    }
    assert!(ratios[ratios.len() - 1] < 0.05 * ratios[0], "{ratios:?}");
}

#[test]
fn diagonal_hardening_decays_like_one_over_n() {
    let config = SystemConfig { l: 1, k: 1, m: 2, k_prime: 1, tau_p: 2, ..SystemConfig::default() };
    let geo = Geometry::uniform(1, 1, 1.0);
    let rows = hardening_diagnostic(&config, &geo, 0, &[8, 16, 32, 64], 4000, Seed(5));
    for r in &rows {
        assert!((r.diag_mean - 1.0).abs() < 4.0 * (r.diag_var / (2.0 * r.trials as f64)).sqrt());
        assert!((r.diag_var - 1.0 / r.n as f64).abs() < 3.0 * r.diag_var_stderr, "{r:?}");
        assert!((r.offdiag_var - 1.0 / r.n as f64).abs() < 3.0 * r.offdiag_var_stderr, "{r:?}");
        assert!(r.offdiag_mean.norm() < 4.0 * (r.offdiag_var / r.trials as f64).sqrt());
    }
    for w in rows.windows(2) {
        let ratio = w[1].diag_var / w[0].diag_var;
        assert!((ratio - 0.5).abs() < 0.1, "variance ratio {ratio} from N={} to N={}", w[0].n, w[1].n);
    }
}

#[test]
fn hardening_theory_with_unequal_gains() {
    let config = SystemConfig { l: 3, k: 1, m: 1, k_prime: 1, tau_p: 1, ..SystemConfig::default() };
    let geo = Geometry::from_beta(vec![Default::default(); 3], vec![Default::default()], vec![vec![1.0], vec![0.25], vec![0.5]]);
    let rows = hardening_diagnostic(&config, &geo, 0, &[4], 20_000, Seed(8));
    let theory = (1.0 + 0.0625 + 0.25) / (4.0 * 1.75f64.powi(2));
    assert!((rows[0].var_theory - theory).abs() < 1e-15);
    assert!((rows[0].diag_var - theory).abs() < 3.0 * rows[0].diag_var_stderr, "{:?}", rows[0]);
}

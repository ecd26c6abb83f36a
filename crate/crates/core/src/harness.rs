//! Monte Carlo experiments: one random setup at a time, then sweeps.
//!
//! A setup is one geometry and pilot assignment. For each setup the harness
//! calibrates the downlink LMMSE statistics, then runs the realization loop in
//! which all three bounds consume the same channel draws. Setups are
//! independent; their outcomes are aggregated in setup order, so the result
//! does not depend on how the setups were scheduled.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bounds::{interference_cov, perfect_csi_log2det, zf_trial_cov, BoundKind, NoCsiAccumulator, SeResult, ZfNoiseAccumulator};
use crate::dl_estimation::{calibrate_eff_stats, dl_pilot_phase, zf_combiner, LmmseFilter, DEFAULT_RIDGE_SCALE, DEFAULT_ZF_COND_LIMIT};
use crate::error::{Error, Result};
use crate::moments::{CompensatedSum, ScalarStats};
use crate::pipeline::{realize, PipelineOptions};
use crate::precoding::{GramWeighting, NormalizationPolicy};
use crate::rng::{Purpose, Seed};
use crate::system::{build_pilot_book, generate_geometry, Geometry, PilotBook, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SweepAxis {
    #[cfg_attr(feature = "serde", serde(rename = "N", alias = "n"))]
    N,
    #[cfg_attr(feature = "serde", serde(rename = "K", alias = "k"))]
    K,
    #[cfg_attr(feature = "serde", serde(rename = "M", alias = "m"))]
    M,
    #[cfg_attr(feature = "serde", serde(rename = "rho_d"))]
    RhoD,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::N => "N",
            SweepAxis::K => "K",
            SweepAxis::M => "M",
            SweepAxis::RhoD => "rho_d",
        }
    }

    /// Applies one sweep value to `base`. Changing `K` carries `K'` along when
    /// the base uses orthogonal pilots; `τ_p` is re-derived as `K'·M`.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut c = base.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Plan(format!("{} must be a positive integer, got {value}", self.as_str())))
            }
        };
        match self {
            SweepAxis::N => c.n = count()?,
            SweepAxis::K => {
                c.k = count()?;
                if base.k_prime == base.k {
                    c.k_prime = c.k;
                }
            }
            SweepAxis::M => c.m = count()?,
            SweepAxis::RhoD => c.rho_d = value,
        }
        c.tau_p = c.k_prime * c.m;
        c.check()?;
        Ok(c)
    }
}

/// Monte Carlo sizes and numerical knobs shared by every setup.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimOptions {
    pub normalization: NormalizationPolicy,
    pub weighting: GramWeighting,
    pub n_stat: usize,
    pub n_realizations: usize,
    pub ridge_scale: f64,
    pub zf_cond_limit: f64,
    /// Batches used for the batch-means standard error of the no-CSI and
    /// downlink-pilot bounds.
    pub batches: usize,
}

impl SimOptions {
    pub fn pipeline(&self) -> PipelineOptions {
        PipelineOptions { normalization: self.normalization, weighting: self.weighting }
    }
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            normalization: NormalizationPolicy::default(),
            weighting: GramWeighting::default(),
            n_stat: 2000,
            n_realizations: 500,
            ridge_scale: DEFAULT_RIDGE_SCALE,
            zf_cond_limit: DEFAULT_ZF_COND_LIMIT,
            batches: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentPlan {
    pub base_config: SystemConfig,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub n_setups: usize,
    pub master_seed: u64,
    pub options: SimOptions,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(Error::Plan("sweep_values is empty".into()));
        }
        if self.n_setups == 0 {
            return Err(Error::Plan("n_setups must be at least 1".into()));
        }
        if self.options.n_realizations == 0 {
            return Err(Error::Plan("n_realizations must be at least 1".into()));
        }
        if !(self.options.ridge_scale >= 0.0) || !(self.options.zf_cond_limit > 1.0) {
            return Err(Error::Plan("ridge_scale must be >= 0 and zf_cond_limit > 1".into()));
        }
        for &v in &self.sweep_values {
            self.config_for(v)?;
        }
        Ok(())
    }

    pub fn config_for(&self, value: f64) -> Result<SystemConfig> {
        self.sweep_axis.apply(&self.base_config, value)
    }

    /// Seed of setup `s`. It does not depend on the sweep value, so every
    /// sweep point sees the same random layouts.
    pub fn setup_seed(&self, setup: usize) -> Seed {
        Seed(self.master_seed).child(setup as u64)
    }

    pub fn run_setup(&self, value_index: usize, setup: usize) -> Result<PointOutcome> {
        let config = self.config_for(self.sweep_values[value_index])?;
        run_point(&config, self.setup_seed(setup), &self.options)
    }
}

/// Geometry and pilots of one setup.
#[derive(Debug, Clone)]
pub struct SetupContext {
    pub config: SystemConfig,
    pub geometry: Geometry,
    pub pilots: PilotBook,
    pub seed: Seed,
}

pub fn prepare_setup(config: &SystemConfig, seed: Seed) -> Result<SetupContext> {
    config.check()?;
    let geometry = generate_geometry(config, seed.purpose(Purpose::Geometry));
    let pilots = build_pilot_book(config, seed.purpose(Purpose::Pilots))?;
    Ok(SetupContext { config: config.clone(), geometry, pilots, seed })
}

/// Per-user LMMSE filters from the calibration ensemble.
pub fn calibrate(ctx: &SetupContext, options: &SimOptions) -> Result<Vec<LmmseFilter>> {
    let stats = calibrate_eff_stats(&ctx.config, &ctx.geometry, &ctx.pilots, options.pipeline(), options.n_stat, options.ridge_scale, ctx.seed)?;
    stats.iter().map(LmmseFilter::new).collect()
}

/// The three bounds of one setup plus a digest of the channel draws they used.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointOutcome {
    pub no_csi: SeResult,
    pub perfect_csi: SeResult,
    pub dl_pilots: SeResult,
    /// FNV-1a over the bit patterns of every channel coefficient drawn.
    pub realization_digest: u64,
}

impl PointOutcome {
    pub fn get(&self, kind: BoundKind) -> &SeResult {
        match kind {
            BoundKind::NoCsi => &self.no_csi,
            BoundKind::PerfectCsi => &self.perfect_csi,
            BoundKind::DlPilots => &self.dl_pilots,
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_u64(h: &mut u64, x: u64) {
    for b in x.to_le_bytes() {
        *h ^= b as u64;
        *h = h.wrapping_mul(FNV_PRIME);
    }
}

fn batch_stderr(values: &[f64]) -> f64 {
    let mut s = ScalarStats::default();
    values.iter().for_each(|&v| s.push(v));
    s.std_error()
}

/// Realization loop for one prepared and calibrated setup.
pub fn evaluate(ctx: &SetupContext, filters: &[LmmseFilter], options: &SimOptions) -> Result<PointOutcome> {
    let config = &ctx.config;
    let (k_users, m) = (config.k, config.m);
    let n_real = options.n_realizations;
    let batches = options.batches.clamp(1, n_real.max(1));

    let mut no_csi: Vec<Vec<NoCsiAccumulator>> = Vec::new();
    let mut zf: Vec<Vec<ZfNoiseAccumulator>> = (0..batches).map(|_| vec![ZfNoiseAccumulator::new(m); k_users]).collect();
    let mut perfect = vec![ScalarStats::default(); k_users];
    let mut digest = FNV_OFFSET;
    let mut powers: Option<Vec<Vec<f64>>> = None;

    let ch_seed = ctx.seed.purpose(Purpose::Channel);
    let ul_seed = ctx.seed.purpose(Purpose::UplinkNoise);
    let dl_seed = ctx.seed.purpose(Purpose::DownlinkNoise);
    for r in 0..n_real {
        let real = realize(config, &ctx.geometry, &ctx.pilots, options.pipeline(), ch_seed.child(r as u64), ul_seed.child(r as u64))?;
        for h in &real.channels.h {
            h.vec().iter().for_each(|z| {
                fnv_u64(&mut digest, z.re.to_bits());
                fnv_u64(&mut digest, z.im.to_bits());
            });
        }
        let q = &real.precoders.q;
        if powers.is_none() {
            // power matrices are fixed per setup
            no_csi = (0..batches).map(|_| q.iter().map(|qk| NoCsiAccumulator::new(m, qk)).collect()).collect();
            powers = Some(q.clone());
        }
        let obs = dl_pilot_phase(&real.effective, q, &ctx.pilots, config, dl_seed.child(r as u64));
        let b = r * batches / n_real;
        for k in 0..k_users {
            let b_kk = real.effective.get(k, k);
            let interf = interference_cov(&real.effective, q, k);
            no_csi[b][k].push(b_kk, &interf);
            perfect[k].push(perfect_csi_log2det(b_kk, &interf, &q[k])?);
            let est = filters[k].apply(&obs[k]);
            match zf_combiner(&est.b_hat_mat, options.zf_cond_limit) {
                Ok(comb) => zf[b][k].push(&zf_trial_cov(&comb.u_h, b_kk, &est.b_hat_mat, &interf, &q[k])),
                Err(_) => zf[b][k].push_outage(),
            }
        }
    }
    let powers = powers.ok_or_else(|| Error::Plan("n_realizations must be at least 1".into()))?;

    let single = config.prelog_single();
    let mut nc = (Vec::with_capacity(k_users), Vec::with_capacity(k_users));
    let mut pc = (Vec::with_capacity(k_users), Vec::with_capacity(k_users));
    let mut dp = (Vec::with_capacity(k_users), Vec::with_capacity(k_users));
    let mut outages = 0;
    for k in 0..k_users {
        let mut total = NoCsiAccumulator::new(m, &powers[k]);
        let mut per_batch = Vec::with_capacity(batches);
        for row in &no_csi {
            total.merge(&row[k]);
            per_batch.push(row[k].se(config)?);
        }
        nc.0.push(total.se(config)?);
        nc.1.push(if batches > 1 { batch_stderr(&per_batch) } else { 0.0 });

        pc.0.push(single * perfect[k].mean());
        pc.1.push(single * perfect[k].std_error());

        let mut total = ZfNoiseAccumulator::new(m);
        let mut per_batch = Vec::with_capacity(batches);
        for row in &zf {
            total.merge(&row[k]);
            per_batch.push(row[k].se(&powers[k], config)?);
        }
        outages += total.outages();
        dp.0.push(total.se(&powers[k], config)?);
        dp.1.push(if batches > 1 { batch_stderr(&per_batch) } else { 0.0 });
    }
    Ok(PointOutcome {
        no_csi: SeResult::new(BoundKind::NoCsi, single, nc.0, nc.1, 0),
        perfect_csi: SeResult::new(BoundKind::PerfectCsi, single, pc.0, pc.1, 0),
        dl_pilots: SeResult::new(BoundKind::DlPilots, config.prelog_double(), dp.0, dp.1, outages),
        realization_digest: digest,
    })
}

/// One setup end to end: geometry, calibration, realization loop.
pub fn run_point(config: &SystemConfig, seed: Seed, options: &SimOptions) -> Result<PointOutcome> {
    let ctx = prepare_setup(config, seed)?;
    let filters = calibrate(&ctx, options)?;
    evaluate(&ctx, &filters, options)
}

/// One CSV row: a bound at a sweep value aggregated over setups.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResultRow {
    pub sweep_axis: SweepAxis,
    pub sweep_value: f64,
    pub bound: BoundKind,
    pub per_user_se_mean: f64,
    pub per_user_se_stderr: f64,
    pub sum_se_mean: f64,
    pub sum_se_stderr: f64,
    /// Setups that contributed, failures excluded.
    pub n_setups: usize,
    pub n_realizations: usize,
    pub outages: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SetupFailure {
    pub sweep_value: f64,
    pub setup: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointSummary {
    pub sweep_value: f64,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<SetupFailure>,
    /// Digests of the successful setups, combined in setup order.
    pub realization_digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    pub points: Vec<PointSummary>,
}

impl ExperimentResult {
    pub fn rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.points.iter().flat_map(|p| p.rows.iter())
    }

    pub fn row(&self, sweep_value: f64, bound: BoundKind) -> Option<&ResultRow> {
        self.rows().find(|r| r.sweep_value == sweep_value && r.bound == bound)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SetupFailure> {
        self.points.iter().flat_map(|p| p.failures.iter())
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let mut sum = CompensatedSum::default();
    values.iter().for_each(|&v| sum.add(v));
    let n = values.len() as f64;
    let mean = sum.value() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq = CompensatedSum::default();
    values.iter().for_each(|&v| sq.add((v - mean) * (v - mean)));
    (mean, libm::sqrt(sq.value() / (n - 1.0) / n))
}

/// Reduces the outcomes of every setup at one sweep value, in setup order.
///
/// Failed setups are recorded and excluded. More than 10% failures, or no
/// successful setup at all, aborts with [`Error::FailureBudgetExceeded`].
/// With two or more setups the standard error is the spread across setups;
/// a single setup reports its Monte Carlo standard error.
pub fn aggregate_point(plan: &ExperimentPlan, value_index: usize, outcomes: Vec<Result<PointOutcome>>) -> Result<PointSummary> {
    let sweep_value = plan.sweep_values[value_index];
    let total = outcomes.len();
    let mut ok = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (setup, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(p) => ok.push(p),
            Err(e) => failures.push(SetupFailure { sweep_value, setup, message: format!("{e}") }),
        }
    }
    if ok.is_empty() || failures.len() * 10 > total {
        return Err(Error::FailureBudgetExceeded { failed: failures.len(), total });
    }
    let mut digest = FNV_OFFSET;
    ok.iter().for_each(|p| fnv_u64(&mut digest, p.realization_digest));

    let rows = BoundKind::ALL
        .iter()
        .map(|&bound| {
            let results: Vec<&SeResult> = ok.iter().map(|p| p.get(bound)).collect();
            let per_user: Vec<f64> = results.iter().map(|r| r.sum_se / r.per_user_se.len() as f64).collect();
            let sums: Vec<f64> = results.iter().map(|r| r.sum_se).collect();
            let (per_user_se_mean, mut per_user_se_stderr) = mean_and_stderr(&per_user);
            let (sum_se_mean, mut sum_se_stderr) = mean_and_stderr(&sums);
            if results.len() == 1 {
                let r = results[0];
                let within = libm::sqrt(r.per_user_stderr.iter().map(|s| s * s).sum::<f64>());
                sum_se_stderr = within;
                per_user_se_stderr = within / r.per_user_se.len() as f64;
            }
            ResultRow {
                sweep_axis: plan.sweep_axis,
                sweep_value,
                bound,
                per_user_se_mean,
                per_user_se_stderr,
                sum_se_mean,
                sum_se_stderr,
                n_setups: results.len(),
                n_realizations: plan.options.n_realizations,
                outages: results.iter().map(|r| r.outages).sum(),
            }
        })
        .collect();
    Ok(PointSummary { sweep_value, rows, failures, realization_digest: digest })
}

/// Sequential sweep. `on_point` sees each sweep value's summary as soon as it
/// is complete.
pub fn run_sweep<F: FnMut(&PointSummary)>(plan: &ExperimentPlan, mut on_point: F) -> Result<ExperimentResult> {
    plan.validate()?;
    let mut points = Vec::with_capacity(plan.sweep_values.len());
    for vi in 0..plan.sweep_values.len() {
        let outcomes = (0..plan.n_setups).map(|s| plan.run_setup(vi, s)).collect();
        let summary = aggregate_point(plan, vi, outcomes)?;
        on_point(&summary);
        points.push(summary);
    }
    Ok(ExperimentResult { plan: plan.clone(), points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (SystemConfig, SimOptions) {
        let c = SystemConfig { l: 3, n: 2, k: 2, m: 2, k_prime: 2, tau_p: 4, tau_c: 100, ..SystemConfig::default() };
        let o = SimOptions { n_stat: 80, n_realizations: 20, batches: 4, ..SimOptions::default() };
        (c, o)
    }

    #[test]
    fn sweep_axis_rederives_pilot_length() {
        let (c, _) = small();
        let k = SweepAxis::K.apply(&c, 4.0).unwrap();
        assert_eq!((k.k, k.k_prime, k.tau_p), (4, 4, 8));
        let m = SweepAxis::M.apply(&c, 1.0).unwrap();
        assert_eq!(m.tau_p, 2);
        assert!(SweepAxis::N.apply(&c, 2.5).is_err());
        assert!(SweepAxis::K.apply(&c, 30.0).is_err(), "2τ_p ≥ τ_c must be rejected");
    }

    #[test]
    fn run_point_is_deterministic() {
        let (c, o) = small();
        let a = run_point(&c, Seed(5), &o).unwrap();
        let b = run_point(&c, Seed(5), &o).unwrap();
        assert_eq!(a, b);
        let other = run_point(&c, Seed(6), &o).unwrap();
        assert_ne!(a.realization_digest, other.realization_digest);
    }

    #[test]
    fn outputs_are_finite_and_non_negative() {
        let (c, o) = small();
        let p = run_point(&c, Seed(9), &o).unwrap();
        for kind in BoundKind::ALL {
            let r = p.get(kind);
            assert_eq!(r.per_user_se.len(), 2);
            assert!(r.per_user_se.iter().chain(&r.per_user_stderr).all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn vanishing_downlink_power() {
        let (mut c, o) = small();
        c.rho_d = 1e-12;
        let p = run_point(&c, Seed(1), &o).unwrap();
        for kind in BoundKind::ALL {
            assert!(p.get(kind).sum_se < 1e-6, "{kind:?} {}", p.get(kind).sum_se);
        }
    }

    #[test]
    fn single_value_sweep_matches_run_point() {
        let (c, o) = small();
        let plan = ExperimentPlan { base_config: c.clone(), sweep_axis: SweepAxis::N, sweep_values: vec![2.0], n_setups: 1, master_seed: 3, options: o };
        let res = run_sweep(&plan, |_| {}).unwrap();
        let p = run_point(&c, plan.setup_seed(0), &o).unwrap();
        for kind in BoundKind::ALL {
            let row = res.row(2.0, kind).unwrap();
            assert_eq!(row.sum_se_mean, p.get(kind).sum_se);
            assert_eq!(row.n_setups, 1);
        }
    }

    #[test]
    fn failure_budget() {
        let (c, o) = small();
        let plan = ExperimentPlan { base_config: c, sweep_axis: SweepAxis::N, sweep_values: vec![2.0], n_setups: 10, master_seed: 1, options: o };
        let good = run_point(&plan.base_config, Seed(1), &o).unwrap();
        let mut outs: Vec<Result<PointOutcome>> = (0..10).map(|_| Ok(good.clone())).collect();
        outs[3] = Err(Error::ZeroPrecoder);
        let s = aggregate_point(&plan, 0, outs.clone()).unwrap();
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.rows[0].n_setups, 9);
        outs[4] = Err(Error::ZeroPrecoder);
        assert!(matches!(aggregate_point(&plan, 0, outs), Err(Error::FailureBudgetExceeded { failed: 2, total: 10 })));
    }
}

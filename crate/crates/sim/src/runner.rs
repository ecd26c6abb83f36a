//! Parallel sweep over setups.
//!
//! Every (sweep value, setup) pair is an independent task seeded from the
//! plan alone. Outcomes are collected in setup order before aggregation, so
//! the thread count changes wall-clock time but not a single output bit.

use std::time::{Duration, Instant};

use cellfree_core::harness::{aggregate_point, calibrate, evaluate, prepare_setup, ExperimentPlan, ExperimentResult, PointOutcome, PointSummary};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::SimError;

/// Time spent per stage, summed over tasks.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimes {
    pub setup_s: f64,
    pub calibration_s: f64,
    pub evaluation_s: f64,
}

impl StageTimes {
    fn add(&mut self, other: &StageTimes) {
        self.setup_s += other.setup_s;
        self.calibration_s += other.calibration_s;
        self.evaluation_s += other.evaluation_s;
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub result: ExperimentResult,
    pub timing: StageTimes,
    pub wall: Duration,
    pub threads: usize,
}

fn timed_setup(plan: &ExperimentPlan, value_index: usize, setup: usize) -> (cellfree_core::Result<PointOutcome>, StageTimes) {
    let mut t = StageTimes::default();
    let mut run = || {
        let config = plan.config_for(plan.sweep_values[value_index])?;
        let start = Instant::now();
        let ctx = prepare_setup(&config, plan.setup_seed(setup))?;
        t.setup_s = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let filters = calibrate(&ctx, &plan.options)?;
        t.calibration_s = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let out = evaluate(&ctx, &filters, &plan.options);
        t.evaluation_s = start.elapsed().as_secs_f64();
        out
    };
    let out = run();
    (out, t)
}

/// Runs `plan` on `threads` workers (0 picks the rayon default). `on_point`
/// is called once per sweep value, in sweep order, as soon as it completes.
pub fn run_plan<F: FnMut(&PointSummary)>(plan: &ExperimentPlan, threads: usize, mut on_point: F) -> Result<SweepRun, SimError> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::Config(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let mut timing = StageTimes::default();
    let mut points = Vec::with_capacity(plan.sweep_values.len());
    for vi in 0..plan.sweep_values.len() {
        let runs: Vec<_> = pool.install(|| (0..plan.n_setups).into_par_iter().map(|s| timed_setup(plan, vi, s)).collect());
        let mut outcomes = Vec::with_capacity(runs.len());
        for (out, t) in runs {
            timing.add(&t);
            outcomes.push(out);
        }
        let summary = aggregate_point(plan, vi, outcomes)?;
        on_point(&summary);
        points.push(summary);
    }
    Ok(SweepRun { result: ExperimentResult { plan: plan.clone(), points }, timing, wall: start.elapsed(), threads: pool.current_num_threads() })
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellfree_core::bounds::{hardening_diagnostic, BoundKind};
use cellfree_core::channel::draw_channels;
use cellfree_core::dl_estimation::calibrate_eff_stats;
use cellfree_core::harness::{prepare_setup, PointSummary};
use cellfree_core::rng::Purpose;
use cellfree_core::{Seed, SystemConfig};
use cellfree_sim::config::{ConfigBuilder, Preset, RunConfig};
use cellfree_sim::output;
use cellfree_sim::{run_plan, SimError};
use clap::{Args, Parser, Subcommand};

/// Downlink SE of cell-free massive MIMO with multi-antenna users.
#[derive(Parser)]
#[command(name = "cellfree", version)]
struct Cli {
    /// Suppress progress and summaries on stderr/stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Built-in experiment.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// TOML file applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override, e.g. `--set M=2` or `--set options.n_stat=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, SimError> {
        let mut b = ConfigBuilder::new();
        if let Some(p) = self.preset {
            b = b.preset(p)?;
        }
        if let Some(path) = &self.config {
            b = b.file(path)?;
        }
        for s in &self.set {
            b = b.set(s)?;
        }
        if let Some(seed) = self.seed {
            b = b.seed(seed)?;
        }
        b.build()
    }
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "CELLFREE_OUT_DIR", default_value = "cellfree-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SetupArgs {
    /// Setup index within the plan.
    #[arg(long, default_value_t = 0)]
    setup: usize,
    /// Sweep value to apply; defaults to the first one in the plan.
    #[arg(long)]
    value: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment plan and write results.csv, plot data and manifest.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArg,
        /// Worker threads; 1 gives a strictly sequential run.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Check the configuration and list every violated constraint.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write AP and user positions and large-scale gains of one setup.
    Geometry {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Write one small-scale channel realization of one setup.
    DumpChannel {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long, default_value_t = 0)]
        realization: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the calibration pass of one setup and write the effective-channel statistics.
    Calibrate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Single-user MR channel-hardening table for a list of AP antenna counts.
    Hardening {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64])]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[command(flatten)]
        out: OutArg,
    },
}

fn setup_config(cfg: &RunConfig, args: &SetupArgs) -> Result<SystemConfig, SimError> {
    let plan = cfg.plan();
    let value = args.value.or(plan.sweep_values.first().copied());
    let config = match value {
        Some(v) => plan.config_for(v)?,
        None => plan.base_config.clone(),
    };
    Ok(config)
}

fn print_point(p: &PointSummary, axis: &str) {
    let get = |b| p.rows.iter().find(|r| r.bound == b).expect("bound present");
    let (nc, pc, dp) = (get(BoundKind::NoCsi), get(BoundKind::PerfectCsi), get(BoundKind::DlPilots));
    println!(
        "{axis}={:<8} per-user SE  no_csi {:.3}±{:.3}  perfect_csi {:.3}±{:.3}  dl_pilots {:.3}±{:.3}  | sum {:.2} / {:.2} / {:.2}  setups {} outages {}",
        p.sweep_value,
        nc.per_user_se_mean,
        nc.per_user_se_stderr,
        pc.per_user_se_mean,
        pc.per_user_se_stderr,
        dp.per_user_se_mean,
        dp.per_user_se_stderr,
        nc.sum_se_mean,
        pc.sum_se_mean,
        dp.sum_se_mean,
        nc.n_setups,
        dp.outages
    );
    for f in &p.failures {
        eprintln!("warning: setup {} at {axis}={} failed and was excluded: {}", f.setup, f.sweep_value, f.message);
    }
}

fn create_dir(dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(SimError::io(dir))
}

fn execute(cli: Cli) -> Result<(), SimError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Run { cfg, out, threads } => {
            let config = cfg.load()?;
            let plan = config.plan();
            let axis = plan.sweep_axis.as_str();
            if !quiet {
                eprintln!("run {} -> {}", output::run_id(&config), out.out.display());
            }
            let run = run_plan(&plan, threads, |p| {
                if !quiet {
                    print_point(p, axis)
                }
            })?;
            let files = output::write_run(&out.out, &config, &run)?;
            if !quiet {
                for f in files {
                    eprintln!("wrote {}", f.display());
                }
            }
        }
        Command::Validate { cfg } => {
            let config = cfg.load()?;
            if let Err(v) = config.system_config().validate() {
                for violation in &v.0 {
                    println!("violation: {violation}");
                }
                return Err(SimError::Config(format!("{} violation(s)", v.0.len())));
            }
            config.plan().validate()?;
            println!("ok");
        }
        Command::Geometry { cfg, setup, out } => {
            let config = cfg.load()?;
            let sys = setup_config(&config, &setup)?;
            let ctx = prepare_setup(&sys, config.plan().setup_seed(setup.setup))?;
            create_dir(&out.out)?;
            output::write_geometry_csv(&out.out.join("geometry.csv"), &ctx.geometry)?;
            output::write_large_scale_csv(&out.out.join("large_scale.csv"), &ctx.geometry)?;
            if !quiet {
                eprintln!("wrote geometry.csv and large_scale.csv to {}", out.out.display());
            }
        }
        Command::DumpChannel { cfg, setup, realization, out } => {
            let config = cfg.load()?;
            let sys = setup_config(&config, &setup)?;
            let seed = config.plan().setup_seed(setup.setup);
            let ctx = prepare_setup(&sys, seed)?;
            let ch = draw_channels(&ctx.geometry, &sys, seed.purpose(Purpose::Channel).child(realization as u64));
            create_dir(&out.out)?;
            let path = out.out.join(format!("channel_s{}_r{}.csv", setup.setup, realization));
            output::write_channel_csv(&path, &ch)?;
            if !quiet {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Calibrate { cfg, setup, out } => {
            let config = cfg.load()?;
            let sys = setup_config(&config, &setup)?;
            let seed: Seed = config.plan().setup_seed(setup.setup);
            let ctx = prepare_setup(&sys, seed)?;
            let o = &config.options;
            let stats = calibrate_eff_stats(&sys, &ctx.geometry, &ctx.pilots, o.pipeline(), o.n_stat, o.ridge_scale, seed)?;
            create_dir(&out.out)?;
            let path = out.out.join(format!("eff_stats_s{}.csv", setup.setup));
            output::write_eff_stats_csv(&path, &stats)?;
            if !quiet {
                for (k, s) in stats.iter().enumerate() {
                    let mse = cellfree_core::dl_estimation::LmmseFilter::new(s)?.mse();
                    println!("user {k}: tr C_b {:.4e}  LMMSE mse {:.4e}", s.c_b.trace().re, mse);
                }
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Hardening { cfg, n_list, trials, out } => {
            let config = cfg.load()?;
            let sys = SystemConfig { k: 1, k_prime: 1, tau_p: config.system.m, ..config.system_config() };
            let seed = Seed(config.experiment.seed);
            let ctx = prepare_setup(&sys, seed)?;
            let rows = hardening_diagnostic(&sys, &ctx.geometry, 0, &n_list, trials, seed.purpose(Purpose::Channel));
            create_dir(&out.out)?;
            let path = out.out.join("hardening.csv");
            let mut w = csv::Writer::from_path(&path).map_err(SimError::csv(&path))?;
            w.write_record(["n", "trials", "diag_mean", "diag_var", "diag_var_stderr", "offdiag_var", "offdiag_var_stderr", "var_theory"])
                .map_err(SimError::csv(&path))?;
            for r in &rows {
                let rec = [r.n.to_string(), r.trials.to_string(), r.diag_mean.to_string(), r.diag_var.to_string(), r.diag_var_stderr.to_string(), r.offdiag_var.to_string(), r.offdiag_var_stderr.to_string(), r.var_theory.to_string()];
                w.write_record(rec).map_err(SimError::csv(&path))?;
                if !quiet {
                    println!("N={:<4} diag var {:.5}±{:.5}  offdiag var {:.5}±{:.5}  theory {:.5}", r.n, r.diag_var, r.diag_var_stderr, r.offdiag_var, r.offdiag_var_stderr, r.var_theory);
                }
            }
            w.flush().map_err(SimError::io(&path))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

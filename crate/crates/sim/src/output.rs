//! Output files: results CSV, manifest, plot data and diagnostic dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cellfree_core::bounds::BoundKind;
use cellfree_core::channel::ChannelRealization;
use cellfree_core::dl_estimation::EffChanStats;
use cellfree_core::harness::{ExperimentResult, SetupFailure};
use cellfree_core::{CMatrix, Geometry, SystemConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::SimError;
use crate::runner::{StageTimes, SweepRun};

pub const RESULTS_HEADER: [&str; 10] = [
    "sweep_axis",
    "sweep_value",
    "bound",
    "per_user_se_mean",
    "per_user_se_stderr",
    "sum_se_mean",
    "sum_se_stderr",
    "n_setups",
    "n_realizations",
    "outages",
];

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// First 16 hex digits of SHA-256 over the resolved configuration, seed
/// included. Same inputs, same id.
pub fn run_id(config: &RunConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, SimError> {
    Ok(BufWriter::new(File::create(path).map_err(SimError::io(path))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, SimError> {
    csv::Writer::from_path(path).map_err(SimError::csv(path))
}

pub fn write_results_csv(path: &Path, result: &ExperimentResult) -> Result<(), SimError> {
    let mut w = csv_writer(path)?;
    let err = SimError::csv;
    w.write_record(RESULTS_HEADER).map_err(err(path))?;
    for r in result.rows() {
        w.write_record([
            r.sweep_axis.as_str().to_string(),
            r.sweep_value.to_string(),
            r.bound.as_str().to_string(),
            r.per_user_se_mean.to_string(),
            r.per_user_se_stderr.to_string(),
            r.sum_se_mean.to_string(),
            r.sum_se_stderr.to_string(),
            r.n_setups.to_string(),
            r.n_realizations.to_string(),
            r.outages.to_string(),
        ])
        .map_err(err(path))?;
    }
    w.flush().map_err(SimError::io(path))
}

/// Whitespace-separated columns for gnuplot, one line per sweep value.
pub fn write_plot_data(path: &Path, result: &ExperimentResult, run_id: &str) -> Result<(), SimError> {
    let mut f = create(path)?;
    let axis = result.plan.sweep_axis.as_str();
    let mut header = format!("# run_id={run_id}\n# {axis}");
    for b in BoundKind::ALL {
        header.push_str(&format!(" {0}_mean {0}_stderr {0}_sum_mean {0}_sum_stderr", b.as_str()));
    }
    writeln!(f, "{header}").map_err(SimError::io(path))?;
    for p in &result.points {
        let mut line = p.sweep_value.to_string();
        for b in BoundKind::ALL {
            let r = p.rows.iter().find(|r| r.bound == b).expect("every bound aggregated");
            line.push_str(&format!(" {} {} {} {}", r.per_user_se_mean, r.per_user_se_stderr, r.sum_se_mean, r.sum_se_stderr));
        }
        writeln!(f, "{line}").map_err(SimError::io(path))?;
    }
    f.flush().map_err(SimError::io(path))
}

pub fn write_gnuplot_script(path: &Path, data_file: &str, result: &ExperimentResult, run_id: &str) -> Result<(), SimError> {
    let axis = result.plan.sweep_axis.as_str();
    let (ycol, ylabel) = if axis == "K" { (4, "Sum SE [bit/s/Hz]") } else { (2, "Per-user SE [bit/s/Hz]") };
    let labels = ["No CSI", "Perfect CSI", "DL pilots"];
    let mut plots = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let c = ycol + 4 * i;
        plots.push(format!("'{data_file}' using 1:{c}:{} with yerrorlines title '{label}'", c + 1));
    }
    let script = format!(
        "# run_id={run_id}\nset terminal pngcairo size 800,600\nset output 'se_vs_{axis}.png'\nset xlabel '{axis}'\nset ylabel '{ylabel}'\nset key left top\nset grid\nplot {}\n",
        plots.join(", \\\n     ")
    );
    std::fs::write(path, script).map_err(SimError::io(path))
}

#[derive(Debug, Serialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub scheme: &'static str,
    pub purposes: Vec<(&'static str, u64)>,
}

impl SeedLineage {
    pub fn new(master_seed: u64) -> Self {
        use cellfree_core::rng::Purpose as P;
        let purposes = [
            ("geometry", P::Geometry),
            ("pilots", P::Pilots),
            ("calibration_channel", P::CalibrationChannel),
            ("calibration_uplink_noise", P::CalibrationUplinkNoise),
            ("calibration_downlink_noise", P::CalibrationDownlinkNoise),
            ("channel", P::Channel),
            ("uplink_noise", P::UplinkNoise),
            ("downlink_noise", P::DownlinkNoise),
        ]
        .into_iter()
        .map(|(n, p)| (n, p as u64))
        .collect();
        Self {
            master_seed,
            scheme: "splitmix64 tree: master -> setup index -> purpose tag -> realization index; ChaCha8 stream per leaf",
            purposes,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PointRecord {
    pub sweep_value: f64,
    pub realization_digest: String,
    pub failures: Vec<SetupFailure>,
}

/// Contents of `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub artifact: String,
    pub artifact_version: String,
    pub created_unix_s: u64,
    pub wall_clock_s: f64,
    pub threads: usize,
    pub config: RunConfig,
    pub effective_configs: Vec<SystemConfig>,
    pub seed_lineage: SeedLineage,
    /// Time per stage summed over setups.
    pub timing: StageTimes,
    pub files: Vec<String>,
    pub points: Vec<PointRecord>,
}

impl RunManifest {
    pub fn new(config: &RunConfig, run: &SweepRun, files: Vec<String>) -> Self {
        let plan = &run.result.plan;
        Self {
            run_id: run_id(config),
            artifact: env!("CARGO_PKG_NAME").into(),
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            created_unix_s: std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_clock_s: run.wall.as_secs_f64(),
            threads: run.threads,
            config: config.clone(),
            effective_configs: plan.sweep_values.iter().filter_map(|&v| plan.config_for(v).ok()).collect(),
            seed_lineage: SeedLineage::new(plan.master_seed),
            timing: run.timing,
            files,
            points: run
                .result
                .points
                .iter()
                .map(|p| PointRecord { sweep_value: p.sweep_value, realization_digest: format!("{:016x}", p.realization_digest), failures: p.failures.clone() })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        let mut f = create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f).map_err(SimError::io(path))?;
        f.flush().map_err(SimError::io(path))
    }
}

/// Writes results, plot data, gnuplot script and manifest into `dir`.
/// Returns the paths written.
pub fn write_run(dir: &Path, config: &RunConfig, run: &SweepRun) -> Result<Vec<PathBuf>, SimError> {
    std::fs::create_dir_all(dir).map_err(SimError::io(dir))?;
    let id = run_id(config);
    let axis = run.result.plan.sweep_axis.as_str();
    let dat = format!("se_vs_{axis}.dat");
    let gp = format!("se_vs_{axis}.gp");
    write_results_csv(&dir.join(RESULTS_FILE), &run.result)?;
    write_plot_data(&dir.join(&dat), &run.result, &id)?;
    write_gnuplot_script(&dir.join(&gp), &dat, &run.result, &id)?;
    let files = vec![RESULTS_FILE.to_string(), dat, gp];
    RunManifest::new(config, run, files.clone()).write(&dir.join(MANIFEST_FILE))?;
    Ok(files.iter().map(|f| dir.join(f)).chain([dir.join(MANIFEST_FILE)]).collect())
}

pub fn write_geometry_csv(path: &Path, geometry: &Geometry) -> Result<(), SimError> {
    let mut w = csv_writer(path)?;
    w.write_record(["entity_type", "index", "x_m", "y_m"]).map_err(SimError::csv(path))?;
    let rows = geometry.ap_positions.iter().map(|p| ("ap", p)).enumerate().chain(geometry.user_positions.iter().map(|p| ("user", p)).enumerate());
    for (i, (kind, p)) in rows {
        w.write_record([kind.to_string(), i.to_string(), p.x.to_string(), p.y.to_string()]).map_err(SimError::csv(path))?;
    }
    w.flush().map_err(SimError::io(path))
}

pub fn write_large_scale_csv(path: &Path, geometry: &Geometry) -> Result<(), SimError> {
    let mut w = csv_writer(path)?;
    w.write_record(["ap", "user", "beta", "beta_db"]).map_err(SimError::csv(path))?;
    for l in 0..geometry.num_aps() {
        for k in 0..geometry.num_users() {
            let b = geometry.beta(l, k);
            w.write_record([l.to_string(), k.to_string(), b.to_string(), (10.0 * b.log10()).to_string()]).map_err(SimError::csv(path))?;
        }
    }
    w.flush().map_err(SimError::io(path))
}

pub fn write_channel_csv(path: &Path, channels: &ChannelRealization) -> Result<(), SimError> {
    let mut w = csv_writer(path)?;
    w.write_record(["l", "k", "row", "col", "re", "im"]).map_err(SimError::csv(path))?;
    for k in 0..channels.num_users() {
        for l in 0..channels.l {
            let blk = channels.block(l, k);
            for c in 0..blk.cols() {
                for r in 0..blk.rows() {
                    let z = blk[(r, c)];
                    w.write_record([l.to_string(), k.to_string(), r.to_string(), c.to_string(), z.re.to_string(), z.im.to_string()]).map_err(SimError::csv(path))?;
                }
            }
        }
    }
    w.flush().map_err(SimError::io(path))
}

fn matrix_rows(user: usize, name: &str, a: &CMatrix) -> Vec<[String; 6]> {
    let mut out = Vec::with_capacity(a.rows() * a.cols());
    for c in 0..a.cols() {
        for r in 0..a.rows() {
            let z = a[(r, c)];
            out.push([user.to_string(), name.to_string(), r.to_string(), c.to_string(), z.re.to_string(), z.im.to_string()]);
        }
    }
    out
}

/// Long-term effective-channel statistics, one entry per row. Means are
/// stored as column vectors of `vec(B_kk)` and `vec(Ỹ_k)`.
pub fn write_eff_stats_csv(path: &Path, stats: &[EffChanStats]) -> Result<(), SimError> {
    let mut w = csv_writer(path)?;
    w.write_record(["user", "quantity", "row", "col", "re", "im"]).map_err(SimError::csv(path))?;
    for (k, s) in stats.iter().enumerate() {
        let d = s.dim();
        let mut rows = matrix_rows(k, "mean_b", &CMatrix::from_vec(d, 1, &s.mean_b));
        rows.extend(matrix_rows(k, "mean_y", &CMatrix::from_vec(d, 1, &s.mean_y)));
        rows.extend(matrix_rows(k, "c_b", &s.c_b));
        rows.extend(matrix_rows(k, "c_by", &s.c_by));
        rows.extend(matrix_rows(k, "c_y", &s.c_y));
        rows.push([k.to_string(), "ridge".into(), "0".into(), "0".into(), s.ridge.to_string(), "0".into()]);
        for r in rows {
            w.write_record(r).map_err(SimError::csv(path))?;
        }
    }
    w.flush().map_err(SimError::io(path))
}

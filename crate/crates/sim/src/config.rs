//! Run configuration: TOML files, presets and `--set` overrides.
//!
//! Layers apply in order: built-in defaults, then a preset, then a config
//! file, then overrides. `tau_p` and `k_prime` are derived (`K' = K`,
//! `τ_p = K'·M`) unless some layer after the defaults sets them explicitly.

use std::path::Path;

use cellfree_core::harness::{ExperimentPlan, SimOptions, SweepAxis};
use cellfree_core::{PathLossModel, SystemConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub l: usize,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_p: Option<usize>,
    pub tau_c: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_prime: Option<usize>,
    pub q_ul: f64,
    pub rho_d: f64,
    pub area_side_m: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let d = SystemConfig::default();
        Self { l: d.l, n: d.n, k: d.k, m: d.m, tau_p: None, tau_c: d.tau_c, k_prime: None, q_ul: d.q_ul, rho_d: d.rho_d, area_side_m: d.area_side_m }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub n_setups: usize,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { sweep_axis: SweepAxis::N, sweep_values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], n_setups: 50, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub path_loss: PathLossModel,
    pub experiment: ExperimentSection,
    pub options: SimOptions,
}

impl RunConfig {
    /// The system configuration with derived fields filled in. No validation.
    pub fn system_config(&self) -> SystemConfig {
        let s = &self.system;
        let k_prime = s.k_prime.unwrap_or(s.k);
        SystemConfig {
            l: s.l,
            n: s.n,
            k: s.k,
            m: s.m,
            tau_p: s.tau_p.unwrap_or(k_prime * s.m),
            tau_c: s.tau_c,
            k_prime,
            q_ul: s.q_ul,
            rho_d: s.rho_d,
            area_side_m: s.area_side_m,
            path_loss: self.path_loss,
        }
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            base_config: self.system_config(),
            sweep_axis: self.experiment.sweep_axis,
            sweep_values: self.experiment.sweep_values.clone(),
            n_setups: self.experiment.n_setups,
            master_seed: self.experiment.seed,
            options: self.options,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// L=10, K=5, M=1, N swept.
    Fig1,
    /// L=10, K=5, M=2, N swept.
    Fig2,
    /// L=20, N=4, M=2, K swept over 5, 10, 15.
    Fig3,
}

impl Preset {
    pub fn toml(self) -> &'static str {
        match self {
            Preset::Fig1 => "[system]\nl = 10\nk = 5\nm = 1\n[experiment]\nsweep_axis = \"N\"\nsweep_values = [1, 2, 3, 4, 5, 6, 7, 8]\n",
            Preset::Fig2 => "[system]\nl = 10\nk = 5\nm = 2\n[experiment]\nsweep_axis = \"N\"\nsweep_values = [1, 2, 3, 4, 5, 6, 7, 8]\n",
            Preset::Fig3 => "[system]\nl = 20\nn = 4\nm = 2\n[experiment]\nsweep_axis = \"K\"\nsweep_values = [5, 10, 15]\n",
        }
    }
}

const SECTIONS: [(&str, &[&str]); 4] = [
    ("system", &["l", "n", "k", "m", "tau_p", "tau_c", "k_prime", "q_ul", "rho_d", "area_side_m"]),
    ("experiment", &["sweep_axis", "sweep_values", "n_setups", "seed"]),
    ("options", &["normalization", "weighting", "n_stat", "n_realizations", "ridge_scale", "zf_cond_limit", "batches"]),
    ("path_loss", &["intercept_db", "slope_db", "shadowing_std_db", "height_diff_m", "d_min_m"]),
];

/// Maps `M`, `system.M`, `options.n_stat` and the like to `(section, field)`.
pub fn resolve_key(key: &str) -> Result<(&'static str, &'static str), SimError> {
    let lower = key.trim().to_ascii_lowercase();
    let (section, field) = match lower.split_once('.') {
        Some((s, f)) => (Some(s.to_string()), f.to_string()),
        None => (None, lower.clone()),
    };
    for (name, fields) in SECTIONS {
        if section.as_deref().is_some_and(|s| s != name) {
            continue;
        }
        if let Some(f) = fields.iter().find(|f| **f == field) {
            return Ok((name, f));
        }
    }
    Err(SimError::Config(format!("unknown configuration key `{key}`")))
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Keys are case-insensitive everywhere, so `N = 4` in a file means `n`.
fn fold_keys(t: Table) -> Table {
    t.into_iter()
        .map(|(k, v)| {
            let v = match v {
                Value::Table(inner) => Value::Table(fold_keys(inner)),
                v => v,
            };
            (k.to_ascii_lowercase(), v)
        })
        .collect()
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(dst)), Value::Table(src)) => merge(dst, src),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// Accumulates configuration layers.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    table: Table,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn preset(mut self, preset: Preset) -> Result<Self, SimError> {
        let t: Table = preset.toml().parse().map_err(|e| SimError::Config(format!("preset: {e}")))?;
        merge(&mut self.table, t);
        Ok(self)
    }

    pub fn toml_str(mut self, text: &str, origin: &str) -> Result<Self, SimError> {
        let t: Table = text.parse().map_err(|e| SimError::Config(format!("{origin}: {e}")))?;
        merge(&mut self.table, fold_keys(t));
        Ok(self)
    }

    pub fn file(self, path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        self.toml_str(&text, &path.display().to_string())
    }

    /// Applies one `key=value` override.
    pub fn set(mut self, assignment: &str) -> Result<Self, SimError> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| SimError::Config(format!("override `{assignment}` is not of the form key=value")))?;
        let (section, field) = resolve_key(key)?;
        let entry = self.table.entry(section).or_insert_with(|| Value::Table(Table::new()));
        match entry {
            Value::Table(t) => {
                t.insert(field.to_string(), parse_value(raw));
            }
            _ => return Err(SimError::Config(format!("`{section}` must be a table"))),
        }
        Ok(self)
    }

    pub fn seed(self, seed: u64) -> Result<Self, SimError> {
        self.set(&format!("experiment.seed={seed}"))
    }

    pub fn build(self) -> Result<RunConfig, SimError> {
        RunConfig::deserialize(Value::Table(self.table)).map_err(|e| SimError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_resolution() {
        assert_eq!(resolve_key("M").unwrap(), ("system", "m"));
        assert_eq!(resolve_key("system.K_prime").unwrap(), ("system", "k_prime"));
        assert_eq!(resolve_key("n_stat").unwrap(), ("options", "n_stat"));
        assert_eq!(resolve_key("seed").unwrap(), ("experiment", "seed"));
        assert!(resolve_key("options.m").is_err());
        assert!(resolve_key("bogus").is_err());
    }

    #[test]
    fn fig1_with_two_user_antennas_is_fig2() {
        let a = ConfigBuilder::new().preset(Preset::Fig1).unwrap().set("M=2").unwrap().build().unwrap();
        let b = ConfigBuilder::new().preset(Preset::Fig2).unwrap().build().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.system_config().tau_p, 10);
    }

    #[test]
    fn explicit_pilot_length_survives() {
        let c = ConfigBuilder::new().set("tau_p=7").unwrap().build().unwrap();
        assert_eq!(c.system_config().tau_p, 7);
        assert!(c.system_config().validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ConfigBuilder::new().toml_str("[system]\nfoo = 1\n", "x").unwrap().build().is_err());
        assert!(ConfigBuilder::new().toml_str("[options]\nweighting = \"unit\"\n", "x").unwrap().build().is_ok());
    }
}

//! Subcommand configs: preset defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mixw2::data::CsvSchema;
use mixw2::dynamics::ToggleParams;
use mixw2::snn::Activation;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Rejected configuration: exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Example1,
    Multilabel,
    Abalone,
    Toggle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// All labels packed into one binary-coded category.
    Encoded,
    /// One 0/1 category per label.
    Multidim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub preset: Preset,
    pub seed: u64,
    /// Rows, or trajectories for `toggle`.
    pub n: usize,
    pub sigma: f64,
    pub input_dim: usize,
    pub output_dim: usize,
    pub avg_active: f64,
    pub encoding: Encoding,
    pub dt: f64,
    pub steps: usize,
    pub substeps: usize,
    pub params: ToggleParams,
}

impl GenerateConfig {
    pub fn preset(preset: Preset) -> Self {
        GenerateConfig {
            preset,
            seed: 0,
            n: match preset {
                Preset::Example1 => 1000,
                Preset::Multilabel => 5000,
                Preset::Abalone => 4177,
                Preset::Toggle => 300,
            },
            sigma: 0.4,
            input_dim: 8,
            output_dim: 5,
            avg_active: 2.0,
            encoding: Encoding::Encoded,
            dt: 0.1,
            steps: 10,
            substeps: 10,
            params: ToggleParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub n_traj: usize,
    pub dt: f64,
    pub steps: usize,
    pub substeps: usize,
    pub params: ToggleParams,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            seed: 0,
            n_traj: 300,
            dt: 0.1,
            steps: 10,
            substeps: 10,
            params: ToggleParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: Preset,
    pub seed: u64,
    /// Training CSV (rows, or trajectories for `toggle`).
    pub data: Option<PathBuf>,
    pub schema: Option<CsvSchema>,
    /// Share of rows kept for training; the rest is written as `test.csv`.
    pub train_frac: Option<f64>,
    /// Standardize features with training statistics.
    pub normalize: bool,
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub residual: bool,
    pub delta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub epoch_update: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda: Option<f64>,
    pub c: f64,
    pub init_std: f64,
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let (lr, wd, epochs, n, delta, width) = match preset {
            Preset::Example1 => (0.001, 0.01, 3000, 100, 0.025, 32),
            Preset::Multilabel => (0.01, 1e-4, 2000, 1000, 0.5 * 8f64.sqrt(), 32),
            Preset::Abalone => (0.005, 1e-4, 1000, 300, 0.3 * 7f64.sqrt(), 32),
            Preset::Toggle => (0.01, 0.0, 1000, 300, 0.02, 16),
        };
        TrainConfig {
            preset,
            seed: 0,
            data: None,
            schema: match preset {
                Preset::Example1 => Some(CsvSchema::new(&["x"], &[], &["y"])),
                Preset::Multilabel => Some(CsvSchema::new(
                    &["x0", "x1", "x2", "x3", "x4", "x5", "x6", "x7"],
                    &[],
                    &["label"],
                )),
                Preset::Abalone => Some(CsvSchema::abalone()),
                Preset::Toggle => None,
            },
            train_frac: match preset {
                Preset::Multilabel | Preset::Abalone => Some(0.8),
                _ => None,
            },
            normalize: preset == Preset::Abalone,
            hidden_layers: 5,
            width,
            activation: Activation::Gelu,
            residual: true,
            delta,
            batch_size: n,
            epochs,
            epoch_update: if preset == Preset::Toggle { 1 } else { 50 },
            lr,
            weight_decay: wd,
            lambda: None,
            c: 4.0,
            init_std: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    /// Test CSV; defaults to the run's `test.csv` or, for `toggle`, its training trajectories.
    pub data: Option<PathBuf>,
    /// Output draws per input.
    pub draws: usize,
    pub permutations: usize,
    /// Noise level of the Example 1 field used as ground truth.
    pub sigma: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            data: None,
            draws: 100,
            permutations: 1000,
            sigma: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub seed: u64,
    /// Columns read as categories; every other column is continuous.
    pub categorical: Vec<String>,
    pub lambda: f64,
    pub c: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            seed: 0,
            categorical: Vec::new(),
            lambda: 1.0,
            c: 4.0,
        }
    }
}

pub fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(bad(format!("{}: top level must be an object", path.display())));
    }
    Ok(v)
}

fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// `defaults` with the keys of `file` laid over them; unknown keys are errors.
pub fn merge<C: Serialize + DeserializeOwned>(defaults: &C, file: Option<Value>) -> anyhow::Result<C> {
    let mut v = serde_json::to_value(defaults)?;
    if let Some(f) = file {
        overlay(&mut v, f);
    }
    serde_json::from_value(v).map_err(|e| bad(e.to_string()))
}

/// Preset from the flag, else the config file, else `fallback`.
pub fn resolve_preset(flag: Option<Preset>, file: Option<&Value>, fallback: Option<Preset>) -> anyhow::Result<Preset> {
    if let Some(p) = flag {
        return Ok(p);
    }
    if let Some(v) = file.and_then(|f| f.get("preset")) {
        return serde_json::from_value(v.clone()).map_err(|e| bad(format!("preset: {e}")));
    }
    fallback.ok_or_else(|| bad("no preset given (use --preset or a config key)"))
}

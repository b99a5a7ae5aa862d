//! Experiment specification: defaults, then a JSON config file, then flags.

use std::path::{Path, PathBuf};

use edgebeam::edge_gnn::{Fault, ModelConfig};
use edgebeam::scenario::{ScenarioConfig, DEFAULT_NOISE_DBM, DEFAULT_POWER_DBM};
use edgebeam::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Vary the number of UEs at fixed M.
    #[default]
    Ue,
    /// Vary the number of BSs at fixed K.
    Bs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches_per_epoch: usize,
    pub batch_size: usize,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub clip_norm: Option<f64>,
    pub fixed_dataset: Option<usize>,
    pub layers: usize,
    pub width: usize,
    /// Write a checkpoint every this many epochs (the final one always).
    pub checkpoint_every: Option<usize>,
    pub resume: Option<PathBuf>,
    /// JSON-lines training log; defaults next to the checkpoint.
    pub log: Option<PathBuf>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            minibatches_per_epoch: t.minibatches_per_epoch,
            batch_size: t.batch_size,
            rmsprop_decay: t.rmsprop_decay,
            rmsprop_epsilon: t.rmsprop_epsilon,
            clip_norm: t.clip_norm,
            fixed_dataset: t.fixed_dataset,
            layers: t.model.layers,
            width: t.model.width,
            checkpoint_every: None,
            resume: None,
            log: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    /// Size points; defaults to K in 2..=6 (UE axis) or M in 3..=6 (BS axis).
    pub sizes: Option<Vec<usize>>,
    pub methods: Vec<String>,
    /// Timing repeats per instance; the median is reported.
    pub repeats: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Ue,
            sizes: None,
            methods: vec!["edge_gnn".into(), "wmmse".into()],
            repeats: 5,
        }
    }
}

impl SweepSpec {
    pub fn resolved_sizes(&self) -> Vec<usize> {
        self.sizes.clone().unwrap_or_else(|| match self.axis {
            SweepAxis::Ue => (2..=6).collect(),
            SweepAxis::Bs => (3..=6).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub trials: usize,
    pub fault: Option<Fault>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            trials: 100,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub command: String,
    pub seed: u64,
    /// Worker threads for instance-level parallelism.
    pub jobs: usize,
    pub out: Option<PathBuf>,
    /// Instance file for baseline/evaluate.
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub power_dbm: f64,
    pub noise_dbm: f64,
    /// Instances to generate or evaluate.
    pub count: usize,
    pub solver: String,
    /// Iteration budget; the solver's default when absent.
    pub max_iters: Option<usize>,
    pub tol: f64,
    /// Baselines joined into evaluation reports.
    pub baselines: Vec<String>,
    pub train: TrainSpec,
    pub sweep: SweepSpec,
    pub verify: VerifySpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            jobs: 1,
            out: None,
            input: None,
            checkpoint: None,
            m: 3,
            k: 2,
            n: 2,
            power_dbm: DEFAULT_POWER_DBM,
            noise_dbm: DEFAULT_NOISE_DBM,
            count: 100,
            solver: "wmmse".into(),
            max_iters: None,
            tol: edgebeam::baselines::DEFAULT_TOL,
            baselines: Vec::new(),
            train: TrainSpec::default(),
            sweep: SweepSpec::default(),
            verify: VerifySpec::default(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                merge(b.entry(key).or_insert(Value::Null), value);
            }
        }
        (slot, value) => *slot = value,
    }
}

impl ExperimentSpec {
    /// Defaults overlaid with the config file at `config`, if any.
    pub fn from_config(command: &str, config: Option<&Path>) -> CliResult<Self> {
        let mut base = serde_json::to_value(Self::default())?;
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Argument(format!("config {}: {e}", path.display())))?;
            if !file.is_object() {
                return Err(CliError::Argument(format!(
                    "config {} must be a JSON object",
                    path.display()
                )));
            }
            merge(&mut base, file);
        }
        let mut spec: Self =
            serde_json::from_value(base).map_err(|e| CliError::Argument(format!("invalid config: {e}")))?;
        spec.command = command.to_string();
        Ok(spec)
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            m: self.m,
            k: self.k,
            n: self.n,
            power_dbm: self.power_dbm,
            noise_dbm: self.noise_dbm,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            minibatches_per_epoch: self.train.minibatches_per_epoch,
            batch_size: self.train.batch_size,
            rmsprop_decay: self.train.rmsprop_decay,
            rmsprop_epsilon: self.train.rmsprop_epsilon,
            clip_norm: self.train.clip_norm,
            m_train: self.m,
            k_train: self.k,
            n: self.n,
            power_dbm: self.power_dbm,
            noise_dbm: self.noise_dbm,
            seed: self.seed,
            fixed_dataset: self.train.fixed_dataset,
            model: ModelConfig {
                layers: self.train.layers,
                width: self.train.width,
                antennas: self.n,
                ..ModelConfig::default()
            },
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("spec serializes")
    }

    pub fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

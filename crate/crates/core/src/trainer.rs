//! Unsupervised training: minimize the negative mean sum rate of the
//! network's beamformers with RMSProp, sampling fresh instances for every
//! minibatch.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::SolverReport;
use crate::checkpoint::Checkpoint;
use crate::edge_gnn::{
    forward_batch, init_params, ForwardOptions, InferenceSession, ModelConfig, ModelParams, Topology,
};
use crate::error::{Error, Result};
use crate::numerics::{finite_difference_check, GradCheckReport, Scalar, Tape, Tensor};
use crate::objective::{sum_rate, sum_rate_on_tape};
use crate::scenario::{InstanceSeeds, ProblemInstance, ScenarioConfig, DEFAULT_NOISE_DBM, DEFAULT_POWER_DBM};

/// Instances per tape when computing minibatch gradients.
pub const CHUNK_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches_per_epoch: usize,
    pub batch_size: usize,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub m_train: usize,
    pub k_train: usize,
    pub n: usize,
    pub power_dbm: f64,
    pub noise_dbm: f64,
    pub seed: u64,
    /// Draw minibatches from this many pre-generated instances instead of
    /// fresh samples.
    pub fixed_dataset: Option<usize>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 50,
            minibatches_per_epoch: 20,
            batch_size: 64,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-8,
            clip_norm: Some(10.0),
            m_train: 3,
            k_train: 2,
            n: 2,
            power_dbm: DEFAULT_POWER_DBM,
            noise_dbm: DEFAULT_NOISE_DBM,
            seed: 0,
            fixed_dataset: None,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.minibatches_per_epoch == 0 {
            return Err(Error::Argument(
                "batch size and minibatches per epoch must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) || self.rmsprop_epsilon < 0.0 {
            return Err(Error::Argument(
                "rmsprop decay must lie in [0, 1) and epsilon be >= 0".into(),
            ));
        }
        if self.fixed_dataset == Some(0) {
            return Err(Error::Argument("fixed dataset must hold at least one instance".into()));
        }
        if self.n != self.model.antennas {
            return Err(Error::Argument(format!(
                "training N={} but model expects {} antennas",
                self.n, self.model.antennas
            )));
        }
        self.model.validate()?;
        self.scenario().validate()
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            m: self.m_train,
            k: self.k_train,
            n: self.n,
            power_dbm: self.power_dbm,
            noise_dbm: self.noise_dbm,
        }
    }
}

/// RMSProp mean-square accumulators, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState<T> {
    pub acc: Vec<Tensor<T>>,
}

impl<T: Scalar> OptState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            acc: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.acc.iter().all(|t| t.data().iter().all(|&v| v >= T::zero()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_sum_rate: f64,
    pub loss: f64,
    pub wall_time: f64,
}

/// Loss value, per-instance sum rates and parameter gradients of one batch.
#[derive(Clone, Debug)]
pub struct BatchGradients<T> {
    pub loss: f64,
    pub rates: Vec<f64>,
    pub grads: Vec<Tensor<T>>,
}

fn chunk_gradients<T: Scalar>(
    params: &ModelParams<T>,
    chunk: &[&ProblemInstance],
    weight: f64,
    opts: &ForwardOptions,
) -> Result<(Vec<f64>, Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let topologies: Vec<Topology> = chunk.iter().map(|i| Topology::full(i.m, i.k)).collect();
    let topo_refs: Vec<&Topology> = topologies.iter().collect();
    let outputs = forward_batch(&mut tape, chunk, &topo_refs, &bound, &params.config, opts)?;
    let mut rates = Vec::with_capacity(chunk.len());
    let mut total = None;
    for (inst, v) in chunk.iter().zip(outputs) {
        let r = sum_rate_on_tape(&mut tape, inst, v)?;
        rates.push(tape.value(r).to_f64_vec()[0]);
        total = Some(match total {
            None => r,
            Some(t) => tape.add(t, r)?,
        });
    }
    let total = total.ok_or_else(|| Error::Argument("empty batch".into()))?;
    let loss = tape.scale(total, T::from_f64_lossy(-weight));
    let mut grads = tape.backward(loss)?;
    let grads = bound
        .leaves
        .iter()
        .map(|&leaf| {
            grads
                .take(leaf)
                .unwrap_or_else(|| Tensor::zeros(tape.value(leaf).shape()))
        })
        .collect();
    Ok((rates, grads))
}

/// `-(1/B) sum_b sum_rate(inst_b, forward(inst_b))` and its gradient.
///
/// The batch is split into fixed chunks that may run in parallel; partial
/// gradients are summed in chunk order, so the result does not depend on
/// scheduling.
pub fn batch_loss_and_grads<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[ProblemInstance],
    opts: &ForwardOptions,
) -> Result<BatchGradients<T>> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let refs: Vec<&ProblemInstance> = batch.iter().collect();
    let parts: Vec<(Vec<f64>, Vec<Tensor<T>>)> = refs
        .par_chunks(CHUNK_SIZE)
        .map(|chunk| chunk_gradients(params, chunk, weight, opts))
        .collect::<Result<_>>()?;
    let mut parts = parts.into_iter();
    let (mut rates, mut grads) = parts.next().expect("non-empty batch");
    for (r, g) in parts {
        rates.extend(r);
        for (acc, part) in grads.iter_mut().zip(&g) {
            acc.add_assign(part);
        }
    }
    let loss = -rates.iter().sum::<f64>() * weight;
    Ok(BatchGradients { loss, rates, grads })
}

/// Training loss of a batch (no gradients).
pub fn loss<T: Scalar>(params: &ModelParams<T>, batch: &[ProblemInstance], opts: &ForwardOptions) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let refs: Vec<&ProblemInstance> = batch.iter().collect();
    let mut total = 0.0;
    for chunk in refs.chunks(CHUNK_SIZE) {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let topologies: Vec<Topology> = chunk.iter().map(|i| Topology::full(i.m, i.k)).collect();
        let topo_refs: Vec<&Topology> = topologies.iter().collect();
        let outputs = forward_batch(&mut tape, chunk, &topo_refs, &bound, &params.config, opts)?;
        for (inst, v) in chunk.iter().zip(outputs) {
            let r = sum_rate_on_tape(&mut tape, inst, v)?;
            total += tape.value(r).to_f64_vec()[0];
        }
    }
    Ok(-total * weight)
}

/// Euclidean norm over every gradient tensor.
pub fn global_norm<T: Scalar>(grads: &[Tensor<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| {
            let v = v.to_f64().unwrap_or(f64::NAN);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let factor = T::from_f64_lossy(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * factor);
        }
    }
    norm
}

/// `s <- rho s + (1 - rho) g^2`, `theta <- theta - lr g / (sqrt(s) + eps)`.
pub fn rmsprop_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &[Tensor<T>],
    opt: &mut OptState<T>,
    lr: f64,
    decay: f64,
    epsilon: f64,
) -> Result<()> {
    let tensors = params.tensors_mut();
    if tensors.len() != grads.len() || grads.len() != opt.acc.len() {
        return Err(Error::shape(
            "rmsprop_step",
            format!(
                "{} params, {} grads, {} accumulators",
                tensors.len(),
                grads.len(),
                opt.acc.len()
            ),
        ));
    }
    let (lr, rho, eps) = (
        T::from_f64_lossy(lr),
        T::from_f64_lossy(decay),
        T::from_f64_lossy(epsilon),
    );
    let one = T::one();
    for ((theta, g), s) in tensors.into_iter().zip(grads).zip(&mut opt.acc) {
        if theta.shape() != g.shape() || g.shape() != s.shape() {
            return Err(Error::shape(
                "rmsprop_step",
                format!("{:?} vs {:?}", theta.shape(), g.shape()),
            ));
        }
        for ((t, &g), s) in theta.data_mut().iter_mut().zip(g.data()).zip(s.data_mut()) {
            *s = rho * *s + (one - rho) * g * g;
            *t = *t - lr * g / (s.sqrt() + eps);
        }
    }
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Master seed for the samples of minibatch `batch` in epoch `epoch`
/// (both 0-based).
pub fn minibatch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ epoch as u64) ^ batch as u64)
}

const DATASET_STREAM: u64 = 0x6461_7461;

/// Source of training minibatches.
enum Sampler {
    Fresh,
    Fixed(Vec<ProblemInstance>),
}

impl Sampler {
    fn new(cfg: &TrainConfig) -> Result<Self> {
        Ok(match cfg.fixed_dataset {
            None => Sampler::Fresh,
            Some(n) => Sampler::Fixed(
                InstanceSeeds::derive(splitmix(cfg.seed ^ DATASET_STREAM), n)
                    .iter()
                    .map(|s| s.realize(&cfg.scenario()))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    fn minibatch(&self, cfg: &TrainConfig, epoch: usize, batch: usize) -> Result<Vec<ProblemInstance>> {
        let seed = minibatch_seed(cfg.seed, epoch, batch);
        match self {
            Sampler::Fresh => InstanceSeeds::derive(seed, cfg.batch_size)
                .iter()
                .map(|s| s.realize(&cfg.scenario()))
                .collect(),
            Sampler::Fixed(data) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let take = cfg.batch_size.min(data.len());
                Ok(sample(&mut rng, data.len(), take)
                    .iter()
                    .map(|i| data[i].clone())
                    .collect())
            }
        }
    }
}

/// Called after every epoch with the record, parameters and optimizer state.
pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &ModelParams<f32>, &OptState<f32>) -> Result<()> + Send + 'a;

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Continue from a checkpoint; epochs already completed are skipped.
    pub resume: Option<Checkpoint>,
    /// Where to write the parameters if a non-finite loss aborts training.
    pub diagnostic_path: Option<PathBuf>,
    pub on_epoch: Option<&'a mut EpochHook<'a>>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub opt_state: OptState<f32>,
    pub log: Vec<EpochRecord>,
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(cfg, TrainOptions::default())
}

/// Runs `cfg.epochs` epochs of RMSProp on freshly sampled minibatches.
/// Bit-for-bit deterministic given the config, also across resumption.
pub fn train_with(cfg: &TrainConfig, mut options: TrainOptions<'_>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (mut params, mut opt, start) = match options.resume.take() {
        Some(ck) => {
            if ck.params.config != cfg.model {
                return Err(Error::Argument(format!(
                    "checkpoint model {:?} differs from requested {:?}",
                    ck.params.config, cfg.model
                )));
            }
            let opt = match ck.opt_state {
                Some(acc) => OptState { acc },
                None => OptState::new(&ck.params),
            };
            (ck.params, opt, ck.epoch)
        }
        None => {
            let params: ModelParams<f32> = init_params(&cfg.model, cfg.seed)?;
            let opt = OptState::new(&params);
            (params, opt, 0)
        }
    };
    let sampler = Sampler::new(cfg)?;
    let opts = ForwardOptions::default();
    let mut log = Vec::new();
    for epoch in start..cfg.epochs {
        let started = Instant::now();
        let (mut rate_sum, mut loss_sum, mut samples) = (0.0, 0.0, 0usize);
        for b in 0..cfg.minibatches_per_epoch {
            let batch = sampler.minibatch(cfg, epoch, b)?;
            let mut out = batch_loss_and_grads(&params, &batch, &opts)?;
            let norm = global_norm(&out.grads);
            if !out.loss.is_finite() || !norm.is_finite() {
                if let Some(path) = &options.diagnostic_path {
                    let mut ck = Checkpoint::new(params.clone());
                    ck.epoch = epoch;
                    ck.opt_state = Some(opt.acc.clone());
                    ck.spec = serde_json::to_value(cfg)?;
                    ck.save(path)?;
                }
                return Err(Error::NonFinite(format!(
                    "epoch {} minibatch {}: loss {}, gradient norm {}",
                    epoch + 1,
                    b + 1,
                    out.loss,
                    norm
                )));
            }
            if let Some(max_norm) = cfg.clip_norm {
                clip_global_norm(&mut out.grads, max_norm);
            }
            rmsprop_step(
                &mut params,
                &out.grads,
                &mut opt,
                cfg.learning_rate,
                cfg.rmsprop_decay,
                cfg.rmsprop_epsilon,
            )?;
            rate_sum += out.rates.iter().sum::<f64>();
            loss_sum += out.loss;
            samples += out.rates.len();
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            mean_sum_rate: rate_sum / samples as f64,
            loss: loss_sum / cfg.minibatches_per_epoch as f64,
            wall_time: started.elapsed().as_secs_f64(),
        };
        if let Some(hook) = options.on_epoch.as_mut() {
            hook(&record, &params, &opt)?;
        }
        log.push(record);
    }
    Ok(TrainOutcome {
        params,
        opt_state: opt,
        log,
    })
}

/// Comparison of the network against one baseline over the same instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineDelta {
    pub method: String,
    pub mean_sum_rate: f64,
    pub mean_time_s: f64,
    /// Network mean rate minus baseline mean rate.
    pub mean_delta: f64,
    /// Network mean rate over baseline mean rate.
    pub ratio: f64,
    pub per_instance_delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_instances: usize,
    pub mean_sum_rate: f64,
    /// Population standard deviation.
    pub std_sum_rate: f64,
    pub mean_inference_time_s: f64,
    pub feasibility_violations: usize,
    pub max_power_violation: f64,
    pub sum_rates: Vec<f64>,
    pub baselines: Vec<BaselineDelta>,
}

/// Absolute power slack counted as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Evaluates the network on `instances`. Baseline reports are joined by
/// position (instance id) and must cover every instance.
pub fn evaluate<T: Scalar>(
    params: &ModelParams<T>,
    instances: &[ProblemInstance],
    baselines: &[(String, Vec<SolverReport>)],
) -> Result<EvalReport> {
    let opts = ForwardOptions::default();
    let mut rates = Vec::with_capacity(instances.len());
    let mut time = 0.0;
    let (mut violations, mut worst) = (0, f64::NEG_INFINITY);
    let mut session = InferenceSession::new(params);
    for inst in instances {
        let started = Instant::now();
        let v = session.run(inst, &opts)?;
        time += started.elapsed().as_secs_f64();
        let gap = v.max_power_violation(&inst.bs_power);
        if gap > FEASIBILITY_TOL {
            violations += 1;
        }
        worst = worst.max(gap);
        rates.push(sum_rate(inst, &v)?);
    }
    let (mean, std) = mean_std(&rates);
    let deltas = baselines
        .iter()
        .map(|(name, reports)| {
            if reports.len() != instances.len() {
                return Err(Error::Argument(format!(
                    "{} {name} reports for {} instances",
                    reports.len(),
                    instances.len()
                )));
            }
            let base: Vec<f64> = reports.iter().map(SolverReport::final_rate).collect();
            let (base_mean, _) = mean_std(&base);
            let (base_time, _) = mean_std(&reports.iter().map(|r| r.wall_time).collect::<Vec<_>>());
            Ok(BaselineDelta {
                method: name.clone(),
                mean_sum_rate: base_mean,
                mean_time_s: base_time,
                mean_delta: mean - base_mean,
                ratio: mean / base_mean,
                per_instance_delta: rates.iter().zip(&base).map(|(r, b)| r - b).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        num_instances: instances.len(),
        mean_sum_rate: mean,
        std_sum_rate: std,
        mean_inference_time_s: if instances.is_empty() {
            0.0
        } else {
            time / instances.len() as f64
        },
        feasibility_violations: violations,
        max_power_violation: worst,
        sum_rates: rates,
        baselines: deltas,
    })
}

/// Compares tape gradients of the batch loss with central differences in
/// 64-bit precision over every parameter coordinate.
pub fn loss_gradient_check(
    params: &ModelParams<f64>,
    batch: &[ProblemInstance],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let opts = ForwardOptions::default();
    let analytic: Vec<f64> = batch_loss_and_grads(params, batch, &opts)?
        .grads
        .iter()
        .flat_map(|g| g.data().to_vec())
        .collect();
    let mut probe = params.clone();
    finite_difference_check(
        |flat| {
            probe.assign_flat(flat)?;
            loss(&probe, batch, &opts)
        },
        &params.flatten(),
        &analytic,
        step,
        tolerance,
        None,
    )
}

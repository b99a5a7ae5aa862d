//! Random network layouts, Rayleigh channel draws and instance normalization.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexSplit, Tensor};

pub const AREA_SIDE_M: f64 = 2000.0;
pub const MIN_BS_DISTANCE_M: f64 = 500.0;
pub const DEFAULT_POWER_DBM: f64 = 33.0;
pub const DEFAULT_NOISE_DBM: f64 = -99.0;
pub const DEFAULT_ANTENNAS: usize = 2;
/// Whole-layout redraws allowed before a layout is declared infeasible.
pub const LAYOUT_RETRY_CAP: usize = 10_000;

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Distance-dependent path loss in dB for a link of `d` meters.
pub fn path_loss_db(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Argument(format!("path loss needs a positive distance, got {d}")));
    }
    Ok(30.5 + 36.7 * d.log10())
}

/// Linear power gain `10^(-PL/10)`.
pub fn path_gain(d: f64) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(d)? / 10.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub power_dbm: f64,
    pub noise_dbm: f64,
}

impl ScenarioConfig {
    pub fn new(m: usize, k: usize, n: usize) -> Self {
        Self {
            m,
            k,
            n,
            power_dbm: DEFAULT_POWER_DBM,
            noise_dbm: DEFAULT_NOISE_DBM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return Err(Error::Argument(format!(
                "M, K, N must be >= 1 (got {}, {}, {})",
                self.m, self.k, self.n
            )));
        }
        if !self.power_dbm.is_finite() || !self.noise_dbm.is_finite() {
            return Err(Error::Argument("power and noise levels must be finite".into()));
        }
        Ok(())
    }
}

/// Geometry and budgets of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub bs_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub power_budget_dbm: Vec<f64>,
    pub noise_dbm: Vec<f64>,
    pub num_antennas: usize,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Scenario {
    pub fn m(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn k(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn min_bs_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, &a) in self.bs_positions.iter().enumerate() {
            for &b in &self.bs_positions[i + 1..] {
                best = best.min(distance(a, b));
            }
        }
        best
    }

    pub fn link_distance(&self, m: usize, k: usize) -> f64 {
        distance(self.bs_positions[m], self.ue_positions[k])
    }
}

fn uniform_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.random_range(0.0..=AREA_SIDE_M), rng.random_range(0.0..=AREA_SIDE_M)]
}

/// Draws a layout: UEs uniform on the square, BSs uniform conditioned on the
/// minimum spacing (whole-layout rejection sampling).
pub fn sample_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ue_positions = (0..cfg.k).map(|_| uniform_point(&mut rng)).collect();
    let mut bs_positions = Vec::with_capacity(cfg.m);
    let mut accepted = false;
    for _ in 0..LAYOUT_RETRY_CAP {
        bs_positions.clear();
        bs_positions.extend((0..cfg.m).map(|_| uniform_point(&mut rng)));
        let ok = bs_positions.iter().enumerate().all(|(i, &a)| {
            bs_positions[i + 1..]
                .iter()
                .all(|&b| distance(a, b) >= MIN_BS_DISTANCE_M)
        });
        if ok {
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(Error::InfeasibleLayout {
            attempts: LAYOUT_RETRY_CAP,
            m: cfg.m,
            min_distance: MIN_BS_DISTANCE_M,
        });
    }
    Ok(Scenario {
        bs_positions,
        ue_positions,
        power_budget_dbm: vec![cfg.power_dbm; cfg.m],
        noise_dbm: vec![cfg.noise_dbm; cfg.k],
        num_antennas: cfg.n,
    })
}

/// One optimization instance: channels `E` (M x K x N), per-BS power budgets
/// and per-UE noise powers, all in linear units.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    /// Shape `[m, k, n]`; row `m * k + k` holds `h_{m,k}`.
    pub channels: ComplexSplit<f64>,
    pub bs_power: Vec<f64>,
    pub noise: Vec<f64>,
    /// Product of every channel scaling applied so far.
    pub scale_alpha: f64,
    /// Noise powers differed across UEs, so residual `noise[k] != 1` remain.
    pub heterogeneous_noise: bool,
}

impl ProblemInstance {
    pub fn new(channels: ComplexSplit<f64>, bs_power: Vec<f64>, noise: Vec<f64>) -> Result<Self> {
        let shape = channels.shape().to_vec();
        let [m, k, n] = shape[..] else {
            return Err(Error::shape(
                "instance",
                format!("channels must be rank 3, got {shape:?}"),
            ));
        };
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::Argument(format!("empty instance {shape:?}")));
        }
        if bs_power.len() != m || noise.len() != k {
            return Err(Error::shape(
                "instance",
                format!(
                    "{} budgets / {} noise powers for M={m}, K={k}",
                    bs_power.len(),
                    noise.len()
                ),
            ));
        }
        if bs_power.iter().any(|&p| !(p > 0.0)) || noise.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Argument(
                "power budgets and noise powers must be positive".into(),
            ));
        }
        Ok(Self {
            m,
            k,
            n,
            channels,
            bs_power,
            noise,
            scale_alpha: 1.0,
            heterogeneous_noise: false,
        })
    }

    pub fn edge(&self, m: usize, k: usize) -> usize {
        m * self.k + k
    }

    /// `(re, im)` parts of `h_{m,k}`.
    pub fn channel(&self, m: usize, k: usize) -> (&[f64], &[f64]) {
        let e = self.edge(m, k);
        (self.channels.re.row(e), self.channels.im.row(e))
    }

    pub fn zero_channels(&self) -> bool {
        self.channels.re.max_abs() == 0.0 && self.channels.im.max_abs() == 0.0
    }
}

/// Draws channels for `s` without normalization: `h = sqrt(g) w` with `w`
/// circularly-symmetric complex Gaussian with unit-variance entries.
pub fn draw_raw_channels(s: &Scenario, seed: u64) -> Result<ProblemInstance> {
    let (m, k, n) = (s.m(), s.k(), s.num_antennas);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut re = Vec::with_capacity(m * k * n);
    let mut im = Vec::with_capacity(m * k * n);
    let component_std = 0.5f64.sqrt();
    for bs in 0..m {
        for ue in 0..k {
            let amp = path_gain(s.link_distance(bs, ue).max(1e-3))?.sqrt();
            for _ in 0..n {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                re.push(amp * component_std * a);
                im.push(amp * component_std * b);
            }
        }
    }
    let channels = ComplexSplit::new(Tensor::new(vec![m, k, n], re)?, Tensor::new(vec![m, k, n], im)?)?;
    ProblemInstance::new(
        channels,
        s.power_budget_dbm.iter().map(|&p| dbm_to_watt(p)).collect(),
        s.noise_dbm.iter().map(|&p| dbm_to_watt(p)).collect(),
    )
}

/// Draws channels for `s` and normalizes the instance.
pub fn realize_channels(s: &Scenario, seed: u64) -> Result<ProblemInstance> {
    normalize_instance(draw_raw_channels(s, seed)?)
}

/// Rescales channels so that the noise power becomes 1.
///
/// SINR is unchanged when channels scale by `alpha` and noise by `alpha^2`.
/// With heterogeneous noise the mean noise power sets `alpha` and residual
/// per-UE noise powers are kept.
pub fn normalize_instance(mut raw: ProblemInstance) -> Result<ProblemInstance> {
    if raw.noise.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Argument("noise powers must be positive".into()));
    }
    let first = raw.noise[0];
    let homogeneous = raw.noise.iter().all(|&s| ((s - first) / first).abs() <= 1e-12);
    let reference = if homogeneous {
        first
    } else {
        raw.noise.iter().sum::<f64>() / raw.noise.len() as f64
    };
    let alpha = 1.0 / reference.sqrt();
    if alpha != 1.0 {
        raw.channels.re = raw.channels.re.map(|v| v * alpha);
        raw.channels.im = raw.channels.im.map(|v| v * alpha);
    }
    if homogeneous {
        raw.noise.iter_mut().for_each(|s| *s = 1.0);
    } else {
        raw.noise.iter_mut().for_each(|s| *s *= alpha * alpha);
        raw.heterogeneous_noise = true;
    }
    raw.scale_alpha *= alpha;
    Ok(raw)
}

/// Seeds that reproduce one instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSeeds {
    pub scenario_seed: u64,
    pub channel_seed: u64,
}

impl InstanceSeeds {
    /// Draws `count` seed pairs from a master seed.
    pub fn derive(master: u64, count: usize) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        (0..count)
            .map(|_| Self {
                scenario_seed: rng.random(),
                channel_seed: rng.random(),
            })
            .collect()
    }

    pub fn realize(&self, cfg: &ScenarioConfig) -> Result<ProblemInstance> {
        realize_channels(&sample_scenario(cfg, self.scenario_seed)?, self.channel_seed)
    }
}

/// Serialized form of one instance; arrays in row-major (m, k, antenna) order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<InstanceSeeds>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub scale_alpha: f64,
    pub f_bs: Vec<f64>,
    pub f_ue: Vec<f64>,
    pub e_re: Vec<Vec<Vec<f64>>>,
    pub e_im: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub heterogeneous_noise: bool,
}

fn nest(t: &Tensor<f64>, m: usize, k: usize) -> Vec<Vec<Vec<f64>>> {
    (0..m)
        .map(|i| (0..k).map(|j| t.row(i * k + j).to_vec()).collect())
        .collect()
}

fn flatten(nested: &[Vec<Vec<f64>>], m: usize, k: usize, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(m * k * n);
    if nested.len() != m {
        return Err(Error::shape(
            "instance record",
            format!("{} BS rows for m={m}", nested.len()),
        ));
    }
    for per_bs in nested {
        if per_bs.len() != k {
            return Err(Error::shape(
                "instance record",
                format!("{} UE rows for k={k}", per_bs.len()),
            ));
        }
        for h in per_bs {
            if h.len() != n {
                return Err(Error::shape(
                    "instance record",
                    format!("{} antennas for n={n}", h.len()),
                ));
            }
            out.extend_from_slice(h);
        }
    }
    Ok(out)
}

impl InstanceRecord {
    pub fn from_instance(inst: &ProblemInstance, id: Option<usize>, seeds: Option<InstanceSeeds>) -> Self {
        Self {
            id,
            seeds,
            m: inst.m,
            k: inst.k,
            n: inst.n,
            scale_alpha: inst.scale_alpha,
            f_bs: inst.bs_power.clone(),
            f_ue: inst.noise.clone(),
            e_re: nest(&inst.channels.re, inst.m, inst.k),
            e_im: nest(&inst.channels.im, inst.m, inst.k),
            heterogeneous_noise: inst.heterogeneous_noise,
        }
    }

    pub fn to_instance(&self) -> Result<ProblemInstance> {
        let shape = vec![self.m, self.k, self.n];
        let re = Tensor::new(shape.clone(), flatten(&self.e_re, self.m, self.k, self.n)?)?;
        let im = Tensor::new(shape, flatten(&self.e_im, self.m, self.k, self.n)?)?;
        let mut inst = ProblemInstance::new(ComplexSplit::new(re, im)?, self.f_bs.clone(), self.f_ue.clone())?;
        inst.scale_alpha = self.scale_alpha;
        inst.heterogeneous_noise = self.heterogeneous_noise;
        Ok(inst)
    }
}

/// Instance batch file: the resolved generating spec plus the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceBatch {
    pub spec: serde_json::Value,
    pub instances: Vec<InstanceRecord>,
}

impl InstanceBatch {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn problem_instances(&self) -> Result<Vec<ProblemInstance>> {
        self.instances.iter().map(InstanceRecord::to_instance).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_loss_reference_points() {
        assert!((path_loss_db(1.0).unwrap() - 30.5).abs() < 1e-12);
        assert!((path_loss_db(10.0).unwrap() - 67.2).abs() < 1e-12);
        assert!((path_loss_db(1000.0).unwrap() - 140.6).abs() < 1e-12);
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-5.0).is_err());
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watt(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watt(-99.0) / 10f64.powf(-12.9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_is_deterministic() {
        let cfg = ScenarioConfig::new(4, 3, 2);
        assert_eq!(sample_scenario(&cfg, 9).unwrap(), sample_scenario(&cfg, 9).unwrap());
        assert_ne!(sample_scenario(&cfg, 9).unwrap(), sample_scenario(&cfg, 10).unwrap());
    }

    #[test]
    fn two_bs_respect_spacing() {
        for seed in 0..200 {
            let s = sample_scenario(&ScenarioConfig::new(2, 1, 2), seed).unwrap();
            assert!(s.min_bs_distance() >= MIN_BS_DISTANCE_M);
        }
    }

    #[test]
    fn default_budgets() {
        let s = sample_scenario(&ScenarioConfig::new(5, 2, 2), 1).unwrap();
        assert_eq!(s.power_budget_dbm, vec![33.0; 5]);
        assert_eq!(s.noise_dbm, vec![-99.0; 2]);
        assert_eq!(s.num_antennas, 2);
    }

    #[test]
    fn zero_sizes_are_rejected() {
        assert!(matches!(
            sample_scenario(&ScenarioConfig::new(0, 2, 2), 0),
            Err(Error::Argument(_))
        ));
        assert!(sample_scenario(&ScenarioConfig::new(2, 0, 2), 0).is_err());
    }

    #[test]
    fn crowded_layout_hits_retry_cap() {
        // 40 BSs cannot be spaced 500 m apart in a 2 km square.
        let err = sample_scenario(&ScenarioConfig::new(40, 1, 2), 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InfeasibleLayout {
                attempts: LAYOUT_RETRY_CAP,
                ..
            }
        ));
    }

    #[test]
    fn normalization_sets_unit_noise() {
        let s = sample_scenario(&ScenarioConfig::new(3, 2, 2), 4).unwrap();
        let raw = draw_raw_channels(&s, 5).unwrap();
        let sigma2 = 10f64.powf((-99.0 - 30.0) / 10.0);
        assert!((raw.noise[0] / sigma2 - 1.0).abs() < 1e-12);
        let norm = normalize_instance(raw.clone()).unwrap();
        assert!(norm.noise.iter().all(|&s| s == 1.0));
        assert!((norm.scale_alpha - 1.0 / sigma2.sqrt()).abs() / norm.scale_alpha < 1e-12);
        assert!(!norm.heterogeneous_noise);
        assert_eq!(norm.bs_power, raw.bs_power);
    }

    #[test]
    fn unit_noise_normalizes_to_identity() {
        let s = sample_scenario(&ScenarioConfig::new(2, 2, 2), 4).unwrap();
        let mut raw = draw_raw_channels(&s, 5).unwrap();
        raw.noise = vec![1.0; 2];
        let norm = normalize_instance(raw.clone()).unwrap();
        assert_eq!(norm.channels, raw.channels);
        assert_eq!(norm.scale_alpha, 1.0);
    }

    #[test]
    fn heterogeneous_noise_keeps_residuals() {
        let s = sample_scenario(&ScenarioConfig::new(2, 2, 2), 4).unwrap();
        let mut raw = draw_raw_channels(&s, 5).unwrap();
        raw.noise = vec![1.0, 3.0];
        let norm = normalize_instance(raw).unwrap();
        assert!(norm.heterogeneous_noise);
        assert!((norm.noise[0] - 0.5).abs() < 1e-15);
        assert!((norm.noise[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn record_round_trip() {
        let inst = InstanceSeeds::derive(3, 1)[0]
            .realize(&ScenarioConfig::new(3, 2, 2))
            .unwrap();
        let rec = InstanceRecord::from_instance(&inst, Some(0), None);
        let json = serde_json::to_string(&rec).unwrap();
        let back: InstanceRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_instance().unwrap(), inst);
    }
}

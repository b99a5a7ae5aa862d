//! Invariant suite behind `edgebeam verify`.

use std::time::Instant;

use edgebeam::baselines::wmmse_solve;
use edgebeam::edge_gnn::{
    bs_update, edge_update, infer, init_params, ue_update, update_layer, ForwardOptions, GraphIndex, GraphState,
    ModelConfig, ModelParams, PermutationPair, Permute, Topology,
};
use edgebeam::numerics::{Scalar, Tape, Tensor};
use edgebeam::objective::{sinr_per_ue, sum_rate, BeamformerTensor};
use edgebeam::scenario::{InstanceSeeds, ProblemInstance, ScenarioConfig};
use edgebeam::trainer::loss_gradient_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (error, fraction, count) compared to `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.properties
            .iter()
            .filter(|p| !p.passed)
            .map(|p| p.name.as_str())
            .collect()
    }
}

fn timed(
    name: &str,
    threshold: f64,
    at_most: bool,
    run: impl FnOnce() -> CliResult<(f64, String)>,
) -> CliResult<PropertyResult> {
    let started = Instant::now();
    let (value, detail) = run()?;
    let passed = if at_most {
        value <= threshold
    } else {
        value >= threshold
    };
    Ok(PropertyResult {
        name: name.to_string(),
        passed: passed && value.is_finite(),
        value,
        threshold,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn random_instance(rng: &mut ChaCha8Rng, m: usize, k: usize, n: usize) -> CliResult<ProblemInstance> {
    Ok(InstanceSeeds::derive(rng.random(), 1)[0].realize(&ScenarioConfig::new(m, k, n))?)
}

fn max_abs_diff(a: &BeamformerTensor, b: &BeamformerTensor) -> f64 {
    let diff = |x: &Tensor<f64>, y: &Tensor<f64>| {
        x.data()
            .iter()
            .zip(y.data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };
    diff(&a.v.re, &b.v.re).max(diff(&a.v.im, &b.v.im))
}

fn max_abs(a: &BeamformerTensor) -> f64 {
    a.v.re.max_abs().max(a.v.im.max_abs())
}

/// Largest relative mismatch `|forward(P x) - P forward(x)|_inf / |P forward(x)|_inf`
/// over random instances and permutation pairs.
pub fn equivariance_error<T: Scalar>(
    params: &ModelParams<T>,
    trials: usize,
    (m, k): (usize, usize),
    seed: u64,
    opts: &ForwardOptions,
) -> CliResult<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.config.antennas;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let inst = random_instance(&mut rng, m, k, n)?;
        let p = PermutationPair::random(m, k, &mut rng);
        let expected = infer(params, &inst, opts)?.permute(&p)?;
        let got = infer(params, &inst.permute(&p)?, opts)?;
        let scale = max_abs(&expected).max(f64::MIN_POSITIVE);
        worst = worst.max(max_abs_diff(&got, &expected) / scale);
    }
    Ok(worst)
}

fn random_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64_lossy(rng.random_range(-1.0..1.0)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

struct LayerOutputs<T> {
    f_bs: Tensor<T>,
    f_ue: Tensor<T>,
    e_rep: Tensor<T>,
}

fn run_layer<T: Scalar>(
    params: &ModelParams<T>,
    layer: usize,
    state: (&Tensor<T>, &Tensor<T>, &Tensor<T>),
    topo: &Topology,
    opts: &ForwardOptions,
    reversed: bool,
) -> CliResult<LayerOutputs<T>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let s = GraphState {
        f_bs: tape.leaf(state.0.clone()),
        f_ue: tape.leaf(state.1.clone()),
        e_rep: tape.leaf(state.2.clone()),
    };
    let index = GraphIndex::new(&[topo]);
    let l = &bound.layers[layer];
    let out = if reversed {
        let e_rep = edge_update(&mut tape, &s, &index, l, opts.fault)?;
        let f_ue = ue_update(&mut tape, &s, &index, l)?;
        let f_bs = bs_update(&mut tape, &s, &index, l, opts.fault)?;
        GraphState { f_bs, f_ue, e_rep }
    } else {
        update_layer(&mut tape, &s, &index, l, opts.fault)?
    };
    Ok(LayerOutputs {
        f_bs: tape.value(out.f_bs).clone(),
        f_ue: tape.value(out.f_ue).clone(),
        e_rep: tape.value(out.e_rep).clone(),
    })
}

/// Elementwise mismatches between the per-layer updates on a permuted state
/// and the permuted updates, over random states; `(bs, ue, edge)` counts.
pub fn per_layer_mismatches<T: Scalar>(
    params: &ModelParams<T>,
    trials: usize,
    seed: u64,
    opts: &ForwardOptions,
) -> CliResult<(usize, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = params.config.width;
    let mut counts = (0, 0, 0);
    let count = |a: &Tensor<T>, b: &Tensor<T>| a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count();
    for _ in 0..trials {
        let (m, k) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let layer = rng.random_range(0..params.config.layers);
        let f_bs = random_tensor::<T>(&mut rng, &[m, d]);
        let f_ue = random_tensor::<T>(&mut rng, &[k, d]);
        let e_rep = random_tensor::<T>(&mut rng, &[m * k, d]);
        let p = PermutationPair::random(m, k, &mut rng);
        let topo = Topology::full(m, k);
        let plain = run_layer(params, layer, (&f_bs, &f_ue, &e_rep), &topo, opts, false)?;
        let permuted_state = (
            p.permute_bs_rows(&f_bs)?,
            p.permute_ue_rows(&f_ue)?,
            p.permute_edge_rows(&e_rep)?,
        );
        let permuted = run_layer(
            params,
            layer,
            (&permuted_state.0, &permuted_state.1, &permuted_state.2),
            &topo,
            opts,
            false,
        )?;
        counts.0 += count(&permuted.f_bs, &p.permute_bs_rows(&plain.f_bs)?);
        counts.1 += count(&permuted.f_ue, &p.permute_ue_rows(&plain.f_ue)?);
        counts.2 += count(&permuted.e_rep, &p.permute_edge_rows(&plain.e_rep)?);
    }
    Ok(counts)
}

/// Elementwise differences between the two execution orders of one layer.
pub fn update_order_mismatches<T: Scalar>(params: &ModelParams<T>, trials: usize, seed: u64) -> CliResult<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = params.config.width;
    let opts = ForwardOptions::default();
    let mut total = 0;
    for _ in 0..trials {
        let (m, k) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let state = (
            random_tensor::<T>(&mut rng, &[m, d]),
            random_tensor::<T>(&mut rng, &[k, d]),
            random_tensor::<T>(&mut rng, &[m * k, d]),
        );
        let topo = Topology::full(m, k);
        let a = run_layer(params, 0, (&state.0, &state.1, &state.2), &topo, &opts, false)?;
        let b = run_layer(params, 0, (&state.0, &state.1, &state.2), &topo, &opts, true)?;
        total += [(&a.f_bs, &b.f_bs), (&a.f_ue, &b.f_ue), (&a.e_rep, &b.e_rep)]
            .iter()
            .map(|(x, y)| x.data().iter().zip(y.data()).filter(|(p, q)| p != q).count())
            .sum::<usize>();
    }
    Ok(total)
}

/// Gradient check of the batch loss on a width-8 model at `(2, 2, 2)`.
pub fn gradient_fraction(seed: u64) -> CliResult<(f64, f64, usize, usize)> {
    let cfg = ModelConfig {
        width: 8,
        ..ModelConfig::default()
    };
    let params: ModelParams<f64> = init_params(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6164);
    let batch = vec![random_instance(&mut rng, 2, 2, 2)?, random_instance(&mut rng, 2, 2, 2)?];
    let report = loss_gradient_check(&params, &batch, 1e-5, 1e-3)?;
    Ok((
        report.fraction_within(),
        report.max_rel_error(),
        report.excluded_count(),
        report.coords.len(),
    ))
}

/// Largest per-BS power excess of network outputs at several sizes.
pub fn feasibility_excess<T: Scalar>(params: &ModelParams<T>, seed: u64, opts: &ForwardOptions) -> CliResult<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.config.antennas;
    let mut worst = f64::NEG_INFINITY;
    for (m, k) in [(1, 1), (2, 5), (3, 2), (4, 3), (5, 2), (8, 8)] {
        for _ in 0..5 {
            let inst = random_instance(&mut rng, m, k, n)?;
            let mut v = infer(params, &inst, opts)?;
            worst = worst.max(v.max_power_violation(&inst.bs_power));
            let mut zero = inst.clone();
            zero.channels = edgebeam::numerics::ComplexSplit::zeros(&[m, k, n]);
            v = infer(params, &zero, opts)?;
            if !(v.v.re.all_finite() && v.v.im.all_finite()) {
                return Ok(f64::INFINITY);
            }
            worst = worst.max(v.max_power_violation(&inst.bs_power));
        }
    }
    Ok(worst)
}

/// Worst WMMSE trace decrease and power excess over random `(3, 2)` instances.
pub fn wmmse_monotonicity(count: usize, seed: u64) -> CliResult<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut decrease, mut excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..count {
        let inst = random_instance(&mut rng, 3, 2, 2)?;
        let report = wmmse_solve(&inst, 100, edgebeam::baselines::DEFAULT_TOL)?;
        decrease = decrease.max(report.max_trace_decrease());
        excess = excess.max(report.v_final.max_power_violation(&inst.bs_power));
    }
    Ok((decrease, excess))
}

/// Worst relative SINR change under joint `(E, sigma^2)` rescaling and
/// worst relative sum-rate change under relabeling.
pub fn invariance_errors(trials: usize, seed: u64) -> CliResult<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut scale_err, mut perm_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..trials {
        let (m, k) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let inst = random_instance(&mut rng, m, k, 2)?;
        let v = edgebeam::baselines::matched_filter_init(&inst);
        let base = sinr_per_ue(&inst, &v)?;
        let c: f64 = 10f64.powf(rng.random_range(-3.0..3.0));
        let mut scaled = inst.clone();
        scaled.channels.re = scaled.channels.re.map(|x| x * c);
        scaled.channels.im = scaled.channels.im.map(|x| x * c);
        scaled.noise.iter_mut().for_each(|s| *s *= c * c);
        for (a, b) in base.iter().zip(sinr_per_ue(&scaled, &v)?) {
            scale_err = scale_err.max((a - b).abs() / a.abs().max(1e-300));
        }
        let p = PermutationPair::random(m, k, &mut rng);
        let r0 = sum_rate(&inst, &v)?;
        let r1 = sum_rate(&inst.permute(&p)?, &v.permute(&p)?)?;
        perm_err = perm_err.max((r0 - r1).abs() / r0.abs().max(1.0));
    }
    Ok((scale_err, perm_err))
}

/// Runs every property against `params` (32-bit) and its 64-bit copy.
pub fn run_suite(
    params: &ModelParams<f32>,
    trials: usize,
    seed: u64,
    opts: &ForwardOptions,
) -> CliResult<VerifyReport> {
    let p64: ModelParams<f64> = params.cast();
    let mut props = Vec::new();
    props.push(timed("equivariance_f32", 1e-5, true, || {
        let e = equivariance_error(params, trials, (4, 3), seed, opts)?;
        Ok((e, format!("{trials} trials at (M,K)=(4,3), max relative error {e:.3e}")))
    })?);
    props.push(timed("equivariance_f64", 1e-10, true, || {
        let e = equivariance_error(&p64, trials, (4, 3), seed, opts)?;
        Ok((e, format!("{trials} trials at (M,K)=(4,3), max relative error {e:.3e}")))
    })?);
    props.push(timed("per_layer_equivariance", 0.0, true, || {
        let (b, u, e) = per_layer_mismatches(params, trials, seed ^ 1, opts)?;
        Ok((
            (b + u + e) as f64,
            format!("mismatched entries: bs {b}, ue {u}, edge {e}"),
        ))
    })?);
    props.push(timed("update_order_independence", 0.0, true, || {
        let n = update_order_mismatches(params, trials.min(20), seed ^ 2)?;
        Ok((n as f64, format!("{n} entries differ between execution orders")))
    })?);
    props.push(timed("gradient_check", 0.95, false, || {
        let (frac, max_rel, excluded, total) = gradient_fraction(seed)?;
        Ok((
            frac,
            format!("{total} coordinates, {excluded} kink-adjacent excluded, max relative error {max_rel:.3e}"),
        ))
    })?);
    props.push(timed("output_feasibility", 1e-6, true, || {
        let w = feasibility_excess(params, seed ^ 3, opts)?;
        Ok((w, format!("largest power excess {w:.3e} W")))
    })?);
    props.push(timed("size_transfer", 0.0, true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let mut failures = 0;
        for (m, k) in [(1, 1), (5, 2), (2, 8), (8, 8)] {
            let inst = random_instance(&mut rng, m, k, params.config.antennas)?;
            if infer(params, &inst, opts)
                .map(|v| v.dims() != (m, k, inst.n))
                .unwrap_or(true)
            {
                failures += 1;
            }
        }
        Ok((failures as f64, format!("{failures} of 4 sizes failed")))
    })?);
    props.push(timed("wmmse_monotonicity", 1e-9, true, || {
        let (dec, excess) = wmmse_monotonicity(trials.min(100), seed ^ 5)?;
        let value = if excess > 1e-6 { f64::INFINITY } else { dec.max(0.0) };
        Ok((
            value,
            format!("max trace decrease {dec:.3e}, max power excess {excess:.3e}"),
        ))
    })?);
    props.push(timed("scale_and_label_invariance", 1e-9, true, || {
        let (s, p) = invariance_errors(trials, seed ^ 6)?;
        Ok((
            s.max(p),
            format!("SINR rescaling error {s:.3e}, relabeled sum-rate error {p:.3e}"),
        ))
    })?);
    Ok(VerifyReport { properties: props })
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgebeam::edge_gnn::Fault;

    fn small() -> ModelParams<f32> {
        init_params(
            &ModelConfig {
                width: 16,
                ..ModelConfig::default()
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn swapped_edge_branches_stay_equivariant() {
        let opts = ForwardOptions {
            fault: Some(Fault::SwapEdgeBranches),
            ..ForwardOptions::default()
        };
        assert!(equivariance_error(&small(), 10, (4, 3), 0, &opts).unwrap() <= 1e-5);
        assert_eq!(per_layer_mismatches(&small(), 10, 0, &opts).unwrap(), (0, 0, 0));
    }

    #[test]
    fn ue_indexed_mlp1_breaks_equivariance() {
        let opts = ForwardOptions {
            fault: Some(Fault::UeIndexedMlp1),
            ..ForwardOptions::default()
        };
        assert!(equivariance_error(&small(), 10, (4, 3), 0, &opts).unwrap() > 1e-3);
        let (b, _, _) = per_layer_mismatches(&small(), 10, 0, &opts).unwrap();
        assert!(b > 0);
    }
}

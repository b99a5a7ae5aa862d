//! Size sweeps: per size point, a fixed-seed test set evaluated by the
//! network and the requested baselines.

use std::time::Instant;

use edgebeam::baselines::Solver;
use edgebeam::edge_gnn::{ForwardOptions, InferenceSession, ModelParams};
use edgebeam::objective::sum_rate;
use edgebeam::scenario::{InstanceSeeds, ProblemInstance, ScenarioConfig};
use edgebeam::trainer::mean_std;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::spec::{ExperimentSpec, SweepAxis};

pub const GNN_METHOD: &str = "edge_gnn";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub method: String,
    pub mean_rate: f64,
    pub std_rate: f64,
    /// Mean over instances of the median wall time of `repeats` runs.
    pub mean_time_s: f64,
    /// Median over instances of the same per-instance medians.
    #[serde(skip)]
    pub median_time_s: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Runs `f` `repeats` times (at least once); returns the first result and the
/// median wall time.
pub fn time_median<R>(repeats: usize, mut f: impl FnMut() -> CliResult<R>) -> CliResult<(R, f64)> {
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut first = None;
    for _ in 0..repeats.max(1) {
        let started = Instant::now();
        let r = f()?;
        times.push(started.elapsed().as_secs_f64());
        first.get_or_insert(r);
    }
    Ok((first.expect("at least one run"), median(times)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the test set at one size point.
pub fn point_seed(seed: u64, axis: SweepAxis, size: usize) -> u64 {
    let tag = match axis {
        SweepAxis::Ue => 0x7565,
        SweepAxis::Bs => 0x6273,
    };
    splitmix(splitmix(seed ^ tag) ^ size as u64)
}

pub fn test_set(cfg: &ScenarioConfig, count: usize, seed: u64) -> CliResult<Vec<ProblemInstance>> {
    InstanceSeeds::derive(seed, count)
        .iter()
        .map(|s| s.realize(cfg).map_err(CliError::from))
        .collect()
}

/// Evaluates every method on `instances`; timings are single-threaded.
pub fn evaluate_methods(
    params: &ModelParams<f32>,
    instances: &[ProblemInstance],
    methods: &[String],
    max_iters: Option<usize>,
    tol: f64,
    repeats: usize,
    size: usize,
) -> CliResult<Vec<SweepRow>> {
    let opts = ForwardOptions::default();
    let mut session = InferenceSession::new(params);
    methods
        .iter()
        .map(|method| {
            let mut rates = Vec::with_capacity(instances.len());
            let mut times = Vec::with_capacity(instances.len());
            for inst in instances {
                let (rate, t) = if method == GNN_METHOD {
                    time_median(repeats, || Ok(session.run(inst, &opts)?))
                        .and_then(|(v, t)| Ok((sum_rate(inst, &v)?, t)))?
                } else {
                    let solver: Solver = method.parse()?;
                    let iters = max_iters.unwrap_or(solver.default_iters());
                    let (report, t) = time_median(repeats, || Ok(solver.solve(inst, iters, tol)?))?;
                    (report.final_rate(), t)
                };
                rates.push(rate);
                times.push(t);
            }
            let (mean_rate, std_rate) = mean_std(&rates);
            let (mean_time_s, _) = mean_std(&times);
            Ok(SweepRow {
                size,
                method: method.clone(),
                mean_rate,
                std_rate,
                mean_time_s,
                median_time_s: median(times),
            })
        })
        .collect()
}

/// Full sweep along `spec.sweep.axis`; the other dimension stays at
/// `spec.m` / `spec.k`.
pub fn run_sweep(params: &ModelParams<f32>, spec: &ExperimentSpec) -> CliResult<Vec<SweepRow>> {
    if params.config.antennas != spec.n {
        return Err(CliError::Argument(format!(
            "checkpoint expects N={} antennas, sweep requests N={}",
            params.config.antennas, spec.n
        )));
    }
    for method in &spec.sweep.methods {
        if method != GNN_METHOD {
            method.parse::<Solver>()?;
        }
    }
    let mut rows = Vec::new();
    for size in spec.sweep.resolved_sizes() {
        let mut cfg = spec.scenario();
        match spec.sweep.axis {
            SweepAxis::Ue => cfg.k = size,
            SweepAxis::Bs => cfg.m = size,
        }
        let instances = test_set(&cfg, spec.count, point_seed(spec.seed, spec.sweep.axis, size))?;
        rows.extend(evaluate_methods(
            params,
            &instances,
            &spec.sweep.methods,
            spec.max_iters,
            spec.tol,
            spec.sweep.repeats,
            size,
        )?);
    }
    Ok(rows)
}

/// CSV with a leading `# spec: <json>` provenance line.
pub fn write_csv(path: &std::path::Path, spec: &ExperimentSpec, rows: &[SweepRow]) -> CliResult<()> {
    let mut out = format!("# spec: {}\n", serde_json::to_string(&spec.to_json())?).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["size", "method", "mean_rate", "std_rate", "mean_time_s"])?;
        for r in rows {
            w.write_record([
                r.size.to_string(),
                r.method.clone(),
                format!("{:.6}", r.mean_rate),
                format!("{:.6}", r.std_rate),
                format!("{:.6e}", r.mean_time_s),
            ])?;
        }
        w.flush()?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn point_seeds_differ_by_size_and_axis() {
        assert_ne!(point_seed(0, SweepAxis::Ue, 2), point_seed(0, SweepAxis::Ue, 3));
        assert_ne!(point_seed(0, SweepAxis::Ue, 3), point_seed(0, SweepAxis::Bs, 3));
    }
}

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use edgebeam::baselines::{Solver, SolverReport};
use edgebeam::checkpoint::Checkpoint;
use edgebeam::edge_gnn::{init_params, ForwardOptions, ModelConfig, ModelParams};
use edgebeam::scenario::{InstanceBatch, InstanceRecord, InstanceSeeds, ProblemInstance};
use edgebeam::trainer::{evaluate, train_with, EpochRecord, EvalReport, OptState, TrainOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::spec::ExperimentSpec;
use crate::sweep::{run_sweep, write_csv, SweepRow};
use crate::verify::{run_suite, VerifyReport};

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Runs `f` on a pool of `jobs` threads.
fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Argument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn generate(spec: &ExperimentSpec) -> CliResult<PathBuf> {
    let cfg = spec.scenario();
    cfg.validate()?;
    if spec.count == 0 {
        return Err(CliError::Argument("count must be >= 1".into()));
    }
    let seeds = InstanceSeeds::derive(spec.seed, spec.count);
    let instances = seeds
        .iter()
        .enumerate()
        .map(|(id, s)| Ok(InstanceRecord::from_instance(&s.realize(&cfg)?, Some(id), Some(*s))))
        .collect::<CliResult<Vec<_>>>()?;
    let out = spec.out_or("instances.json");
    InstanceBatch {
        spec: spec.to_json(),
        instances,
    }
    .write(&out)?;
    Ok(out)
}

pub fn load_params(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(path).map_err(|e| match e {
        edgebeam::Error::Io(io) => CliError::Io(io),
        other => CliError::Argument(format!("checkpoint {}: {other}", path.display())),
    })
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub records: Vec<EpochRecord>,
}

pub fn log_path(spec: &ExperimentSpec, checkpoint: &Path) -> PathBuf {
    spec.train
        .log
        .clone()
        .unwrap_or_else(|| checkpoint.with_extension("log.jsonl"))
}

pub fn train(spec: &ExperimentSpec) -> CliResult<TrainSummary> {
    let cfg = spec.train_config();
    cfg.validate()?;
    let out = spec.out_or("model.json");
    let log = log_path(spec, &out);
    let resume = spec.train.resume.as_deref().map(load_params).transpose()?;
    if let Some(dir) = log.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = if resume.is_some() {
        OpenOptions::new().create(true).append(true).open(&log)?
    } else {
        File::create(&log)?
    };
    let mut writer = BufWriter::new(file);
    let spec_json = spec.to_json();
    let every = spec.train.checkpoint_every.filter(|&e| e > 0);
    let save = |params: &ModelParams<f32>, opt: &OptState<f32>, epoch: usize| -> edgebeam::Result<()> {
        let ck = Checkpoint {
            params: params.clone(),
            epoch,
            spec: spec_json.clone(),
            opt_state: Some(opt.acc.clone()),
        };
        ck.save(&out)
    };
    let mut hook = |record: &EpochRecord, params: &ModelParams<f32>, opt: &OptState<f32>| -> edgebeam::Result<()> {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if every.is_some_and(|e| record.epoch.is_multiple_of(e)) {
            save(params, opt, record.epoch)?;
        }
        Ok(())
    };
    let outcome = with_jobs(spec.jobs, || {
        train_with(
            &cfg,
            TrainOptions {
                resume,
                diagnostic_path: Some(out.with_extension("diag.json")),
                on_epoch: Some(&mut hook),
            },
        )
    })??;
    save(&outcome.params, &outcome.opt_state, cfg.epochs)?;
    Ok(TrainSummary {
        checkpoint: out,
        log,
        records: outcome.log,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub id: usize,
    pub final_rate: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time: Option<f64>,
    pub converged: Option<bool>,
    pub max_trace_decrease: Option<f64>,
    pub max_power_violation: Option<f64>,
    pub objective_trace: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub solver: String,
    pub instances: usize,
    pub mean_rate: f64,
    pub mean_wall_time: f64,
    pub failures: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineFile {
    pub spec: Value,
    pub summary: BaselineSummary,
    pub records: Vec<BaselineRecord>,
}

fn load_instances(spec: &ExperimentSpec) -> CliResult<Vec<ProblemInstance>> {
    match &spec.input {
        Some(path) => Ok(InstanceBatch::read(path)
            .map_err(|e| match e {
                edgebeam::Error::Io(io) => CliError::Io(io),
                other => CliError::Argument(format!("instances {}: {other}", path.display())),
            })?
            .problem_instances()?),
        None => {
            let cfg = spec.scenario();
            cfg.validate()?;
            InstanceSeeds::derive(spec.seed, spec.count)
                .iter()
                .map(|s| Ok(s.realize(&cfg)?))
                .collect()
        }
    }
}

pub fn solve_all(
    solver: Solver,
    instances: &[ProblemInstance],
    max_iters: Option<usize>,
    tol: f64,
    jobs: usize,
) -> CliResult<Vec<edgebeam::Result<SolverReport>>> {
    let iters = max_iters.unwrap_or(solver.default_iters());
    with_jobs(jobs, || {
        instances.par_iter().map(|i| solver.solve(i, iters, tol)).collect()
    })
}

pub fn baseline(spec: &ExperimentSpec) -> CliResult<(PathBuf, BaselineSummary)> {
    let solver: Solver = spec.solver.parse()?;
    let instances = load_instances(spec)?;
    let results = solve_all(solver, &instances, spec.max_iters, spec.tol, spec.jobs)?;
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (id, (inst, res)) in instances.iter().zip(results).enumerate() {
        records.push(match res {
            Ok(r) => BaselineRecord {
                id,
                final_rate: Some(r.final_rate()),
                iterations: Some(r.iterations),
                wall_time: Some(r.wall_time),
                converged: Some(r.converged),
                max_trace_decrease: Some(r.max_trace_decrease()),
                max_power_violation: Some(r.v_final.max_power_violation(&inst.bs_power)),
                objective_trace: r.objective_trace,
                error: None,
            },
            Err(e) => {
                failures.push(id);
                BaselineRecord {
                    id,
                    final_rate: None,
                    iterations: None,
                    wall_time: None,
                    converged: None,
                    max_trace_decrease: None,
                    max_power_violation: None,
                    objective_trace: Vec::new(),
                    error: Some(e.to_string()),
                }
            }
        });
    }
    let ok: Vec<&BaselineRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let mean = |f: fn(&BaselineRecord) -> f64| {
        if ok.is_empty() {
            0.0
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    let summary = BaselineSummary {
        solver: solver.name().to_string(),
        instances: instances.len(),
        mean_rate: mean(|r| r.final_rate.unwrap_or(0.0)),
        mean_wall_time: mean(|r| r.wall_time.unwrap_or(0.0)),
        failures,
    };
    let out = spec.out_or("baseline.json");
    write_json(
        &out,
        &BaselineFile {
            spec: spec.to_json(),
            summary: summary.clone(),
            records,
        },
    )?;
    Ok((out, summary))
}

fn model_params(spec: &ExperimentSpec) -> CliResult<ModelParams<f32>> {
    match &spec.checkpoint {
        Some(path) => Ok(load_params(path)?.params),
        None => Ok(init_params(
            &ModelConfig {
                layers: spec.train.layers,
                width: spec.train.width,
                antennas: spec.n,
                ..ModelConfig::default()
            },
            spec.seed,
        )?),
    }
}

pub fn sweep(spec: &ExperimentSpec) -> CliResult<(PathBuf, Vec<SweepRow>)> {
    let path = spec
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Argument("sweep needs --checkpoint".into()))?;
    let params = load_params(path)?.params;
    let rows = with_jobs(1, || run_sweep(&params, spec))??;
    let out = spec.out_or("sweep.csv");
    write_csv(&out, spec, &rows)?;
    Ok((out, rows))
}

pub fn verify(spec: &ExperimentSpec) -> CliResult<VerifyReport> {
    let params = model_params(spec)?;
    let opts = ForwardOptions {
        fault: spec.verify.fault,
        ..ForwardOptions::default()
    };
    let report = run_suite(&params, spec.verify.trials.max(1), spec.seed, &opts)?;
    if let Some(out) = &spec.out {
        write_json(out, &json!({ "spec": spec.to_json(), "report": report }))?;
    }
    Ok(report)
}

pub fn evaluate_cmd(spec: &ExperimentSpec) -> CliResult<(PathBuf, EvalReport)> {
    let path = spec
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Argument("evaluate needs --checkpoint".into()))?;
    let params = load_params(path)?.params;
    let instances = load_instances(spec)?;
    let mut baselines = Vec::new();
    for name in &spec.baselines {
        let solver: Solver = name.parse()?;
        let reports = solve_all(solver, &instances, spec.max_iters, spec.tol, spec.jobs)?
            .into_iter()
            .collect::<edgebeam::Result<Vec<_>>>()?;
        baselines.push((solver.name().to_string(), reports));
    }
    let report = with_jobs(1, || evaluate(&params, &instances, &baselines))??;
    let out = spec.out_or("eval.json");
    write_json(&out, &json!({ "spec": spec.to_json(), "report": report }))?;
    Ok((out, report))
}

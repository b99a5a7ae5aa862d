use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edgebeam::edge_gnn::Fault;

use crate::commands;
use crate::error::{CliError, CliResult};
use crate::spec::{ExperimentSpec, SweepAxis};

#[derive(Parser, Debug)]
#[command(
    name = "edgebeam",
    version,
    about = "Cooperative beamforming experiments: data, training, baselines, sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for instance-level parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct SizeArgs {
    /// Number of BSs.
    #[arg(long)]
    m: Option<usize>,
    /// Number of UEs.
    #[arg(long)]
    k: Option<usize>,
    /// Antennas per BS.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    power_dbm: Option<f64>,
    #[arg(long)]
    noise_dbm: Option<f64>,
    /// Number of instances.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct SolverArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// Updating layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Representation width.
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    SwapEdgeBranches,
    UeIndexedMlp1,
}

impl From<FaultArg> for Fault {
    fn from(f: FaultArg) -> Self {
        match f {
            FaultArg::SwapEdgeBranches => Fault::SwapEdgeBranches,
            FaultArg::UeIndexedMlp1 => Fault::UeIndexedMlp1,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a file of random problem instances.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        size: SizeArgs,
    },
    /// Train the network and write a checkpoint plus a JSON-lines log.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        minibatches: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        rmsprop_decay: Option<f64>,
        #[arg(long)]
        rmsprop_epsilon: Option<f64>,
        #[arg(long)]
        clip_norm: Option<f64>,
        /// Disable gradient clipping.
        #[arg(long, conflicts_with = "clip_norm")]
        no_clip: bool,
        /// Sample minibatches from this many fixed instances.
        #[arg(long)]
        fixed_dataset: Option<usize>,
        /// Checkpoint every E epochs.
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Training log path (default: next to the checkpoint).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run a classical solver on every instance.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        solver_args: SolverArgs,
        /// Instance file (otherwise instances are generated from the seed).
        #[arg(long)]
        input: Option<PathBuf>,
        /// wmmse or gp.
        #[arg(long)]
        solver: Option<String>,
    },
    /// Evaluate a checkpoint and baselines over a range of UE or BS counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        solver_args: SolverArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: Option<SweepAxis>,
        /// Comma-separated size points.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Comma-separated methods: edge_gnn, wmmse, gp.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Timing repeats per instance (median reported).
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Run the invariant suite; exit 1 if any property fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Antennas per BS when no checkpoint is given.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Inject a defect into the model.
        #[arg(long, value_enum)]
        fault: Option<FaultArg>,
    },
    /// Evaluate a checkpoint on an instance file, optionally against baselines.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        solver_args: SolverArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Comma-separated baselines to compare against.
        #[arg(long, value_delimiter = ',')]
        baselines: Option<Vec<String>>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Common {
    fn resolve(&self, command: &str) -> CliResult<ExperimentSpec> {
        let mut spec = ExperimentSpec::from_config(command, self.config.as_deref())?;
        set(&mut spec.seed, self.seed);
        set(&mut spec.jobs, self.jobs);
        if self.out.is_some() {
            spec.out = self.out.clone();
        }
        Ok(spec)
    }
}

impl SizeArgs {
    fn apply(&self, spec: &mut ExperimentSpec) {
        set(&mut spec.m, self.m);
        set(&mut spec.k, self.k);
        set(&mut spec.n, self.n);
        set(&mut spec.power_dbm, self.power_dbm);
        set(&mut spec.noise_dbm, self.noise_dbm);
        set(&mut spec.count, self.count);
    }
}

impl SolverArgs {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if self.max_iters.is_some() {
            spec.max_iters = self.max_iters;
        }
        set(&mut spec.tol, self.tol);
    }
}

impl ModelArgs {
    fn apply(&self, spec: &mut ExperimentSpec) {
        set(&mut spec.train.layers, self.layers);
        set(&mut spec.train.width, self.width);
    }
}

fn resolve(command: Command) -> CliResult<ExperimentSpec> {
    Ok(match command {
        Command::Generate { common, size } => {
            let mut spec = common.resolve("generate")?;
            size.apply(&mut spec);
            spec
        }
        Command::Train {
            common,
            size,
            model,
            epochs,
            minibatches,
            batch_size,
            lr,
            rmsprop_decay,
            rmsprop_epsilon,
            clip_norm,
            no_clip,
            fixed_dataset,
            checkpoint_every,
            resume,
            log,
        } => {
            let mut spec = common.resolve("train")?;
            size.apply(&mut spec);
            model.apply(&mut spec);
            let t = &mut spec.train;
            set(&mut t.epochs, epochs);
            set(&mut t.minibatches_per_epoch, minibatches);
            set(&mut t.batch_size, batch_size);
            set(&mut t.learning_rate, lr);
            set(&mut t.rmsprop_decay, rmsprop_decay);
            set(&mut t.rmsprop_epsilon, rmsprop_epsilon);
            if clip_norm.is_some() {
                t.clip_norm = clip_norm;
            }
            if no_clip {
                t.clip_norm = None;
            }
            if fixed_dataset.is_some() {
                t.fixed_dataset = fixed_dataset;
            }
            if checkpoint_every.is_some() {
                t.checkpoint_every = checkpoint_every;
            }
            if resume.is_some() {
                t.resume = resume;
            }
            if log.is_some() {
                t.log = log;
            }
            spec
        }
        Command::Baseline {
            common,
            size,
            solver_args,
            input,
            solver,
        } => {
            let mut spec = common.resolve("baseline")?;
            size.apply(&mut spec);
            solver_args.apply(&mut spec);
            if input.is_some() {
                spec.input = input;
            }
            set(&mut spec.solver, solver);
            spec
        }
        Command::Sweep {
            common,
            size,
            solver_args,
            checkpoint,
            axis,
            sizes,
            methods,
            repeats,
        } => {
            let mut spec = common.resolve("sweep")?;
            size.apply(&mut spec);
            solver_args.apply(&mut spec);
            if checkpoint.is_some() {
                spec.checkpoint = checkpoint;
            }
            set(&mut spec.sweep.axis, axis);
            if sizes.is_some() {
                spec.sweep.sizes = sizes;
            }
            set(&mut spec.sweep.methods, methods);
            set(&mut spec.sweep.repeats, repeats);
            spec
        }
        Command::Verify {
            common,
            model,
            n,
            checkpoint,
            trials,
            fault,
        } => {
            let mut spec = common.resolve("verify")?;
            model.apply(&mut spec);
            set(&mut spec.n, n);
            if checkpoint.is_some() {
                spec.checkpoint = checkpoint;
            }
            set(&mut spec.verify.trials, trials);
            if let Some(f) = fault {
                spec.verify.fault = Some(f.into());
            }
            spec
        }
        Command::Evaluate {
            common,
            size,
            solver_args,
            checkpoint,
            input,
            baselines,
        } => {
            let mut spec = common.resolve("evaluate")?;
            size.apply(&mut spec);
            solver_args.apply(&mut spec);
            if checkpoint.is_some() {
                spec.checkpoint = checkpoint;
            }
            if input.is_some() {
                spec.input = input;
            }
            set(&mut spec.baselines, baselines);
            spec
        }
    })
}

fn execute(spec: &ExperimentSpec) -> CliResult<()> {
    match spec.command.as_str() {
        "generate" => {
            let out = commands::generate(spec)?;
            println!("wrote {} instances to {}", spec.count, out.display());
        }
        "train" => {
            let summary = commands::train(spec)?;
            if let Some(last) = summary.records.last() {
                println!(
                    "epoch {}: mean sum rate {:.4} bits/s/Hz",
                    last.epoch, last.mean_sum_rate
                );
            }
            println!("checkpoint {}", summary.checkpoint.display());
            println!("log {}", summary.log.display());
        }
        "baseline" => {
            let (out, summary) = commands::baseline(spec)?;
            println!(
                "{}: {} instances, mean rate {:.4}, mean time {:.3e} s, {} failed",
                summary.solver,
                summary.instances,
                summary.mean_rate,
                summary.mean_wall_time,
                summary.failures.len()
            );
            if !summary.failures.is_empty() {
                println!("failed instances: {:?}", summary.failures);
            }
            println!("wrote {}", out.display());
        }
        "sweep" => {
            let (out, rows) = commands::sweep(spec)?;
            for r in &rows {
                println!(
                    "{:>3} {:<9} rate {:.4} +- {:.4}  time {:.3e} s",
                    r.size, r.method, r.mean_rate, r.std_rate, r.mean_time_s
                );
            }
            println!("wrote {}", out.display());
        }
        "verify" => {
            let report = commands::verify(spec)?;
            for p in &report.properties {
                println!(
                    "{} {:<28} value {:.3e} threshold {:.1e}  {} ({:.2} s)",
                    if p.passed { "PASS" } else { "FAIL" },
                    p.name,
                    p.value,
                    p.threshold,
                    p.detail,
                    p.seconds
                );
            }
            if !report.all_passed() {
                return Err(CliError::Property(report.failures().join(", ")));
            }
        }
        "evaluate" => {
            let (out, report) = commands::evaluate_cmd(spec)?;
            println!(
                "{} instances: mean rate {:.4} +- {:.4}, {} infeasible",
                report.num_instances, report.mean_sum_rate, report.std_sum_rate, report.feasibility_violations
            );
            for b in &report.baselines {
                println!("vs {}: ratio {:.3}, delta {:+.4}", b.method, b.ratio, b.mean_delta);
            }
            println!("wrote {}", out.display());
        }
        other => return Err(CliError::Argument(format!("unknown command {other}"))),
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match resolve(cli.command).and_then(|spec| execute(&spec)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.into()
        }
    }
}

//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails. Runs without the test harness so the
//! lines are never captured.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use edgebeam::baselines::{single_user_optimum, Solver, DEFAULT_TOL};
use edgebeam::checkpoint::Checkpoint;
use edgebeam::edge_gnn::{init_params, ForwardOptions, ModelConfig, ModelParams};
use edgebeam::scenario::{InstanceSeeds, ScenarioConfig};
use edgebeam_cli::sweep::{evaluate_methods, test_set, SweepRow};
use edgebeam_cli::verify::{equivariance_error, gradient_fraction, invariance_errors, per_layer_mismatches};
use serde_json::Value;

/// Learning rate of the desk-scale training run; see README.
const DESK_LR: &str = "5e-4";
const TEST_SEED: u64 = 0x07e5_75e7;

struct Outcome {
    passed: bool,
    line: String,
}

fn record(results: &mut Vec<Outcome>, id: usize, name: &str, passed: bool, detail: String) {
    let line = format!("{} {id} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    println!("{line}");
    results.push(Outcome { passed, line });
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edgebeam"))
}

fn run(cmd: &mut Command) {
    let out = cmd.output().expect("spawn edgebeam");
    assert!(
        out.status.success(),
        "edgebeam failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Training log with the wall-clock field removed from every line.
fn log_payload(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_time");
            v
        })
        .collect()
}

/// Sweep CSV without the timing column.
fn sweep_payload(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            if l.starts_with('#') {
                l.to_string()
            } else {
                l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap()
            }
        })
        .collect()
}

fn row<'a>(rows: &'a [SweepRow], method: &str) -> &'a SweepRow {
    rows.iter().find(|r| r.method == method).unwrap()
}

fn train_payload(dir: &Path) -> (Vec<u8>, Vec<u8>, Vec<Value>) {
    (
        std::fs::read(dir.join("model.json")).unwrap(),
        std::fs::read(dir.join("model.bin")).unwrap(),
        log_payload(&dir.join("model.log.jsonl")),
    )
}

fn main() {
    let mut results = Vec::new();
    let opts = ForwardOptions::default();
    let random: ModelParams<f32> = init_params(&ModelConfig::default(), 11).unwrap();

    let started = Instant::now();
    let e32 = equivariance_error(&random, 100, (4, 3), 1, &opts).unwrap();
    let e64 = equivariance_error(&random.cast::<f64>(), 100, (4, 3), 1, &opts).unwrap();
    let secs = started.elapsed().as_secs_f64();
    record(
        &mut results,
        1,
        "equivariance",
        e32 <= 1e-5 && e64 <= 1e-10 && secs < 30.0,
        format!("100 trials at (4,3,2): f32 {e32:.2e} (<= 1e-5), f64 {e64:.2e} (<= 1e-10), {secs:.1} s (< 30 s)"),
    );

    let started = Instant::now();
    let (b, u, e) = per_layer_mismatches(&random, 100, 2, &opts).unwrap();
    let secs = started.elapsed().as_secs_f64();
    record(
        &mut results,
        2,
        "per_layer_exactness",
        b + u + e == 0 && secs < 10.0,
        format!("100 states: mismatched entries bs {b} ue {u} edge {e}, {secs:.1} s (< 10 s)"),
    );

    let started = Instant::now();
    let (frac, max_rel, excluded, total) = gradient_fraction(3).unwrap();
    let secs = started.elapsed().as_secs_f64();
    record(
        &mut results,
        3,
        "gradient_check",
        frac >= 0.95 && secs < 120.0,
        format!(
            "{:.4} of {total} coordinates within 1e-3 (>= 0.95), {excluded} excluded, max rel {max_rel:.2e}, {secs:.1} s",
            frac
        ),
    );

    {
        let single = ScenarioConfig::new(1, 1, 2);
        let (mut gap_gp, mut gap_wmmse, mut excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
        for s in InstanceSeeds::derive(TEST_SEED, 50) {
            let inst = s.realize(&single).unwrap();
            let opt = single_user_optimum(&inst).unwrap();
            for (solver, gap) in [(Solver::Gp, &mut gap_gp), (Solver::Wmmse, &mut gap_wmmse)] {
                let r = solver.solve(&inst, solver.default_iters(), DEFAULT_TOL).unwrap();
                *gap = gap.max((r.final_rate() - opt).abs());
                excess = excess.max(r.v_final.max_power_violation(&inst.bs_power));
            }
        }
        let (mut decrease, mut wm_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for inst in test_set(&ScenarioConfig::new(3, 2, 2), 100, TEST_SEED ^ 1).unwrap() {
            let r = Solver::Wmmse.solve(&inst, 100, DEFAULT_TOL).unwrap();
            decrease = decrease.max(r.max_trace_decrease());
            wm_excess = wm_excess.max(r.v_final.max_power_violation(&inst.bs_power));
        }
        let excess = excess.max(wm_excess);
        record(
            &mut results,
            4,
            "baseline_sanity",
            gap_gp <= 1e-3 && gap_wmmse <= 1e-3 && decrease <= 1e-9 && excess <= 1e-6,
            format!(
                "single-user gap gp {gap_gp:.2e} wmmse {gap_wmmse:.2e} (<= 1e-3); \
                 wmmse trace decrease {decrease:.2e} (<= 1e-9); power excess {excess:.2e} (<= 1e-6)"
            ),
        );
    }

    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let train = || {
        let started = Instant::now();
        run(bin()
            .args(["train", "--seed", "0", "--m", "3", "--k", "2", "--n", "2"])
            .args([
                "--epochs",
                "50",
                "--minibatches",
                "20",
                "--batch-size",
                "64",
                "--lr",
                DESK_LR,
            ])
            .arg("--out")
            .arg(&model));
        started.elapsed().as_secs_f64()
    };
    let train_secs = train();
    let first_train = train_payload(dir.path());

    let params = Checkpoint::load(&model).unwrap().params;
    let methods = vec!["edge_gnn".to_string(), "wmmse".to_string()];
    let base = test_set(&ScenarioConfig::new(3, 2, 2), 100, TEST_SEED ^ 2).unwrap();
    let rows = evaluate_methods(&params, &base, &methods, Some(100), DEFAULT_TOL, 5, 2).unwrap();
    let (gnn, wmmse) = (row(&rows, "edge_gnn"), row(&rows, "wmmse"));
    let ratio = gnn.mean_rate / wmmse.mean_rate;
    record(
        &mut results,
        5,
        "training_proxy",
        ratio >= 0.85 && train_secs < 1800.0,
        format!(
            "(3,2,2) edge_gnn {:.4} vs wmmse {:.4}: ratio {ratio:.3} (>= 0.85), training {train_secs:.0} s",
            gnn.mean_rate, wmmse.mean_rate
        ),
    );

    {
        let mut detail = Vec::new();
        let mut passed = true;
        for (m, k, label) in [(3, 4, "K=4"), (5, 2, "M=5")] {
            let insts = test_set(&ScenarioConfig::new(m, k, 2), 100, TEST_SEED ^ (m * 10 + k) as u64).unwrap();
            match evaluate_methods(&params, &insts, &methods, Some(100), DEFAULT_TOL, 1, k) {
                Ok(rows) => {
                    let r = row(&rows, "edge_gnn").mean_rate / row(&rows, "wmmse").mean_rate;
                    passed &= r >= 0.75;
                    detail.push(format!("{label} ratio {r:.3}"));
                }
                Err(e) => {
                    passed = false;
                    detail.push(format!("{label} error {e}"));
                }
            }
        }
        record(
            &mut results,
            6,
            "generalization",
            passed,
            format!("{} (>= 0.75)", detail.join(", ")),
        );
    }

    let speedup = wmmse.median_time_s / gnn.median_time_s;
    record(
        &mut results,
        7,
        "timing",
        speedup >= 10.0,
        format!(
            "median per-instance edge_gnn {:.2e} s, wmmse {:.2e} s: {speedup:.1}x (>= 10x)",
            gnn.median_time_s, wmmse.median_time_s
        ),
    );

    {
        let csv = dir.path().join("sweep.csv");
        let sweep = || {
            run(bin()
                .args([
                    "sweep", "--seed", "4", "--axis", "ue", "--sizes", "2,3", "--count", "20",
                ])
                .args(["--methods", "edge_gnn,wmmse", "--repeats", "1", "--checkpoint"])
                .arg(&model)
                .arg("--out")
                .arg(&csv));
            sweep_payload(&csv)
        };
        let first_sweep = sweep();
        let second_sweep = sweep();
        train();
        let same_train = first_train == train_payload(dir.path());
        record(
            &mut results,
            8,
            "determinism",
            same_train && first_sweep == second_sweep,
            format!(
                "train rerun identical: {same_train}; sweep rerun identical: {} (timing fields excluded)",
                first_sweep == second_sweep
            ),
        );
    }

    let (scale, perm) = invariance_errors(100, 9).unwrap();
    record(
        &mut results,
        9,
        "scale_invariance",
        scale <= 1e-9 && perm <= 1e-9,
        format!("SINR rescaling {scale:.2e}, relabeled sum rate {perm:.2e} (<= 1e-9)"),
    );

    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.line.as_str()).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        eprintln!("acceptance: {} criteria failed:\n{}", failed.len(), failed.join("\n"));
        std::process::exit(1);
    }
}

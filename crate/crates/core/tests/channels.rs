use edgebeam::baselines::matched_filter_init;
use edgebeam::objective::sum_rate;
use edgebeam::scenario::{draw_raw_channels, normalize_instance, path_gain, sample_scenario, Scenario, ScenarioConfig};

const DRAWS: u64 = 10_000;

fn link_power(inst: &edgebeam::scenario::ProblemInstance, m: usize, k: usize) -> f64 {
    let (re, im) = inst.channel(m, k);
    re.iter().chain(im).map(|x| x * x).sum()
}

#[test]
fn mean_channel_power_matches_path_gain() {
    let s = sample_scenario(&ScenarioConfig::new(2, 3, 2), 17).unwrap();
    let mut totals = [0.0; 6];
    for seed in 0..DRAWS {
        let inst = draw_raw_channels(&s, seed).unwrap();
        for m in 0..2 {
            for k in 0..3 {
                totals[m * 3 + k] += link_power(&inst, m, k);
            }
        }
    }
    for m in 0..2 {
        for k in 0..3 {
            let expected = 2.0 * path_gain(s.link_distance(m, k)).unwrap();
            let mean = totals[m * 3 + k] / DRAWS as f64;
            assert!(
                (mean / expected - 1.0).abs() < 0.05,
                "link ({m},{k}): {mean:e} vs {expected:e}"
            );
        }
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn equidistant_users_have_equal_norm_distributions() {
    let s = Scenario {
        bs_positions: vec![[250.0, 250.0]],
        ue_positions: vec![[250.0, 400.0], [100.0, 250.0]],
        power_budget_dbm: vec![30.0],
        noise_dbm: vec![-99.0, -99.0],
        num_antennas: 2,
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for seed in 0..DRAWS {
        let inst = draw_raw_channels(&s, seed).unwrap();
        a.push(link_power(&inst, 0, 0).sqrt());
        b.push(link_power(&inst, 0, 1).sqrt());
    }
    // Critical value of the two-sample test at the 1% level.
    let critical = 1.628 * (2.0 / DRAWS as f64).sqrt();
    let d = ks_statistic(a, b);
    assert!(d < critical, "KS statistic {d} >= {critical}");
}

#[test]
fn normalization_preserves_sum_rate() {
    for seed in 0..20 {
        let s = sample_scenario(&ScenarioConfig::new(3, 3, 2), seed).unwrap();
        let raw = draw_raw_channels(&s, seed + 1000).unwrap();
        let norm = normalize_instance(raw.clone()).unwrap();
        let v = matched_filter_init(&raw);
        let (a, b) = (sum_rate(&raw, &v).unwrap(), sum_rate(&norm, &v).unwrap());
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "seed {seed}: {a} vs {b}");
    }
}

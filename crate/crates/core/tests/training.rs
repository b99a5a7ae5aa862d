use edgebeam::trainer::{train, TrainConfig};

#[test]
fn desk_training_improves_sum_rate() {
    let outcome = train(&TrainConfig::default()).unwrap();
    let first = outcome.log[0].mean_sum_rate;
    let best = outcome
        .log
        .iter()
        .map(|r| r.mean_sum_rate)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("epoch 1 mean sum rate {first:.4}, best {best:.4}");
    assert_eq!(outcome.log.len(), 50);
    assert!(best >= 1.2 * first, "best epoch {best} vs first {first}");
}

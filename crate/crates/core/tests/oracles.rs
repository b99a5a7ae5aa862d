use edgebeam::baselines::{gp_solve, wmmse_solve, DEFAULT_TOL};
use edgebeam::edge_gnn::{init_params, preprocess, ModelConfig, ModelParams, PermutationPair, Permute};
use edgebeam::numerics::{complex_inner, ComplexSplit, ComplexVar, Tape, Tensor};
use edgebeam::objective::{sum_rate, BeamformerTensor};
use edgebeam::scenario::{InstanceSeeds, ProblemInstance, ScenarioConfig};
use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Complex<f64>;

fn random_split(rng: &mut ChaCha8Rng, shape: &[usize]) -> ComplexSplit<f64> {
    let len: usize = shape.iter().product();
    let mut draw = || Tensor::new(shape.to_vec(), (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let re = draw();
    let im = draw();
    ComplexSplit::new(re, im).unwrap()
}

fn to_complex(x: &ComplexSplit<f64>) -> Vec<C> {
    x.re.data()
        .iter()
        .zip(x.im.data())
        .map(|(&a, &b)| C::new(a, b))
        .collect()
}

fn instance(m: usize, k: usize, seed: u64) -> ProblemInstance {
    InstanceSeeds::derive(seed, 1)[0]
        .realize(&ScenarioConfig::new(m, k, 2))
        .unwrap()
}

#[test]
fn complex_inner_matches_complex_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (h, v) = (random_split(&mut rng, &[4]), random_split(&mut rng, &[4]));
        let mut tape = Tape::new();
        let (hv, vv) = (ComplexVar::leaf(&mut tape, &h), ComplexVar::leaf(&mut tape, &v));
        let got = complex_inner(&mut tape, hv, vv).unwrap().value(&tape);
        let want: C = to_complex(&h)
            .iter()
            .zip(to_complex(&v))
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert!((got.re.data()[0] - want.re).abs() < 1e-12);
        assert!((got.im.data()[0] - want.im).abs() < 1e-12);
    }
}

/// Sum rate by explicit loops over complex numbers.
fn naive_sum_rate(inst: &ProblemInstance, v: &ComplexSplit<f64>) -> f64 {
    let h = to_complex(&inst.channels);
    let v = to_complex(v);
    let n = inst.n;
    let at = |x: &[C], m: usize, k: usize, j: usize| x[(m * inst.k + k) * n + j];
    let gain = |k: usize, l: usize| -> f64 {
        let mut g = C::new(0.0, 0.0);
        for m in 0..inst.m {
            for j in 0..n {
                g += at(&h, m, k, j).conj() * at(&v, m, l, j);
            }
        }
        g.norm_sqr()
    };
    let mut total = 0.0;
    for k in 0..inst.k {
        let interference: f64 = (0..inst.k).filter(|&l| l != k).map(|l| gain(k, l)).sum();
        total += (1.0 + gain(k, k) / (interference + inst.noise[k])).log2();
    }
    total
}

#[test]
fn sum_rate_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (m, k) in [(1, 1), (2, 3), (3, 2), (4, 4)] {
        let inst = instance(m, k, (m * 10 + k) as u64);
        for _ in 0..10 {
            let v = random_split(&mut rng, &[m, k, 2]);
            let got = sum_rate(&inst, &BeamformerTensor::new(v.clone()).unwrap()).unwrap();
            assert!((got - naive_sum_rate(&inst, &v)).abs() < 1e-12 * got.max(1.0));
        }
    }
}

#[test]
fn wmmse_is_competitive_with_gp() {
    let mut close = 0;
    for seed in 0..100 {
        let inst = instance(3, 2, seed);
        let w = wmmse_solve(&inst, 100, DEFAULT_TOL).unwrap().final_rate();
        let g = gp_solve(&inst, 500, DEFAULT_TOL).unwrap().final_rate();
        if w >= g - 0.05 {
            close += 1;
        }
    }
    assert!(close >= 80, "WMMSE within 0.05 bits of GP on only {close} of 100 seeds");
}

#[test]
fn initial_representations_follow_permutations() {
    let params: ModelParams<f64> = init_params(
        &ModelConfig {
            width: 8,
            ..ModelConfig::default()
        },
        4,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let inst = instance(3, 4, seed);
        let p = PermutationPair::random(3, 4, &mut rng);
        let run = |inst: &ProblemInstance| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let s = preprocess(&mut tape, &[inst], &bound).unwrap();
            (
                tape.value(s.f_bs).clone(),
                tape.value(s.f_ue).clone(),
                tape.value(s.e_rep).clone(),
            )
        };
        let (b, u, e) = run(&inst);
        let (pb, pu, pe) = run(&inst.permute(&p).unwrap());
        assert_eq!(pb, p.permute_bs_rows(&b).unwrap());
        assert_eq!(pu, p.permute_ue_rows(&u).unwrap());
        assert_eq!(pe, p.permute_edge_rows(&e).unwrap());
    }
}

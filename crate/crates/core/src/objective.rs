//! SINR, sum rate and per-BS power accounting.
//!
//! Every quantity exists twice: a plain `f64` evaluator used by the
//! baselines and reports, and a tape version used for differentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{complex_inner, ComplexSplit, ComplexVar, Scalar, Tape, Tensor, Var};
use crate::scenario::ProblemInstance;

/// Slack below which a block already counts as inside its power ball.
/// Keeps projection idempotent in floating point.
const PROJECTION_SLACK: f64 = 1e-12;

/// Beamformers `v_{m,k}`, shape `[m, k, n]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamformerTensor {
    pub v: ComplexSplit<f64>,
}

impl BeamformerTensor {
    pub fn new(v: ComplexSplit<f64>) -> Result<Self> {
        if v.shape().len() != 3 {
            return Err(Error::shape("beamformer", format!("need rank 3, got {:?}", v.shape())));
        }
        Ok(Self { v })
    }

    pub fn zeros(m: usize, k: usize, n: usize) -> Self {
        Self {
            v: ComplexSplit::zeros(&[m, k, n]),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.v.shape();
        (s[0], s[1], s[2])
    }

    pub fn block(&self, m: usize, k: usize) -> (&[f64], &[f64]) {
        let row = m * self.dims().1 + k;
        (self.v.re.row(row), self.v.im.row(row))
    }

    pub fn block_mut(&mut self, m: usize, k: usize) -> (&mut [f64], &mut [f64]) {
        let row = m * self.dims().1 + k;
        (self.v.re.row_mut(row), self.v.im.row_mut(row))
    }

    fn check(&self, inst: &ProblemInstance) -> Result<()> {
        if self.dims() != (inst.m, inst.k, inst.n) {
            return Err(Error::shape(
                "beamformer",
                format!("{:?} vs instance ({}, {}, {})", self.dims(), inst.m, inst.k, inst.n),
            ));
        }
        Ok(())
    }

    /// Largest `bs_power[m] - budget[m]` (negative when strictly inside).
    pub fn max_power_violation(&self, budgets: &[f64]) -> f64 {
        bs_power(self)
            .iter()
            .zip(budgets)
            .map(|(p, b)| p - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self, budgets: &[f64], tol: f64) -> bool {
        self.max_power_violation(budgets) <= tol
    }
}

/// How network outputs are brought onto the power constraint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Scale a BS block down only when it exceeds its budget.
    #[default]
    Project,
    /// Scale every nonzero BS block to exactly its budget.
    Boundary,
}

/// `sum_m h_{m,k}^H v_{m,l}` as `(re, im)`.
fn effective_gain(inst: &ProblemInstance, v: &BeamformerTensor, k: usize, l: usize) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    for m in 0..inst.m {
        let (hr, hi) = inst.channel(m, k);
        let (vr, vi) = v.block(m, l);
        for j in 0..inst.n {
            re += hr[j] * vr[j] + hi[j] * vi[j];
            im += hr[j] * vi[j] - hi[j] * vr[j];
        }
    }
    (re, im)
}

pub fn sinr_per_ue(inst: &ProblemInstance, v: &BeamformerTensor) -> Result<Vec<f64>> {
    v.check(inst)?;
    Ok((0..inst.k)
        .map(|k| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for l in 0..inst.k {
                let (re, im) = effective_gain(inst, v, k, l);
                let g = re * re + im * im;
                if l == k {
                    signal = g;
                } else {
                    interference += g;
                }
            }
            signal / (interference + inst.noise[k])
        })
        .collect())
}

/// `sum_k log2(1 + SINR_k)` in bits/s/Hz.
pub fn sum_rate(inst: &ProblemInstance, v: &BeamformerTensor) -> Result<f64> {
    Ok(sinr_per_ue(inst, v)?.iter().map(|s| (1.0 + s).log2()).sum())
}

/// Per-BS transmit power `sum_k ||v_{m,k}||^2`.
pub fn bs_power(v: &BeamformerTensor) -> Vec<f64> {
    let (m, k, _) = v.dims();
    (0..m)
        .map(|bs| {
            (0..k)
                .map(|ue| {
                    let (re, im) = v.block(bs, ue);
                    re.iter().chain(im).map(|x| x * x).sum::<f64>()
                })
                .sum()
        })
        .collect()
}

/// Euclidean projection onto the per-BS power balls.
pub fn project_power(v: &BeamformerTensor, budgets: &[f64]) -> BeamformerTensor {
    apply_power_mode(v, budgets, PowerMode::Project)
}

pub fn apply_power_mode(v: &BeamformerTensor, budgets: &[f64], mode: PowerMode) -> BeamformerTensor {
    let (_, k, _) = v.dims();
    let mut out = v.clone();
    for (bs, (&p, &budget)) in bs_power(v).iter().zip(budgets).enumerate() {
        let factor = match mode {
            PowerMode::Project if p > budget * (1.0 + PROJECTION_SLACK) => (budget / p).sqrt(),
            PowerMode::Boundary if p > 0.0 => (budget / p).sqrt(),
            _ => continue,
        };
        for ue in 0..k {
            let (re, im) = out.block_mut(bs, ue);
            re.iter_mut().chain(im.iter_mut()).for_each(|x| *x *= factor);
        }
    }
    out
}

/// Row indices used to pair channels with beamformers on a tape.
struct GainLayout {
    /// For every `(k, l, m)`: beamformer row `(m, l)`.
    v_rows: Vec<usize>,
    /// For every `(k, l)`: the `m` rows of the previous list.
    per_pair: Vec<Vec<usize>>,
    /// `(k, k)` pair indices.
    signal: Vec<usize>,
    /// For every `k`: pair indices `(k, l)`, `l != k`.
    interference: Vec<Vec<usize>>,
}

impl GainLayout {
    fn new(m: usize, k: usize) -> Self {
        let mut v_rows = Vec::with_capacity(k * k * m);
        let mut per_pair = Vec::with_capacity(k * k);
        for _ue in 0..k {
            for l in 0..k {
                let start = v_rows.len();
                for bs in 0..m {
                    v_rows.push(bs * k + l);
                }
                per_pair.push((start..v_rows.len()).collect());
            }
        }
        Self {
            v_rows,
            per_pair,
            signal: (0..k).map(|ue| ue * k + ue).collect(),
            interference: (0..k)
                .map(|ue| (0..k).filter(|&l| l != ue).map(|l| ue * k + l).collect())
                .collect(),
        }
    }
}

/// SINR of every UE as a `[K, 1]` node, differentiable through `v`.
///
/// `v` holds rows `(m, k)` in the same order as the instance channels.
pub fn sinr_on_tape<T: Scalar>(tape: &mut Tape<T>, inst: &ProblemInstance, v: ComplexVar) -> Result<Var> {
    let rows = tape.value(v.re).rows();
    if rows != inst.m * inst.k || tape.value(v.re).cols() != inst.n {
        return Err(Error::shape(
            "sinr",
            format!(
                "beamformer {:?} vs instance ({}, {}, {})",
                tape.value(v.re).shape(),
                inst.m,
                inst.k,
                inst.n
            ),
        ));
    }
    let layout = GainLayout::new(inst.m, inst.k);
    let n = inst.n;
    let mut h_re = Vec::with_capacity(layout.v_rows.len() * n);
    let mut h_im = Vec::with_capacity(layout.v_rows.len() * n);
    for ue in 0..inst.k {
        for _l in 0..inst.k {
            for bs in 0..inst.m {
                let (hr, hi) = inst.channel(bs, ue);
                h_re.extend(hr.iter().map(|&x| T::from_f64_lossy(x)));
                h_im.extend(hi.iter().map(|&x| T::from_f64_lossy(x)));
            }
        }
    }
    let pairs = layout.v_rows.len();
    let h = ComplexVar {
        re: tape.leaf(Tensor::new(vec![pairs, n], h_re)?),
        im: tape.leaf(Tensor::new(vec![pairs, n], h_im)?),
    };
    let vg = ComplexVar {
        re: tape.gather_rows(v.re, &layout.v_rows)?,
        im: tape.gather_rows(v.im, &layout.v_rows)?,
    };
    let terms = complex_inner(tape, h, vg)?;
    let gains = ComplexVar {
        re: tape.segment_sum(terms.re, &layout.per_pair)?,
        im: tape.segment_sum(terms.im, &layout.per_pair)?,
    };
    let power = gains.abs_sq(tape)?;
    let signal = tape.gather_rows(power, &layout.signal)?;
    let interference = tape.segment_sum(power, &layout.interference)?;
    let noise = tape.leaf(Tensor::from_f64(&[inst.k, 1], &inst.noise)?);
    let denom = tape.add(interference, noise)?;
    tape.div(signal, denom)
}

/// Sum rate as a scalar node.
pub fn sum_rate_on_tape<T: Scalar>(tape: &mut Tape<T>, inst: &ProblemInstance, v: ComplexVar) -> Result<Var> {
    let sinr = sinr_on_tape(tape, inst, v)?;
    let shifted = tape.add_scalar(sinr, T::one());
    let ln = tape.ln(shifted);
    let total = tape.sum(ln);
    Ok(tape.scale(total, T::from_f64_lossy(std::f64::consts::LOG2_E)))
}

/// Sum rate and its gradient with respect to the real and imaginary parts
/// of every beamformer entry.
pub fn sum_rate_with_gradient(inst: &ProblemInstance, v: &BeamformerTensor) -> Result<(f64, BeamformerTensor)> {
    v.check(inst)?;
    let mut tape = Tape::<f64>::new();
    let var = ComplexVar::leaf(&mut tape, &v.v);
    let rate = sum_rate_on_tape(&mut tape, inst, var)?;
    let mut grads = tape.backward(rate)?;
    let shape = v.v.shape();
    let re = grads.take(var.re).unwrap_or_else(|| Tensor::zeros(shape));
    let im = grads.take(var.im).unwrap_or_else(|| Tensor::zeros(shape));
    Ok((
        tape.value(rate).data()[0],
        BeamformerTensor::new(ComplexSplit::new(re, im)?)?,
    ))
}

/// Per-BS power as an `[M, 1]` node.
pub fn bs_power_on_tape<T: Scalar>(tape: &mut Tape<T>, v: ComplexVar, m: usize, k: usize) -> Result<Var> {
    let sq = v.abs_sq(tape)?;
    let per_edge = tape.row_sum(sq);
    let groups: Vec<Vec<usize>> = (0..m).map(|bs| (bs * k..(bs + 1) * k).collect()).collect();
    tape.segment_sum(per_edge, &groups)
}

/// Brings `v` onto the power constraint on the tape.
pub fn power_mode_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    v: ComplexVar,
    budgets: &[f64],
    k: usize,
    mode: PowerMode,
) -> Result<ComplexVar> {
    let m = budgets.len();
    let power = bs_power_on_tape(tape, v, m, k)?;
    let budget = tape.leaf(Tensor::from_f64(&[m, 1], budgets)?);
    let denom = match mode {
        PowerMode::Project => tape.maximum(power, budget)?,
        PowerMode::Boundary => {
            let floor = tape.leaf(Tensor::filled(&[m, 1], T::min_positive_value()));
            tape.maximum(power, floor)?
        }
    };
    let ratio = tape.div(budget, denom)?;
    let factor = tape.sqrt(ratio);
    let rows: Vec<usize> = (0..m * k).map(|e| e / k).collect();
    let per_row = tape.gather_rows(factor, &rows)?;
    Ok(ComplexVar {
        re: tape.mul_col(v.re, per_row)?,
        im: tape.mul_col(v.im, per_row)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{InstanceSeeds, ScenarioConfig};

    fn instance(m: usize, k: usize, n: usize, re: Vec<f64>, im: Vec<f64>, noise: Vec<f64>) -> ProblemInstance {
        let c = ComplexSplit::new(
            Tensor::new(vec![m, k, n], re).unwrap(),
            Tensor::new(vec![m, k, n], im).unwrap(),
        )
        .unwrap();
        ProblemInstance::new(c, vec![1.0; m], noise).unwrap()
    }

    fn beam(m: usize, k: usize, n: usize, re: Vec<f64>, im: Vec<f64>) -> BeamformerTensor {
        BeamformerTensor::new(
            ComplexSplit::new(
                Tensor::new(vec![m, k, n], re).unwrap(),
                Tensor::new(vec![m, k, n], im).unwrap(),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_user_without_interference() {
        let inst = instance(1, 1, 2, vec![1.0, 0.0], vec![0.0; 2], vec![1.0]);
        let v = beam(1, 1, 2, vec![1.0, 0.0], vec![0.0; 2]);
        assert_eq!(sinr_per_ue(&inst, &v).unwrap(), vec![1.0]);
        assert_eq!(sum_rate(&inst, &v).unwrap(), 1.0);
    }

    #[test]
    fn zero_beamformers_give_zero() {
        let inst = instance(2, 2, 1, vec![1.0; 4], vec![0.0; 4], vec![1.0; 2]);
        let v = BeamformerTensor::zeros(2, 2, 1);
        assert_eq!(sinr_per_ue(&inst, &v).unwrap(), vec![0.0, 0.0]);
        assert_eq!(sum_rate(&inst, &v).unwrap(), 0.0);
        assert_eq!(bs_power(&v), vec![0.0, 0.0]);
    }

    #[test]
    fn all_ones_two_by_two() {
        let inst = instance(2, 2, 1, vec![1.0; 4], vec![0.0; 4], vec![1.0; 2]);
        let v = beam(2, 2, 1, vec![1.0; 4], vec![0.0; 4]);
        assert_eq!(sinr_per_ue(&inst, &v).unwrap(), vec![0.8, 0.8]);
        let rate = sum_rate(&inst, &v).unwrap();
        assert!((rate - 2.0 * 1.8f64.log2()).abs() < 1e-12);
        assert!((rate - 1.6959).abs() < 1e-4);
    }

    #[test]
    fn unit_beamformers_power() {
        let v = beam(
            2,
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.6, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.8, 0.0, 0.0, 1.0],
        );
        let p = bs_power(&v);
        assert!((p[0] - 2.0).abs() < 1e-15 && (p[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn projection_cases() {
        let v = beam(1, 1, 1, vec![2.0], vec![0.0]);
        let p = project_power(&v, &[1.0]);
        assert_eq!(p.v.re.data(), &[1.0]);
        assert_eq!(bs_power(&p), vec![1.0]);

        let inside = beam(1, 1, 2, vec![0.5, 0.0], vec![0.0, 0.5]);
        assert_eq!(project_power(&inside, &[1.0]), inside);
    }

    #[test]
    fn boundary_mode_scales_up() {
        let inside = beam(1, 1, 2, vec![0.5, 0.0], vec![0.0, 0.5]);
        let b = apply_power_mode(&inside, &[1.0], PowerMode::Boundary);
        assert!((bs_power(&b)[0] - 1.0).abs() < 1e-12);
        let zero = BeamformerTensor::zeros(1, 1, 2);
        assert_eq!(apply_power_mode(&zero, &[1.0], PowerMode::Boundary), zero);
    }

    #[test]
    fn tape_sum_rate_matches_plain() {
        let inst = InstanceSeeds::derive(11, 1)[0]
            .realize(&ScenarioConfig::new(3, 2, 2))
            .unwrap();
        let v = beam(
            3,
            2,
            2,
            (0..12).map(|i| (i as f64 * 0.37).sin()).collect(),
            (0..12).map(|i| (i as f64 * 0.91).cos()).collect(),
        );
        let mut tape = Tape::<f64>::new();
        let var = ComplexVar {
            re: tape.leaf(v.v.re.clone()),
            im: tape.leaf(v.v.im.clone()),
        };
        let sinr = sinr_on_tape(&mut tape, &inst, var).unwrap();
        let plain = sinr_per_ue(&inst, &v).unwrap();
        for (a, b) in tape.value(sinr).data().iter().zip(&plain) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let rate = sum_rate_on_tape(&mut tape, &inst, var).unwrap();
        let plain_rate = sum_rate(&inst, &v).unwrap();
        assert!((tape.value(rate).data()[0] - plain_rate).abs() < 1e-12);

        let projected = power_mode_on_tape(&mut tape, var, &inst.bs_power, inst.k, PowerMode::Project).unwrap();
        let plain_proj = project_power(&v, &inst.bs_power);
        for (a, b) in tape.value(projected.re).data().iter().zip(plain_proj.v.re.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let inst = instance(1, 1, 2, vec![1.0, 0.0], vec![0.0; 2], vec![1.0]);
        assert!(sinr_per_ue(&inst, &BeamformerTensor::zeros(2, 1, 2)).is_err());
    }
}

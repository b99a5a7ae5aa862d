use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ComplexSplit, Scalar, Tensor};
use crate::objective::BeamformerTensor;
use crate::scenario::ProblemInstance;

/// Relabeling of BSs (`pi1`) and UEs (`pi2`): object `m` moves to slot
/// `pi1[m]`, object `k` to slot `pi2[k]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationPair {
    pub pi1: Vec<usize>,
    pub pi2: Vec<usize>,
}

fn is_bijection(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

impl PermutationPair {
    pub fn new(pi1: Vec<usize>, pi2: Vec<usize>) -> Result<Self> {
        let p = Self { pi1, pi2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_bijection(&self.pi1) || !is_bijection(&self.pi2) {
            return Err(Error::Argument(format!("not a permutation pair: {self:?}")));
        }
        Ok(())
    }

    pub fn identity(m: usize, k: usize) -> Self {
        Self {
            pi1: (0..m).collect(),
            pi2: (0..k).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Self {
        let mut p = Self::identity(m, k);
        p.pi1.shuffle(rng);
        p.pi2.shuffle(rng);
        p
    }

    pub fn inverse(&self) -> Self {
        Self {
            pi1: invert(&self.pi1),
            pi2: invert(&self.pi2),
        }
    }

    pub fn m(&self) -> usize {
        self.pi1.len()
    }

    pub fn k(&self) -> usize {
        self.pi2.len()
    }

    fn check(&self, m: usize, k: usize) -> Result<()> {
        if (self.m(), self.k()) != (m, k) {
            return Err(Error::shape(
                "apply_permutation",
                format!("permutation for ({}, {}) applied to ({m}, {k})", self.m(), self.k()),
            ));
        }
        Ok(())
    }

    /// Permutes the rows of a BS-indexed (`[M, ..]`) tensor.
    pub fn permute_bs_rows<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        permute_rows(x, &self.pi1)
    }

    /// Permutes the rows of a UE-indexed (`[K, ..]`) tensor.
    pub fn permute_ue_rows<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        permute_rows(x, &self.pi2)
    }

    /// Permutes an edge-indexed tensor with rows in `(m, k)` order.
    pub fn permute_edge_rows<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = (self.m(), self.k());
        let dest: Vec<usize> = (0..m * k).map(|e| self.pi1[e / k] * k + self.pi2[e % k]).collect();
        permute_rows(x, &dest)
    }
}

/// `out[dest[i]] = x[i]` row-wise.
fn permute_rows<T: Scalar>(x: &Tensor<T>, dest: &[usize]) -> Result<Tensor<T>> {
    if x.rank() == 0 || x.rows() != dest.len() {
        return Err(Error::shape(
            "apply_permutation",
            format!("{} rows for a permutation of {}", x.rows(), dest.len()),
        ));
    }
    let mut out = Tensor::zeros(x.shape());
    for (i, &j) in dest.iter().enumerate() {
        out.row_mut(j).copy_from_slice(x.row(i));
    }
    Ok(out)
}

fn permute_vec(x: &[f64], dest: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (i, &j) in dest.iter().enumerate() {
        out[j] = x[i];
    }
    out
}

fn permute_edges(x: &ComplexSplit<f64>, p: &PermutationPair) -> Result<ComplexSplit<f64>> {
    let (m, k) = (p.m(), p.k());
    let n = x.shape()[2];
    let flat = |t: &Tensor<f64>| t.clone().reshape(vec![m * k, n]);
    let re = p.permute_edge_rows(&flat(&x.re)?)?.reshape(vec![m, k, n])?;
    let im = p.permute_edge_rows(&flat(&x.im)?)?.reshape(vec![m, k, n])?;
    ComplexSplit::new(re, im)
}

/// Objects whose BS and UE axes can be relabeled.
pub trait Permute: Sized {
    fn permute(&self, p: &PermutationPair) -> Result<Self>;
}

impl Permute for ProblemInstance {
    fn permute(&self, p: &PermutationPair) -> Result<Self> {
        p.check(self.m, self.k)?;
        let mut out = self.clone();
        out.channels = permute_edges(&self.channels, p)?;
        out.bs_power = permute_vec(&self.bs_power, &p.pi1);
        out.noise = permute_vec(&self.noise, &p.pi2);
        Ok(out)
    }
}

impl Permute for BeamformerTensor {
    fn permute(&self, p: &PermutationPair) -> Result<Self> {
        let (m, k, _) = self.dims();
        p.check(m, k)?;
        BeamformerTensor::new(permute_edges(&self.v, p)?)
    }
}

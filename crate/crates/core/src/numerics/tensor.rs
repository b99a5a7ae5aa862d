use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point element type usable on a [`Tape`](super::Tape).
///
/// `f32` is the training precision; `f64` is used for gradient and oracle
/// checks.
pub trait Scalar: Float + FromPrimitive + Sum + Default + Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }

    /// See [`matmul_bias_with`].
    fn matmul_bias(x: &[Self], w: &[Self], bias: &[Self], out: &mut [Self]) {
        matmul_bias_with(x, w, bias, out, dot4)
    }
}

impl Scalar for f32 {
    fn matmul_bias(x: &[f32], w: &[f32], bias: &[f32], out: &mut [f32]) {
        matmul_bias_with(x, w, bias, out, dot4_f32x8)
    }
}

impl Scalar for f64 {}

/// Dense row-major tensor.
///
/// Tensors of rank >= 2 are viewed as a matrix whose last axis is the column
/// axis and whose leading axes are flattened into rows. Rank-1 tensors are a
/// single row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {numel} elements, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); numel],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| T::from_f64_lossy(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of columns (size of the last axis).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Number of rows (product of all but the last axis; 1 for rank <= 1).
    pub fn rows(&self) -> usize {
        if self.shape.len() <= 1 {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| if v.abs() > acc { v.abs() } else { acc })
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn squared_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// Complex tensor stored as separate real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexSplit<T> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
}

impl<T: Scalar> ComplexSplit<T> {
    pub fn new(re: Tensor<T>, im: Tensor<T>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::shape(
                "complex",
                format!("re {:?} vs im {:?}", re.shape(), im.shape()),
            ));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            re: Tensor::zeros(shape),
            im: Tensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn cast<U: Scalar>(&self) -> ComplexSplit<U> {
        ComplexSplit {
            re: self.re.cast(),
            im: self.im.cast(),
        }
    }
}

/// Dot product with eight independent accumulators.
///
/// The accumulation order depends only on the slice length, so the same
/// inputs always produce the same bits regardless of where the rows live.
#[inline(always)]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        let (xa, xb): (&[T; 8], &[T; 8]) = (xa.try_into().unwrap(), xb.try_into().unwrap());
        for j in 0..8 {
            acc[j] = acc[j] + xa[j] * xb[j];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ta.iter().zip(tb) {
        tail = tail + x * y;
    }
    reduce8(&acc) + tail
}

#[inline(always)]
fn reduce8<T: Scalar>(acc: &[T; 8]) -> T {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Four dot products of `a` against `b0..b3`, each with exactly the
/// operation order of [`dot`]; interleaving only hides add latency.
#[inline]
pub(crate) fn dot4<T: Scalar>(a: &[T], b: [&[T]; 4]) -> [T; 4] {
    let mut acc = [[T::zero(); 8]; 4];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        for (r, acc) in acc.iter_mut().enumerate() {
            let xb = &b[r][c * 8..c * 8 + 8];
            for j in 0..8 {
                acc[j] = acc[j] + xa[j] * xb[j];
            }
        }
    }
    let mut out = [T::zero(); 4];
    for (r, acc) in acc.iter().enumerate() {
        let mut tail = T::zero();
        for j in chunks * 8..a.len() {
            tail = tail + a[j] * b[r][j];
        }
        out[r] = reduce8(acc) + tail;
    }
    out
}

/// `out[i, o] = x[i, :] . w[o, :] + bias[o]` for row-major `x` (`rows x n_in`)
/// and `w` (`n_out x n_in`). Every entry uses the operation order of [`dot`];
/// `dot4` computes four of them at once.
#[inline(always)]
pub(crate) fn matmul_bias_with<T: Scalar>(
    x: &[T],
    w: &[T],
    bias: &[T],
    out: &mut [T],
    dot4: impl Fn(&[T], [&[T]; 4]) -> [T; 4],
) {
    fn row<T>(m: &[T], r: usize, n: usize) -> &[T] {
        &m[r * n..(r + 1) * n]
    }
    let n_out = bias.len();
    if n_out == 0 {
        return;
    }
    let n_in = w.len() / n_out;
    let blocked = n_out - n_out % 4;
    // Weight blocks outermost so each stays in cache across all rows.
    for o in (0..blocked).step_by(4) {
        let wb = [
            row(w, o, n_in),
            row(w, o + 1, n_in),
            row(w, o + 2, n_in),
            row(w, o + 3, n_in),
        ];
        for (i, dst) in out.chunks_exact_mut(n_out).enumerate() {
            let d = dot4(row(x, i, n_in), wb);
            for j in 0..4 {
                dst[o + j] = d[j] + bias[o + j];
            }
        }
    }
    for o in blocked..n_out {
        for (i, dst) in out.chunks_exact_mut(n_out).enumerate() {
            dst[o] = dot(row(x, i, n_in), row(w, o, n_in)) + bias[o];
        }
    }
}

/// Explicit-lane version of [`dot4`]: lane `j` of each accumulator is
/// `acc[j]` there, updated with a separate multiply and add, so the results
/// are bitwise identical.
#[inline]
fn dot4_f32x8(a: &[f32], b: [&[f32]; 4]) -> [f32; 4] {
    use wide::f32x8;
    let n = a.len();
    let chunks = n / 8;
    let lanes = |s: &[f32], c: usize| f32x8::from(<[f32; 8]>::try_from(&s[c * 8..c * 8 + 8]).unwrap());
    let mut acc = [f32x8::ZERO; 4];
    for c in 0..chunks {
        let xa = lanes(a, c);
        for (acc, br) in acc.iter_mut().zip(&b) {
            *acc += xa * lanes(br, c);
        }
    }
    let mut out = [0.0; 4];
    for ((o, acc), br) in out.iter_mut().zip(&acc).zip(&b) {
        let mut tail = 0.0;
        for j in chunks * 8..n {
            tail += a[j] * br[j];
        }
        *o = reduce8(&acc.to_array()) + tail;
    }
    out
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!((t.rows(), t.cols()), (2, 3));
    }

    #[test]
    fn rank_one_is_single_row() {
        let t = Tensor::<f32>::vector(vec![1.0, 2.0]);
        assert_eq!((t.rows(), t.cols()), (1, 2));
    }

    #[test]
    fn rank_three_flattens_leading_axes() {
        let t = Tensor::<f32>::zeros(&[2, 3, 4]);
        assert_eq!((t.rows(), t.cols()), (6, 4));
    }

    #[test]
    fn complex_parts_must_agree() {
        let re = Tensor::<f64>::zeros(&[2]);
        let im = Tensor::<f64>::zeros(&[3]);
        assert!(ComplexSplit::new(re, im).is_err());
    }

    #[test]
    fn dot4_is_bitwise_dot() {
        let a: Vec<f32> = (0..37).map(|i| (i as f32 * 0.37).sin()).collect();
        let bs: Vec<Vec<f32>> = (0..4)
            .map(|r| (0..37).map(|i| ((i * 7 + r) as f32 * 0.11).cos()).collect())
            .collect();
        let got = dot4(&a, [&bs[0], &bs[1], &bs[2], &bs[3]]);
        let lanes = dot4_f32x8(&a, [&bs[0], &bs[1], &bs[2], &bs[3]]);
        assert_eq!(lanes.map(f32::to_bits), got.map(f32::to_bits));
        for r in 0..4 {
            assert_eq!(got[r].to_bits(), dot(&a, &bs[r]).to_bits());
        }
    }

    #[test]
    fn matmul_is_bitwise_dot() {
        let (rows, n_in, n_out) = (5, 37, 7);
        let x: Vec<f32> = (0..rows * n_in).map(|i| (i as f32 * 0.37).sin()).collect();
        let w: Vec<f32> = (0..n_out * n_in).map(|i| (i as f32 * 0.11).cos()).collect();
        let bias: Vec<f32> = (0..n_out).map(|i| i as f32 * 0.1 - 0.3).collect();
        let mut out = vec![0.0; rows * n_out];
        f32::matmul_bias(&x, &w, &bias, &mut out);
        for i in 0..rows {
            for o in 0..n_out {
                let want = dot(&x[i * n_in..(i + 1) * n_in], &w[o * n_in..(o + 1) * n_in]) + bias[o];
                assert_eq!(out[i * n_out + o].to_bits(), want.to_bits());
            }
        }
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..19).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}

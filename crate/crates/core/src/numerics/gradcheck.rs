//! Central finite-difference gradient checks.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Result for one checked coordinate.
#[derive(Clone, Debug)]
pub struct CoordCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// One-sided differences disagree by more than the tolerance: a kink or
    /// max-aggregation tie lies within one step of the point.
    pub excluded: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub coords: Vec<CoordCheck>,
}

impl GradCheckReport {
    fn included(&self) -> impl Iterator<Item = &CoordCheck> {
        self.coords.iter().filter(|c| !c.excluded)
    }

    pub fn excluded_count(&self) -> usize {
        self.coords.iter().filter(|c| c.excluded).count()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.included().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    /// Fraction of non-excluded coordinates under the tolerance (1.0 when
    /// every coordinate was excluded).
    pub fn fraction_within(&self) -> f64 {
        let (mut n, mut ok) = (0usize, 0usize);
        for c in self.included() {
            n += 1;
            if c.rel_error <= self.tolerance {
                ok += 1;
            }
        }
        if n == 0 {
            1.0
        } else {
            ok as f64 / n as f64
        }
    }

    pub fn passed(&self) -> bool {
        self.included().all(|c| c.rel_error <= self.tolerance)
    }
}

/// Gradients below this magnitude are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-7;

/// Compares `analytic` against central differences of `value` at `point`.
///
/// A coordinate is excluded when a non-differentiable point lies within two
/// steps of it: there the differences at steps `h` and `2h` stop agreeing
/// with a smooth Taylor expansion. `coords` restricts the check to a subset
/// of coordinates.
pub fn finite_difference_check(
    mut value: impl FnMut(&[f64]) -> Result<f64>,
    point: &[f64],
    analytic: &[f64],
    step: f64,
    tolerance: f64,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport> {
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let f0 = value(point)?;
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    let mut at = |x: &mut Vec<f64>, i: usize, v: f64| -> Result<f64> {
        let orig = x[i];
        x[i] = v;
        let f = value(x);
        x[i] = orig;
        f
    };
    for &i in coords {
        let orig = x[i];
        let fp = at(&mut x, i, orig + step)?;
        let fm = at(&mut x, i, orig - step)?;
        let fp2 = at(&mut x, i, orig + 2.0 * step)?;
        let fm2 = at(&mut x, i, orig - 2.0 * step)?;

        let numeric = (fp - fm) / (2.0 * step);
        let numeric2 = (fp2 - fm2) / (4.0 * step);
        // One-sided gaps grow linearly with the step on smooth functions.
        let gap = (fp - 2.0 * f0 + fm) / step;
        let gap2 = (fp2 - 2.0 * f0 + fm2) / (2.0 * step);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs()).max(numeric2.abs()).max(ABS_FLOOR);
        let excluded = (gap2 - 2.0 * gap).abs() > tolerance * scale || (numeric2 - numeric).abs() > tolerance * scale;
        let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
        out.push(CoordCheck {
            index: i,
            analytic: a,
            numeric,
            rel_error,
            excluded,
        });
    }
    Ok(GradCheckReport { tolerance, coords: out })
}

/// Checks the tape gradient of a scalar function of one tensor.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f(&mut tape, x)?;
    let grads = tape.backward(y)?;
    let analytic = grads
        .get(x)
        .map(|g| g.data().to_vec())
        .unwrap_or_else(|| vec![0.0; point.numel()]);
    let shape = point.shape().to_vec();
    finite_difference_check(
        |p| {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::new(shape.clone(), p.to_vec())?);
            let y = f(&mut tape, x)?;
            Ok(tape.value(y).data()[0])
        },
        point.data(),
        &analytic,
        step,
        tolerance,
        None,
    )
}

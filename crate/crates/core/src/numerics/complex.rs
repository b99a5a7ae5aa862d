use super::tape::{Tape, Var};
use super::tensor::{ComplexSplit, Scalar};
use crate::error::{Error, Result};

/// Complex value on a tape, held as two real nodes of identical shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexVar {
    pub re: Var,
    pub im: Var,
}

impl ComplexVar {
    pub fn leaf<T: Scalar>(tape: &mut Tape<T>, value: &ComplexSplit<T>) -> Self {
        Self {
            re: tape.leaf(value.re.clone()),
            im: tape.leaf(value.im.clone()),
        }
    }

    pub fn value<T: Scalar>(&self, tape: &Tape<T>) -> ComplexSplit<T> {
        ComplexSplit {
            re: tape.value(self.re).clone(),
            im: tape.value(self.im).clone(),
        }
    }

    /// `|z|^2` elementwise.
    pub fn abs_sq<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<Var> {
        let rr = tape.mul(self.re, self.re)?;
        let ii = tape.mul(self.im, self.im)?;
        tape.add(rr, ii)
    }
}

/// Row-wise `h^H v`: for every row, `sum_j conj(h_j) v_j`.
///
/// Real part `sum(h_re v_re + h_im v_im)`, imaginary part
/// `sum(h_re v_im - h_im v_re)`. A rank-1 pair yields a single value.
pub fn complex_inner<T: Scalar>(tape: &mut Tape<T>, h: ComplexVar, v: ComplexVar) -> Result<ComplexVar> {
    let hs = tape.value(h.re).shape().to_vec();
    let vs = tape.value(v.re).shape().to_vec();
    if hs != vs || tape.value(h.im).shape() != hs.as_slice() || tape.value(v.im).shape() != vs.as_slice() {
        return Err(Error::shape("complex_inner", format!("h {hs:?} vs v {vs:?}")));
    }
    let rr = tape.mul(h.re, v.re)?;
    let ii = tape.mul(h.im, v.im)?;
    let ri = tape.mul(h.re, v.im)?;
    let ir = tape.mul(h.im, v.re)?;
    let re_terms = tape.add(rr, ii)?;
    let im_terms = tape.sub(ri, ir)?;
    Ok(ComplexVar {
        re: tape.row_sum(re_terms),
        im: tape.row_sum(im_terms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn cvar(tape: &mut Tape<f64>, re: &[f64], im: &[f64]) -> ComplexVar {
        ComplexVar {
            re: tape.leaf(Tensor::vector(re.to_vec())),
            im: tape.leaf(Tensor::vector(im.to_vec())),
        }
    }

    #[test]
    fn real_unit_inner_product() {
        let mut tape = Tape::new();
        let h = cvar(&mut tape, &[1.0], &[0.0]);
        let v = cvar(&mut tape, &[1.0], &[0.0]);
        let z = complex_inner(&mut tape, h, v).unwrap();
        assert_eq!(tape.value(z.re).data(), &[1.0]);
        assert_eq!(tape.value(z.im).data(), &[0.0]);
    }

    #[test]
    fn imaginary_unit_conjugates() {
        let mut tape = Tape::new();
        let h = cvar(&mut tape, &[0.0], &[1.0]);
        let v = cvar(&mut tape, &[0.0], &[1.0]);
        let z = complex_inner(&mut tape, h, v).unwrap();
        assert_eq!(tape.value(z.re).data(), &[1.0]);
        assert_eq!(tape.value(z.im).data(), &[0.0]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut tape = Tape::new();
        let h = cvar(&mut tape, &[1.0, 2.0], &[0.0, 0.0]);
        let v = cvar(&mut tape, &[1.0], &[0.0]);
        assert!(complex_inner(&mut tape, h, v).is_err());
    }
}

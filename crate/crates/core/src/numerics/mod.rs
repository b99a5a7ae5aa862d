//! Dense tensors, split-storage complex values and a reverse-mode tape.

mod complex;
mod gradcheck;
mod tape;
mod tensor;

pub use complex::{complex_inner, ComplexVar};
pub use gradcheck::{finite_difference_check, grad_check, CoordCheck, GradCheckReport, ABS_FLOOR};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ComplexSplit, Scalar, Tensor};

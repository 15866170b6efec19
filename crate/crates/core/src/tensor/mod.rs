//! Dense tensors, deterministic randomness and reverse-mode differentiation.

mod array;
mod gradcheck;
mod rng;
mod scalar;
mod tape;

pub use array::{broadcast_shapes, Tensor};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tape::{Backward, Gradients, Tape, Var};

pub(crate) use tape::{check_finite, sigmoid};

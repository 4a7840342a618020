//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records each operation as it runs; [`Tape::backward`] replays the
//! record in reverse. Parameters enter as shared leaves, so registering a large
//! embedding table costs a reference count, not a copy.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, relative_error, FD_STEP, REL_ERR_FLOOR};
pub use tape::{log_softmax, softmax, Tape, Var, COSINE_EPS};
pub use tensor::Tensor;

pub(crate) use tensor::argmax;

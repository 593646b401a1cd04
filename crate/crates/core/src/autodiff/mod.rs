//! Reverse-mode differentiation over dense tensors.
//!
//! Values are recorded on a [`Tape`] as they are computed; [`Tape::backward`]
//! then sweeps the tape in reverse and leaves gradients on every leaf created
//! with [`Tape::param`].
//!
//! ```
//! use migate::autodiff::Tape;
//! use migate::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::from_vec(vec![1.0, -2.0]));
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[2.0, -4.0]);
//! ```

mod gradcheck;
pub mod ops;
mod tape;

pub use gradcheck::{check_gradients, check_gradients_at, finite_difference};
pub use ops::{
    cosine_similarity, linear_resample, sigmoid, softmax_rows, softplus, ActivationKind,
    DropoutKey, Padding, RunningStats, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM, DEFAULT_COSINE_EPS,
    LOG_FLOOR,
};
pub use tape::{Tape, Var};

/// Whether layers use batch statistics and dropout (train) or running statistics
/// and identity dropout (eval).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

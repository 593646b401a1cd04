pub mod conv;
pub mod elementwise;
pub mod linalg;
pub mod nn;
pub mod norm;
pub mod reduce;
pub mod shape;

pub use conv::Padding;
pub use elementwise::{sigmoid, softplus, ActivationKind, LOG_FLOOR};
pub use nn::{softmax_rows, DropoutKey};
pub use norm::{RunningStats, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM};
pub use reduce::{cosine_similarity, DEFAULT_COSINE_EPS};
pub use shape::linear_resample;

//! Minimal dense-network toolkit: matrices, layers, losses, Adam, and a
//! finite-difference gradient checker. Everything is f64 and deterministic
//! given a seeded RNG.

pub mod adam;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod matrix;

pub use adam::{AdamHyper, AdamState};
pub use layer::{backward_stack, forward_stack, Activation, DenseLayer, LayerGrad};
pub use loss::{cross_entropy, l2_reconstruction, softmax};
pub use matrix::Matrix;

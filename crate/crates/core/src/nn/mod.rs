//! Minimal convolutional substrate: tensors, conv/deconv layers, the
//! autoencoder stack, reconstruction loss, Adam, and a finite-difference
//! gradient checker.
//!
//! Activations flow between layers in channel-major `(C, N, H, W)` order so a
//! whole batch is one GEMM per layer; the public [`Tensor4`] is `(N, C, H, W)`.

mod adam;
mod gradcheck;
mod layer;
mod loss;
mod model;
mod real;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::finite_difference_check;
pub use layer::{Activation, Layer, LayerKind, LEAKY_SLOPE};
pub use loss::{per_sample_loss, per_sample_loss_masked};
pub use model::{
    apply_weighted_step, weighted_backward_step, Architecture, Autoencoder, ForwardPass,
    Gradients,
};
pub use real::Real;
pub use tensor::Tensor4;

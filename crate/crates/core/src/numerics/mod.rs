//! Minimal differentiable numerics: 1-D tensors, causal dilated convolution,
//! gated activations, a reverse-mode tape, Adam, deterministic RNG, and a
//! finite-difference gradient checker.

mod adam;
mod conv;
pub mod gradcheck;
mod param;
mod rng;
mod tape;
mod vec1;

pub use adam::{Adam, AdamConfig};
pub use conv::{conv1d_backward, conv1d_forward, ConvSpec, PadMode};
pub use param::Param;
pub use rng::{mix, Rng};
pub use tape::{sigmoid_scalar, softplus_scalar, Gradients, NodeId, Shape, Tape, TensorData};
pub use vec1::Vec1;

use crate::error::{Error, Result};
use crate::real::Real;

/// Elementwise tanh-sigmoid gate: `tanh(h) * sigmoid(g)`.
///
/// Outputs lie strictly inside `(-1, 1)` for finite inputs.
pub fn gated_activation<S: Real>(h: &[S], g: &[S]) -> Result<Vec<S>> {
    if h.len() != g.len() {
        return Err(Error::LengthMismatch {
            context: "gated_activation",
            left: h.len(),
            right: g.len(),
        });
    }
    Ok(h.iter()
        .zip(g)
        .map(|(&hv, &gv)| hv.tanh() * sigmoid_scalar(gv))
        .collect())
}

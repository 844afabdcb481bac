//! The lightweight per-step autoregressive Gaussian noise model: a bank of
//! small causal gated CNNs, one per diffusion step, each emitting a
//! conditional mean and standard deviation per sample.

mod loss;
mod net;
mod train;

pub use loss::nll_loss;
pub use net::{NoiseModel, NoiseNetConfig, StepModel, SIGMA_FLOOR};
pub use train::{
    build_vt, train_noise_model, CombinedNoise, DrawMode, NoiseTrainConfig, RebuildMode,
    StepTrainReport,
};

//! Guided-diffusion signal enhancement.
//!
//! The crate trains a small denoising-diffusion backbone on clean signals
//! and a lightweight per-step autoregressive Gaussian model on a noise-only
//! clip, then runs reverse diffusion whose per-step mean is corrected by
//! the noise model's likelihood of the noisy observation. Around that core
//! sit the supporting pieces: a vector autodiff tape with Adam, diffusion
//! schedules, WAV input/output, an STFT spectrogram exporter, SNR mixing,
//! and the SI-SDR / log-spectral-distance metrics.
//!
//! Everything numeric is generic over the scalar type (`f32` or `f64`
//! through [`Real`]); the `*F` aliases at the crate root fix `f64`, which
//! is what the command-line harness uses.

pub mod audio;
pub mod diffusion;
mod error;
pub mod guided;
pub mod noise_model;
pub mod numerics;
pub mod real;
pub mod schedules;
pub mod weights;

pub use error::{Error, Result};
pub use real::Real;

pub type Vec1F = numerics::Vec1<f64>;
pub type WaveF = audio::Wave<f64>;
pub type EpsilonNetF = diffusion::EpsilonNet<f64>;
pub type StepModelF = noise_model::StepModel<f64>;
pub type NoiseModelF = noise_model::NoiseModel<f64>;
pub type EnhanceRunF = guided::EnhanceRun<f64>;

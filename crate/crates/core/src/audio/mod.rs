//! Waveform I/O and measurement: WAV codec, synthetic corpora, SNR mixing,
//! SI-SDR, log-spectral distance, and spectrogram export.

mod metrics;
mod mix;
mod stft;
mod synth;
mod wav;

pub use metrics::{log_spectral_distance, si_sdr, SI_SDR_CAP_DB};
pub use mix::mix_at_snr;
pub use stft::{fft_radix2, spectrogram_export, stft_magnitude, Spectrogram, StftConfig};
pub use synth::{synth_corpus, SynthKind};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};
use crate::numerics::Vec1;
use crate::real::Real;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono waveform: finite samples nominally in [-1, 1] plus a sample rate.
/// Out-of-range values are tolerated in memory and saturated by the codec.
#[derive(Debug, Clone, PartialEq)]
pub struct Wave<S: Real> {
    pub samples: Vec1<S>,
    pub sample_rate: u32,
}

impl<S: Real> Wave<S> {
    pub fn new(samples: Vec1<S>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Wave {
            samples,
            sample_rate,
        })
    }

    pub fn from_samples(samples: Vec<S>, sample_rate: u32) -> Result<Self> {
        Self::new(Vec1::new(samples)?, sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // Vec1 guarantees len >= 1
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }
}

//! SNR-controlled mixing of a clean signal with a noise clip.

use crate::audio::Wave;
use crate::error::{Error, Result};
use crate::numerics::Vec1;
use crate::real::{from_f64, to_f64, Real};

/// Scales `noise` so that `10*log10(||clean||^2 / ||scaled||^2) == snr_db`
/// and returns the mixture together with the scaled noise.
///
/// The noise clip must be at least as long as the clean signal; extra
/// trailing samples are cropped.
pub fn mix_at_snr<S: Real>(
    clean: &Wave<S>,
    noise: &Wave<S>,
    snr_db: f64,
) -> Result<(Wave<S>, Wave<S>)> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::invalid(format!(
            "sample rates differ: clean {} Hz vs noise {} Hz",
            clean.sample_rate, noise.sample_rate
        )));
    }
    if noise.len() < clean.len() {
        return Err(Error::invalid(format!(
            "noise clip ({} samples) shorter than clean signal ({})",
            noise.len(),
            clean.len()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite"));
    }

    let n = clean.len();
    let x = clean.samples.as_slice();
    let w = &noise.samples.as_slice()[..n];

    let ex: f64 = x.iter().map(|&v| to_f64(v).powi(2)).sum();
    let ew: f64 = w.iter().map(|&v| to_f64(v).powi(2)).sum();
    if ex == 0.0 {
        return Err(Error::invalid("clean signal has zero energy"));
    }
    if ew == 0.0 {
        return Err(Error::invalid("noise clip has zero energy"));
    }

    let gain = from_f64::<S>((ex / ew).sqrt() * 10f64.powf(-snr_db / 20.0));
    let scaled: Vec<S> = w.iter().map(|&v| v * gain).collect();
    let mixed: Vec<S> = x.iter().zip(&scaled).map(|(&a, &b)| a + b).collect();

    Ok((
        Wave::new(Vec1::new(mixed)?, clean.sample_rate)?,
        Wave::new(Vec1::new(scaled)?, clean.sample_rate)?,
    ))
}

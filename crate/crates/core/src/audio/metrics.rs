//! Enhancement metrics: SI-SDR and log-spectral distance.

use crate::audio::stft::{stft_magnitude, StftConfig};
use crate::audio::Wave;
use crate::error::{Error, Result};
use crate::real::{to_f64, Real};

/// Both the ceiling (near-zero residual) and the floor (near-zero target
/// projection) of the SI-SDR measurement.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The estimate is projected onto the reference (`alpha = <e,r>/||r||^2`)
/// before measuring residual energy, so any nonzero rescaling of the
/// estimate leaves the value unchanged.
pub fn si_sdr<S: Real>(estimate: &[S], reference: &[S]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::LengthMismatch {
            context: "si_sdr",
            left: estimate.len(),
            right: reference.len(),
        });
    }
    let dot: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(&e, &r)| to_f64(e) * to_f64(r))
        .sum();
    let ref_energy: f64 = reference.iter().map(|&r| to_f64(r).powi(2)).sum();
    if ref_energy == 0.0 {
        return Err(Error::invalid("si_sdr reference has zero energy"));
    }
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let residual_energy: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(&e, &r)| {
            let d = to_f64(e) - alpha * to_f64(r);
            d * d
        })
        .sum();
    if residual_energy < 1e-12 * target_energy {
        return Ok(SI_SDR_CAP_DB);
    }
    if target_energy < 1e-12 * residual_energy {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok(10.0 * (target_energy / residual_energy).log10())
}

/// RMS over frames and bins of `20*(log10(|A|+eps) - log10(|B|+eps))`,
/// `eps = 1e-8`, in dB.
pub fn log_spectral_distance<S: Real>(a: &Wave<S>, b: &Wave<S>, cfg: StftConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            context: "log_spectral_distance",
            left: a.len(),
            right: b.len(),
        });
    }
    if a.sample_rate != b.sample_rate {
        return Err(Error::invalid("log_spectral_distance sample rates differ"));
    }
    let sa = stft_magnitude(a.samples.as_slice(), cfg)?;
    let sb = stft_magnitude(b.samples.as_slice(), cfg)?;
    let mut sum_sq = 0.0;
    let count = (sa.frames * sa.bins) as f64;
    for (&ma, &mb) in sa.values().iter().zip(sb.values()) {
        let d = 20.0 * ((to_f64(ma) + 1e-8).log10() - (to_f64(mb) + 1e-8).log10());
        sum_sq += d * d;
    }
    Ok((sum_sq / count).sqrt())
}

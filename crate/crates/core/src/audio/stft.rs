//! Radix-2 FFT, Hann-windowed STFT magnitudes, and spectrogram export
//! (8-bit portable graymap plus CSV).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::audio::Wave;
use crate::error::{Error, Result};
use crate::real::{from_f64, to_f64, Real};

/// In-place iterative radix-2 FFT over split real/imaginary buffers.
pub fn fft_radix2<S: Real>(re: &mut [S], im: &mut [S]) -> Result<()> {
    let n = re.len();
    if n != im.len() {
        return Err(Error::LengthMismatch {
            context: "fft buffers",
            left: n,
            right: im.len(),
        });
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!(
            "fft length must be a power of two, got {n}"
        )));
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut half = 1;
    while half < n {
        let step = std::f64::consts::PI / half as f64;
        for start in (0..n).step_by(2 * half) {
            for k in 0..half {
                let angle = step * k as f64;
                let (wr, wi) = (
                    from_f64::<S>(angle.cos()),
                    from_f64::<S>(-angle.sin()),
                );
                let (ar, ai) = (re[start + k], im[start + k]);
                let (br, bi) = (re[start + k + half], im[start + k + half]);
                let tr = wr * br - wi * bi;
                let ti = wr * bi + wi * br;
                re[start + k] = ar + tr;
                im[start + k] = ai + ti;
                re[start + k + half] = ar - tr;
                im[start + k + half] = ai - ti;
            }
        }
        half *= 2;
    }
    Ok(())
}

/// STFT analysis parameters. The frame must be a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub frame: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            frame: 512,
            hop: 128,
        }
    }
}

impl StftConfig {
    fn validate(&self) -> Result<()> {
        if !self.frame.is_power_of_two() {
            return Err(Error::invalid(format!(
                "stft frame must be a power of two, got {}",
                self.frame
            )));
        }
        if self.hop == 0 || self.hop > self.frame {
            return Err(Error::invalid(format!(
                "stft hop must be in 1..=frame, got {}",
                self.hop
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.frame / 2 + 1
    }

    fn frame_count(&self, len: usize) -> Result<usize> {
        if len < self.frame {
            return Err(Error::invalid(format!(
                "signal length {len} shorter than one frame ({})",
                self.frame
            )));
        }
        Ok(1 + (len - self.frame) / self.hop)
    }
}

/// One-sided magnitude spectrogram, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<S: Real> {
    pub frames: usize,
    pub bins: usize,
    mags: Vec<S>,
}

impl<S: Real> Spectrogram<S> {
    pub fn mag(&self, frame: usize, bin: usize) -> S {
        assert!(frame < self.frames && bin < self.bins);
        self.mags[frame * self.bins + bin]
    }

    pub fn frame_row(&self, frame: usize) -> &[S] {
        &self.mags[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn values(&self) -> &[S] {
        &self.mags
    }
}

fn hann<S: Real>(frame: usize) -> Vec<S> {
    (0..frame)
        .map(|i| from_f64(0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / frame as f64).cos())))
        .collect()
}

/// Hann-windowed magnitude STFT over all fully covered frames.
pub fn stft_magnitude<S: Real>(x: &[S], cfg: StftConfig) -> Result<Spectrogram<S>> {
    cfg.validate()?;
    let frames = cfg.frame_count(x.len())?;
    let bins = cfg.bins();
    let window = hann::<S>(cfg.frame);

    let mut mags = Vec::with_capacity(frames * bins);
    let mut re = vec![S::zero(); cfg.frame];
    let mut im = vec![S::zero(); cfg.frame];
    for f in 0..frames {
        let start = f * cfg.hop;
        for i in 0..cfg.frame {
            re[i] = x[start + i] * window[i];
            im[i] = S::zero();
        }
        fft_radix2(&mut re, &mut im)?;
        for b in 0..bins {
            mags.push((re[b] * re[b] + im[b] * im[b]).sqrt());
        }
    }
    Ok(Spectrogram { frames, bins, mags })
}

/// Writes `<base>.pgm` (8-bit graymap, low frequencies at the bottom) and
/// `<base>.csv` (frames x bins of dB magnitudes). Returns both paths.
pub fn spectrogram_export<S: Real>(
    wave: &Wave<S>,
    cfg: StftConfig,
    out_base: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let spec = stft_magnitude(wave.samples.as_slice(), cfg)?;
    let db: Vec<f64> = spec
        .values()
        .iter()
        .map(|&m| 20.0 * (to_f64(m) + 1e-8).log10())
        .collect();
    let lo = db.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;

    let pgm_path = out_base.with_extension("pgm");
    let csv_path = out_base.with_extension("csv");

    let mut pgm = Vec::with_capacity(spec.frames * spec.bins + 32);
    pgm.extend_from_slice(format!("P5\n{} {}\n255\n", spec.frames, spec.bins).as_bytes());
    for row in 0..spec.bins {
        let bin = spec.bins - 1 - row; // top row = highest frequency
        for frame in 0..spec.frames {
            let v = db[frame * spec.bins + bin];
            let gray = if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            };
            pgm.push(gray);
        }
    }
    fs::File::create(&pgm_path)?.write_all(&pgm)?;

    let mut csv = String::new();
    for frame in 0..spec.frames {
        for bin in 0..spec.bins {
            if bin > 0 {
                csv.push(',');
            }
            csv.push_str(&format!("{:.6}", db[frame * spec.bins + bin]));
        }
        csv.push('\n');
    }
    fs::File::create(&csv_path)?.write_all(csv.as_bytes())?;

    Ok((pgm_path, csv_path))
}

//! Deterministic synthetic corpora: desk-scale stand-ins for recorded
//! speech and ambience clips.

use crate::audio::{Wave, DEFAULT_SAMPLE_RATE};
use crate::error::Result;
use crate::numerics::{mix, Rng, Vec1};
use crate::real::{from_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Sum of 3..=8 harmonics with vibrato and a slow amplitude envelope.
    HarmonicVoiced,
    /// Low-passed Gaussian noise under a slow amplitude modulation.
    AmNoise,
    /// Mostly silence with one voiced burst.
    SilenceMixed,
}

impl SynthKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "harmonic-voiced" => Some(SynthKind::HarmonicVoiced),
            "am-noise" => Some(SynthKind::AmNoise),
            "silence-mixed" => Some(SynthKind::SilenceMixed),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::HarmonicVoiced => "harmonic-voiced",
            SynthKind::AmNoise => "am-noise",
            SynthKind::SilenceMixed => "silence-mixed",
        }
    }
}

/// Generates `n` clips of `len` samples each, deterministically from the
/// seed, peak-normalized to 0.5.
pub fn synth_corpus<S: Real>(
    kind: SynthKind,
    n: usize,
    len: usize,
    seed: u64,
) -> Result<Vec<Wave<S>>> {
    let kind_tag = match kind {
        SynthKind::HarmonicVoiced => 1,
        SynthKind::AmNoise => 2,
        SynthKind::SilenceMixed => 3,
    };
    (0..n)
        .map(|i| {
            let mut rng = Rng::from_seed(mix(seed, (kind_tag << 32) | i as u64));
            let samples = match kind {
                SynthKind::HarmonicVoiced => harmonic_voiced(len, &mut rng),
                SynthKind::AmNoise => am_noise(len, &mut rng),
                SynthKind::SilenceMixed => silence_mixed(len, &mut rng),
            };
            Wave::new(Vec1::new(normalize_peak(samples))?, DEFAULT_SAMPLE_RATE)
        })
        .collect()
}

fn normalize_peak<S: Real>(mut x: Vec<S>) -> Vec<S> {
    let peak = x.iter().fold(S::zero(), |m, &v| m.max(v.abs()));
    if peak > S::zero() {
        let g = from_f64::<S>(0.5) / peak;
        for v in &mut x {
            *v *= g;
        }
    }
    x
}

fn harmonic_voiced<S: Real>(len: usize, rng: &mut Rng) -> Vec<S> {
    let fs = DEFAULT_SAMPLE_RATE as f64;
    let f0 = rng.uniform_in(80.0, 240.0);
    let harmonics = 3 + (rng.below(6)); // 3..=8
    let vib_rate = rng.uniform_in(4.0, 7.0);
    let vib_depth = rng.uniform_in(0.005, 0.02);
    let env_rate = rng.uniform_in(1.0, 3.0);
    let phases: Vec<f64> = (0..harmonics)
        .map(|_| rng.uniform_in(0.0, std::f64::consts::TAU))
        .collect();

    let mut phase = 0.0;
    (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            let f_inst = f0 * (1.0 + vib_depth * (std::f64::consts::TAU * vib_rate * t).sin());
            phase += std::f64::consts::TAU * f_inst / fs;
            let env = 0.6 + 0.4 * (std::f64::consts::TAU * env_rate * t).sin();
            let mut s = 0.0;
            for (k, ph) in phases.iter().enumerate() {
                let amp = 1.0 / (k + 1) as f64;
                s += amp * ((k + 1) as f64 * phase + ph).sin();
            }
            from_f64(env * s)
        })
        .collect()
}

fn am_noise<S: Real>(len: usize, rng: &mut Rng) -> Vec<S> {
    let fs = DEFAULT_SAMPLE_RATE as f64;
    let pole = rng.uniform_in(0.8, 0.95);
    let am_rate = rng.uniform_in(0.5, 2.0);
    let mut state = 0.0;
    (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            state = pole * state + (1.0 - pole) * rng.gauss_f64();
            let env = 0.7 + 0.3 * (std::f64::consts::TAU * am_rate * t).sin();
            from_f64(env * state)
        })
        .collect()
}

fn silence_mixed<S: Real>(len: usize, rng: &mut Rng) -> Vec<S> {
    let burst_len = (len / 3).max(1);
    let start = if len > burst_len {
        rng.below(len - burst_len)
    } else {
        0
    };
    let burst: Vec<S> = harmonic_voiced(burst_len, rng);
    let mut x = vec![S::zero(); len];
    let fade = (burst_len / 8).max(1);
    for (j, &b) in burst.iter().enumerate() {
        let ramp_in = ((j + 1) as f64 / fade as f64).min(1.0);
        let ramp_out = ((burst_len - j) as f64 / fade as f64).min(1.0);
        x[start + j] = b * from_f64::<S>(ramp_in * ramp_out);
    }
    x
}

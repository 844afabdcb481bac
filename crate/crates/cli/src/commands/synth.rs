//! `synth`: builds the synthetic working set under the corpus directory.
//!
//! ```text
//! clean_00.wav ...                 clean clips (peak 0.5)
//! snr_<db>/noisy_00.wav ...        mixtures at that SNR
//! snr_<db>/train_noise_00.wav ...  matched-level noise for `train-noise`
//! ```

use std::fs;

use anyhow::Result;
use gdse_core::audio::{mix_at_snr, synth_corpus, write_wav, Wave};
use gdse_core::numerics::{mix, Rng, Vec1};

use crate::config::{snr_label, Config};

pub fn run(cfg: &Config) -> Result<()> {
    let corpus = cfg.corpus_dir();
    fs::create_dir_all(&corpus)?;

    let mut clean =
        synth_corpus::<f64>(cfg.synth_kind(), cfg.io.clips, cfg.io.clip_len, cfg.io.seed)?;
    for w in &mut clean {
        w.sample_rate = cfg.io.sample_rate;
    }
    for (i, w) in clean.iter().enumerate() {
        write_wav(w, &corpus.join(format!("clean_{i:02}.wav")))?;
    }
    println!(
        "wrote {} clean {} clips to {}",
        clean.len(),
        cfg.io.kind,
        corpus.display()
    );

    for (si, &snr) in cfg.io.snrs.iter().enumerate() {
        let dir = corpus.join(format!("snr_{}", snr_label(snr)));
        fs::create_dir_all(&dir)?;
        for (i, x0) in clean.iter().enumerate() {
            let tag = |purpose: u64| mix(mix(cfg.io.seed, (si as u64) * 2 + purpose), i as u64);
            let mut nrng = Rng::from_seed(tag(0));
            let noise = Wave::new(
                Vec1::from_raw(nrng.gauss_vec::<f64>(x0.len())),
                cfg.io.sample_rate,
            )?;
            let (noisy, scaled) = mix_at_snr(x0, &noise, snr)?;
            write_wav(&noisy, &dir.join(format!("noisy_{i:02}.wav")))?;

            // Noise-training clip: fresh white noise at the level actually
            // mixed in, standing in for noise-only material captured next to
            // this utterance.
            let sigma = (scaled.samples.energy() / scaled.len() as f64).sqrt();
            let mut trng = Rng::from_seed(tag(1));
            let train: Vec<f64> = trng
                .gauss_vec::<f64>(cfg.noise_len())
                .into_iter()
                .map(|v| v * sigma)
                .collect();
            let train = Wave::new(Vec1::from_raw(train), cfg.io.sample_rate)?;
            write_wav(&train, &dir.join(format!("train_noise_{i:02}.wav")))?;
        }
        println!(
            "wrote {} mixtures and noise clips at {} dB to {}",
            clean.len(),
            snr,
            dir.display()
        );
    }
    Ok(())
}

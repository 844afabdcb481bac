//! `sweep`: calibrates `lambda_max x gamma` per SNR level on held-out
//! synthetic clips. Reports SI-SDR and log-spectral distance per grid point
//! and leaves the choice of selection metric to the operator.

use anyhow::{bail, Context, Result};
use gdse_core::audio::{
    log_spectral_distance, mix_at_snr, si_sdr, synth_corpus, StftConfig, Wave,
};
use gdse_core::guided::enhance;
use gdse_core::noise_model::train_noise_model;
use gdse_core::numerics::{mix, Rng, Vec1};
use gdse_core::schedules::{GuidanceSchedule, ScheduleFingerprint};
use gdse_core::weights::load_backbone;

use crate::config::{snr_label, Config};

pub fn run(cfg: &Config) -> Result<()> {
    let sw = cfg
        .sweep
        .as_ref()
        .context("config has no [sweep] section")?;
    let sched = cfg.schedule()?;
    let backbone_path = cfg.io.out_dir.join("backbone.gdse");
    let (net, net_fp) = load_backbone::<f64>(&backbone_path).with_context(|| {
        format!(
            "loading {}; run `gdse train-backbone` first",
            backbone_path.display()
        )
    })?;
    let fp = ScheduleFingerprint::of(&sched);
    if net_fp != fp {
        bail!(
            "backbone {} was trained on schedule {net_fp}, but the config resolves {fp}",
            backbone_path.display()
        );
    }

    let stft = StftConfig::default();
    let opts = cfg.enhance_options();
    let mut csv = String::from(
        "snr_db,lambda_max,gamma,clip,si_sdr_in_db,si_sdr_out_db,delta_si_sdr_db,lsd_in_db,lsd_out_db\n",
    );

    for (si, &snr) in cfg.io.snrs.iter().enumerate() {
        // Calibration clips come from a different seed stream than `synth`,
        // so the grid is scored on data the backbone never saw.
        let clean = synth_corpus::<f64>(
            cfg.synth_kind(),
            sw.clips,
            cfg.io.clip_len,
            mix(cfg.io.seed, 0xCA11 + si as u64),
        )?;
        for (j, x0) in clean.iter().enumerate() {
            let mut nrng = Rng::from_seed(mix(mix(cfg.io.seed, 0xD00 + si as u64), j as u64));
            let noise = Wave::new(
                Vec1::from_raw(nrng.gauss_vec::<f64>(x0.len())),
                x0.sample_rate,
            )?;
            let (noisy, scaled) = mix_at_snr(x0, &noise, snr)?;

            let sigma = (scaled.samples.energy() / scaled.len() as f64).sqrt();
            let train: Vec<f64> = nrng
                .gauss_vec::<f64>(cfg.noise_len())
                .into_iter()
                .map(|v| v * sigma)
                .collect();
            let mut trng = Rng::from_seed(mix(cfg.noise_model.seed, (si * 1000 + j) as u64));
            let (bank, _) =
                train_noise_model(&Vec1::from_raw(train), &sched, &cfg.noise_train(), &mut trng)?;

            let si_in = si_sdr(noisy.samples.as_slice(), x0.samples.as_slice())?;
            let lsd_in = log_spectral_distance(&noisy, x0, stft)?;
            for &lambda in &sw.lambdas {
                for &gamma in &sw.gammas {
                    let g =
                        GuidanceSchedule::new(&sched, lambda, gamma, cfg.guidance.ratio_inverted)?;
                    let mut rng = Rng::from_seed(cfg.io.seed);
                    let out = enhance(&noisy.samples, &net, &bank, &sched, &g, &mut rng, &opts)?;
                    let est = Wave::new(out.output, x0.sample_rate)?;
                    let si_out = si_sdr(est.samples.as_slice(), x0.samples.as_slice())?;
                    let lsd_out = log_spectral_distance(&est, x0, stft)?;
                    csv.push_str(&format!(
                        "{snr},{lambda},{gamma},{j},{si_in},{si_out},{},{lsd_in},{lsd_out}\n",
                        si_out - si_in
                    ));
                    println!(
                        "snr {:>4} dB  lambda {lambda:<5}  gamma {gamma:<4}  clip {j}: \
                         dSI-SDR {:+.3} dB, LSD {:.3} -> {:.3}",
                        snr_label(snr),
                        si_out - si_in,
                        lsd_in,
                        lsd_out
                    );
                }
            }
        }
    }

    let path = cfg.io.out_dir.join("sweep.csv");
    super::write_text(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

//! `enhance`: guided reverse diffusion on one noisy file. Writes the
//! enhanced WAV, a per-step diagnostics CSV, and spectrograms of both the
//! input and the output.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use gdse_core::audio::{read_wav, spectrogram_export, write_wav, StftConfig, Wave};
use gdse_core::guided::enhance;
use gdse_core::numerics::Rng;
use gdse_core::schedules::ScheduleFingerprint;
use gdse_core::weights::{load_backbone, load_noise_bank};

use crate::config::Config;

pub fn run(cfg: &Config, noisy: &Path, backbone: &Path, bank_path: &Path) -> Result<()> {
    let sched = cfg.schedule()?;
    let fp = ScheduleFingerprint::of(&sched);
    let (net, net_fp) = load_backbone::<f64>(backbone)?;
    if net_fp != fp {
        bail!(
            "backbone {} was trained on schedule {net_fp}, but the config resolves {fp}",
            backbone.display()
        );
    }
    // The bank's own fingerprint is checked against the schedule in `enhance`.
    let bank = load_noise_bank::<f64>(bank_path)?;
    let y = read_wav::<f64>(noisy)?;

    let gsched = cfg.guidance_schedule(&sched)?;
    let opts = cfg.enhance_options();
    let mut rng = Rng::from_seed(cfg.io.seed);
    println!(
        "enhancing {} ({} samples, T={}, lambda_max={}, gamma={})",
        noisy.display(),
        y.len(),
        sched.t_count(),
        cfg.guidance.lambda_max,
        cfg.guidance.gamma
    );
    let started = Instant::now();
    let outcome = enhance(&y.samples, &net, &bank, &sched, &gsched, &mut rng, &opts)?;
    let secs = started.elapsed().as_secs_f64();

    let stem = super::file_stem(noisy)?;
    let out_wav = cfg.io.out_dir.join(format!("{stem}.enhanced.wav"));
    let enhanced = Wave::new(outcome.output, y.sample_rate)?;
    write_wav(&enhanced, &out_wav)?;

    let mut csv = String::from("t,loss_t,grad_norm,s_t\n");
    for d in &outcome.diags {
        csv.push_str(&format!("{},{},{},{}\n", d.t, d.loss, d.grad_norm, d.scale));
    }
    let diag_path = cfg.io.out_dir.join(format!("{stem}.diag.csv"));
    super::write_text(&diag_path, &csv)?;

    let clipped = outcome.diags.iter().filter(|d| d.clipped).count();
    if clipped > 0 {
        println!(
            "guidance gradient clipped at {clipped} of {} steps (cap {})",
            outcome.diags.len(),
            opts.grad_clip
        );
    }

    // The export derives its .pgm/.csv names with `with_extension`, so the
    // base names must stay dot-free.
    let stft = StftConfig::default();
    if y.len() >= stft.frame {
        spectrogram_export(&y, stft, &cfg.io.out_dir.join(format!("{stem}_noisy_spec")))?;
        spectrogram_export(
            &enhanced,
            stft,
            &cfg.io.out_dir.join(format!("{stem}_enhanced_spec")),
        )?;
    }
    println!(
        "wrote {} and {} ({secs:.1}s)",
        out_wav.display(),
        diag_path.display()
    );
    Ok(())
}

//! `eval`: SI-SDR and log-spectral distance for an enhanced estimate, with
//! the unprocessed mixture as the baseline row.

use std::path::Path;

use anyhow::{bail, Result};
use gdse_core::audio::{log_spectral_distance, read_wav, si_sdr, StftConfig};

use crate::config::Config;

pub fn run(cfg: &Config, reference: &Path, estimate: &Path, noisy: &Path) -> Result<()> {
    let r = read_wav::<f64>(reference)?;
    let e = read_wav::<f64>(estimate)?;
    let n = read_wav::<f64>(noisy)?;
    for (name, w) in [("estimate", &e), ("noisy", &n)] {
        if w.len() != r.len() {
            bail!(
                "{name} has {} samples, the reference has {}",
                w.len(),
                r.len()
            );
        }
        if w.sample_rate != r.sample_rate {
            bail!(
                "{name} is {} Hz, the reference is {} Hz",
                w.sample_rate,
                r.sample_rate
            );
        }
    }

    let stft = StftConfig::default();
    let si_noisy = si_sdr(n.samples.as_slice(), r.samples.as_slice())?;
    let si_est = si_sdr(e.samples.as_slice(), r.samples.as_slice())?;
    let lsd_noisy = log_spectral_distance(&n, &r, stft)?;
    let lsd_est = log_spectral_distance(&e, &r, stft)?;

    println!("{:<10} {:>12} {:>10}", "input", "si_sdr_db", "lsd_db");
    println!("{:<10} {:>12.3} {:>10.3}", "noisy", si_noisy, lsd_noisy);
    println!("{:<10} {:>12.3} {:>10.3}", "enhanced", si_est, lsd_est);
    println!(
        "{:<10} {:>+12.3} {:>+10.3}",
        "delta",
        si_est - si_noisy,
        lsd_est - lsd_noisy
    );

    let stem = super::file_stem(estimate)?;
    let csv = format!(
        "input,si_sdr_db,lsd_db\nnoisy,{si_noisy},{lsd_noisy}\nenhanced,{si_est},{lsd_est}\ndelta,{},{}\n",
        si_est - si_noisy,
        lsd_est - lsd_noisy
    );
    let path = cfg.io.out_dir.join(format!("eval_{stem}.csv"));
    super::write_text(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

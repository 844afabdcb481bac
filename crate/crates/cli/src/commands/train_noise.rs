//! `train-noise`: fits the per-step noise-model bank to a noise-only clip
//! and saves the bank plus a per-step validation-loss table.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use gdse_core::audio::read_wav;
use gdse_core::noise_model::train_noise_model;
use gdse_core::numerics::Rng;
use gdse_core::weights::save_noise_bank;

use crate::config::Config;

pub fn run(cfg: &Config, noise_path: &Path) -> Result<()> {
    let clip = read_wav::<f64>(noise_path)?;
    let sched = cfg.schedule()?;
    let tcfg = cfg.noise_train();
    let mut rng = Rng::from_seed(cfg.noise_model.seed);
    println!(
        "training {} step models on {} samples ({} epochs each)",
        sched.t_count(),
        clip.len(),
        tcfg.epochs
    );
    let started = Instant::now();
    let (bank, reports) = train_noise_model(&clip.samples, &sched, &tcfg, &mut rng)?;
    let secs = started.elapsed().as_secs_f64();

    let stem = super::file_stem(noise_path)?;
    let weights = cfg.io.out_dir.join(format!("{stem}.gdse"));
    save_noise_bank(&weights, &bank)?;

    let mut csv = String::from("t,initial_val_nll,final_val_nll,reverted,aborted\n");
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.t,
            r.initial_val_nll,
            r.final_val_nll,
            r.reverted,
            r.aborted.is_some()
        ));
        if let Some(msg) = &r.aborted {
            println!("step {} aborted early: {msg}", r.t);
        }
    }
    let csv_path = cfg.io.out_dir.join(format!("{stem}_loss.csv"));
    super::write_text(&csv_path, &csv)?;

    let mean_final = reports.iter().map(|r| r.final_val_nll).sum::<f64>() / reports.len() as f64;
    println!("noise bank mean held-out NLL {mean_final:.4} per sample ({secs:.1}s)");
    println!("wrote {} and {}", weights.display(), csv_path.display());
    Ok(())
}

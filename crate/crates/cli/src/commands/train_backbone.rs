//! `train-backbone`: fits the noise-prediction net on the clean corpus and
//! saves the weights plus a per-epoch loss trace.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gdse_core::audio::read_wav;
use gdse_core::diffusion::train_backbone;
use gdse_core::numerics::{Rng, Vec1};
use gdse_core::schedules::ScheduleFingerprint;
use gdse_core::weights::save_backbone;

use crate::config::Config;

pub fn run(cfg: &Config) -> Result<()> {
    let corpus_dir = cfg.corpus_dir();
    let mut paths: Vec<PathBuf> = fs::read_dir(&corpus_dir)
        .with_context(|| format!("reading corpus directory {}", corpus_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("clean_") && n.ends_with(".wav"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!(
            "no clean_*.wav in {}; run `gdse synth` first",
            corpus_dir.display()
        );
    }

    let clips: Vec<Vec1<f64>> = paths
        .iter()
        .map(|p| Ok(read_wav::<f64>(p)?.samples))
        .collect::<Result<_>>()?;
    let sched = cfg.schedule()?;
    let tcfg = cfg.backbone_train();
    let mut rng = Rng::from_seed(cfg.backbone.seed);
    println!(
        "training backbone on {} clips ({} epochs, batch {})",
        clips.len(),
        tcfg.epochs,
        tcfg.batch
    );
    let started = Instant::now();
    let (net, trace) = train_backbone(&clips, &sched, &tcfg, &mut rng)?;
    let secs = started.elapsed().as_secs_f64();

    let weights = cfg.io.out_dir.join("backbone.gdse");
    save_backbone(&weights, &net, &ScheduleFingerprint::of(&sched))?;

    let mut csv = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    let trace_path = cfg.io.out_dir.join("backbone_loss.csv");
    super::write_text(&trace_path, &csv)?;

    println!(
        "backbone loss {:.6} -> {:.6} over {} epochs ({secs:.1}s)",
        trace.first().copied().unwrap_or(f64::NAN),
        trace.last().copied().unwrap_or(f64::NAN),
        trace.len()
    );
    println!("wrote {} and {}", weights.display(), trace_path.display());
    Ok(())
}

//! Strict TOML configuration.
//!
//! Unknown keys are rejected, seeds are mandatory (no wall-clock fallback),
//! and the resolved document can be rendered back to TOML so every run logs
//! exactly the settings it used.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use gdse_core::audio::SynthKind;
use gdse_core::diffusion::{BackboneTrainConfig, EpsNetConfig};
use gdse_core::guided::EnhanceOptions;
use gdse_core::noise_model::{DrawMode, NoiseNetConfig, NoiseTrainConfig, RebuildMode};
use gdse_core::schedules::{DiffusionSchedule, GuidanceSchedule};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleSection,
    pub backbone: BackboneSection,
    pub noise_model: NoiseSection,
    pub guidance: GuidanceSection,
    pub io: IoSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub t: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSection {
    /// Dilated conv layers; layer `i` uses dilation `2^i`.
    #[serde(default = "defaults::backbone_layers")]
    pub layers: usize,
    #[serde(default = "defaults::backbone_channels")]
    pub channels: usize,
    #[serde(default = "defaults::backbone_kernel")]
    pub kernel: usize,
    #[serde(default = "defaults::backbone_emb_dim")]
    pub emb_dim: usize,
    #[serde(default = "defaults::backbone_epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::backbone_lr")]
    pub lr: f64,
    #[serde(default = "defaults::backbone_batch")]
    pub batch: usize,
    #[serde(default = "defaults::backbone_segment")]
    pub segment: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "defaults::noise_channels")]
    pub channels: usize,
    #[serde(default = "defaults::noise_kernel")]
    pub kernel: usize,
    /// Causal conv layers; layer `i` uses dilation `2^i`.
    #[serde(default = "defaults::noise_layers")]
    pub layers: usize,
    #[serde(default = "defaults::noise_epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::noise_lr")]
    pub lr: f64,
    #[serde(default = "defaults::draw_mode")]
    pub draw_mode: DrawModeKey,
    #[serde(default = "defaults::rebuild")]
    pub rebuild: RebuildKey,
    #[serde(default = "defaults::train_fraction")]
    pub train_fraction: f64,
    pub seed: u64,
}

/// How the Gaussian part of the combined noise is drawn when building
/// training targets: one shared draw per clip or one draw per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrawModeKey {
    Scalar,
    Vector,
}

/// Whether training targets are built once per step or redrawn every epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RebuildKey {
    Once,
    EveryEpoch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSection {
    pub lambda_max: f64,
    pub gamma: f64,
    #[serde(default)]
    pub ratio_inverted: bool,
    #[serde(default = "defaults::grad_clip")]
    pub grad_clip: f64,
    #[serde(default = "defaults::t1_noise")]
    pub t1_noise: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
    /// Where `synth` writes and the trainers read; default `<out_dir>/corpus`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default = "defaults::sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "defaults::clips")]
    pub clips: usize,
    /// Samples per synthetic clean clip.
    #[serde(default = "defaults::clip_len")]
    pub clip_len: usize,
    /// Samples per noise-training clip; default `2 * clip_len`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_len: Option<usize>,
    #[serde(default = "defaults::kind")]
    pub kind: String,
    #[serde(default = "defaults::snrs")]
    pub snrs: Vec<f64>,
    /// Thread cap for parallel sections; default: all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Calibration clips per SNR level.
    #[serde(default = "defaults::sweep_clips")]
    pub clips: usize,
}

mod defaults {
    use std::path::PathBuf;

    use super::{DrawModeKey, RebuildKey};

    pub fn backbone_layers() -> usize {
        6
    }
    pub fn backbone_channels() -> usize {
        16
    }
    pub fn backbone_kernel() -> usize {
        3
    }
    pub fn backbone_emb_dim() -> usize {
        32
    }
    pub fn backbone_epochs() -> usize {
        400
    }
    pub fn backbone_lr() -> f64 {
        2e-3
    }
    pub fn backbone_batch() -> usize {
        16
    }
    pub fn backbone_segment() -> usize {
        2048
    }
    pub fn noise_channels() -> usize {
        2
    }
    pub fn noise_kernel() -> usize {
        9
    }
    pub fn noise_layers() -> usize {
        4
    }
    pub fn noise_epochs() -> usize {
        60
    }
    pub fn noise_lr() -> f64 {
        5e-3
    }
    pub fn draw_mode() -> DrawModeKey {
        DrawModeKey::Vector
    }
    pub fn rebuild() -> RebuildKey {
        RebuildKey::Once
    }
    pub fn train_fraction() -> f64 {
        0.8
    }
    pub fn grad_clip() -> f64 {
        1e3
    }
    pub fn t1_noise() -> bool {
        true
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn sample_rate() -> u32 {
        16_000
    }
    pub fn clips() -> usize {
        8
    }
    pub fn clip_len() -> usize {
        16_384
    }
    pub fn kind() -> String {
        "harmonic-voiced".to_string()
    }
    pub fn snrs() -> Vec<f64> {
        vec![10.0, 5.0, 0.0, -5.0]
    }
    pub fn sweep_clips() -> usize {
        1
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces every seed in the document (the `--seed` flag).
    pub fn override_seed(&mut self, seed: u64) {
        self.backbone.seed = seed;
        self.noise_model.seed = seed;
        self.io.seed = seed;
    }

    pub fn render(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.backbone.layers == 0 || self.backbone.layers > 16 {
            bail!("backbone.layers must be in 1..=16");
        }
        if self.noise_model.layers == 0 || self.noise_model.layers > 16 {
            bail!("noise_model.layers must be in 1..=16");
        }
        if self.io.clips == 0 {
            bail!("io.clips must be >= 1");
        }
        if self.io.clip_len == 0 {
            bail!("io.clip_len must be >= 1");
        }
        if self.io.snrs.is_empty() {
            bail!("io.snrs must list at least one SNR level");
        }
        if SynthKind::parse(&self.io.kind).is_none() {
            bail!(
                "io.kind {:?} is not one of harmonic-voiced, am-noise, silence-mixed",
                self.io.kind
            );
        }
        if let Some(sw) = &self.sweep {
            if sw.lambdas.is_empty() || sw.gammas.is_empty() {
                bail!("sweep.lambdas and sweep.gammas must be nonempty");
            }
            if sw.clips == 0 {
                bail!("sweep.clips must be >= 1");
            }
        }
        // Schedule and guidance parameters get their full range checks from
        // the constructors; build both once so bad values fail at load time.
        let sched = self.schedule()?;
        self.guidance_schedule(&sched)?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        Ok(DiffusionSchedule::linear(
            self.schedule.t,
            self.schedule.beta_start,
            self.schedule.beta_end,
        )?)
    }

    pub fn guidance_schedule(&self, sched: &DiffusionSchedule) -> Result<GuidanceSchedule> {
        Ok(GuidanceSchedule::new(
            sched,
            self.guidance.lambda_max,
            self.guidance.gamma,
            self.guidance.ratio_inverted,
        )?)
    }

    pub fn enhance_options(&self) -> EnhanceOptions {
        EnhanceOptions {
            t1_noise: self.guidance.t1_noise,
            grad_clip: self.guidance.grad_clip,
            ..EnhanceOptions::default()
        }
    }

    pub fn synth_kind(&self) -> SynthKind {
        SynthKind::parse(&self.io.kind).expect("validated at load")
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.io
            .corpus_dir
            .clone()
            .unwrap_or_else(|| self.io.out_dir.join("corpus"))
    }

    pub fn noise_len(&self) -> usize {
        self.io.noise_len.unwrap_or(2 * self.io.clip_len)
    }

    pub fn backbone_train(&self) -> BackboneTrainConfig {
        BackboneTrainConfig {
            net: EpsNetConfig {
                channels: self.backbone.channels,
                kernel: self.backbone.kernel,
                dilations: (0..self.backbone.layers).map(|i| 1usize << i).collect(),
                emb_dim: self.backbone.emb_dim,
            },
            epochs: self.backbone.epochs,
            lr: self.backbone.lr,
            batch: self.backbone.batch,
            segment: self.backbone.segment,
        }
    }

    pub fn noise_train(&self) -> NoiseTrainConfig {
        NoiseTrainConfig {
            net: NoiseNetConfig {
                channels: self.noise_model.channels,
                kernel: self.noise_model.kernel,
                dilations: (0..self.noise_model.layers).map(|i| 1usize << i).collect(),
            },
            epochs: self.noise_model.epochs,
            lr: self.noise_model.lr,
            draw_mode: match self.noise_model.draw_mode {
                DrawModeKey::Scalar => DrawMode::Scalar,
                DrawModeKey::Vector => DrawMode::Vector,
            },
            rebuild: match self.noise_model.rebuild {
                RebuildKey::Once => RebuildMode::Once,
                RebuildKey::EveryEpoch => RebuildMode::EveryEpoch,
            },
            train_fraction: self.noise_model.train_fraction,
        }
    }
}

/// `5` -> `"5"`, `-5` -> `"-5"`, `2.5` -> `"2.5"`: directory-name friendly.
pub fn snr_label(snr_db: f64) -> String {
    if snr_db == snr_db.trunc() {
        format!("{}", snr_db as i64)
    } else {
        format!("{snr_db}")
    }
}

//! Subcommand implementations. Each takes the resolved [`Config`] plus its
//! positional inputs and writes artifacts under `io.out_dir`.
//!
//! [`Config`]: crate::config::Config

mod enhance;
mod eval;
mod sweep;
mod synth;
mod train_backbone;
mod train_noise;

pub use enhance::run as enhance;
pub use eval::run as eval;
pub use sweep::run as sweep;
pub use synth::run as synth;
pub use train_backbone::run as train_backbone;
pub use train_noise::run as train_noise;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn file_stem(path: &Path) -> Result<&str> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .with_context(|| format!("{} has no usable file stem", path.display()))
}

//! Portable binary weights files.
//!
//! Layout (all integers little-endian):
//! magic `GDSE`, version `u16`, schedule fingerprint (`t_count u32`,
//! `beta_start` bits `u64`, `beta_end` bits `u64`, alpha-bar hash `u64`),
//! kind tag `u8`, kind-specific shape metadata, block count `u32`, then
//! named parameter blocks (`name_len u16` + UTF-8 name, `rows u32`,
//! `cols u32`, values as 8-byte floats).

use std::fs;
use std::path::Path;

use crate::diffusion::{EpsNetConfig, EpsilonNet};
use crate::error::{Error, Result};
use crate::noise_model::{NoiseModel, NoiseNetConfig, StepModel};
use crate::numerics::Param;
use crate::real::{from_f64, to_f64, Real};
use crate::schedules::ScheduleFingerprint;

const MAGIC: &[u8; 4] = b"GDSE";
const VERSION: u16 = 1;
const KIND_BACKBONE: u8 = 1;
const KIND_NOISE_BANK: u8 = 2;

fn err(msg: impl Into<String>) -> Error {
    Error::Weights(msg.into())
}

// ---------------------------------------------------------------- encoding

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_usize_u32(buf: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| err(format!("{what} does not fit in u32")))?;
    put_u32(buf, v);
    Ok(())
}

fn put_header(buf: &mut Vec<u8>, fp: &ScheduleFingerprint, kind: u8) {
    buf.extend_from_slice(MAGIC);
    put_u16(buf, VERSION);
    put_u32(buf, fp.t_count);
    put_u64(buf, fp.beta_start_bits);
    put_u64(buf, fp.beta_end_bits);
    put_u64(buf, fp.alpha_bar_hash);
    buf.push(kind);
}

fn put_block<S: Real>(buf: &mut Vec<u8>, name: &str, param: &Param<S>) -> Result<()> {
    let name_len =
        u16::try_from(name.len()).map_err(|_| err(format!("block name too long: {name}")))?;
    put_u16(buf, name_len);
    buf.extend_from_slice(name.as_bytes());
    put_usize_u32(buf, param.rows(), "block rows")?;
    put_usize_u32(buf, param.cols(), "block cols")?;
    for &v in &param.values {
        put_u64(buf, to_f64(v).to_bits());
    }
    Ok(())
}

// ---------------------------------------------------------------- decoding

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| err(format!("file truncated while reading {what}")))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(err(format!(
                "{} trailing bytes after the last block",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }

    fn header(&mut self, expected_kind: u8) -> Result<ScheduleFingerprint> {
        let magic = self.take(4, "magic")?;
        if magic != MAGIC {
            return Err(err("not a GDSE weights file"));
        }
        let version = self.u16("version")?;
        if version != VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let fp = ScheduleFingerprint {
            t_count: self.u32("fingerprint t_count")?,
            beta_start_bits: self.u64("fingerprint beta_start")?,
            beta_end_bits: self.u64("fingerprint beta_end")?,
            alpha_bar_hash: self.u64("fingerprint hash")?,
        };
        let kind = self.u8("kind tag")?;
        if kind != expected_kind {
            let name = |k| match k {
                KIND_BACKBONE => "a backbone",
                KIND_NOISE_BANK => "a noise-model bank",
                _ => "an unknown model kind",
            };
            return Err(err(format!(
                "file holds {}, expected {}",
                name(kind),
                name(expected_kind)
            )));
        }
        Ok(fp)
    }

    fn block<S: Real>(&mut self) -> Result<(String, Param<S>)> {
        let name_len = self.u16("block name length")? as usize;
        let name = std::str::from_utf8(self.take(name_len, "block name")?)
            .map_err(|_| err("block name is not UTF-8"))?
            .to_string();
        let rows = self.u32("block rows")? as usize;
        let cols = self.u32("block cols")? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| err(format!("block {name}: shape overflow")))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let v = f64::from_bits(self.u64("block values")?);
            if !v.is_finite() {
                return Err(err(format!("block {name}: non-finite value")));
            }
            values.push(from_f64::<S>(v));
        }
        Ok((name.clone(), Param::new(name, rows, cols, values)))
    }
}

// ---------------------------------------------------------------- backbone

/// Serializes a backbone and the schedule fingerprint it was trained on.
pub fn save_backbone<S: Real>(
    path: &Path,
    net: &EpsilonNet<S>,
    fingerprint: &ScheduleFingerprint,
) -> Result<()> {
    let mut buf = Vec::new();
    put_header(&mut buf, fingerprint, KIND_BACKBONE);
    put_usize_u32(&mut buf, net.cfg.channels, "channels")?;
    put_usize_u32(&mut buf, net.cfg.kernel, "kernel")?;
    put_usize_u32(&mut buf, net.cfg.emb_dim, "emb_dim")?;
    put_usize_u32(&mut buf, net.cfg.dilations.len(), "dilation count")?;
    for &d in &net.cfg.dilations {
        put_usize_u32(&mut buf, d, "dilation")?;
    }
    put_usize_u32(&mut buf, net.params().len(), "block count")?;
    for p in net.params() {
        put_block(&mut buf, &p.name, p)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_backbone<S: Real>(path: &Path) -> Result<(EpsilonNet<S>, ScheduleFingerprint)> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let fp = r.header(KIND_BACKBONE)?;
    let cfg = EpsNetConfig {
        channels: r.u32("channels")? as usize,
        kernel: r.u32("kernel")? as usize,
        emb_dim: r.u32("emb_dim")? as usize,
        dilations: {
            let n = r.u32("dilation count")? as usize;
            (0..n)
                .map(|_| r.u32("dilation").map(|d| d as usize))
                .collect::<Result<_>>()?
        },
    };
    let n_blocks = r.u32("block count")? as usize;
    let mut params = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        params.push(r.block::<S>()?.1);
    }
    r.finish()?;
    let net = EpsilonNet::from_params(cfg, params)?;
    Ok((net, fp))
}

// --------------------------------------------------------------- noise bank

/// Serializes a per-step noise-model bank; each step's blocks are prefixed
/// with `t{step}.`.
pub fn save_noise_bank<S: Real>(path: &Path, nm: &NoiseModel<S>) -> Result<()> {
    let mut buf = Vec::new();
    put_header(&mut buf, &nm.fingerprint, KIND_NOISE_BANK);
    put_usize_u32(&mut buf, nm.cfg.channels, "channels")?;
    put_usize_u32(&mut buf, nm.cfg.kernel, "kernel")?;
    put_usize_u32(&mut buf, nm.cfg.dilations.len(), "dilation count")?;
    for &d in &nm.cfg.dilations {
        put_usize_u32(&mut buf, d, "dilation")?;
    }
    let per_step = nm
        .steps()
        .first()
        .map(|s| s.params().len())
        .unwrap_or_default();
    put_usize_u32(&mut buf, nm.t_count() * per_step, "block count")?;
    for (i, step) in nm.steps().iter().enumerate() {
        for p in step.params() {
            put_block(&mut buf, &format!("t{}.{}", i + 1, p.name), p)?;
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_noise_bank<S: Real>(path: &Path) -> Result<NoiseModel<S>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let fp = r.header(KIND_NOISE_BANK)?;
    let cfg = NoiseNetConfig {
        channels: r.u32("channels")? as usize,
        kernel: r.u32("kernel")? as usize,
        dilations: {
            let n = r.u32("dilation count")? as usize;
            (0..n)
                .map(|_| r.u32("dilation").map(|d| d as usize))
                .collect::<Result<_>>()?
        },
    };
    let n_blocks = r.u32("block count")? as usize;
    let t_count = fp.t_count as usize;
    if t_count == 0 || !n_blocks.is_multiple_of(t_count) {
        return Err(err(format!(
            "{n_blocks} blocks cannot cover {t_count} steps evenly"
        )));
    }
    let per_step = n_blocks / t_count;
    let mut steps = Vec::with_capacity(t_count);
    for t in 1..=t_count {
        let prefix = format!("t{t}.");
        let mut params = Vec::with_capacity(per_step);
        for _ in 0..per_step {
            let (name, mut p) = r.block::<S>()?;
            let stripped = name.strip_prefix(&prefix).ok_or_else(|| {
                err(format!("block {name} does not belong to step {t}"))
            })?;
            p.name = stripped.to_string();
            params.push(p);
        }
        steps.push(StepModel::from_params(cfg.clone(), params)?);
    }
    r.finish()?;
    NoiseModel::from_steps(cfg, fp, steps)
}

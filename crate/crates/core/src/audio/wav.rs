//! Minimal RIFF/WAVE codec: PCM 16-bit mono little-endian only.
//!
//! Floats map to int16 by `round(x * 32768)` with saturation, and back by
//! `i / 32768`, so write-then-read is exact for any value already on the
//! int16 grid.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::audio::Wave;
use crate::error::{Error, Result};
use crate::numerics::Vec1;
use crate::real::{from_f64, to_f64, Real};

const SCALE: f64 = 32768.0;

fn encode_sample(x: f64) -> i16 {
    let v = (x * SCALE).round();
    v.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

fn decode_sample<S: Real>(i: i16) -> S {
    from_f64(i as f64 / SCALE)
}

/// Writes a mono 16-bit PCM WAV file with the canonical 44-byte header.
pub fn write_wav<S: Real>(wave: &Wave<S>, path: &Path) -> Result<()> {
    let n = wave.len();
    let data_bytes = (n * 2) as u32;
    let byte_rate = wave.sample_rate * 2;

    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&wave.sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for &x in wave.samples.as_slice() {
        out.extend_from_slice(&encode_sample(to_f64(x)).to_le_bytes());
    }

    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Reads a mono 16-bit PCM WAV file; anything else is rejected with a
/// message naming the offending field.
pub fn read_wav<S: Real>(path: &Path) -> Result<Wave<S>> {
    let bytes = fs::read(path)?;
    decode_wav(&bytes).map_err(|msg| Error::Wav(format!("{}: {msg}", path.display())))
}

fn decode_wav<S: Real>(bytes: &[u8]) -> std::result::Result<Wave<S>, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }

    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err("chunk extends past end of file".into());
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err("fmt chunk too short".into());
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if format != 1 {
                    return Err(format!("unsupported encoding {format} (want PCM=1)"));
                }
                if channels != 1 {
                    return Err(format!(
                        "unsupported channel count {channels} (mono only; pre-mix to mono)"
                    ));
                }
                if bits != 16 {
                    return Err(format!("unsupported bit depth {bits} (16-bit only)"));
                }
                sample_rate = Some(rate);
            }
            b"data" => data = Some(body),
            _ => {} // skip ancillary chunks
        }
        // chunks are word-aligned
        pos = body_end + (size & 1);
    }

    let sample_rate = sample_rate.ok_or("missing fmt chunk")?;
    let data = data.ok_or("missing data chunk")?;
    if data.len() % 2 != 0 {
        return Err("data chunk has odd byte length".into());
    }
    if data.is_empty() {
        return Err("data chunk is empty".into());
    }
    let samples: Vec<S> = data
        .chunks_exact(2)
        .map(|c| decode_sample(i16::from_le_bytes([c[0], c[1]])))
        .collect();
    let samples = Vec1::new(samples).map_err(|e| e.to_string())?;
    Wave::new(samples, sample_rate).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("gdse-wav-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn ramp_round_trip_is_bit_identical() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 - 500.0) / 600.0).collect();
        let wave = Wave::from_samples(samples, 16_000).unwrap();
        let p1 = temp_path("ramp1.wav");
        let p2 = temp_path("ramp2.wav");
        write_wav(&wave, &p1).unwrap();
        let back: Wave<f64> = read_wav(&p1).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        write_wav(&back, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn saturation_at_full_scale() {
        assert_eq!(encode_sample(1.0), 32767);
        assert_eq!(encode_sample(2.5), 32767);
        assert_eq!(encode_sample(-1.0), -32768);
        assert_eq!(encode_sample(-2.5), -32768);
        assert_eq!(encode_sample(0.0), 0);
    }

    #[test]
    fn parses_hand_built_canonical_header() {
        // 44-byte header + two samples, assembled field by field
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&40u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&16384i16.to_le_bytes());
        bytes.extend_from_slice(&(-16384i16).to_le_bytes());

        let wave: Wave<f64> = decode_wav(&bytes).unwrap();
        assert_eq!(wave.sample_rate, 8000);
        assert_eq!(wave.len(), 2);
        assert_eq!(wave.samples[0], 0.5);
        assert_eq!(wave.samples[1], -0.5);
    }

    #[test]
    fn rejects_stereo_and_wrong_encoding() {
        let wave = Wave::from_samples(vec![0.0f64, 0.1], 16_000).unwrap();
        let p = temp_path("mutate.wav");
        write_wav(&wave, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();

        let mut stereo = bytes.clone();
        stereo[22] = 2; // channel count
        assert!(decode_wav::<f64>(&stereo).is_err());

        bytes[20] = 3; // IEEE float encoding tag
        assert!(decode_wav::<f64>(&bytes).is_err());
    }

    #[test]
    fn rejects_truncated_file() {
        let wave = Wave::from_samples(vec![0.25f64; 16], 16_000).unwrap();
        let p = temp_path("trunc.wav");
        write_wav(&wave, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(decode_wav::<f64>(&bytes[..30]).is_err());
        assert!(decode_wav::<f64>(&bytes[..50]).is_err());
    }

    #[test]
    fn skips_ancillary_chunks() {
        let wave = Wave::from_samples(vec![0.5f64], 16_000).unwrap();
        let p = temp_path("extra.wav");
        write_wav(&wave, &p).unwrap();
        let bytes = fs::read(&p).unwrap();

        // splice a LIST chunk between fmt and data
        let mut spliced = bytes[..36].to_vec();
        spliced.extend_from_slice(b"LIST");
        spliced.extend_from_slice(&4u32.to_le_bytes());
        spliced.extend_from_slice(b"INFO");
        spliced.extend_from_slice(&bytes[36..]);
        let riff_size = (spliced.len() - 8) as u32;
        spliced[4..8].copy_from_slice(&riff_size.to_le_bytes());

        let back: Wave<f64> = decode_wav(&spliced).unwrap();
        assert_eq!(back.samples[0], 0.5);
    }
}

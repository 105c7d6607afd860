//! Raw IQ sample files: interleaved little-endian f32 pairs (I then Q)
//! with no header, plus a `<path>.meta` sidecar holding
//! `sample_rate_hz=<value>` as a key=value text line. The headerless
//! payload matches what common SDR tooling consumes.

use anyhow::{bail, Context, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

use underlay_core::{BasebandSignal, DEFAULT_SAMPLE_RATE_HZ};

pub fn write_iq(path: &Path, signal: &BasebandSignal) -> Result<()> {
    let mut bytes = Vec::with_capacity(signal.len() * 8);
    for s in &signal.samples {
        bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&bytes)?;
    fs::write(
        meta_path(path),
        format!("sample_rate_hz={}\n", signal.sample_rate_hz),
    )?;
    Ok(())
}

pub fn read_iq(path: &Path) -> Result<BasebandSignal> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() % 8 != 0 {
        bail!(
            "{}: {} bytes is not a whole number of f32 I/Q pairs",
            path.display(),
            bytes.len()
        );
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let i = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            let q = f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64;
            underlay_core::Complex64::new(i, q)
        })
        .collect();
    let sample_rate_hz = read_meta(path).unwrap_or(DEFAULT_SAMPLE_RATE_HZ);
    Ok(BasebandSignal::new(samples, sample_rate_hz))
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

fn read_meta(path: &Path) -> Option<f64> {
    let text = fs::read_to_string(meta_path(path)).ok()?;
    for line in text.lines() {
        if let Some(v) = line.trim().strip_prefix("sample_rate_hz=") {
            return v.trim().parse().ok();
        }
    }
    None
}

//! Flat key=value scenario files. One key per line, `#` starts a comment,
//! lists are comma-separated, ranged values use `lo-hi`. Unknown keys are
//! an error so a typo cannot silently fall back to a default. Every key
//! has a documented default except `master_seed`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

use underlay_core::{OfdmInterfererConfig, PayloadSpec, ScenarioConfig, ThresholdSpec};

pub const KNOWN_KEYS: &[&str] = &[
    "n_ues",
    "payload_bytes",
    "sinr_grid_db",
    "trials_per_point",
    "inter_packet_gap_samples",
    "asynchronous",
    "master_seed",
    "threshold",
    "samples_per_chip",
    "window_samples",
    "detection_tolerance_samples",
    "false_alarm_target",
    "calibration_windows",
    "amplitude",
    "self_interference_cancellation_db",
    "interferer_relative_power_db",
    "interferer_fft_size",
    "interferer_cp_length",
    "interferer_occupied_subcarriers",
    "interferer_qpsk_seed",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("line {0}: expected key=value")]
    MalformedLine(usize),
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("master_seed is required (the only key without a default)")]
    MissingMasterSeed,
}

pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut seen = BTreeSet::new();
    let mut cfg = ScenarioConfig::new(0);
    let mut have_seed = false;
    // interferer pieces; enabled by interferer_relative_power_db
    let mut rel_power: Option<f64> = None;
    let mut fft_size = 64usize;
    let mut cp_length = 16usize;
    let mut occupied: Vec<usize> = (0..64).collect();
    let mut qpsk_seed: Option<u64> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::MalformedLine(lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey(key.to_string()));
        }
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "n_ues" => cfg.n_ues = value.parse().map_err(|_| bad())?,
            "payload_bytes" => {
                let (lo, hi) = parse_range(value).ok_or_else(bad)?;
                cfg.payload_bytes = if lo == hi {
                    PayloadSpec::Fixed(lo)
                } else {
                    PayloadSpec::Range(lo, hi)
                };
            }
            "sinr_grid_db" => {
                cfg.sinr_grid_db = value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
            }
            "trials_per_point" => cfg.trials_per_point = value.parse().map_err(|_| bad())?,
            "inter_packet_gap_samples" => {
                cfg.inter_packet_gap_samples = parse_range(value).ok_or_else(bad)?;
            }
            "asynchronous" => cfg.asynchronous = value.parse().map_err(|_| bad())?,
            "master_seed" => {
                cfg.master_seed = value.parse().map_err(|_| bad())?;
                have_seed = true;
            }
            "threshold" => {
                cfg.threshold = if value == "auto" {
                    ThresholdSpec::Auto
                } else {
                    ThresholdSpec::Fixed(value.parse().map_err(|_| bad())?)
                };
            }
            "samples_per_chip" => cfg.samples_per_chip = value.parse().map_err(|_| bad())?,
            "window_samples" => cfg.window_samples = value.parse().map_err(|_| bad())?,
            "detection_tolerance_samples" => {
                cfg.detection_tolerance_samples = value.parse().map_err(|_| bad())?
            }
            "false_alarm_target" => cfg.false_alarm_target = value.parse().map_err(|_| bad())?,
            "calibration_windows" => cfg.calibration_windows = value.parse().map_err(|_| bad())?,
            "amplitude" => cfg.amplitude = value.parse().map_err(|_| bad())?,
            "self_interference_cancellation_db" => {
                cfg.self_interference_cancellation_db = value.parse().map_err(|_| bad())?
            }
            "interferer_relative_power_db" => {
                rel_power = Some(value.parse().map_err(|_| bad())?)
            }
            "interferer_fft_size" => fft_size = value.parse().map_err(|_| bad())?,
            "interferer_cp_length" => cp_length = value.parse().map_err(|_| bad())?,
            "interferer_occupied_subcarriers" => {
                let mut out = Vec::new();
                for item in value.split(',') {
                    let (lo, hi) = parse_range(item.trim()).ok_or_else(bad)?;
                    out.extend(lo..=hi);
                }
                occupied = out;
            }
            "interferer_qpsk_seed" => qpsk_seed = Some(value.parse().map_err(|_| bad())?),
            _ => unreachable!("key list checked above"),
        }
    }

    if !have_seed {
        return Err(ConfigError::MissingMasterSeed);
    }
    if let Some(rel) = rel_power {
        let mut icfg = OfdmInterfererConfig::new(
            occupied,
            rel,
            qpsk_seed.unwrap_or_else(|| cfg.master_seed.wrapping_add(1)),
        );
        icfg.fft_size = fft_size;
        icfg.cp_length = cp_length;
        cfg.interferer = Some(icfg);
    }
    Ok(cfg)
}

/// Canonical rendering; `parse(serialize(parse(x)))` equals `parse(x)`.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_ues={}", cfg.n_ues);
    match cfg.payload_bytes {
        PayloadSpec::Fixed(n) => {
            let _ = writeln!(s, "payload_bytes={n}");
        }
        PayloadSpec::Range(lo, hi) => {
            let _ = writeln!(s, "payload_bytes={lo}-{hi}");
        }
    }
    let grid: Vec<String> = cfg.sinr_grid_db.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "sinr_grid_db={}", grid.join(","));
    let _ = writeln!(s, "trials_per_point={}", cfg.trials_per_point);
    let (glo, ghi) = cfg.inter_packet_gap_samples;
    if glo == ghi {
        let _ = writeln!(s, "inter_packet_gap_samples={glo}");
    } else {
        let _ = writeln!(s, "inter_packet_gap_samples={glo}-{ghi}");
    }
    let _ = writeln!(s, "asynchronous={}", cfg.asynchronous);
    let _ = writeln!(s, "master_seed={}", cfg.master_seed);
    match cfg.threshold {
        ThresholdSpec::Auto => {
            let _ = writeln!(s, "threshold=auto");
        }
        ThresholdSpec::Fixed(t) => {
            let _ = writeln!(s, "threshold={t}");
        }
    }
    let _ = writeln!(s, "samples_per_chip={}", cfg.samples_per_chip);
    let _ = writeln!(s, "window_samples={}", cfg.window_samples);
    let _ = writeln!(
        s,
        "detection_tolerance_samples={}",
        cfg.detection_tolerance_samples
    );
    let _ = writeln!(s, "false_alarm_target={}", cfg.false_alarm_target);
    let _ = writeln!(s, "calibration_windows={}", cfg.calibration_windows);
    let _ = writeln!(s, "amplitude={}", cfg.amplitude);
    let _ = writeln!(
        s,
        "self_interference_cancellation_db={}",
        cfg.self_interference_cancellation_db
    );
    if let Some(i) = &cfg.interferer {
        let _ = writeln!(s, "interferer_relative_power_db={}", i.relative_power_db);
        let _ = writeln!(s, "interferer_fft_size={}", i.fft_size);
        let _ = writeln!(s, "interferer_cp_length={}", i.cp_length);
        let carriers: Vec<String> = i
            .occupied_subcarriers
            .iter()
            .map(|v| v.to_string())
            .collect();
        let _ = writeln!(s, "interferer_occupied_subcarriers={}", carriers.join(","));
        let _ = writeln!(s, "interferer_qpsk_seed={}", i.qpsk_seed);
    }
    s
}

fn parse_range(value: &str) -> Option<(usize, usize)> {
    if let Some((lo, hi)) = value.split_once('-') {
        let lo = lo.trim().parse().ok()?;
        let hi = hi.trim().parse().ok()?;
        if lo <= hi {
            Some((lo, hi))
        } else {
            None
        }
    } else {
        let v = value.trim().parse().ok()?;
        Some((v, v))
    }
}

//! Channel impairments: AWGN at a target SINR, asynchronous multi-UE
//! superposition, a generic CP-OFDM/QPSK interferer standing in for the
//! overlay uplink, and residual self-interference after cancellation.
//!
//! Every operation is a pure function of its inputs and an explicit seed.
//! Noise RNG streams are derived from (master seed, stream indices) with a
//! splitmix-style mixer so trials reproduce independently of execution
//! order. The channel is flat: no multipath, Doppler, or frequency offset.
//!
//! SINR convention: the AWGN level is set against the mean per-sample
//! power of the nonzero-signal region over the full sample band,
//! σ² = P_signal / 10^(sinr_db/10). Interference power is controlled
//! separately via `relative_power_db`, so a quoted "SINR" axis in results
//! refers to the thermal-noise ratio.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};
use std::collections::BTreeSet;
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

use crate::signal::BasebandSignal;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("signal has zero power; SINR is undefined")]
    ZeroPowerSignal,
    #[error("placement for UE {ue_id} ends at {end} but the stream is {total} samples")]
    PlacementOverflow { ue_id: u32, end: usize, total: usize },
    #[error("interferer has no occupied subcarriers")]
    EmptyOccupiedSet,
    #[error("occupied subcarrier {index} outside FFT size {fft_size}")]
    SubcarrierOutOfRange { index: usize, fft_size: usize },
    #[error("fft_size {0} is not a positive power of two")]
    InvalidFftSize(usize),
    #[error("self-interference cancellation must be >= 0 dB, got {0}")]
    NegativeCancellation(f64),
}

/// Mix a master seed with stream indices into an independent sub-seed.
/// Splitmix64-style finalizer; stable across platforms.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master;
    for (i, &p) in parts.iter().enumerate() {
        state = mix64(
            state
                .wrapping_add(p.wrapping_mul(0x9E37_79B9_7F4A_7C15))
                .wrapping_add(i as u64 + 1),
        );
    }
    mix64(state)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded RNG for one derived stream.
pub fn stream_rng(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}

/// Add complex circular Gaussian noise at per-sample variance
/// σ² = P_signal / 10^(sinr_db/10), where P_signal is the mean power of
/// the nonzero-signal region. Deterministic given the seed.
pub fn apply_awgn(
    signal: &BasebandSignal,
    sinr_db: f64,
    seed: u64,
) -> Result<BasebandSignal, ChannelError> {
    let p_signal = signal.nonzero_region_power();
    if p_signal <= 0.0 {
        return Err(ChannelError::ZeroPowerSignal);
    }
    let sigma2 = p_signal / 10f64.powf(sinr_db / 10.0);
    let per_axis = Normal::new(0.0, (sigma2 / 2.0).sqrt()).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = signal
        .samples
        .iter()
        .map(|&s| s + Complex64::new(per_axis.sample(&mut rng), per_axis.sample(&mut rng)))
        .collect();
    Ok(BasebandSignal::new(samples, signal.sample_rate_hz))
}

/// One UE's contribution to a composite stream.
#[derive(Debug, Clone)]
pub struct UePlacement<'a> {
    pub ue_id: u32,
    pub signal: &'a BasebandSignal,
    pub offset_samples: usize,
    pub gain_db: f64,
}

/// Sum placements into one stream of `total_length` samples:
/// `out[n] = Σ 10^(gain/20) · signal[n − offset]`.
pub fn superpose(
    placements: &[UePlacement<'_>],
    total_length: usize,
) -> Result<BasebandSignal, ChannelError> {
    let mut out = BasebandSignal::zeros(total_length);
    if let Some(p) = placements.first() {
        out.sample_rate_hz = p.signal.sample_rate_hz;
    }
    for p in placements {
        let end = p.offset_samples + p.signal.len();
        if end > total_length {
            return Err(ChannelError::PlacementOverflow {
                ue_id: p.ue_id,
                end,
                total: total_length,
            });
        }
        let gain = 10f64.powf(p.gain_db / 20.0);
        for (i, &s) in p.signal.samples.iter().enumerate() {
            out.samples[p.offset_samples + i] += gain * s;
        }
    }
    Ok(out)
}

/// Generic CP-OFDM interferer: unit-power QPSK on the occupied
/// subcarriers, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmInterfererConfig {
    pub fft_size: usize,
    pub cp_length: usize,
    pub occupied_subcarriers: BTreeSet<usize>,
    /// Interferer power relative to the IoT signal (dB); the IoT
    /// reference is unit per-sample power.
    pub relative_power_db: f64,
    pub qpsk_seed: u64,
}

impl OfdmInterfererConfig {
    pub fn new(
        occupied_subcarriers: impl IntoIterator<Item = usize>,
        relative_power_db: f64,
        qpsk_seed: u64,
    ) -> Self {
        Self {
            fft_size: 64,
            cp_length: 16,
            occupied_subcarriers: occupied_subcarriers.into_iter().collect(),
            relative_power_db,
            qpsk_seed,
        }
    }
}

/// Cached FFT plans, keyed by size.
fn inverse_fft(size: usize) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let planner = PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()));
    planner.lock().unwrap().plan_fft_inverse(size)
}

/// Concatenate CP-OFDM symbols until `length` samples are available, then
/// truncate and scale so the mean per-sample power of the output equals
/// 10^(relative_power_db/10). Deterministic given `qpsk_seed`.
pub fn generate_ofdm_interferer(
    cfg: &OfdmInterfererConfig,
    length: usize,
) -> Result<BasebandSignal, ChannelError> {
    if cfg.occupied_subcarriers.is_empty() {
        return Err(ChannelError::EmptyOccupiedSet);
    }
    if !cfg.fft_size.is_power_of_two() || cfg.fft_size == 0 {
        return Err(ChannelError::InvalidFftSize(cfg.fft_size));
    }
    if let Some(&bad) = cfg
        .occupied_subcarriers
        .iter()
        .find(|&&k| k >= cfg.fft_size)
    {
        return Err(ChannelError::SubcarrierOutOfRange {
            index: bad,
            fft_size: cfg.fft_size,
        });
    }

    let fft = inverse_fft(cfg.fft_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.qpsk_seed);
    let sym_len = cfg.fft_size + cfg.cp_length;
    let n_symbols = length / sym_len + 2;
    // unit total power split evenly across occupied subcarriers
    let per_carrier = (1.0 / cfg.occupied_subcarriers.len() as f64).sqrt();
    let mut samples = Vec::with_capacity(n_symbols * sym_len);
    let mut freq = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for _ in 0..n_symbols {
        for f in freq.iter_mut() {
            *f = Complex64::new(0.0, 0.0);
        }
        for &k in &cfg.occupied_subcarriers {
            let re = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let im = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            freq[k] = per_carrier * Complex64::new(re, im) / 2f64.sqrt();
        }
        let mut time = freq.clone();
        fft.process(&mut time);
        // cyclic prefix: last cp_length samples prepended
        samples.extend_from_slice(&time[cfg.fft_size - cfg.cp_length..]);
        samples.extend_from_slice(&time);
    }
    samples.truncate(length);

    let target = 10f64.powf(cfg.relative_power_db / 10.0);
    let raw: f64 = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
    let scale = (target / raw).sqrt();
    for s in &mut samples {
        *s *= scale;
    }
    Ok(BasebandSignal::new(samples, 1e6))
}

/// Residual interferer after abstract full-duplex cancellation: amplitude
/// scaled by 10^(−cancellation_db/20).
pub fn apply_self_interference_cancellation(
    interferer: &BasebandSignal,
    cancellation_db: f64,
) -> Result<BasebandSignal, ChannelError> {
    if cancellation_db < 0.0 {
        return Err(ChannelError::NegativeCancellation(cancellation_db));
    }
    let scale = 10f64.powf(-cancellation_db / 20.0);
    let samples = interferer.samples.iter().map(|&s| s * scale).collect();
    Ok(BasebandSignal::new(samples, interferer.sample_rate_hz))
}

/// Full channel description for one link: thermal noise level, optional
/// overlay interferer, and the residual-cancellation figure.
#[derive(Debug, Clone)]
pub struct ChannelConfig {
    pub sinr_db: f64,
    pub seed: u64,
    pub interferer: Option<OfdmInterfererConfig>,
    pub self_interference_cancellation_db: f64,
}

impl ChannelConfig {
    pub fn new(sinr_db: f64, seed: u64) -> Self {
        Self {
            sinr_db,
            seed,
            interferer: None,
            self_interference_cancellation_db: 30.0,
        }
    }

    /// Noise first (sized against the clean signal), then the residual
    /// interferer on top.
    pub fn apply(&self, signal: &BasebandSignal) -> Result<BasebandSignal, ChannelError> {
        let mut out = apply_awgn(signal, self.sinr_db, self.seed)?;
        if let Some(icfg) = &self.interferer {
            let raw = generate_ofdm_interferer(icfg, out.len())?;
            let residual =
                apply_self_interference_cancellation(&raw, self.self_interference_cancellation_db)?;
            for (o, i) in out.samples.iter_mut().zip(&residual.samples) {
                *o += i;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::MacFrame;
    use crate::modem::{build_packet_signal, TxConfig};

    fn unit_signal(n: usize) -> BasebandSignal {
        BasebandSignal::new(vec![Complex64::new(1.0, 0.0); n], 1e6)
    }

    #[test]
    fn awgn_vanishes_at_extreme_sinr() {
        let sig = unit_signal(1000);
        let noisy = apply_awgn(&sig, 300.0, 7).unwrap();
        for (a, b) in noisy.samples.iter().zip(&sig.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn awgn_power_matches_target() {
        let sig = unit_signal(1_000_000);
        let noisy = apply_awgn(&sig, 0.0, 99).unwrap();
        let noise_power: f64 = noisy
            .samples
            .iter()
            .zip(&sig.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / sig.len() as f64;
        assert!(
            (noise_power - 1.0).abs() < 0.005,
            "noise power {noise_power} outside ±0.5%"
        );
    }

    #[test]
    fn awgn_deterministic_and_seed_sensitive() {
        let sig = unit_signal(256);
        let a = apply_awgn(&sig, 3.0, 1234).unwrap();
        let b = apply_awgn(&sig, 3.0, 1234).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = apply_awgn(&sig, 3.0, 1235).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn awgn_rejects_zero_power() {
        let z = BasebandSignal::zeros(64);
        assert_eq!(
            apply_awgn(&z, 0.0, 1).unwrap_err(),
            ChannelError::ZeroPowerSignal
        );
    }

    #[test]
    fn awgn_noise_level_uses_packet_power_not_stream_mean() {
        // packet occupying 10% of the stream: noise must be sized
        // against the packet power, not the diluted stream average
        let mut sig = BasebandSignal::zeros(100_000);
        for i in 0..10_000 {
            sig.samples[i] = Complex64::new(1.0, 0.0);
        }
        let noisy = apply_awgn(&sig, 0.0, 5).unwrap();
        let tail_noise: f64 = noisy.samples[10_000..]
            .iter()
            .map(|s| s.norm_sqr())
            .sum::<f64>()
            / 90_000.0;
        assert!((tail_noise - 1.0).abs() < 0.02, "tail noise {tail_noise}");
    }

    #[test]
    fn superpose_identity_and_disjoint_support() {
        let sig = unit_signal(100);
        let out = superpose(
            &[UePlacement {
                ue_id: 0,
                signal: &sig,
                offset_samples: 0,
                gain_db: 0.0,
            }],
            250,
        )
        .unwrap();
        assert_eq!(&out.samples[..100], sig.samples.as_slice());
        assert!(out.samples[100..].iter().all(|s| s.norm() == 0.0));

        let two = superpose(
            &[
                UePlacement {
                    ue_id: 0,
                    signal: &sig,
                    offset_samples: 0,
                    gain_db: 0.0,
                },
                UePlacement {
                    ue_id: 1,
                    signal: &sig,
                    offset_samples: 120,
                    gain_db: -6.0,
                },
            ],
            250,
        )
        .unwrap();
        assert_eq!(&two.samples[..100], sig.samples.as_slice());
        let g = 10f64.powf(-6.0 / 20.0);
        assert!(two.samples[120..220]
            .iter()
            .all(|s| (s.re - g).abs() < 1e-15));
    }

    #[test]
    fn superpose_rejects_overflow() {
        let sig = unit_signal(100);
        let err = superpose(
            &[UePlacement {
                ue_id: 3,
                signal: &sig,
                offset_samples: 20,
                gain_db: 0.0,
            }],
            100,
        )
        .unwrap_err();
        assert_eq!(
            err,
            ChannelError::PlacementOverflow {
                ue_id: 3,
                end: 120,
                total: 100
            }
        );
    }

    #[test]
    fn synchronized_ues_stay_orthogonal_through_superposition() {
        use crate::spreading::{despread, hadamard_row, hard_decision, spread};
        let ca = hadamard_row(64, 2).unwrap();
        let cb = hadamard_row(64, 3).unwrap();
        let bits_a = [false, true, false, false, true];
        let bits_b = [true, true, false, true, false];
        let xa: Vec<Complex64> = spread(&bits_a, &ca)
            .iter()
            .map(|&c| Complex64::new(c as f64, 0.0))
            .collect();
        let xb: Vec<Complex64> = spread(&bits_b, &cb)
            .iter()
            .map(|&c| Complex64::new(c as f64, 0.0))
            .collect();
        let sa = BasebandSignal::new(xa, 1e6);
        let sb = BasebandSignal::new(xb, 1e6);
        let both = superpose(
            &[
                UePlacement {
                    ue_id: 0,
                    signal: &sa,
                    offset_samples: 0,
                    gain_db: 0.0,
                },
                UePlacement {
                    ue_id: 1,
                    signal: &sb,
                    offset_samples: 0,
                    gain_db: 0.0,
                },
            ],
            sa.len(),
        )
        .unwrap();
        let real = both.real();
        let got_a: Vec<bool> = despread(&real, &ca)
            .unwrap()
            .into_iter()
            .map(hard_decision)
            .collect();
        let got_b: Vec<bool> = despread(&real, &cb)
            .unwrap()
            .into_iter()
            .map(hard_decision)
            .collect();
        assert_eq!(got_a, bits_a);
        assert_eq!(got_b, bits_b);
    }

    #[test]
    fn ofdm_interferer_power_is_exact() {
        for rel in [-10.0, 0.0, 3.0] {
            let cfg = OfdmInterfererConfig::new(0..64, rel, 42);
            let sig = generate_ofdm_interferer(&cfg, 100_000).unwrap();
            let target = 10f64.powf(rel / 10.0);
            assert!((sig.mean_power() - target).abs() / target < 0.01);
        }
    }

    #[test]
    fn single_subcarrier_is_a_tone() {
        let cfg = OfdmInterfererConfig::new([7], 0.0, 9);
        let sig = generate_ofdm_interferer(&cfg, 800).unwrap();
        // strip the CP of the first symbol, DFT the 64-sample core,
        // check spectral concentration at bin 7
        let core = &sig.samples[16..80];
        let mut best_bin = 0;
        let mut best = 0.0;
        let mut total = 0.0;
        for bin in 0..64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &x) in core.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * bin as f64 * n as f64 / 64.0;
                acc += x * Complex64::new(ph.cos(), ph.sin());
            }
            let p = acc.norm_sqr();
            total += p;
            if p > best {
                best = p;
                best_bin = bin;
            }
        }
        assert_eq!(best_bin, 7);
        assert!(best / total > 0.999);
    }

    #[test]
    fn full_band_interferer_is_gaussian_like() {
        // complex kurtosis E|x|^4 / (E|x|^2)^2 of a circular Gaussian is 2
        let cfg = OfdmInterfererConfig::new(0..64, 0.0, 77);
        let sig = generate_ofdm_interferer(&cfg, 100_000).unwrap();
        let m2: f64 = sig.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / sig.len() as f64;
        let m4: f64 = sig
            .samples
            .iter()
            .map(|s| s.norm_sqr().powi(2))
            .sum::<f64>()
            / sig.len() as f64;
        let kurtosis = m4 / (m2 * m2);
        assert!(
            (1.8..=2.2).contains(&kurtosis),
            "kurtosis {kurtosis} outside [1.8, 2.2]"
        );
    }

    #[test]
    fn interferer_rejects_bad_configs() {
        let empty = OfdmInterfererConfig::new(std::iter::empty(), 0.0, 1);
        assert_eq!(
            generate_ofdm_interferer(&empty, 100).unwrap_err(),
            ChannelError::EmptyOccupiedSet
        );
        let oob = OfdmInterfererConfig::new([64], 0.0, 1);
        assert_eq!(
            generate_ofdm_interferer(&oob, 100).unwrap_err(),
            ChannelError::SubcarrierOutOfRange {
                index: 64,
                fft_size: 64
            }
        );
    }

    #[test]
    fn cancellation_scaling() {
        let sig = unit_signal(10);
        let same = apply_self_interference_cancellation(&sig, 0.0).unwrap();
        assert_eq!(same.samples, sig.samples);
        let tenth = apply_self_interference_cancellation(&sig, 20.0).unwrap();
        assert!(tenth.samples.iter().all(|s| (s.re - 0.1).abs() < 1e-15));
        let gone = apply_self_interference_cancellation(&sig, 300.0).unwrap();
        assert!(gone.mean_power() < 1e-29);
        assert!(apply_self_interference_cancellation(&sig, -1.0).is_err());
    }

    #[test]
    fn derived_seeds_are_order_free_and_distinct() {
        let a = derive_seed(11, &[0, 5]);
        let b = derive_seed(11, &[5, 0]);
        let c = derive_seed(11, &[0, 5]);
        assert_eq!(a, c);
        assert_ne!(a, b);
        assert_ne!(derive_seed(11, &[0, 0]), derive_seed(12, &[0, 0]));
    }

    #[test]
    fn channel_config_composes_noise_and_interference() {
        let frame = MacFrame::new(1, vec![0xAB; 8]).unwrap();
        let cfg = TxConfig::for_row(2).unwrap();
        let sig = build_packet_signal(&frame, &cfg);
        let mut ch = ChannelConfig::new(10.0, 321);
        ch.interferer = Some(OfdmInterfererConfig::new([7], 0.0, 5));
        ch.self_interference_cancellation_db = 20.0;
        let out = ch.apply(&sig).unwrap();
        assert_eq!(out.len(), sig.len());
        // residual interferer power ~0.01 of signal, noise 0.1: the
        // composite must differ from the clean signal accordingly
        let delta: f64 = out
            .samples
            .iter()
            .zip(&sig.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / sig.len() as f64;
        assert!((delta - 0.11).abs() < 0.02, "impairment power {delta}");
    }
}

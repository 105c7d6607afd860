//! Transmit chain: MAC frame → preamble + spread BPSK body as complex baseband.
//!
//! No pulse shaping; rectangular chips at one sample per chip by default
//! (chip rate equals the 1 MSps sample rate, so there is no excess
//! bandwidth for a filter). `samples_per_chip` stays configurable. The
//! preamble is a single unrepeated 64-chip code, shared by all UEs; UE
//! identity is established at the receiver by which despreading code
//! yields a CRC-valid body.

use num_complex::Complex64;
use thiserror::Error;

use crate::framing::{frame_bits, MacFrame};
use crate::signal::{BasebandSignal, DEFAULT_SAMPLE_RATE_HZ};
use crate::spreading::{hadamard_row, spread, SpreadingCode, DEFAULT_ORDER, PREAMBLE_ROW};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModemError {
    #[error("row {0} is reserved (row 0 is DC, row 1 is the preamble) and cannot identify a UE")]
    ReservedRow(usize),
    #[error("UE code order {ue} does not match preamble order {preamble}")]
    OrderMismatch { ue: usize, preamble: usize },
    #[error("samples_per_chip must be positive")]
    ZeroSamplesPerChip,
    #[error("amplitude must be positive")]
    NonPositiveAmplitude,
    #[error(transparent)]
    Code(#[from] crate::spreading::SpreadingError),
}

/// Transmitter configuration: which code spreads the body, plus chip
/// timing and amplitude.
#[derive(Debug, Clone)]
pub struct TxConfig {
    pub ue_code: SpreadingCode,
    pub preamble_code: SpreadingCode,
    pub samples_per_chip: usize,
    pub amplitude: f64,
}

impl TxConfig {
    /// Config for a UE code row with the stock preamble (row 1), one
    /// sample per chip, unit amplitude.
    pub fn new(ue_code: SpreadingCode) -> Result<Self, ModemError> {
        let preamble = hadamard_row(ue_code.order(), PREAMBLE_ROW)
            .expect("preamble row exists for any valid order");
        Self::with_parts(ue_code, preamble, 1, 1.0)
    }

    /// Config for UE row `row` at the default order of 64.
    pub fn for_row(row: usize) -> Result<Self, ModemError> {
        Self::new(hadamard_row(DEFAULT_ORDER, row)?)
    }

    pub fn with_parts(
        ue_code: SpreadingCode,
        preamble_code: SpreadingCode,
        samples_per_chip: usize,
        amplitude: f64,
    ) -> Result<Self, ModemError> {
        if ue_code.row_index() < 2 {
            return Err(ModemError::ReservedRow(ue_code.row_index()));
        }
        if ue_code.order() != preamble_code.order() {
            return Err(ModemError::OrderMismatch {
                ue: ue_code.order(),
                preamble: preamble_code.order(),
            });
        }
        if samples_per_chip == 0 {
            return Err(ModemError::ZeroSamplesPerChip);
        }
        if amplitude <= 0.0 {
            return Err(ModemError::NonPositiveAmplitude);
        }
        Ok(Self {
            ue_code,
            preamble_code,
            samples_per_chip,
            amplitude,
        })
    }

    /// Samples occupied by one packet carrying `payload_len` payload bytes.
    pub fn packet_samples(&self, payload_len: usize) -> usize {
        let order = self.ue_code.order();
        (order + order * frame_bits(payload_len)) * self.samples_per_chip
    }

    /// Nominal uncoded bit rate at the given sample rate:
    /// sample_rate / (samples_per_chip · order).
    pub fn nominal_bit_rate(&self, sample_rate_hz: f64) -> f64 {
        sample_rate_hz / (self.samples_per_chip as f64 * self.ue_code.order() as f64)
    }
}

/// One packet: preamble chips followed by the spread frame body, mapped to
/// real-valued complex samples and scaled by the configured amplitude.
pub fn build_packet_signal(frame: &MacFrame, cfg: &TxConfig) -> BasebandSignal {
    let body = spread(&frame.encode(), &cfg.ue_code);
    let n_chips = cfg.preamble_code.order() + body.len();
    let mut samples = Vec::with_capacity(n_chips * cfg.samples_per_chip);
    for &chip in cfg.preamble_code.chips().iter().chain(body.iter()) {
        let s = Complex64::new(chip as f64 * cfg.amplitude, 0.0);
        for _ in 0..cfg.samples_per_chip {
            samples.push(s);
        }
    }
    BasebandSignal::new(samples, DEFAULT_SAMPLE_RATE_HZ)
}

/// A train of packets separated by exactly `gap` zero samples.
pub fn build_packet_train(frames: &[MacFrame], gap: usize, cfg: &TxConfig) -> BasebandSignal {
    let mut samples = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        if i > 0 {
            samples.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), gap));
        }
        samples.extend(build_packet_signal(frame, cfg).samples);
    }
    BasebandSignal::new(samples, DEFAULT_SAMPLE_RATE_HZ)
}

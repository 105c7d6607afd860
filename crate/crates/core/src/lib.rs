//! Link-level simulator and codec library for a CDMA-underlay IoT uplink.
//!
//! The physical layer spreads a short MAC frame (address, 0–15 byte
//! payload, CRC-16) with a 64-chip Walsh-Hadamard code, BPSK-modulated at
//! 1 MSps over a 1 MHz channel, prefixed by a shared 64-chip preamble.
//! The receiver locates packets by normalized sliding correlation against
//! the preamble, despreads with each registered UE code, and accepts
//! whatever passes the CRC. Channel models cover AWGN at a target SINR,
//! asynchronous multi-user superposition, and a CP-OFDM overlay
//! interferer with residual self-interference cancellation. The harness
//! runs seeded, parallel Monte Carlo sweeps of detection and packet-error
//! rates.
//!
//! Conventions, fixed across the crate:
//! - bit 0 → +1, bit 1 → −1; a despread metric of exactly 0 decides bit 0
//! - Hadamard rows in Sylvester order; row 0 is unused DC, row 1 is the
//!   preamble, rows 2.. are assignable UE codes
//! - SINR sets the AWGN level against the mean power of the
//!   nonzero-signal region over the full 1 MHz band
//! - only the real part of received samples enters correlation and
//!   despreading

pub mod channel;
pub mod framing;
pub mod harness;
pub mod modem;
pub mod receiver;
pub mod signal;
pub mod spreading;

pub use num_complex::Complex64;

pub use channel::{
    apply_awgn, apply_self_interference_cancellation, derive_seed, generate_ofdm_interferer,
    stream_rng, superpose, ChannelConfig, ChannelError, OfdmInterfererConfig, UePlacement,
};
pub use framing::{
    crc16_ccitt_false, crc16_ccitt_false_bits, decode_frame, encode_frame, frame_bits,
    FramingError, IntegrityError, MacFrame, MAX_PAYLOAD_BYTES,
};
pub use harness::{
    calibrate_threshold, noise_window_maxima, run_coexistence_sweep, run_multi_ue_sweep,
    run_single_link_sweep, wilson_ci, HarnessError, PayloadSpec, ScenarioConfig, SweepPoint,
    SweepResult, ThresholdSpec, MAX_UES,
};
pub use modem::{build_packet_signal, build_packet_train, ModemError, TxConfig};
pub use receiver::{
    correlate_preamble, demodulate_body, detect_and_decode, scan, DetectionEvent, DetectorConfig,
    ReceiverError, ScanReport,
};
pub use signal::{BasebandSignal, DEFAULT_SAMPLE_RATE_HZ};
pub use spreading::{
    bit_to_symbol, despread, hadamard_row, hard_decision, spread, SpreadingCode, SpreadingError,
    DEFAULT_ORDER, FIRST_UE_ROW, PREAMBLE_ROW,
};

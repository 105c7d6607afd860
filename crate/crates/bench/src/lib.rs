//! Shared helpers for the receiver benchmarks.

use underlay_core::{apply_awgn, build_packet_signal, superpose, BasebandSignal, MacFrame,
    TxConfig, UePlacement};

/// A 10,000-sample window holding one max-payload packet at 5 dB SINR.
pub fn packet_window(seed: u64) -> BasebandSignal {
    let frame = MacFrame::new(0x2A, (0..15).collect()).unwrap();
    let tx = TxConfig::for_row(2).unwrap();
    let packet = build_packet_signal(&frame, &tx);
    let clean = superpose(
        &[UePlacement {
            ue_id: 0,
            signal: &packet,
            offset_samples: 100,
            gain_db: 0.0,
        }],
        10_000,
    )
    .unwrap();
    apply_awgn(&clean, 5.0, seed).unwrap()
}

/// A 10,000-sample noise-only window (scaled DC buried in noise).
pub fn noise_window(seed: u64) -> BasebandSignal {
    let carrier = BasebandSignal::new(
        vec![underlay_core::Complex64::new(1.0, 0.0); 10_000],
        1e6,
    );
    apply_awgn(&carrier, -40.0, seed).unwrap()
}

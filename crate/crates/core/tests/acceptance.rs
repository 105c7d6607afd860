//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (visible with `--nocapture`).
//!
//! The heavyweight criteria share one CFAR calibration (false-alarm
//! target 1e-4 per 10,000-sample window, 100,000 noise windows), computed
//! once per process.

use std::sync::OnceLock;
use std::time::Instant;

use underlay_core::*;

/// Fixed master seed for the whole suite; every random quantity derives
/// from it, so the suite is bit-reproducible.
const MASTER_SEED: u64 = 0x1057_CD4A;

const FA_TARGET: f64 = 1e-4;
const WINDOW: usize = 10_000;

fn scenario() -> ScenarioConfig {
    ScenarioConfig::new(MASTER_SEED)
}

/// Threshold auto-calibrated at the 1e-4 false-alarm target, shared
/// across criteria (same derivation the harness uses for `auto`).
fn calibrated_threshold() -> f64 {
    static THRESHOLD: OnceLock<f64> = OnceLock::new();
    *THRESHOLD.get_or_init(|| {
        let th = scenario().resolve_threshold().expect("calibration");
        println!("[calibration] threshold={th:.6} (fa={FA_TARGET}, window={WINDOW})");
        th
    })
}

fn preamble() -> SpreadingCode {
    hadamard_row(64, PREAMBLE_ROW).unwrap()
}

#[test]
fn criterion_01_single_ue_per_at_low_sinr() {
    let mut cfg = scenario();
    cfg.threshold = ThresholdSpec::Fixed(calibrated_threshold());
    // defaults already: 1 UE, 15-byte payload, grid 0..5 dB, 10,000 trials
    let result = run_single_link_sweep(&cfg).expect("sweep");

    for p in &result.points {
        assert!(
            p.packet_error_rate() <= 0.05,
            "PER {:.4} exceeds 5% at {} dB",
            p.packet_error_rate(),
            p.sinr_db
        );
    }

    let p0 = &result.points[0];
    assert_eq!(p0.sinr_db, 0.0);
    assert!(
        p0.missed > p0.decoded_wrong,
        "at 0 dB expected missed detections ({}) to outnumber wrong decodes ({})",
        p0.missed,
        p0.decoded_wrong
    );

    // PER non-increasing and detection non-decreasing along the grid,
    // within overlapping 95% CIs
    for w in result.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        assert!(
            b.packet_error_rate() <= a.packet_error_rate() || b.per_ci().0 <= a.per_ci().1,
            "PER rose outside CI overlap between {} and {} dB",
            a.sinr_db,
            b.sinr_db
        );
        assert!(
            b.detection_rate() >= a.detection_rate() || b.detection_ci().1 >= a.detection_ci().0,
            "detection fell outside CI overlap between {} and {} dB",
            a.sinr_db,
            b.sinr_db
        );
    }

    let summary: Vec<String> = result
        .points
        .iter()
        .map(|p| format!("{}dB:{:.4}", p.sinr_db, p.packet_error_rate()))
        .collect();
    println!(
        "[criterion 1] PASS: PER {} (missed {} vs wrong {} at 0 dB)",
        summary.join(" "),
        p0.missed,
        p0.decoded_wrong
    );
}

#[test]
fn criterion_02_nominal_bit_rate() {
    let cfg = TxConfig::for_row(2).unwrap();
    let rate = cfg.nominal_bit_rate(1e6);
    assert_eq!(rate, 15_625.0);
    println!("[criterion 2] PASS: 1 MSps / 64 chips = {rate} bit/s");
}

#[test]
fn criterion_03_packet_size_matches_budget() {
    let cfg = TxConfig::for_row(2).unwrap();
    let frame = MacFrame::new(0xFF, vec![0xAA; 15]).unwrap();
    let len = build_packet_signal(&frame, &cfg).len();
    assert_eq!(len, 9_792);
    assert_eq!(len, cfg.packet_samples(15));
    let deviation = (len as f64 - 10_000.0).abs() / 10_000.0;
    assert!(deviation < 0.03);
    println!(
        "[criterion 3] PASS: max-payload packet {len} samples ({:.2}% from the 10,000-sample budget)",
        deviation * 100.0
    );
}

#[test]
fn criterion_04_orthogonality_and_synchronized_two_ue() {
    // exact integer dot products across all 64x64 row pairs
    let rows: Vec<SpreadingCode> = (0..64).map(|r| hadamard_row(64, r).unwrap()).collect();
    for i in 0..64 {
        for j in 0..64 {
            let expect = if i == j { 64 } else { 0 };
            assert_eq!(rows[i].dot(&rows[j]), expect, "rows ({i},{j})");
        }
    }

    let mut cfg = scenario();
    cfg.n_ues = 2;
    cfg.asynchronous = false;
    cfg.sinr_grid_db = vec![300.0];
    cfg.trials_per_point = 1_000;
    cfg.threshold = ThresholdSpec::Fixed(calibrated_threshold());
    let per_ue = run_multi_ue_sweep(&cfg).expect("sweep");
    for (u, r) in per_ue.iter().enumerate() {
        assert_eq!(
            r.points[0].packet_error_rate(),
            0.0,
            "UE {u} PER nonzero in synchronized noiseless trials"
        );
        assert_eq!(r.points[0].detection_rate(), 1.0);
    }
    println!(
        "[criterion 4] PASS: 64x64 dot products exact; synchronized 2-UE PER = 0 over {} trials",
        cfg.trials_per_point
    );
}

#[test]
fn criterion_05_noiseless_loopback_all_codes_and_payloads() {
    let pre = preamble();
    let threshold = calibrated_threshold();
    let trials = 1_000;
    for i in 0..trials {
        let row = FIRST_UE_ROW + (i % MAX_UES);
        let payload_len = i % 16;
        let mut rng = stream_rng(MASTER_SEED, &[50, i as u64]);
        use rand::Rng;
        let addr: u8 = rng.gen();
        let payload: Vec<u8> = (0..payload_len).map(|_| rng.gen()).collect();
        let frame = MacFrame::new(addr, payload).unwrap();
        let tx = TxConfig::for_row(row).unwrap();
        let packet = build_packet_signal(&frame, &tx);
        let offset = rng.gen_range(0..9_792);
        let stream = superpose(
            &[UePlacement {
                ue_id: 0,
                signal: &packet,
                offset_samples: offset,
                gain_db: 0.0,
            }],
            offset + packet.len() + 128,
        )
        .unwrap();

        let candidates: Vec<SpreadingCode> = (FIRST_UE_ROW..FIRST_UE_ROW + MAX_UES)
            .map(|r| hadamard_row(64, r).unwrap())
            .collect();
        let det = DetectorConfig::new(pre.clone(), candidates, WINDOW, threshold).unwrap();
        let events = detect_and_decode(&stream, &det);
        let hit = events.iter().any(|e| {
            e.start_index == offset
                && e.matched_code_row == Some(row)
                && e.decoded.as_ref() == Some(&frame)
        });
        assert!(
            hit,
            "trial {i}: row {row}, payload {payload_len} B, offset {offset} not decoded exactly"
        );
    }
    println!(
        "[criterion 5] PASS: {trials} noiseless loopbacks across all {MAX_UES} codes and payloads 0-15 B, exact offsets, bit-exact decodes"
    );
}

#[test]
fn criterion_06_cfar_holds_and_no_false_decodes() {
    let threshold = calibrated_threshold();
    let pre = preamble();

    // held-out noise, fresh derivation
    let n_heldout = 10_000;
    let maxima = noise_window_maxima(&pre, WINDOW, n_heldout, derive_seed(MASTER_SEED, &[60]));
    let exceed = maxima.iter().filter(|&&m| m > threshold).count();
    let rate = exceed as f64 / n_heldout as f64;
    assert!(
        rate <= 2e-4,
        "held-out false-alarm rate {rate} exceeds 2e-4 ({exceed}/{n_heldout} windows)"
    );

    // >= 1e7 noise samples through the full detect/decode pipeline:
    // no CRC-valid frame may come out
    let candidates: Vec<SpreadingCode> = (FIRST_UE_ROW..FIRST_UE_ROW + MAX_UES)
        .map(|r| hadamard_row(64, r).unwrap())
        .collect();
    let det = DetectorConfig::new(pre, candidates, WINDOW, threshold).unwrap();
    let mut false_decodes = 0usize;
    let mut triggers = 0usize;
    let chunk = 1_000_000;
    for c in 0..10u64 {
        let mut rng = stream_rng(MASTER_SEED, &[61, c]);
        let samples: Vec<Complex64> = (0..chunk)
            .map(|_| {
                use rand::Rng;
                Complex64::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            })
            .collect();
        let stream = BasebandSignal::new(samples, 1e6);
        let events = detect_and_decode(&stream, &det);
        triggers += events.len();
        false_decodes += events.iter().filter(|e| e.decoded.is_some()).count();
    }
    assert_eq!(
        false_decodes, 0,
        "CRC-valid frames decoded from pure noise ({triggers} triggers)"
    );
    println!(
        "[criterion 6] PASS: held-out FA rate {rate:.1e} <= 2e-4; 0 false decodes over 1e7 noise samples ({triggers} raw triggers)"
    );
}

#[test]
fn criterion_07_crc_matches_long_division_oracle() {
    // independent oracle: bitwise polynomial long division
    fn oracle(bits: &[bool]) -> u16 {
        let mut rem: u32 = 0xFFFF;
        for &bit in bits {
            let top = (rem >> 15) & 1 == 1;
            rem = (rem << 1) & 0xFFFF;
            if top != bit {
                rem ^= 0x1021;
            }
        }
        rem as u16
    }
    fn to_bits(data: &[u8]) -> Vec<bool> {
        data.iter()
            .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
            .collect()
    }

    assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
    assert_eq!(oracle(&to_bits(b"123456789")), 0x29B1);

    let mut rng = stream_rng(MASTER_SEED, &[70]);
    use rand::Rng;
    for _ in 0..10_000 {
        let len = rng.gen_range(0..64);
        let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        assert_eq!(crc16_ccitt_false(&data), oracle(&to_bits(&data)));
    }
    println!("[criterion 7] PASS: table CRC equals long-division oracle on 10,000 inputs plus the 0x29B1 check value");
}

#[test]
fn criterion_08_channel_statistics() {
    // AWGN hits the target SINR within ±0.05 dB over 1e6 samples
    let signal = BasebandSignal::new(vec![Complex64::new(1.0, 0.0); 1_000_000], 1e6);
    let mut worst: f64 = 0.0;
    for (i, &target) in [0.0, 3.0, 10.0].iter().enumerate() {
        let noisy = apply_awgn(&signal, target, derive_seed(MASTER_SEED, &[80, i as u64])).unwrap();
        let noise_power: f64 = noisy
            .samples
            .iter()
            .zip(&signal.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / signal.len() as f64;
        let measured = 10.0 * (1.0 / noise_power).log10();
        worst = worst.max((measured - target).abs());
        assert!(
            (measured - target).abs() <= 0.05,
            "measured SINR {measured:.3} dB vs target {target} dB"
        );
    }

    // OFDM interferer power within ±1% of configured relative power
    for (i, &rel) in [-10.0, 0.0, 3.0].iter().enumerate() {
        let cfg = OfdmInterfererConfig::new(0..64, rel, derive_seed(MASTER_SEED, &[81, i as u64]));
        let sig = generate_ofdm_interferer(&cfg, 100_000).unwrap();
        let target = 10f64.powf(rel / 10.0);
        let err = (sig.mean_power() - target).abs() / target;
        assert!(err <= 0.01, "interferer power off by {:.3}%", err * 100.0);
    }
    println!("[criterion 8] PASS: AWGN within ±{worst:.3} dB of target (<= 0.05); interferer power within ±1%");
}

#[test]
fn criterion_09_narrowband_rejection_beats_full_band() {
    let threshold = calibrated_threshold();
    let mut lines = Vec::new();
    for (i, rel_power_db) in [0.0, 3.0].into_iter().enumerate() {
        let base = {
            let mut cfg = scenario();
            cfg.threshold = ThresholdSpec::Fixed(threshold);
            cfg.sinr_grid_db = vec![300.0]; // interference-only
            cfg.trials_per_point = 5_000;
            cfg.self_interference_cancellation_db = 0.0;
            cfg
        };

        let mut narrow = base.clone();
        narrow.interferer = Some(OfdmInterfererConfig::new(
            [7],
            rel_power_db,
            derive_seed(MASTER_SEED, &[90, i as u64]),
        ));
        let narrow_res = run_coexistence_sweep(&narrow).expect("narrowband sweep");

        let mut full = base;
        full.interferer = Some(OfdmInterfererConfig::new(
            0..64,
            rel_power_db,
            derive_seed(MASTER_SEED, &[91, i as u64]),
        ));
        let full_res = run_coexistence_sweep(&full).expect("full-band sweep");

        let pn = &narrow_res.points[0];
        let pf = &full_res.points[0];
        let (per_n, per_f) = (pn.packet_error_rate(), pf.packet_error_rate());
        assert!(
            per_n < per_f,
            "PER(narrowband) {per_n:.4} not below PER(full-band) {per_f:.4} at {rel_power_db} dB"
        );
        let (n_lo, n_hi) = pn.per_ci();
        let (f_lo, f_hi) = pf.per_ci();
        assert!(
            n_hi < f_lo,
            "95% CIs overlap at {rel_power_db} dB: narrow [{n_lo:.4},{n_hi:.4}] vs full [{f_lo:.4},{f_hi:.4}]"
        );
        lines.push(format!(
            "{rel_power_db} dB: narrow {per_n:.4} [{n_lo:.4},{n_hi:.4}] < full {per_f:.4} [{f_lo:.4},{f_hi:.4}]"
        ));
    }
    println!(
        "[criterion 9] PASS: equal-power interferers, CIs disjoint — {}",
        lines.join("; ")
    );
}

#[test]
fn criterion_10_sweep_is_thread_count_invariant() {
    let mut cfg = scenario();
    cfg.threshold = ThresholdSpec::Fixed(calibrated_threshold());
    cfg.sinr_grid_db = vec![0.0, 5.0];
    cfg.trials_per_point = 500;

    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_single_link_sweep(&cfg).unwrap().to_csv())
    };
    let csv1 = run_with(1);
    let csv8 = run_with(8);
    assert_eq!(csv1, csv8, "CSV differs between 1 and 8 threads");
    println!(
        "[criterion 10] PASS: 1-thread and 8-thread sweeps byte-identical ({} bytes of CSV)",
        csv1.len()
    );
}

#[test]
fn criterion_11_correlation_throughput_reported() {
    // non-gating: report sustained single-threaded correlation throughput
    let pre = preamble();
    let mut rng = stream_rng(MASTER_SEED, &[110]);
    use rand::Rng;
    let window = BasebandSignal::new(
        (0..WINDOW)
            .map(|_| {
                Complex64::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            })
            .collect(),
        1e6,
    );
    // warm up, then measure
    for _ in 0..5 {
        std::hint::black_box(correlate_preamble(&window, &pre, 1).unwrap());
    }
    let mut best = 0.0f64;
    for _ in 0..5 {
        let reps = 50;
        let start = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(correlate_preamble(&window, &pre, 1).unwrap());
        }
        let rate = (reps * WINDOW) as f64 / start.elapsed().as_secs_f64();
        best = best.max(rate);
    }
    let status = if best >= 1e6 { "meets" } else { "below" };
    println!(
        "[criterion 11] reported (non-gating): {:.2} Msample/s single-threaded correlation, {status} the 1 MSps real-time budget ({:.0} µs per 10k window)",
        best / 1e6,
        1e10 / best
    );
}

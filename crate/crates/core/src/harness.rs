//! Monte Carlo experiment engine: CFAR threshold calibration and
//! detection/PER sweeps over SINR for single-link, multi-UE, and
//! OFDM-coexistence scenarios.
//!
//! Reproducibility: every random quantity is drawn from an RNG stream
//! derived from (master_seed, role, grid index, trial index), so results
//! are bit-identical regardless of thread count or execution order.
//! Aggregation is integer counting, reduced in trial order.
//!
//! Per-trial procedure: each UE draws a random frame and a start offset,
//! packets are superposed, AWGN sized against the composite packet power
//! is added, the optional overlay interferer (after residual-cancellation
//! scaling) is summed in, and the receiver scans the stream with all UE
//! codes registered. A transmitted packet counts as detected when some
//! event starts within `detection_tolerance_samples` of its true offset,
//! and as correct when a within-tolerance event decodes that UE's frame
//! bit-exactly under that UE's code. PER counts everything else: wrong
//! decodes, undecoded detections, and misses.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    apply_self_interference_cancellation, derive_seed, generate_ofdm_interferer, stream_rng,
    superpose, ChannelError, OfdmInterfererConfig, UePlacement,
};
use crate::framing::MacFrame;
use crate::modem::{build_packet_signal, TxConfig};
use crate::receiver::{scan, DetectorConfig, ReceiverError};
use crate::spreading::{hadamard_row, SpreadingCode, DEFAULT_ORDER, FIRST_UE_ROW, PREAMBLE_ROW};

const SALT_CALIBRATION: u64 = 1;
const SALT_TRIAL: u64 = 2;
const SALT_NOISE: u64 = 3;
const SALT_INTERFERER: u64 = 4;

/// Noise-only samples appended after the last packet in each trial stream.
const TRIAL_TAIL_SAMPLES: usize = 128;

/// 95% two-sided normal quantile, pinned for bit-identical CSV output.
const WILSON_Z: f64 = 1.959963984540054;

/// Highest UE count for order-64 codes: rows 2..64.
pub const MAX_UES: usize = DEFAULT_ORDER - FIRST_UE_ROW;

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("false_alarm_target {0} outside (0, 1)")]
    BadFalseAlarmTarget(f64),
    #[error("{got} calibration windows cannot resolve a {target} false-alarm quantile (need >= {need})")]
    InsufficientWindows { got: usize, need: usize, target: f64 },
    #[error("scenario needs n_ues = {expected}, got {got}")]
    WrongUeCount { expected: String, got: usize },
    #[error("n_ues {0} exceeds the {MAX_UES} assignable codes")]
    TooManyUes(usize),
    #[error("sinr grid is empty")]
    EmptyGrid,
    #[error("coexistence sweep requires an interferer")]
    MissingInterferer,
    #[error("payload length {0} exceeds 15 bytes")]
    BadPayload(usize),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
}

/// Payload size per trial: fixed or drawn uniformly from an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadSpec {
    Fixed(usize),
    Range(usize, usize),
}

impl PayloadSpec {
    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            PayloadSpec::Fixed(n) => n,
            PayloadSpec::Range(lo, hi) => rng.gen_range(lo..=hi),
        }
    }

    fn max(&self) -> usize {
        match *self {
            PayloadSpec::Fixed(n) => n,
            PayloadSpec::Range(_, hi) => hi,
        }
    }
}

/// Detection threshold: pinned value or CFAR-calibrated from noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Auto,
    Fixed(f64),
}

/// Full description of one experiment.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub n_ues: usize,
    pub payload_bytes: PayloadSpec,
    pub sinr_grid_db: Vec<f64>,
    pub trials_per_point: usize,
    /// Gap between packets of a multi-packet train (inclusive range).
    /// The sweeps below transmit one packet per UE per trial, so this
    /// only shapes `tx`-style trains; it is carried for config parity.
    pub inter_packet_gap_samples: (usize, usize),
    pub asynchronous: bool,
    pub interferer: Option<OfdmInterfererConfig>,
    pub self_interference_cancellation_db: f64,
    pub master_seed: u64,
    pub threshold: ThresholdSpec,
    pub samples_per_chip: usize,
    pub window_samples: usize,
    pub detection_tolerance_samples: usize,
    pub false_alarm_target: f64,
    /// Noise windows for auto calibration; 0 means the minimum
    /// ceil(10 / false_alarm_target).
    pub calibration_windows: usize,
    pub amplitude: f64,
}

impl ScenarioConfig {
    pub fn new(master_seed: u64) -> Self {
        Self {
            n_ues: 1,
            payload_bytes: PayloadSpec::Fixed(15),
            sinr_grid_db: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            trials_per_point: 10_000,
            inter_packet_gap_samples: (0, 0),
            asynchronous: true,
            interferer: None,
            self_interference_cancellation_db: 30.0,
            master_seed,
            threshold: ThresholdSpec::Auto,
            samples_per_chip: 1,
            window_samples: 10_000,
            detection_tolerance_samples: 2,
            false_alarm_target: 1e-4,
            calibration_windows: 0,
            amplitude: 1.0,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.sinr_grid_db.is_empty() {
            return Err(HarnessError::EmptyGrid);
        }
        if self.n_ues == 0 || self.n_ues > MAX_UES {
            return Err(HarnessError::TooManyUes(self.n_ues));
        }
        if self.payload_bytes.max() > 15 {
            return Err(HarnessError::BadPayload(self.payload_bytes.max()));
        }
        if let PayloadSpec::Range(lo, hi) = self.payload_bytes {
            if lo > hi {
                return Err(HarnessError::BadPayload(lo));
            }
        }
        Ok(())
    }

    /// The threshold actually used: fixed, or calibrated at the
    /// configured false-alarm target.
    pub fn resolve_threshold(&self) -> Result<f64, HarnessError> {
        match self.threshold {
            ThresholdSpec::Fixed(t) => Ok(t),
            ThresholdSpec::Auto => {
                let preamble = hadamard_row(DEFAULT_ORDER, PREAMBLE_ROW).expect("valid preamble");
                let n = if self.calibration_windows == 0 {
                    (10.0 / self.false_alarm_target).ceil() as usize
                } else {
                    self.calibration_windows
                };
                calibrate_threshold(
                    &preamble,
                    self.window_samples,
                    self.false_alarm_target,
                    n,
                    derive_seed(self.master_seed, &[SALT_CALIBRATION]),
                )
            }
        }
    }
}

/// Counts and rates for one grid point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepPoint {
    pub sinr_db: f64,
    pub trials: u64,
    pub detected: u64,
    pub decoded_correct: u64,
    pub decoded_wrong: u64,
    pub undecoded_detected: u64,
    pub missed: u64,
    pub false_alarm_events: u64,
    pub windows_scanned: u64,
    /// Trials that failed internally (counted as missed, never a crash).
    pub anomalies: u64,
}

impl SweepPoint {
    pub fn detection_rate(&self) -> f64 {
        self.detected as f64 / self.trials as f64
    }

    /// Packet error rate: anything but a bit-exact decode, including
    /// missed detections.
    pub fn packet_error_rate(&self) -> f64 {
        (self.trials - self.decoded_correct) as f64 / self.trials as f64
    }

    /// False alarms per scanned window.
    pub fn false_alarm_rate(&self) -> f64 {
        if self.windows_scanned == 0 {
            0.0
        } else {
            self.false_alarm_events as f64 / self.windows_scanned as f64
        }
    }

    pub fn detection_ci(&self) -> (f64, f64) {
        wilson_ci(self.detected, self.trials)
    }

    pub fn per_ci(&self) -> (f64, f64) {
        wilson_ci(self.trials - self.decoded_correct, self.trials)
    }
}

/// One sweep: a row of counts per grid point, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Render as CSV. Row order follows the grid; float formatting is
    /// fixed so identical runs yield byte-identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "sinr_db,detection_rate,det_ci_lo,det_ci_hi,per,per_ci_lo,per_ci_hi,false_alarm_rate,trials\n",
        );
        for p in &self.points {
            let (dlo, dhi) = p.detection_ci();
            let (plo, phi) = p.per_ci();
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                p.sinr_db,
                p.detection_rate(),
                dlo,
                dhi,
                p.packet_error_rate(),
                plo,
                phi,
                p.false_alarm_rate(),
                p.trials
            ));
        }
        out
    }

    /// Pool counts across several per-UE results (same grid).
    pub fn pooled(per_ue: &[SweepResult]) -> SweepResult {
        let n_points = per_ue.first().map_or(0, |r| r.points.len());
        let mut points = Vec::with_capacity(n_points);
        for i in 0..n_points {
            let mut acc = SweepPoint {
                sinr_db: per_ue[0].points[i].sinr_db,
                ..SweepPoint::default()
            };
            for r in per_ue {
                let p = &r.points[i];
                acc.trials += p.trials;
                acc.detected += p.detected;
                acc.decoded_correct += p.decoded_correct;
                acc.decoded_wrong += p.decoded_wrong;
                acc.undecoded_detected += p.undecoded_detected;
                acc.missed += p.missed;
                acc.anomalies += p.anomalies;
                // window-level counters are shared across UEs of one
                // trial; take them from UE 0 only
            }
            acc.false_alarm_events = per_ue[0].points[i].false_alarm_events;
            acc.windows_scanned = per_ue[0].points[i].windows_scanned;
            points.push(acc);
        }
        SweepResult { points }
    }
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_ci(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (WILSON_Z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// CFAR calibration: the empirical (1 − false_alarm_target) quantile of
/// the per-window maximum normalized correlation over pure-noise windows.
/// Deterministic given the seed; windows are evaluated in parallel.
pub fn calibrate_threshold(
    preamble: &SpreadingCode,
    window_samples: usize,
    false_alarm_target: f64,
    n_noise_windows: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    if !(false_alarm_target > 0.0 && false_alarm_target < 1.0) {
        return Err(HarnessError::BadFalseAlarmTarget(false_alarm_target));
    }
    let need = (10.0 / false_alarm_target).ceil() as usize;
    if n_noise_windows < need {
        return Err(HarnessError::InsufficientWindows {
            got: n_noise_windows,
            need,
            target: false_alarm_target,
        });
    }
    let mut maxima = noise_window_maxima(preamble, window_samples, n_noise_windows, seed);
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = 1.0 - false_alarm_target;
    let idx = ((q * n_noise_windows as f64).ceil() as usize)
        .clamp(1, n_noise_windows)
        - 1;
    Ok(maxima[idx])
}

/// Max normalized correlation per pure-noise window. Also used to
/// re-measure the false-alarm rate on held-out noise.
pub fn noise_window_maxima(
    preamble: &SpreadingCode,
    window_samples: usize,
    n_windows: usize,
    seed: u64,
) -> Vec<f64> {
    let expanded: Vec<f64> = preamble.chips().iter().map(|&c| c as f64).collect();
    (0..n_windows as u64)
        .into_par_iter()
        .map(|w| {
            let mut rng = stream_rng(seed, &[w]);
            // real part of complex noise; the normalized correlation is
            // scale-invariant, so unit variance is as good as any
            let window: Vec<f64> = (0..window_samples)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect();
            crate::receiver::correlate_real(&window, &expanded)
                .into_iter()
                .fold(0.0f64, f64::max)
        })
        .collect()
}

#[derive(Debug, Default, Clone, Copy)]
struct UeOutcome {
    detected: bool,
    correct: bool,
    wrong: bool,
    undecoded: bool,
}

#[derive(Debug, Default, Clone)]
struct TrialResult {
    per_ue: Vec<UeOutcome>,
    false_alarms: u64,
    windows: u64,
    anomaly: bool,
}

fn run_trial(
    cfg: &ScenarioConfig,
    tx_configs: &[TxConfig],
    detector: &DetectorConfig,
    point_idx: usize,
    trial_idx: usize,
    sinr_db: f64,
) -> TrialResult {
    match try_run_trial(cfg, tx_configs, detector, point_idx, trial_idx, sinr_db) {
        Ok(r) => r,
        Err(_) => TrialResult {
            per_ue: vec![UeOutcome::default(); cfg.n_ues],
            anomaly: true,
            ..TrialResult::default()
        },
    }
}

fn try_run_trial(
    cfg: &ScenarioConfig,
    tx_configs: &[TxConfig],
    detector: &DetectorConfig,
    point_idx: usize,
    trial_idx: usize,
    sinr_db: f64,
) -> Result<TrialResult, HarnessError> {
    let mut rng = stream_rng(
        cfg.master_seed,
        &[SALT_TRIAL, point_idx as u64, trial_idx as u64],
    );

    // frames first, then offsets, in a fixed draw order
    let mut frames = Vec::with_capacity(cfg.n_ues);
    let mut packets = Vec::with_capacity(cfg.n_ues);
    for tx in tx_configs {
        let addr: u8 = rng.gen();
        let len = cfg.payload_bytes.draw(&mut rng);
        let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let frame = MacFrame::new(addr, payload).map_err(|_| HarnessError::BadPayload(len))?;
        packets.push(build_packet_signal(&frame, tx));
        frames.push(frame);
    }

    let max_len = packets.iter().map(|p| p.len()).max().unwrap_or(0);
    let mut offsets = Vec::with_capacity(cfg.n_ues);
    if cfg.asynchronous {
        for p in &packets {
            offsets.push(rng.gen_range(0..p.len()));
        }
    } else {
        let shared = rng.gen_range(0..max_len);
        offsets.resize(cfg.n_ues, shared);
    }

    let total = packets
        .iter()
        .zip(&offsets)
        .map(|(p, &o)| o + p.len())
        .max()
        .unwrap()
        + TRIAL_TAIL_SAMPLES;

    let placements: Vec<UePlacement> = packets
        .iter()
        .zip(&offsets)
        .enumerate()
        .map(|(i, (p, &o))| UePlacement {
            ue_id: i as u32,
            signal: p,
            offset_samples: o,
            gain_db: 0.0,
        })
        .collect();
    let clean = superpose(&placements, total)?;

    let noise_seed = derive_seed(
        cfg.master_seed,
        &[SALT_NOISE, point_idx as u64, trial_idx as u64],
    );
    let mut stream = crate::channel::apply_awgn(&clean, sinr_db, noise_seed)?;

    if let Some(base) = &cfg.interferer {
        let mut icfg = base.clone();
        icfg.qpsk_seed = derive_seed(
            cfg.master_seed,
            &[SALT_INTERFERER, point_idx as u64, trial_idx as u64],
        );
        let raw = generate_ofdm_interferer(&icfg, stream.len())?;
        let residual =
            apply_self_interference_cancellation(&raw, cfg.self_interference_cancellation_db)?;
        for (s, i) in stream.samples.iter_mut().zip(&residual.samples) {
            *s += i;
        }
    }

    let report = scan(&stream, detector);
    let tol = cfg.detection_tolerance_samples as i64;

    let per_ue = frames
        .iter()
        .zip(&offsets)
        .zip(tx_configs)
        .map(|((frame, &offset), tx)| {
            let row = tx.ue_code.row_index();
            let mut out = UeOutcome::default();
            for e in &report.events {
                if (e.start_index as i64 - offset as i64).abs() > tol {
                    continue;
                }
                out.detected = true;
                if e.matched_code_row == Some(row) && e.decoded.as_ref() == Some(frame) {
                    out.correct = true;
                } else if e.decoded.is_some() {
                    out.wrong = true;
                } else {
                    out.undecoded = true;
                }
            }
            // priority: correct > wrong > undecoded
            if out.correct {
                out.wrong = false;
                out.undecoded = false;
            } else if out.wrong {
                out.undecoded = false;
            }
            out
        })
        .collect();

    let false_alarms = report
        .events
        .iter()
        .filter(|e| {
            offsets
                .iter()
                .all(|&o| (e.start_index as i64 - o as i64).abs() > tol)
        })
        .count() as u64;

    Ok(TrialResult {
        per_ue,
        false_alarms,
        windows: report.windows_scanned,
        anomaly: false,
    })
}

/// Run the scenario grid; returns one result per UE.
fn run_grid(cfg: &ScenarioConfig) -> Result<Vec<SweepResult>, HarnessError> {
    cfg.validate()?;
    let threshold = cfg.resolve_threshold()?;
    let preamble = hadamard_row(DEFAULT_ORDER, PREAMBLE_ROW).expect("valid preamble");

    let tx_configs: Vec<TxConfig> = (0..cfg.n_ues)
        .map(|u| {
            let code = hadamard_row(DEFAULT_ORDER, FIRST_UE_ROW + u).expect("row in range");
            let pre = preamble.clone();
            TxConfig::with_parts(code, pre, cfg.samples_per_chip, cfg.amplitude)
                .expect("validated rows")
        })
        .collect();

    let candidates: Vec<SpreadingCode> = tx_configs.iter().map(|t| t.ue_code.clone()).collect();
    let mut detector = DetectorConfig::new(
        preamble,
        candidates,
        cfg.window_samples,
        threshold,
    )?;
    detector.detection_tolerance_samples = cfg.detection_tolerance_samples;
    detector.samples_per_chip = cfg.samples_per_chip;

    let mut per_ue: Vec<SweepResult> = (0..cfg.n_ues)
        .map(|_| SweepResult { points: Vec::new() })
        .collect();

    for (pi, &sinr_db) in cfg.sinr_grid_db.iter().enumerate() {
        let trials: Vec<TrialResult> = (0..cfg.trials_per_point)
            .into_par_iter()
            .map(|ti| run_trial(cfg, &tx_configs, &detector, pi, ti, sinr_db))
            .collect();

        for ue in 0..cfg.n_ues {
            let mut point = SweepPoint {
                sinr_db,
                ..SweepPoint::default()
            };
            for t in &trials {
                point.trials += 1;
                if t.anomaly {
                    point.anomalies += 1;
                    point.missed += 1;
                    continue;
                }
                let o = t.per_ue[ue];
                if o.detected {
                    point.detected += 1;
                } else {
                    point.missed += 1;
                }
                if o.correct {
                    point.decoded_correct += 1;
                } else if o.wrong {
                    point.decoded_wrong += 1;
                } else if o.undecoded {
                    point.undecoded_detected += 1;
                }
                if ue == 0 {
                    point.false_alarm_events += t.false_alarms;
                    point.windows_scanned += t.windows;
                }
            }
            if ue > 0 {
                // window counters are per-stream, not per-UE
                point.false_alarm_events = per_ue[0].points[pi].false_alarm_events;
                point.windows_scanned = per_ue[0].points[pi].windows_scanned;
            }
            per_ue[ue].points.push(point);
        }
    }
    Ok(per_ue)
}

/// PER and detection rate vs SINR for one UE over AWGN
/// (plus the interferer when configured).
pub fn run_single_link_sweep(cfg: &ScenarioConfig) -> Result<SweepResult, HarnessError> {
    if cfg.n_ues != 1 {
        return Err(HarnessError::WrongUeCount {
            expected: "1".into(),
            got: cfg.n_ues,
        });
    }
    Ok(run_grid(cfg)?.remove(0))
}

/// Per-UE rates for 2..=62 code-multiplexed UEs, synchronous or
/// asynchronous.
pub fn run_multi_ue_sweep(cfg: &ScenarioConfig) -> Result<Vec<SweepResult>, HarnessError> {
    if cfg.n_ues < 2 {
        return Err(HarnessError::WrongUeCount {
            expected: "2..=62".into(),
            got: cfg.n_ues,
        });
    }
    run_grid(cfg)
}

/// Single-link sweep under the OFDM overlay interferer.
pub fn run_coexistence_sweep(cfg: &ScenarioConfig) -> Result<SweepResult, HarnessError> {
    if cfg.interferer.is_none() {
        return Err(HarnessError::MissingInterferer);
    }
    Ok(SweepResult::pooled(&run_grid(cfg)?))
}

//! Receive chain: sliding preamble correlation, threshold detection,
//! despreading, BPSK demodulation, and CRC-checked frame recovery.
//!
//! Detection uses energy-normalized correlation |dot(x, p)| / (‖p‖·‖x‖)
//! of the real part of the received stream against the known preamble, so
//! one calibrated threshold works across signal levels. The stream is
//! scanned in overlapping windows of `window_samples`; wherever the
//! correlation exceeds the threshold, the detector takes the contiguous
//! above-threshold run, ranks its lags by correlation value, and attempts
//! a CRC-checked decode at the top-ranked lags with every candidate code
//! in ascending row order. The winning alignment is the lag with the
//! highest-quality CRC-valid despread (see `process_trigger`): Hadamard
//! preambles have near-unity correlation sidelobes at small shifts
//! (data-dependent, sometimes exact ties), and Hadamard codes alias into
//! one another under chip shifts, so neither the raw argmax nor the first
//! CRC pass identifies the true start reliably.
//!
//! After a decoded packet, scanning resumes past that packet's last
//! sample. After an undecoded peak, scanning resumes one sample past the
//! peak and re-arms once the correlation falls below the threshold, so a
//! sidelobe plateau yields a single event rather than a cascade.
//!
//! Only the real part of the received samples enters correlation and
//! despreading: TX is real BPSK, and the imaginary rail carries only
//! noise and interference. This discards half the interference power at
//! the cost of coherent-complex optimality.

use thiserror::Error;

use crate::framing::{decode_frame, frame_bits, MacFrame, MAX_PAYLOAD_BYTES};
use crate::signal::BasebandSignal;
use crate::spreading::{hard_decision, SpreadingCode, FIRST_UE_ROW};

/// How many lags of an above-threshold run are tried for a CRC-checked
/// decode before the trigger is declared undecodable. Covers the
/// preamble's near-tie sidelobes at ±1..±2 chips plus the data-dependent
/// exact ties at larger shifts, while keeping the per-trigger CRC
/// false-accept budget (candidates × codes × 2^-16) negligible.
pub const DECODE_CANDIDATES_PER_TRIGGER: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum ReceiverError {
    #[error("window of {window} samples is shorter than the {span}-sample preamble")]
    WindowShorterThanPreamble { window: usize, span: usize },
    #[error("candidate code set is empty")]
    NoCandidateCodes,
    #[error("candidate row {0} is reserved (rows 0 and 1 are never assigned to UEs)")]
    ReservedCandidateRow(usize),
    #[error("codes of mixed orders: {0} vs {1}")]
    MixedOrders(usize, usize),
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("window_samples {window} cannot hold the {span}-sample preamble")]
    WindowTooSmall { window: usize, span: usize },
}

/// Receiver configuration: the preamble to hunt for, the registered UE
/// codes to try, and the scan geometry.
#[derive(Debug, Clone)]
pub struct DetectorConfig {
    preamble_code: SpreadingCode,
    candidate_codes: Vec<SpreadingCode>,
    pub window_samples: usize,
    pub threshold: f64,
    pub detection_tolerance_samples: usize,
    pub samples_per_chip: usize,
}

impl DetectorConfig {
    pub fn new(
        preamble_code: SpreadingCode,
        mut candidate_codes: Vec<SpreadingCode>,
        window_samples: usize,
        threshold: f64,
    ) -> Result<Self, ReceiverError> {
        if candidate_codes.is_empty() {
            return Err(ReceiverError::NoCandidateCodes);
        }
        for c in &candidate_codes {
            if c.row_index() < FIRST_UE_ROW {
                return Err(ReceiverError::ReservedCandidateRow(c.row_index()));
            }
            if c.order() != preamble_code.order() {
                return Err(ReceiverError::MixedOrders(c.order(), preamble_code.order()));
            }
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(ReceiverError::BadThreshold(threshold));
        }
        candidate_codes.sort_by_key(|c| c.row_index());
        candidate_codes.dedup_by_key(|c| c.row_index());
        let cfg = Self {
            preamble_code,
            candidate_codes,
            window_samples,
            threshold,
            detection_tolerance_samples: 2,
            samples_per_chip: 1,
        };
        let span = cfg.preamble_span();
        if window_samples < span {
            return Err(ReceiverError::WindowTooSmall {
                window: window_samples,
                span,
            });
        }
        Ok(cfg)
    }

    pub fn preamble_code(&self) -> &SpreadingCode {
        &self.preamble_code
    }

    pub fn candidate_codes(&self) -> &[SpreadingCode] {
        &self.candidate_codes
    }

    /// Preamble length in samples.
    pub fn preamble_span(&self) -> usize {
        self.preamble_code.order() * self.samples_per_chip
    }
}

/// One detection: where the preamble was found and what, if anything,
/// decoded there.
#[derive(Debug, Clone)]
pub struct DetectionEvent {
    /// Sample offset of the preamble start.
    pub start_index: usize,
    /// Normalized correlation at `start_index`, in [0, 1].
    pub peak_value: f64,
    /// Row of the code whose despread body passed the CRC.
    pub matched_code_row: Option<usize>,
    /// The recovered frame, when the CRC verified.
    pub decoded: Option<MacFrame>,
    /// Whether any CRC check actually ran (false when the stream ended
    /// before a full header could be despread).
    pub crc_attempted: bool,
}

/// Scan output plus bookkeeping the harness needs for per-window rates.
#[derive(Debug, Clone)]
pub struct ScanReport {
    pub events: Vec<DetectionEvent>,
    pub windows_scanned: u64,
}

/// Normalized sliding correlation of a window against the preamble:
/// `out[k] = |dot(re(window[k..k+span]), chips)| / (‖chips‖·‖segment‖)`,
/// one value per lag, in [0, 1]. A zero-energy segment scores 0.
pub fn correlate_preamble(
    window: &BasebandSignal,
    preamble: &SpreadingCode,
    samples_per_chip: usize,
) -> Result<Vec<f64>, ReceiverError> {
    let expanded = expand_chips(preamble, samples_per_chip);
    let x = window.real();
    if x.len() < expanded.len() {
        return Err(ReceiverError::WindowShorterThanPreamble {
            window: x.len(),
            span: expanded.len(),
        });
    }
    Ok(correlate_real(&x, &expanded))
}

fn expand_chips(code: &SpreadingCode, samples_per_chip: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(code.order() * samples_per_chip);
    for &c in code.chips() {
        for _ in 0..samples_per_chip {
            out.push(c as f64);
        }
    }
    out
}

/// Core correlation on real samples; `x.len() >= p.len()` is the caller's
/// responsibility.
pub(crate) fn correlate_real(x: &[f64], p: &[f64]) -> Vec<f64> {
    let span = p.len();
    let n_lags = x.len() - span + 1;
    let p_norm = (span as f64).sqrt();
    // prefix sums of x^2 give each segment's energy in O(1)
    let mut energy = Vec::with_capacity(x.len() + 1);
    energy.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v * v;
        energy.push(acc);
    }
    let mut out = Vec::with_capacity(n_lags);
    for k in 0..n_lags {
        let seg_energy = energy[k + span] - energy[k];
        if seg_energy <= 0.0 {
            out.push(0.0);
            continue;
        }
        let dot: f64 = x[k..k + span].iter().zip(p).map(|(&a, &b)| a * b).sum();
        out.push(dot.abs() / (p_norm * seg_energy.sqrt()));
    }
    out
}

/// Despread and hard-decide a frame body: the first 32 bits give the
/// header, whose length field determines the total frame bits
/// B = 32 + 8·L. Returns min(B, max_bits) bits, or fewer if the stream
/// ends early; empty when even the header does not fit.
pub fn demodulate_body(
    body_samples: &[f64],
    code: &SpreadingCode,
    max_bits: usize,
    samples_per_chip: usize,
) -> Vec<bool> {
    demodulate_body_soft(body_samples, code, max_bits, samples_per_chip).0
}

/// `demodulate_body` plus an alignment-quality figure: the mean |soft
/// metric| over the returned bits. A correctly aligned despread of a
/// clean ±1 body gives exactly 1.0; chip-shifted aliases of other codes
/// are strictly lower, which is what the detector's lag arbitration keys
/// on.
pub fn demodulate_body_soft(
    body_samples: &[f64],
    code: &SpreadingCode,
    max_bits: usize,
    samples_per_chip: usize,
) -> (Vec<bool>, f64) {
    let bit_span = code.order() * samples_per_chip;
    let header_bits = 32.min(max_bits);
    if body_samples.len() < header_bits * bit_span || header_bits < 32 {
        return (Vec::new(), 0.0);
    }
    let mut quality_acc = 0.0;
    let mut bits = despread_region(
        &body_samples[..header_bits * bit_span],
        code,
        samples_per_chip,
        &mut quality_acc,
    );
    let payload_len = bits[8..12].iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let total_bits = frame_bits(payload_len).min(max_bits);
    let available = body_samples.len() / bit_span;
    let take = total_bits.min(available);
    if take > header_bits {
        bits.extend(despread_region(
            &body_samples[header_bits * bit_span..take * bit_span],
            code,
            samples_per_chip,
            &mut quality_acc,
        ));
    }
    let quality = quality_acc / bits.len() as f64;
    (bits, quality)
}

fn despread_region(
    samples: &[f64],
    code: &SpreadingCode,
    samples_per_chip: usize,
    quality_acc: &mut f64,
) -> Vec<bool> {
    let order = code.order();
    let bit_span = order * samples_per_chip;
    samples
        .chunks_exact(bit_span)
        .map(|group| {
            let mut dot = 0.0;
            for (chip_idx, &c) in code.chips().iter().enumerate() {
                let base = chip_idx * samples_per_chip;
                let mut s = 0.0;
                for v in &group[base..base + samples_per_chip] {
                    s += v;
                }
                dot += s * c as f64;
            }
            let metric = dot / bit_span as f64;
            *quality_acc += metric.abs();
            hard_decision(metric)
        })
        .collect()
}

/// Scan a stream for packets. See the module docs for the policy.
pub fn detect_and_decode(stream: &BasebandSignal, cfg: &DetectorConfig) -> Vec<DetectionEvent> {
    scan(stream, cfg).events
}

/// `detect_and_decode` plus window bookkeeping.
pub fn scan(stream: &BasebandSignal, cfg: &DetectorConfig) -> ScanReport {
    let x = stream.real();
    let expanded = expand_chips(&cfg.preamble_code, cfg.samples_per_chip);
    let span = expanded.len();
    let mut events = Vec::new();
    let mut windows_scanned = 0u64;
    let mut pos = 0usize;
    let mut armed = true;

    'outer: loop {
        if pos + span > x.len() {
            break;
        }
        let w_end = (pos + cfg.window_samples).min(x.len());
        let corr = correlate_real(&x[pos..w_end], &expanded);
        windows_scanned += 1;

        let mut k = 0usize;
        while k < corr.len() {
            let c = corr[k];
            if !armed {
                if c <= cfg.threshold {
                    armed = true;
                }
                k += 1;
                continue;
            }
            if c > cfg.threshold {
                let mut end = k;
                while end < corr.len() && corr[end] > cfg.threshold {
                    end += 1;
                }
                // run clipped by the window while more stream remains:
                // re-anchor the window at the trigger to see the full run
                if end == corr.len() && w_end < x.len() && k > 0 {
                    pos += k;
                    continue 'outer;
                }
                match process_trigger(&x, &corr[k..end], pos + k, span, cfg) {
                    TriggerOutcome::Decoded { decoded, resume_at } => {
                        events.extend(decoded);
                        // the resume point is past the decoded packet, so
                        // any correlation there belongs to fresh signal
                        pos = resume_at;
                        armed = true;
                        continue 'outer;
                    }
                    TriggerOutcome::Undecoded(event) => {
                        // resume one past the peak, disarmed until the
                        // correlation falls below threshold so a sidelobe
                        // plateau yields one event, not a cascade
                        let resume = event.start_index + 1;
                        events.push(event);
                        pos = resume;
                        armed = false;
                        continue 'outer;
                    }
                }
            }
            k += 1;
        }
        // no trigger: advance to the first unexamined lag
        pos += corr.len();
    }

    ScanReport {
        events,
        windows_scanned,
    }
}

enum TriggerOutcome {
    Decoded {
        decoded: Vec<DetectionEvent>,
        resume_at: usize,
    },
    Undecoded(DetectionEvent),
}

/// One CRC-valid despread: (code row, frame, frame length in bits).
type Decode = (usize, MacFrame, usize);

/// Handle one above-threshold run.
///
/// All candidate codes are attempted at each of the top-ranked lags, and
/// the winning alignment is the lag whose best CRC-valid decode has the
/// highest despread quality (mean |soft metric|); ties fall back to the
/// correlation value, then the earlier lag. Quality — rather than the
/// first CRC pass or the raw argmax — arbitrates because Hadamard rows
/// alias under chip shifts: row 2 shifted by one chip is exactly row 3,
/// and a ±1-shifted despread of a row-4 body re-decodes the same frame
/// under rows 4, 5 and 6 at roughly half amplitude, all CRC-valid. The
/// true alignment despreads at full ±1 metric amplitude; every shifted
/// alias is strictly weaker. Synchronized code-multiplexed packets each
/// produce an event at the shared winning lag.
fn process_trigger(
    x: &[f64],
    run: &[f64],
    run_start_abs: usize,
    span: usize,
    cfg: &DetectorConfig,
) -> TriggerOutcome {
    let max_bits = frame_bits(MAX_PAYLOAD_BYTES);
    let bit_span = cfg.preamble_code.order() * cfg.samples_per_chip;

    let mut ranked: Vec<usize> = (0..run.len()).collect();
    ranked.sort_by(|&a, &b| run[b].partial_cmp(&run[a]).unwrap().then(a.cmp(&b)));

    let mut crc_attempted = false;
    let mut best: Option<(usize, f64, Vec<Decode>)> = None;
    for &rel in ranked.iter().take(DECODE_CANDIDATES_PER_TRIGGER) {
        let body_start = run_start_abs + rel + span;
        if body_start >= x.len() {
            continue;
        }
        let body = &x[body_start..];
        let mut decodes: Vec<Decode> = Vec::new();
        let mut lag_quality = 0.0f64;
        for code in &cfg.candidate_codes {
            let (bits, quality) =
                demodulate_body_soft(body, code, max_bits, cfg.samples_per_chip);
            if bits.len() >= 32 {
                crc_attempted = true;
            }
            if let Ok(frame) = decode_frame(&bits) {
                decodes.push((code.row_index(), frame, bits.len()));
                lag_quality = lag_quality.max(quality);
            }
        }
        if decodes.is_empty() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((prev_rel, prev_q, _)) => {
                lag_quality > *prev_q
                    || (lag_quality == *prev_q
                        && (run[rel] > run[*prev_rel]
                            || (run[rel] == run[*prev_rel] && rel < *prev_rel)))
            }
        };
        if better {
            best = Some((rel, lag_quality, decodes));
        }
    }

    if let Some((rel, quality, decodes)) = best {
        let coarse = Aligned {
            lag: run_start_abs + rel,
            corr: run[rel],
            quality,
            decodes,
        };
        let final_pick = refine_alignment(x, coarse, span, cfg);
        let longest_bits = final_pick.decodes.iter().map(|d| d.2).max().unwrap();
        let resume_at = final_pick.lag + span + longest_bits * bit_span;
        let decoded = final_pick
            .decodes
            .into_iter()
            .map(|(row, frame, _)| DetectionEvent {
                start_index: final_pick.lag,
                peak_value: final_pick.corr,
                matched_code_row: Some(row),
                decoded: Some(frame),
                crc_attempted: true,
            })
            .collect();
        return TriggerOutcome::Decoded { decoded, resume_at };
    }

    // nothing decoded: report the run's peak (earliest wins on ties)
    let peak_rel = ranked[0];
    TriggerOutcome::Undecoded(DetectionEvent {
        start_index: run_start_abs + peak_rel,
        peak_value: run[peak_rel],
        matched_code_row: None,
        decoded: None,
        crc_attempted,
    })
}

struct Aligned {
    lag: usize,
    corr: f64,
    quality: f64,
    decodes: Vec<Decode>,
}

/// Fine alignment around a CRC-valid coarse decode.
///
/// Codes with short Walsh periods are shift-invariant at multiples of
/// their period, so a bit-exact, CRC-valid despread also exists up to
/// half a bit early or late (the per-bit majority still wins); a
/// noise-broken correlation run can therefore commit to a lag on that
/// lattice away from the true start. The despread quality is strictly
/// maximal at the true alignment, so each decoded code hill-climbs its
/// quality within ±1 bit span, and the best refined lag (quality, then
/// correlation, then earliest) that still decodes and still clears the
/// detection threshold replaces the coarse pick.
fn refine_alignment(x: &[f64], coarse: Aligned, span: usize, cfg: &DetectorConfig) -> Aligned {
    let max_bits = frame_bits(MAX_PAYLOAD_BYTES);
    let bit_span = cfg.preamble_code.order() * cfg.samples_per_chip;
    let expanded = expand_chips(&cfg.preamble_code, cfg.samples_per_chip);

    let mut candidate_lags: Vec<usize> = Vec::new();
    for &(row, _, _) in &coarse.decodes {
        let code = cfg
            .candidate_codes
            .iter()
            .find(|c| c.row_index() == row)
            .expect("decoded row is a candidate");
        let lo = coarse.lag.saturating_sub(bit_span - 1);
        let hi = coarse.lag + bit_span - 1;
        let mut best_lag = coarse.lag;
        let mut best_q = f64::NEG_INFINITY;
        for lag in lo..=hi {
            if lag + span >= x.len() {
                break;
            }
            let (bits, q) = demodulate_body_soft(&x[lag + span..], code, max_bits, cfg.samples_per_chip);
            if bits.len() < 32 {
                continue;
            }
            if q > best_q {
                best_q = q;
                best_lag = lag;
            }
        }
        if !candidate_lags.contains(&best_lag) {
            candidate_lags.push(best_lag);
        }
    }

    let mut winner: Option<Aligned> = None;
    for lag in candidate_lags {
        if lag == coarse.lag {
            continue;
        }
        let corr = match correlation_at(x, &expanded, lag) {
            Some(c) if c > cfg.threshold => c,
            _ => continue,
        };
        let mut decodes: Vec<Decode> = Vec::new();
        let mut quality = 0.0f64;
        for code in &cfg.candidate_codes {
            let (bits, q) =
                demodulate_body_soft(&x[lag + span..], code, max_bits, cfg.samples_per_chip);
            if let Ok(frame) = decode_frame(&bits) {
                decodes.push((code.row_index(), frame, bits.len()));
                quality = quality.max(q);
            }
        }
        if decodes.is_empty() {
            continue;
        }
        let cand = Aligned {
            lag,
            corr,
            quality,
            decodes,
        };
        let better = match &winner {
            None => true,
            Some(w) => {
                cand.quality > w.quality
                    || (cand.quality == w.quality
                        && (cand.corr > w.corr || (cand.corr == w.corr && cand.lag < w.lag)))
            }
        };
        if better {
            winner = Some(cand);
        }
    }

    match winner {
        Some(w) if w.quality > coarse.quality
            || (w.quality == coarse.quality
                && (w.corr > coarse.corr || (w.corr == coarse.corr && w.lag < coarse.lag))) =>
        {
            w
        }
        _ => coarse,
    }
}

/// Normalized correlation at one lag (same definition as the sliding
/// form), or None when the segment does not fit.
fn correlation_at(x: &[f64], expanded: &[f64], lag: usize) -> Option<f64> {
    let span = expanded.len();
    if lag + span > x.len() {
        return None;
    }
    let seg = &x[lag..lag + span];
    let energy: f64 = seg.iter().map(|&v| v * v).sum();
    if energy <= 0.0 {
        return Some(0.0);
    }
    let dot: f64 = seg.iter().zip(expanded).map(|(&a, &b)| a * b).sum();
    Some(dot.abs() / ((span as f64).sqrt() * energy.sqrt()))
}

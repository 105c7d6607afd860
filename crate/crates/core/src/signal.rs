//! Complex baseband sample buffers shared by the TX, channel, and RX stages.

use num_complex::Complex64;

/// Default sample rate: 1 MSps over the 1 MHz channel.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1e6;

/// A finite sequence of complex I/Q samples at a declared sample rate.
///
/// Modem output is purely real (BPSK chips on the I rail); the channel
/// stages add complex noise and interference.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
}

impl BasebandSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    /// All-zero signal of the given length at the default sample rate.
    pub fn zeros(len: usize) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len], DEFAULT_SAMPLE_RATE_HZ)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean per-sample power |x|^2 over the whole buffer.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Mean per-sample power over the nonzero-signal region only.
    ///
    /// This is the SINR power reference: gaps between packets do not
    /// dilute the measured signal power. Returns 0.0 for an all-zero
    /// signal.
    pub fn nonzero_region_power(&self) -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for s in &self.samples {
            let p = s.norm_sqr();
            if p > 0.0 {
                acc += p;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            acc / n as f64
        }
    }

    /// Real parts of all samples. The receiver operates on this view.
    pub fn real(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.re).collect()
    }
}

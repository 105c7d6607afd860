//! Walsh-Hadamard spreading codes and chip-level spreading/despreading.
//!
//! Codes are rows of the Sylvester-construction Hadamard matrix in ±1 chip
//! form; the row index is the code identity. Row 0 (all ones) is a DC
//! sequence and is never assigned to a UE; row 1 is reserved for the packet
//! preamble. Assignable UE codes are rows 2..order.
//!
//! Bit-to-symbol convention, fixed globally: bit 0 → +1, bit 1 → −1.
//! A soft despread metric of exactly 0 decides bit 0.

use thiserror::Error;

/// Hadamard row reserved for the packet preamble.
pub const PREAMBLE_ROW: usize = 1;
/// Smallest Hadamard row index assignable to a UE (rows 0 and 1 are reserved).
pub const FIRST_UE_ROW: usize = 2;
/// Default spreading factor: chips per bit.
pub const DEFAULT_ORDER: usize = 64;

const MAX_ORDER: usize = 4096;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpreadingError {
    #[error("order {0} is not a power of two in [2, {MAX_ORDER}]")]
    InvalidOrder(usize),
    #[error("row index {row} out of range for order {order}")]
    RowOutOfRange { row: usize, order: usize },
    #[error("chip sequence length {len} is not a multiple of the code order {order}")]
    LengthNotMultiple { len: usize, order: usize },
}

/// One row of a Sylvester Hadamard matrix in ±1 chip form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpreadingCode {
    order: usize,
    row_index: usize,
    chips: Vec<i8>,
}

impl SpreadingCode {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row_index(&self) -> usize {
        self.row_index
    }

    /// The ±1 chips of this code.
    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    /// Exact integer dot product with another code of the same order.
    pub fn dot(&self, other: &SpreadingCode) -> i64 {
        self.chips
            .iter()
            .zip(&other.chips)
            .map(|(&a, &b)| a as i64 * b as i64)
            .sum()
    }
}

/// Row `row_index` of the Sylvester Hadamard matrix of the given order,
/// mapped {0 → +1, 1 → −1} from the binary construction.
///
/// Entry (i, j) of the Sylvester matrix is (−1)^popcount(i & j), so the
/// row can be generated directly without materializing the matrix.
pub fn hadamard_row(order: usize, row_index: usize) -> Result<SpreadingCode, SpreadingError> {
    if !order.is_power_of_two() || !(2..=MAX_ORDER).contains(&order) {
        return Err(SpreadingError::InvalidOrder(order));
    }
    if row_index >= order {
        return Err(SpreadingError::RowOutOfRange {
            row: row_index,
            order,
        });
    }
    let chips = (0..order)
        .map(|j| {
            if (row_index & j).count_ones().is_multiple_of(2) {
                1
            } else {
                -1
            }
        })
        .collect();
    Ok(SpreadingCode {
        order,
        row_index,
        chips,
    })
}

/// Symbol for a bit under the global BPSK convention: 0 → +1, 1 → −1.
#[inline]
pub fn bit_to_symbol(bit: bool) -> f64 {
    if bit {
        -1.0
    } else {
        1.0
    }
}

/// Hard decision on a soft despread metric. Exactly 0 decides bit 0.
#[inline]
pub fn hard_decision(metric: f64) -> bool {
    metric < 0.0
}

/// Spread a bit sequence: bit k contributes symbol(k) × code chips at
/// positions [k·order, (k+1)·order). Output chips are exactly ±1.
pub fn spread(bits: &[bool], code: &SpreadingCode) -> Vec<i8> {
    let mut chips = Vec::with_capacity(bits.len() * code.order);
    for &bit in bits {
        let s: i8 = if bit { -1 } else { 1 };
        chips.extend(code.chips.iter().map(|&c| s * c));
    }
    chips
}

/// Despread a real sample sequence: one soft metric per group of `order`
/// samples, metric = dot(group, chips) / order.
pub fn despread(samples: &[f64], code: &SpreadingCode) -> Result<Vec<f64>, SpreadingError> {
    if !samples.len().is_multiple_of(code.order) {
        return Err(SpreadingError::LengthNotMultiple {
            len: samples.len(),
            order: code.order,
        });
    }
    Ok(samples
        .chunks_exact(code.order)
        .map(|group| {
            let dot: f64 = group
                .iter()
                .zip(&code.chips)
                .map(|(&x, &c)| x * c as f64)
                .sum();
            dot / code.order as f64
        })
        .collect())
}

//! MAC frame construction and parsing.
//!
//! Frame layout, MSB-first per field, fields in transmission order:
//!
//! ```text
//! +---------+--------+----------+------------------+---------+
//! | address | length | reserved | payload          | CRC     |
//! | 8 bit   | 4 bit  | 4 bit    | 0..15 bytes      | 16 bit  |
//! +---------+--------+----------+------------------+---------+
//! ```
//!
//! Serialized length is 32 + 8·len(payload) bits. The CRC is
//! CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no final
//! XOR) over the address, length, reserved, and payload bits. The exact
//! field widths are an assumption: the upstream hardware frame layout is
//! not published, and this layout makes a max-payload packet spread to
//! within 3% of the 10,000-sample packet budget.
//!
//! `decode_frame` never panics on malformed input; corrupted air frames
//! are a normal event, reported by value.

use thiserror::Error;

/// Maximum payload the 4-bit length field can describe.
pub const MAX_PAYLOAD_BYTES: usize = 15;
/// Bits in a frame with an empty payload (header + CRC).
pub const HEADER_AND_CRC_BITS: usize = 32;

/// Serialized frame length in bits for a given payload length.
#[inline]
pub fn frame_bits(payload_len: usize) -> usize {
    HEADER_AND_CRC_BITS + 8 * payload_len
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FramingError {
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD_BYTES}-byte limit")]
    PayloadTooLong(usize),
}

/// Why a received bit sequence failed to parse as a frame.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IntegrityError {
    #[error("{got} bits is shorter than the {HEADER_AND_CRC_BITS}-bit minimum frame")]
    TooShort { got: usize },
    #[error("length field implies {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("CRC mismatch: expected {expected:#06x}, received {received:#06x}")]
    CrcMismatch { expected: u16, received: u16 },
}

/// One uplink MAC frame: source address plus 0–15 payload bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacFrame {
    source_address: u8,
    payload: Vec<u8>,
}

impl MacFrame {
    pub fn new(source_address: u8, payload: Vec<u8>) -> Result<Self, FramingError> {
        if payload.len() > MAX_PAYLOAD_BYTES {
            return Err(FramingError::PayloadTooLong(payload.len()));
        }
        Ok(Self {
            source_address,
            payload,
        })
    }

    pub fn source_address(&self) -> u8 {
        self.source_address
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// CRC over the serialized header and payload.
    pub fn crc(&self) -> u16 {
        crc16_ccitt_false(&self.header_and_payload_bytes())
    }

    fn header_and_payload_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(2 + self.payload.len());
        bytes.push(self.source_address);
        bytes.push((self.payload.len() as u8) << 4); // length | reserved(0)
        bytes.extend_from_slice(&self.payload);
        bytes
    }

    /// Serialize to bits, MSB-first per field.
    pub fn encode(&self) -> Vec<bool> {
        let bytes = self.header_and_payload_bytes();
        let crc = crc16_ccitt_false(&bytes);
        let mut bits = Vec::with_capacity(frame_bits(self.payload.len()));
        for b in bytes {
            push_bits_msb(&mut bits, b as u16, 8);
        }
        push_bits_msb(&mut bits, crc, 16);
        bits
    }

    /// Parse a received bit sequence. Returns the frame iff the bit count
    /// matches the length field exactly and the CRC verifies.
    pub fn decode(bits: &[bool]) -> Result<Self, IntegrityError> {
        if bits.len() < HEADER_AND_CRC_BITS {
            return Err(IntegrityError::TooShort { got: bits.len() });
        }
        let address = take_bits_msb(&bits[0..8]) as u8;
        let payload_len = take_bits_msb(&bits[8..12]) as usize;
        let expected = frame_bits(payload_len);
        if bits.len() != expected {
            return Err(IntegrityError::LengthMismatch {
                expected,
                got: bits.len(),
            });
        }
        let mut payload = Vec::with_capacity(payload_len);
        for k in 0..payload_len {
            payload.push(take_bits_msb(&bits[16 + 8 * k..24 + 8 * k]) as u8);
        }
        let received_crc = take_bits_msb(&bits[expected - 16..]);
        // CRC over the bits as received (covers the reserved field too)
        let computed = crc16_ccitt_false_bits(&bits[..expected - 16]);
        if computed != received_crc {
            return Err(IntegrityError::CrcMismatch {
                expected: computed,
                received: received_crc,
            });
        }
        Ok(Self {
            source_address: address,
            payload,
        })
    }
}

/// Serialize a frame built from raw parts.
pub fn encode_frame(source_address: u8, payload: &[u8]) -> Result<Vec<bool>, FramingError> {
    Ok(MacFrame::new(source_address, payload.to_vec())?.encode())
}

/// Parse a received bit sequence into a frame.
pub fn decode_frame(bits: &[bool]) -> Result<MacFrame, IntegrityError> {
    MacFrame::decode(bits)
}

fn push_bits_msb(bits: &mut Vec<bool>, value: u16, width: usize) {
    for i in (0..width).rev() {
        bits.push((value >> i) & 1 == 1);
    }
}

fn take_bits_msb(bits: &[bool]) -> u16 {
    bits.iter().fold(0u16, |acc, &b| (acc << 1) | b as u16)
}

const CRC_POLY: u16 = 0x1021;
const CRC_INIT: u16 = 0xFFFF;

const CRC_TABLE: [u16; 256] = build_crc_table();

const fn build_crc_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ CRC_POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// CRC-16/CCITT-FALSE over bytes, table-driven.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    data.iter().fold(CRC_INIT, |crc, &b| {
        (crc << 8) ^ CRC_TABLE[((crc >> 8) ^ b as u16) as usize & 0xFF]
    })
}

/// CRC-16/CCITT-FALSE over an arbitrary bit sequence, MSB-first.
/// Agrees with the byte form on byte-aligned input; empty input
/// returns the initial register value 0xFFFF.
pub fn crc16_ccitt_false_bits(bits: &[bool]) -> u16 {
    bits.iter().fold(CRC_INIT, |crc, &bit| {
        let top = (crc >> 15) & 1 == 1;
        let shifted = crc << 1;
        if top != bit {
            shifted ^ CRC_POLY
        } else {
            shifted
        }
    })
}

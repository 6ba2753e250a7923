//! Secret-message bitstreams.
//!
//! A payload is framed as a 32-bit big-endian bit count followed by the
//! payload bits. Once the frame is exhausted, readers keep drawing padding
//! bits from a caller-supplied generator; padding is appended to the stream
//! so every later peek sees the same bits.

use rand::RngCore;
use thiserror::Error;

/// Width of the length header in bits.
pub const HEADER_BITS: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitError {
    #[error("payload of {0} bits does not fit a 32-bit length header")]
    Oversize(usize),
    #[error("stream holds {available} bits, frame needs {needed}")]
    Truncated { needed: usize, available: usize },
    #[error("index {index} does not fit in {width} bits")]
    IndexOutOfRange { index: u64, width: u32 },
    #[error("bit width {0} outside 1..=32")]
    BadWidth(u32),
}

/// A framed message with a read cursor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMessage {
    bits: Vec<bool>,
    cursor: usize,
    frame_len: usize,
}

impl BitMessage {
    /// Wraps raw bits without framing. The whole sequence counts as frame.
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let frame_len = bits.len();
        Self {
            bits,
            cursor: 0,
            frame_len,
        }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Total bits currently held, including any padding drawn so far.
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of bits belonging to the frame (header + payload).
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// True once every frame bit has been consumed.
    pub fn frame_consumed(&self) -> bool {
        self.cursor >= self.frame_len
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    fn ensure(&mut self, upto: usize, pad_rng: &mut dyn RngCore) {
        while self.bits.len() < upto {
            let word = pad_rng.next_u32();
            let need = (upto - self.bits.len()).min(32);
            self.bits.extend((0..need).map(|i| (word >> (31 - i)) & 1 == 1));
        }
    }

    /// Returns `n` bits starting at the cursor without consuming them.
    pub fn peek(&mut self, n: usize, pad_rng: &mut dyn RngCore) -> &[bool] {
        self.ensure(self.cursor + n, pad_rng);
        &self.bits[self.cursor..self.cursor + n]
    }

    /// Moves the cursor forward over bits that must already be present.
    pub fn advance(&mut self, n: usize) {
        assert!(self.cursor + n <= self.bits.len(), "advance past peeked bits");
        self.cursor += n;
    }

    /// Consumes `width` bits, most significant first, as a group index.
    pub fn next_index(&mut self, width: u32, pad_rng: &mut dyn RngCore) -> Result<u32, BitError> {
        if width == 0 || width > 32 {
            return Err(BitError::BadWidth(width));
        }
        let index = bits_to_u64(self.peek(width as usize, pad_rng)) as u32;
        self.cursor += width as usize;
        Ok(index)
    }

    /// Consumes a single bit.
    pub fn next_bit(&mut self, pad_rng: &mut dyn RngCore) -> bool {
        let bit = self.peek(1, pad_rng)[0];
        self.cursor += 1;
        bit
    }
}

/// Big-endian fold of a bit slice.
pub fn bits_to_u64(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

/// Big-endian `width`-bit representation of `index`.
pub fn index_to_bits(index: u64, width: u32) -> Result<Vec<bool>, BitError> {
    if width > 64 {
        return Err(BitError::BadWidth(width));
    }
    if width < 64 && index >> width != 0 {
        return Err(BitError::IndexOutOfRange { index, width });
    }
    Ok((0..width).rev().map(|i| (index >> i) & 1 == 1).collect())
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
        .collect()
}

/// Packs bits into bytes, zero-filling the final partial byte.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
        })
        .collect()
}

/// Header ∥ payload.
pub fn frame_bits(payload: &[bool]) -> Result<BitMessage, BitError> {
    let n = payload.len();
    if n as u64 > u32::MAX as u64 {
        return Err(BitError::Oversize(n));
    }
    let mut bits = index_to_bits(n as u64, HEADER_BITS as u32)?;
    bits.extend_from_slice(payload);
    Ok(BitMessage::from_bits(bits))
}

pub fn frame(payload: &[u8]) -> Result<BitMessage, BitError> {
    frame_bits(&bytes_to_bits(payload))
}

/// Reads the header and returns exactly the payload bits it announces.
pub fn deframe_bits(bits: &[bool]) -> Result<Vec<bool>, BitError> {
    if bits.len() < HEADER_BITS {
        return Err(BitError::Truncated {
            needed: HEADER_BITS,
            available: bits.len(),
        });
    }
    let n = bits_to_u64(&bits[..HEADER_BITS]) as usize;
    let end = HEADER_BITS + n;
    if bits.len() < end {
        return Err(BitError::Truncated {
            needed: end,
            available: bits.len(),
        });
    }
    Ok(bits[HEADER_BITS..end].to_vec())
}

/// Byte-level deframe. Payload bit counts that are not a multiple of eight
/// are zero-filled in the last byte.
pub fn deframe(bits: &[bool]) -> Result<Vec<u8>, BitError> {
    deframe_bits(bits).map(|b| bits_to_bytes(&b))
}

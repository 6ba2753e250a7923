//! Arithmetic-coding steganography over the top `h` tokens.
//!
//! The message is read as a binary fraction. Each step splits the current
//! interval `[low, high)` among the truncated tokens in proportion to their
//! masses and emits the token whose subinterval holds the message value.
//! Bits shared by both ends of the chosen subinterval are then fixed: they
//! are consumed from the message and shifted out of the state. Only
//! settled bits are ever emitted, so no carry propagation is needed.

use rand::RngCore;

use crate::bitio::{bits_to_u64, BitMessage};
use crate::lm::ConditionalDistribution;
use crate::stego::{CodecError, StegoCodec, StepOutcome};
use crate::TokenId;

pub const DEFAULT_PRECISION: u32 = 52;

#[derive(Debug, Clone)]
pub struct Arithmetic {
    h: usize,
    precision: u32,
    low: u64,
    high: u64,
}

/// Subinterval bounds relative to `low` for the truncated tokens. Tokens
/// whose scaled width rounds to zero are dropped; the rounding slack goes to
/// the first token.
fn partition(dist: &ConditionalDistribution, h: usize, range: u64) -> Vec<(TokenId, u64, u64)> {
    let top = &dist.entries()[..h.min(dist.len())];
    let total: u64 = top.iter().map(|e| e.mass).sum();
    let widths: Vec<(TokenId, u64)> = top
        .iter()
        .map(|e| (e.token, (e.mass as u128 * range as u128 / total as u128) as u64))
        .filter(|&(_, w)| w > 0)
        .collect();
    let used: u64 = widths.iter().map(|w| w.1).sum();
    let mut out = Vec::with_capacity(widths.len().max(1));
    let mut cum = 0;
    if widths.is_empty() {
        out.push((top[0].token, 0, range));
        return out;
    }
    for (i, (t, w)) in widths.into_iter().enumerate() {
        let w = if i == 0 { w + range - used } else { w };
        out.push((t, cum, cum + w));
        cum += w;
    }
    out
}

impl Arithmetic {
    pub fn new(h: usize, precision: u32) -> Result<Self, CodecError> {
        if h < 1 {
            return Err(CodecError::Config("arithmetic h must be at least 1".into()));
        }
        if !(8..=62).contains(&precision) {
            return Err(CodecError::Config(format!("arithmetic precision {precision} outside 8..=62")));
        }
        Ok(Self {
            h,
            precision,
            low: 0,
            high: 1u64 << precision,
        })
    }

    fn mask(&self) -> u64 {
        (1u64 << self.precision) - 1
    }

    /// Narrows to `[lo, hi)` and shifts out the settled prefix, returning it.
    fn narrow(&mut self, lo: u64, hi: u64) -> Vec<bool> {
        let last = hi - 1;
        let n = ((lo ^ last) << (64 - self.precision)).leading_zeros().min(self.precision);
        let settled = (0..n)
            .map(|i| (lo >> (self.precision - 1 - i)) & 1 == 1)
            .collect();
        if n == self.precision {
            self.low = 0;
            self.high = 1u64 << self.precision;
        } else {
            let fill = (1u64 << n) - 1;
            self.low = (lo << n) & self.mask();
            self.high = (((last << n) & self.mask()) | fill) + 1;
        }
        settled
    }

    pub fn state(&self) -> (u64, u64) {
        (self.low, self.high)
    }
}

impl StegoCodec for Arithmetic {
    fn embed_step(
        &mut self,
        dist: &ConditionalDistribution,
        msg: &mut BitMessage,
        _sample_rng: &mut dyn RngCore,
        pad_rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, CodecError> {
        let value = bits_to_u64(msg.peek(self.precision as usize, pad_rng));
        let range = self.high - self.low;
        let offset = value - self.low;
        let parts = partition(dist, self.h, range);
        let &(token, lo, hi) = parts
            .iter()
            .find(|&&(_, lo, hi)| (lo..hi).contains(&offset))
            .expect("message value inside the current interval");
        let settled = self.narrow(self.low + lo, self.low + hi);
        msg.advance(settled.len());
        Ok(StepOutcome {
            token,
            bits: settled.len(),
            levels: Vec::new(),
        })
    }

    fn extract_step(&mut self, dist: &ConditionalDistribution, token: TokenId) -> Result<Vec<bool>, CodecError> {
        let parts = partition(dist, self.h, self.high - self.low);
        let &(_, lo, hi) = parts
            .iter()
            .find(|p| p.0 == token)
            .ok_or(CodecError::Desync(token))?;
        Ok(self.narrow(self.low + lo, self.low + hi))
    }

    fn implicit_q(&self, dist: &ConditionalDistribution) -> Result<Vec<f64>, CodecError> {
        let range = self.high - self.low;
        let mut q = vec![0.0; dist.len()];
        for (t, lo, hi) in partition(dist, self.h, range) {
            q[dist.position(t).unwrap()] = (hi - lo) as f64 / range as f64;
        }
        Ok(q)
    }
}

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bitio::{index_to_bits, BitMessage};
use crate::lm::ConditionalDistribution;
use crate::stego::{CodecError, StegoCodec, StepOutcome};
use crate::TokenId;

/// Static vocabulary partition into `2^b` bins. Each step reads `b` bits and
/// emits the most probable token of the selected bin.
#[derive(Debug, Clone)]
pub struct Bins {
    b: u32,
    bin_of: Vec<Option<u32>>,
}

impl Bins {
    /// Shuffles `support` with `seed` and deals it round-robin into bins, so
    /// bin sizes differ by at most one.
    pub fn new(b: u32, support: &[TokenId], seed: u64) -> Result<Self, CodecError> {
        if !(1..=16).contains(&b) {
            return Err(CodecError::Config(format!("bins b={b} outside 1..=16")));
        }
        let n_bins = 1usize << b;
        if support.len() < n_bins {
            return Err(CodecError::Config(format!(
                "{} tokens cannot fill {n_bins} bins",
                support.len()
            )));
        }
        let mut order = support.to_vec();
        order.sort_unstable();
        order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        let max_id = *support.iter().max().unwrap() as usize;
        let mut bin_of = vec![None; max_id + 1];
        for (i, t) in order.into_iter().enumerate() {
            bin_of[t as usize] = Some((i % n_bins) as u32);
        }
        Ok(Self { b, bin_of })
    }

    pub fn bin_of(&self, token: TokenId) -> Option<u32> {
        self.bin_of.get(token as usize).copied().flatten()
    }

    fn best_in_bin(&self, dist: &ConditionalDistribution, bin: u32) -> Option<TokenId> {
        dist.entries()
            .iter()
            .map(|e| e.token)
            .find(|&t| self.bin_of(t) == Some(bin))
    }
}

impl StegoCodec for Bins {
    fn embed_step(
        &mut self,
        dist: &ConditionalDistribution,
        msg: &mut BitMessage,
        _sample_rng: &mut dyn RngCore,
        pad_rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, CodecError> {
        let bin = msg.next_index(self.b, pad_rng)?;
        let token = self.best_in_bin(dist, bin).ok_or(CodecError::EmptyBin(bin))?;
        Ok(StepOutcome {
            token,
            bits: self.b as usize,
            levels: Vec::new(),
        })
    }

    fn extract_step(&mut self, dist: &ConditionalDistribution, token: TokenId) -> Result<Vec<bool>, CodecError> {
        let bin = self.bin_of(token).ok_or(CodecError::Desync(token))?;
        if self.best_in_bin(dist, bin) != Some(token) {
            return Err(CodecError::Desync(token));
        }
        Ok(index_to_bits(bin as u64, self.b)?)
    }

    fn implicit_q(&self, dist: &ConditionalDistribution) -> Result<Vec<f64>, CodecError> {
        let share = 1.0 / (1u64 << self.b) as f64;
        let mut q = vec![0.0; dist.len()];
        let mut seen = vec![false; 1 << self.b];
        for (i, e) in dist.entries().iter().enumerate() {
            if let Some(bin) = self.bin_of(e.token) {
                if !seen[bin as usize] {
                    seen[bin as usize] = true;
                    q[i] = share;
                }
            }
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stego::divergences;

    fn dist(ids: &[TokenId], probs: &[f64]) -> ConditionalDistribution {
        ConditionalDistribution::from_probs(ids, probs).unwrap()
    }

    #[test]
    fn two_token_vocab_one_bit() {
        let mut bins = Bins::new(1, &[4, 5], 3).unwrap();
        assert_ne!(bins.bin_of(4), bins.bin_of(5));
        let d = dist(&[4, 5], &[0.7, 0.3]);
        let mut pad = ChaCha20Rng::seed_from_u64(0);
        let mut s = ChaCha20Rng::seed_from_u64(0);
        for bit in [false, true] {
            let mut msg = BitMessage::from_bits(vec![bit]);
            let out = bins.embed_step(&d, &mut msg, &mut s, &mut pad).unwrap();
            assert_eq!(bins.bin_of(out.token), Some(bit as u32));
            assert_eq!(bins.extract_step(&d, out.token).unwrap(), vec![bit]);
        }
    }

    #[test]
    fn balanced_bins() {
        let support: Vec<TokenId> = (1..=37).collect();
        let bins = Bins::new(3, &support, 9).unwrap();
        let mut sizes = [0; 8];
        for &t in &support {
            sizes[bins.bin_of(t).unwrap() as usize] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert!(Bins::new(3, &support[..7], 9).is_err());
    }

    #[test]
    fn empty_bin_errors() {
        let support: Vec<TokenId> = (0..8).collect();
        let mut bins = Bins::new(2, &support, 1).unwrap();
        let only = dist(&[0], &[1.0]);
        let target = (0..4).find(|&b| bins.bin_of(0) != Some(b)).unwrap();
        let mut msg = BitMessage::from_bits(crate::bitio::index_to_bits(target as u64, 2).unwrap());
        let mut r = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(
            bins.embed_step(&only, &mut msg, &mut r.clone(), &mut r),
            Err(CodecError::EmptyBin(_))
        ));
    }

    #[test]
    fn implicit_q_divergence_directions() {
        let support: Vec<TokenId> = (0..4).collect();
        let bins = Bins::new(1, &support, 2).unwrap();
        let d = dist(&support, &[0.4, 0.3, 0.2, 0.1]);
        let q = bins.implicit_q(&d).unwrap();
        assert_eq!(q.iter().filter(|&&x| x == 0.5).count(), 2);
        let (qp, pq) = divergences(&d.probabilities(), &q);
        assert!(qp.is_finite() && qp > 0.0);
        assert_eq!(pq, None);
    }
}

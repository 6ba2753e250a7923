use std::cmp::Ordering;

use super::LmError;
use crate::TokenId;

/// Fixed denominator every quantized distribution sums to.
pub const DENOMINATOR: u64 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Entry {
    pub token: TokenId,
    pub mass: u64,
}

/// Descending mass, ascending token id on ties.
pub fn entry_order(a: &Entry, b: &Entry) -> Ordering {
    b.mass.cmp(&a.mass).then(a.token.cmp(&b.token))
}

/// Largest-remainder apportionment of [`DENOMINATOR`] over `probs`.
///
/// Entries that would round to zero are lifted to one unit, paid for by the
/// largest entry, so the total stays exactly `DENOMINATOR`.
pub fn quantize(probs: &[f64]) -> Result<Vec<u64>, LmError> {
    if probs.is_empty() {
        return Err(LmError::EmptyDistribution);
    }
    if let Some(&bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(LmError::InvalidProbability(bad));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(LmError::NotNormalized(sum));
    }
    if probs.len() as u64 > DENOMINATOR {
        return Err(LmError::EmptyDistribution);
    }
    let d = DENOMINATOR as f64;
    let mut masses = Vec::with_capacity(probs.len());
    let mut rems = Vec::with_capacity(probs.len());
    let mut assigned = 0u64;
    for (i, &p) in probs.iter().enumerate() {
        let quota = p / sum * d;
        let fl = quota.floor();
        masses.push(fl as u64);
        rems.push((quota - fl, i));
        assigned += fl as u64;
    }
    // Float rounding can leave the floors a hair above the denominator.
    while assigned > DENOMINATOR {
        let i = (0..masses.len()).max_by_key(|&i| (masses[i], std::cmp::Reverse(i))).unwrap();
        masses[i] -= 1;
        assigned -= 1;
    }
    let deficit = (DENOMINATOR - assigned) as usize;
    let by_rem = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if deficit < rems.len() {
        if deficit > 0 {
            rems.select_nth_unstable_by(deficit - 1, by_rem);
        }
        rems.truncate(deficit);
    } else {
        rems.sort_unstable_by(by_rem);
    }
    for &(_, i) in rems.iter().cycle().take(deficit) {
        masses[i] += 1;
    }
    let zeros = masses.iter().filter(|&&m| m == 0).count() as u64;
    if zeros > 0 {
        let top = (0..masses.len()).max_by_key(|&i| (masses[i], std::cmp::Reverse(i))).unwrap();
        masses[top] -= zeros;
        masses.iter_mut().filter(|m| **m == 0).for_each(|m| *m = 1);
    }
    Ok(masses)
}

/// A quantized next-token distribution: integer masses over
/// [`DENOMINATOR`], sorted by [`entry_order`], no zero entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionalDistribution {
    entries: Vec<Entry>,
}

impl ConditionalDistribution {
    /// Quantizes `probs` over `ids` and sorts the result.
    pub fn from_probs(ids: &[TokenId], probs: &[f64]) -> Result<Self, LmError> {
        if ids.len() != probs.len() {
            return Err(LmError::LengthMismatch {
                ids: ids.len(),
                probs: probs.len(),
            });
        }
        let mut sorted_ids = ids.to_vec();
        sorted_ids.sort_unstable();
        if let Some(w) = sorted_ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(LmError::DuplicateToken(w[0]));
        }
        let masses = quantize(probs)?;
        let mut entries: Vec<Entry> = ids
            .iter()
            .zip(masses)
            .map(|(&token, mass)| Entry { token, mass })
            .collect();
        entries.sort_unstable_by(entry_order);
        Ok(Self { entries })
    }

    /// Validates already-quantized masses.
    pub fn from_masses(mut entries: Vec<Entry>) -> Result<Self, LmError> {
        if entries.is_empty() {
            return Err(LmError::EmptyDistribution);
        }
        if entries.iter().any(|e| e.mass == 0) {
            return Err(LmError::ZeroMass);
        }
        let total: u64 = entries.iter().map(|e| e.mass).sum();
        if total != DENOMINATOR {
            return Err(LmError::BadTotal(total));
        }
        entries.sort_by(entry_order);
        if entries.windows(2).any(|w| w[0].token == w[1].token) {
            return Err(LmError::DuplicateToken(
                entries.windows(2).find(|w| w[0].token == w[1].token).unwrap()[0].token,
            ));
        }
        Ok(Self { entries })
    }

    /// All mass on one token.
    pub fn point(token: TokenId) -> Self {
        Self {
            entries: vec![Entry {
                token,
                mass: DENOMINATOR,
            }],
        }
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn p_max_mass(&self) -> u64 {
        self.entries[0].mass
    }

    pub fn mass_of(&self, token: TokenId) -> Option<u64> {
        self.entries.iter().find(|e| e.token == token).map(|e| e.mass)
    }

    pub fn position(&self, token: TokenId) -> Option<usize> {
        self.entries.iter().position(|e| e.token == token)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.mass as f64 / DENOMINATOR as f64)
            .collect()
    }

    /// Entropy in bits.
    pub fn entropy(&self) -> f64 {
        -self
            .probabilities()
            .iter()
            .map(|&p| p * p.log2())
            .sum::<f64>()
    }

    /// Drops `token` to the minimum mass of one unit and hands the freed
    /// mass to the other entries in proportion to their masses, using
    /// integer largest-remainder apportionment.
    pub fn mask_to_minimum(&self, token: TokenId) -> Self {
        let Some(pos) = self.position(token) else {
            return self.clone();
        };
        let freed = self.entries[pos].mass - 1;
        if freed == 0 || self.entries.len() == 1 {
            return self.clone();
        }
        let rest_total = DENOMINATOR - self.entries[pos].mass;
        let mut entries = self.entries.clone();
        entries[pos].mass = 1;
        let mut given = 0u64;
        let mut rems = Vec::with_capacity(entries.len());
        for (i, e) in entries.iter_mut().enumerate() {
            if i == pos {
                continue;
            }
            let num = freed as u128 * e.mass as u128;
            let share = (num / rest_total as u128) as u64;
            rems.push((num % rest_total as u128, i));
            e.mass += share;
            given += share;
        }
        rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rems.iter().take((freed - given) as usize) {
            entries[i].mass += 1;
        }
        entries.sort_by(entry_order);
        Self { entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn quantize_exact_cases() {
        assert_eq!(quantize(&[0.5, 0.5]).unwrap(), vec![1 << 30, 1 << 30]);
        assert_eq!(quantize(&[1.0]).unwrap(), vec![1 << 31]);
        assert_eq!(quantize(&[0.25; 4]).unwrap(), vec![1 << 29; 4]);
    }

    #[test]
    fn quantize_largest_remainder() {
        // quotas 858993459.2, 644245094.4, 429496729.6, 214748364.8; two
        // units go to the largest remainders (.8 then .6).
        let m = quantize(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(m, vec![858_993_459, 644_245_094, 429_496_730, 214_748_365]);
        assert_eq!(m.iter().sum::<u64>(), DENOMINATOR);
    }

    #[test]
    fn quantize_thirds_all_rotations() {
        let third = 1.0 / 3.0;
        for rot in 0..3 {
            let mut p = vec![third; 3];
            p.rotate_left(rot);
            let m = quantize(&p).unwrap();
            assert_eq!(m.iter().sum::<u64>(), DENOMINATOR);
            let (lo, hi) = (m.iter().min().unwrap(), m.iter().max().unwrap());
            assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn quantize_floors_tiny_entries() {
        let mut p = vec![1e-12; 10];
        p[0] = 1.0 - 9e-12;
        let m = quantize(&p).unwrap();
        assert!(m.iter().all(|&x| x >= 1));
        assert_eq!(m.iter().sum::<u64>(), DENOMINATOR);
        assert_eq!(m[0], DENOMINATOR - 9);
    }

    #[test]
    fn quantize_rejects_bad_input() {
        assert!(matches!(quantize(&[0.5, f64::NAN]), Err(LmError::InvalidProbability(_))));
        assert!(matches!(quantize(&[0.5, -0.1, 0.6]), Err(LmError::InvalidProbability(_))));
        assert!(matches!(quantize(&[0.5, 0.4]), Err(LmError::NotNormalized(_))));
        assert!(matches!(quantize(&[]), Err(LmError::EmptyDistribution)));
    }

    #[test]
    fn sorted_with_tie_break() {
        let d = ConditionalDistribution::from_probs(&[9, 4, 7, 1], &[0.25; 4]).unwrap();
        let ids: Vec<_> = d.entries().iter().map(|e| e.token).collect();
        assert_eq!(ids, vec![1, 4, 7, 9]);
        assert!(d.entries().iter().all(|e| e.mass == 1 << 29));
    }

    #[test]
    fn from_masses_validates() {
        let e = |token, mass| Entry { token, mass };
        assert!(ConditionalDistribution::from_masses(vec![e(0, 1 << 30), e(1, 1 << 30)]).is_ok());
        assert!(matches!(
            ConditionalDistribution::from_masses(vec![e(0, 1 << 30)]),
            Err(LmError::BadTotal(_))
        ));
        assert!(matches!(
            ConditionalDistribution::from_masses(vec![e(0, DENOMINATOR), e(1, 0)]),
            Err(LmError::ZeroMass)
        ));
        assert!(matches!(
            ConditionalDistribution::from_masses(vec![e(0, 1 << 30), e(0, 1 << 30)]),
            Err(LmError::DuplicateToken(0))
        ));
    }

    #[test]
    fn mask_preserves_total() {
        let d = ConditionalDistribution::from_probs(&[0, 1, 2, 3], &[0.4, 0.3, 0.2, 0.1]).unwrap();
        let m = d.mask_to_minimum(1);
        assert_eq!(m.mass_of(1), Some(1));
        assert_eq!(m.entries().iter().map(|e| e.mass).sum::<u64>(), DENOMINATOR);
        assert!(m.mass_of(0).unwrap() > d.mass_of(0).unwrap());
        assert_eq!(d.mask_to_minimum(99), d);
        let p = ConditionalDistribution::point(3);
        assert_eq!(p.mask_to_minimum(3), p);
    }

    #[test]
    fn quantization_error_bound_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let n = rng.gen_range(1..300);
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(6)).collect();
            let s: f64 = raw.iter().sum();
            if s == 0.0 {
                continue;
            }
            let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let m = quantize(&p).unwrap();
            assert_eq!(m.iter().sum::<u64>(), DENOMINATOR);
            let bound = (n as f64 + 1.0) / DENOMINATOR as f64;
            for (mi, pi) in m.iter().zip(&p) {
                assert!((*mi as f64 / DENOMINATOR as f64 - pi).abs() <= bound);
            }
        }
    }
}

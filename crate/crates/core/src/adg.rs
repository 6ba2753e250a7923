//! Adaptive dynamic grouping.
//!
//! All grouping decisions use integer masses only, so sender and receiver
//! build identical groups from the same quantized distribution. Sampling
//! within the final group is the only randomized part.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitio::{index_to_bits, BitMessage};
use crate::lm::{entry_order, ConditionalDistribution, Entry};
use crate::stego::{CodecError, StegoCodec, StepOutcome};
use crate::TokenId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupingError {
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("largest mass {p_max} outside 1..={denominator}")]
    BadMaxMass { p_max: u64, denominator: u64 },
    #[error("group count {0} is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("distribution is indivisible (largest mass above half)")]
    Indivisible,
    #[error("empty group")]
    Empty,
}

/// Largest power of two `u` with `u * p_max_mass <= denominator`.
pub fn group_count(p_max_mass: u64, denominator: u64) -> Result<u64, GroupingError> {
    if denominator == 0 {
        return Err(GroupingError::ZeroDenominator);
    }
    if p_max_mass == 0 || p_max_mass > denominator {
        return Err(GroupingError::BadMaxMass {
            p_max: p_max_mass,
            denominator,
        });
    }
    let ratio = denominator / p_max_mass;
    Ok(1u64 << (63 - ratio.leading_zeros()))
}

/// True when the largest entry holds strictly more than half the mass, at
/// which point grouping stops.
pub fn is_indivisible(entries: &[Entry]) -> bool {
    let total: u64 = entries.iter().map(|e| e.mass).sum();
    2 * entries[0].mass > total
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    members: Vec<Entry>,
    total_mass: u64,
}

impl Group {
    fn new(mut members: Vec<Entry>) -> Self {
        members.sort_by(entry_order);
        let total_mass = members.iter().map(|e| e.mass).sum();
        Self { members, total_mass }
    }

    pub fn members(&self) -> &[Entry] {
        &self.members
    }

    pub fn total_mass(&self) -> u64 {
        self.total_mass
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.members.iter().any(|e| e.token == token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    groups: Vec<Group>,
    level_mass: u64,
}

impl Grouping {
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn level_mass(&self) -> u64 {
        self.level_mass
    }

    /// `log2(u)`.
    pub fn bits(&self) -> u32 {
        self.groups.len().trailing_zeros()
    }

    /// Group masses as fractions of the level mass.
    pub fn etas(&self) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.total_mass as f64 / self.level_mass as f64)
            .collect()
    }
}

type Pool = BTreeSet<(u64, Reverse<TokenId>)>;

/// Entry nearest to `eps_num / den`. Ties prefer the lower mass; among equal
/// masses the lower token id.
fn nearest(pool: &Pool, eps_num: u64, den: u64) -> Option<(u64, Reverse<TokenId>)> {
    let floor = eps_num / den;
    let lower = pool.range(..=(floor, Reverse(0))).next_back().copied();
    let upper = pool
        .range((floor + 1, Reverse(TokenId::MAX))..)
        .next()
        .and_then(|&(m, _)| pool.range(..=(m, Reverse(0))).next_back().copied());
    match (lower, upper) {
        (Some(lo), Some(hi)) => {
            let d_lo = eps_num - lo.0 * den;
            let d_hi = hi.0 * den - eps_num;
            Some(if d_lo <= d_hi { lo } else { hi })
        }
        (lo, hi) => lo.or(hi),
    }
}

/// Splits descending-sorted `entries` into `u = group_count(..)` groups of
/// near-equal mass.
///
/// Each of the first `u - 1` groups is seeded with the largest remaining
/// token and topped up with the remaining token nearest to the shortfall
/// `eps` while that token's mass is below `2 * eps`. The running target mean
/// is kept as an exact fraction `remaining_mass / groups_left`. The last
/// group takes everything left. A token is never taken if that would leave
/// a later group without a seed.
pub fn equal_group(entries: &[Entry]) -> Result<Grouping, GroupingError> {
    if entries.is_empty() {
        return Err(GroupingError::Empty);
    }
    let level_mass: u64 = entries.iter().map(|e| e.mass).sum();
    let u = group_count(entries[0].mass, level_mass)?;
    if u < 2 {
        return Err(GroupingError::Indivisible);
    }
    if !u.is_power_of_two() {
        return Err(GroupingError::NotPowerOfTwo(u));
    }
    let mut pool: Pool = entries.iter().map(|e| (e.mass, Reverse(e.token))).collect();
    let mut groups = Vec::with_capacity(u as usize);
    let mut remaining = level_mass;
    let (mut mean_num, mut mean_den) = (level_mass, u);
    for i in 1..u {
        let seed = pool.pop_last().ok_or(GroupingError::Empty)?;
        let mut members = vec![seed];
        let mut mass = seed.0;
        while mass * mean_den < mean_num {
            if pool.len() as u64 <= u - i {
                break;
            }
            let eps_num = mean_num - mass * mean_den;
            let Some(cand) = nearest(&pool, eps_num, mean_den) else {
                break;
            };
            if cand.0 * mean_den < 2 * eps_num {
                pool.remove(&cand);
                members.push(cand);
                mass += cand.0;
            } else {
                break;
            }
        }
        remaining -= mass;
        mean_num = remaining;
        mean_den = u - i;
        groups.push(Group::new(
            members
                .into_iter()
                .map(|(mass, Reverse(token))| Entry { token, mass })
                .collect(),
        ));
    }
    if pool.is_empty() {
        return Err(GroupingError::Empty);
    }
    groups.push(Group::new(
        pool.into_iter()
            .map(|(mass, Reverse(token))| Entry { token, mass })
            .collect(),
    ));
    Ok(Grouping { groups, level_mass })
}

/// One recursion level of an embedding step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub u: u64,
    pub index: u32,
    pub group_masses: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdgStep {
    pub token: TokenId,
    pub bits: usize,
    pub levels: Vec<LevelRecord>,
}

fn sample(entries: &[Entry], rng: &mut dyn RngCore) -> TokenId {
    let total: u64 = entries.iter().map(|e| e.mass).sum();
    let mut x = rng.gen_range(0..total);
    for e in entries {
        if x < e.mass {
            return e.token;
        }
        x -= e.mass;
    }
    unreachable!("sample point beyond total mass")
}

/// Groups, reads `log2 u` bits, descends into the chosen group and repeats
/// until the current group is indivisible; then samples within it.
pub fn embed_step(
    dist: &ConditionalDistribution,
    msg: &mut BitMessage,
    sample_rng: &mut dyn RngCore,
    pad_rng: &mut dyn RngCore,
) -> Result<AdgStep, CodecError> {
    let mut current: Vec<Entry> = dist.entries().to_vec();
    let mut levels = Vec::new();
    let mut bits = 0;
    while !is_indivisible(&current) {
        let mut grouping = equal_group(&current)?;
        let r = grouping.bits();
        let index = msg.next_index(r, pad_rng)?;
        bits += r as usize;
        levels.push(LevelRecord {
            u: grouping.len() as u64,
            index,
            group_masses: grouping.groups.iter().map(|g| g.total_mass).collect(),
        });
        current = grouping.groups.swap_remove(index as usize).members;
    }
    Ok(AdgStep {
        token: sample(&current, sample_rng),
        bits,
        levels,
    })
}

/// Replays the grouping and returns the bits that select `token`.
pub fn extract_step(dist: &ConditionalDistribution, token: TokenId) -> Result<Vec<bool>, CodecError> {
    if dist.position(token).is_none() {
        return Err(CodecError::Desync(token));
    }
    let mut current: Vec<Entry> = dist.entries().to_vec();
    let mut out = Vec::new();
    while !is_indivisible(&current) {
        let mut grouping = equal_group(&current)?;
        let index = grouping
            .groups
            .iter()
            .position(|g| g.contains(token))
            .expect("groups cover the level");
        out.extend(index_to_bits(index as u64, grouping.bits())?);
        current = grouping.groups.swap_remove(index).members;
    }
    Ok(out)
}

fn fill_q(entries: &[Entry], weight: f64, q: &mut Vec<(TokenId, f64)>) -> Result<(), GroupingError> {
    if is_indivisible(entries) {
        let total: u64 = entries.iter().map(|e| e.mass).sum();
        q.extend(
            entries
                .iter()
                .map(|e| (e.token, weight * e.mass as f64 / total as f64)),
        );
        return Ok(());
    }
    let grouping = equal_group(entries)?;
    let w = weight / grouping.len() as f64;
    for g in &grouping.groups {
        fill_q(&g.members, w, q)?;
    }
    Ok(())
}

/// Token distribution induced by embedding uniformly random bits, aligned
/// with `dist.entries()`. Each token gets the product of `1/u` over the
/// levels above it times its share of its final group.
pub fn implicit_q(dist: &ConditionalDistribution) -> Result<Vec<f64>, GroupingError> {
    let mut pairs = Vec::with_capacity(dist.len());
    fill_q(dist.entries(), 1.0, &mut pairs)?;
    let pos: std::collections::HashMap<TokenId, usize> = dist
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.token, i))
        .collect();
    let mut q = vec![0.0; dist.len()];
    for (t, v) in pairs {
        q[pos[&t]] = v;
    }
    Ok(q)
}

/// `Σ η_i log2(u η_i)`: divergence of one grouping level in bits.
pub fn grouping_divergence(etas: &[f64]) -> f64 {
    let u = etas.len() as f64;
    etas.iter()
        .filter(|&&e| e > 0.0)
        .map(|&e| e * (u * e).log2())
        .sum()
}

/// The adaptive dynamic grouping codec.
#[derive(Debug, Clone, Copy, Default)]
pub struct Adg;

impl StegoCodec for Adg {
    fn embed_step(
        &mut self,
        dist: &ConditionalDistribution,
        msg: &mut BitMessage,
        sample_rng: &mut dyn RngCore,
        pad_rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, CodecError> {
        let step = embed_step(dist, msg, sample_rng, pad_rng)?;
        Ok(StepOutcome {
            token: step.token,
            bits: step.bits,
            levels: step.levels,
        })
    }

    fn extract_step(&mut self, dist: &ConditionalDistribution, token: TokenId) -> Result<Vec<bool>, CodecError> {
        extract_step(dist, token)
    }

    fn implicit_q(&self, dist: &ConditionalDistribution) -> Result<Vec<f64>, CodecError> {
        Ok(implicit_q(dist)?)
    }
}

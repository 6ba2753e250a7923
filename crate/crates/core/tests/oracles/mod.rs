//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here shares code with the library beyond the
//! `Entry` type.
#![allow(dead_code)]

use rand::Rng;
use stego_core::lm::{ConditionalDistribution, Entry, DENOMINATOR};
use stego_core::TokenId;

/// Linear-scan version of the equal-grouping heuristic over a plain vector.
/// Returns groups as token lists in the order they were formed.
pub fn naive_equal_group(entries: &[Entry]) -> Vec<Vec<TokenId>> {
    let total: u64 = entries.iter().map(|e| e.mass).sum();
    let pmax = entries.iter().map(|e| e.mass).max().unwrap();
    let mut u = 1u64;
    while 2 * u * pmax <= total {
        u *= 2;
    }
    assert!(u >= 2);
    // descending mass, ascending id
    let mut pool: Vec<Entry> = entries.to_vec();
    pool.sort_by(|a, b| b.mass.cmp(&a.mass).then(a.token.cmp(&b.token)));
    let mut groups = Vec::new();
    let mut remaining = total;
    for i in 1..u {
        let groups_left = u - i + 1;
        let seed = pool.remove(0);
        let mut mass = seed.mass;
        let mut group = vec![seed.token];
        // eps = remaining/groups_left - mass, kept scaled by groups_left
        loop {
            let scaled_mean = remaining as i128;
            let eps = scaled_mean - (mass * groups_left) as i128;
            if eps <= 0 || pool.len() as u64 <= u - i {
                break;
            }
            let mut best: Option<(i128, u64, TokenId, usize)> = None;
            for (j, e) in pool.iter().enumerate() {
                let d = ((e.mass * groups_left) as i128 - eps).abs();
                let key = (d, e.mass, e.token, j);
                if best.map_or(true, |b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
            let (_, m, _, j) = best.unwrap();
            if ((m * groups_left) as i128) < 2 * eps {
                group.push(pool.remove(j).token);
                mass += m;
            } else {
                break;
            }
        }
        remaining -= mass;
        groups.push(group);
    }
    groups.push(pool.iter().map(|e| e.token).collect());
    groups
}

/// `Σ η log2(u η)` for group masses.
pub fn group_kl(masses: &[u64]) -> f64 {
    let total: u64 = masses.iter().sum();
    let u = masses.len() as f64;
    masses
        .iter()
        .filter(|&&m| m > 0)
        .map(|&m| {
            let eta = m as f64 / total as f64;
            eta * (u * eta).log2()
        })
        .sum()
}

/// Minimum grouping divergence over every partition of `masses` into exactly
/// `u` non-empty groups.
pub fn brute_force_min_kl(masses: &[u64], u: usize) -> f64 {
    fn go(masses: &[u64], i: usize, groups: &mut Vec<u64>, u: usize, best: &mut f64) {
        let left = masses.len() - i;
        if groups.len() + left < u {
            return;
        }
        if i == masses.len() {
            if groups.len() == u {
                *best = best.min(group_kl(groups));
            }
            return;
        }
        for g in 0..groups.len() {
            groups[g] += masses[i];
            go(masses, i + 1, groups, u, best);
            groups[g] -= masses[i];
        }
        if groups.len() < u {
            groups.push(masses[i]);
            go(masses, i + 1, groups, u, best);
            groups.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(masses, 0, &mut Vec::new(), u, &mut best);
    best
}

/// True if `masses` splits into `u` groups of exactly equal mass.
pub fn has_exact_partition(masses: &[u64], u: usize) -> bool {
    let total: u64 = masses.iter().sum();
    if total % u as u64 != 0 {
        return false;
    }
    brute_force_min_kl(masses, u).abs() < 1e-12
}

/// All multisets of positive parts summing to `total` with at most
/// `max_parts` parts, in descending order.
pub fn partitions(total: u64, max_parts: usize) -> Vec<Vec<u64>> {
    fn go(left: u64, cap: u64, max_parts: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        if cur.len() == max_parts {
            return;
        }
        for part in (1..=cap.min(left)).rev() {
            cur.push(part);
            go(left - part, part, max_parts, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(total, total, max_parts, &mut Vec::new(), &mut out);
    out
}

/// Distribution over ids `0..masses.len()` with masses scaled to the common
/// denominator. `masses` must sum to a power of two that divides it.
pub fn dyadic_dist(masses: &[u64]) -> ConditionalDistribution {
    let total: u64 = masses.iter().sum();
    assert!(total.is_power_of_two() && DENOMINATOR % total == 0);
    let scale = DENOMINATOR / total;
    ConditionalDistribution::from_masses(
        masses
            .iter()
            .enumerate()
            .map(|(i, &m)| Entry {
                token: i as TokenId,
                mass: m * scale,
            })
            .collect(),
    )
    .unwrap()
}

/// Random float distribution with a mix of shapes: flat, peaked, heavy-tailed.
pub fn random_probs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let shape = rng.gen_range(0..3);
    let raw: Vec<f64> = (0..n)
        .map(|i| match shape {
            0 => rng.gen::<f64>() + 1e-3,
            1 => rng.gen::<f64>().powi(6) + 1e-9,
            _ => 1.0 / (i as f64 + 1.0).powf(rng.gen_range(0.5..2.0)),
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

pub fn random_dist(rng: &mut impl Rng, n: usize) -> ConditionalDistribution {
    let ids: Vec<TokenId> = (0..n as TokenId).collect();
    ConditionalDistribution::from_probs(&ids, &random_probs(rng, n)).unwrap()
}

/// Exact `D(p ‖ q)` in bits with `q` built token by token for one grouping
/// level: group chosen uniformly, token chosen within the group by mass.
pub fn one_level_token_kl(dist: &ConditionalDistribution, groups: &[Vec<TokenId>]) -> f64 {
    let u = groups.len() as f64;
    let total = DENOMINATOR as f64;
    let mut kl = 0.0;
    for g in groups {
        let gm: u64 = g.iter().map(|&t| dist.mass_of(t).unwrap()).sum();
        for &t in g {
            let p = dist.mass_of(t).unwrap() as f64 / total;
            let q = p * total / (u * gm as f64);
            kl += p * (p / q).log2();
        }
    }
    kl
}

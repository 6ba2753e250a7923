use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, RngCore};

use crate::bitio::BitMessage;
use crate::lm::{ConditionalDistribution, Entry};
use crate::stego::{divergences, CodecError, StegoCodec, StepOutcome};
use crate::TokenId;

#[derive(Debug, Clone)]
enum Node {
    Leaf(TokenId),
    Inner(usize, usize),
}

/// Huffman tree over a handful of entries. Merges always join the two
/// lightest nodes (ties: lowest contained token id); the lighter node becomes
/// the 0 branch.
#[derive(Debug, Clone)]
pub struct HuffmanTree {
    nodes: Vec<Node>,
    root: usize,
    codes: Vec<(TokenId, Vec<bool>)>,
}

impl HuffmanTree {
    pub fn build(entries: &[Entry]) -> Self {
        assert!(!entries.is_empty(), "huffman tree over no entries");
        let mut nodes: Vec<Node> = entries.iter().map(|e| Node::Leaf(e.token)).collect();
        let mut heap: BinaryHeap<Reverse<(u64, TokenId, usize)>> = entries
            .iter()
            .enumerate()
            .map(|(i, e)| Reverse((e.mass, e.token, i)))
            .collect();
        while heap.len() > 1 {
            let Reverse((ma, ta, a)) = heap.pop().unwrap();
            let Reverse((mb, tb, b)) = heap.pop().unwrap();
            nodes.push(Node::Inner(a, b));
            heap.push(Reverse((ma + mb, ta.min(tb), nodes.len() - 1)));
        }
        let root = heap.pop().unwrap().0 .2;
        let mut codes = Vec::with_capacity(entries.len());
        let mut stack = vec![(root, Vec::new())];
        while let Some((n, path)) = stack.pop() {
            match nodes[n] {
                Node::Leaf(t) => codes.push((t, path)),
                Node::Inner(l, r) => {
                    let mut lp = path.clone();
                    lp.push(false);
                    let mut rp = path;
                    rp.push(true);
                    stack.push((r, rp));
                    stack.push((l, lp));
                }
            }
        }
        Self { nodes, root, codes }
    }

    pub fn code(&self, token: TokenId) -> Option<&[bool]> {
        self.codes
            .iter()
            .find(|(t, _)| *t == token)
            .map(|(_, c)| c.as_slice())
    }

    /// Walks from the root consuming message bits until a leaf.
    pub fn walk(&self, msg: &mut BitMessage, pad_rng: &mut dyn RngCore) -> (TokenId, usize) {
        let mut n = self.root;
        let mut used = 0;
        loop {
            match self.nodes[n] {
                Node::Leaf(t) => return (t, used),
                Node::Inner(l, r) => {
                    n = if msg.next_bit(pad_rng) { r } else { l };
                    used += 1;
                }
            }
        }
    }
}

fn top(dist: &ConditionalDistribution, k: u32) -> &[Entry] {
    let n = (1usize << k).min(dist.len());
    &dist.entries()[..n]
}

fn huffman_q(dist: &ConditionalDistribution, tree: &HuffmanTree) -> Vec<f64> {
    dist.entries()
        .iter()
        .map(|e| tree.code(e.token).map_or(0.0, |c| 0.5f64.powi(c.len() as i32)))
        .collect()
}

/// Huffman coding over the top `2^k` tokens of each step.
#[derive(Debug, Clone)]
pub struct Huffman {
    k: u32,
}

impl Huffman {
    pub fn new(k: u32) -> Result<Self, CodecError> {
        if !(1..=16).contains(&k) {
            return Err(CodecError::Config(format!("huffman k={k} outside 1..=16")));
        }
        Ok(Self { k })
    }
}

impl StegoCodec for Huffman {
    fn embed_step(
        &mut self,
        dist: &ConditionalDistribution,
        msg: &mut BitMessage,
        _sample_rng: &mut dyn RngCore,
        pad_rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, CodecError> {
        let tree = HuffmanTree::build(top(dist, self.k));
        let (token, bits) = tree.walk(msg, pad_rng);
        Ok(StepOutcome {
            token,
            bits,
            levels: Vec::new(),
        })
    }

    fn extract_step(&mut self, dist: &ConditionalDistribution, token: TokenId) -> Result<Vec<bool>, CodecError> {
        let tree = HuffmanTree::build(top(dist, self.k));
        tree.code(token)
            .map(<[bool]>::to_vec)
            .ok_or(CodecError::Desync(token))
    }

    fn implicit_q(&self, dist: &ConditionalDistribution) -> Result<Vec<f64>, CodecError> {
        Ok(huffman_q(dist, &HuffmanTree::build(top(dist, self.k))))
    }
}

/// Huffman embedding gated by a per-step distortion threshold: a step
/// carries bits only when `D(q_huffman ‖ p_top)` is below `delta` bits,
/// otherwise the token is sampled from the full distribution.
#[derive(Debug, Clone)]
pub struct PatientHuffman {
    k: u32,
    delta: f64,
}

impl PatientHuffman {
    pub fn new(k: u32, delta: f64) -> Result<Self, CodecError> {
        if delta.is_nan() || delta < 0.0 {
            return Err(CodecError::Config(format!("patient-huffman delta={delta} must be >= 0")));
        }
        Huffman::new(k)?;
        Ok(Self { k, delta })
    }

    /// Distortion of the Huffman step in bits. Depends only on quantized
    /// masses so the receiver reaches the same decision.
    pub fn distortion(&self, dist: &ConditionalDistribution) -> f64 {
        let entries = top(dist, self.k);
        let tree = HuffmanTree::build(entries);
        let total: u64 = entries.iter().map(|e| e.mass).sum();
        let p: Vec<f64> = entries.iter().map(|e| e.mass as f64 / total as f64).collect();
        let q: Vec<f64> = entries
            .iter()
            .map(|e| 0.5f64.powi(tree.code(e.token).unwrap().len() as i32))
            .collect();
        divergences(&p, &q).0
    }

    fn embeds(&self, dist: &ConditionalDistribution) -> bool {
        self.distortion(dist) < self.delta
    }
}

impl StegoCodec for PatientHuffman {
    fn embed_step(
        &mut self,
        dist: &ConditionalDistribution,
        msg: &mut BitMessage,
        sample_rng: &mut dyn RngCore,
        pad_rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, CodecError> {
        if self.embeds(dist) {
            let tree = HuffmanTree::build(top(dist, self.k));
            let (token, bits) = tree.walk(msg, pad_rng);
            return Ok(StepOutcome {
                token,
                bits,
                levels: Vec::new(),
            });
        }
        let mut x = sample_rng.gen_range(0..crate::lm::DENOMINATOR);
        let mut token = dist.entries()[0].token;
        for e in dist.entries() {
            if x < e.mass {
                token = e.token;
                break;
            }
            x -= e.mass;
        }
        Ok(StepOutcome {
            token,
            bits: 0,
            levels: Vec::new(),
        })
    }

    fn extract_step(&mut self, dist: &ConditionalDistribution, token: TokenId) -> Result<Vec<bool>, CodecError> {
        if !self.embeds(dist) {
            return dist
                .position(token)
                .map(|_| Vec::new())
                .ok_or(CodecError::Desync(token));
        }
        let tree = HuffmanTree::build(top(dist, self.k));
        tree.code(token)
            .map(<[bool]>::to_vec)
            .ok_or(CodecError::Desync(token))
    }

    fn implicit_q(&self, dist: &ConditionalDistribution) -> Result<Vec<f64>, CodecError> {
        if self.embeds(dist) {
            Ok(huffman_q(dist, &HuffmanTree::build(top(dist, self.k))))
        } else {
            Ok(dist.probabilities())
        }
    }
}

//! Sentence-level generation loop shared by every codec.
//!
//! Each step asks the provider for the next-token distribution, applies the
//! sentence-length constraints, and hands the constrained distribution to a
//! [`StegoCodec`]. Extraction replays the same loop over received tokens,
//! so the constraints are part of the codec contract on both ends.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adg::{Adg, GroupingError, LevelRecord};
use crate::baselines::{Arithmetic, Bins, Huffman, PatientHuffman};
use crate::bitio::{deframe_bits, BitError, BitMessage};
use crate::corpus::BOS;
use crate::lm::{ConditionalDistribution, LmError, LmProvider};
use crate::TokenId;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Bits(#[from] BitError),
    #[error("grouping: {0}")]
    Grouping(#[from] GroupingError),
    #[error("token {0} cannot be produced by the codec at this step (model or vocabulary mismatch)")]
    Desync(TokenId),
    #[error("budget exhausted after {tokens} tokens in {sentences} sentences with {remaining} frame bits left")]
    Capacity {
        tokens: usize,
        sentences: usize,
        remaining: usize,
    },
    #[error("bin {0} has no token in the current distribution")]
    EmptyBin(u32),
    #[error("provider has no end-of-sentence token")]
    NoEos,
    #[error("invalid codec configuration: {0}")]
    Config(String),
}

/// What a codec did at one generation step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub token: TokenId,
    pub bits: usize,
    pub levels: Vec<LevelRecord>,
}

pub trait StegoCodec {
    /// Picks a token, consuming message bits.
    fn embed_step(
        &mut self,
        dist: &ConditionalDistribution,
        msg: &mut BitMessage,
        sample_rng: &mut dyn RngCore,
        pad_rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, CodecError>;

    /// Bits carried by `token` under `dist`.
    fn extract_step(&mut self, dist: &ConditionalDistribution, token: TokenId) -> Result<Vec<bool>, CodecError>;

    /// Induced token distribution for uniformly random message bits, aligned
    /// with `dist.entries()`, given the codec's current state.
    fn implicit_q(&self, dist: &ConditionalDistribution) -> Result<Vec<f64>, CodecError>;

    /// True once the generated text fully determines the frame.
    fn frame_consumed(&self, msg: &BitMessage) -> bool {
        msg.frame_consumed()
    }
}

impl<C: StegoCodec + ?Sized> StegoCodec for Box<C> {
    fn embed_step(
        &mut self,
        dist: &ConditionalDistribution,
        msg: &mut BitMessage,
        sample_rng: &mut dyn RngCore,
        pad_rng: &mut dyn RngCore,
    ) -> Result<StepOutcome, CodecError> {
        (**self).embed_step(dist, msg, sample_rng, pad_rng)
    }

    fn extract_step(&mut self, dist: &ConditionalDistribution, token: TokenId) -> Result<Vec<bool>, CodecError> {
        (**self).extract_step(dist, token)
    }

    fn implicit_q(&self, dist: &ConditionalDistribution) -> Result<Vec<f64>, CodecError> {
        (**self).implicit_q(dist)
    }

    fn frame_consumed(&self, msg: &BitMessage) -> bool {
        (**self).frame_consumed(msg)
    }
}

/// Codec selection with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Adg,
    Bins { b: u32 },
    Huffman { k: u32 },
    PatientHuffman { k: u32, delta: f64 },
    Arithmetic { h: usize, precision: u32 },
}

impl Method {
    /// Builds a fresh codec. `support` and `partition_seed` only matter for
    /// bins, whose vocabulary partition both ends must share.
    pub fn build(&self, support: &[TokenId], partition_seed: u64) -> Result<Box<dyn StegoCodec + Send>, CodecError> {
        Ok(match *self {
            Method::Adg => Box::new(Adg),
            Method::Bins { b } => Box::new(Bins::new(b, support, partition_seed)?),
            Method::Huffman { k } => Box::new(Huffman::new(k)?),
            Method::PatientHuffman { k, delta } => Box::new(PatientHuffman::new(k, delta)?),
            Method::Arithmetic { h, precision } => Box::new(Arithmetic::new(h, precision)?),
        })
    }

    /// Checks parameter ranges without needing a vocabulary.
    pub fn validate(&self) -> Result<(), CodecError> {
        match *self {
            Method::Bins { b } => {
                let support: Vec<TokenId> = (0..1u32 << b.min(16)).collect();
                Bins::new(b, &support, 0).map(drop)
            }
            _ => self.build(&[], 0).map(drop),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Adg => "adg",
            Method::Bins { .. } => "bins",
            Method::Huffman { .. } => "huffman",
            Method::PatientHuffman { .. } => "patient_huffman",
            Method::Arithmetic { .. } => "arithmetic",
        }
    }

    /// Parameter string, e.g. `b=3` or `k=3;delta=1.5`.
    pub fn params(&self) -> String {
        match *self {
            Method::Adg => String::new(),
            Method::Bins { b } => format!("b={b}"),
            Method::Huffman { k } => format!("k={k}"),
            Method::PatientHuffman { k, delta } => format!("k={k};delta={delta}"),
            Method::Arithmetic { h, precision } => format!("h={h};precision={precision}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationConfig {
    /// Below this many content tokens EOS is held at minimum mass.
    pub min_len: usize,
    /// At this many content tokens EOS is forced.
    pub max_len: usize,
    pub max_tokens: usize,
    pub max_sentences: usize,
    /// Record per-step divergence and entropy in the trace.
    pub measure: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            min_len: 5,
            max_len: 200,
            max_tokens: 100_000,
            max_sentences: 1_000,
            measure: false,
        }
    }
}

/// Applies the length constraints. Returns `None` when EOS is forced.
pub fn constrain(
    dist: ConditionalDistribution,
    eos: TokenId,
    content_len: usize,
    cfg: &GenerationConfig,
) -> Option<ConditionalDistribution> {
    if content_len >= cfg.max_len {
        None
    } else if content_len < cfg.min_len {
        Some(dist.mask_to_minimum(eos))
    } else {
        Some(dist)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub sample: u64,
    pub pad: u64,
}

/// One generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub sentence: usize,
    pub position: usize,
    pub token: TokenId,
    pub bits: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_qp: Option<f64>,
    /// `None` when infinite or not measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_pq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedOutput {
    /// Content tokens of each sentence; BOS/EOS implicit.
    pub sentences: Vec<Vec<TokenId>>,
    pub trace: Vec<StepRecord>,
    pub frame_bits: usize,
}

/// `(D(q‖p), D(p‖q))` in bits; the second is `None` when infinite.
pub fn divergences(p: &[f64], q: &[f64]) -> (f64, Option<f64>) {
    let mut qp = 0.0;
    let mut pq = 0.0;
    let mut pq_finite = true;
    for (&pi, &qi) in p.iter().zip(q) {
        if qi > 0.0 {
            qp += qi * (qi / pi).log2();
        }
        if pi > 0.0 {
            if qi > 0.0 {
                pq += pi * (pi / qi).log2();
            } else {
                pq_finite = false;
            }
        }
    }
    (qp, pq_finite.then_some(pq))
}

fn measure<C: StegoCodec + ?Sized>(
    codec: &C,
    dist: &ConditionalDistribution,
    rec: &mut StepRecord,
) -> Result<(), CodecError> {
    let p = dist.probabilities();
    let q = codec.implicit_q(dist)?;
    let (qp, pq) = divergences(&p, &q);
    rec.kl_qp = Some(qp);
    rec.kl_pq = pq;
    rec.entropy = Some(dist.entropy());
    Ok(())
}

/// Generates sentences until the frame is consumed and the current sentence
/// has ended.
pub fn embed<C, L>(
    codec: &mut C,
    lm: &mut L,
    msg: &mut BitMessage,
    seeds: Seeds,
    cfg: &GenerationConfig,
) -> Result<EmbedOutput, CodecError>
where
    C: StegoCodec + ?Sized,
    L: LmProvider + ?Sized,
{
    let eos = lm.eos().ok_or(CodecError::NoEos)?;
    let mut sample_rng = ChaCha20Rng::seed_from_u64(seeds.sample);
    let mut pad_rng = ChaCha20Rng::seed_from_u64(seeds.pad);
    let mut sentences = Vec::new();
    let mut trace = Vec::new();
    while sentences.len() < cfg.max_sentences {
        let mut context = vec![BOS];
        loop {
            if trace.len() >= cfg.max_tokens {
                return Err(CodecError::Capacity {
                    tokens: trace.len(),
                    sentences: sentences.len(),
                    remaining: msg.frame_len().saturating_sub(msg.cursor()),
                });
            }
            let content_len = context.len() - 1;
            let raw = lm.next_distribution(&context)?;
            let mut rec = StepRecord {
                sentence: sentences.len(),
                position: content_len,
                token: eos,
                bits: 0,
                forced: true,
                levels: Vec::new(),
                kl_qp: None,
                kl_pq: None,
                entropy: None,
            };
            if let Some(dist) = constrain(raw, eos, content_len, cfg) {
                if cfg.measure {
                    measure(codec, &dist, &mut rec)?;
                }
                let out = codec.embed_step(&dist, msg, &mut sample_rng, &mut pad_rng)?;
                rec.token = out.token;
                rec.bits = out.bits;
                rec.levels = out.levels;
                rec.forced = false;
            }
            let token = rec.token;
            trace.push(rec);
            if token == eos {
                break;
            }
            context.push(token);
        }
        sentences.push(context[1..].to_vec());
        if codec.frame_consumed(msg) {
            return Ok(EmbedOutput {
                sentences,
                trace,
                frame_bits: msg.frame_len(),
            });
        }
    }
    Err(CodecError::Capacity {
        tokens: trace.len(),
        sentences: sentences.len(),
        remaining: msg.frame_len().saturating_sub(msg.cursor()),
    })
}

/// Replays generation over received sentences and returns every bit the
/// tokens carry, in order.
pub fn extract_bits<C, L>(
    codec: &mut C,
    lm: &mut L,
    sentences: &[Vec<TokenId>],
    cfg: &GenerationConfig,
) -> Result<Vec<bool>, CodecError>
where
    C: StegoCodec + ?Sized,
    L: LmProvider + ?Sized,
{
    let eos = lm.eos().ok_or(CodecError::NoEos)?;
    let mut bits = Vec::new();
    for sentence in sentences {
        let mut context = vec![BOS];
        for &token in sentence.iter().chain(std::iter::once(&eos)) {
            let content_len = context.len() - 1;
            let raw = lm.next_distribution(&context)?;
            match constrain(raw, eos, content_len, cfg) {
                None if token == eos => {}
                None => return Err(CodecError::Desync(token)),
                Some(dist) => bits.extend(codec.extract_step(&dist, token)?),
            }
            if token == eos {
                break;
            }
            context.push(token);
        }
    }
    Ok(bits)
}

/// [`extract_bits`] followed by deframing.
pub fn extract<C, L>(
    codec: &mut C,
    lm: &mut L,
    sentences: &[Vec<TokenId>],
    cfg: &GenerationConfig,
) -> Result<Vec<bool>, CodecError>
where
    C: StegoCodec + ?Sized,
    L: LmProvider + ?Sized,
{
    let bits = extract_bits(codec, lm, sentences, cfg)?;
    Ok(deframe_bits(&bits)?)
}

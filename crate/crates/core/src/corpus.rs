//! Corpus preparation: cleaning raw text into sentences, building the
//! vocabulary and splitting train/test sets.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::TokenId;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
pub const RESERVED: [&str; 4] = ["_PAD", "_UNK", "_BOS", "_EOS"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input is not valid UTF-8: {0}")]
    Decode(#[from] std::str::Utf8Error),
    #[error("no sentences survived preprocessing")]
    EmptyCorpus,
    #[error("need at least 2 sentences to split, got {0}")]
    TooFewSentences(usize),
    #[error("split ratio {train}:{test} must have both parts positive")]
    BadRatio { train: u32, test: u32 },
    #[error("vocabulary file line {line}: {reason}")]
    VocabFormat { line: usize, reason: String },
    #[error("sentence has {0} content tokens, outside the allowed length range")]
    SentenceLength(usize),
    #[error("token id {0} outside the vocabulary")]
    UnknownId(TokenId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputMode {
    /// Every line is an independent document.
    #[default]
    Lines,
    /// The whole input is one running text; newlines are whitespace.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub mode: InputMode,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            mode: InputMode::Lines,
            min_len: 5,
            max_len: 200,
        }
    }
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]*>").unwrap())
}

fn boundary_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.!?]+(?:\s+|$)").unwrap())
}

/// Strips punctuation from one sentence and returns its tokens.
/// Apostrophes survive only when touching a letter or digit.
fn clean_tokens(sentence: &str) -> Vec<String> {
    let chars: Vec<char> = sentence
        .chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' => '\'',
            c if c.is_alphanumeric() || c.is_whitespace() || c == '\'' => c,
            _ => ' ',
        })
        .collect();
    let mut out = String::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == '\'' {
            let prev = i > 0 && chars[i - 1].is_alphanumeric();
            let next = chars.get(i + 1).is_some_and(|c| c.is_alphanumeric());
            if !(prev || next) {
                out.push(' ');
                continue;
            }
        }
        out.push(c);
    }
    out.split_whitespace().map(str::to_owned).collect()
}

fn split_document(doc: &str, cfg: &PreprocessConfig, out: &mut Vec<String>) {
    let doc = tag_re().replace_all(doc, " ");
    for piece in boundary_re().split(&doc) {
        let tokens = clean_tokens(piece);
        if (cfg.min_len..=cfg.max_len).contains(&tokens.len()) {
            out.push(tokens.join(" "));
        }
    }
}

/// Lowercases, strips markup and punctuation, and splits raw text into
/// sentences of space-separated tokens.
pub fn preprocess(raw: &[u8], cfg: &PreprocessConfig) -> Result<Vec<String>, CorpusError> {
    let text = std::str::from_utf8(raw)?.to_lowercase();
    let mut out = Vec::new();
    match cfg.mode {
        InputMode::Lines => text.lines().for_each(|l| split_document(l, cfg, &mut out)),
        InputMode::Free => split_document(&text, cfg, &mut out),
    }
    if out.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(out)
}

/// Token ids of one sentence, including the leading BOS and trailing EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<TokenId>,
}

impl Sentence {
    pub fn new(content: &[TokenId], vocab: &Vocabulary, min_len: usize, max_len: usize) -> Result<Self, CorpusError> {
        if !(min_len..=max_len).contains(&content.len()) {
            return Err(CorpusError::SentenceLength(content.len()));
        }
        if let Some(&bad) = content.iter().find(|&&t| t as usize >= vocab.len() || t == PAD) {
            return Err(CorpusError::UnknownId(bad));
        }
        let mut tokens = Vec::with_capacity(content.len() + 2);
        tokens.push(BOS);
        tokens.extend_from_slice(content);
        tokens.push(EOS);
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn content(&self) -> &[TokenId] {
        &self.tokens[1..self.tokens.len() - 1]
    }
}

/// Bijection between surface strings and ids with reserved ids 0..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, TokenId>,
    min_count: u64,
}

impl Vocabulary {
    fn from_parts(surfaces: Vec<String>, counts: Vec<u64>, min_count: u64) -> Self {
        let index = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        Self {
            surfaces,
            counts,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn id(&self, surface: &str) -> TokenId {
        self.index.get(surface).copied().unwrap_or(UNK)
    }

    pub fn get(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: TokenId) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    /// Maps a space-separated sentence to content ids (no BOS/EOS).
    pub fn encode(&self, sentence: &str) -> Vec<TokenId> {
        sentence.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String, CorpusError> {
        let words = ids
            .iter()
            .map(|&id| self.surface(id).ok_or(CorpusError::UnknownId(id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(words.join(" "))
    }

    /// `id<TAB>surface<TAB>count` lines sorted by id.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (i, (w, c)) in self.surfaces.iter().zip(&self.counts).enumerate() {
            let _ = writeln!(s, "{i}\t{w}\t{c}");
        }
        s
    }

    pub fn from_tsv(text: &str, min_count: u64) -> Result<Self, CorpusError> {
        let mut surfaces = Vec::new();
        let mut counts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let err = |reason: &str| CorpusError::VocabFormat {
                line: lineno + 1,
                reason: reason.to_owned(),
            };
            let mut fields = line.split('\t');
            let (Some(id), Some(w), Some(c), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
                return Err(err("expected three tab-separated fields"));
            };
            let id: usize = id.parse().map_err(|_| err("bad id"))?;
            if id != surfaces.len() {
                return Err(err("ids must be dense and sorted"));
            }
            if id < RESERVED.len() && w != RESERVED[id] {
                return Err(err("reserved id remapped"));
            }
            counts.push(c.parse().map_err(|_| err("bad count"))?);
            surfaces.push(w.to_owned());
        }
        if surfaces.len() < RESERVED.len() {
            return Err(CorpusError::VocabFormat {
                line: surfaces.len() + 1,
                reason: "reserved tokens missing".into(),
            });
        }
        let vocab = Self::from_parts(surfaces, counts, min_count);
        if vocab.index.len() != vocab.surfaces.len() {
            return Err(CorpusError::VocabFormat {
                line: 0,
                reason: "duplicate surface form".into(),
            });
        }
        Ok(vocab)
    }

    /// SHA-256 of the TSV serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }
}

/// Counts tokens and keeps those seen at least `min_count` times.
/// Ids after the reserved block go by descending count, then surface order.
pub fn build_vocab(sentences: &[String], min_count: u64) -> Result<Vocabulary, CorpusError> {
    if sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for w in s.split_whitespace() {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = Vec::new();
    let mut unk = 0u64;
    for (w, c) in counts {
        if c >= min_count {
            kept.push((w, c));
        } else {
            unk += c;
        }
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let n = sentences.len() as u64;
    let mut surfaces: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    let mut cnts = vec![0, unk, n, n];
    for (w, c) in kept {
        surfaces.push(w.to_owned());
        cnts.push(c);
    }
    Ok(Vocabulary::from_parts(surfaces, cnts, min_count))
}

/// Train:test proportion, e.g. 9:1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self { train: 9, test: 1 }
    }
}

/// Seeded shuffle followed by a floor-rounded partition. Both sides get at
/// least one item.
pub fn split<T>(mut items: Vec<T>, ratio: SplitRatio, seed: u64) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if ratio.train == 0 || ratio.test == 0 {
        return Err(CorpusError::BadRatio {
            train: ratio.train,
            test: ratio.test,
        });
    }
    let n = items.len();
    if n < 2 {
        return Err(CorpusError::TooFewSentences(n));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let n_train = (n as u128 * ratio.train as u128 / (ratio.train + ratio.test) as u128) as usize;
    let n_train = n_train.clamp(1, n - 1);
    let test = items.split_off(n_train);
    Ok((items, test))
}

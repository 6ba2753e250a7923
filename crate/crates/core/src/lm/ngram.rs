//! Count-based n-gram model.
//!
//! Scores follow stupid backoff: a token seen after the longest matching
//! context gets its relative frequency there, anything else gets 0.4 times
//! its score one context shorter, bottoming out at an add-k smoothed unigram
//! distribution. Scores are normalized over the support and quantized.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ConditionalDistribution, LmError, LmProvider};
use crate::corpus::{Sentence, Vocabulary, BOS, EOS, PAD};
use crate::TokenId;

pub const BACKOFF: f64 = 0.4;
const FORMAT: &str = "stego-ngram";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
struct Follow {
    total: u64,
    next: Vec<(TokenId, u64)>,
}

#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    k: f64,
    vocab: Vocabulary,
    unigram: Vec<u64>,
    /// `contexts[j - 1]` maps length-`j` contexts to their continuations.
    contexts: Vec<HashMap<Vec<TokenId>, Follow>>,
    support: Vec<TokenId>,
    slot: Vec<Option<usize>>,
    smoothed_unigram: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    k: f64,
    vocab_hash: String,
    vocab: Vec<(String, u64)>,
    min_count: u64,
    unigram: Vec<u64>,
    contexts: Vec<Vec<(Vec<TokenId>, Vec<(TokenId, u64)>)>>,
}

impl NGramLm {
    /// Counts every n-gram up to `order` in `corpus` (sentences include
    /// BOS/EOS).
    pub fn train(corpus: &[Sentence], vocab: Vocabulary, order: usize, k: f64) -> Result<Self, LmError> {
        if order < 2 {
            return Err(LmError::BadOrder(order));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(LmError::BadSmoothing(k));
        }
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let mut unigram = vec![0u64; vocab.len()];
        let mut raw: Vec<HashMap<Vec<TokenId>, HashMap<TokenId, u64>>> = vec![HashMap::new(); order - 1];
        for sentence in corpus {
            let toks = sentence.tokens();
            for t in 1..toks.len() {
                let w = toks[t];
                unigram[w as usize] += 1;
                for j in 1..order.min(t + 1) {
                    let ctx = toks[t - j..t].to_vec();
                    *raw[j - 1].entry(ctx).or_default().entry(w).or_default() += 1;
                }
            }
        }
        let contexts = raw
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|(ctx, m)| {
                        let mut next: Vec<_> = m.into_iter().collect();
                        next.sort_unstable();
                        let total = next.iter().map(|x| x.1).sum();
                        (ctx, Follow { total, next })
                    })
                    .collect()
            })
            .collect();
        Ok(Self::assemble(order, k, vocab, unigram, contexts))
    }

    fn assemble(
        order: usize,
        k: f64,
        vocab: Vocabulary,
        unigram: Vec<u64>,
        contexts: Vec<HashMap<Vec<TokenId>, Follow>>,
    ) -> Self {
        let support: Vec<TokenId> = (0..vocab.len() as TokenId)
            .filter(|&t| t != PAD && t != BOS)
            .collect();
        let mut slot = vec![None; vocab.len()];
        for (i, &t) in support.iter().enumerate() {
            slot[t as usize] = Some(i);
        }
        let total: u64 = support.iter().map(|&t| unigram[t as usize]).sum();
        let denom = total as f64 + k * support.len() as f64;
        let smoothed_unigram = support
            .iter()
            .map(|&t| (unigram[t as usize] as f64 + k) / denom)
            .collect();
        Self {
            order,
            k,
            vocab,
            unigram,
            contexts,
            support,
            slot,
            smoothed_unigram,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Tokens the model can emit: everything except `_PAD` and `_BOS`.
    pub fn support(&self) -> &[TokenId] {
        &self.support
    }

    /// Normalized backoff scores over [`Self::support`].
    pub fn probabilities(&self, context: &[TokenId]) -> Result<Vec<f64>, LmError> {
        if context.first() != Some(&BOS) {
            return Err(LmError::MissingBos);
        }
        if let Some(&bad) = context.iter().find(|&&t| t as usize >= self.vocab.len()) {
            return Err(LmError::UnknownToken(bad));
        }
        let mut scores = self.smoothed_unigram.clone();
        for j in 1..self.order.min(context.len() + 1) {
            let ctx = &context[context.len() - j..];
            let Some(follow) = self.contexts[j - 1].get(ctx) else {
                break;
            };
            scores.iter_mut().for_each(|s| *s *= BACKOFF);
            for &(w, c) in &follow.next {
                if let Some(i) = self.slot[w as usize] {
                    scores[i] = c as f64 / follow.total as f64;
                }
            }
        }
        let sum: f64 = scores.iter().sum();
        scores.iter_mut().for_each(|s| *s /= sum);
        Ok(scores)
    }

    pub fn distribution(&self, context: &[TokenId]) -> Result<ConditionalDistribution, LmError> {
        let probs = self.probabilities(context)?;
        ConditionalDistribution::from_probs(&self.support, &probs)
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), LmError> {
        let vocab = (0..self.vocab.len() as TokenId)
            .map(|i| {
                (
                    self.vocab.surface(i).unwrap().to_owned(),
                    self.vocab.count(i).unwrap(),
                )
            })
            .collect();
        let contexts = self
            .contexts
            .iter()
            .map(|level| {
                let mut rows: Vec<_> = level
                    .iter()
                    .map(|(ctx, f)| (ctx.clone(), f.next.clone()))
                    .collect();
                rows.sort_unstable();
                rows
            })
            .collect();
        let file = ModelFile {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            order: self.order,
            k: self.k,
            vocab_hash: self.vocab.hash(),
            vocab,
            min_count: self.vocab.min_count(),
            unigram: self.unigram.clone(),
            contexts,
        };
        serde_json::to_writer(w, &file).map_err(|e| LmError::ModelFormat(e.to_string()))
    }

    /// Loads a model file and checks its embedded vocabulary against the
    /// stored hash.
    pub fn load<R: Read>(r: R) -> Result<Self, LmError> {
        let file: ModelFile = serde_json::from_reader(r).map_err(|e| LmError::ModelFormat(e.to_string()))?;
        if file.format != FORMAT || file.version != FORMAT_VERSION {
            return Err(LmError::ModelFormat(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        let tsv: String = file
            .vocab
            .iter()
            .enumerate()
            .map(|(i, (w, c))| format!("{i}\t{w}\t{c}\n"))
            .collect();
        let vocab = Vocabulary::from_tsv(&tsv, file.min_count).map_err(|e| LmError::ModelFormat(e.to_string()))?;
        if vocab.hash() != file.vocab_hash {
            return Err(LmError::VocabMismatch {
                expected: file.vocab_hash,
                found: vocab.hash(),
            });
        }
        if file.order < 2 || file.contexts.len() != file.order - 1 || file.unigram.len() != vocab.len() {
            return Err(LmError::ModelFormat("inconsistent table sizes".into()));
        }
        let n = vocab.len() as TokenId;
        let contexts = file
            .contexts
            .into_iter()
            .map(|rows| {
                rows.into_iter()
                    .map(|(ctx, next)| {
                        if ctx.iter().chain(next.iter().map(|x| &x.0)).any(|&t| t >= n) {
                            return Err(LmError::ModelFormat("token id out of range".into()));
                        }
                        let total = next.iter().map(|x| x.1).sum();
                        Ok((ctx, Follow { total, next }))
                    })
                    .collect::<Result<HashMap<_, _>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::assemble(file.order, file.k, vocab, file.unigram, contexts))
    }

    /// Like [`Self::load`], additionally requiring the model to have been
    /// trained against `vocab`.
    pub fn load_with_vocab<R: Read>(r: R, vocab: &Vocabulary) -> Result<Self, LmError> {
        let lm = Self::load(r)?;
        if lm.vocab.hash() != vocab.hash() {
            return Err(LmError::VocabMismatch {
                expected: vocab.hash(),
                found: lm.vocab.hash(),
            });
        }
        Ok(lm)
    }
}

impl LmProvider for NGramLm {
    fn next_distribution(&mut self, context: &[TokenId]) -> Result<ConditionalDistribution, LmError> {
        self.distribution(context)
    }

    fn eos(&self) -> Option<TokenId> {
        Some(EOS)
    }
}

impl LmProvider for &NGramLm {
    fn next_distribution(&mut self, context: &[TokenId]) -> Result<ConditionalDistribution, LmError> {
        self.distribution(context)
    }

    fn eos(&self) -> Option<TokenId> {
        Some(EOS)
    }
}

/// Provider session that memoizes distributions by the context suffix the
/// model actually reads. The memo is dropped wholesale once it holds
/// `capacity` contexts.
pub struct CachedNGram<'a> {
    lm: &'a NGramLm,
    memo: HashMap<Vec<TokenId>, ConditionalDistribution>,
    capacity: usize,
}

impl NGramLm {
    pub fn cached(&self, capacity: usize) -> CachedNGram<'_> {
        CachedNGram {
            lm: self,
            memo: HashMap::new(),
            capacity,
        }
    }
}

impl LmProvider for CachedNGram<'_> {
    fn next_distribution(&mut self, context: &[TokenId]) -> Result<ConditionalDistribution, LmError> {
        if context.first() != Some(&BOS) {
            return Err(LmError::MissingBos);
        }
        if let Some(&bad) = context.iter().find(|&&t| t as usize >= self.lm.vocab.len()) {
            return Err(LmError::UnknownToken(bad));
        }
        let key = &context[context.len().saturating_sub(self.lm.order - 1)..];
        if let Some(d) = self.memo.get(key) {
            return Ok(d.clone());
        }
        let d = self.lm.distribution(context)?;
        if self.memo.len() >= self.capacity {
            self.memo.clear();
        }
        self.memo.insert(key.to_vec(), d.clone());
        Ok(d)
    }

    fn eos(&self) -> Option<TokenId> {
        Some(EOS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;

    fn toy(order: usize) -> NGramLm {
        let text = ["a b", "a b", "a c"];
        let sents: Vec<String> = text.iter().map(|s| s.to_string()).collect();
        let vocab = build_vocab(&sents, 1).unwrap();
        let corpus: Vec<Sentence> = sents
            .iter()
            .map(|s| Sentence::new(&vocab.encode(s), &vocab, 1, 200).unwrap())
            .collect();
        NGramLm::train(&corpus, vocab, order, 1.0).unwrap()
    }

    #[test]
    fn count_dominance() {
        let lm = toy(2);
        let v = lm.vocab().clone();
        let d = lm.distribution(&[BOS, v.id("a")]).unwrap();
        assert!(d.mass_of(v.id("b")).unwrap() > d.mass_of(v.id("c")).unwrap());
        assert_eq!(d.entries()[0].token, v.id("b"));
    }

    #[test]
    fn covers_support_and_sums() {
        let lm = toy(3);
        let d = lm.distribution(&[BOS]).unwrap();
        assert_eq!(d.len(), lm.vocab().len() - 2);
        assert!(d.mass_of(PAD).is_none() && d.mass_of(BOS).is_none());
        assert_eq!(d.entries().iter().map(|e| e.mass).sum::<u64>(), super::super::DENOMINATOR);
    }

    #[test]
    fn unseen_context_backs_off_to_unigram() {
        let lm = toy(3);
        let v = lm.vocab().clone();
        // "c" is never followed by anything but EOS; "b c" never occurs, so the
        // trigram context is unseen. Use a context whose last token was never
        // a context at all: UNK.
        let p = lm.probabilities(&[BOS, crate::corpus::UNK]).unwrap();
        let s: f64 = lm.smoothed_unigram.iter().sum();
        for (a, b) in p.iter().zip(&lm.smoothed_unigram) {
            assert!((a - b / s).abs() < 1e-12);
        }
        // A seen bigram context differs from the unigram distribution.
        let q = lm.probabilities(&[BOS, v.id("a")]).unwrap();
        assert!(q.iter().zip(&p).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn rejects_bad_parameters() {
        let sents = vec!["a b".to_string()];
        let vocab = build_vocab(&sents, 1).unwrap();
        let corpus = vec![Sentence::new(&vocab.encode("a b"), &vocab, 1, 5).unwrap()];
        assert!(matches!(
            NGramLm::train(&corpus, vocab.clone(), 1, 1.0),
            Err(LmError::BadOrder(1))
        ));
        assert!(matches!(
            NGramLm::train(&corpus, vocab.clone(), 2, 0.0),
            Err(LmError::BadSmoothing(_))
        ));
        assert!(matches!(NGramLm::train(&[], vocab, 2, 1.0), Err(LmError::EmptyCorpus)));
    }

    #[test]
    fn cached_session_matches_direct() {
        use rand::{Rng, SeedableRng};
        let lm = toy(3);
        let mut cached = lm.cached(8);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mut ctx = vec![BOS];
            for _ in 0..rng.gen_range(0..5) {
                ctx.push(lm.support()[rng.gen_range(0..lm.support().len())]);
            }
            if ctx[1..].contains(&EOS) {
                continue;
            }
            assert_eq!(cached.next_distribution(&ctx).unwrap(), lm.distribution(&ctx).unwrap());
        }
        assert!(cached.memo.len() <= 8);
        assert!(matches!(cached.next_distribution(&[4]), Err(LmError::MissingBos)));
    }

    #[test]
    fn context_must_start_with_bos() {
        let lm = toy(2);
        assert!(matches!(lm.distribution(&[4]), Err(LmError::MissingBos)));
        assert!(matches!(lm.distribution(&[BOS, 999]), Err(LmError::UnknownToken(999))));
    }

    #[test]
    fn model_file_roundtrip() {
        let lm = toy(3);
        let mut buf = Vec::new();
        lm.save(&mut buf).unwrap();
        let back = NGramLm::load(buf.as_slice()).unwrap();
        let v = lm.vocab();
        for ctx in [vec![BOS], vec![BOS, v.id("a")], vec![BOS, v.id("a"), v.id("b")]] {
            assert_eq!(lm.distribution(&ctx).unwrap(), back.distribution(&ctx).unwrap());
        }
        let mut again = Vec::new();
        back.save(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(NGramLm::load_with_vocab(buf.as_slice(), v).is_ok());
    }

    #[test]
    fn model_file_detects_vocab_tampering() {
        let lm = toy(2);
        let mut buf = Vec::new();
        lm.save(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("[\"b\",", "[\"z\",");
        assert!(matches!(
            NGramLm::load(text.as_bytes()),
            Err(LmError::VocabMismatch { .. })
        ));
        let other = build_vocab(&["x y".to_string()], 1).unwrap();
        let mut buf = Vec::new();
        lm.save(&mut buf).unwrap();
        assert!(matches!(
            NGramLm::load_with_vocab(buf.as_slice(), &other),
            Err(LmError::VocabMismatch { .. })
        ));
    }
}

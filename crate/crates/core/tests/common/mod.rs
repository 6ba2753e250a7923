#![allow(dead_code)]

use stego_core::corpus::{build_vocab, preprocess, split, PreprocessConfig, Sentence, SplitRatio};
use stego_core::lm::NGramLm;

pub const TOY: &str = include_str!("../../data/toy_reviews.txt");
pub const BENCH: &str = include_str!("../../data/bench_reviews.txt");

pub fn toy_lm(order: usize, k: f64, min_count: u64) -> (NGramLm, Vec<Sentence>) {
    train_lm(TOY, order, k, min_count)
}

pub fn train_lm(text: &str, order: usize, k: f64, min_count: u64) -> (NGramLm, Vec<Sentence>) {
    let cfg = PreprocessConfig::default();
    let sentences = preprocess(text.as_bytes(), &cfg).unwrap();
    let (train, test) = split(sentences, SplitRatio::default(), 7).unwrap();
    let vocab = build_vocab(&train, min_count).unwrap();
    let encode = |s: &[String]| -> Vec<Sentence> {
        s.iter()
            .map(|x| Sentence::new(&vocab.encode(x), &vocab, cfg.min_len, cfg.max_len).unwrap())
            .collect()
    };
    let train = encode(&train);
    let test = encode(&test);
    (NGramLm::train(&train, vocab, order, k).unwrap(), test)
}

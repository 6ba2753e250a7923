mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use stego_core::bitio::{frame, frame_bits};
use stego_core::corpus::EOS;
use stego_core::lm::NGramLm;
use stego_core::metrics::embedding_rate;
use stego_core::stego::{embed, extract, CodecError, GenerationConfig, Method, Seeds};

const METHODS: [Method; 5] = [
    Method::Adg,
    Method::Bins { b: 3 },
    Method::Huffman { k: 3 },
    Method::PatientHuffman { k: 3, delta: 1.0 },
    Method::Arithmetic { h: 64, precision: 52 },
];

#[test]
fn every_codec_roundtrips_on_the_toy_corpus() {
    let (lm, _) = common::toy_lm(3, 0.01, 10);
    let cfg = GenerationConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for m in METHODS {
        for i in 0..40 {
            let len = rng.gen_range(0..=1024);
            let payload: Vec<bool> = (0..len).map(|_| rng.gen()).collect();
            let mut msg = frame_bits(&payload).unwrap();
            let seeds = Seeds { sample: i, pad: 1000 + i };
            let mut enc = m.build(lm.support(), 11).unwrap();
            let out = embed(&mut enc, &mut &lm, &mut msg, seeds, &cfg).unwrap();
            assert!(out.sentences.iter().all(|s| !s.contains(&EOS) && s.len() >= cfg.min_len));
            let mut dec = m.build(lm.support(), 11).unwrap();
            let back = extract(&mut dec, &mut &lm, &out.sentences, &cfg).unwrap();
            assert_eq!(back, payload, "{m:?} payload {i}");
        }
    }
}

#[test]
fn extraction_with_a_reloaded_model() {
    let (lm, _) = common::toy_lm(3, 0.01, 10);
    let mut file = Vec::new();
    lm.save(&mut file).unwrap();
    let receiver = NGramLm::load(file.as_slice()).unwrap();
    let cfg = GenerationConfig::default();
    let payload = b"meet at the old bridge at noon";
    for m in METHODS {
        let mut msg = frame(payload).unwrap();
        let mut enc = m.build(lm.support(), 2).unwrap();
        let out = embed(&mut enc, &mut &lm, &mut msg, Seeds { sample: 1, pad: 2 }, &cfg).unwrap();
        let mut dec = m.build(receiver.support(), 2).unwrap();
        let bits = extract(&mut dec, &mut &receiver, &out.sentences, &cfg).unwrap();
        assert_eq!(stego_core::bitio::bits_to_bytes(&bits), payload);
    }
}

#[test]
fn bins_rate_is_exact() {
    let (lm, _) = common::toy_lm(3, 0.01, 10);
    let cfg = GenerationConfig::default();
    for b in 1..=5 {
        let mut msg = frame(&[0xa5; 64]).unwrap();
        let mut codec = Method::Bins { b }.build(lm.support(), 9).unwrap();
        let out = embed(&mut codec, &mut &lm, &mut msg, Seeds { sample: 0, pad: 0 }, &cfg).unwrap();
        assert_eq!(embedding_rate(&out.trace).unwrap(), b as f64);
    }
}

#[test]
fn wrong_partition_seed_fails_or_garbles() {
    let (lm, _) = common::toy_lm(3, 0.01, 10);
    let cfg = GenerationConfig::default();
    let payload = b"secret".to_vec();
    let mut msg = frame(&payload).unwrap();
    let m = Method::Bins { b: 4 };
    let out = embed(&mut m.build(lm.support(), 1).unwrap(), &mut &lm, &mut msg, Seeds { sample: 0, pad: 0 }, &cfg).unwrap();
    match extract(&mut m.build(lm.support(), 2).unwrap(), &mut &lm, &out.sentences, &cfg) {
        Ok(bits) => assert_ne!(stego_core::bitio::bits_to_bytes(&bits), payload),
        Err(_) => {}
    }
}

#[test]
fn token_budget_is_enforced() {
    let (lm, _) = common::toy_lm(3, 0.01, 10);
    let cfg = GenerationConfig { max_tokens: 20, ..Default::default() };
    let mut msg = frame(&[0u8; 200]).unwrap();
    let err = embed(&mut Method::Adg.build(&[], 0).unwrap(), &mut &lm, &mut msg, Seeds { sample: 0, pad: 0 }, &cfg)
        .unwrap_err();
    assert!(matches!(err, CodecError::Capacity { tokens: 20, .. }));
}

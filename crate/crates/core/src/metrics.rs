//! Capacity and imperceptibility metrics. Everything is reported in bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::stego::StepRecord;

pub const SENTENCE_DIM: usize = 100;
/// Identifier written into reports next to KLD₂ values.
pub const VECTORIZER_ID: &str = "hashed-bow-rademacher-v1";
const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trace has no generated tokens")]
    EmptyTrace,
    #[error("trace step {0} carries no divergence measurement")]
    Unmeasured(usize),
    #[error("need at least 2 vectors per side, got {cover} cover and {stego} stego")]
    TooFewVectors { cover: usize, stego: usize },
    #[error("vector dimensions differ")]
    DimensionMismatch,
    #[error("empty sentence")]
    EmptySentence,
    #[error("{name}={value} outside its valid range")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Pairwise summation; fixed reduction order regardless of caller.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn generated(trace: &[StepRecord]) -> impl Iterator<Item = &StepRecord> {
    trace.iter().filter(|r| !r.forced)
}

/// Carried bits per generated token. Forced end-of-sentence tokens carry no
/// choice and are not counted; header and padding bits are.
pub fn embedding_rate(trace: &[StepRecord]) -> Result<f64, MetricsError> {
    let tokens = generated(trace).count();
    if tokens == 0 {
        return Err(MetricsError::EmptyTrace);
    }
    let bits: usize = generated(trace).map(|r| r.bits).sum();
    Ok(bits as f64 / tokens as f64)
}

/// Payload bits per generated token, excluding framing and padding.
pub fn payload_rate(payload_bits: usize, trace: &[StepRecord]) -> Result<f64, MetricsError> {
    let tokens = generated(trace).count();
    if tokens == 0 {
        return Err(MetricsError::EmptyTrace);
    }
    Ok(payload_bits as f64 / tokens as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kld1 {
    /// Mean `D(q‖p)`.
    pub qp: f64,
    /// Mean `D(p‖q)`; `None` if any step was infinite.
    pub pq: Option<f64>,
}

/// Mean per-step divergence between the codec's induced distribution and
/// the model distribution.
pub fn kld1(trace: &[StepRecord]) -> Result<Kld1, MetricsError> {
    let steps: Vec<&StepRecord> = generated(trace).collect();
    if steps.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let mut qp = Vec::with_capacity(steps.len());
    let mut pq = Vec::with_capacity(steps.len());
    let mut pq_finite = true;
    for (i, r) in steps.iter().enumerate() {
        qp.push(r.kl_qp.ok_or(MetricsError::Unmeasured(i))?);
        match r.kl_pq {
            Some(v) => pq.push(v),
            None => pq_finite = false,
        }
    }
    let n = steps.len() as f64;
    Ok(Kld1 {
        qp: pairwise_sum(&qp) / n,
        pq: pq_finite.then(|| pairwise_sum(&pq) / n),
    })
}

/// Mean entropy of the model distribution over generated steps.
pub fn mean_entropy(trace: &[StepRecord]) -> Result<f64, MetricsError> {
    let hs = generated(trace)
        .enumerate()
        .map(|(i, r)| r.entropy.ok_or(MetricsError::Unmeasured(i)))
        .collect::<Result<Vec<_>, _>>()?;
    if hs.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    Ok(pairwise_sum(&hs) / hs.len() as f64)
}

fn token_pattern(token: &str, dim: usize, seed: u64) -> impl Iterator<Item = f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha20Rng::from_seed(key);
    (0..dim).map(move |_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
}

/// Hashed bag-of-words projection: every token maps to a fixed ±1 pattern,
/// patterns are summed and the sum is scaled to unit length.
pub fn sentence_vector<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Result<Vec<f64>, MetricsError> {
    if tokens.is_empty() {
        return Err(MetricsError::EmptySentence);
    }
    let mut v = vec![0.0; dim];
    for t in tokens {
        for (acc, x) in v.iter_mut().zip(token_pattern(t.as_ref(), dim, seed)) {
            *acc += x;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(v)
}

fn moments(vs: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = vs.len() as f64;
    let mut mean = Vec::with_capacity(dim);
    let mut sd = Vec::with_capacity(dim);
    for d in 0..dim {
        let col: Vec<f64> = vs.iter().map(|v| v[d]).collect();
        let mu = pairwise_sum(&col) / n;
        let sq: Vec<f64> = col.iter().map(|x| (x - mu) * (x - mu)).collect();
        mean.push(mu);
        sd.push((pairwise_sum(&sq) / (n - 1.0)).sqrt().max(SIGMA_FLOOR));
    }
    (mean, sd)
}

/// Divergence between per-dimension Gaussian fits of the cover and stego
/// sentence vectors, summed over dimensions.
pub fn kld2(cover: &[Vec<f64>], stego: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if cover.len() < 2 || stego.len() < 2 {
        return Err(MetricsError::TooFewVectors {
            cover: cover.len(),
            stego: stego.len(),
        });
    }
    let dim = cover[0].len();
    if cover.iter().chain(stego).any(|v| v.len() != dim) {
        return Err(MetricsError::DimensionMismatch);
    }
    let (mx, sx) = moments(cover, dim);
    let (my, sy) = moments(stego, dim);
    let terms: Vec<f64> = (0..dim)
        .map(|d| {
            (sy[d] / sx[d]).ln() + (sx[d] * sx[d] + (mx[d] - my[d]).powi(2)) / (2.0 * sy[d] * sy[d]) - 0.5
        })
        .collect();
    Ok(pairwise_sum(&terms) / std::f64::consts::LN_2)
}

/// Capacity discounted by detectability: `2 (1 - acc') er` with
/// `acc' = max(acc, 1 - acc)`.
pub fn eer(acc: f64, er: f64) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&acc) {
        return Err(MetricsError::OutOfRange { name: "acc", value: acc });
    }
    if !(er >= 0.0 && er.is_finite()) {
        return Err(MetricsError::OutOfRange { name: "er", value: er });
    }
    let acc = acc.max(1.0 - acc);
    Ok(2.0 * (1.0 - acc) * er)
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub params: String,
    pub corpus: String,
    pub er: f64,
    pub payload_er: f64,
    pub kld1_qp: f64,
    pub kld1_pq: Option<f64>,
    pub kld2: Option<f64>,
    pub eer: Option<f64>,
    pub mean_entropy: f64,
    pub tokens: usize,
    pub sentences: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "method,params,corpus,er,kld1_qp,kld1_pq,kld2,eer";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "inf".to_owned(), |x| format!("{x:.6}"));
        format!(
            "{},{},{},{:.6},{:.6},{},{},{}",
            self.method,
            self.params,
            self.corpus,
            self.er,
            self.kld1_qp,
            opt(self.kld1_pq),
            self.kld2.map_or_else(String::new, |x| format!("{x:.6}")),
            self.eer.map_or_else(String::new, |x| format!("{x:.6}")),
        )
    }
}

//! The subcommands as library functions. Each one reads and writes files
//! and returns a small summary for logging.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use log::info;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use stego_core::bitio::{bits_to_bytes, frame};
use stego_core::corpus::{build_vocab, preprocess, split, Sentence, Vocabulary, BOS, EOS, PAD};
use stego_core::lm::{ExternalProvider, LmProvider, NGramLm};
use stego_core::metrics::{self, MetricReport, SENTENCE_DIM, VECTORIZER_ID};
use stego_core::stego::{embed, extract, EmbedOutput, Method, Seeds, StepRecord};
use stego_core::TokenId;

use crate::config::RunConfig;

pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";
pub const VOCAB_FILE: &str = "vocab.tsv";

fn read(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn read_text(path: &Path, what: &str) -> Result<String> {
    String::from_utf8(read(path, what)?).with_context(|| format!("{what} {} is not UTF-8", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Non-empty lines that are not `#` comments.
fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessSummary {
    pub sentences: usize,
    pub train: usize,
    pub test: usize,
    pub vocab: usize,
}

/// Raw corpus → `train.txt`, `test.txt` and `vocab.tsv` in `out_dir`.
pub fn cmd_preprocess(cfg: &RunConfig, input: &Path, out_dir: &Path) -> Result<PreprocessSummary> {
    let raw = read(input, "corpus")?;
    let sentences = preprocess(&raw, &cfg.preprocess())?;
    let total = sentences.len();
    let (train, test) = split(sentences, cfg.split_ratio(), cfg.seeds.split)?;
    let vocab = build_vocab(&train, cfg.corpus.min_count)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    for (name, part) in [(TRAIN_FILE, &train), (TEST_FILE, &test)] {
        let mut w = create(&out_dir.join(name))?;
        for s in part.iter() {
            writeln!(w, "{s}")?;
        }
        w.flush()?;
    }
    fs::write(out_dir.join(VOCAB_FILE), vocab.to_tsv())?;
    Ok(PreprocessSummary {
        sentences: total,
        train: train.len(),
        test: test.len(),
        vocab: vocab.len(),
    })
}

fn load_vocab(path: &Path, min_count: u64) -> Result<Vocabulary> {
    let text = read_text(path, "vocabulary")?;
    Vocabulary::from_tsv(&text, min_count).with_context(|| format!("invalid vocabulary {}", path.display()))
}

fn encode_lines(text: &str, vocab: &Vocabulary, cfg: &RunConfig) -> Result<Vec<Sentence>> {
    data_lines(text)
        .enumerate()
        .map(|(i, line)| {
            Sentence::new(&vocab.encode(line), vocab, cfg.corpus.min_len, cfg.corpus.max_len)
                .with_context(|| format!("sentence {} of the training split", i + 1))
        })
        .collect()
}

/// Preprocessed directory → n-gram model file.
pub fn cmd_train(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<NGramLm> {
    let vocab = load_vocab(&data_dir.join(VOCAB_FILE), cfg.corpus.min_count)?;
    let text = read_text(&data_dir.join(TRAIN_FILE), "training split")?;
    let train = encode_lines(&text, &vocab, cfg)?;
    let lm = NGramLm::train(&train, vocab, cfg.lm.order, cfg.lm.k)?;
    let mut w = create(out)?;
    lm.save(&mut w)?;
    w.flush()?;
    Ok(lm)
}

/// A loaded language model plus its vocabulary.
pub enum Model {
    NGram(NGramLm),
    External { vocab: Vocabulary, support: Vec<TokenId> },
}

impl Model {
    pub fn open(cfg: &RunConfig, model: Option<&Path>) -> Result<Self> {
        match cfg.lm.provider.as_str() {
            "external" => {
                let path = cfg.lm.vocab.as_deref().expect("validated");
                let vocab = load_vocab(path, cfg.corpus.min_count)?;
                let support = (0..vocab.len() as TokenId)
                    .filter(|&t| t != PAD && t != BOS)
                    .collect();
                Ok(Model::External { vocab, support })
            }
            _ => {
                let path = model.context("an n-gram provider needs --model")?;
                let bytes = read(path, "model file")?;
                let lm = NGramLm::load(bytes.as_slice()).with_context(|| format!("invalid model file {}", path.display()))?;
                Ok(Model::NGram(lm))
            }
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Model::NGram(lm) => lm.vocab(),
            Model::External { vocab, .. } => vocab,
        }
    }

    pub fn support(&self) -> &[TokenId] {
        match self {
            Model::NGram(lm) => lm.support(),
            Model::External { support, .. } => support,
        }
    }

    /// A provider session. External providers get a fresh process or
    /// connection per session.
    pub fn provider(&self, cfg: &RunConfig) -> Result<Box<dyn LmProvider + Send + '_>> {
        match self {
            Model::NGram(lm) => Ok(Box::new(lm.cached(1 << 16))),
            Model::External { .. } => {
                let timeout = Duration::from_millis(cfg.lm.timeout_ms);
                let p = if let Some((prog, args)) = cfg.lm.command.split_first() {
                    let mut c = Command::new(prog);
                    c.args(args);
                    ExternalProvider::spawn(c, timeout)?
                } else {
                    ExternalProvider::connect(cfg.lm.address.as_str(), timeout)?
                };
                Ok(Box::new(p.with_eos(EOS)))
            }
        }
    }

    pub fn hash(&self) -> String {
        self.vocab().hash()
    }
}

/// First line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub method: String,
    pub params: String,
    pub seeds: crate::config::SeedConfig,
    pub vocab_hash: String,
    pub payload_bits: usize,
    pub frame_bits: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: TraceHeader,
}

fn stegotext_header(cfg: &RunConfig, method: &Method, vocab_hash: &str) -> String {
    let label = format!("{} {}", method.name(), method.params());
    format!("# method: {}\n# {}\n# vocab: {vocab_hash}\n", label.trim_end(), cfg.seeds.header())
}

fn seeds(cfg: &RunConfig) -> Seeds {
    Seeds {
        sample: cfg.seeds.sample,
        pad: cfg.seeds.pad,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedSummary {
    pub sentences: usize,
    pub tokens: usize,
    pub er: f64,
}

/// Payload → stegotext (one sentence per line) and optionally an NDJSON trace.
pub fn cmd_embed(cfg: &RunConfig, model: &Model, payload: &[u8], out: &Path, trace: Option<&Path>) -> Result<EmbedSummary> {
    let method = cfg.method.to_method("method")?;
    let mut codec = method.build(model.support(), cfg.seeds.partition)?;
    let mut lm = model.provider(cfg)?;
    let mut msg = frame(payload)?;
    let result = embed(&mut codec, lm.as_mut(), &mut msg, seeds(cfg), &cfg.generation(trace.is_some()))
        .with_context(|| format!("embedding {} bytes with {}", payload.len(), method.name()))?;
    write_stegotext(out, &stegotext_header(cfg, &method, &model.hash()), model.vocab(), &result.sentences)?;
    if let Some(path) = trace {
        let header = TraceHeader {
            method: method.name().into(),
            params: method.params(),
            seeds: cfg.seeds,
            vocab_hash: model.hash(),
            payload_bits: payload.len() * 8,
            frame_bits: result.frame_bits,
        };
        write_trace(path, &header, &result.trace)?;
    }
    Ok(EmbedSummary {
        sentences: result.sentences.len(),
        tokens: result.trace.len(),
        er: metrics::embedding_rate(&result.trace)?,
    })
}

fn write_stegotext(path: &Path, header: &str, vocab: &Vocabulary, sentences: &[Vec<TokenId>]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(header.as_bytes())?;
    for s in sentences {
        writeln!(w, "{}", vocab.decode(s)?)?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(path: &Path, header: &TraceHeader, trace: &[StepRecord]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &HeaderLine { header: header.clone() })?;
    w.write_all(b"\n")?;
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<(TraceHeader, Vec<StepRecord>)> {
    let text = read_text(path, "trace")?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().with_context(|| format!("trace {} is empty", path.display()))?;
    let header: HeaderLine =
        serde_json::from_str(first).with_context(|| format!("trace {} has no header line", path.display()))?;
    let records = lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("trace {} line {}", path.display(), i + 2)))
        .collect::<Result<Vec<StepRecord>>>()?;
    Ok((header.header, records))
}

fn read_sentences(path: &Path, vocab: &Vocabulary) -> Result<Vec<Vec<TokenId>>> {
    let text = read_text(path, "stegotext")?;
    Ok(data_lines(&text).map(|l| vocab.encode(l)).collect())
}

/// Stegotext → payload bytes.
pub fn cmd_extract(cfg: &RunConfig, model: &Model, stego: &Path) -> Result<Vec<u8>> {
    let method = cfg.method.to_method("method")?;
    let sentences = read_sentences(stego, model.vocab())?;
    let mut codec = method.build(model.support(), cfg.seeds.partition)?;
    let mut lm = model.provider(cfg)?;
    let bits = extract(&mut codec, lm.as_mut(), &sentences, &cfg.generation(false))
        .with_context(|| format!("extracting from {}", stego.display()))?;
    if bits.len() % 8 != 0 {
        bail!("recovered {} bits, not a whole number of bytes", bits.len());
    }
    Ok(bits_to_bytes(&bits))
}

fn vectors(sentences: &[Vec<String>], seed: u64) -> Result<Vec<Vec<f64>>> {
    sentences
        .iter()
        .map(|s| Ok(metrics::sentence_vector(s, SENTENCE_DIM, seed)?))
        .collect()
}

fn words(text: &str) -> Vec<Vec<String>> {
    data_lines(text)
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect()
}

/// Metrics for one trace, with KLD₂ when both text files are given.
pub fn cmd_metrics(
    cfg: &RunConfig,
    trace: &Path,
    texts: Option<(&Path, &Path)>,
    acc: Option<f64>,
) -> Result<MetricReport> {
    let (header, records) = read_trace(trace)?;
    let kld2 = match texts {
        Some((stego, cover)) => {
            let s = vectors(&words(&read_text(stego, "stegotext")?), cfg.seeds.vector)?;
            let c = vectors(&words(&read_text(cover, "covertext")?), cfg.seeds.vector)?;
            Some(metrics::kld2(&c, &s)?)
        }
        None => None,
    };
    report(&header.method, &header.params, &cfg.corpus.name, &records, header.payload_bits, kld2, acc)
}

fn report(
    method: &str,
    params: &str,
    corpus: &str,
    trace: &[StepRecord],
    payload_bits: usize,
    kld2: Option<f64>,
    acc: Option<f64>,
) -> Result<MetricReport> {
    let er = metrics::embedding_rate(trace)?;
    let k1 = metrics::kld1(trace)?;
    Ok(MetricReport {
        method: method.into(),
        params: params.into(),
        corpus: corpus.into(),
        er,
        payload_er: metrics::payload_rate(payload_bits, trace)?,
        kld1_qp: k1.qp,
        kld1_pq: k1.pq,
        kld2,
        eer: acc.map(|a| metrics::eer(a, er)).transpose()?,
        mean_entropy: metrics::mean_entropy(trace)?,
        tokens: trace.iter().filter(|r| !r.forced).count(),
        sentences: trace.iter().map(|r| r.sentence).max().map_or(0, |m| m + 1),
    })
}

/// Generated stegotext and trace for one grid cell.
pub struct CellOutput {
    pub method: Method,
    pub sentences: Vec<Vec<TokenId>>,
    pub trace: Vec<StepRecord>,
    pub payload_bits: usize,
}

/// Embeds seeded random payloads until `stegotexts` sentences exist.
/// Run `r` uses seeds offset by `r`, so every cell sees the same payloads.
pub fn run_cell(cfg: &RunConfig, model: &Model, method: Method) -> Result<CellOutput> {
    let mut lm = model.provider(cfg)?;
    let gen = cfg.generation(true);
    let mut sentences = Vec::new();
    let mut trace = Vec::new();
    let mut payload_bits = 0;
    let mut run = 0u64;
    while sentences.len() < cfg.bench.stegotexts {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seeds.payload.wrapping_add(run));
        let payload: Vec<u8> = (0..cfg.bench.payload_bytes).map(|_| rng.gen()).collect();
        let mut msg = frame(&payload)?;
        let mut codec = method.build(model.support(), cfg.seeds.partition)?;
        let seeds = Seeds {
            sample: cfg.seeds.sample.wrapping_add(run),
            pad: cfg.seeds.pad.wrapping_add(run),
        };
        let EmbedOutput {
            sentences: s,
            trace: t,
            ..
        } = embed(&mut codec, lm.as_mut(), &mut msg, seeds, &gen)
            .with_context(|| format!("{} {} run {run}", method.name(), method.params()))?;
        let offset = sentences.len();
        trace.extend(t.into_iter().map(|mut r| {
            r.sentence += offset;
            r
        }));
        sentences.extend(s);
        payload_bits += payload.len() * 8;
        run += 1;
    }
    Ok(CellOutput {
        method,
        sentences,
        trace,
        payload_bits,
    })
}

/// Covertext sample: up to `n` test-split sentences in seeded order.
pub fn covertext_sample(cfg: &RunConfig, data_dir: &Path, n: usize) -> Result<Vec<Vec<String>>> {
    let text = read_text(&data_dir.join(TEST_FILE), "test split")?;
    let mut cover = words(&text);
    cover.shuffle(&mut ChaCha20Rng::seed_from_u64(cfg.seeds.covertext));
    cover.truncate(n);
    if cover.len() < n {
        log::warn!("test split has only {} sentences; covertext sample is smaller than requested", cover.len());
    }
    Ok(cover)
}

fn cell_file(method: &Method) -> String {
    let params = method.params().replace(['=', ';'], "");
    if params.is_empty() {
        format!("{}.txt", method.name())
    } else {
        format!("{}_{params}.txt", method.name())
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub reports: Vec<MetricReport>,
    pub csv: PathBuf,
}

/// Runs the method grid in parallel and writes `results.csv` plus one
/// stegotext file per cell under `out_dir`.
pub fn cmd_bench(cfg: &RunConfig, model: &Model, data_dir: &Path, out_dir: &Path) -> Result<BenchOutput> {
    use rayon::prelude::*;

    let methods = cfg
        .bench
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| m.to_method(&format!("bench.methods[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let cover = covertext_sample(cfg, data_dir, cfg.bench.stegotexts)?;
    let cover_vecs = vectors(&cover, cfg.seeds.vector)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.bench.threads)
        .build()
        .context("building worker pool")?;
    let cells: Vec<Result<(CellOutput, MetricReport)>> = pool.install(|| {
        methods
            .par_iter()
            .map(|&m| {
                info!("cell {} {}", m.name(), m.params());
                let cell = run_cell(cfg, model, m)?;
                let stego_words: Vec<Vec<String>> = cell
                    .sentences
                    .iter()
                    .take(cfg.bench.stegotexts)
                    .map(|s| s.iter().map(|&t| model.vocab().surface(t).unwrap_or("_UNK").to_owned()).collect())
                    .collect();
                let kld2 = metrics::kld2(&cover_vecs, &vectors(&stego_words, cfg.seeds.vector)?)?;
                let acc = cfg
                    .bench
                    .accuracy
                    .get(&format!("{} {}", m.name(), m.params()))
                    .or_else(|| cfg.bench.accuracy.get(m.name()))
                    .copied();
                let r = report(m.name(), &m.params(), &cfg.corpus.name, &cell.trace, cell.payload_bits, Some(kld2), acc)?;
                Ok((cell, r))
            })
            .collect()
    });
    fs::create_dir_all(out_dir.join("stego")).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut reports = Vec::with_capacity(cells.len());
    for cell in cells {
        let (cell, r) = cell?;
        let header = stegotext_header(cfg, &cell.method, &model.hash());
        write_stegotext(&out_dir.join("stego").join(cell_file(&cell.method)), &header, model.vocab(), &cell.sentences)?;
        reports.push(r);
    }
    let csv = out_dir.join("results.csv");
    let mut w = create(&csv)?;
    writeln!(w, "# {}", cfg.seeds.header())?;
    writeln!(
        w,
        "# stegotexts per cell: {}; covertexts: {}; payload bytes per run: {}; vectorizer: {VECTORIZER_ID} dim {SENTENCE_DIM}",
        cfg.bench.stegotexts,
        cover.len(),
        cfg.bench.payload_bytes
    )?;
    writeln!(w, "# vocab: {}", model.hash())?;
    writeln!(w, "{}", MetricReport::CSV_HEADER)?;
    for r in &reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    Ok(BenchOutput { reports, csv })
}

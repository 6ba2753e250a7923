//! Run configuration: a TOML file plus `--set key.path=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stego_core::baselines::DEFAULT_PRECISION;
use stego_core::corpus::{InputMode, PreprocessConfig, SplitRatio};
use stego_core::stego::{GenerationConfig, Method};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub lm: LmConfig,
    pub method: MethodSpec,
    pub seeds: SeedConfig,
    pub generation: GenerationLimits,
    pub bench: BenchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// `lines` (one document per line) or `free` (running text).
    pub mode: String,
    pub min_len: usize,
    pub max_len: usize,
    pub min_count: u64,
    pub split_train: u32,
    pub split_test: u32,
    /// Label written into the bench CSV.
    pub name: String,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            mode: "lines".into(),
            min_len: 5,
            max_len: 200,
            min_count: 10,
            split_train: 9,
            split_test: 1,
            name: "corpus".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub order: usize,
    pub k: f64,
    /// `ngram` (model file) or `external` (NDJSON process or socket).
    pub provider: String,
    /// Program and arguments for a spawned external provider.
    pub command: Vec<String>,
    /// `host:port` of an external provider; used when `command` is empty.
    pub address: String,
    /// Vocabulary TSV shared with an external provider.
    pub vocab: Option<PathBuf>,
    pub timeout_ms: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            order: 3,
            k: 0.01,
            provider: "ngram".into(),
            command: Vec::new(),
            address: String::new(),
            vocab: None,
            timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSpec {
    /// `adg`, `bins`, `huffman`, `patient_huffman` or `arithmetic`.
    pub name: String,
    pub b: u32,
    pub k: u32,
    pub delta: f64,
    pub h: usize,
    pub precision: u32,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self {
            name: "adg".into(),
            b: 1,
            k: 1,
            delta: 1.0,
            h: 300,
            precision: DEFAULT_PRECISION,
        }
    }
}

impl MethodSpec {
    pub fn to_method(&self, path: &str) -> Result<Method> {
        let m = match self.name.as_str() {
            "adg" => Method::Adg,
            "bins" => Method::Bins { b: self.b },
            "huffman" => Method::Huffman { k: self.k },
            "patient_huffman" => Method::PatientHuffman {
                k: self.k,
                delta: self.delta,
            },
            "arithmetic" => Method::Arithmetic {
                h: self.h,
                precision: self.precision,
            },
            other => bail!(
                "{path}.name: unknown method {other:?} (expected adg, bins, huffman, patient_huffman or arithmetic)"
            ),
        };
        m.validate().map_err(|e| anyhow::anyhow!("{path}: {e}"))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub split: u64,
    pub sample: u64,
    pub pad: u64,
    pub partition: u64,
    pub payload: u64,
    pub covertext: u64,
    pub vector: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            split: 1,
            sample: 2,
            pad: 3,
            partition: 4,
            payload: 5,
            covertext: 6,
            vector: 7,
        }
    }
}

impl SeedConfig {
    pub fn header(&self) -> String {
        format!(
            "seeds: split={} sample={} pad={} partition={} payload={} covertext={} vector={}",
            self.split, self.sample, self.pad, self.partition, self.payload, self.covertext, self.vector
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationLimits {
    pub max_tokens: usize,
    pub max_sentences: usize,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        let g = GenerationConfig::default();
        Self {
            max_tokens: g.max_tokens,
            max_sentences: g.max_sentences,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Stegotext sentences generated per grid cell.
    pub stegotexts: usize,
    /// Random payload size per embedding run.
    pub payload_bytes: usize,
    pub methods: Vec<MethodSpec>,
    /// Steganalysis accuracies keyed by `method` or `method params`, used to
    /// fill the EER column.
    pub accuracy: std::collections::BTreeMap<String, f64>,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let mut methods = vec![spec("adg")];
        for b in 1..=5 {
            methods.push(MethodSpec { b, ..spec("bins") });
        }
        for k in 1..=5 {
            methods.push(MethodSpec { k, ..spec("huffman") });
        }
        methods.push(MethodSpec { k: 5, delta: 0.05, ..spec("patient_huffman") });
        methods.push(MethodSpec { h: 300, ..spec("arithmetic") });
        Self {
            stegotexts: 1000,
            payload_bytes: 16,
            methods,
            accuracy: Default::default(),
            threads: 0,
        }
    }
}

fn spec(name: &str) -> MethodSpec {
    MethodSpec {
        name: name.into(),
        ..Default::default()
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let de = toml::Value::Table(value);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config key {path}: {}", e.into_inner().message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if c.mode != "lines" && c.mode != "free" {
            bail!("corpus.mode: expected \"lines\" or \"free\", got {:?}", c.mode);
        }
        if c.min_len == 0 || c.min_len > c.max_len {
            bail!("corpus.min_len: must be in 1..=corpus.max_len");
        }
        if c.split_train == 0 || c.split_test == 0 {
            bail!("corpus.split_train/split_test: both must be positive");
        }
        if self.lm.order < 2 {
            bail!("lm.order: must be at least 2");
        }
        if !(self.lm.k.is_finite() && self.lm.k > 0.0) {
            bail!("lm.k: must be a positive number");
        }
        match self.lm.provider.as_str() {
            "ngram" => {}
            "external" => {
                if self.lm.command.is_empty() && self.lm.address.is_empty() {
                    bail!("lm.command: an external provider needs lm.command or lm.address");
                }
                if self.lm.vocab.is_none() {
                    bail!("lm.vocab: an external provider needs a vocabulary file");
                }
            }
            other => bail!("lm.provider: expected \"ngram\" or \"external\", got {other:?}"),
        }
        self.method.to_method("method")?;
        for (i, m) in self.bench.methods.iter().enumerate() {
            m.to_method(&format!("bench.methods[{i}]"))?;
        }
        if self.bench.stegotexts < 2 {
            bail!("bench.stegotexts: must be at least 2");
        }
        for (key, &acc) in &self.bench.accuracy {
            if !(0.0..=1.0).contains(&acc) {
                bail!("bench.accuracy.{key}: {acc} outside [0, 1]");
            }
        }
        Ok(())
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            mode: if self.corpus.mode == "free" {
                InputMode::Free
            } else {
                InputMode::Lines
            },
            min_len: self.corpus.min_len,
            max_len: self.corpus.max_len,
        }
    }

    pub fn split_ratio(&self) -> SplitRatio {
        SplitRatio {
            train: self.corpus.split_train,
            test: self.corpus.split_test,
        }
    }

    pub fn generation(&self, measure: bool) -> GenerationConfig {
        GenerationConfig {
            min_len: self.corpus.min_len,
            max_len: self.corpus.max_len,
            max_tokens: self.generation.max_tokens,
            max_sentences: self.generation.max_sentences,
            measure,
        }
    }
}

/// Sets `a.b.c=value` in `table`. The value is parsed as a TOML literal and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override {assignment:?} is not of the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} is malformed");
    }
    let mut cur = table;
    for (i, p) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .with_context(|| format!("override {key}: {} is not a table", parts[..=i].join(".")))?;
    }
    cur.insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let c = RunConfig::load(None, &[]).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = RunConfig::load(
            None,
            &[
                "method.name=bins".into(),
                "method.b=4".into(),
                "seeds.pad=99".into(),
                "corpus.name=reviews".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.method.to_method("method").unwrap(), Method::Bins { b: 4 });
        assert_eq!(c.seeds.pad, 99);
        assert_eq!(c.corpus.name, "reviews");
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::load(None, &["lm.order=x".into()]).unwrap_err().to_string();
        assert!(e.contains("lm.order"), "{e}");
        let e = RunConfig::load(None, &["lm.order=1".into()]).unwrap_err().to_string();
        assert!(e.contains("lm.order"), "{e}");
        let e = RunConfig::load(None, &["method.name=bins".into(), "method.b=40".into()])
            .unwrap_err()
            .to_string();
        assert!(e.contains("method"), "{e}");
        let e = RunConfig::load(None, &["lm.bogus=1".into()]).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let e = RunConfig::load(None, &["method.name=zip".into()]).unwrap_err().to_string();
        assert!(e.contains("method.name"), "{e}");
        assert!(RunConfig::load(None, &["novalue".into()]).is_err());
    }
}

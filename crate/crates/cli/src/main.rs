use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use stego_cli::pipeline::{self, Model};
use stego_cli::RunConfig;
use stego_core::metrics::MetricReport;

/// Generative linguistic steganography over a language model.
#[derive(Parser)]
#[command(name = "stego", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set method.name=bins`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Clean and split a raw corpus, and build the vocabulary.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train an n-gram model on a preprocessed directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hide a payload in generated text.
    Embed {
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        payload: Payload,
        /// Stegotext output, one sentence per line.
        #[arg(long)]
        out: PathBuf,
        /// Per-token NDJSON trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Recover a payload from stegotext.
    Extract {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        stego: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the method grid and write a metric table.
    Bench {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Preprocessed directory; covertext is sampled from its test split.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute metrics from a trace.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, requires = "cover")]
        stego: Option<PathBuf>,
        #[arg(long, requires = "stego")]
        cover: Option<PathBuf>,
        /// Steganalysis accuracy for the EER column.
        #[arg(long)]
        acc: Option<f64>,
        /// CSV output; the report is also logged.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Payload {
    /// Payload file.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Payload as hex.
    #[arg(long)]
    hex: Option<String>,
}

impl Payload {
    fn bytes(&self) -> Result<Vec<u8>> {
        match (&self.input, &self.hex) {
            (Some(p), _) => std::fs::read(p).with_context(|| format!("cannot read payload {}", p.display())),
            (_, Some(h)) => hex::decode(h.trim()).context("--hex is not valid hex"),
            _ => unreachable!("clap enforces one payload source"),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    info!("{}", cfg.seeds.header());
    match cli.command {
        Cmd::Preprocess { input, out_dir } => {
            let s = pipeline::cmd_preprocess(&cfg, &input, &out_dir)?;
            info!(
                "{} sentences: {} train, {} test; vocabulary {}",
                s.sentences, s.train, s.test, s.vocab
            );
        }
        Cmd::Train { data, out } => {
            let lm = pipeline::cmd_train(&cfg, &data, &out)?;
            info!("order {} model over {} tokens written to {}", lm.order(), lm.vocab().len(), out.display());
        }
        Cmd::Embed {
            model,
            payload,
            out,
            trace,
        } => {
            let m = Model::open(&cfg, model.as_deref())?;
            let s = pipeline::cmd_embed(&cfg, &m, &payload.bytes()?, &out, trace.as_deref())?;
            info!("{} sentences, {} tokens, {:.3} bits/token", s.sentences, s.tokens, s.er);
        }
        Cmd::Extract { model, stego, out } => {
            let m = Model::open(&cfg, model.as_deref())?;
            let payload = pipeline::cmd_extract(&cfg, &m, &stego)?;
            std::fs::write(&out, &payload).with_context(|| format!("cannot write {}", out.display()))?;
            info!("recovered {} bytes", payload.len());
        }
        Cmd::Bench { model, data, out_dir } => {
            let m = Model::open(&cfg, model.as_deref())?;
            let b = pipeline::cmd_bench(&cfg, &m, &data, &out_dir)?;
            for r in &b.reports {
                info!("{}", r.csv_row());
            }
            info!("results written to {}", b.csv.display());
        }
        Cmd::Metrics {
            trace,
            stego,
            cover,
            acc,
            out,
        } => {
            let texts = stego.as_deref().zip(cover.as_deref());
            let r = pipeline::cmd_metrics(&cfg, &trace, texts, acc)?;
            info!(
                "er {:.4} bits/token, kld1 {:.6} bits, mean entropy {:.4} bits over {} tokens",
                r.er, r.kld1_qp, r.mean_entropy, r.tokens
            );
            if let Some(path) = out {
                let text = format!("# {}\n{}\n{}\n", cfg.seeds.header(), MetricReport::CSV_HEADER, r.csv_row());
                std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

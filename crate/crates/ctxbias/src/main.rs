use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ctxbias::config::ExperimentConfig;
use ctxbias::inspect::dump_decode;
use ctxbias::io::{read_bundle, read_corpus, write_corpus};
use ctxbias::report::{emit_report, load_summary, render_rtf_csv, render_table};
use ctxbias::{generate_corpus, run_sweep, Corpus, Method};
use ctxbias_core::Normalization;

#[derive(Parser)]
#[command(name = "ctxbias", version, about = "Contextual biasing experiments on synthetic scores")]
struct Cli {
    /// TOML experiment config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    list_lengths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = parse_normalization)]
    normalization: Option<Normalization>,
    /// Number of utterances in the generated corpus.
    #[arg(long)]
    utterances: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (vocab.tsv, list.txt, manifest.tsv).
    Gen {
        #[command(flatten)]
        o: Overrides,
    },
    /// Run the method by list-length sweep and write reports.
    Sweep {
        #[command(flatten)]
        o: Overrides,
        /// Read the corpus written by `gen` instead of generating it.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Decode one utterance and dump every intermediate array as JSON.
    Decode {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 1196)]
        list_len: usize,
        #[arg(long, default_value = "psc-joint-gcp-pp")]
        method: Method,
        /// Noise seed of the run; defaults to the config seed.
        #[arg(long)]
        run_seed: Option<u64>,
        /// Precomputed scores (JSON) used instead of the simulator.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Re-render the table and RTF CSV of a finished sweep.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print the effective config as TOML.
    Config {
        #[command(flatten)]
        o: Overrides,
    },
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    match s {
        "softmax" => Ok(Normalization::Softmax),
        "sum" => Ok(Normalization::Sum),
        _ => Err(format!("expected softmax or sum, got {s:?}")),
    }
}

fn load_config(path: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let mut c = ExperimentConfig::default();
            c.apply_env(|k| std::env::var(k).ok())?;
            c
        }
    };
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.runs {
        cfg.runs = v;
    }
    if let Some(v) = &o.list_lengths {
        cfg.list_lengths = v.clone();
    }
    if let Some(v) = &o.methods {
        cfg.methods = v.clone();
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = o.workers {
        cfg.workers = v;
    }
    if let Some(v) = o.normalization {
        cfg.normalization = v;
    }
    if let Some(v) = o.utterances {
        cfg.corpus.utterances = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn corpus_for(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<Corpus> {
    match dir {
        Some(d) => {
            let (corpus, warnings) = read_corpus(d)?;
            for w in warnings {
                eprintln!("warning: {w:?}");
            }
            Ok(corpus)
        }
        None => generate_corpus(&cfg.corpus, cfg.seed),
    }
}

/// Writes to stdout; a reader that hung up early (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Gen { o } => {
            let cfg = load_config(config, &o)?;
            let corpus = generate_corpus(&cfg.corpus, cfg.seed)?;
            write_corpus(&cfg.output_dir, &corpus)?;
            emit(&format!(
                "wrote {} utterances and {} phrases to {}\n",
                corpus.utterances.len(),
                corpus.master.real_phrases().len(),
                cfg.output_dir.display()
            ))?;
        }
        Command::Sweep { o, corpus } => {
            let cfg = load_config(config, &o)?;
            let corpus = corpus_for(&cfg, corpus.as_deref())?;
            let reports = run_sweep(&cfg, &corpus)?;
            emit_report(&cfg.output_dir, &reports)?;
            std::fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml()?)?;
            emit(&render_table(&reports))?;
        }
        Command::Decode {
            o,
            id,
            list_len,
            method,
            run_seed,
            bundle,
            corpus,
        } => {
            let cfg = load_config(config, &o)?;
            let corpus = corpus_for(&cfg, corpus.as_deref())?;
            let bundle = bundle.as_deref().map(read_bundle).transpose()?;
            let dump = dump_decode(&cfg, &corpus, &id, list_len, method, run_seed.unwrap_or(cfg.seed), bundle)?;
            emit(&(serde_json::to_string_pretty(&dump)? + "\n"))?;
        }
        Command::Report { dir } => {
            let reports = load_summary(&dir)?;
            emit(&format!("{}\n{}", render_table(&reports), render_rtf_csv(&reports)))?;
        }
        Command::Config { o } => {
            let cfg = load_config(config, &o)?;
            emit(&cfg.to_toml().context("rendering config")?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let record = json!({ "error": "usage", "message": e.to_string().trim_end() });
            eprintln!("{record}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            let record = json!({ "error": "failed", "message": e.to_string(), "causes": chain });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

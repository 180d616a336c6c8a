//! Experiment harness around `ctxbias-core`: synthetic corpora, list-length
//! sweeps over the method matrix, and report files.

pub mod config;
pub mod inspect;
pub mod io;
pub mod report;
pub mod sweep;
pub mod synth;

pub use config::ExperimentConfig;
pub use sweep::{run_cell, run_sweep, CellReport, DecodeSettings, Method};
pub use synth::{generate_corpus, Corpus, CorpusSpec};

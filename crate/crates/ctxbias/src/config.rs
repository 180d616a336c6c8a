use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use ctxbias_core::losses::FocalParams;
use ctxbias_core::{NoiseSpec, Normalization, PurifyParams, SmoothingParams};

use crate::sweep::Method;
use crate::synth::CorpusSpec;

pub const SEED_ENV: &str = "CTXBIAS_SEED";
pub const OUT_DIR_ENV: &str = "CTXBIAS_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Seeds the corpus; run seeds are `seed, seed + 1, ...`.
    pub seed: u64,
    pub runs: usize,
    pub list_lengths: Vec<usize>,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub normalization: Normalization,
    pub corpus: CorpusSpec,
    /// The seed field is replaced by the run seed in every cell.
    pub noise: NoiseSpec,
    pub smoothing: SmoothingParams,
    /// The shuffle seed is derived from the run seed and utterance.
    pub purify: PurifyParams,
    pub focal: FocalParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            runs: 3,
            list_lengths: vec![51, 201, 1196],
            methods: Method::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
            workers: 0,
            normalization: Normalization::Sum,
            corpus: CorpusSpec::default(),
            noise: calibrated_noise(),
            smoothing: SmoothingParams::default(),
            purify: PurifyParams::default(),
            focal: FocalParams::default(),
        }
    }
}

/// The noise setting used for robustness comparisons.
pub fn calibrated_noise() -> NoiseSpec {
    NoiseSpec {
        seed: 0,
        label_flip_rate: 0.05,
        score_jitter_sigma: 0.1,
        confusion_rate: 0.3,
        distractor_boost: 0.3,
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.runs > 0, "runs must be positive");
        ensure!(!self.list_lengths.is_empty(), "list_lengths must not be empty");
        ensure!(!self.methods.is_empty(), "methods must not be empty");
        let max_len = self.corpus.master_phrases + 1;
        for &m in &self.list_lengths {
            ensure!(
                m > self.corpus.head && m <= max_len,
                "list length {m} must exceed corpus.head ({}) and be at most {max_len}",
                self.corpus.head
            );
        }
        self.corpus.validate()?;
        self.noise.validate()?;
        self.smoothing.validate()?;
        self.purify.validate()?;
        self.focal.validate()?;
        Ok(())
    }

    pub fn run_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.runs as u64).map(move |i| self.seed.wrapping_add(i))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing config")
    }

    /// Reads a config file, applies environment overrides, validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(s) = get(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer"))?;
        }
        if let Some(d) = get(OUT_DIR_ENV) {
            self.output_dir = PathBuf::from(d);
        }
        Ok(())
    }
}

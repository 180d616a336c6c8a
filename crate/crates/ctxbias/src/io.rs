//! Text file formats: vocabulary, biasing list, utterance manifest, and
//! JSON correlation bundles.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use ctxbias_core::corpus::{manifest_line, parse_manifest, Warning};
use ctxbias_core::{BiasingList, CorrelationBundle, Utterance, Vocabulary};

use crate::synth::Corpus;

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const LIST_FILE: &str = "list.txt";
pub const MANIFEST_FILE: &str = "manifest.tsv";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// One `char<TAB>partner` line per ordinary token, in index order.
pub fn vocab_to_text(v: &Vocabulary) -> String {
    let chars: Vec<char> = v.chars().collect();
    let mut out = String::new();
    for (i, c) in chars.iter().enumerate() {
        let partner = v.confusable(i + 2);
        let p = if partner >= 2 { chars[partner - 2] } else { *c };
        out.push(*c);
        out.push('\t');
        out.push(p);
        out.push('\n');
    }
    out
}

pub fn parse_vocab(text: &str) -> Result<Vocabulary> {
    let mut chars = Vec::new();
    let mut partners = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let mut one = |what: &str| -> Result<char> {
            let f = fields.next().unwrap_or_default();
            let mut it = f.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => bail!("line {}: {what} must be a single character, got {f:?}", i + 1),
            }
        };
        let c = one("token")?;
        let p = one("partner").unwrap_or(c);
        chars.push(c);
        partners.push(p);
    }
    let mut v = Vocabulary::new(chars.iter().copied())?;
    let mut map: Vec<usize> = (0..v.size()).collect();
    for (i, p) in partners.iter().enumerate() {
        map[i + 2] = v
            .lookup(*p)
            .with_context(|| format!("partner {p:?} of {:?} is not in the vocabulary", chars[i]))?;
    }
    v.set_confusables(map)?;
    Ok(v)
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    parse_vocab(&read(path)?).with_context(|| format!("in {}", path.display()))
}

/// Reads a biasing list (one phrase per line).
pub fn load_biasing_list(path: &Path, vocab: &Vocabulary) -> Result<(BiasingList, Vec<Warning>)> {
    BiasingList::parse(&read(path)?, vocab).with_context(|| format!("in {}", path.display()))
}

/// Reads a manifest; span phrase indices refer to `list`.
pub fn load_utterances(path: &Path, vocab: &Vocabulary, list: &BiasingList) -> Result<(Vec<Utterance>, Vec<Warning>)> {
    parse_manifest(&read(path)?, vocab, list).with_context(|| format!("in {}", path.display()))
}

pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(VOCAB_FILE), vocab_to_text(&corpus.vocab))?;
    fs::write(dir.join(LIST_FILE), corpus.master.to_text(&corpus.vocab))?;
    let mut manifest = String::new();
    for u in &corpus.utterances {
        manifest.push_str(&manifest_line(u, &corpus.vocab));
        manifest.push('\n');
    }
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<(Corpus, Vec<Warning>)> {
    let vocab = load_vocab(&dir.join(VOCAB_FILE))?;
    let (master, mut warnings) = load_biasing_list(&dir.join(LIST_FILE), &vocab)?;
    let (utterances, w) = load_utterances(&dir.join(MANIFEST_FILE), &vocab, &master)?;
    warnings.extend(w);
    Ok((
        Corpus {
            vocab,
            master,
            utterances,
        },
        warnings,
    ))
}

/// Loads a precomputed bundle and checks shapes and value ranges.
pub fn read_bundle(path: &Path) -> Result<CorrelationBundle> {
    let b: CorrelationBundle =
        serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    b.validate().with_context(|| format!("in {}", path.display()))?;
    Ok(b)
}

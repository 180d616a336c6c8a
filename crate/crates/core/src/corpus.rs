//! Vocabularies, biasing lists, utterances and the phrase/token containment mask.
//!
//! Tokens are single Unicode characters. Two indices are reserved in every
//! vocabulary: [`UNK`] for blank/unknown input and [`NO_BIAS`] for the
//! "absence of context" symbol. Every [`BiasingList`] stores the no-bias
//! phrase (the single token [`NO_BIAS`]) at index 0.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const UNK: TokenId = 0;
pub const NO_BIAS: TokenId = 1;
pub const UNK_SYMBOL: &str = "<unk>";
pub const NO_BIAS_SYMBOL: &str = "<no-bias>";

pub const MIN_PHRASE_LEN: usize = 2;
pub const MAX_PHRASE_LEN: usize = 19;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    by_char: BTreeMap<char, TokenId>,
    confusable: Vec<TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from distinct characters; the reserved symbols
    /// occupy indices 0 and 1. Confusable partners start out as identity.
    pub fn new<I: IntoIterator<Item = char>>(chars: I) -> Result<Self> {
        let mut tokens = vec![UNK_SYMBOL.to_owned(), NO_BIAS_SYMBOL.to_owned()];
        let mut by_char = BTreeMap::new();
        for c in chars {
            let id = tokens.len();
            if by_char.insert(c, id).is_some() {
                return Err(Error::DuplicateToken(c.to_string()));
            }
            tokens.push(c.to_string());
        }
        let confusable = (0..tokens.len()).collect();
        Ok(Self {
            tokens,
            by_char,
            confusable,
        })
    }

    /// Pairs every ordinary token with a seeded "homophone" partner.
    pub fn with_confusables(mut self, seed: u64) -> Self {
        let all: Vec<TokenId> = (2..self.size()).collect();
        self.assign_confusables(seed, &[all]);
        self
    }

    /// Pairs tokens within each class after a seeded shuffle. In a class of
    /// odd size the leftover token borrows the first token of the class as
    /// its partner (one-directional).
    pub fn assign_confusables(&mut self, seed: u64, classes: &[Vec<TokenId>]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for class in classes {
            let mut members = class.clone();
            members.shuffle(&mut rng);
            for pair in members.chunks(2) {
                match *pair {
                    [a, b] => {
                        self.confusable[a] = b;
                        self.confusable[b] = a;
                    }
                    [a] if members.len() > 1 => self.confusable[a] = members[0],
                    _ => {}
                }
            }
        }
    }

    pub fn set_confusables(&mut self, partners: Vec<TokenId>) -> Result<()> {
        if partners.len() != self.size() {
            return Err(Error::Shape {
                context: "Vocabulary::set_confusables",
                expected: self.size(),
                actual: partners.len(),
            });
        }
        if let Some(&bad) = partners.iter().find(|&&p| p >= self.size()) {
            return Err(Error::TokenOutOfRange {
                index: bad,
                size: self.size(),
            });
        }
        self.confusable = partners;
        Ok(())
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn lookup(&self, c: char) -> Option<TokenId> {
        self.by_char.get(&c).copied()
    }

    #[inline]
    pub fn confusable(&self, id: TokenId) -> TokenId {
        self.confusable[id]
    }

    /// Ordinary (non-reserved) token characters in index order.
    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.tokens[2..].iter().filter_map(|t| t.chars().next())
    }

    /// Maps each character to its index; unknown characters become [`UNK`]
    /// and are returned alongside.
    pub fn tokenize(&self, text: &str) -> (Vec<TokenId>, Vec<char>) {
        let mut unknown = Vec::new();
        let ids = text
            .chars()
            .map(|c| {
                self.lookup(c).unwrap_or_else(|| {
                    unknown.push(c);
                    UNK
                })
            })
            .collect();
        (ids, unknown)
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.tokens[i].as_str()).collect()
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if id < self.size() {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                index: id,
                size: self.size(),
            })
        }
    }
}

/// Non-fatal problem found while parsing a text input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasingPhrase {
    pub tokens: Vec<TokenId>,
}

impl BiasingPhrase {
    pub fn no_bias() -> Self {
        Self {
            tokens: vec![NO_BIAS],
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_no_bias(&self) -> bool {
        self.tokens == [NO_BIAS]
    }

    pub fn shares_token_with(&self, other: &BiasingPhrase) -> bool {
        self.tokens.iter().any(|t| other.tokens.contains(t))
    }
}

/// Ordered, duplicate-free list of phrases with the no-bias entry at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasingList {
    phrases: Vec<BiasingPhrase>,
    index: BTreeMap<Vec<TokenId>, usize>,
}

impl BiasingList {
    pub const NO_BIAS_INDEX: usize = 0;

    /// Builds a list from real phrases (the no-bias entry is prepended).
    pub fn new(real: Vec<BiasingPhrase>, vocab: &Vocabulary) -> Result<Self> {
        let mut phrases = Vec::with_capacity(real.len() + 1);
        phrases.push(BiasingPhrase::no_bias());
        let mut index = BTreeMap::new();
        index.insert(vec![NO_BIAS], 0);
        for p in real {
            for &t in &p.tokens {
                vocab.check(t)?;
            }
            if !(MIN_PHRASE_LEN..=MAX_PHRASE_LEN).contains(&p.len()) {
                return Err(Error::PhraseLength {
                    phrase: vocab.detokenize(&p.tokens),
                    len: p.len(),
                });
            }
            if index.insert(p.tokens.clone(), phrases.len()).is_some() {
                return Err(Error::DuplicatePhrase(vocab.detokenize(&p.tokens)));
            }
            phrases.push(p);
        }
        Ok(Self { phrases, index })
    }

    /// Parses one phrase per line. Blank lines are skipped; duplicate lines
    /// are rejected; characters outside the vocabulary become [`UNK`] and
    /// produce a warning.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<(Self, Vec<Warning>)> {
        let mut warnings = Vec::new();
        let mut real = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (tokens, unknown) = vocab.tokenize(line);
            if !unknown.is_empty() {
                warnings.push(Warning {
                    line: i + 1,
                    message: format!("unknown characters {unknown:?} mapped to {UNK_SYMBOL}"),
                });
            }
            real.push(BiasingPhrase { tokens });
        }
        if real.is_empty() {
            return Err(Error::EmptyBiasingList);
        }
        Ok((Self::new(real, vocab)?, warnings))
    }

    /// One real phrase per line, inverse of [`BiasingList::parse`].
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for p in self.real_phrases() {
            out.push_str(&vocab.detokenize(&p.tokens));
            out.push('\n');
        }
        out
    }

    /// Total length M, no-bias included.
    #[inline]
    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.len() <= 1
    }

    pub fn phrases(&self) -> &[BiasingPhrase] {
        &self.phrases
    }

    pub fn phrase(&self, m: usize) -> &BiasingPhrase {
        &self.phrases[m]
    }

    pub fn real_phrases(&self) -> &[BiasingPhrase] {
        &self.phrases[1..]
    }

    pub fn find(&self, tokens: &[TokenId]) -> Option<usize> {
        self.index.get(tokens).copied()
    }

    /// The list restricted to the given indices (in the order given);
    /// index 0 is always kept and never duplicated.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut phrases = vec![BiasingPhrase::no_bias()];
        let mut index = BTreeMap::new();
        index.insert(vec![NO_BIAS], 0);
        for &m in indices {
            if m == Self::NO_BIAS_INDEX {
                continue;
            }
            let p = &self.phrases[m];
            if index.insert(p.tokens.clone(), phrases.len()).is_none() {
                phrases.push(p.clone());
            }
        }
        Self { phrases, index }
    }

    /// The first `total_len` entries (no-bias included).
    pub fn prefix(&self, total_len: usize) -> Self {
        let n = total_len.clamp(1, self.len());
        let idx: Vec<usize> = (1..n).collect();
        self.subset(&idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GoldSpan {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub phrase: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<TokenId>,
    pub duration_seconds: f64,
    pub spans: Vec<GoldSpan>,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks span bounds, ordering/overlap, and that every span's tokens
    /// equal the referenced phrase exactly.
    pub fn validate(&self, list: &BiasingList) -> Result<()> {
        let fail = |reason: String| Error::InvalidUtterance {
            id: self.id.clone(),
            reason,
        };
        if !(self.duration_seconds >= 0.0) {
            return Err(fail("negative duration".into()));
        }
        let mut spans = self.spans.clone();
        spans.sort();
        let mut prev_end = 0;
        for (i, s) in spans.iter().enumerate() {
            if s.start >= s.end || s.end > self.len() {
                return Err(fail(format!(
                    "span {}:{} outside [0, {})",
                    s.start,
                    s.end,
                    self.len()
                )));
            }
            if i > 0 && s.start < prev_end {
                return Err(fail(format!("span {}:{} overlaps", s.start, s.end)));
            }
            prev_end = s.end;
            if s.phrase == BiasingList::NO_BIAS_INDEX || s.phrase >= list.len() {
                return Err(fail(format!("span phrase index {} not in list", s.phrase)));
            }
            if list.phrase(s.phrase).tokens[..] != self.tokens[s.start..s.end] {
                return Err(fail(format!(
                    "span {}:{} does not match phrase {}",
                    s.start, s.end, s.phrase
                )));
            }
        }
        Ok(())
    }

    /// Token content of each gold span.
    pub fn gold_phrases(&self) -> impl Iterator<Item = &[TokenId]> {
        self.spans.iter().map(|s| &self.tokens[s.start..s.end])
    }
}

fn parse_spans(field: &str, line: usize) -> Result<Vec<GoldSpan>> {
    let mut spans = Vec::new();
    for part in field.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let nums: Vec<&str> = part.split(':').collect();
        let parsed: Option<Vec<usize>> = if nums.len() == 3 {
            nums.iter().map(|n| n.trim().parse().ok()).collect()
        } else {
            None
        };
        match parsed.as_deref() {
            Some(&[start, end, phrase]) => spans.push(GoldSpan { start, end, phrase }),
            _ => {
                return Err(Error::Malformed {
                    line,
                    reason: format!("bad span {part:?}, expected start:end:phrase_index"),
                })
            }
        }
    }
    Ok(spans)
}

/// Parses a tab-separated manifest: `id`, `text`, `duration_seconds`, and an
/// optional `start:end:phrase_index;...` span field. Every utterance is
/// validated against `list`.
pub fn parse_manifest(
    text: &str,
    vocab: &Vocabulary,
    list: &BiasingList,
) -> Result<(Vec<Utterance>, Vec<Warning>)> {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::Malformed {
                line,
                reason: format!("expected 3 or 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let duration_seconds: f64 = fields[2].trim().parse().map_err(|_| Error::Malformed {
            line,
            reason: format!("bad duration {:?}", fields[2]),
        })?;
        let (tokens, unknown) = vocab.tokenize(fields[1]);
        if !unknown.is_empty() {
            warnings.push(Warning {
                line,
                message: format!("unknown characters {unknown:?} mapped to {UNK_SYMBOL}"),
            });
        }
        let spans = match fields.get(3) {
            Some(f) => parse_spans(f, line)?,
            None => Vec::new(),
        };
        let utt = Utterance {
            id: fields[0].to_owned(),
            tokens,
            duration_seconds,
            spans,
        };
        utt.validate(list)?;
        out.push(utt);
    }
    Ok((out, warnings))
}

pub fn manifest_line(utt: &Utterance, vocab: &Vocabulary) -> String {
    let spans: Vec<String> = utt
        .spans
        .iter()
        .map(|s| format!("{}:{}:{}", s.start, s.end, s.phrase))
        .collect();
    format!(
        "{}\t{}\t{}\t{}",
        utt.id,
        vocab.detokenize(&utt.tokens),
        utt.duration_seconds,
        spans.join(";")
    )
}

/// M×V binary containment matrix: entry (m, v) is set iff token v occurs in
/// phrase m.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl PhiMask {
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut bits = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape {
                    context: "PhiMask::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            bits.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            bits,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, m: usize, v: usize) -> bool {
        self.bits[m * self.cols + v]
    }

    pub fn row(&self, m: usize) -> &[bool] {
        &self.bits[m * self.cols..(m + 1) * self.cols]
    }

    /// Columns with at least one set entry.
    pub fn active_columns(&self) -> Vec<bool> {
        let mut active = vec![false; self.cols];
        for m in 0..self.rows {
            for (a, &b) in active.iter_mut().zip(self.row(m)) {
                *a |= b;
            }
        }
        active
    }

    pub fn select_rows(&self, rows: &[usize]) -> PhiMask {
        let mut bits = Vec::with_capacity(rows.len() * self.cols);
        for &m in rows {
            bits.extend_from_slice(self.row(m));
        }
        PhiMask {
            rows: rows.len(),
            cols: self.cols,
            bits,
        }
    }
}

pub fn build_phi(list: &BiasingList, vocab: &Vocabulary) -> Result<PhiMask> {
    let mut phi = PhiMask::zeros(list.len(), vocab.size());
    for (m, p) in list.phrases().iter().enumerate() {
        for &t in &p.tokens {
            vocab.check(t)?;
            phi.bits[m * phi.cols + t] = true;
        }
    }
    Ok(phi)
}

//! Seeded synthetic corpora: a two-class character vocabulary, a master
//! biasing list with token-sharing and homophone distractors, and
//! utterances with embedded gold phrases.

use anyhow::{bail, ensure, Result};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ctxbias_core::corpus::{MAX_PHRASE_LEN, MIN_PHRASE_LEN};
use ctxbias_core::{BiasingList, BiasingPhrase, GoldSpan, TokenId, Utterance, Vocabulary};

/// Seconds of synthetic audio per token.
pub const SECONDS_PER_TOKEN: f64 = 0.25;

const FIRST_CHAR: u32 = 0x4E00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub utterances: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Characters that biasing phrases are built from.
    pub phrase_alphabet: usize,
    /// Characters used for the surrounding text.
    pub filler_alphabet: usize,
    /// Probability that an utterance contains a gold phrase.
    pub span_rate: f64,
    /// Probability of a second gold phrase, given a first one.
    pub second_span_rate: f64,
    /// Real phrases in the master list (the longest list is this plus one).
    pub master_phrases: usize,
    /// Phrases that utterances draw their gold spans from.
    pub gold_pool: usize,
    /// Gold phrases and distractors sit within this many leading entries of
    /// the master list, so every swept list contains all of them.
    pub head: usize,
    pub min_phrase_len: usize,
    pub max_phrase_len: usize,
    /// Share of distractors that are homophone variants of a gold phrase.
    pub homophone_distractors: f64,
    /// Share of distractors that share a leading token with a gold phrase.
    pub sharing_distractors: f64,
    /// Size of the small set of frequent leading tokens ("surnames").
    pub surnames: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            utterances: 200,
            min_len: 10,
            max_len: 24,
            phrase_alphabet: 240,
            filler_alphabet: 120,
            span_rate: 0.9,
            second_span_rate: 0.1,
            master_phrases: 1195,
            gold_pool: 40,
            head: 50,
            min_phrase_len: 2,
            max_phrase_len: 5,
            homophone_distractors: 0.03,
            sharing_distractors: 0.4,
            surnames: 12,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.utterances > 0, "corpus.utterances must be positive");
        ensure!(
            self.min_len >= 1 && self.min_len <= self.max_len,
            "corpus.min_len must lie in [1, max_len]"
        );
        ensure!(
            MIN_PHRASE_LEN <= self.min_phrase_len
                && self.min_phrase_len <= self.max_phrase_len
                && self.max_phrase_len <= MAX_PHRASE_LEN,
            "phrase lengths must satisfy {MIN_PHRASE_LEN} <= min_phrase_len <= max_phrase_len <= {MAX_PHRASE_LEN}"
        );
        if self.max_phrase_len + 2 > self.min_len {
            bail!(
                "phrase of length {} does not fit an utterance of length {} with context",
                self.max_phrase_len,
                self.min_len
            );
        }
        ensure!(self.phrase_alphabet >= 4, "corpus.phrase_alphabet must be at least 4");
        ensure!(self.filler_alphabet >= 2, "corpus.filler_alphabet must be at least 2");
        ensure!((0.0..=1.0).contains(&self.span_rate), "corpus.span_rate must lie in [0, 1]");
        ensure!(
            (0.0..=1.0).contains(&self.second_span_rate),
            "corpus.second_span_rate must lie in [0, 1]"
        );
        ensure!(
            self.gold_pool >= 1 && self.gold_pool <= self.head && self.head <= self.master_phrases,
            "need 1 <= gold_pool <= head <= master_phrases"
        );
        ensure!(
            self.homophone_distractors >= 0.0
                && self.sharing_distractors >= 0.0
                && self.homophone_distractors + self.sharing_distractors <= 1.0,
            "distractor shares must be non-negative and sum to at most 1"
        );
        ensure!(
            self.surnames >= 1 && self.surnames <= self.phrase_alphabet,
            "corpus.surnames must lie in [1, phrase_alphabet]"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    /// Longest list; every swept list is a prefix of it.
    pub master: BiasingList,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    /// The first `m` entries of the master list (no-bias included).
    pub fn list(&self, m: usize) -> BiasingList {
        self.master.prefix(m)
    }
}

fn char_at(i: usize) -> char {
    char::from_u32(FIRST_CHAR + i as u32).expect("CJK block is contiguous")
}

/// Vocabulary with `phrase` phrase characters followed by `filler` filler
/// characters; homophone partners are paired within each class.
pub fn make_vocabulary(phrase: usize, filler: usize, seed: u64) -> Result<Vocabulary> {
    let mut v = Vocabulary::new((0..phrase + filler).map(char_at))?;
    let phrase_ids: Vec<TokenId> = (2..2 + phrase).collect();
    let filler_ids: Vec<TokenId> = (2 + phrase..2 + phrase + filler).collect();
    v.assign_confusables(seed, &[phrase_ids, filler_ids]);
    Ok(v)
}

struct PhraseMaker<'a> {
    spec: &'a CorpusSpec,
    vocab: &'a Vocabulary,
    seen: std::collections::BTreeSet<Vec<TokenId>>,
}

impl PhraseMaker<'_> {
    fn random_token(&self, rng: &mut ChaCha8Rng) -> TokenId {
        2 + rng.random_range(0..self.spec.phrase_alphabet)
    }

    fn fresh(&mut self, tokens: Vec<TokenId>) -> Option<BiasingPhrase> {
        self.seen
            .insert(tokens.clone())
            .then_some(BiasingPhrase { tokens })
    }

    fn random(&mut self, rng: &mut ChaCha8Rng) -> BiasingPhrase {
        loop {
            let len = rng.random_range(self.spec.min_phrase_len..=self.spec.max_phrase_len);
            let mut tokens: Vec<TokenId> = (0..len).map(|_| self.random_token(rng)).collect();
            if rng.random::<f64>() < 0.3 {
                tokens[0] = 2 + rng.random_range(0..self.spec.surnames);
            }
            if let Some(p) = self.fresh(tokens) {
                return p;
            }
        }
    }

    /// One token of `base` swapped for its homophone partner.
    fn homophone(&mut self, base: &BiasingPhrase, rng: &mut ChaCha8Rng) -> Option<BiasingPhrase> {
        for _ in 0..8 {
            let mut tokens = base.tokens.clone();
            let i = rng.random_range(0..tokens.len());
            tokens[i] = self.vocab.confusable(tokens[i]);
            if let Some(p) = self.fresh(tokens) {
                return Some(p);
            }
        }
        None
    }

    /// Keeps the first token of `base`, draws the rest.
    fn sharing(&mut self, base: &BiasingPhrase, rng: &mut ChaCha8Rng) -> Option<BiasingPhrase> {
        for _ in 0..8 {
            let len = rng.random_range(self.spec.min_phrase_len..=self.spec.max_phrase_len);
            let mut tokens = vec![base.tokens[0]];
            tokens.extend((1..len).map(|_| self.random_token(rng)));
            if let Some(p) = self.fresh(tokens) {
                return Some(p);
            }
        }
        None
    }
}

fn place_spans(
    rng: &mut ChaCha8Rng,
    len: usize,
    phrases: &[&BiasingPhrase],
) -> Option<Vec<(usize, usize)>> {
    // Fillers around and between phrases: at least one between two phrases.
    let used: usize = phrases.iter().map(|p| p.len()).sum();
    let gaps_min = phrases.len().saturating_sub(1);
    if used + gaps_min > len {
        return None;
    }
    let slack = len - used - gaps_min;
    let mut cuts: Vec<usize> = (0..phrases.len()).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(phrases.len());
    let mut pos = 0;
    let mut prev_cut = 0;
    for (i, p) in phrases.iter().enumerate() {
        pos += cuts[i] - prev_cut + usize::from(i > 0);
        prev_cut = cuts[i];
        out.push((pos, pos + p.len()));
        pos += p.len();
    }
    Some(out)
}

/// Builds a corpus. The master list starts with the gold pool and the
/// distractors derived from it (shuffled together within the head block),
/// followed by unrelated phrases.
pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = make_vocabulary(spec.phrase_alphabet, spec.filler_alphabet, rng.random())?;
    let mut maker = PhraseMaker {
        spec,
        vocab: &vocab,
        seen: Default::default(),
    };
    let gold: Vec<BiasingPhrase> = (0..spec.gold_pool).map(|_| maker.random(&mut rng)).collect();

    let distractors = spec.master_phrases - spec.gold_pool;
    let n_homophone = (spec.homophone_distractors * distractors as f64).round() as usize;
    let n_sharing = (spec.sharing_distractors * distractors as f64).round() as usize;
    let mut related = Vec::new();
    for i in 0..n_homophone + n_sharing {
        let base = gold.choose(&mut rng).expect("gold pool is non-empty");
        let made = if i < n_homophone {
            maker.homophone(base, &mut rng)
        } else {
            maker.sharing(base, &mut rng)
        };
        related.push(made.unwrap_or_else(|| maker.random(&mut rng)));
    }
    related.shuffle(&mut rng);

    let in_head = (spec.head - spec.gold_pool).min(related.len());
    let mut head: Vec<BiasingPhrase> = gold.clone();
    head.extend(related.drain(..in_head));
    head.shuffle(&mut rng);
    let mut tail = related;
    while head.len() + tail.len() < spec.master_phrases {
        tail.push(maker.random(&mut rng));
    }
    tail.shuffle(&mut rng);
    head.extend(tail);
    let master = BiasingList::new(head, &vocab)?;
    let gold_idx: Vec<usize> = gold
        .iter()
        .map(|p| master.find(&p.tokens).expect("gold phrase is in the master list"))
        .collect();

    let filler_lo = 2 + spec.phrase_alphabet;
    let mut utterances = Vec::with_capacity(spec.utterances);
    for n in 0..spec.utterances {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut tokens: Vec<TokenId> = (0..len)
            .map(|_| filler_lo + rng.random_range(0..spec.filler_alphabet))
            .collect();
        let mut chosen = Vec::new();
        if rng.random::<f64>() < spec.span_rate {
            chosen.push(*gold_idx.choose(&mut rng).expect("non-empty"));
            if rng.random::<f64>() < spec.second_span_rate {
                chosen.push(*gold_idx.choose(&mut rng).expect("non-empty"));
            }
        }
        let phrases: Vec<&BiasingPhrase> = chosen.iter().map(|&m| master.phrase(m)).collect();
        let mut spans = Vec::new();
        if let Some(places) = place_spans(&mut rng, len, &phrases) {
            for (&(start, end), &m) in places.iter().zip(&chosen) {
                tokens[start..end].copy_from_slice(&master.phrase(m).tokens);
                spans.push(GoldSpan { start, end, phrase: m });
            }
        }
        let utt = Utterance {
            id: format!("utt-{n:05}"),
            duration_seconds: len as f64 * SECONDS_PER_TOKEN,
            tokens,
            spans,
        };
        utt.validate(&master)?;
        utterances.push(utt);
    }
    Ok(Corpus {
        vocab,
        master,
        utterances,
    })
}

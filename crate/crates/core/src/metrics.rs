//! Character error rate, exact-match phrase precision/recall/F1, retention
//! of gold phrases through purification, and real-time factor.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{BiasingList, TokenId, Utterance};
use crate::error::{Error, Result};
use crate::jointdecode::PhraseMatcher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.ref_len as f64
    }
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Minimum-cost alignment of `hyp` against `reference`, split into
/// substitutions, insertions and deletions. Among optimal alignments the
/// backtrace prefers match/substitution, then deletion, then insertion.
pub fn align(hyp: &[TokenId], reference: &[TokenId]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut c = EditCounts {
        ref_len: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(reference[i - 1] != hyp[j - 1]);
            if here == d[(i - 1) * w + j - 1] + diff {
                c.substitutions += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    c
}

/// `(S + I + D) / |ref|` together with the counts.
pub fn cer(hyp: &[TokenId], reference: &[TokenId]) -> Result<(f64, EditCounts)> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let c = align(hyp, reference);
    Ok((c.rate(), c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhraseCounts {
    pub tp: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
}

impl PhraseCounts {
    pub fn add(&mut self, other: PhraseCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Precision, recall and F1; a 0/0 ratio counts as 1.
    pub fn prf(&self) -> (f64, f64, f64) {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f1)
    }
}

/// Exact-match phrase counts of one hypothesis. Reference occurrences come
/// from the gold spans, hypothesis occurrences from the non-overlapping
/// longest-match scan; each phrase contributes `min(hyp, ref)` true positives.
pub fn phrase_counts(hyp: &[TokenId], utt: &Utterance, list: &BiasingList, matcher: &PhraseMatcher) -> PhraseCounts {
    let mut gold: BTreeMap<usize, usize> = BTreeMap::new();
    let mut unmatched_gold = 0;
    for s in &utt.spans {
        match list.find(&utt.tokens[s.start..s.end]) {
            Some(m) => *gold.entry(m).or_default() += 1,
            None => unmatched_gold += 1,
        }
    }
    let mut found: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, _, m) in matcher.find_all(hyp) {
        *found.entry(m).or_default() += 1;
    }
    let mut c = PhraseCounts {
        fn_: unmatched_gold,
        ..PhraseCounts::default()
    };
    for (&m, &g) in &gold {
        let h = found.get(&m).copied().unwrap_or(0);
        c.tp += g.min(h);
        c.fn_ += g.saturating_sub(h);
    }
    for (&m, &h) in &found {
        c.fp += h.saturating_sub(gold.get(&m).copied().unwrap_or(0));
    }
    c
}

/// Corpus-level exact-match precision, recall and F1.
pub fn phrase_prf(hyps: &[Vec<TokenId>], utts: &[Utterance], list: &BiasingList) -> Result<(f64, f64, f64)> {
    if hyps.len() != utts.len() {
        return Err(Error::Shape {
            context: "phrase_prf utterances",
            expected: utts.len(),
            actual: hyps.len(),
        });
    }
    let matcher = PhraseMatcher::new(list);
    let mut total = PhraseCounts::default();
    for (h, u) in hyps.iter().zip(utts) {
        total.add(phrase_counts(h, u, list, &matcher));
    }
    Ok(total.prf())
}

/// Fraction of distinct gold phrases found in `kept`; `None` when there is
/// no gold phrase.
pub fn retained_fraction(gold: &[usize], kept: &[usize]) -> Option<f64> {
    let mut g: Vec<usize> = gold.to_vec();
    g.sort_unstable();
    g.dedup();
    if g.is_empty() {
        return None;
    }
    let hit = g.iter().filter(|m| kept.contains(m)).count();
    Some(hit as f64 / g.len() as f64)
}

/// Mean retained fraction over utterances with at least one gold phrase.
/// Pairs are `(gold phrase indices, kept indices)`. Returns 1 when no
/// utterance has a gold phrase.
pub fn retention_rate<'a, I>(pairs: I) -> f64
where
    I: IntoIterator<Item = (&'a [usize], &'a [usize])>,
{
    let (mut sum, mut n) = (0.0, 0usize);
    for (gold, kept) in pairs {
        if let Some(f) = retained_fraction(gold, kept) {
            sum += f;
            n += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

pub fn rtf(decode_seconds: f64, audio_seconds: f64) -> Result<f64> {
    if !(audio_seconds > 0.0) {
        return Err(Error::ZeroDuration);
    }
    Ok(decode_seconds / audio_seconds)
}

/// Additive accumulator; merging is associative and commutative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tally {
    pub edits: EditCounts,
    pub phrases: PhraseCounts,
    pub retention_sum: f64,
    pub retention_n: usize,
    pub utterances: usize,
    pub decode_seconds: f64,
    pub audio_seconds: f64,
}

impl Tally {
    pub fn add_edits(&mut self, c: EditCounts) {
        self.edits.substitutions += c.substitutions;
        self.edits.insertions += c.insertions;
        self.edits.deletions += c.deletions;
        self.edits.ref_len += c.ref_len;
    }

    pub fn add_retention(&mut self, fraction: Option<f64>) {
        if let Some(f) = fraction {
            self.retention_sum += f;
            self.retention_n += 1;
        }
    }

    pub fn merge(&mut self, o: &Tally) {
        self.add_edits(o.edits);
        self.phrases.add(o.phrases);
        self.retention_sum += o.retention_sum;
        self.retention_n += o.retention_n;
        self.utterances += o.utterances;
        self.decode_seconds += o.decode_seconds;
        self.audio_seconds += o.audio_seconds;
    }

    pub fn report(&self) -> MetricsReport {
        let (precision, recall, f1) = self.phrases.prf();
        MetricsReport {
            cer: if self.edits.ref_len == 0 { 0.0 } else { self.edits.rate() },
            precision,
            recall,
            f1,
            retention: if self.retention_n == 0 {
                1.0
            } else {
                self.retention_sum / self.retention_n as f64
            },
            rtf: if self.audio_seconds > 0.0 {
                self.decode_seconds / self.audio_seconds
            } else {
                0.0
            },
            edits: self.edits,
            phrases: self.phrases,
            utterances: self.utterances,
            decode_seconds: self.decode_seconds,
            audio_seconds: self.audio_seconds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub cer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub retention: f64,
    pub rtf: f64,
    pub edits: EditCounts,
    pub phrases: PhraseCounts,
    pub utterances: usize,
    pub decode_seconds: f64,
    pub audio_seconds: f64,
}

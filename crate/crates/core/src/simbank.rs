//! Synthetic stand-in for the trained backbone and correlation scorers.
//!
//! Every random draw comes from a ChaCha stream keyed by the noise seed, the
//! utterance id, the step and, for phrase-dependent draws, the phrase
//! *content*. The score a phrase receives at a step is therefore the same
//! whichever list or purification group it is scored in; only the
//! competition (row normalization) depends on the other members of the list.
//!
//! Score emulation follows one recipe throughout: build a target score `z`
//! (1 for the correct item, 0 otherwise, plus distractor boosts), add
//! Gaussian jitter, then map `z > 0` to the weight `exp(k (z - 1))` and
//! `z <= 0` to zero before normalizing. With all noise off this reproduces
//! the labels exactly (one-hot rows); with noise on, every competitor leaks
//! a little mass, so rows flatten as lists grow.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{BiasingList, BiasingPhrase, TokenId, Utterance, Vocabulary, NO_BIAS};
use crate::error::{Error, Result};
use crate::matrix::{clamp01, norm, Matrix};
use crate::purify::{GroupScorer, GroupScores};

/// Sharpness of the emulated attention over phrases.
pub const PHRASE_SHARPNESS: f64 = 6.0;
/// Sharpness of the emulated token scorer.
pub const TOKEN_SHARPNESS: f64 = 6.0;
/// Target score the token scorer gives a homophone at a step where the
/// backbone confused it.
pub const TOKEN_CONFUSION_SCORE: f64 = 1.0;
/// Backbone logit of the reference token.
pub const BACKBONE_TOP_LOGIT: f64 = 7.0;
/// Backbone logit gap between a token and its homophone partner.
pub const BACKBONE_HOMOPHONE_GAP: f64 = 1.5;
/// Spread (and clamp) of backbone logits for all other tokens.
pub const BACKBONE_NOISE_SD: f64 = 0.5;
pub const BACKBONE_NOISE_CLAMP: f64 = 1.5;
/// Spurious phrase score above which the list-level score is raised.
pub const FALSE_ALARM_THRESHOLD: f64 = 0.35;
pub const FALSE_ALARM_WIDTH: f64 = 0.2;
/// Weight of the token content mixed into span acoustic embeddings.
pub const ACOUSTIC_TOKEN_MIX: f64 = 0.3;
/// Weight of the token content mixed into phrase embeddings.
pub const PHRASE_TOKEN_MIX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct NoiseSpec {
    pub seed: u64,
    pub label_flip_rate: f64,
    pub score_jitter_sigma: f64,
    pub confusion_rate: f64,
    pub distractor_boost: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::zero(0)
    }
}

impl NoiseSpec {
    pub fn zero(seed: u64) -> Self {
        Self {
            seed,
            label_flip_rate: 0.0,
            score_jitter_sigma: 0.0,
            confusion_rate: 0.0,
            distractor_boost: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.label_flip_rate) {
            return Err(Error::InvalidParameter {
                name: "label_flip_rate",
                reason: "must lie in [0, 1]",
            });
        }
        if !(self.score_jitter_sigma >= 0.0 && self.score_jitter_sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "score_jitter_sigma",
                reason: "must be finite and non-negative",
            });
        }
        if !unit(self.confusion_rate) {
            return Err(Error::InvalidParameter {
                name: "confusion_rate",
                reason: "must lie in [0, 1]",
            });
        }
        if !unit(self.distractor_boost) {
            return Err(Error::InvalidParameter {
                name: "distractor_boost",
                reason: "must lie in [0, 1]",
            });
        }
        Ok(())
    }
}

mod stream {
    pub const FLIP: u64 = 1;
    pub const LIST_JITTER: u64 = 2;
    pub const PHRASE: u64 = 3;
    pub const TOKEN: u64 = 4;
    pub const CONFUSION: u64 = 5;
    pub const BACKBONE: u64 = 6;
    pub const EMBED_TOKEN: u64 = 7;
    pub const EMBED_PHRASE: u64 = 8;
    pub const EMBED_ACOUSTIC: u64 = 9;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fold(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed_u64, |h, &p| splitmix(h ^ p))
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fold(parts))
}

/// Stable key of a phrase's token content.
pub fn phrase_key(p: &BiasingPhrase) -> u64 {
    fold(&p.tokens.iter().map(|&t| t as u64).collect::<Vec<_>>()) ^ p.len() as u64
}

pub fn utterance_key(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| splitmix(h ^ u64::from(b)))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// List-level activation caused by one phrase's spurious score: zero below
/// [`FALSE_ALARM_THRESHOLD`], then rising linearly to 1 over
/// [`FALSE_ALARM_WIDTH`].
#[inline]
fn false_alarm(score: f64) -> f64 {
    clamp01((score - FALSE_ALARM_THRESHOLD) / FALSE_ALARM_WIDTH)
}

#[inline]
fn emulated_weight(z: f64, sharpness: f64) -> f64 {
    if z > 0.0 {
        libm::exp(sharpness * (z - 1.0))
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceLabels {
    pub y_list: Vec<u8>,
    pub y_phr: Vec<u8>,
    pub y_tok: Vec<TokenId>,
}

/// Index in `list` of the gold phrase covering each step, matched by content.
pub fn gold_per_step(utt: &Utterance, list: &BiasingList) -> Vec<Option<usize>> {
    let mut out = vec![None; utt.len()];
    for s in &utt.spans {
        if let Some(m) = list.find(&utt.tokens[s.start..s.end]) {
            out[s.start..s.end].iter_mut().for_each(|g| *g = Some(m));
        }
    }
    out
}

fn labels_from(utt: &Utterance, list: &BiasingList, strict: bool) -> Result<ReferenceLabels> {
    let mut y_list = vec![0u8; utt.len()];
    let mut y_phr = vec![0u8; list.len()];
    for s in &utt.spans {
        let tokens = utt.tokens.get(s.start..s.end).ok_or(Error::InvalidUtterance {
            id: utt.id.clone(),
            reason: "span outside utterance".into(),
        })?;
        match list.find(tokens) {
            Some(m) if m != BiasingList::NO_BIAS_INDEX => {
                y_list[s.start..s.end].iter_mut().for_each(|y| *y = 1);
                y_phr[m] = 1;
            }
            _ if strict => {
                return Err(Error::InvalidUtterance {
                    id: utt.id.clone(),
                    reason: "span phrase absent from biasing list".into(),
                })
            }
            _ => {}
        }
    }
    if !y_phr.contains(&1) {
        y_phr[BiasingList::NO_BIAS_INDEX] = 1;
    }
    Ok(ReferenceLabels {
        y_list,
        y_phr,
        y_tok: utt.tokens.clone(),
    })
}

/// Reference labels; fails if a gold span's phrase is not in `list`.
pub fn make_labels(utt: &Utterance, list: &BiasingList) -> Result<ReferenceLabels> {
    labels_from(utt, list, true)
}

/// Reference labels relative to a (possibly purified) list: spans whose
/// phrase is missing from `list` are treated as unbiased steps.
pub fn make_labels_lenient(utt: &Utterance, list: &BiasingList) -> ReferenceLabels {
    labels_from(utt, list, false).expect("lenient labels never fail")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBank {
    pub e_acou: Matrix,
    pub e_phr: Matrix,
}

impl EmbeddingBank {
    pub fn dim(&self) -> usize {
        self.e_acou.cols()
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / n).collect()
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn token_embedding(seed: u64, token: TokenId, d: usize) -> Vec<f64> {
    unit_gaussian(&mut rng_for(&[seed, stream::EMBED_TOKEN, token as u64]), d)
}

fn phrase_embedding(seed: u64, p: &BiasingPhrase, d: usize) -> Vec<f64> {
    let mut e = unit_gaussian(&mut rng_for(&[seed, stream::EMBED_PHRASE, phrase_key(p)]), d);
    let mut content = vec![0.0; d];
    for &t in &p.tokens {
        axpy(&mut content, 1.0, &token_embedding(seed, t, d));
    }
    axpy(&mut e, PHRASE_TOKEN_MIX, &normalized(content));
    normalized(e)
}

/// Unit-norm phrase and acoustic embeddings. Span steps sit next to their
/// gold phrase embedding; other steps sit next to their token embedding.
/// Jitter of norm about `score_jitter_sigma` is added to every acoustic row.
pub fn synth_embeddings(
    utt: &Utterance,
    list: &BiasingList,
    spec: &NoiseSpec,
    d: usize,
) -> Result<EmbeddingBank> {
    if d < 8 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "embedding dimension must be at least 8",
        });
    }
    spec.validate()?;
    let mut e_phr = Matrix::zeros(list.len(), d);
    for (m, p) in list.phrases().iter().enumerate() {
        e_phr.row_mut(m).copy_from_slice(&phrase_embedding(spec.seed, p, d));
    }
    let gold = gold_per_step(utt, list);
    let ukey = utterance_key(&utt.id);
    let scale = spec.score_jitter_sigma / libm::sqrt(d as f64);
    let mut e_acou = Matrix::zeros(utt.len(), d);
    for (u, &t) in utt.tokens.iter().enumerate() {
        let tok = token_embedding(spec.seed, t, d);
        let mut row = match gold[u] {
            Some(m) => {
                let mut r = e_phr.row(m).to_vec();
                axpy(&mut r, ACOUSTIC_TOKEN_MIX, &tok);
                r
            }
            None => tok,
        };
        let mut rng = rng_for(&[spec.seed, stream::EMBED_ACOUSTIC, ukey, u as u64]);
        for x in row.iter_mut() {
            *x += scale * gaussian(&mut rng);
        }
        e_acou.row_mut(u).copy_from_slice(&normalized(row));
    }
    Ok(EmbeddingBank { e_acou, e_phr })
}

/// Seeded per-step confusion events: only gold-span tokens with a distinct
/// homophone partner can be confused.
pub fn confusion_events(utt: &Utterance, spec: &NoiseSpec, vocab: &Vocabulary) -> Vec<bool> {
    let ukey = utterance_key(&utt.id);
    let mut in_span = vec![false; utt.len()];
    for s in &utt.spans {
        in_span[s.start..s.end.min(utt.len())]
            .iter_mut()
            .for_each(|x| *x = true);
    }
    (0..utt.len())
        .map(|u| {
            let t = utt.tokens[u];
            if !in_span[u] || vocab.confusable(t) == t || spec.confusion_rate == 0.0 {
                return false;
            }
            let mut rng = rng_for(&[spec.seed, stream::CONFUSION, ukey, u as u64]);
            rng.random::<f64>() < spec.confusion_rate
        })
        .collect()
}

/// Backbone token posteriors. The reference token holds the top logit and
/// its homophone partner sits just below; at a confusion event the two
/// probabilities are swapped.
pub fn synth_backbone(utt: &Utterance, spec: &NoiseSpec, vocab: &Vocabulary) -> Matrix {
    let v_size = vocab.size();
    let ukey = utterance_key(&utt.id);
    let confused = confusion_events(utt, spec, vocab);
    let mut out = Matrix::zeros(utt.len(), v_size);
    for (u, &t) in utt.tokens.iter().enumerate() {
        let mut rng = rng_for(&[spec.seed, stream::BACKBONE, ukey, u as u64]);
        let row = out.row_mut(u);
        for x in row.iter_mut() {
            let n: f64 = gaussian(&mut rng) * BACKBONE_NOISE_SD;
            *x = n.clamp(-BACKBONE_NOISE_CLAMP, BACKBONE_NOISE_CLAMP);
        }
        let partner = vocab.confusable(t);
        if partner != t {
            row[partner] = BACKBONE_TOP_LOGIT - BACKBONE_HOMOPHONE_GAP;
        }
        row[t] = BACKBONE_TOP_LOGIT;
        crate::matrix::softmax_in_place(row);
        if confused[u] {
            row.swap(t, partner);
        }
    }
    out
}

/// Emulated token-level scorer output.
pub fn synth_token_scores(utt: &Utterance, spec: &NoiseSpec, vocab: &Vocabulary) -> Matrix {
    let v_size = vocab.size();
    let ukey = utterance_key(&utt.id);
    let confused = confusion_events(utt, spec, vocab);
    let sigma = spec.score_jitter_sigma;
    let mut out = Matrix::zeros(utt.len(), v_size);
    for (u, &t) in utt.tokens.iter().enumerate() {
        let row = out.row_mut(u);
        let partner = vocab.confusable(t);
        let mut rng = rng_for(&[spec.seed, stream::TOKEN, ukey, u as u64]);
        for (v, x) in row.iter_mut().enumerate() {
            let base = if v == t {
                1.0
            } else if confused[u] && v == partner {
                TOKEN_CONFUSION_SCORE
            } else {
                0.0
            };
            let z = if sigma > 0.0 {
                base + sigma * gaussian(&mut rng)
            } else {
                base
            };
            *x = emulated_weight(z, TOKEN_SHARPNESS);
        }
        normalize_or_one_hot(row, t);
    }
    out
}

fn normalize_or_one_hot(row: &mut [f64], fallback: usize) {
    let total: f64 = row.iter().sum();
    if total > 0.0 && total.is_finite() {
        row.iter_mut().for_each(|x| *x /= total);
    } else {
        row.iter_mut().for_each(|x| *x = 0.0);
        row[fallback] = 1.0;
    }
}

fn sounds_like(p: &BiasingPhrase, t: TokenId, vocab: &Vocabulary) -> bool {
    let partner = vocab.confusable(t);
    p.tokens.iter().any(|&x| x == t || x == partner)
}

/// Emulated list- and phrase-level correlations of `utt` against `list`.
///
/// * `q_list[u]` is the (possibly flipped) label, raised by the strongest
///   spurious phrase activation in the list, plus jitter, clamped to [0, 1].
///   Each phrase draws `sigma * N(0, 1)` per step and only the rare draws
///   above [`FALSE_ALARM_THRESHOLD`] register, so false alarms become more
///   frequent as the list grows.
/// * `q_phr[u]` is an attention-like distribution over the list: the gold
///   phrase (or no-bias off-span) targets 1. Inside a span, any other phrase
///   containing the reference token at `u` or its confusable partner gets
///   `distractor_boost` times the gold weight, everything else 0.
pub fn synth_list_scores(
    utt: &Utterance,
    list: &BiasingList,
    spec: &NoiseSpec,
    vocab: &Vocabulary,
) -> (Vec<f64>, Matrix) {
    let steps = utt.len();
    let sigma = spec.score_jitter_sigma;
    let ukey = utterance_key(&utt.id);
    let gold = gold_per_step(utt, list);
    // A token-sharing distractor gets `distractor_boost` times the gold
    // phrase's weight before jitter.
    let distractor_target = 1.0 + libm::log(spec.distractor_boost.max(f64::MIN_POSITIVE)) / PHRASE_SHARPNESS;

    let mut q_list: Vec<f64> = (0..steps)
        .map(|u| {
            let y = gold[u].is_some();
            let flip = spec.label_flip_rate > 0.0 && {
                let mut rng = rng_for(&[spec.seed, stream::FLIP, ukey, u as u64]);
                rng.random::<f64>() < spec.label_flip_rate
            };
            if y != flip {
                1.0
            } else {
                0.0
            }
        })
        .collect();

    let mut q_phr = Matrix::zeros(steps, list.len());
    for (m, p) in list.phrases().iter().enumerate() {
        let mut rng = (sigma > 0.0).then(|| rng_for(&[spec.seed, stream::PHRASE, ukey, phrase_key(p)]));
        for u in 0..steps {
            let (jitter, spurious) = match rng.as_mut() {
                Some(r) => (sigma * gaussian(r), false_alarm(sigma * gaussian(r))),
                None => (0.0, 0.0),
            };
            let target = match gold[u] {
                Some(g) if g == m => 1.0,
                Some(_) if m != 0 && spec.distractor_boost > 0.0 && sounds_like(p, utt.tokens[u], vocab) => {
                    distractor_target
                }
                None if m == 0 => 1.0,
                _ => 0.0,
            };
            q_phr.set(u, m, emulated_weight(target + jitter, PHRASE_SHARPNESS));
            if m != 0 && spurious > q_list[u] {
                q_list[u] = spurious;
            }
        }
    }
    for u in 0..steps {
        normalize_or_one_hot(q_phr.row_mut(u), 0);
    }

    if sigma > 0.0 {
        for (u, q) in q_list.iter_mut().enumerate() {
            let mut rng = rng_for(&[spec.seed, stream::LIST_JITTER, ukey, u as u64]);
            *q = clamp01(*q + sigma * gaussian(&mut rng));
        }
    }
    (q_list, q_phr)
}

/// Per-utterance scorer outputs plus backbone posteriors.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrelationBundle {
    pub q_list: Vec<f64>,
    pub q_phr: Matrix,
    pub q_tok: Matrix,
    pub p_bb: Matrix,
}

impl CorrelationBundle {
    pub fn steps(&self) -> usize {
        self.q_list.len()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let u = self.q_list.len();
        for (context, rows) in [
            ("bundle q_phr rows", self.q_phr.rows()),
            ("bundle q_tok rows", self.q_tok.rows()),
            ("bundle p_bb rows", self.p_bb.rows()),
        ] {
            if rows != u {
                return Err(Error::Shape {
                    context,
                    expected: u,
                    actual: rows,
                });
            }
        }
        if self.q_tok.cols() != self.p_bb.cols() {
            return Err(Error::Shape {
                context: "bundle vocabulary width",
                expected: self.p_bb.cols(),
                actual: self.q_tok.cols(),
            });
        }
        Ok(())
    }

    /// Shape checks plus value ranges: finite, non-negative, list and phrase
    /// scores in [0, 1], token rows stochastic within `1e-9`.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        let unit = |x: &f64| x.is_finite() && (0.0..=1.0).contains(x);
        if !self.q_list.iter().all(unit) || !self.q_phr.as_slice().iter().all(unit) {
            return Err(Error::InvalidParameter {
                name: "bundle",
                reason: "list/phrase scores must lie in [0, 1]",
            });
        }
        for m in [&self.q_tok, &self.p_bb] {
            if !m.as_slice().iter().all(unit) || m.max_row_sum_error() > 1e-9 {
                return Err(Error::InvalidParameter {
                    name: "bundle",
                    reason: "token distributions must be row-stochastic",
                });
            }
        }
        Ok(())
    }
}

pub fn synth_bundle(
    utt: &Utterance,
    list: &BiasingList,
    spec: &NoiseSpec,
    vocab: &Vocabulary,
) -> CorrelationBundle {
    let (q_list, q_phr) = synth_list_scores(utt, list, spec, vocab);
    CorrelationBundle {
        q_list,
        q_phr,
        q_tok: synth_token_scores(utt, spec, vocab),
        p_bb: synth_backbone(utt, spec, vocab),
    }
}

/// Scores purification groups with the simulator: each group is scored as a
/// list of its own (group phrases plus no-bias).
pub struct SimulatedScorer<'a> {
    pub utterance: &'a Utterance,
    pub list: &'a BiasingList,
    pub spec: &'a NoiseSpec,
    pub vocab: &'a Vocabulary,
}

impl GroupScorer for SimulatedScorer<'_> {
    fn score(&self, group: &[usize]) -> GroupScores {
        let sub = self.list.subset(group);
        let (q_list, q_phr) = synth_list_scores(self.utterance, &sub, self.spec, self.vocab);
        let cols: Vec<usize> = (1..sub.len()).collect();
        GroupScores {
            q_list,
            q_phr: q_phr.select_columns(&cols),
        }
    }
}

/// Token id of `NO_BIAS`, re-exported for callers building bundles by hand.
pub const NO_BIAS_TOKEN: TokenId = NO_BIAS;

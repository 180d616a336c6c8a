//! Joint intersection of list-, phrase- and token-level correlations,
//! collaborative decoding with the backbone, and the over-biasing guard.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{BiasingList, PhiMask, TokenId, NO_BIAS};
use crate::error::{Error, Result};
use crate::matrix::{argmax, softmax_in_place, Matrix};
use crate::simbank::CorrelationBundle;
use crate::smoothing::{guided_phrase_smooth, triangular_smooth, SmoothingParams};

/// How the intersected scores of a step are turned into a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Normalization {
    #[default]
    Softmax,
    /// Divide by the row sum; all-zero rows fall back to uniform.
    Sum,
}

fn check(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            actual,
        })
    }
}

/// Raw intersected scores
/// `max_m q_slist[u] * q_sphr[u, m] * phi[m, v] * q_tok[u, v]`.
/// Columns outside `active` are left at zero.
pub fn joint_scores(
    q_slist: &[f64],
    q_sphr: &Matrix,
    q_tok: &Matrix,
    phi: &PhiMask,
    active: Option<&[bool]>,
) -> Result<Matrix> {
    let steps = q_slist.len();
    check("joint q_sphr rows", steps, q_sphr.rows())?;
    check("joint q_tok rows", steps, q_tok.rows())?;
    check("joint phi rows", phi.rows(), q_sphr.cols())?;
    check("joint phi cols", phi.cols(), q_tok.cols())?;
    let vocab = q_tok.cols();
    let cols: Vec<usize> = match active {
        Some(mask) => {
            check("joint active mask", vocab, mask.len())?;
            (0..vocab).filter(|&v| mask[v]).collect()
        }
        None => (0..vocab).collect(),
    };
    let mut out = Matrix::zeros(steps, vocab);
    let mut best = vec![0.0f64; cols.len()];
    for u in 0..steps {
        best.iter_mut().for_each(|b| *b = 0.0);
        let phr = q_sphr.row(u);
        for (m, &s) in phr.iter().enumerate() {
            let row = phi.row(m);
            for (b, &v) in best.iter_mut().zip(&cols) {
                let x = if row[v] { s } else { 0.0 };
                if x > *b {
                    *b = x;
                }
            }
        }
        let tok = q_tok.row(u);
        let dst = out.row_mut(u);
        for (&b, &v) in best.iter().zip(&cols) {
            dst[v] = q_slist[u] * b * tok[v];
        }
    }
    Ok(out)
}

fn normalize_row(row: &mut [f64], active: Option<&[bool]>, norm: Normalization) {
    let support: Vec<usize> = match active {
        Some(mask) => (0..row.len()).filter(|&v| mask[v]).collect(),
        None => (0..row.len()).collect(),
    };
    if support.is_empty() {
        let n = row.len() as f64;
        row.iter_mut().for_each(|x| *x = 1.0 / n);
        return;
    }
    let mut vals: Vec<f64> = support.iter().map(|&v| row[v]).collect();
    match norm {
        Normalization::Softmax => softmax_in_place(&mut vals),
        Normalization::Sum => {
            let total: f64 = vals.iter().sum();
            if total > 0.0 {
                vals.iter_mut().for_each(|x| *x /= total);
            } else {
                let n = vals.len() as f64;
                vals.iter_mut().for_each(|x| *x = 1.0 / n);
            }
        }
    }
    row.iter_mut().for_each(|x| *x = 0.0);
    for (&v, &x) in support.iter().zip(&vals) {
        row[v] = x;
    }
}

/// Intersected token distribution, softmax-normalized over the full vocabulary.
pub fn joint_intersection(
    q_slist: &[f64],
    q_sphr: &Matrix,
    q_tok: &Matrix,
    phi: &PhiMask,
) -> Result<Matrix> {
    joint_intersection_masked(q_slist, q_sphr, q_tok, phi, None, Normalization::Softmax)
}

/// Intersected token distribution whose support is restricted to the
/// `active` columns (tokens of the biasing list). A mask with no active
/// column yields uniform rows over the whole vocabulary.
pub fn joint_intersection_masked(
    q_slist: &[f64],
    q_sphr: &Matrix,
    q_tok: &Matrix,
    phi: &PhiMask,
    active: Option<&[bool]>,
    norm: Normalization,
) -> Result<Matrix> {
    let mut scores = joint_scores(q_slist, q_sphr, q_tok, phi, active)?;
    for u in 0..scores.rows() {
        normalize_row(scores.row_mut(u), active, norm);
    }
    Ok(scores)
}

/// `(1 - w[u]) * p_bb[u] + w[u] * q_bias[u]`.
pub fn interpolate(p_bb: &Matrix, q_bias: &Matrix, weight: &[f64]) -> Result<Matrix> {
    check("interpolate rows", p_bb.rows(), q_bias.rows())?;
    check("interpolate cols", p_bb.cols(), q_bias.cols())?;
    check("interpolate weights", p_bb.rows(), weight.len())?;
    let mut out = Matrix::zeros(p_bb.rows(), p_bb.cols());
    for (u, &w) in weight.iter().enumerate() {
        let w = w.clamp(0.0, 1.0);
        for ((o, &a), &b) in out.row_mut(u).iter_mut().zip(p_bb.row(u)).zip(q_bias.row(u)) {
            *o = (1.0 - w) * a + w * b;
        }
    }
    Ok(out)
}

/// Per-row argmax; ties go to the smallest token index.
pub fn greedy_decode(probs: &Matrix) -> Vec<TokenId> {
    probs.iter_rows().map(argmax).collect()
}

/// Prefix trie over the real phrases of a list for longest-match scanning.
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    children: Vec<BTreeMap<TokenId, usize>>,
    terminal: Vec<Option<usize>>,
}

impl PhraseMatcher {
    pub fn new(list: &BiasingList) -> Self {
        let mut m = Self {
            children: vec![BTreeMap::new()],
            terminal: vec![None],
        };
        for (idx, p) in list.phrases().iter().enumerate().skip(1) {
            let mut node = 0;
            for &t in &p.tokens {
                node = match m.children[node].get(&t) {
                    Some(&next) => next,
                    None => {
                        let next = m.children.len();
                        m.children.push(BTreeMap::new());
                        m.terminal.push(None);
                        m.children[node].insert(t, next);
                        next
                    }
                };
            }
            m.terminal[node] = Some(idx);
        }
        m
    }

    fn longest_at(&self, hyp: &[TokenId], start: usize) -> Option<(usize, usize)> {
        let mut node = 0;
        let mut best = None;
        for (i, t) in hyp[start..].iter().enumerate() {
            match self.children[node].get(t) {
                Some(&next) => node = next,
                None => break,
            }
            if let Some(p) = self.terminal[node] {
                best = Some((start + i + 1, p));
            }
        }
        best
    }

    /// Non-overlapping occurrences `(start, end, phrase)`, scanning left to
    /// right and taking the longest phrase at each position.
    pub fn find_all(&self, hyp: &[TokenId]) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < hyp.len() {
            match self.longest_at(hyp, i) {
                Some((end, p)) => {
                    out.push((i, end, p));
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }

    pub fn count(&self, hyp: &[TokenId]) -> usize {
        self.find_all(hyp).len()
    }
}

pub fn count_phrases(hyp: &[TokenId], list: &BiasingList) -> usize {
    PhraseMatcher::new(list).count(hyp)
}

/// Keeps the contextual hypothesis only when it contains strictly more
/// biasing phrases than the backbone hypothesis.
pub fn post_process<'a>(
    hyp_casr: &'a [TokenId],
    hyp_bb: &'a [TokenId],
    matcher: &PhraseMatcher,
) -> &'a [TokenId] {
    if matcher.count(hyp_casr) > matcher.count(hyp_bb) {
        hyp_casr
    } else {
        hyp_bb
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecodeParams {
    pub smoothing: SmoothingParams,
    pub normalization: Normalization,
    /// Restrict the intersected distribution to tokens of the list.
    pub restrict_to_list_tokens: bool,
    pub post_process: bool,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            smoothing: SmoothingParams::default(),
            normalization: Normalization::default(),
            restrict_to_list_tokens: true,
            post_process: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub hyp_bb: Vec<TokenId>,
    pub hyp_casr: Vec<TokenId>,
    pub hyp_final: Vec<TokenId>,
    pub q_slist: Vec<f64>,
    pub q_sphr: Matrix,
    pub q_bias: Matrix,
    pub q_casr: Matrix,
}

impl DecodeResult {
    pub fn used_contextual(&self) -> bool {
        self.hyp_final == self.hyp_casr && self.hyp_casr != self.hyp_bb
    }
}

/// Steps decoded as the no-bias symbol take the backbone token instead: the
/// symbol says no phrase applies there, it is not something to transcribe.
pub fn defer_no_bias(mut hyp: Vec<TokenId>, hyp_bb: &[TokenId]) -> Vec<TokenId> {
    for (t, &b) in hyp.iter_mut().zip(hyp_bb) {
        if *t == NO_BIAS {
            *t = b;
        }
    }
    hyp
}

pub fn decode_utterance(
    bundle: &CorrelationBundle,
    list: &BiasingList,
    phi: &PhiMask,
    params: &DecodeParams,
) -> Result<DecodeResult> {
    bundle.check_shapes()?;
    check("decode list length", list.len(), bundle.q_phr.cols())?;
    check("decode phi rows", list.len(), phi.rows())?;
    let hyp_bb = greedy_decode(&bundle.p_bb);
    let q_slist = triangular_smooth(&bundle.q_list, params.smoothing);
    let steps = q_slist.len();
    let vocab = bundle.p_bb.cols();

    if list.is_empty() {
        // Nothing to bias toward: the backbone result passes through.
        return Ok(DecodeResult {
            hyp_casr: hyp_bb.clone(),
            hyp_final: hyp_bb.clone(),
            hyp_bb,
            q_slist,
            q_sphr: Matrix::zeros(steps, list.len()),
            q_bias: Matrix::filled(steps, vocab, 1.0 / vocab as f64),
            q_casr: bundle.p_bb.clone(),
        });
    }

    let q_sphr = guided_phrase_smooth(&bundle.q_phr, &bundle.q_list, &q_slist)?;
    let active = params
        .restrict_to_list_tokens
        .then(|| phi.active_columns());
    let q_bias = joint_intersection_masked(
        &q_slist,
        &q_sphr,
        &bundle.q_tok,
        phi,
        active.as_deref(),
        params.normalization,
    )?;
    let q_casr = interpolate(&bundle.p_bb, &q_bias, &q_slist)?;
    let hyp_casr = defer_no_bias(greedy_decode(&q_casr), &hyp_bb);
    let hyp_final = if params.post_process {
        post_process(&hyp_casr, &hyp_bb, &PhraseMatcher::new(list)).to_vec()
    } else {
        hyp_casr.clone()
    };
    Ok(DecodeResult {
        hyp_bb,
        hyp_casr,
        hyp_final,
        q_slist,
        q_sphr,
        q_bias,
        q_casr,
    })
}

/// Comparison stub: conventional attention biasing. Token evidence is summed
/// over phrases weighted by the raw phrase attention, normalized, and mixed
/// into the backbone with the raw (unsmoothed) list-level score. No
/// smoothing, no max-intersection, no post-processing.
pub fn attention_sum_decode(
    bundle: &CorrelationBundle,
    phi: &PhiMask,
    normalization: Normalization,
) -> Result<Vec<TokenId>> {
    bundle.check_shapes()?;
    check("stub phi rows", phi.rows(), bundle.q_phr.cols())?;
    let steps = bundle.q_list.len();
    let vocab = bundle.p_bb.cols();
    let active = phi.active_columns();
    let mut bias = Matrix::zeros(steps, vocab);
    for u in 0..steps {
        let dst = bias.row_mut(u);
        for m in 0..phi.rows() {
            let w = bundle.q_phr.get(u, m);
            if w == 0.0 {
                continue;
            }
            for (d, &b) in dst.iter_mut().zip(phi.row(m)) {
                if b {
                    *d += w;
                }
            }
        }
        for (d, &t) in dst.iter_mut().zip(bundle.q_tok.row(u)) {
            *d *= t;
        }
        normalize_row(dst, Some(&active), normalization);
    }
    let mixed = interpolate(&bundle.p_bb, &bias, &bundle.q_list)?;
    Ok(defer_no_bias(greedy_decode(&mixed), &greedy_decode(&bundle.p_bb)))
}

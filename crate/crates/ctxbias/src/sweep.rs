//! Method matrix, per-utterance decoding and cell aggregation.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ctxbias_core::jointdecode::{attention_sum_decode, greedy_decode};
use ctxbias_core::metrics::{align, phrase_counts, retained_fraction, Tally};
use ctxbias_core::purify::{restrict_phi, run_rounds};
use ctxbias_core::simbank::{synth_backbone, synth_bundle, utterance_key, SimulatedScorer};
use ctxbias_core::{
    build_phi, decode_utterance, BiasingList, DecodeParams, MetricsReport, NoiseSpec, Normalization, PhiMask,
    PhraseMatcher, PurifyParams, SmoothingParams, TokenId, Utterance, Vocabulary,
};

use crate::config::ExperimentConfig;
use crate::synth::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Backbone greedy output, no biasing.
    Baseline,
    /// Attention-weighted token evidence mixed into the backbone.
    PlainAttn,
    ScJoint,
    ScJointPp,
    PscJointOcp,
    PscJointOcpPp,
    PscJointGcp,
    PscJointGcpPp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purification {
    Ocp,
    Gcp,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Baseline,
        Method::PlainAttn,
        Method::ScJoint,
        Method::ScJointPp,
        Method::PscJointOcp,
        Method::PscJointOcpPp,
        Method::PscJointGcp,
        Method::PscJointGcpPp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::PlainAttn => "plain-attn",
            Method::ScJoint => "sc-joint",
            Method::ScJointPp => "sc-joint-pp",
            Method::PscJointOcp => "psc-joint-ocp",
            Method::PscJointOcpPp => "psc-joint-ocp-pp",
            Method::PscJointGcp => "psc-joint-gcp",
            Method::PscJointGcpPp => "psc-joint-gcp-pp",
        }
    }

    pub fn purification(self) -> Option<Purification> {
        match self {
            Method::PscJointOcp | Method::PscJointOcpPp => Some(Purification::Ocp),
            Method::PscJointGcp | Method::PscJointGcpPp => Some(Purification::Gcp),
            _ => None,
        }
    }

    pub fn post_process(self) -> bool {
        matches!(self, Method::ScJointPp | Method::PscJointOcpPp | Method::PscJointGcpPp)
    }

    pub fn is_joint(self) -> bool {
        !matches!(self, Method::Baseline | Method::PlainAttn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| anyhow!("unknown method {s:?}"))
    }
}

/// Everything a single decode needs besides the utterance and list.
#[derive(Debug, Clone, Copy)]
pub struct DecodeSettings {
    pub noise: NoiseSpec,
    pub smoothing: SmoothingParams,
    pub normalization: Normalization,
    pub purify: PurifyParams,
}

impl DecodeSettings {
    pub fn for_run(cfg: &ExperimentConfig, run_seed: u64) -> Self {
        Self {
            noise: NoiseSpec {
                seed: run_seed,
                ..cfg.noise
            },
            smoothing: cfg.smoothing,
            normalization: cfg.normalization,
            purify: PurifyParams {
                shuffle_seed: run_seed,
                ..cfg.purify
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UttOutcome {
    pub id: String,
    pub hyp_bb: Vec<TokenId>,
    pub hyp_casr: Vec<TokenId>,
    pub hyp_final: Vec<TokenId>,
    /// Indices kept by purification (all indices without purification).
    pub kept: Vec<usize>,
    pub rounds: usize,
    pub seconds: f64,
}

/// Purification plus the joint decoder, returning the full decoder state.
pub struct JointRun {
    pub list: BiasingList,
    pub kept: Vec<usize>,
    pub purify_audit: Vec<String>,
    pub rounds: usize,
    pub result: ctxbias_core::DecodeResult,
    pub bundle: ctxbias_core::CorrelationBundle,
}

pub fn run_joint(
    utt: &Utterance,
    list: &BiasingList,
    phi: &PhiMask,
    vocab: &Vocabulary,
    method: Method,
    s: &DecodeSettings,
) -> Result<JointRun> {
    let (sub, sub_phi, kept, audit, rounds): (Cow<'_, BiasingList>, Cow<'_, PhiMask>, _, _, _) =
        match method.purification() {
            None => (Cow::Borrowed(list), Cow::Borrowed(phi), (0..list.len()).collect(), Vec::new(), 0),
            Some(kind) => {
                let scorer = SimulatedScorer {
                    utterance: utt,
                    list,
                    spec: &s.noise,
                    vocab,
                };
                let p = PurifyParams {
                    shuffle_seed: s.purify.shuffle_seed ^ utterance_key(&utt.id),
                    ..s.purify
                };
                let r = match kind {
                    Purification::Gcp => run_rounds(list.len(), &scorer, &p, false)?,
                    Purification::Ocp => ctxbias_core::ocp(list, &scorer, &p)?,
                };
                let (sub_phi, _) = restrict_phi(phi, &r.kept)?;
                (
                    Cow::Owned(r.apply(list)),
                    Cow::Owned(sub_phi),
                    r.kept.clone(),
                    r.audit_lines(),
                    r.rounds.len(),
                )
            }
        };
    let bundle = synth_bundle(utt, &sub, &s.noise, vocab);
    let params = DecodeParams {
        smoothing: s.smoothing,
        normalization: s.normalization,
        restrict_to_list_tokens: true,
        post_process: method.post_process(),
    };
    let result = decode_utterance(&bundle, &sub, &sub_phi, &params)?;
    Ok(JointRun {
        list: sub.into_owned(),
        kept,
        purify_audit: audit,
        rounds,
        result,
        bundle,
    })
}

/// Decodes one utterance with one method; the timed region covers scoring,
/// purification and decoding.
pub fn decode_one(
    utt: &Utterance,
    list: &BiasingList,
    phi: &PhiMask,
    vocab: &Vocabulary,
    method: Method,
    s: &DecodeSettings,
) -> Result<UttOutcome> {
    let start = Instant::now();
    let all: Vec<usize> = (0..list.len()).collect();
    let (hyp_bb, hyp_casr, hyp_final, kept, rounds) = match method {
        Method::Baseline => {
            let hyp = greedy_decode(&synth_backbone(utt, &s.noise, vocab));
            (hyp.clone(), hyp.clone(), hyp, all, 0)
        }
        Method::PlainAttn => {
            let bundle = synth_bundle(utt, list, &s.noise, vocab);
            let hyp = attention_sum_decode(&bundle, phi, s.normalization)?;
            (greedy_decode(&bundle.p_bb), hyp.clone(), hyp, all, 0)
        }
        _ => {
            let run = run_joint(utt, list, phi, vocab, method, s)?;
            let r = run.result;
            (r.hyp_bb, r.hyp_casr, r.hyp_final, run.kept, run.rounds)
        }
    };
    Ok(UttOutcome {
        id: utt.id.clone(),
        hyp_bb,
        hyp_casr,
        hyp_final,
        kept,
        rounds,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub list_len: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Mean purified list length (no-bias included).
    pub mean_m_pur: f64,
    /// Utterances where the final hypothesis has fewer list phrases than
    /// the backbone hypothesis.
    pub pp_count_violations: usize,
    /// Utterances where the final hypothesis has a higher CER than the
    /// contextual hypothesis before post-processing.
    pub pp_cer_violations: usize,
    /// Utterances whose final hypothesis differs from the backbone.
    pub changed: usize,
}

/// Gold phrase indices of `utt` within `list`, by content.
pub fn gold_in(utt: &Utterance, list: &BiasingList) -> Vec<usize> {
    utt.gold_phrases().filter_map(|t| list.find(t)).collect()
}

pub fn aggregate(
    method: Method,
    list_len: usize,
    seed: u64,
    utts: &[Utterance],
    outcomes: &[UttOutcome],
    list: &BiasingList,
) -> Result<CellReport> {
    let matcher = PhraseMatcher::new(list);
    let mut tally = Tally::default();
    let (mut m_pur, mut count_viol, mut cer_viol, mut changed) = (0usize, 0, 0, 0);
    for (u, o) in utts.iter().zip(outcomes) {
        debug_assert_eq!(u.id, o.id);
        tally.add_edits(align(&o.hyp_final, &u.tokens));
        tally.phrases.add(phrase_counts(&o.hyp_final, u, list, &matcher));
        tally.add_retention(retained_fraction(&gold_in(u, list), &o.kept));
        tally.utterances += 1;
        tally.decode_seconds += o.seconds;
        tally.audio_seconds += u.duration_seconds;
        m_pur += o.kept.len();
        if matcher.count(&o.hyp_final) < matcher.count(&o.hyp_bb) {
            count_viol += 1;
        }
        let e_final = align(&o.hyp_final, &u.tokens).errors();
        let e_casr = align(&o.hyp_casr, &u.tokens).errors();
        if e_final > e_casr {
            cer_viol += 1;
        }
        changed += usize::from(o.hyp_final != o.hyp_bb);
    }
    Ok(CellReport {
        method,
        list_len,
        seed,
        metrics: tally.report(),
        mean_m_pur: m_pur as f64 / utts.len().max(1) as f64,
        pp_count_violations: count_viol,
        pp_cer_violations: cer_viol,
        changed,
    })
}

/// Decodes every utterance of the corpus for one cell. Outcomes come back
/// in corpus order whatever the thread count.
pub fn run_cell(
    corpus: &Corpus,
    list: &BiasingList,
    phi: &PhiMask,
    method: Method,
    seed: u64,
    settings: &DecodeSettings,
) -> Result<(CellReport, Vec<UttOutcome>)> {
    let outcomes: Vec<UttOutcome> = corpus
        .utterances
        .par_iter()
        .map(|u| decode_one(u, list, phi, &corpus.vocab, method, settings))
        .collect::<Result<_>>()?;
    let report = aggregate(method, list.len(), seed, &corpus.utterances, &outcomes, list)?;
    Ok((report, outcomes))
}

/// Runs every (run seed, list length, method) cell. Reports are ordered by
/// seed, then list length, then method as configured.
pub fn run_sweep(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<Vec<CellReport>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let lists: Vec<(BiasingList, PhiMask)> = cfg
        .list_lengths
        .iter()
        .map(|&m| {
            let l = corpus.list(m);
            let phi = build_phi(&l, &corpus.vocab)?;
            Ok((l, phi))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for seed in cfg.run_seeds() {
        let settings = DecodeSettings::for_run(cfg, seed);
        for (list, phi) in &lists {
            for &method in &cfg.methods {
                let (report, _) = pool.install(|| run_cell(corpus, list, phi, method, seed, &settings))?;
                out.push(report);
            }
        }
    }
    Ok(out)
}

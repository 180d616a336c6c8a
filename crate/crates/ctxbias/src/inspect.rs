//! Single-utterance decode dumps: every intermediate score array, the
//! purification audit and the training losses of the simulated scorer.

use anyhow::{bail, Context, Result};
use serde::Serialize;

use ctxbias_core::attention::{cross_attention, Projections};
use ctxbias_core::losses::{contrastive_loss, cosine_sims, focal_loss, phrase_pool, token_ce, total_loss};
use ctxbias_core::metrics::cer;
use ctxbias_core::simbank::{make_labels_lenient, synth_embeddings};
use ctxbias_core::smoothing::estimate_phrase_length;
use ctxbias_core::{
    build_phi, decode_utterance, BiasingList, CorrelationBundle, DecodeParams, Matrix, Utterance,
};

use crate::config::ExperimentConfig;
use crate::sweep::{run_joint, DecodeSettings, Method};
use crate::synth::Corpus;

const EMBED_DIM: usize = 16;
const HEADS: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct Losses {
    pub list_focal: f64,
    pub token_ce: f64,
    /// Absent when the utterance has no gold phrase in the list.
    pub phrase_contrastive: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecodeDump {
    pub id: String,
    pub method: Method,
    pub list_len: usize,
    pub seed: u64,
    pub reference: String,
    pub hyp_bb: String,
    pub hyp_casr: String,
    pub hyp_final: String,
    pub cer: f64,
    pub kept: Vec<usize>,
    pub purify_audit: Vec<String>,
    pub phrase_length: usize,
    pub q_list: Vec<f64>,
    pub q_slist: Vec<f64>,
    pub q_phr: Matrix,
    pub q_sphr: Matrix,
    pub q_tok: Matrix,
    pub p_bb: Matrix,
    pub q_bias: Matrix,
    pub q_casr: Matrix,
    pub losses: Losses,
}

fn losses(cfg: &ExperimentConfig, s: &DecodeSettings, utt: &Utterance, list: &BiasingList, b: &CorrelationBundle) -> Result<Losses> {
    let labels = make_labels_lenient(utt, list);
    let list_focal = focal_loss(&b.q_list, &labels.y_list, cfg.focal)?;
    let tok = token_ce(&b.q_tok, &labels.y_tok)?;
    let phrase_contrastive = if labels.y_list.iter().any(|&y| y != 0) {
        let bank = synth_embeddings(utt, list, &s.noise, EMBED_DIM)?;
        let att = cross_attention(&bank.e_acou, &bank.e_phr, HEADS, &Projections::default())?;
        let pooled = phrase_pool(&att.e_bias, &labels.y_list)?;
        let sims = cosine_sims(&pooled, &bank.e_phr)?;
        Some(contrastive_loss(&sims, &labels.y_phr)?)
    } else {
        None
    };
    Ok(Losses {
        list_focal,
        token_ce: tok,
        phrase_contrastive,
        total: total_loss(list_focal, phrase_contrastive.unwrap_or(0.0), tok),
    })
}

/// Decodes one utterance of `corpus` against its length-`list_len` list.
/// A supplied `bundle` replaces the simulated scores; it cannot be combined
/// with purification, which needs to rescore groups.
pub fn dump_decode(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    id: &str,
    list_len: usize,
    method: Method,
    seed: u64,
    bundle: Option<CorrelationBundle>,
) -> Result<DecodeDump> {
    if !method.is_joint() {
        bail!("decode dumps need a joint method, got {method}");
    }
    let utt = corpus
        .utterances
        .iter()
        .find(|u| u.id == id)
        .with_context(|| format!("no utterance with id {id:?}"))?;
    let list = corpus.list(list_len);
    let phi = build_phi(&list, &corpus.vocab)?;
    let s = DecodeSettings::for_run(cfg, seed);
    let (list, kept, audit, bundle, result) = match bundle {
        None => {
            let run = run_joint(utt, &list, &phi, &corpus.vocab, method, &s)?;
            (run.list, run.kept, run.purify_audit, run.bundle, run.result)
        }
        Some(b) => {
            if method.purification().is_some() {
                bail!("a supplied bundle cannot be purified; use sc-joint or sc-joint-pp");
            }
            b.validate().context("supplied bundle")?;
            let params = DecodeParams {
                smoothing: s.smoothing,
                normalization: s.normalization,
                restrict_to_list_tokens: true,
                post_process: method.post_process(),
            };
            let r = decode_utterance(&b, &list, &phi, &params)?;
            let kept = (0..list.len()).collect();
            (list, kept, Vec::new(), b, r)
        }
    };
    let (rate, _) = cer(&result.hyp_final, &utt.tokens)?;
    let losses = losses(cfg, &s, utt, &list, &bundle)?;
    let text = |t: &[usize]| corpus.vocab.detokenize(t);
    Ok(DecodeDump {
        id: utt.id.clone(),
        method,
        list_len,
        seed,
        reference: text(&utt.tokens),
        hyp_bb: text(&result.hyp_bb),
        hyp_casr: text(&result.hyp_casr),
        hyp_final: text(&result.hyp_final),
        cer: rate,
        kept,
        purify_audit: audit,
        phrase_length: estimate_phrase_length(&result.q_slist),
        q_list: bundle.q_list,
        q_slist: result.q_slist,
        q_phr: bundle.q_phr,
        q_sphr: result.q_sphr,
        q_tok: bundle.q_tok,
        p_bb: bundle.p_bb,
        q_bias: result.q_bias,
        q_casr: result.q_casr,
        losses,
    })
}

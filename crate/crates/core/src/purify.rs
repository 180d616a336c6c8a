//! Group competitive purification of a biasing list.
//!
//! Real phrases are shuffled into groups, each group is scored on its own,
//! and the phrases that make the per-step top-k at confidently biased steps
//! survive into the next round. The no-bias entry never competes and is
//! always kept.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BiasingList, PhiMask};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PurifyParams {
    pub group_size: usize,
    pub n_r: usize,
    pub thres_list: f64,
    pub n_top: usize,
    pub shuffle_seed: u64,
}

impl Default for PurifyParams {
    fn default() -> Self {
        Self {
            group_size: 75,
            n_r: 2,
            thres_list: 0.5,
            n_top: 10,
            shuffle_seed: 0,
        }
    }
}

impl PurifyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if self.group_size == 0 {
            return bad("group_size", "must be positive");
        }
        if self.n_r == 0 {
            return bad("n_r", "must be positive");
        }
        if self.n_top == 0 {
            return bad("n_top", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.thres_list) {
            return bad("thres_list", "must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Scores of one group: list-level scores and the phrase columns of the
/// group members, in group order (no-bias column removed).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScores {
    pub q_list: Vec<f64>,
    pub q_phr: Matrix,
}

/// Anything able to score a group of phrases (indices into the full list)
/// against one utterance, with competition confined to the group.
pub trait GroupScorer {
    fn score(&self, group: &[usize]) -> GroupScores;
}

impl<F: Fn(&[usize]) -> GroupScores> GroupScorer for F {
    fn score(&self, group: &[usize]) -> GroupScores {
        self(group)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundLog {
    pub round: usize,
    pub groups: Vec<Vec<usize>>,
    pub winners: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PurifyResult {
    /// Kept indices into the original list, ascending, starting with no-bias.
    pub kept: Vec<usize>,
    pub rounds: Vec<RoundLog>,
}

impl PurifyResult {
    pub fn m_pur(&self) -> usize {
        self.kept.len()
    }

    /// Purified list in original order.
    pub fn apply(&self, list: &BiasingList) -> BiasingList {
        let real: Vec<usize> = self.kept.iter().copied().filter(|&m| m != 0).collect();
        list.subset(&real)
    }

    /// One `round=R group=G winners=a,b,c` line per scored group.
    pub fn audit_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.rounds {
            for (g, w) in r.winners.iter().enumerate() {
                let ids: Vec<String> = w.iter().map(|i| format!("{i}")).collect();
                out.push(format!(
                    "round={} group={} size={} winners={}",
                    r.round,
                    g,
                    r.groups[g].len(),
                    ids.join(",")
                ));
            }
        }
        out
    }
}

fn chunk(items: &[usize], group_size: usize) -> Vec<Vec<usize>> {
    items.chunks(group_size).map(<[usize]>::to_vec).collect()
}

/// Seeded shuffle of `0..m` cut into `ceil(m / group_size)` contiguous groups.
pub fn group_phrases(m: usize, group_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut items: Vec<usize> = (0..m).collect();
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    chunk(&items, group_size.max(1))
}

/// Group-local indices of the winners: at every step whose list score
/// exceeds `thres_list`, the `n_top` phrases with the largest positive
/// `q_list * q_phr`, ties to the smaller index. Returned ascending.
pub fn select_winners(q_list: &[f64], q_phr: &Matrix, thres_list: f64, n_top: usize) -> Vec<usize> {
    let cols = q_phr.cols();
    let mut won = alloc::vec![false; cols];
    let mut order: Vec<usize> = Vec::with_capacity(cols);
    for (u, &ql) in q_list.iter().enumerate().take(q_phr.rows()) {
        if ql <= thres_list {
            continue;
        }
        let row = q_phr.row(u);
        order.clear();
        order.extend((0..cols).filter(|&k| ql * row[k] > 0.0));
        let take = n_top.min(order.len());
        if take == 0 {
            continue;
        }
        let by_score = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
        if take < order.len() {
            order.select_nth_unstable_by(take - 1, by_score);
        }
        for &k in &order[..take] {
            won[k] = true;
        }
    }
    (0..cols).filter(|&k| won[k]).collect()
}

/// Runs the competition rounds over the real phrases of a list of length
/// `list_len`. With `force_first_round` the first round runs even when
/// everything fits in one group.
pub fn run_rounds<S: GroupScorer + ?Sized>(
    list_len: usize,
    scorer: &S,
    p: &PurifyParams,
    force_first_round: bool,
) -> Result<PurifyResult> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.shuffle_seed);
    let mut pool: Vec<usize> = (1..list_len).collect();
    let mut rounds = Vec::new();
    let mut round = 1;
    while round <= p.n_r && (pool.len().div_ceil(p.group_size) > 1 || (force_first_round && round == 1)) {
        if pool.is_empty() {
            break;
        }
        pool.shuffle(&mut rng);
        let groups = chunk(&pool, p.group_size);
        let mut winners = Vec::with_capacity(groups.len());
        for g in &groups {
            let s = scorer.score(g);
            if s.q_phr.cols() != g.len() {
                return Err(Error::Shape {
                    context: "group scores width",
                    expected: g.len(),
                    actual: s.q_phr.cols(),
                });
            }
            let local = select_winners(&s.q_list, &s.q_phr, p.thres_list, p.n_top);
            winners.push(local.into_iter().map(|k| g[k]).collect::<Vec<_>>());
        }
        pool = winners.iter().flatten().copied().collect();
        rounds.push(RoundLog {
            round,
            groups,
            winners,
        });
        round += 1;
    }
    pool.sort_unstable();
    let mut kept = Vec::with_capacity(pool.len() + 1);
    kept.push(BiasingList::NO_BIAS_INDEX);
    kept.extend(pool);
    Ok(PurifyResult { kept, rounds })
}

/// Group competitive purification. Stops after `n_r` rounds or as soon as
/// the survivors fit in a single group.
pub fn gcp<S: GroupScorer + ?Sized>(list: &BiasingList, scorer: &S, p: &PurifyParams) -> Result<PurifyResult> {
    run_rounds(list.len(), scorer, p, false)
}

/// Once competitive purification: a single competition over the whole list.
pub fn ocp<S: GroupScorer + ?Sized>(list: &BiasingList, scorer: &S, p: &PurifyParams) -> Result<PurifyResult> {
    let once = PurifyParams {
        group_size: list.real_phrases().len().max(1),
        n_r: 1,
        ..*p
    };
    run_rounds(list.len(), scorer, &once, true)
}

/// Rows of `phi` for the kept phrases plus the mask of tokens used by at
/// least one kept phrase.
pub fn restrict_phi(phi: &PhiMask, kept: &[usize]) -> Result<(PhiMask, Vec<bool>)> {
    if let Some(&bad) = kept.iter().find(|&&m| m >= phi.rows()) {
        return Err(Error::TokenOutOfRange {
            index: bad,
            size: phi.rows(),
        });
    }
    let sub = phi.select_rows(kept);
    let active = sub.active_columns();
    Ok((sub, active))
}

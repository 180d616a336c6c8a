//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each, and exits non-zero if any fails. Criteria run sequentially so the
//! timing checks see an otherwise idle machine.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctxbias::report::without_timing;
use ctxbias::sweep::{run_cell, DecodeSettings};
use ctxbias::{generate_corpus, run_sweep, CellReport, Corpus, ExperimentConfig, Method};
use ctxbias_core::attention::{corr_scores, phrase_corr_from_heads, HeadWeights};
use ctxbias_core::jointdecode::{greedy_decode, interpolate};
use ctxbias_core::losses::{
    contrastive_grad, contrastive_loss, focal_grad, focal_loss, token_ce, token_ce_grad, FocalParams,
};
use ctxbias_core::matrix::softmax_in_place;
use ctxbias_core::metrics::cer;
use ctxbias_core::smoothing::triangular_smooth;
use ctxbias_core::{build_phi, BiasingList, BiasingPhrase, Matrix, NoiseSpec, SmoothingParams, Vocabulary};

const LIST_LENGTHS: [usize; 3] = [51, 201, 1196];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn config(runs: usize, list_lengths: &[usize], methods: &[Method]) -> ExperimentConfig {
    ExperimentConfig {
        runs,
        list_lengths: list_lengths.to_vec(),
        methods: methods.to_vec(),
        ..ExperimentConfig::default()
    }
}

fn cells(reports: &[CellReport], method: Method, m: usize) -> impl Iterator<Item = &CellReport> {
    reports.iter().filter(move |r| r.method == method && r.list_len == m)
}

fn mean_over_seeds(reports: &[CellReport], method: Method, m: usize, f: impl Fn(&CellReport) -> f64) -> f64 {
    let xs: Vec<f64> = cells(reports, method, m).map(f).collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn oracle_limit() -> Result<Verdict> {
    let start = Instant::now();
    let mut cfg = config(1, &LIST_LENGTHS, &[Method::PscJointGcp, Method::PscJointGcpPp]);
    cfg.noise = NoiseSpec::zero(0);
    let corpus = generate_corpus(&cfg.corpus, cfg.seed)?;
    let reports = run_sweep(&cfg, &corpus)?;
    let elapsed = start.elapsed();
    let bad: Vec<String> = reports
        .iter()
        .filter(|r| r.metrics.f1 != 1.0 || r.metrics.cer != 0.0 || r.metrics.retention != 1.0)
        .map(|r| {
            format!(
                "{} M={} f1={} cer={} retention={}",
                r.method, r.list_len, r.metrics.f1, r.metrics.cer, r.metrics.retention
            )
        })
        .collect();
    let pass = bad.is_empty() && corpus.utterances.len() == 200 && elapsed <= Duration::from_secs(60);
    Ok(verdict(
        pass,
        format!(
            "{} cells exact on {} utterances in {:.1}s{}",
            reports.len() - bad.len(),
            corpus.utterances.len(),
            elapsed.as_secs_f64(),
            if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join(", ")) }
        ),
    ))
}

fn robustness(reports: &[CellReport]) -> Verdict {
    let joint = [Method::ScJoint, Method::ScJointPp, Method::PscJointGcp, Method::PscJointGcpPp];
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for m in LIST_LENGTHS {
        let stub = mean_over_seeds(reports, Method::PlainAttn, m, |r| r.metrics.f1);
        for j in joint {
            let f1 = mean_over_seeds(reports, j, m, |r| r.metrics.f1);
            if f1 <= stub {
                failures.push(format!("{j} M={m} f1 {f1:.4} <= stub {stub:.4}"));
            }
        }
        detail.push(format!(
            "M={m} sc-joint {:.4} stub {stub:.4}",
            mean_over_seeds(reports, Method::ScJoint, m, |r| r.metrics.f1)
        ));
    }
    let drop = |method| {
        mean_over_seeds(reports, method, 51, |r| r.metrics.f1) - mean_over_seeds(reports, method, 1196, |r| r.metrics.f1)
    };
    let (joint_drop, stub_drop) = (drop(Method::ScJoint), drop(Method::PlainAttn));
    if joint_drop > stub_drop {
        failures.push(format!("sc-joint drop {joint_drop:.4} > stub drop {stub_drop:.4}"));
    }
    detail.push(format!("drop sc-joint {joint_drop:.4} stub {stub_drop:.4}"));
    if !failures.is_empty() {
        detail.push(failures.join(", "));
    }
    verdict(failures.is_empty(), detail.join("; "))
}

fn retention(corpus: &Corpus) -> Result<Verdict> {
    let cfg = config(20, &[1196], &[Method::PscJointOcp, Method::PscJointGcp]);
    let reports = run_sweep(&cfg, corpus)?;
    let per_seed = |method| -> Vec<f64> { cells(&reports, method, 1196).map(|r| r.metrics.retention).collect() };
    let (ocp, gcp) = (per_seed(Method::PscJointOcp), per_seed(Method::PscJointGcp));
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let non_worse = gcp.iter().zip(&ocp).filter(|(g, o)| g >= o).count();
    let pass = gcp.len() == 20 && mean(&gcp) >= mean(&ocp) && non_worse >= 14;
    Ok(verdict(
        pass,
        format!(
            "mean retention gcp {:.4} ocp {:.4}, gcp non-worse on {non_worse}/{} seeds",
            mean(&gcp),
            mean(&ocp),
            gcp.len()
        ),
    ))
}

fn post_processing(reports: &[CellReport]) -> Verdict {
    let pp: Vec<&CellReport> = reports.iter().filter(|r| r.method.post_process()).collect();
    let count_violations: usize = pp.iter().map(|r| r.pp_count_violations).sum();
    // Methods without post-processing carry no count guarantee; shown for contrast.
    let unguarded: usize = reports
        .iter()
        .filter(|r| !r.method.post_process())
        .map(|r| r.pp_count_violations)
        .sum();
    let utterances: usize = pp.iter().map(|r| r.metrics.utterances).sum();
    let cer_violations: usize = pp.iter().map(|r| r.pp_cer_violations).sum();
    let rate = cer_violations as f64 / utterances as f64;
    let mut increases = Vec::new();
    for m in LIST_LENGTHS {
        for (with, without) in [(Method::ScJointPp, Method::ScJoint), (Method::PscJointGcpPp, Method::PscJointGcp)] {
            let delta = mean_over_seeds(reports, with, m, |r| r.metrics.cer)
                - mean_over_seeds(reports, without, m, |r| r.metrics.cer);
            if delta > 0.0 {
                increases.push(format!("{with} M={m} +{:.3}pt", 100.0 * delta));
            }
        }
    }
    let pass = count_violations == 0 && rate <= 0.01 && increases.is_empty();
    verdict(
        pass,
        format!(
            "phrase-count violations {count_violations} (without post-processing: {unguarded}); per-utterance CER violations {cer_violations}/{utterances} ({:.2}%); mean CER increases: {}",
            100.0 * rate,
            if increases.is_empty() { "none".to_string() } else { increases.join(", ") }
        ),
    )
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn stochastic_row(rng: &mut ChaCha8Rng, v: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..v).map(|_| rng.random_range(1e-6..1.0)).collect();
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
    row
}

fn numerics() -> Result<Verdict> {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_row = 0.0f64;
    for _ in 0..100_000 {
        let mut row: Vec<f64> = (0..rng.random_range(1..64)).map(|_| rng.random_range(-60.0..60.0)).collect();
        softmax_in_place(&mut row);
        worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    // 10^5 interpolated rows, in blocks of 100.
    for _ in 0..1000 {
        let v = rng.random_range(2..40);
        let p: Vec<Vec<f64>> = (0..100).map(|_| stochastic_row(&mut rng, v)).collect();
        let q: Vec<Vec<f64>> = (0..100).map(|_| stochastic_row(&mut rng, v)).collect();
        let w: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let out = interpolate(&Matrix::from_rows(&p)?, &Matrix::from_rows(&q)?, &w)?;
        worst_row = worst_row.max(out.max_row_sum_error());
    }

    let mut worst_grad = 0.0f64;
    let focal = FocalParams::default();
    for _ in 0..100 {
        let q = rng.random_range(0.02..0.98);
        let y = u8::from(rng.random_bool(0.5));
        let g = focal_grad(&[q], &[y], focal)?[0];
        let f = |x: f64| focal_loss(&[x], &[y], focal).unwrap();
        worst_grad = worst_grad.max(rel_err(g, (f(q + H) - f(q - H)) / (2.0 * H)));
    }
    for _ in 0..100 {
        let m = rng.random_range(2..8);
        let s: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0u8; m];
        y[rng.random_range(0..m)] = 1;
        let k = rng.random_range(0..m);
        let at = |d: f64| {
            let mut t = s.clone();
            t[k] += d;
            contrastive_loss(&t, &y).unwrap()
        };
        worst_grad = worst_grad.max(rel_err(contrastive_grad(&s, &y)?[k], (at(H) - at(-H)) / (2.0 * H)));
    }
    for _ in 0..100 {
        let (u, v) = (rng.random_range(1..5), rng.random_range(2..7));
        let q = Matrix::from_vec(u, v, (0..u * v).map(|_| rng.random_range(0.05..1.0)).collect())?;
        let y: Vec<usize> = (0..u).map(|_| rng.random_range(0..v)).collect();
        // Pick a labelled cell so the derivative is non-zero.
        let r = rng.random_range(0..u);
        let c = y[r];
        let at = |d: f64| {
            let mut t = q.clone();
            t.set(r, c, q.get(r, c) + d);
            token_ce(&t, &y).unwrap()
        };
        worst_grad = worst_grad.max(rel_err(token_ce_grad(&q, &y)?.get(r, c), (at(H) - at(-H)) / (2.0 * H)));
    }
    Ok(verdict(
        worst_row <= 1e-9 && worst_grad <= 1e-4,
        format!("worst row-sum error {worst_row:.2e}; worst gradient relative error {worst_grad:.2e}"),
    ))
}

fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = (t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]))
                .min(t[i - 1][j] + 1)
                .min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

fn oracles() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = Vec::new();

    let mut bad = 0;
    for _ in 0..1000 {
        let r: Vec<usize> = (0..rng.random_range(1..=10)).map(|_| rng.random_range(2..6)).collect();
        let h: Vec<usize> = (0..rng.random_range(0..=10)).map(|_| rng.random_range(2..6)).collect();
        let (rate, counts) = cer(&h, &r)?;
        let d = levenshtein(&h, &r);
        bad += usize::from(counts.errors() != d || rate != d as f64 / r.len() as f64);
    }
    if bad > 0 {
        mismatches.push(format!("cer {bad}/1000"));
    }

    let vocab = Vocabulary::new("abcdefghijklmnopqrst".chars())?;
    let mut bad = 0;
    for _ in 0..100 {
        let mut real: Vec<BiasingPhrase> = Vec::new();
        for _ in 0..rng.random_range(1..12) {
            let tokens: Vec<usize> = (0..rng.random_range(2..6)).map(|_| rng.random_range(2..vocab.size())).collect();
            if !real.iter().any(|p| p.tokens == tokens) {
                real.push(BiasingPhrase { tokens });
            }
        }
        let list = BiasingList::new(real, &vocab)?;
        let phi = build_phi(&list, &vocab)?;
        let ok = (0..list.len())
            .all(|m| (0..vocab.size()).all(|v| phi.get(m, v) == list.phrase(m).tokens.contains(&v)));
        bad += usize::from(!ok);
    }
    if bad > 0 {
        mismatches.push(format!("build_phi {bad}/100"));
    }

    let mut bad = 0;
    for _ in 0..100 {
        let (u, m, d) = (rng.random_range(1..8), rng.random_range(1..8), rng.random_range(1..9));
        let a = Matrix::from_vec(u, d, (0..u * d).map(|_| rng.random_range(-2.0..2.0)).collect())?;
        let p = Matrix::from_vec(m, d, (0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect())?;
        let got = corr_scores(&a, &p)?;
        let ok = (0..u).all(|i| {
            (0..m).all(|j| {
                let s = (0..d).map(|k| a.get(i, k) * p.get(j, k)).sum::<f64>() / (d as f64).sqrt();
                (got.get(i, j) - s).abs() <= 1e-12 * s.abs().max(1.0)
            })
        });
        bad += usize::from(!ok);
    }
    if bad > 0 {
        mismatches.push(format!("corr_scores {bad}/100"));
    }

    let mut bad = 0;
    for _ in 0..100 {
        let (u, m, h) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..5));
        let data: Vec<f64> = (0..u * m * h).map(|_| rng.random::<f64>()).collect();
        let got = phrase_corr_from_heads(&HeadWeights::from_vec(u, m, h, data.clone())?);
        let ok = (0..u).all(|i| {
            (0..m).all(|j| {
                let best = (0..h).map(|n| data[(i * m + j) * h + n]).fold(f64::MIN, f64::max);
                got.get(i, j) == best
            })
        });
        bad += usize::from(!ok);
    }
    if bad > 0 {
        mismatches.push(format!("phrase_corr_from_heads {bad}/100"));
    }

    let mut bad = 0;
    for _ in 0..100 {
        let (u, v) = (rng.random_range(1..8), rng.random_range(1..9));
        let p = Matrix::from_vec(u, v, (0..u * v).map(|_| f64::from(rng.random_range(0..4u8))).collect())?;
        let got = greedy_decode(&p);
        let ok = (0..u).all(|i| {
            let mut best = 0;
            for j in 1..v {
                if p.get(i, j) > p.get(i, best) {
                    best = j;
                }
            }
            got[i] == best
        });
        bad += usize::from(!ok);
    }
    if bad > 0 {
        mismatches.push(format!("greedy_decode {bad}/100"));
    }

    Ok(verdict(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "cer on 1000 pairs; build_phi, corr_scores, phrase_corr_from_heads, greedy_decode on 100 instances each".to_string()
        } else {
            format!("mismatches: {}", mismatches.join(", "))
        },
    ))
}

fn hand_values() -> Result<Verdict> {
    let focal = focal_loss(&[0.5], &[1], FocalParams { alpha: 0.75, gamma: 2.0 })?;
    let focal_want = 0.75 * 0.25 * std::f64::consts::LN_2;
    let tri = triangular_smooth(&[0.0, 1.0, 0.0], SmoothingParams { omega: 0.6 });
    let tri_err = tri.iter().zip([0.2, 0.6, 0.2]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (u, v) = (7, 13);
    let uniform = Matrix::from_vec(u, v, vec![1.0 / v as f64; u * v])?;
    let ce = token_ce(&uniform, &[3, 0, 12, 5, 5, 1, 9])?;
    let ce_want = u as f64 * (v as f64).ln();
    let pass = (focal - focal_want).abs() <= 1e-6 && tri_err <= 1e-12 && (ce - ce_want).abs() <= 1e-9;
    Ok(verdict(
        pass,
        format!("focal {focal:.8} (want {focal_want:.8}); triangular {tri:?}; uniform CE {ce:.10} (want {ce_want:.10})"),
    ))
}

/// Best of `repeats` single-threaded timings of one cell.
fn cell_seconds(corpus: &Corpus, cfg: &ExperimentConfig, m: usize, method: Method, repeats: usize) -> Result<f64> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let list = corpus.list(m);
    let phi = build_phi(&list, &corpus.vocab)?;
    let settings = DecodeSettings::for_run(cfg, cfg.seed);
    let mut best = f64::INFINITY;
    for _ in 0..repeats {
        let (report, _) = pool.install(|| run_cell(corpus, &list, &phi, method, cfg.seed, &settings))?;
        best = best.min(report.metrics.decode_seconds);
    }
    Ok(best)
}

fn scaling(corpus: &Corpus) -> Result<Verdict> {
    let cfg = ExperimentConfig::default();
    let lengths = [51, 201, 601, 1196];
    let times: Vec<f64> = lengths
        .iter()
        .map(|&m| cell_seconds(corpus, &cfg, m, Method::ScJoint, 3))
        .collect::<Result<_>>()?;
    let gcp = cell_seconds(corpus, &cfg, 1196, Method::PscJointGcp, 3)?;
    let increasing = times.windows(2).all(|w| w[0] < w[1]);
    let shown: Vec<String> = lengths.iter().zip(&times).map(|(m, t)| format!("M={m} {t:.3}s")).collect();
    Ok(verdict(
        increasing && gcp < times[3],
        format!("sc-joint {}; psc-joint-gcp M=1196 {gcp:.3}s", shown.join(", ")),
    ))
}

fn determinism(corpus: &Corpus) -> Result<Verdict> {
    let cfg = ExperimentConfig::default();
    let a = serde_json::to_string(&without_timing(&run_sweep(&cfg, corpus)?))?;
    let b = serde_json::to_string(&without_timing(&run_sweep(&cfg, corpus)?))?;
    Ok(verdict(a == b, format!("{} bytes of metric JSON, identical: {}", a.len(), a == b)))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let base = ExperimentConfig::default();
    let corpus = generate_corpus(&base.corpus, base.seed).expect("default corpus");
    let c2_cfg = config(
        10,
        &LIST_LENGTHS,
        &[Method::PlainAttn, Method::ScJoint, Method::ScJointPp, Method::PscJointGcp, Method::PscJointGcpPp],
    );
    let mut c2_reports: Option<Vec<CellReport>> = None;
    let mut c2 = || -> Result<Vec<CellReport>> {
        if c2_reports.is_none() {
            c2_reports = Some(run_sweep(&c2_cfg, &corpus)?);
        }
        Ok(c2_reports.clone().expect("just filled"))
    };

    let results: Vec<(usize, &str, Result<Verdict>)> = vec![
        (1, "oracle-limit exactness", oracle_limit()),
        (2, "robustness trend", c2().map(|r| robustness(&r))),
        (3, "retention inequality", retention(&corpus)),
        (4, "post-processing safety", c2().map(|r| post_processing(&r))),
        (5, "numerical invariants", numerics()),
        (6, "oracle equivalence", oracles()),
        (7, "hand-computed values", hand_values()),
        (8, "decode time scaling", scaling(&corpus)),
        (9, "determinism", determinism(&corpus)),
    ];

    let mut failed = 0;
    for (n, name, r) in results {
        let (pass, detail) = match r {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!pass);
        println!("{} criterion {n} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!(
        "acceptance: {} of 9 criteria passed in {:.1}s",
        9 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Implementation paths checked against naive loop versions on random
//! instances.

use ctxbias_core::attention::{corr_scores, phrase_corr_from_heads, HeadWeights};
use ctxbias_core::jointdecode::{greedy_decode, joint_scores};
use ctxbias_core::metrics::{align, cer};
use ctxbias_core::smoothing::locate_window;
use ctxbias_core::{build_phi, BiasingList, BiasingPhrase, Matrix, PhiMask, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn levenshtein_table(a: &[usize], b: &[usize]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

#[test]
fn cer_matches_table_levenshtein() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let r: Vec<usize> = (0..rng.random_range(1..=10)).map(|_| rng.random_range(2..6)).collect();
        let h: Vec<usize> = (0..rng.random_range(0..=10)).map(|_| rng.random_range(2..6)).collect();
        let d = levenshtein_table(&h, &r);
        let (rate, counts) = cer(&h, &r).unwrap();
        assert_eq!(counts.errors(), d, "hyp {h:?} ref {r:?}");
        assert!((rate - d as f64 / r.len() as f64).abs() < 1e-15);
        // The backtrace must describe an actual edit script.
        assert_eq!(r.len() - counts.deletions + counts.insertions, h.len());
        assert_eq!(align(&h, &r), counts);
    }
}

#[test]
fn phi_matches_membership_loop() {
    let vocab = Vocabulary::new("abcdefghijklmnopqrst".chars()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(1..12);
        let mut real: Vec<BiasingPhrase> = Vec::new();
        while real.len() < n {
            let len = rng.random_range(2..6);
            let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(2..vocab.size())).collect();
            if !real.iter().any(|p| p.tokens == tokens) {
                real.push(BiasingPhrase { tokens });
            }
        }
        let list = BiasingList::new(real, &vocab).unwrap();
        let phi = build_phi(&list, &vocab).unwrap();
        assert_eq!((phi.rows(), phi.cols()), (list.len(), vocab.size()));
        for m in 0..list.len() {
            for v in 0..vocab.size() {
                let expected = list.phrase(m).tokens.contains(&v);
                assert_eq!(phi.get(m, v), expected, "m={m} v={v}");
            }
        }
    }
}

#[test]
fn corr_scores_match_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let (u, m, d) = (rng.random_range(1..8), rng.random_range(1..8), rng.random_range(1..9));
        let a = random_matrix(&mut rng, u, d);
        let p = random_matrix(&mut rng, m, d);
        let got = corr_scores(&a, &p).unwrap();
        for i in 0..u {
            for j in 0..m {
                let mut s = 0.0;
                for k in 0..d {
                    s += a.get(i, k) * p.get(j, k);
                }
                s /= (d as f64).sqrt();
                assert!((got.get(i, j) - s).abs() <= 1e-12 * s.abs().max(1.0));
            }
        }
    }
}

#[test]
fn head_max_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let (u, m, h) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..5));
        let data: Vec<f64> = (0..u * m * h).map(|_| rng.random::<f64>()).collect();
        let w = HeadWeights::from_vec(u, m, h, data.clone()).unwrap();
        let got = phrase_corr_from_heads(&w);
        for i in 0..u {
            for j in 0..m {
                let mut best = f64::MIN;
                for n in 0..h {
                    best = best.max(data[(i * m + j) * h + n]);
                }
                assert_eq!(got.get(i, j), best);
            }
        }
    }
}

#[test]
fn greedy_matches_first_max_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let (u, v) = (rng.random_range(1..8), rng.random_range(1..9));
        // Coarse values so ties actually occur.
        let data = (0..u * v).map(|_| f64::from(rng.random_range(0..4u8))).collect();
        let p = Matrix::from_vec(u, v, data).unwrap();
        let got = greedy_decode(&p);
        for (i, &g) in got.iter().enumerate() {
            let mut best = 0;
            for j in 1..v {
                if p.get(i, j) > p.get(i, best) {
                    best = j;
                }
            }
            assert_eq!(g, best);
        }
    }
}

#[test]
fn joint_scores_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..100 {
        let (u, m, v) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(2..8));
        let q_slist: Vec<f64> = (0..u).map(|_| rng.random::<f64>()).collect();
        let q_sphr = Matrix::from_vec(u, m, (0..u * m).map(|_| rng.random::<f64>()).collect()).unwrap();
        let q_tok = Matrix::from_vec(u, v, (0..u * v).map(|_| rng.random::<f64>()).collect()).unwrap();
        let rows: Vec<Vec<bool>> = (0..m).map(|_| (0..v).map(|_| rng.random_bool(0.4)).collect()).collect();
        let phi = PhiMask::from_rows(&rows).unwrap();
        let got = joint_scores(&q_slist, &q_sphr, &q_tok, &phi, None).unwrap();
        for i in 0..u {
            for t in 0..v {
                let mut best = 0.0f64;
                for k in 0..m {
                    let x = q_slist[i] * q_sphr.get(i, k) * f64::from(u8::from(rows[k][t])) * q_tok.get(i, t);
                    best = best.max(x);
                }
                assert!((got.get(i, t) - best).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn window_location_matches_direct_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let n = rng.random_range(1..15);
        // Multiples of 1/8 keep every partial sum exact, so ties are real.
        let q: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..9u8)) / 8.0).collect();
        let len = rng.random_range(1..=n);
        let u = rng.random_range(0..n);
        let sum = |j: usize| q[j..j + len].iter().sum::<f64>();
        let (lo, hi) = (u as isize - len as isize + 1, (u + len - 1) as isize);
        let mut best: Option<usize> = None;
        for j in lo.max(0)..=hi.min((n - len) as isize) {
            let j = j as usize;
            if best.is_none_or(|b| sum(j) > sum(b)) {
                best = Some(j);
            }
        }
        let best = best.unwrap();
        assert_eq!(locate_window(&q, len, u).unwrap(), best, "q={q:?} len={len} u={u}");
    }
}

//! Smoothing of the list-level and phrase-level correlations before they are
//! intersected.
//!
//! * `triangular_smooth` convolves the list-level sequence with the kernel
//!   `[(1 - ω) / 2, ω, (1 - ω) / 2]` using replicate padding.
//! * `guided_phrase_smooth` estimates the biasing-phrase length from the
//!   smoothed list-level mass, finds for every step the best-scoring window of
//!   that length, and replaces the phrase row by `tanh` of the phrase scores
//!   summed over that window.
//!
//! Window starts are always restricted to valid starts `0..=U - L'`, so the
//! box sums never read past either end of the sequence.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SmoothingParams {
    pub omega: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self { omega: 0.6 }
    }
}

impl SmoothingParams {
    pub fn new(omega: f64) -> Result<Self> {
        let p = Self { omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.omega) {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "omega",
                reason: "must lie in [0, 1]",
            })
        }
    }
}

pub fn triangular_smooth(q_list: &[f64], p: SmoothingParams) -> Vec<f64> {
    let n = q_list.len();
    let side = (1.0 - p.omega) / 2.0;
    (0..n)
        .map(|u| {
            let left = q_list[u.saturating_sub(1)];
            let right = q_list[(u + 1).min(n - 1)];
            let v = side * left + p.omega * q_list[u] + side * right;
            v.clamp(0.0, 1.0)
        })
        .collect()
}

/// `round(sum(q_slist))` with round-half-up, clamped to `[1, U]`.
pub fn estimate_phrase_length(q_slist: &[f64]) -> usize {
    let total: f64 = q_slist.iter().sum();
    let rounded = libm::floor(total + 0.5);
    let len = if rounded.is_finite() && rounded > 0.0 {
        rounded as usize
    } else {
        0
    };
    len.clamp(1, q_slist.len().max(1))
}

/// Sums of `len` consecutive values for every valid start.
fn box_sums(values: &[f64], len: usize) -> Vec<f64> {
    if len == 0 || len > values.len() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - len + 1);
    let mut acc: f64 = values[..len].iter().sum();
    out.push(acc);
    for j in 1..=values.len() - len {
        acc += values[j + len - 1] - values[j - 1];
        out.push(acc);
    }
    out
}

fn best_start(sums: &[f64], u: usize, len: usize) -> usize {
    let lo = (u + 1).saturating_sub(len);
    let hi = (u + len - 1).min(sums.len() - 1);
    let mut best = lo;
    for j in lo + 1..=hi {
        if sums[j] > sums[best] {
            best = j;
        }
    }
    best
}

/// Start of the length-`len` window with the largest list-level mass among
/// starts in `[u - len + 1, u + len - 1]`; ties resolve to the smallest start.
pub fn locate_window(q_list: &[f64], len: usize, u: usize) -> Result<usize> {
    if len == 0 || len > q_list.len() {
        return Err(Error::InvalidParameter {
            name: "len",
            reason: "window length must lie in [1, U]",
        });
    }
    if u >= q_list.len() {
        return Err(Error::Shape {
            context: "locate_window step",
            expected: q_list.len(),
            actual: u,
        });
    }
    Ok(best_start(&box_sums(q_list, len), u, len))
}

pub fn guided_phrase_smooth(q_phr: &Matrix, q_list: &[f64], q_slist: &[f64]) -> Result<Matrix> {
    let steps = q_phr.rows();
    if q_list.len() != steps || q_slist.len() != steps {
        return Err(Error::Shape {
            context: "guided_phrase_smooth steps",
            expected: steps,
            actual: if q_list.len() != steps {
                q_list.len()
            } else {
                q_slist.len()
            },
        });
    }
    let cols = q_phr.cols();
    if steps == 0 {
        return Ok(Matrix::zeros(0, cols));
    }
    let len = estimate_phrase_length(q_slist);
    let list_sums = box_sums(q_list, len);

    // Box sums of every phrase column over each valid window start.
    let starts = steps - len + 1;
    let mut windows = Matrix::zeros(starts, cols);
    let mut acc = vec![0.0; cols];
    for u in 0..len {
        for (a, &x) in acc.iter_mut().zip(q_phr.row(u)) {
            *a += x;
        }
    }
    windows.row_mut(0).copy_from_slice(&acc);
    for j in 1..starts {
        let (add, sub) = (q_phr.row(j + len - 1), q_phr.row(j - 1));
        for ((a, &x), &y) in acc.iter_mut().zip(add).zip(sub) {
            *a += x - y;
        }
        windows.row_mut(j).copy_from_slice(&acc);
    }

    let mut out = Matrix::zeros(steps, cols);
    for u in 0..steps {
        let j = best_start(&list_sums, u, len);
        for (o, &s) in out.row_mut(u).iter_mut().zip(windows.row(j)) {
            // Running sums can drift a hair below zero on all-zero columns.
            *o = libm::tanh(s.max(0.0));
        }
    }
    Ok(out)
}

//! Training losses of the correlation predictor, written as plain functions
//! of the scores together with their closed-form gradients.
//!
//! All losses are sums over steps or phrases, never means.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

/// Floor (and `1 - EPS` ceiling) applied before every logarithm.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            gamma: 2.0,
        }
    }
}

impl FocalParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let p = Self { alpha, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "must lie in (0, 1)",
            });
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "must be non-negative",
            });
        }
        Ok(())
    }
}

fn same_len(context: &'static str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected: a,
            actual: b,
        })
    }
}

#[inline]
fn clamp_prob(q: f64) -> f64 {
    q.clamp(EPS, 1.0 - EPS)
}

/// Binary focal loss over list-level predictions `q` with labels `y`.
pub fn focal_loss(q: &[f64], y: &[u8], p: FocalParams) -> Result<f64> {
    same_len("focal_loss", q.len(), y.len())?;
    Ok(q
        .iter()
        .zip(y)
        .map(|(&q, &y)| {
            let y = f64::from(y);
            let q = clamp_prob(q);
            let tau = q * y + (1.0 - q) * (1.0 - y);
            let theta = p.alpha * y + (1.0 - p.alpha) * (1.0 - y);
            -theta * libm::pow(1.0 - tau, p.gamma) * libm::log(tau)
        })
        .sum())
}

/// d focal_loss / d q, valid away from the clamp boundaries.
pub fn focal_grad(q: &[f64], y: &[u8], p: FocalParams) -> Result<Vec<f64>> {
    same_len("focal_grad", q.len(), y.len())?;
    Ok(q
        .iter()
        .zip(y)
        .map(|(&q, &y)| {
            let y = f64::from(y);
            let q = clamp_prob(q);
            let tau = q * y + (1.0 - q) * (1.0 - y);
            let theta = p.alpha * y + (1.0 - p.alpha) * (1.0 - y);
            let one_minus = 1.0 - tau;
            let modulating = if p.gamma == 0.0 {
                0.0
            } else {
                p.gamma * libm::pow(one_minus, p.gamma - 1.0) * libm::log(tau)
            };
            let d_tau = -theta * (libm::pow(one_minus, p.gamma) / tau - modulating);
            d_tau * (2.0 * y - 1.0)
        })
        .collect())
}

/// Sum of the biased embeddings over steps flagged in `y_list`.
pub fn phrase_pool(e_bias: &Matrix, y_list: &[u8]) -> Result<Vec<f64>> {
    same_len("phrase_pool", e_bias.rows(), y_list.len())?;
    let mut out = vec![0.0; e_bias.cols()];
    for (u, &y) in y_list.iter().enumerate() {
        if y != 0 {
            let w = f64::from(y);
            for (o, &x) in out.iter_mut().zip(e_bias.row(u)) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

pub fn cosine_sims(e: &[f64], e_phr: &Matrix) -> Result<Vec<f64>> {
    same_len("cosine_sims", e_phr.cols(), e.len())?;
    let ne = norm(e);
    if ne == 0.0 {
        return Err(Error::ZeroNorm("pooled embedding"));
    }
    e_phr
        .iter_rows()
        .map(|r| {
            let nr = norm(r);
            if nr == 0.0 {
                Err(Error::ZeroNorm("phrase embedding"))
            } else {
                Ok((dot(e, r) / (ne * nr)).clamp(-1.0, 1.0))
            }
        })
        .collect()
}

/// Pulls the target phrase similarity up and pushes every other one down.
pub fn contrastive_loss(s: &[f64], y_phr: &[u8]) -> Result<f64> {
    same_len("contrastive_loss", s.len(), y_phr.len())?;
    Ok(s
        .iter()
        .zip(y_phr)
        .map(|(&s, &y)| {
            let y = f64::from(y);
            -s * y + s * (1.0 - y)
        })
        .sum())
}

pub fn contrastive_grad(s: &[f64], y_phr: &[u8]) -> Result<Vec<f64>> {
    same_len("contrastive_grad", s.len(), y_phr.len())?;
    Ok(y_phr.iter().map(|&y| 1.0 - 2.0 * f64::from(y)).collect())
}

/// Cross-entropy of token distributions against reference token indices.
pub fn token_ce(q_tok: &Matrix, y: &[usize]) -> Result<f64> {
    same_len("token_ce", q_tok.rows(), y.len())?;
    let mut total = 0.0;
    for (u, &t) in y.iter().enumerate() {
        if t >= q_tok.cols() {
            return Err(Error::TokenOutOfRange {
                index: t,
                size: q_tok.cols(),
            });
        }
        total -= libm::log(q_tok.get(u, t).max(EPS));
    }
    Ok(total)
}

/// Gradient of [`token_ce`] with respect to every entry of `q_tok`.
pub fn token_ce_grad(q_tok: &Matrix, y: &[usize]) -> Result<Matrix> {
    same_len("token_ce_grad", q_tok.rows(), y.len())?;
    let mut g = Matrix::zeros(q_tok.rows(), q_tok.cols());
    for (u, &t) in y.iter().enumerate() {
        if t >= q_tok.cols() {
            return Err(Error::TokenOutOfRange {
                index: t,
                size: q_tok.cols(),
            });
        }
        let q = q_tok.get(u, t);
        if q > EPS {
            g.set(u, t, -1.0 / q);
        }
    }
    Ok(g)
}

pub fn total_loss(l_list: f64, l_phr: f64, l_tok: f64) -> f64 {
    l_list + l_phr + l_tok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_hand_value() {
        let l = focal_loss(&[0.5], &[1], FocalParams::default()).unwrap();
        let expected = 0.75 * 0.25 * core::f64::consts::LN_2;
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.12996).abs() < 1e-5);
    }

    #[test]
    fn focal_perfect_prediction_vanishes() {
        let p = FocalParams::default();
        let mut prev = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3, 1e-5] {
            let l = focal_loss(&[1.0 - eps, eps], &[1, 0], p).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn focal_params_validated() {
        assert!(FocalParams::new(0.0, 2.0).is_err());
        assert!(FocalParams::new(0.5, -1.0).is_err());
        assert!(FocalParams::new(0.5, 0.0).is_ok());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(focal_loss(&[0.5], &[1, 0], FocalParams::default()).is_err());
        assert!(contrastive_loss(&[0.5], &[]).is_err());
        assert!(phrase_pool(&Matrix::zeros(2, 3), &[1]).is_err());
    }

    #[test]
    fn phrase_pool_cases() {
        let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(phrase_pool(&e, &[0, 0, 0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(phrase_pool(&e, &[0, 0, 1]).unwrap(), vec![5.0, 6.0]);
    }

    #[test]
    fn cosine_cases() {
        let phr = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let s = cosine_sims(&[5.0, 0.0], &phr).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        assert!(cosine_sims(&[0.0, 0.0], &phr).is_err());
        let zero_row = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(cosine_sims(&[1.0, 0.0], &zero_row).is_err());
    }

    #[test]
    fn contrastive_cases() {
        assert_eq!(contrastive_loss(&[1.0, 0.0, 0.0], &[1, 0, 0]).unwrap(), -1.0);
        assert_eq!(contrastive_loss(&[0.5, 0.5], &[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn token_ce_cases() {
        let one_hot = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(token_ce(&one_hot, &[1, 0]).unwrap(), 0.0);
        let uniform = Matrix::filled(3, 10, 0.1);
        let l = token_ce(&uniform, &[0, 4, 9]).unwrap();
        assert!((l - 3.0 * libm::log(10.0)).abs() < 1e-12);
        assert!((l - 6.9078).abs() < 1e-4);
        assert!(matches!(
            token_ce(&uniform, &[0, 4, 10]),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn total_is_unweighted_sum() {
        assert_eq!(total_loss(0.0, 0.0, 0.0), 0.0);
        assert_eq!(total_loss(1.0, 2.0, 3.0), 6.0);
    }
}

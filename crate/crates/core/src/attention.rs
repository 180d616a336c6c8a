//! Scaled dot-product cross-attention between acoustic embeddings (queries)
//! and phrase embeddings (keys and values).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, softmax_in_place, Matrix};

/// Pairwise scores `<e_acou[u], e_phr[m]> / sqrt(d)`.
pub fn corr_scores(e_acou: &Matrix, e_phr: &Matrix) -> Result<Matrix> {
    if e_acou.cols() != e_phr.cols() {
        return Err(Error::Shape {
            context: "corr_scores embedding dim",
            expected: e_acou.cols(),
            actual: e_phr.cols(),
        });
    }
    let scale = 1.0 / libm::sqrt(e_acou.cols() as f64);
    let mut out = Matrix::zeros(e_acou.rows(), e_phr.rows());
    for u in 0..e_acou.rows() {
        let q = e_acou.row(u);
        for m in 0..e_phr.rows() {
            out.set(u, m, dot(q, e_phr.row(m)) * scale);
        }
    }
    Ok(out)
}

/// Attention weights indexed `[u][m][head]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    steps: usize,
    phrases: usize,
    heads: usize,
    data: Vec<f64>,
}

impl HeadWeights {
    pub fn zeros(steps: usize, phrases: usize, heads: usize) -> Self {
        Self {
            steps,
            phrases,
            heads,
            data: vec![0.0; steps * phrases * heads],
        }
    }

    pub fn from_vec(steps: usize, phrases: usize, heads: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != steps * phrases * heads {
            return Err(Error::Shape {
                context: "HeadWeights::from_vec",
                expected: steps * phrases * heads,
                actual: data.len(),
            });
        }
        Ok(Self {
            steps,
            phrases,
            heads,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.steps, self.phrases, self.heads)
    }

    #[inline]
    pub fn get(&self, u: usize, m: usize, n: usize) -> f64 {
        self.data[(u * self.phrases + m) * self.heads + n]
    }

    #[inline]
    pub fn set(&mut self, u: usize, m: usize, n: usize, value: f64) {
        self.data[(u * self.phrases + m) * self.heads + n] = value;
    }
}

/// Optional d×d query/key/value projections; `None` means identity.
#[derive(Debug, Clone, Default)]
pub struct Projections {
    pub query: Option<Matrix>,
    pub key: Option<Matrix>,
    pub value: Option<Matrix>,
}

fn project(x: &Matrix, w: Option<&Matrix>) -> Result<Matrix> {
    let Some(w) = w else {
        return Ok(x.clone());
    };
    if w.rows() != x.cols() {
        return Err(Error::Shape {
            context: "projection rows",
            expected: x.cols(),
            actual: w.rows(),
        });
    }
    let mut out = Matrix::zeros(x.rows(), w.cols());
    for r in 0..x.rows() {
        let xr = x.row(r);
        let dst = out.row_mut(r);
        for (k, &xv) in xr.iter().enumerate() {
            for (d, &wv) in dst.iter_mut().zip(w.row(k)) {
                *d += xv * wv;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub weights: HeadWeights,
    pub e_bias: Matrix,
    pub e_comp: Matrix,
}

/// Multi-head cross-attention. Each head attends on its own contiguous
/// `d / n_heads` slice of the projected embeddings; head outputs are
/// concatenated back to width d. `e_comp = e_bias + e_acou`.
pub fn cross_attention(
    e_acou: &Matrix,
    e_phr: &Matrix,
    n_heads: usize,
    proj: &Projections,
) -> Result<AttentionOutput> {
    let d = e_acou.cols();
    if e_phr.cols() != d {
        return Err(Error::Shape {
            context: "cross_attention embedding dim",
            expected: d,
            actual: e_phr.cols(),
        });
    }
    if n_heads == 0 || !d.is_multiple_of(n_heads) {
        return Err(Error::InvalidParameter {
            name: "n_heads",
            reason: "embedding dim must be divisible by the head count",
        });
    }
    let q = project(e_acou, proj.query.as_ref())?;
    let k = project(e_phr, proj.key.as_ref())?;
    let v = project(e_phr, proj.value.as_ref())?;
    if q.cols() != d || k.cols() != d || v.cols() != d {
        return Err(Error::Shape {
            context: "projection output dim",
            expected: d,
            actual: q.cols().min(k.cols()).min(v.cols()),
        });
    }
    let (steps, phrases) = (e_acou.rows(), e_phr.rows());
    let width = d / n_heads;
    let scale = 1.0 / libm::sqrt(width as f64);
    let mut weights = HeadWeights::zeros(steps, phrases, n_heads);
    let mut e_bias = Matrix::zeros(steps, d);
    let mut row = vec![0.0; phrases];
    for u in 0..steps {
        for h in 0..n_heads {
            let span = h * width..(h + 1) * width;
            let qh = &q.row(u)[span.clone()];
            for (m, s) in row.iter_mut().enumerate() {
                *s = dot(qh, &k.row(m)[span.clone()]) * scale;
            }
            softmax_in_place(&mut row);
            let out = &mut e_bias.row_mut(u)[span.clone()];
            for (m, &w) in row.iter().enumerate() {
                weights.set(u, m, h, w);
                for (o, &x) in out.iter_mut().zip(&v.row(m)[span.clone()]) {
                    *o += w * x;
                }
            }
        }
    }
    let mut e_comp = e_bias.clone();
    for u in 0..steps {
        for (c, &a) in e_comp.row_mut(u).iter_mut().zip(e_acou.row(u)) {
            *c += a;
        }
    }
    Ok(AttentionOutput {
        weights,
        e_bias,
        e_comp,
    })
}

/// Phrase-level correlation: the maximum attention weight over heads.
pub fn phrase_corr_from_heads(weights: &HeadWeights) -> Matrix {
    let (steps, phrases, heads) = weights.dims();
    let mut out = Matrix::zeros(steps, phrases);
    for u in 0..steps {
        for m in 0..phrases {
            let best = (0..heads)
                .map(|n| weights.get(u, m, n))
                .fold(f64::NEG_INFINITY, f64::max);
            out.set(u, m, if heads == 0 { 0.0 } else { best });
        }
    }
    out
}

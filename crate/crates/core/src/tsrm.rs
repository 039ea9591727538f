//! Text-guided semantic enhancement of per-frame object embeddings.
//!
//! A guide vector is pooled from the sentence encoder's hidden states and
//! concatenated onto every object embedding; the fused vectors act as keys
//! and values of a single-head scaled dot-product attention whose queries
//! come from the raw object embeddings. The attended mixture is added back
//! residually, so every object embedding ends up conditioned on both the
//! sentence and the other objects in the frame.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::ops::{softmax, softmax_backward};
use crate::text::encoder::{AttentionPool, PoolTape};
use crate::{Real, RealMatrix, RealVector};

/// Parameters of the relation stage. With embedding dimension `D` and
/// sentence hidden size `2H`, the fusion maps `D + 2H → D` and the three
/// attention projections are square (`d_k = D`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsrmParams {
    /// Pools encoder hidden states into the guide vector.
    pub guide: AttentionPool,
    /// Fusion of object embedding and guide vector, `D × (D + 2H)`.
    pub w_o: RealMatrix,
    /// Query projection from the raw object embedding, `D × D`.
    pub w_q: RealMatrix,
    /// Key projection from the fused vector, `D × D`.
    pub w_k: RealMatrix,
    /// Value projection from the fused vector, `D × D`.
    pub w_v: RealMatrix,
}

impl TsrmParams {
    pub fn zeros(embed_dim: usize, hidden_pair_dim: usize) -> Self {
        TsrmParams {
            guide: AttentionPool::zeros(hidden_pair_dim),
            w_o: Matrix::zeros(embed_dim, embed_dim + hidden_pair_dim),
            w_q: Matrix::zeros(embed_dim, embed_dim),
            w_k: Matrix::zeros(embed_dim, embed_dim),
            w_v: Matrix::zeros(embed_dim, embed_dim),
        }
    }

    pub fn init<R: Rng>(embed_dim: usize, hidden_pair_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(embed_dim, hidden_pair_dim);
        p.guide = AttentionPool::init(hidden_pair_dim, rng);
        for m in [&mut p.w_o, &mut p.w_q, &mut p.w_k, &mut p.w_v] {
            let bound = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
            for w in m.data_mut() {
                *w = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.embed_dim(), self.hidden_pair_dim())
    }

    pub fn embed_dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn hidden_pair_dim(&self) -> usize {
        self.w_o.cols() - self.embed_dim()
    }
}

/// Forward cache for [`tsrm_forward`].
#[derive(Debug, Clone)]
pub struct TsrmTape {
    f_v: Vec<RealVector>,
    guide: PoolTape,
    f_t: RealVector,
    f_o: Vec<RealVector>,
    q: Vec<RealVector>,
    k: Vec<RealVector>,
    v: Vec<RealVector>,
    /// Row-stochastic attention, `attn[i][j]` = weight of object `j` in
    /// object `i`'s mixture.
    pub attn: Vec<Vec<Real>>,
}

/// Enhances the frame's object embeddings with sentence-conditioned
/// attention over all objects. Errors when either input list is empty.
pub fn tsrm_forward(
    params: &TsrmParams,
    f_v: &[RealVector],
    hiddens: &[RealVector],
) -> Result<(Vec<RealVector>, TsrmTape)> {
    if f_v.is_empty() {
        return Err(Error::EmptyInput("tsrm_forward: no object embeddings"));
    }
    if hiddens.is_empty() {
        return Err(Error::EmptyInput("tsrm_forward: no encoder states"));
    }
    let dim = params.embed_dim();
    let (f_t, guide_tape) = params.guide.forward(hiddens)?;

    let mut f_o = Vec::with_capacity(f_v.len());
    let mut q = Vec::with_capacity(f_v.len());
    let mut k = Vec::with_capacity(f_v.len());
    let mut v = Vec::with_capacity(f_v.len());
    for emb in f_v {
        assert_eq!(emb.len(), dim, "tsrm_forward: embedding dim mismatch");
        let mut cat = emb.0.clone();
        cat.extend_from_slice(f_t.as_slice());
        let fused = params.w_o.matvec(&cat);
        q.push(params.w_q.matvec(&emb.0));
        k.push(params.w_k.matvec(&fused.0));
        v.push(params.w_v.matvec(&fused.0));
        f_o.push(fused);
    }

    let scale = 1.0 / (dim as Real).sqrt();
    let mut attn = Vec::with_capacity(f_v.len());
    let mut out = Vec::with_capacity(f_v.len());
    for (i, emb) in f_v.iter().enumerate() {
        let logits: Vec<Real> = k.iter().map(|kj| q[i].dot(kj) * scale).collect();
        let row = softmax(&logits)?;
        let mut mixed = emb.clone();
        for (a, vj) in row.iter().zip(&v) {
            for (m, &x) in mixed.as_mut_slice().iter_mut().zip(&vj.0) {
                *m += a * x;
            }
        }
        out.push(mixed);
        attn.push(row);
    }

    Ok((
        out,
        TsrmTape {
            f_v: f_v.to_vec(),
            guide: guide_tape,
            f_t,
            f_o,
            q,
            k,
            v,
            attn,
        },
    ))
}

/// Backward of [`tsrm_forward`]. Accumulates parameter gradients into
/// `grads` and returns the gradients with respect to the object embeddings
/// and the encoder hidden states.
pub fn tsrm_backward(
    params: &TsrmParams,
    tape: &TsrmTape,
    d_out: &[RealVector],
    grads: &mut TsrmParams,
) -> (Vec<RealVector>, Vec<RealVector>) {
    let n = tape.f_v.len();
    assert_eq!(d_out.len(), n, "tsrm_backward: output count mismatch");
    let dim = params.embed_dim();
    let scale = 1.0 / (dim as Real).sqrt();

    // residual path
    let mut d_f_v: Vec<RealVector> = d_out.to_vec();
    let mut d_q = vec![Vector::zeros(dim); n];
    let mut d_k = vec![Vector::zeros(dim); n];
    let mut d_v = vec![Vector::zeros(dim); n];

    // mixture out_i = f_v_i + Σ_j attn[i][j] · v_j
    for i in 0..n {
        let d_attn: Vec<Real> = (0..n).map(|j| d_out[i].dot(&tape.v[j])).collect();
        for (j, a) in tape.attn[i].iter().enumerate() {
            for (dv, &g) in d_v[j].as_mut_slice().iter_mut().zip(&d_out[i].0) {
                *dv += a * g;
            }
        }
        // logits[i][j] = scale · q_i·k_j
        let d_logits = softmax_backward(&tape.attn[i], &d_attn);
        for (j, &dl) in d_logits.iter().enumerate() {
            let c = dl * scale;
            for (dq, &kx) in d_q[i].as_mut_slice().iter_mut().zip(&tape.k[j].0) {
                *dq += c * kx;
            }
            for (dk, &qx) in d_k[j].as_mut_slice().iter_mut().zip(&tape.q[i].0) {
                *dk += c * qx;
            }
        }
    }

    // projections off the fused vectors, then the fusion itself
    let mut d_f_t = Vector::zeros(tape.f_t.len());
    for j in 0..n {
        grads.w_q.add_outer(&d_q[j].0, &tape.f_v[j].0);
        d_f_v[j].add_assign(&params.w_q.matvec_transposed(&d_q[j].0));

        let mut d_fused = params.w_k.matvec_transposed(&d_k[j].0);
        d_fused.add_assign(&params.w_v.matvec_transposed(&d_v[j].0));
        grads.w_k.add_outer(&d_k[j].0, &tape.f_o[j].0);
        grads.w_v.add_outer(&d_v[j].0, &tape.f_o[j].0);

        let mut cat = tape.f_v[j].0.clone();
        cat.extend_from_slice(tape.f_t.as_slice());
        grads.w_o.add_outer(&d_fused.0, &cat);
        let d_cat = params.w_o.matvec_transposed(&d_fused.0);
        for (dst, &g) in d_f_v[j].as_mut_slice().iter_mut().zip(&d_cat.0[..dim]) {
            *dst += g;
        }
        for (dst, &g) in d_f_t.as_mut_slice().iter_mut().zip(&d_cat.0[dim..]) {
            *dst += g;
        }
    }

    let d_hiddens = params.guide.backward(&tape.guide, d_f_t.as_slice(), &mut grads.guide);
    (d_f_v, d_hiddens)
}

//! Bidirectional recurrent sentence encoder and self-guided attention
//! pooling.
//!
//! Each direction is a single Elman-style tanh cell; position `i`'s hidden
//! state is the concatenation of the forward and backward states, and only
//! the live (non-pad) tokens enter the recurrence. Pooling scores each
//! hidden state with a linear scorer, softmaxes the scores into attention
//! weights, and sums; the pooled vector then passes through an MLP to
//! produce the sentence embedding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::mlp::{Linear, Mlp, MlpTape};
use crate::ops::{softmax, softmax_backward};
use crate::text::vocab::TokenSequence;
use crate::{Real, RealMatrix, RealVector};

/// One recurrent direction: `h_t = tanh(W_in x_t + W_h h_{t−1} + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnCell {
    pub w_input: RealMatrix,
    pub w_hidden: RealMatrix,
    pub bias: RealVector,
}

impl RnnCell {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        RnnCell {
            w_input: Matrix::zeros(hidden, input),
            w_hidden: Matrix::zeros(hidden, hidden),
            bias: Vector::zeros(hidden),
        }
    }

    pub fn init<R: Rng>(hidden: usize, input: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(hidden, input);
        let bi = (6.0 / (input + hidden) as f64).sqrt();
        for w in cell.w_input.data_mut() {
            *w = rng.gen_range(-bi..bi);
        }
        let bh = (6.0 / (2 * hidden) as f64).sqrt();
        for w in cell.w_hidden.data_mut() {
            *w = rng.gen_range(-bh..bh);
        }
        cell
    }

    pub fn hidden_dim(&self) -> usize {
        self.bias.len()
    }

    fn step(&self, x: &[Real], h_prev: &[Real]) -> RealVector {
        let mut z = self.w_input.matvec(x);
        let rec = self.w_hidden.matvec(h_prev);
        z.add_assign(&rec);
        z.add_assign(&self.bias);
        Vector(z.0.into_iter().map(f64::tanh).collect())
    }
}

/// Linear scorer + softmax + weighted sum over a set of vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionPool {
    pub scorer: Linear<Real>,
}

/// Forward cache for [`AttentionPool`]: the inputs and their weights.
#[derive(Debug, Clone)]
pub struct PoolTape {
    inputs: Vec<RealVector>,
    pub alpha: Vec<Real>,
}

impl AttentionPool {
    pub fn zeros(dim: usize) -> Self {
        AttentionPool {
            scorer: Linear::zeros(1, dim),
        }
    }

    pub fn init<R: Rng>(dim: usize, rng: &mut R) -> Self {
        AttentionPool {
            scorer: Linear::init(1, dim, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        AttentionPool {
            scorer: Linear::zeros(1, self.scorer.in_dim()),
        }
    }

    /// Pools ≥1 vectors into one: `Σ_i softmax(score(x_i))_i · x_i`.
    pub fn forward(&self, inputs: &[RealVector]) -> Result<(RealVector, PoolTape)> {
        let logits: Vec<Real> = inputs.iter().map(|x| self.scorer.forward(&x.0)[0]).collect();
        let alpha = softmax(&logits)?;
        let dim = inputs[0].len();
        let mut pooled = Vector::zeros(dim);
        for (a, x) in alpha.iter().zip(inputs) {
            for (p, &v) in pooled.as_mut_slice().iter_mut().zip(&x.0) {
                *p += a * v;
            }
        }
        Ok((
            pooled,
            PoolTape {
                inputs: inputs.to_vec(),
                alpha,
            },
        ))
    }

    /// Accumulates scorer gradients into `grads` and returns the gradient
    /// with respect to each pooled input.
    pub fn backward(
        &self,
        tape: &PoolTape,
        d_pooled: &[Real],
        grads: &mut AttentionPool,
    ) -> Vec<RealVector> {
        let n = tape.inputs.len();
        // pooled = Σ α_i x_i: direct path into each input...
        let mut d_inputs: Vec<RealVector> = tape
            .inputs
            .iter()
            .zip(&tape.alpha)
            .map(|(_, &a)| Vector(d_pooled.iter().map(|&g| a * g).collect()))
            .collect();
        // ...and the attention path: dα_i = x_i · d_pooled
        let d_alpha: Vec<Real> = tape
            .inputs
            .iter()
            .map(|x| x.0.iter().zip(d_pooled).map(|(&v, &g)| v * g).sum())
            .collect();
        let d_logits = softmax_backward(&tape.alpha, &d_alpha);
        for i in 0..n {
            let dx = self
                .scorer
                .backward(&tape.inputs[i].0, &[d_logits[i]], &mut grads.scorer);
            d_inputs[i].add_assign(&dx);
        }
        d_inputs
    }
}

/// All trainable parameters of the sentence side: embedding table, the two
/// recurrent cells, and the pooling head that produces the sentence
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// One row per vocabulary entry.
    pub embedding: RealMatrix,
    pub fwd: RnnCell,
    pub bwd: RnnCell,
    /// Attention scorer over the concatenated hidden states.
    pub pool: AttentionPool,
    /// Projects the pooled vector into the shared embedding space.
    pub pool_mlp: Mlp<Real>,
}

impl EncoderParams {
    pub fn zeros(vocab_size: usize, word_dim: usize, hidden: usize, embed_dim: usize) -> Self {
        EncoderParams {
            embedding: Matrix::zeros(vocab_size, word_dim),
            fwd: RnnCell::zeros(hidden, word_dim),
            bwd: RnnCell::zeros(hidden, word_dim),
            pool: AttentionPool::zeros(2 * hidden),
            pool_mlp: Mlp::zeros(&[2 * hidden, embed_dim, embed_dim]),
        }
    }

    pub fn init<R: Rng>(
        vocab_size: usize,
        word_dim: usize,
        hidden: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut embedding = Matrix::zeros(vocab_size, word_dim);
        for w in embedding.data_mut() {
            *w = rng.gen_range(-0.1..0.1);
        }
        EncoderParams {
            embedding,
            fwd: RnnCell::init(hidden, word_dim, rng),
            bwd: RnnCell::init(hidden, word_dim, rng),
            pool: AttentionPool::init(2 * hidden, rng),
            pool_mlp: Mlp::init(&[2 * hidden, embed_dim, embed_dim], rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            fwd: RnnCell::zeros(self.fwd.hidden_dim(), self.fwd.w_input.cols()),
            bwd: RnnCell::zeros(self.bwd.hidden_dim(), self.bwd.w_input.cols()),
            pool: self.pool.zeros_like(),
            pool_mlp: self.pool_mlp.zeros_like(),
        }
    }

    pub fn hidden_pair_dim(&self) -> usize {
        self.fwd.hidden_dim() + self.bwd.hidden_dim()
    }
}

/// Forward cache for [`encode_sequence`]: the live token ids and both
/// directions' states, enough to replay the recurrence in reverse.
#[derive(Debug, Clone)]
pub struct EncoderTape {
    ids: Vec<u32>,
    fwd_states: Vec<RealVector>,
    bwd_states: Vec<RealVector>,
}

/// Runs both recurrent directions over the live tokens and concatenates
/// per-position states. Padding never enters the recurrence, so the output
/// depends only on the first `seq.len()` ids.
pub fn encode_sequence(
    params: &EncoderParams,
    seq: &TokenSequence,
) -> (Vec<RealVector>, EncoderTape) {
    let ids = seq.active();
    let n = ids.len();
    let h = params.fwd.hidden_dim();

    let mut fwd_states: Vec<RealVector> = Vec::with_capacity(n);
    let mut prev = Vector::zeros(h);
    for &id in ids {
        let x = params.embedding.row(id as usize);
        let state = params.fwd.step(x, &prev.0);
        fwd_states.push(state.clone());
        prev = state;
    }

    let mut bwd_states: Vec<RealVector> = vec![Vector::zeros(0); n];
    let mut prev = Vector::zeros(params.bwd.hidden_dim());
    for i in (0..n).rev() {
        let x = params.embedding.row(ids[i] as usize);
        let state = params.bwd.step(x, &prev.0);
        bwd_states[i] = state.clone();
        prev = state;
    }

    let hiddens = (0..n)
        .map(|i| {
            let mut v = fwd_states[i].0.clone();
            v.extend_from_slice(&bwd_states[i].0);
            Vector(v)
        })
        .collect();
    (
        hiddens,
        EncoderTape {
            ids: ids.to_vec(),
            fwd_states,
            bwd_states,
        },
    )
}

/// Backpropagates per-position hidden-state gradients through both
/// recurrences and the embedding lookup, accumulating into `grads`.
pub fn encoder_backward(
    params: &EncoderParams,
    tape: &EncoderTape,
    d_hiddens: &[RealVector],
    grads: &mut EncoderParams,
) {
    let n = tape.ids.len();
    assert_eq!(d_hiddens.len(), n, "encoder backward: tape/gradient mismatch");
    let h = params.fwd.hidden_dim();

    // forward direction: state i feeds state i+1, so walk back from the end
    let mut carry = vec![0.0; h];
    for i in (0..n).rev() {
        let mut dh: Vec<Real> = d_hiddens[i].0[..h].to_vec();
        for (d, &c) in dh.iter_mut().zip(&carry) {
            *d += c;
        }
        let state = &tape.fwd_states[i].0;
        let dz: Vec<Real> = dh
            .iter()
            .zip(state)
            .map(|(&d, &s)| d * (1.0 - s * s))
            .collect();
        let x = params.embedding.row(tape.ids[i] as usize);
        grads.fwd.w_input.add_outer(&dz, x);
        if i > 0 {
            grads.fwd.w_hidden.add_outer(&dz, &tape.fwd_states[i - 1].0);
        }
        for (gb, &d) in grads.fwd.bias.as_mut_slice().iter_mut().zip(&dz) {
            *gb += d;
        }
        let dx = params.fwd.w_input.matvec_transposed(&dz);
        let row = grads.embedding.row_mut(tape.ids[i] as usize);
        for (g, &d) in row.iter_mut().zip(&dx.0) {
            *g += d;
        }
        carry = params.fwd.w_hidden.matvec_transposed(&dz).0;
    }

    // backward direction: state i feeds state i−1, so walk forward
    let hb = params.bwd.hidden_dim();
    let mut carry = vec![0.0; hb];
    for i in 0..n {
        let mut dh: Vec<Real> = d_hiddens[i].0[h..].to_vec();
        for (d, &c) in dh.iter_mut().zip(&carry) {
            *d += c;
        }
        let state = &tape.bwd_states[i].0;
        let dz: Vec<Real> = dh
            .iter()
            .zip(state)
            .map(|(&d, &s)| d * (1.0 - s * s))
            .collect();
        let x = params.embedding.row(tape.ids[i] as usize);
        grads.bwd.w_input.add_outer(&dz, x);
        if i + 1 < n {
            grads.bwd.w_hidden.add_outer(&dz, &tape.bwd_states[i + 1].0);
        }
        for (gb, &d) in grads.bwd.bias.as_mut_slice().iter_mut().zip(&dz) {
            *gb += d;
        }
        let dx = params.bwd.w_input.matvec_transposed(&dz);
        let row = grads.embedding.row_mut(tape.ids[i] as usize);
        for (g, &d) in row.iter_mut().zip(&dx.0) {
            *g += d;
        }
        carry = params.bwd.w_hidden.matvec_transposed(&dz).0;
    }
}

/// Forward cache for [`self_guided_pool`].
#[derive(Debug, Clone)]
pub struct SelfPoolTape {
    pub pool: PoolTape,
    mlp: MlpTape<Real>,
}

/// The sentence embedding: attention-pool the hidden states, then project
/// through the pooling MLP.
pub fn self_guided_pool(
    params: &EncoderParams,
    hiddens: &[RealVector],
) -> Result<(RealVector, SelfPoolTape)> {
    let (pooled, pool_tape) = params.pool.forward(hiddens)?;
    let (out, mlp_tape) = params.pool_mlp.forward_tape(&pooled.0);
    Ok((
        out,
        SelfPoolTape {
            pool: pool_tape,
            mlp: mlp_tape,
        },
    ))
}

/// Backward of [`self_guided_pool`]; returns the gradient per hidden state.
pub fn self_guided_pool_backward(
    params: &EncoderParams,
    tape: &SelfPoolTape,
    d_out: &[Real],
    grads: &mut EncoderParams,
) -> Vec<RealVector> {
    let d_pooled = params
        .pool_mlp
        .backward(&tape.mlp, d_out, &mut grads.pool_mlp);
    params.pool.backward(&tape.pool, &d_pooled.0, &mut grads.pool)
}

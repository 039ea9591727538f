//! The full model: per-frame candidate embeddings on one side, a sentence
//! embedding on the other, joined by a temperature-scaled contrastive
//! score over each frame's candidates.
//!
//! Each candidate mask is embedded by masked max-pooling of backbone
//! features followed by a small MLP, optionally enhanced with its spatial
//! descriptor (a learned projection added residually) and with
//! sentence-conditioned attention over the frame's other candidates. The
//! referring loss for a frame is the negative log score of the candidate
//! linked to the referent; a sample's loss averages over its linked
//! frames.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::descriptor::{positional_descriptors, PositionalDescriptor};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::mask::BinaryMask;
use crate::mlp::{Mlp, MlpTape};
use crate::ops::{l2_normalize, l2_normalize_backward, softmax};
use crate::text::encoder::{
    encode_sequence, encoder_backward, self_guided_pool, self_guided_pool_backward, EncoderParams,
    EncoderTape, SelfPoolTape,
};
use crate::text::vocab::TokenSequence;
use crate::tsrm::{tsrm_backward, tsrm_forward, TsrmParams, TsrmTape};
use crate::visual::{
    apply_prm, backbone_features, masked_maxpool, maxpool_backbone_backward, prm_backward,
    BackboneParams, FeatureMap, Frame, MaxPoolTape,
};
use crate::{Real, RealMatrix, RealVector};

/// Floor applied inside the contrastive loss so the log never sees zero.
/// With unit-norm embeddings and the default temperature the smallest
/// possible score is far above this, so in practice the floor is inert.
pub const SCORE_FLOOR: Real = 1e-12;

/// Architecture hyperparameters. The two `use_*` switches disable the
/// spatial and relational enhancements for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Word embedding width.
    pub word_dim: usize,
    /// Hidden size of each recurrent direction (sentence states are twice
    /// this).
    pub rnn_hidden: usize,
    /// Backbone feature channels per pixel.
    pub feature_dim: usize,
    /// Shared embedding dimension of candidates and sentences.
    pub embed_dim: usize,
    /// Add the projected spatial descriptor to each candidate embedding.
    pub use_prm: bool,
    /// Run sentence-conditioned attention across the frame's candidates.
    pub use_tsrm: bool,
    /// Softmax temperature of the contrastive score.
    pub temperature: Real,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 32,
            rnn_hidden: 32,
            feature_dim: 16,
            embed_dim: 32,
            use_prm: true,
            use_tsrm: true,
            temperature: 0.1,
        }
    }
}

/// Every learnable tensor of the model plus the config it was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub backbone: BackboneParams,
    /// Maps the max-pooled feature vector into the embedding space.
    pub obj_mlp: Mlp<Real>,
    /// Projects the 10-entry spatial descriptor into the embedding space.
    pub w_p: RealMatrix,
    pub encoder: EncoderParams,
    pub tsrm: TsrmParams,
}

/// Expands to the canonical tensor enumeration. Shared by the `&`/`&mut`
/// visitors so optimizer slots and checkpoint entries always agree on
/// order and names.
macro_rules! for_each_tensor_body {
    ($self:ident, $f:ident, $data:ident, $slice:ident, $iter:ident) => {{
        $f("backbone.weight", $self.backbone.weight.$data());
        $f("backbone.bias", $self.backbone.bias.$slice());
        for (i, layer) in $self.obj_mlp.layers.$iter().enumerate() {
            $f(&format!("obj_mlp.{i}.weight"), layer.weight.$data());
            $f(&format!("obj_mlp.{i}.bias"), layer.bias.$slice());
        }
        $f("prm.weight", $self.w_p.$data());
        $f("encoder.embedding", $self.encoder.embedding.$data());
        $f("encoder.fwd.w_input", $self.encoder.fwd.w_input.$data());
        $f("encoder.fwd.w_hidden", $self.encoder.fwd.w_hidden.$data());
        $f("encoder.fwd.bias", $self.encoder.fwd.bias.$slice());
        $f("encoder.bwd.w_input", $self.encoder.bwd.w_input.$data());
        $f("encoder.bwd.w_hidden", $self.encoder.bwd.w_hidden.$data());
        $f("encoder.bwd.bias", $self.encoder.bwd.bias.$slice());
        $f("encoder.pool.weight", $self.encoder.pool.scorer.weight.$data());
        $f("encoder.pool.bias", $self.encoder.pool.scorer.bias.$slice());
        for (i, layer) in $self.encoder.pool_mlp.layers.$iter().enumerate() {
            $f(&format!("encoder.pool_mlp.{i}.weight"), layer.weight.$data());
            $f(&format!("encoder.pool_mlp.{i}.bias"), layer.bias.$slice());
        }
        $f("tsrm.guide.weight", $self.tsrm.guide.scorer.weight.$data());
        $f("tsrm.guide.bias", $self.tsrm.guide.scorer.bias.$slice());
        $f("tsrm.w_o", $self.tsrm.w_o.$data());
        $f("tsrm.w_q", $self.tsrm.w_q.$data());
        $f("tsrm.w_k", $self.tsrm.w_k.$data());
        $f("tsrm.w_v", $self.tsrm.w_v.$data());
    }};
}

impl ModelParams {
    /// Fresh randomly initialized model for a vocabulary of `vocab_size`
    /// tokens.
    pub fn init<R: Rng>(config: ModelConfig, vocab_size: usize, rng: &mut R) -> Self {
        let d = config.embed_dim;
        let pair = 2 * config.rnn_hidden;
        ModelParams {
            config,
            backbone: BackboneParams::init(config.feature_dim, rng),
            obj_mlp: Mlp::init(&[config.feature_dim, d, d], rng),
            w_p: {
                let mut m = Matrix::zeros(d, 10);
                let bound = (6.0 / (10 + d) as f64).sqrt();
                for w in m.data_mut() {
                    *w = rng.gen_range(-bound..bound);
                }
                m
            },
            encoder: EncoderParams::init(vocab_size, config.word_dim, config.rnn_hidden, d, rng),
            tsrm: TsrmParams::init(d, pair, rng),
        }
    }

    /// A same-shape model of zeros, for use as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            config: self.config,
            backbone: self.backbone.zeros_like(),
            obj_mlp: self.obj_mlp.zeros_like(),
            w_p: Matrix::zeros(self.w_p.rows(), self.w_p.cols()),
            encoder: self.encoder.zeros_like(),
            tsrm: self.tsrm.zeros_like(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.encoder.embedding.rows()
    }

    /// Visits every learnable tensor as `(name, values)` in a fixed,
    /// documented order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &[Real])) {
        for_each_tensor_body!(self, f, data, as_slice, iter);
    }

    /// Mutable variant of [`Self::for_each_tensor`]; enumeration order and
    /// names are identical.
    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut [Real])) {
        for_each_tensor_body!(self, f, data_mut, as_mut_slice, iter_mut);
    }

    /// Total number of learnable scalars.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, t| n += t.len());
        n
    }
}

/// One frame as the model consumes it: pixels, candidate masks, and (for
/// training) the index of the candidate linked to the referent.
#[derive(Debug, Clone)]
pub struct FrameInput {
    pub frame: Frame,
    pub candidates: Vec<BinaryMask>,
    /// Candidate index carrying the referring loss, if this frame has a
    /// usable link to the referent.
    pub target: Option<usize>,
}

/// One (video, query) training pair.
#[derive(Debug, Clone)]
pub struct SampleInput {
    pub frames: Vec<FrameInput>,
    pub query: TokenSequence,
}

/// Forward cache of one frame's candidate embeddings.
#[derive(Debug, Clone)]
pub struct FrameTape {
    features: FeatureMap,
    pools: Vec<MaxPoolTape>,
    mlps: Vec<MlpTape<Real>>,
    descriptors: Option<Vec<PositionalDescriptor>>,
    tsrm: Option<TsrmTape>,
    /// Final candidate embeddings, before normalization.
    pub embeddings: Vec<RealVector>,
}

/// Embeds every candidate of one frame. `hiddens` are the encoder states
/// of the query driving the relational stage (unused when it is disabled).
pub fn frame_forward(
    params: &ModelParams,
    frame: &Frame,
    candidates: &[BinaryMask],
    hiddens: &[RealVector],
) -> Result<(Vec<RealVector>, FrameTape)> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("frame_forward: no candidate masks"));
    }
    let features = backbone_features(frame, &params.backbone);
    let mut pools = Vec::with_capacity(candidates.len());
    let mut mlps = Vec::with_capacity(candidates.len());
    let mut embeddings = Vec::with_capacity(candidates.len());
    for mask in candidates {
        let (maxed, pool_tape) = masked_maxpool(&features, mask)?;
        let (v, mlp_tape) = params.obj_mlp.forward_tape(&maxed.0);
        pools.push(pool_tape);
        mlps.push(mlp_tape);
        embeddings.push(v);
    }

    let descriptors = if params.config.use_prm {
        let descs = positional_descriptors(candidates)?;
        for (v, d) in embeddings.iter_mut().zip(&descs) {
            *v = apply_prm(v, d, &params.w_p);
        }
        Some(descs)
    } else {
        None
    };

    let tsrm = if params.config.use_tsrm {
        let (out, tape) = tsrm_forward(&params.tsrm, &embeddings, hiddens)?;
        embeddings = out;
        Some(tape)
    } else {
        None
    };

    Ok((
        embeddings.clone(),
        FrameTape {
            features,
            pools,
            mlps,
            descriptors,
            tsrm,
            embeddings,
        },
    ))
}

/// Backward of [`frame_forward`]. Accumulates parameter gradients into
/// `grads` and returns this frame's gradient contribution to the encoder
/// hidden states (empty when the relational stage is disabled).
pub fn frame_backward(
    params: &ModelParams,
    frame: &Frame,
    tape: &FrameTape,
    d_embeddings: &[RealVector],
    grads: &mut ModelParams,
) -> Vec<RealVector> {
    let (mut d_pre, d_hiddens) = match &tape.tsrm {
        Some(t) => tsrm_backward(&params.tsrm, t, d_embeddings, &mut grads.tsrm),
        None => (d_embeddings.to_vec(), Vec::new()),
    };
    for (i, d_v) in d_pre.iter_mut().enumerate() {
        let d_mlp_out = match &tape.descriptors {
            Some(descs) => prm_backward(&descs[i], &d_v.0, &mut grads.w_p),
            None => d_v.clone(),
        };
        let d_maxed = params
            .obj_mlp
            .backward(&tape.mlps[i], &d_mlp_out.0, &mut grads.obj_mlp);
        maxpool_backbone_backward(
            frame,
            &tape.features,
            &tape.pools[i],
            &d_maxed.0,
            &mut grads.backbone,
        );
    }
    d_hiddens
}

/// Softmax over the candidates' scaled similarities to the sentence.
/// Both sides must be unit-norm (callers normalize; this is asserted).
pub fn contrastive_scores(
    object_norm: &[RealVector],
    sentence_norm: &RealVector,
    temperature: Real,
) -> Result<Vec<Real>> {
    assert!(temperature > 0.0, "contrastive_scores: temperature must be positive");
    for v in object_norm.iter().chain(std::iter::once(sentence_norm)) {
        debug_assert!(
            (v.norm() - 1.0).abs() < 1e-6,
            "contrastive_scores: inputs must be unit-norm"
        );
    }
    let logits: Vec<Real> = object_norm
        .iter()
        .map(|v| v.dot(sentence_norm) / temperature)
        .collect();
    softmax(&logits)
}

/// Negative log score of the target candidate, floored so a vanishing
/// score cannot produce an infinite loss.
pub fn contrastive_loss(scores: &[Real], target: usize) -> Real {
    -scores[target].max(SCORE_FLOOR).ln()
}

/// Per-frame part of the sample tape: everything needed to replay one
/// linked frame's loss backward.
#[derive(Debug, Clone)]
struct LossFrame {
    /// Index into `SampleInput::frames`.
    frame_idx: usize,
    tape: FrameTape,
    normalized: Vec<RealVector>,
    scores: Vec<Real>,
    target: usize,
}

/// Forward cache of one sample's loss.
#[derive(Debug, Clone)]
pub struct SampleTape {
    enc: EncoderTape,
    hiddens: Vec<RealVector>,
    sent_pool: SelfPoolTape,
    sentence: RealVector,
    sentence_norm: RealVector,
    frames: Vec<LossFrame>,
}

/// Mean referring loss over the sample's linked frames, with the tape
/// needed for [`sample_backward`]. Returns `None` when no frame carries a
/// target, in which case the sample contributes nothing to training.
pub fn sample_loss(
    params: &ModelParams,
    sample: &SampleInput,
) -> Result<Option<(Real, SampleTape)>> {
    if sample.frames.is_empty() {
        return Err(Error::EmptyInput("sample_loss: no frames"));
    }
    let (hiddens, enc) = encode_sequence(&params.encoder, &sample.query);
    let (sentence, sent_pool) = self_guided_pool(&params.encoder, &hiddens)?;
    let sentence_norm = Vector(l2_normalize(&sentence.0)?);

    let mut frames = Vec::new();
    let mut total = 0.0;
    for (frame_idx, f) in sample.frames.iter().enumerate() {
        let Some(target) = f.target else { continue };
        assert!(
            target < f.candidates.len(),
            "sample_loss: target out of range"
        );
        let (embeddings, tape) = frame_forward(params, &f.frame, &f.candidates, &hiddens)?;
        let normalized: Vec<RealVector> = embeddings
            .iter()
            .map(|v| l2_normalize(&v.0).map(Vector))
            .collect::<Result<_>>()?;
        let scores = contrastive_scores(&normalized, &sentence_norm, params.config.temperature)?;
        total += contrastive_loss(&scores, target);
        frames.push(LossFrame {
            frame_idx,
            tape,
            normalized,
            scores,
            target,
        });
    }
    if frames.is_empty() {
        return Ok(None);
    }
    let loss = total / frames.len() as Real;
    Ok(Some((
        loss,
        SampleTape {
            enc,
            hiddens,
            sent_pool,
            sentence,
            sentence_norm,
            frames,
        },
    )))
}

/// Backward of [`sample_loss`], accumulating into `grads`. Gradients flow
/// through scores, normalizations, candidate embeddings, the sentence
/// embedding, and the shared encoder states.
pub fn sample_backward(
    params: &ModelParams,
    sample: &SampleInput,
    tape: &SampleTape,
    grads: &mut ModelParams,
) {
    let tau = params.config.temperature;
    let weight = 1.0 / tape.frames.len() as Real;
    let mut d_sentence_norm = Vector::zeros(tape.sentence_norm.len());
    let mut d_hiddens: Vec<RealVector> = tape
        .hiddens
        .iter()
        .map(|h| Vector::zeros(h.len()))
        .collect();

    for lf in &tape.frames {
        // −ln softmax(logits)[target] gives dlogits = scores − onehot,
        // scaled by this frame's share of the mean. If the floor clipped
        // the score the loss is constant there and the gradient vanishes.
        if lf.scores[lf.target] <= SCORE_FLOOR {
            continue;
        }
        let mut d_logits = lf.scores.clone();
        d_logits[lf.target] -= 1.0;
        for g in &mut d_logits {
            *g *= weight;
        }

        // logits_i = v̂_i · ŝ / τ
        let mut d_norm: Vec<RealVector> = Vec::with_capacity(lf.normalized.len());
        for (i, v_hat) in lf.normalized.iter().enumerate() {
            let c = d_logits[i] / tau;
            d_norm.push(tape.sentence_norm.scale(c));
            for (ds, &x) in d_sentence_norm.as_mut_slice().iter_mut().zip(&v_hat.0) {
                *ds += c * x;
            }
        }

        // through each candidate's normalization, then the visual stack
        let d_embeddings: Vec<RealVector> = lf
            .tape
            .embeddings
            .iter()
            .zip(&d_norm)
            .map(|(v, g)| Vector(l2_normalize_backward(&v.0, &g.0)))
            .collect();
        let frame = &sample.frames[lf.frame_idx].frame;
        let dh = frame_backward(params, frame, &lf.tape, &d_embeddings, grads);
        for (acc, g) in d_hiddens.iter_mut().zip(&dh) {
            acc.add_assign(g);
        }
    }

    // sentence path: normalization, pooling head, then the encoder itself
    let d_sentence = l2_normalize_backward(&tape.sentence.0, &d_sentence_norm.0);
    let dh = self_guided_pool_backward(&params.encoder, &tape.sent_pool, &d_sentence, &mut grads.encoder);
    for (acc, g) in d_hiddens.iter_mut().zip(&dh) {
        acc.add_assign(g);
    }
    encoder_backward(&params.encoder, &tape.enc, &d_hiddens, &mut grads.encoder);
}

/// The unit-norm sentence embedding a query retrieves against.
pub fn sentence_embedding(params: &ModelParams, query: &TokenSequence) -> Result<RealVector> {
    let (hiddens, _) = encode_sequence(&params.encoder, query);
    let (sentence, _) = self_guided_pool(&params.encoder, &hiddens)?;
    Ok(Vector(l2_normalize(&sentence.0)?))
}

/// Inference output for one frame: unit-norm candidate embeddings and
/// their softmax scores against the query. Both lists are empty when the
/// frame had no candidates.
#[derive(Debug, Clone)]
pub struct FrameEmbeddings {
    pub embeddings: Vec<RealVector>,
    pub scores: Vec<Real>,
}

/// Runs the model over a full sample for inference, ignoring targets.
pub fn infer_sample(
    params: &ModelParams,
    frames: &[FrameInput],
    query: &TokenSequence,
) -> Result<Vec<FrameEmbeddings>> {
    let (hiddens, _) = encode_sequence(&params.encoder, query);
    let (sentence, _) = self_guided_pool(&params.encoder, &hiddens)?;
    let sentence_norm = Vector(l2_normalize(&sentence.0)?);

    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        if f.candidates.is_empty() {
            out.push(FrameEmbeddings {
                embeddings: Vec::new(),
                scores: Vec::new(),
            });
            continue;
        }
        let (embeddings, _) = frame_forward(params, &f.frame, &f.candidates, &hiddens)?;
        let normalized: Vec<RealVector> = embeddings
            .iter()
            .map(|v| l2_normalize(&v.0).map(Vector))
            .collect::<Result<_>>()?;
        let scores = contrastive_scores(&normalized, &sentence_norm, params.config.temperature)?;
        out.push(FrameEmbeddings {
            embeddings: normalized,
            scores,
        });
    }
    Ok(out)
}

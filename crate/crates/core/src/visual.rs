//! Visual side of the per-frame pipeline: input frames, the per-pixel
//! linear backbone, masked max-pooling of object features, and the
//! additive spatial enhancement of object embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::descriptor::PositionalDescriptor;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::mask::BinaryMask;
use crate::{Real, RealMatrix, RealVector};

/// Input channels per pixel: R, G, B plus the two normalized coordinate
/// channels.
pub const FRAME_CHANNELS: usize = 5;

/// A frame as the model sees it: per-pixel channel vectors, all in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: u32,
    height: u32,
    /// Pixel-major layout: `channels[pixel * FRAME_CHANNELS + c]`.
    channels: Vec<Real>,
}

impl Frame {
    /// Builds a frame from row-major RGB bytes; the coordinate channels
    /// are derived from pixel position (`x/(W−1)`, `y/(H−1)`).
    pub fn from_rgb(width: u32, height: u32, rgb: &[u8]) -> Self {
        let (w, h) = (width as usize, height as usize);
        assert_eq!(rgb.len(), w * h * 3, "from_rgb: byte count mismatch");
        let dx = (width - 1).max(1) as Real;
        let dy = (height - 1).max(1) as Real;
        let mut channels = Vec::with_capacity(w * h * FRAME_CHANNELS);
        for y in 0..h {
            for x in 0..w {
                let p = (y * w + x) * 3;
                channels.push(rgb[p] as Real / 255.0);
                channels.push(rgb[p + 1] as Real / 255.0);
                channels.push(rgb[p + 2] as Real / 255.0);
                channels.push(x as Real / dx);
                channels.push(y as Real / dy);
            }
        }
        Frame {
            width,
            height,
            channels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        (self.width as usize) * (self.height as usize)
    }

    /// The channel vector of one pixel (by row-major pixel index).
    pub fn pixel(&self, idx: usize) -> &[Real] {
        &self.channels[idx * FRAME_CHANNELS..(idx + 1) * FRAME_CHANNELS]
    }
}

/// The per-pixel linear + ReLU feature extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneParams {
    /// `feature_dim × FRAME_CHANNELS`.
    pub weight: RealMatrix,
    pub bias: RealVector,
}

impl BackboneParams {
    pub fn zeros(feature_dim: usize) -> Self {
        BackboneParams {
            weight: Matrix::zeros(feature_dim, FRAME_CHANNELS),
            bias: Vector::zeros(feature_dim),
        }
    }

    pub fn init<R: Rng>(feature_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(feature_dim);
        let bound = (6.0 / (FRAME_CHANNELS + feature_dim) as f64).sqrt();
        for w in p.weight.data_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.feature_dim())
    }

    pub fn feature_dim(&self) -> usize {
        self.bias.len()
    }
}

/// Dense per-pixel features of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: u32,
    height: u32,
    dim: usize,
    /// Pixel-major layout: `data[pixel * dim + d]`.
    data: Vec<Real>,
}

impl FeatureMap {
    pub fn from_data(width: u32, height: u32, dim: usize, data: Vec<Real>) -> Self {
        assert_eq!(
            data.len(),
            (width as usize) * (height as usize) * dim,
            "from_data: size mismatch"
        );
        FeatureMap {
            width,
            height,
            dim,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixel(&self, idx: usize) -> &[Real] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn pixel_mut(&mut self, idx: usize) -> &mut [Real] {
        &mut self.data[idx * self.dim..(idx + 1) * self.dim]
    }
}

/// Runs the backbone over every pixel: `ReLU(W · channels + b)`.
pub fn backbone_features(frame: &Frame, params: &BackboneParams) -> FeatureMap {
    let dim = params.feature_dim();
    let mut data = Vec::with_capacity(frame.pixel_count() * dim);
    for p in 0..frame.pixel_count() {
        let z = params.weight.matvec(frame.pixel(p));
        data.extend(
            z.0.iter()
                .zip(params.bias.as_slice())
                .map(|(&zv, &b)| (zv + b).max(0.0)),
        );
    }
    FeatureMap {
        width: frame.width(),
        height: frame.height(),
        dim,
        data,
    }
}

/// Which pixel supplied each channel's maximum, recorded by
/// [`masked_maxpool`] so the backward pass can route gradients.
#[derive(Debug, Clone)]
pub struct MaxPoolTape {
    /// Row-major pixel index per feature channel.
    pub argmax: Vec<usize>,
}

/// Channelwise maximum of the feature map over the mask's foreground
/// pixels. Under ties the first (lowest-index) pixel wins, making the
/// backward routing deterministic. Errors on an empty mask or a size
/// mismatch.
pub fn masked_maxpool(
    features: &FeatureMap,
    mask: &BinaryMask,
) -> Result<(RealVector, MaxPoolTape)> {
    if mask.width() != features.width || mask.height() != features.height {
        return Err(Error::MaskSizeMismatch {
            a_w: features.width,
            a_h: features.height,
            b_w: mask.width(),
            b_h: mask.height(),
        });
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask("masked_maxpool"));
    }
    let dim = features.dim;
    let mut best = vec![Real::NEG_INFINITY; dim];
    let mut argmax = vec![0usize; dim];

    // walk the run list to touch only foreground pixels
    let mut pos: usize = 0;
    let mut fg = false;
    for &run in mask.runs() {
        if fg {
            for p in pos..pos + run as usize {
                let feat = features.pixel(p);
                for (d, &f) in feat.iter().enumerate() {
                    if f > best[d] {
                        best[d] = f;
                        argmax[d] = p;
                    }
                }
            }
        }
        pos += run as usize;
        fg = !fg;
    }
    Ok((Vector(best), MaxPoolTape { argmax }))
}

/// Backward of `masked_maxpool ∘ backbone_features` for one candidate:
/// each channel's gradient lands on its recorded argmax pixel and flows
/// through that pixel's ReLU into the backbone parameters. The feature map
/// supplies the ReLU activation pattern; the frame supplies the inputs.
pub fn maxpool_backbone_backward(
    frame: &Frame,
    features: &FeatureMap,
    tape: &MaxPoolTape,
    d_pooled: &[Real],
    grads: &mut BackboneParams,
) {
    assert_eq!(d_pooled.len(), features.dim, "maxpool backward: dim mismatch");
    for (d, (&g, &p)) in d_pooled.iter().zip(&tape.argmax).enumerate() {
        // inactive ReLU (the masked maximum itself was clamped to 0)
        if features.pixel(p)[d] <= 0.0 {
            continue;
        }
        grads.bias[d] += g;
        for (w, &c) in grads.weight.row_mut(d).iter_mut().zip(frame.pixel(p)) {
            *w += g * c;
        }
    }
}

/// Spatially enhances an object embedding: `v + W_p · p`.
pub fn apply_prm(v: &RealVector, p: &PositionalDescriptor, w_p: &RealMatrix) -> RealVector {
    assert_eq!(w_p.cols(), 10, "apply_prm: projection must take 10 inputs");
    let mut out = w_p.matvec(&p.as_array());
    out.add_assign(v);
    out
}

/// Backward of [`apply_prm`]: the residual passes the gradient through to
/// `v` unchanged while the projection accumulates its outer product.
pub fn prm_backward(
    p: &PositionalDescriptor,
    d_out: &[Real],
    grads_w_p: &mut RealMatrix,
) -> RealVector {
    grads_w_p.add_outer(d_out, &p.as_array());
    Vector(d_out.to_vec())
}

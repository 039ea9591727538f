//! Segmentation metrics and the inference driver that produces the
//! predictions they score.
//!
//! Each annotated frame of each query is one scored sample: the predicted
//! mask against the referent's exact mask. Four metrics summarize a run —
//! overall IoU (total intersection over total union), mean IoU (every
//! sample weighs equally), precision at fixed thresholds, and the mean of
//! the precisions over thresholds 0.50 to 0.95 in steps of 0.05. A query
//! with no predicted mask in a frame scores zero intersection against the
//! full ground-truth area, so missing predictions are penalized rather
//! than ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::StoredDataset;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::pipeline::{infer_sample, sentence_embedding, FrameInput, ModelParams};
use crate::text::vocab::{tokenize, Vocabulary};
use crate::track::{
    score_track, score_track_max, select_track, update_tracks, ObjectCandidate, ScoreMode, Track,
    TrackerConfig,
};
use crate::train::{train_samples, TrainSample};
use crate::visual::Frame;
use crate::Real;

/// One scored frame: pixel counts of the prediction/ground-truth overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleResult {
    pub intersection: u64,
    pub union: u64,
}

impl SampleResult {
    pub fn new(intersection: u64, union: u64) -> Result<Self> {
        if intersection > union {
            return Err(Error::Config(format!(
                "sample result: intersection {intersection} exceeds union {union}"
            )));
        }
        Ok(SampleResult {
            intersection,
            union,
        })
    }

    /// Scores a predicted mask against the exact one; an absent
    /// prediction counts the whole ground truth as missed.
    pub fn from_masks(pred: Option<&BinaryMask>, gt: &BinaryMask) -> Result<Self> {
        match pred {
            None => SampleResult::new(0, gt.area() as u64),
            Some(p) => {
                let inter = p.intersection_area(gt)? as u64;
                let union = p.area() as u64 + gt.area() as u64 - inter;
                SampleResult::new(inter, union)
            }
        }
    }

    pub fn iou(&self) -> Real {
        if self.union == 0 {
            0.0
        } else {
            self.intersection as Real / self.union as Real
        }
    }
}

/// Total intersection over total union, the size-weighted aggregate.
pub fn overall_iou(results: &[SampleResult]) -> Result<Real> {
    if results.is_empty() {
        return Err(Error::EmptyInput("overall_iou"));
    }
    let inter: u64 = results.iter().map(|r| r.intersection).sum();
    let union: u64 = results.iter().map(|r| r.union).sum();
    if union == 0 {
        return Err(Error::Config(
            "overall_iou: every sample has an empty union".into(),
        ));
    }
    Ok(inter as Real / union as Real)
}

/// Unweighted mean of per-sample IoU.
pub fn mean_iou(results: &[SampleResult]) -> Result<Real> {
    if results.is_empty() {
        return Err(Error::EmptyInput("mean_iou"));
    }
    Ok(results.iter().map(SampleResult::iou).sum::<Real>() / results.len() as Real)
}

/// Fraction of samples whose IoU strictly exceeds `k`.
pub fn precision_at_k(results: &[SampleResult], k: Real) -> Result<Real> {
    if results.is_empty() {
        return Err(Error::EmptyInput("precision_at_k"));
    }
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::Config(format!(
            "precision threshold must lie strictly inside (0, 1), got {k}"
        )));
    }
    let hits = results.iter().filter(|r| r.iou() > k).count();
    Ok(hits as Real / results.len() as Real)
}

/// The ten thresholds 0.50, 0.55, …, 0.95.
pub fn map_thresholds() -> [Real; 10] {
    core::array::from_fn(|i| (50 + 5 * i) as Real / 100.0)
}

/// Mean precision over the 0.50–0.95 threshold ladder.
pub fn map_50_95(results: &[SampleResult]) -> Result<Real> {
    let thresholds = map_thresholds();
    let mut sum = 0.0;
    for &k in &thresholds {
        sum += precision_at_k(results, k)?;
    }
    Ok(sum / thresholds.len() as Real)
}

// ---------------------------------------------------------------------
// inference

/// How predictions are produced from candidate scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Pick the best-scoring candidate independently in every frame.
    PerFrame,
    /// Associate candidates into tracks across frames, then retrieve the
    /// best-scoring whole track.
    Track,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub tracker: TrackerConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: EvalMode::Track,
            tracker: TrackerConfig::default(),
        }
    }
}

/// One query's predictions: a mask per frame where one exists, and the
/// retrieval score of whatever was selected.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSample {
    pub masks: Vec<Option<BinaryMask>>,
    pub score: Real,
}

/// Runs the model on one sample and selects the referred object.
pub fn predict_sample(
    params: &ModelParams,
    vocab: &Vocabulary,
    sample: &TrainSample,
    cfg: &EvalConfig,
) -> Result<PredictedSample> {
    let query = tokenize(&sample.text, vocab)?;
    let inputs: Vec<FrameInput> = sample
        .frames
        .iter()
        .map(|f| FrameInput {
            frame: Frame::from_rgb(sample.width, sample.height, &f.rgb),
            candidates: f.candidates.clone(),
            target: None,
        })
        .collect();
    let per_frame = infer_sample(params, &inputs, &query)?;
    let sentence = sentence_embedding(params, &query)?;

    match cfg.mode {
        EvalMode::PerFrame => {
            let mut masks = Vec::with_capacity(per_frame.len());
            let mut cosine_sum = 0.0;
            let mut picked = 0usize;
            for (f, out) in sample.frames.iter().zip(&per_frame) {
                let best = out
                    .scores
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i);
                match best {
                    Some(i) => {
                        masks.push(Some(f.candidates[i].clone()));
                        cosine_sum += out.embeddings[i].dot(&sentence);
                        picked += 1;
                    }
                    None => masks.push(None),
                }
            }
            let score = if picked == 0 {
                -1.0
            } else {
                cosine_sum / picked as Real
            };
            Ok(PredictedSample { masks, score })
        }
        EvalMode::Track => {
            cfg.tracker.validate()?;
            let mut tracks: Vec<Track> = Vec::new();
            for (t, (f, out)) in sample.frames.iter().zip(&per_frame).enumerate() {
                let candidates: Vec<ObjectCandidate> = f
                    .candidates
                    .iter()
                    .zip(&out.embeddings)
                    .map(|(mask, emb)| ObjectCandidate {
                        mask: mask.clone(),
                        embedding: emb.clone(),
                    })
                    .collect();
                update_tracks(&mut tracks, &candidates, t, &cfg.tracker)?;
            }
            if tracks.is_empty() {
                // only possible when no frame had any candidate
                return Ok(PredictedSample {
                    masks: vec![None; sample.frames.len()],
                    score: -1.0,
                });
            }
            let best = select_track(&tracks, &sentence, cfg.tracker.score_mode)?;
            let score = match cfg.tracker.score_mode {
                ScoreMode::Mean => score_track(best, &sentence)?,
                ScoreMode::Max => score_track_max(best, &sentence)?,
            };
            let masks = (0..sample.frames.len())
                .map(|t| {
                    best.slot_at(t)
                        .map(|c| sample.frames[t].candidates[c].clone())
                })
                .collect();
            Ok(PredictedSample { masks, score })
        }
    }
}

// ---------------------------------------------------------------------
// dataset-level evaluation

/// Metrics for one slice of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    /// Scored frames in this slice.
    pub samples: usize,
    pub accuracy: Real,
    pub mean_iou: Real,
}

/// The full metric report: aggregate metrics plus a per-family breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub overall_iou: Real,
    pub mean_iou: Real,
    /// `(threshold, precision)` at 0.5 through 0.9.
    pub precision: Vec<(Real, Real)>,
    pub map_50_95: Real,
    /// Fraction of frames with IoU above 0.5 — the per-frame accuracy.
    pub accuracy: Real,
    pub per_family: BTreeMap<String, SliceReport>,
}

/// Evaluates a model over a dataset; also returns the raw predictions so
/// callers can store or render them.
pub fn evaluate(
    params: &ModelParams,
    vocab: &Vocabulary,
    dataset: &StoredDataset,
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<PredictedSample>)> {
    let samples = train_samples(dataset)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluate"));
    }
    let mut results = Vec::new();
    let mut by_family: BTreeMap<String, Vec<SampleResult>> = BTreeMap::new();
    let mut predictions = Vec::with_capacity(samples.len());
    for sample in &samples {
        let pred = predict_sample(params, vocab, sample, cfg)?;
        for (frame, mask) in sample.frames.iter().zip(&pred.masks) {
            if frame.gt_mask.is_empty() {
                continue; // nothing annotated in this frame
            }
            let r = SampleResult::from_masks(mask.as_ref(), &frame.gt_mask)?;
            results.push(r);
            by_family
                .entry(sample.family.name().to_string())
                .or_default()
                .push(r);
        }
        predictions.push(pred);
    }

    let mut per_family = BTreeMap::new();
    for (family, rs) in &by_family {
        per_family.insert(
            family.clone(),
            SliceReport {
                samples: rs.len(),
                accuracy: precision_at_k(rs, 0.5)?,
                mean_iou: mean_iou(rs)?,
            },
        );
    }
    let report = EvalReport {
        samples: results.len(),
        overall_iou: overall_iou(&results)?,
        mean_iou: mean_iou(&results)?,
        precision: [0.5, 0.6, 0.7, 0.8, 0.9]
            .iter()
            .map(|&k| precision_at_k(&results, k).map(|p| (k, p)))
            .collect::<Result<_>>()?,
        map_50_95: map_50_95(&results)?,
        accuracy: precision_at_k(&results, 0.5)?,
        per_family,
    };
    Ok((report, predictions))
}

/// Renders the report as stable `key = value` lines for logs and CI.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("samples = {}\n", report.samples));
    out.push_str(&format!("overall_iou = {}\n", report.overall_iou));
    out.push_str(&format!("mean_iou = {}\n", report.mean_iou));
    for (k, p) in &report.precision {
        out.push_str(&format!("precision_at_{k} = {p}\n"));
    }
    out.push_str(&format!("map_50_95 = {}\n", report.map_50_95));
    out.push_str(&format!("accuracy = {}\n", report.accuracy));
    for (family, slice) in &report.per_family {
        out.push_str(&format!("family.{family}.samples = {}\n", slice.samples));
        out.push_str(&format!("family.{family}.accuracy = {}\n", slice.accuracy));
        out.push_str(&format!("family.{family}.mean_iou = {}\n", slice.mean_iou));
    }
    out
}

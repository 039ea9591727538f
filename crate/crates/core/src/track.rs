//! Cross-frame association of candidate objects into tracks.
//!
//! Each round fuses embedding cosine and mask overlap into a similarity
//! matrix between live tracks and the new frame's candidates, solves it
//! one-to-one with the assignment solver, and drops pairs at or below the
//! acceptance threshold. Matched tracks extend, unmatched candidates open
//! new tracks, and a track that stays unmatched for `beta` consecutive
//! rounds ends. Gaps inside a surviving track are allowed, so objects may
//! reappear after short occlusions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hungarian::match_by_similarity;
use crate::linalg::Matrix;
use crate::mask::BinaryMask;
use crate::ops::cosine_similarity;
use crate::{Real, RealVector};

/// One frame-level candidate as the tracker consumes it: its mask and its
/// final (relation-enhanced) embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCandidate {
    pub mask: BinaryMask,
    pub embedding: RealVector,
}

/// How a track's per-frame confidences aggregate into its retrieval score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Average confidence over the track's assigned frames (the default).
    Mean,
    /// Best single-frame confidence.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Association acceptance threshold; a pair must score strictly above
    /// this to extend a track.
    pub gamma: Real,
    /// Consecutive unmatched rounds after which a track ends.
    pub beta: usize,
    /// Weight of the mask-overlap term in the fused similarity.
    pub alpha_iou: Real,
    /// Aggregation used when ranking tracks against the query.
    pub score_mode: ScoreMode,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            gamma: 0.8,
            beta: 2,
            alpha_iou: 0.5,
            score_mode: ScoreMode::Mean,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 2.0) {
            return Err(Error::Config(format!(
                "tracker gamma must lie in (0, 2], got {}",
                self.gamma
            )));
        }
        if self.beta < 1 {
            return Err(Error::Config("tracker beta must be at least 1".into()));
        }
        if !(self.alpha_iou >= 0.0 && self.alpha_iou.is_finite()) {
            return Err(Error::Config(format!(
                "tracker alpha_iou must be a finite non-negative value, got {}",
                self.alpha_iou
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Active,
    Ended,
}

/// A chain of per-frame candidate assignments for one object.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: usize,
    /// `(frame index, candidate index)` pairs, strictly increasing in
    /// frame index; missing frames are gaps.
    pub slots: Vec<(usize, usize)>,
    /// Embedding stored for each assigned frame (parallel to `slots`).
    pub embeddings: Vec<RealVector>,
    /// Frame index of the most recent assignment.
    pub last_update: usize,
    pub state: TrackState,
    /// The most recent assigned candidate, representing the track in
    /// association rounds.
    representative: ObjectCandidate,
    /// Consecutive unmatched rounds since `last_update`.
    misses: usize,
}

impl Track {
    fn open(id: usize, frame: usize, candidate_idx: usize, candidate: &ObjectCandidate) -> Self {
        Track {
            id,
            slots: vec![(frame, candidate_idx)],
            embeddings: vec![candidate.embedding.clone()],
            last_update: frame,
            state: TrackState::Active,
            representative: candidate.clone(),
            misses: 0,
        }
    }

    fn extend(&mut self, frame: usize, candidate_idx: usize, candidate: &ObjectCandidate) {
        debug_assert_eq!(self.state, TrackState::Active);
        debug_assert!(frame > self.last_update, "track slots must advance");
        self.slots.push((frame, candidate_idx));
        self.embeddings.push(candidate.embedding.clone());
        self.last_update = frame;
        self.representative = candidate.clone();
        self.misses = 0;
    }

    /// The candidate index assigned at `frame`, if any.
    pub fn slot_at(&self, frame: usize) -> Option<usize> {
        self.slots
            .iter()
            .find(|&&(f, _)| f == frame)
            .map(|&(_, c)| c)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Fused association similarity between two candidates: embedding cosine
/// plus `alpha_iou` times mask overlap. Errors on a zero embedding or a
/// mask size mismatch.
pub fn association_similarity(
    a: &ObjectCandidate,
    b: &ObjectCandidate,
    alpha_iou: Real,
) -> Result<Real> {
    let cos = cosine_similarity(a.embedding.as_slice(), b.embedding.as_slice())?;
    let iou = a.mask.iou(&b.mask)?;
    Ok(cos + alpha_iou * iou)
}

/// Runs one association round: extends matched tracks, ends tracks that
/// have been unmatched for `beta` consecutive rounds, and opens a new
/// track for every unmatched candidate. `frame_index` must exceed every
/// existing slot's frame.
pub fn update_tracks(
    tracks: &mut Vec<Track>,
    candidates: &[ObjectCandidate],
    frame_index: usize,
    cfg: &TrackerConfig,
) -> Result<()> {
    cfg.validate()?;
    let active: Vec<usize> = tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.state == TrackState::Active)
        .map(|(i, _)| i)
        .collect();

    let mut track_matched = vec![false; tracks.len()];
    let mut candidate_matched = vec![false; candidates.len()];
    if !active.is_empty() && !candidates.is_empty() {
        let mut sim = Matrix::zeros(active.len(), candidates.len());
        for (r, &ti) in active.iter().enumerate() {
            for (c, cand) in candidates.iter().enumerate() {
                sim.row_mut(r)[c] =
                    association_similarity(&tracks[ti].representative, cand, cfg.alpha_iou)?;
            }
        }
        for (r, c) in match_by_similarity(&sim, cfg.gamma)? {
            let ti = active[r];
            tracks[ti].extend(frame_index, c, &candidates[c]);
            track_matched[ti] = true;
            candidate_matched[c] = true;
        }
    }

    for &ti in &active {
        if !track_matched[ti] {
            tracks[ti].misses += 1;
            if tracks[ti].misses >= cfg.beta {
                tracks[ti].state = TrackState::Ended;
            }
        }
    }

    for (c, cand) in candidates.iter().enumerate() {
        if !candidate_matched[c] {
            let id = tracks.len();
            tracks.push(Track::open(id, frame_index, c, cand));
        }
    }
    Ok(())
}

/// Confidence of one assigned frame: cosine between the stored embedding
/// and the sentence embedding.
fn frame_confidences(track: &Track, sentence: &RealVector) -> Result<Vec<Real>> {
    if track.is_empty() {
        return Err(Error::EmptyInput("score_track: track has no assignments"));
    }
    track
        .embeddings
        .iter()
        .map(|e| cosine_similarity(e.as_slice(), sentence.as_slice()))
        .collect()
}

/// Average per-frame confidence of the track against the sentence.
pub fn score_track(track: &Track, sentence: &RealVector) -> Result<Real> {
    let confidences = frame_confidences(track, sentence)?;
    Ok(confidences.iter().sum::<Real>() / confidences.len() as Real)
}

/// Best single-frame confidence of the track against the sentence.
pub fn score_track_max(track: &Track, sentence: &RealVector) -> Result<Real> {
    let confidences = frame_confidences(track, sentence)?;
    Ok(confidences.iter().cloned().fold(Real::NEG_INFINITY, Real::max))
}

/// The track whose aggregated confidence against the sentence is highest;
/// exact ties go to the lower track id. Errors when `tracks` is empty.
pub fn select_track<'a>(
    tracks: &'a [Track],
    sentence: &RealVector,
    mode: ScoreMode,
) -> Result<&'a Track> {
    if tracks.is_empty() {
        return Err(Error::EmptyInput("select_track: no tracks"));
    }
    let mut best: Option<(&Track, Real)> = None;
    for track in tracks {
        let score = match mode {
            ScoreMode::Mean => score_track(track, sentence)?,
            ScoreMode::Max => score_track_max(track, sentence)?,
        };
        let better = match &best {
            None => true,
            Some((b, s)) => score > *s || (score == *s && track.id < b.id),
        };
        if better {
            best = Some((track, score));
        }
    }
    Ok(best.expect("non-empty track list").0)
}

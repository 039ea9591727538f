//! On-disk dataset, manifest, and prediction formats.
//!
//! A dataset directory holds one JSON manifest plus one binary blob per
//! scene. Scene blobs are fully self-describing:
//!
//! ```text
//! magic "RVSC" | version u32 | width u32 | height u32 | frames u32 | objects u32
//! per frame:  width*height*3 RGB bytes
//!             `objects` exact-mask blocks
//!             candidate count u32, then that many candidate-mask blocks
//! crc32 u32 over every preceding byte
//! ```
//!
//! A mask block is `width u32 | height u32 | run count u32 | runs…`, all
//! little-endian, with the run list in the alternating background/
//! foreground encoding used everywhere else in the crate. The checksum is
//! verified before any parsing, so a truncated or corrupted file fails
//! with a checksum error carrying the file name and offset rather than a
//! confusing parse error deeper in.
//!
//! The manifest is JSON with order-independent keys: the format version,
//! generation seed and config echo, the scene file list, every query
//! sample, and vocabulary statistics over the query texts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Dataset, GenConfig, QuerySample};
use crate::mask::BinaryMask;
use crate::scene::{Scene, SceneFrame};
use crate::text::vocab::split_words;

pub const SCENE_MAGIC: [u8; 4] = *b"RVSC";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// Word-frequency summary of a dataset's query texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabStats {
    pub distinct_words: usize,
    pub word_counts: BTreeMap<String, usize>,
}

pub fn vocab_stats<'a>(texts: impl IntoIterator<Item = &'a str>) -> VocabStats {
    let mut word_counts = BTreeMap::new();
    for text in texts {
        for word in split_words(text) {
            *word_counts.entry(word).or_insert(0) += 1;
        }
    }
    VocabStats {
        distinct_words: word_counts.len(),
        word_counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub config: GenConfig,
    /// Scene blob file names, relative to the manifest's directory.
    pub scene_files: Vec<String>,
    pub samples: Vec<QuerySample>,
    pub vocabulary: VocabStats,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                file: MANIFEST_NAME.into(),
                found: self.version,
                supported: FORMAT_VERSION,
            });
        }
        for s in &self.samples {
            if s.scene_index >= self.scene_files.len() {
                return Err(Error::Dataset(format!(
                    "sample references scene {} but only {} scene files are listed",
                    s.scene_index,
                    self.scene_files.len()
                )));
            }
        }
        Ok(())
    }
}

/// A scene as stored on disk: frames with exact and candidate masks, but
/// no generator-side object descriptions.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredScene {
    pub width: u32,
    pub height: u32,
    pub frames: Vec<SceneFrame>,
}

/// A dataset read back from disk (or converted in memory).
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDataset {
    pub manifest: DatasetManifest,
    pub scenes: Vec<StoredScene>,
}

pub fn scene_file_name(index: usize) -> String {
    format!("scene_{index:05}.bin")
}

pub fn build_manifest(ds: &Dataset) -> DatasetManifest {
    DatasetManifest {
        version: FORMAT_VERSION,
        seed: ds.seed,
        config: ds.config.clone(),
        scene_files: (0..ds.scenes.len()).map(scene_file_name).collect(),
        samples: ds.samples.clone(),
        vocabulary: vocab_stats(ds.samples.iter().map(|s| s.text.as_str())),
    }
}

fn stored_scene(scene: &Scene) -> StoredScene {
    StoredScene {
        width: scene.spec.width,
        height: scene.spec.height,
        frames: scene.frames.clone(),
    }
}

/// The in-memory equivalent of saving and reloading `ds`.
pub fn to_stored(ds: &Dataset) -> StoredDataset {
    StoredDataset {
        manifest: build_manifest(ds),
        scenes: ds.scenes.iter().map(stored_scene).collect(),
    }
}

// ---------------------------------------------------------------------
// scene blob encoding

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_mask(buf: &mut Vec<u8>, mask: &BinaryMask) {
    put_u32(buf, mask.width());
    put_u32(buf, mask.height());
    put_u32(buf, mask.runs().len() as u32);
    for &run in mask.runs() {
        put_u32(buf, run);
    }
}

/// Serializes one scene to the blob format, checksum included.
pub fn encode_scene(scene: &StoredScene) -> Result<Vec<u8>> {
    let (w, h) = (scene.width, scene.height);
    if scene.frames.is_empty() {
        return Err(Error::Dataset("scene has no frames".into()));
    }
    let objects = scene.frames[0].gt_masks.len();
    if objects == 0 {
        return Err(Error::Dataset("scene has no objects".into()));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(&SCENE_MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_u32(&mut buf, w);
    put_u32(&mut buf, h);
    put_u32(&mut buf, scene.frames.len() as u32);
    put_u32(&mut buf, objects as u32);
    for frame in &scene.frames {
        if frame.rgb.len() != (w * h * 3) as usize {
            return Err(Error::Dataset("frame raster does not match scene size".into()));
        }
        if frame.gt_masks.len() != objects || frame.candidates.is_empty() {
            return Err(Error::Dataset(
                "frame mask counts are inconsistent with the scene header".into(),
            ));
        }
        for mask in frame.gt_masks.iter().chain(&frame.candidates) {
            if mask.width() != w || mask.height() != h {
                return Err(Error::Dataset("mask size differs from scene size".into()));
            }
        }
        buf.extend_from_slice(&frame.rgb);
        for mask in &frame.gt_masks {
            put_mask(&mut buf, mask);
        }
        put_u32(&mut buf, frame.candidates.len() as u32);
        for mask in &frame.candidates {
            put_mask(&mut buf, mask);
        }
    }
    let crc = crc32fast::hash(&buf);
    put_u32(&mut buf, crc);
    Ok(buf)
}

// ---------------------------------------------------------------------
// scene blob decoding

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl<'a> Cursor<'a> {
    fn malformed(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Malformed {
            file: self.file.to_string(),
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.malformed(self.pos, "unexpected end of data"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn mask(&mut self, scene_w: u32, scene_h: u32) -> Result<BinaryMask> {
        let start = self.pos;
        let w = self.u32()?;
        let h = self.u32()?;
        if (w, h) != (scene_w, scene_h) {
            return Err(self.malformed(start, "mask size differs from scene size"));
        }
        let count = self.u32()? as usize;
        // the densest legal run list alternates single pixels
        if count > (w as usize * h as usize) + 1 {
            return Err(self.malformed(start, "run count exceeds pixel count"));
        }
        let mut runs = Vec::with_capacity(count);
        for _ in 0..count {
            runs.push(self.u32()?);
        }
        BinaryMask::from_runs(w, h, runs).map_err(|e| self.malformed(start, e.to_string()))
    }
}

/// Decodes one scene blob; `file` labels errors. Checksum trouble is
/// reported before any structural parsing is attempted.
pub fn decode_scene(bytes: &[u8], file: &str) -> Result<StoredScene> {
    if bytes.len() < 4 {
        return Err(Error::Malformed {
            file: file.to_string(),
            offset: 0,
            reason: "file shorter than its checksum trailer".into(),
        });
    }
    let payload = &bytes[..bytes.len() - 4];
    let trailer = &bytes[bytes.len() - 4..];
    let stored = u32::from_le_bytes([trailer[0], trailer[1], trailer[2], trailer[3]]);
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            file: file.to_string(),
            offset: payload.len() as u64,
            stored,
            computed,
        });
    }

    let mut cur = Cursor {
        bytes: payload,
        pos: 0,
        file,
    };
    if cur.take(4)? != SCENE_MAGIC {
        return Err(cur.malformed(0, "bad magic, not a scene blob"));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            file: file.to_string(),
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let w = cur.u32()?;
    let h = cur.u32()?;
    let frames = cur.u32()? as usize;
    let objects = cur.u32()? as usize;
    if w == 0 || h == 0 || (w as u64) * (h as u64) > 1 << 24 {
        return Err(cur.malformed(8, "implausible frame size"));
    }
    if frames == 0 || objects == 0 {
        return Err(cur.malformed(16, "scene needs at least one frame and one object"));
    }

    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let rgb = cur.take((w * h * 3) as usize)?.to_vec();
        let mut gt_masks = Vec::with_capacity(objects);
        for _ in 0..objects {
            gt_masks.push(cur.mask(w, h)?);
        }
        let k = cur.u32()? as usize;
        if k == 0 {
            return Err(cur.malformed(cur.pos - 4, "frame has no candidate masks"));
        }
        let mut candidates = Vec::with_capacity(k);
        for _ in 0..k {
            candidates.push(cur.mask(w, h)?);
        }
        out.push(SceneFrame {
            rgb,
            gt_masks,
            candidates,
        });
    }
    if cur.pos != payload.len() {
        return Err(cur.malformed(cur.pos, "trailing bytes after the last frame"));
    }
    Ok(StoredScene {
        width: w,
        height: h,
        frames: out,
    })
}

// ---------------------------------------------------------------------
// directory save / load

/// Writes the manifest and every scene blob into `dir` (created if
/// missing). Returns the manifest that was written.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    let manifest = build_manifest(ds);
    fs::create_dir_all(dir)?;
    for (i, scene) in ds.scenes.iter().enumerate() {
        let bytes = encode_scene(&stored_scene(scene))?;
        fs::write(dir.join(&manifest.scene_files[i]), bytes)?;
    }
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_NAME), json)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_scene_file(path: &Path) -> Result<StoredScene> {
    let bytes = fs::read(path)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    decode_scene(&bytes, &name)
}

/// Reads a dataset directory back into memory, verifying checksums and
/// mask invariants along the way.
pub fn load_dataset(dir: &Path) -> Result<StoredDataset> {
    let manifest = load_manifest(dir)?;
    let mut scenes = Vec::with_capacity(manifest.scene_files.len());
    for name in &manifest.scene_files {
        scenes.push(load_scene_file(&dir.join(name))?);
    }
    Ok(StoredDataset { manifest, scenes })
}

// ---------------------------------------------------------------------
// prediction files

/// A mask in portable form; converts to `BinaryMask` with validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredMask {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<u32>,
}

impl StoredMask {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        StoredMask {
            width: mask.width(),
            height: mask.height(),
            runs: mask.runs().to_vec(),
        }
    }

    pub fn to_mask(&self) -> Result<BinaryMask> {
        BinaryMask::from_runs(self.width, self.height, self.runs.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub frame_index: usize,
    /// Absent when no candidate was assigned in this frame.
    pub mask: Option<StoredMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub scene_index: usize,
    pub text: String,
    /// Retrieval score of the selected track.
    pub track_score: f64,
    pub frames: Vec<FramePrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub version: u32,
    pub predictions: Vec<SamplePrediction>,
}

pub fn save_predictions(preds: &PredictionFile, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(preds)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_predictions(path: &Path) -> Result<PredictionFile> {
    let text = fs::read_to_string(path)?;
    let preds: PredictionFile = serde_json::from_str(&text)?;
    if preds.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            file: path.display().to_string(),
            found: preds.version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(preds)
}

/// Convenience used by tests and the CLI to name prediction outputs.
pub fn predictions_path(dir: &Path) -> PathBuf {
    dir.join("predictions.json")
}

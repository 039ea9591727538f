//! Synthetic scene world: colored geometric objects moving with constant
//! velocity over a flat background, rasterized into RGB frames and exact
//! per-object masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Background color of every rasterized frame.
pub const BACKGROUND: [u8; 3] = [28, 28, 28];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];

    /// The noun used in query text.
    pub fn word(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }
}

/// A named color with exact byte values, so rasterization is reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaletteColor {
    pub name: &'static str,
    pub rgb: [u8; 3],
}

/// Colors objects may take; queries refer to them by name.
pub const PALETTE: [PaletteColor; 6] = [
    PaletteColor { name: "red", rgb: [200, 50, 50] },
    PaletteColor { name: "green", rgb: [60, 180, 75] },
    PaletteColor { name: "blue", rgb: [60, 100, 210] },
    PaletteColor { name: "yellow", rgb: [220, 200, 60] },
    PaletteColor { name: "magenta", rgb: [190, 70, 190] },
    PaletteColor { name: "cyan", rgb: [70, 190, 190] },
];

/// One object's appearance and linear motion. Positions and velocities
/// are integer pixels, so every frame rasterizes exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Index into [`PALETTE`].
    pub color: usize,
    /// Half-extent: circle radius, square half-side, triangle half-height.
    pub size: i32,
    /// Center at frame 0.
    pub x0: i32,
    pub y0: i32,
    /// Center displacement per frame.
    pub vx: i32,
    pub vy: i32,
}

impl ObjectSpec {
    pub fn center_at(&self, t: usize) -> (i32, i32) {
        (self.x0 + self.vx * t as i32, self.y0 + self.vy * t as i32)
    }

    /// Inclusive bounding box `(x_min, y_min, x_max, y_max)` at frame `t`,
    /// unclipped.
    pub fn bbox_at(&self, t: usize) -> (i32, i32, i32, i32) {
        let (cx, cy) = self.center_at(t);
        (cx - self.size, cy - self.size, cx + self.size, cy + self.size)
    }

    /// Whether the pixel at `(x, y)` belongs to the object at frame `t`.
    pub fn contains(&self, t: usize, x: i32, y: i32) -> bool {
        let (cx, cy) = self.center_at(t);
        let (dx, dy) = (x - cx, y - cy);
        let s = self.size;
        match self.shape {
            Shape::Circle => dx * dx + dy * dy <= s * s,
            Shape::Square => dx.abs() <= s && dy.abs() <= s,
            // apex at cy − s, base at cy + s, widening one half-pixel per row
            Shape::Triangle => {
                let row = dy + s;
                (0..=2 * s).contains(&row) && 2 * dx.abs() <= row
            }
        }
    }
}

/// Full description of one scene: the world the rasterizer draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    /// Number of frames.
    pub frames: usize,
    pub objects: Vec<ObjectSpec>,
    /// Whether objects were allowed to overlap during placement.
    pub occlusion_allowed: bool,
}

impl SceneSpec {
    /// Checks the structural invariants: at least one frame and object,
    /// and every object at least partially visible in every frame.
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("scene must have at least one frame".into()));
        }
        if self.objects.is_empty() {
            return Err(Error::Config("scene must have at least one object".into()));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.size < 1 {
                return Err(Error::Config(format!("object {i} has size < 1")));
            }
            if obj.color >= PALETTE.len() {
                return Err(Error::Config(format!("object {i} has unknown color")));
            }
            for t in 0..self.frames {
                if rasterize_object(obj, t, self.width, self.height).is_empty() {
                    return Err(Error::Config(format!(
                        "object {i} leaves the frame entirely at frame {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One rasterized frame: pixels plus exact and candidate masks, indexed by
/// object.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    /// Row-major RGB bytes.
    pub rgb: Vec<u8>,
    /// Exact object masks.
    pub gt_masks: Vec<BinaryMask>,
    /// Candidate masks as a detector would supply them; equal to
    /// `gt_masks` unless perturbation was applied.
    pub candidates: Vec<BinaryMask>,
}

/// A rasterized scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub frames: Vec<SceneFrame>,
}

/// Rasterizes one object's mask at frame `t`, clipped to the frame.
pub fn rasterize_object(obj: &ObjectSpec, t: usize, width: u32, height: u32) -> BinaryMask {
    let mut px = vec![false; (width * height) as usize];
    let (x0, y0, x1, y1) = obj.bbox_at(t);
    for y in y0.max(0)..=y1.min(height as i32 - 1) {
        for x in x0.max(0)..=x1.min(width as i32 - 1) {
            if obj.contains(t, x, y) {
                px[(y as u32 * width + x as u32) as usize] = true;
            }
        }
    }
    BinaryMask::from_bitmap(width, height, &px)
}

/// Rasterizes every frame of a scene: background, then objects painted in
/// order (later objects draw over earlier ones where they overlap; masks
/// record the visible pixels). Candidates start as copies of the exact
/// masks.
pub fn rasterize_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut rgb = Vec::with_capacity((w * h * 3) as usize);
        for _ in 0..w * h {
            rgb.extend_from_slice(&BACKGROUND);
        }
        // visible owner per pixel, painted in object order
        let mut owner: Vec<Option<usize>> = vec![None; (w * h) as usize];
        for (i, obj) in spec.objects.iter().enumerate() {
            let mask = rasterize_object(obj, t, w, h);
            let mut pos = 0usize;
            let mut fg = false;
            for &run in mask.runs() {
                if fg {
                    for p in pos..pos + run as usize {
                        owner[p] = Some(i);
                    }
                }
                pos += run as usize;
                fg = !fg;
            }
        }
        let mut gt_masks = Vec::with_capacity(spec.objects.len());
        for i in 0..spec.objects.len() {
            let px: Vec<bool> = owner.iter().map(|&o| o == Some(i)).collect();
            gt_masks.push(BinaryMask::from_bitmap(w, h, &px));
        }
        for (p, o) in owner.iter().enumerate() {
            if let Some(i) = o {
                rgb[p * 3..p * 3 + 3].copy_from_slice(&PALETTE[spec.objects[*i].color].rgb);
            }
        }
        frames.push(SceneFrame {
            rgb,
            candidates: gt_masks.clone(),
            gt_masks,
        });
    }
    Ok(Scene {
        spec: spec.clone(),
        frames,
    })
}

//! Synthetic dataset generator: plans scenes of moving colored shapes and
//! pairs each with every referring query its template family can pose
//! unambiguously, so one scene yields several training samples.
//!
//! Families and what resolves them:
//! - attribute — "the red circle": the referent is the unique object with
//!   that color and shape. One query per object whose color–shape pair is
//!   unique in the scene.
//! - relative position — "the second square from the left": several
//!   objects share the queried shape (distinct colors) and only their
//!   horizontal order identifies the referent. One query per (rank, side)
//!   pair over the group.
//! - relation — "the circle left of the triangle": two same-colored
//!   objects of the queried shape straddle a unique anchor object, so only
//!   the relation to the anchor disambiguates. One query per side.
//! - motion — "the square moving right": the referent is the unique
//!   object of its shape and genuinely moves as stated. One query.
//!
//! Generation is a pure function of `(config, seed)`: each scene draws
//! from its own deterministic stream, so scene `i` is identical no matter
//! how many scenes surround it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{rasterize_scene, ObjectSpec, Scene, SceneSpec, Shape, PALETTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateFamily {
    Attribute,
    RelativePosition,
    Relation,
    Motion,
}

impl TemplateFamily {
    pub const ALL: [TemplateFamily; 4] = [
        TemplateFamily::Attribute,
        TemplateFamily::RelativePosition,
        TemplateFamily::Relation,
        TemplateFamily::Motion,
    ];

    /// Stable name used in reports and manifests.
    pub fn name(self) -> &'static str {
        match self {
            TemplateFamily::Attribute => "attribute",
            TemplateFamily::RelativePosition => "relative_position",
            TemplateFamily::Relation => "relation",
            TemplateFamily::Motion => "motion",
        }
    }

    /// Smallest object count a scene needs to pose this family's query.
    fn min_objects(self) -> usize {
        match self {
            TemplateFamily::Attribute => 1,
            TemplateFamily::RelativePosition => 2,
            TemplateFamily::Relation => 3,
            TemplateFamily::Motion => 2,
        }
    }

    /// Whether this family can pose queries under the config's object
    /// count range. Relative-position scenes hold only the look-alike
    /// group (at most three objects, the deepest ordinal), so they cannot
    /// satisfy a larger minimum.
    fn fits(self, config: &GenConfig) -> bool {
        let enough = self.min_objects() <= config.max_objects;
        match self {
            TemplateFamily::RelativePosition => enough && config.min_objects <= 3,
            _ => enough,
        }
    }
}

/// Candidate-mask perturbation emulating an imperfect segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskNoise {
    /// Candidates equal the exact masks.
    None,
    /// Each candidate is randomly kept, eroded, or dilated by one pixel.
    ErodeDilate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub scenes: usize,
    /// Frames per scene.
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Half-extent range of object shapes in pixels (a size-s object spans
    /// 2s+1 pixels). Larger objects make shape identity easier to read
    /// from pooled features.
    pub min_size: u32,
    pub max_size: u32,
    pub mask_noise: MaskNoise,
    /// Families to draw from; scenes cycle through the feasible ones.
    pub families: Vec<TemplateFamily>,
    /// First scene stream index; lets several datasets generated from the
    /// same seed use disjoint scenes (e.g. a train/test split).
    pub scene_offset: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            scenes: 200,
            frames: 5,
            width: 64,
            height: 64,
            min_objects: 2,
            max_objects: 5,
            min_size: 5,
            max_size: 7,
            mask_noise: MaskNoise::None,
            families: TemplateFamily::ALL.to_vec(),
            scene_offset: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::Config("gen: scenes must be at least 1".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("gen: frames must be at least 1".into()));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::Config(
                "gen: need 1 <= min_objects <= max_objects".into(),
            ));
        }
        if self.width < 24 || self.height < 24 {
            return Err(Error::Config("gen: frame must be at least 24x24".into()));
        }
        if self.min_size < 2 || self.min_size > self.max_size {
            return Err(Error::Config(
                "gen: need 2 <= min_size <= max_size".into(),
            ));
        }
        if 4 * self.max_size + 6 > self.width.min(self.height) {
            return Err(Error::Config(format!(
                "gen: max_size {} is too large for a {}x{} frame (need 4*max_size+6 <= min(width, height))",
                self.max_size, self.width, self.height
            )));
        }
        if self.families.is_empty() {
            return Err(Error::Config("gen: no template families enabled".into()));
        }
        Ok(())
    }

    /// The enabled families this config can pose, in the configured
    /// order. Errors when none is feasible.
    pub fn feasible_families(&self) -> Result<Vec<TemplateFamily>> {
        let feasible: Vec<TemplateFamily> = self
            .families
            .iter()
            .copied()
            .filter(|f| f.fits(self))
            .collect();
        if feasible.is_empty() {
            return Err(Error::InfeasibleConfig(format!(
                "no enabled template family fits {}..={} object(s) per scene",
                self.min_objects, self.max_objects
            )));
        }
        Ok(feasible)
    }
}

/// One referring query over one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySample {
    pub scene_index: usize,
    pub text: String,
    /// Object index of the referent within the scene.
    pub referent: usize,
    pub family: TemplateFamily,
}

/// A generated dataset held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GenConfig,
    pub seed: u64,
    pub scenes: Vec<Scene>,
    /// Queries in scene order; a scene may pose several.
    pub samples: Vec<QuerySample>,
}

const SIZE_RANGE: std::ops::RangeInclusive<i32> = 3..=5;
const SPEED_RANGE: std::ops::RangeInclusive<i32> = -2..=2;
const SCENE_ATTEMPTS: usize = 80;
const PLACEMENT_ATTEMPTS: usize = 150;

/// Generates scene `index` of the dataset identified by `(config, seed)`,
/// along with all of its query samples. Each scene draws from its own
/// stream, so scenes can be produced in any order — or concurrently —
/// with identical results.
pub fn generate_scene_sample(
    config: &GenConfig,
    seed: u64,
    index: usize,
) -> Result<(Scene, Vec<QuerySample>)> {
    let families = config.feasible_families()?;
    let stream = config.scene_offset + index;
    let family = families[stream % families.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    let (spec, queries) = plan_scene(config, family, &mut rng)?;
    let mut scene = rasterize_scene(&spec)?;
    apply_noise(&mut scene, config.mask_noise, &mut rng);
    let samples = queries
        .into_iter()
        .map(|(text, referent)| QuerySample {
            scene_index: index,
            text,
            referent,
            family,
        })
        .collect();
    Ok((scene, samples))
}

/// Generates the full dataset deterministically from `(config, seed)`.
pub fn generate_dataset(config: &GenConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut scenes = Vec::with_capacity(config.scenes);
    let mut samples = Vec::new();
    for i in 0..config.scenes {
        let (scene, scene_samples) = generate_scene_sample(config, seed, i)?;
        scenes.push(scene);
        samples.extend(scene_samples);
    }
    Ok(Dataset {
        config: config.clone(),
        seed,
        scenes,
        samples,
    })
}

/// Direction words usable in queries; horizontal ones take part in the
/// flip augmentation's token swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    fn word(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// How one planned object's velocity is constrained.
#[derive(Debug, Clone, Copy)]
enum VelocityRule {
    Free,
    /// Shares the scene's group x-velocity (so horizontal order between
    /// group members never changes); vertical component free.
    GroupX,
    Forced(i32, i32),
}

#[derive(Debug, Clone, Copy)]
struct PlannedObject {
    shape: Shape,
    color: usize,
    velocity: VelocityRule,
    /// Marks the objects whose mutual horizontal order the query depends
    /// on (the shape group, or the straddlers plus anchor).
    ordered: bool,
}

/// What the family needs resolved after placement to name the referent.
#[derive(Debug, Clone)]
enum QueryPlan {
    /// Referent is the plan at this index.
    Fixed {
        index: usize,
        text: String,
    },
    /// Referent is the `rank`-th of the `ordered` objects counted from the
    /// given side by x-center.
    Ranked {
        rank: usize,
        side: Direction,
        text: String,
    },
    /// Referent is the `ordered` non-anchor object on the given side of
    /// the anchor (by x-center).
    Straddle {
        anchor: usize,
        side: Direction,
        text: String,
    },
}

fn distinct_colors(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..PALETTE.len()).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx
}

fn other_shapes(exclude: &[Shape]) -> Vec<Shape> {
    Shape::ALL
        .iter()
        .copied()
        .filter(|s| !exclude.contains(s))
        .collect()
}

/// Builds the family's object plans and every query it can pose over
/// them. Plans are in a canonical order here; `plan_scene` shuffles them
/// afterwards.
fn plan_objects(
    family: TemplateFamily,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<PlannedObject>, Vec<QueryPlan>) {
    match family {
        TemplateFamily::Attribute => {
            let shape = *Shape::ALL.choose(rng).unwrap();
            let color = rng.gen_range(0..PALETTE.len());
            let mut plans = vec![PlannedObject {
                shape,
                color,
                velocity: VelocityRule::Free,
                ordered: false,
            }];
            for _ in 1..n {
                // any appearance except the first object's exact combination
                let (s, c) = loop {
                    let s = *Shape::ALL.choose(rng).unwrap();
                    let c = rng.gen_range(0..PALETTE.len());
                    if (s, c) != (shape, color) {
                        break (s, c);
                    }
                };
                plans.push(PlannedObject {
                    shape: s,
                    color: c,
                    velocity: VelocityRule::Free,
                    ordered: false,
                });
            }
            // the first object is unique by construction; one more query
            // goes to the first other object whose color–shape pair is,
            // keeping every family at two queries per scene
            let attribute_query = |i: usize, p: &PlannedObject| QueryPlan::Fixed {
                index: i,
                text: format!("the {} {}", PALETTE[p.color].name, p.shape.word()),
            };
            let mut queries = vec![attribute_query(0, &plans[0])];
            if let Some((i, p)) = plans.iter().enumerate().skip(1).find(|(_, p)| {
                plans
                    .iter()
                    .filter(|q| (q.shape, q.color) == (p.shape, p.color))
                    .count()
                    == 1
            }) {
                queries.push(attribute_query(i, p));
            }
            (plans, queries)
        }
        TemplateFamily::RelativePosition => {
            // the scene holds only the look-alike group, so every object's
            // horizontal rank is exactly the rank the query counts
            let group = n.clamp(2, 3);
            let shape = *Shape::ALL.choose(rng).unwrap();
            let colors = distinct_colors(group, rng);
            let plans: Vec<PlannedObject> = colors
                .iter()
                .map(|&color| PlannedObject {
                    shape,
                    color,
                    velocity: VelocityRule::GroupX,
                    ordered: true,
                })
                .collect();
            // two of the addressable (rank, side) pairs
            let mut pairs: Vec<(usize, Direction)> = (0..group)
                .flat_map(|rank| [(rank, Direction::Left), (rank, Direction::Right)])
                .collect();
            pairs.shuffle(rng);
            pairs.truncate(2);
            let queries = pairs
                .into_iter()
                .map(|(rank, side)| QueryPlan::Ranked {
                    rank,
                    side,
                    text: format!(
                        "the {} {} from the {}",
                        ["first", "second", "third"][rank],
                        shape.word(),
                        side.word()
                    ),
                })
                .collect();
            (plans, queries)
        }
        TemplateFamily::Relation => {
            let queried = *Shape::ALL.choose(rng).unwrap();
            let anchor_shape = *other_shapes(&[queried]).choose(rng).unwrap();
            let filler_shape = other_shapes(&[queried, anchor_shape])[0];
            let color = rng.gen_range(0..PALETTE.len());
            let mut plans = vec![
                // two identical-looking queried objects
                PlannedObject {
                    shape: queried,
                    color,
                    velocity: VelocityRule::GroupX,
                    ordered: true,
                },
                PlannedObject {
                    shape: queried,
                    color,
                    velocity: VelocityRule::GroupX,
                    ordered: true,
                },
                // the unique anchor
                PlannedObject {
                    shape: anchor_shape,
                    color: rng.gen_range(0..PALETTE.len()),
                    velocity: VelocityRule::GroupX,
                    ordered: false,
                },
            ];
            for _ in 3..n {
                plans.push(PlannedObject {
                    shape: filler_shape,
                    color: rng.gen_range(0..PALETTE.len()),
                    velocity: VelocityRule::Free,
                    ordered: false,
                });
            }
            // one straddler sits on each side of the anchor, so both
            // sides are addressable
            let queries = [Direction::Left, Direction::Right]
                .into_iter()
                .map(|side| QueryPlan::Straddle {
                    anchor: 2,
                    side,
                    text: format!(
                        "the {} {} of the {}",
                        queried.word(),
                        side.word(),
                        anchor_shape.word()
                    ),
                })
                .collect();
            (plans, queries)
        }
        TemplateFamily::Motion => {
            // two movers of distinct shapes, each queryable; remaining
            // objects share the third shape so neither query is ambiguous
            let mut shapes = Shape::ALL.to_vec();
            shapes.shuffle(rng);
            let mut plans = Vec::with_capacity(n);
            let mut queries = Vec::with_capacity(2);
            for (i, &shape) in shapes.iter().take(2).enumerate() {
                let dir = *[
                    Direction::Left,
                    Direction::Right,
                    Direction::Up,
                    Direction::Down,
                ]
                .choose(rng)
                .unwrap();
                let speed = rng.gen_range(1..=2);
                let v = match dir {
                    Direction::Left => (-speed, 0),
                    Direction::Right => (speed, 0),
                    Direction::Up => (0, -speed),
                    Direction::Down => (0, speed),
                };
                plans.push(PlannedObject {
                    shape,
                    color: rng.gen_range(0..PALETTE.len()),
                    velocity: VelocityRule::Forced(v.0, v.1),
                    ordered: false,
                });
                queries.push(QueryPlan::Fixed {
                    index: i,
                    text: format!("the {} moving {}", shape.word(), dir.word()),
                });
            }
            for _ in 2..n {
                plans.push(PlannedObject {
                    shape: shapes[2],
                    color: rng.gen_range(0..PALETTE.len()),
                    velocity: VelocityRule::Free,
                    ordered: false,
                });
            }
            (plans, queries)
        }
    }
}

/// Valid start range for one axis so the object (plus a 1-pixel margin for
/// dilation noise) stays inside the frame across all frames.
fn start_range(extent: u32, size: i32, v: i32, frames: usize) -> Option<(i32, i32)> {
    let drift = v * (frames as i32 - 1);
    let lo = size + 1 + (-drift).max(0);
    let hi = extent as i32 - 2 - size - drift.max(0);
    if lo <= hi {
        Some((lo, hi))
    } else {
        None
    }
}

fn boxes_clash(a: &ObjectSpec, b: &ObjectSpec, frames: usize) -> bool {
    for t in 0..frames {
        let (ax0, ay0, ax1, ay1) = a.bbox_at(t);
        let (bx0, by0, bx1, by1) = b.bbox_at(t);
        // demand a 2-pixel gap so even mutually dilated masks stay disjoint
        let separated = ax1 + 2 < bx0 || bx1 + 2 < ax0 || ay1 + 2 < by0 || by1 + 2 < ay0;
        // identical x-centers anywhere would make horizontal ranks ambiguous
        if !separated || a.center_at(t).0 == b.center_at(t).0 {
            return true;
        }
    }
    false
}

/// Plans one scene: builds the family's objects, shuffles their order,
/// places them without overlap or shared x-centers, and resolves each
/// query's referent as `(text, object index)`. Errors when no layout
/// fits after bounded retries.
fn plan_scene(
    config: &GenConfig,
    family: TemplateFamily,
    rng: &mut ChaCha8Rng,
) -> Result<(SceneSpec, Vec<(String, usize)>)> {
    let requested = rng
        .gen_range(config.min_objects..=config.max_objects)
        .max(family.min_objects());

    'scene: for _ in 0..SCENE_ATTEMPTS {
        let (mut plans, queries) = plan_objects(family, requested, rng);
        // families may plan fewer objects than requested (pure groups)
        let n = plans.len();
        // remember each plan's original index through the shuffle
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let plans_shuffled: Vec<PlannedObject> = order.iter().map(|&i| plans[i]).collect();
        plans = plans_shuffled;
        let position_of = |plan_idx: usize| order.iter().position(|&o| o == plan_idx).unwrap();

        let group_vx = rng.gen_range(SPEED_RANGE);
        let mut objects: Vec<ObjectSpec> = Vec::with_capacity(n);
        for plan in &plans {
            let size = rng.gen_range(config.min_size as i32..=config.max_size as i32);
            let mut placed = false;
            'object: for _ in 0..PLACEMENT_ATTEMPTS {
                let (vx, vy) = match plan.velocity {
                    VelocityRule::Free => {
                        (rng.gen_range(SPEED_RANGE), rng.gen_range(SPEED_RANGE))
                    }
                    VelocityRule::GroupX => (group_vx, rng.gen_range(SPEED_RANGE)),
                    VelocityRule::Forced(vx, vy) => (vx, vy),
                };
                let Some((x_lo, x_hi)) = start_range(config.width, size, vx, config.frames)
                else {
                    continue 'object;
                };
                let Some((y_lo, y_hi)) = start_range(config.height, size, vy, config.frames)
                else {
                    continue 'object;
                };
                let candidate = ObjectSpec {
                    shape: plan.shape,
                    color: plan.color,
                    size,
                    x0: rng.gen_range(x_lo..=x_hi),
                    y0: rng.gen_range(y_lo..=y_hi),
                    vx,
                    vy,
                };
                if objects.iter().any(|o| boxes_clash(o, &candidate, config.frames)) {
                    continue 'object;
                }
                objects.push(candidate);
                placed = true;
                break;
            }
            if !placed {
                continue 'scene;
            }
        }

        // resolve every query's referent from the final layout
        let mut resolved = Vec::with_capacity(queries.len());
        for query in &queries {
            let referent = match query {
                QueryPlan::Fixed { index, .. } => position_of(*index),
                QueryPlan::Ranked { rank, side, .. } => {
                    let mut group: Vec<usize> =
                        (0..n).filter(|&i| plans[i].ordered).collect();
                    group.sort_by_key(|&i| objects[i].x0);
                    match side {
                        Direction::Left => group[*rank],
                        _ => group[group.len() - 1 - rank],
                    }
                }
                QueryPlan::Straddle { anchor, side, .. } => {
                    let anchor_obj = position_of(*anchor);
                    let ax = objects[anchor_obj].x0;
                    let mut left = None;
                    let mut right = None;
                    for i in (0..n).filter(|&i| plans[i].ordered) {
                        if objects[i].x0 < ax {
                            left = Some(i);
                        } else {
                            right = Some(i);
                        }
                    }
                    // both straddlers must exist for the query to be posable
                    let (Some(l), Some(r)) = (left, right) else {
                        continue 'scene;
                    };
                    match side {
                        Direction::Left => l,
                        _ => r,
                    }
                }
            };
            let text = match query {
                QueryPlan::Fixed { text, .. }
                | QueryPlan::Ranked { text, .. }
                | QueryPlan::Straddle { text, .. } => text.clone(),
            };
            resolved.push((text, referent));
        }
        let spec = SceneSpec {
            width: config.width,
            height: config.height,
            frames: config.frames,
            objects,
            occlusion_allowed: false,
        };
        return Ok((spec, resolved));
    }
    Err(Error::InfeasibleConfig(format!(
        "could not lay out a {} scene with {} objects in {}x{}",
        family.name(),
        requested,
        config.width,
        config.height
    )))
}

/// Perturbs candidate masks in place. Exact masks stay untouched; an
/// erosion that would wipe a candidate out falls back to the exact mask.
fn apply_noise(scene: &mut Scene, noise: MaskNoise, rng: &mut ChaCha8Rng) {
    if noise == MaskNoise::None {
        return;
    }
    for frame in &mut scene.frames {
        for candidate in &mut frame.candidates {
            match rng.gen_range(0..10) {
                0..=3 => {}
                4..=6 => {
                    let eroded = candidate.erode();
                    if !eroded.is_empty() {
                        *candidate = eroded;
                    }
                }
                _ => *candidate = candidate.dilate(),
            }
        }
    }
}

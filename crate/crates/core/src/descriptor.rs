//! Bounding-box geometry and the 10-dimensional positional descriptor
//! attached to every object candidate: tight box coordinates, center,
//! size, and the two relative rank indices that order candidates by their
//! centers within the frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Tight bounding box of a mask, normalized so the frame spans `[0, 1]`
/// in both axes (pixel coordinate divided by `dimension − 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeometry {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub x_c: f64,
    pub y_c: f64,
    pub w: f64,
    pub h: f64,
}

/// Box geometry plus normalized relative rank indices `r_x`, `r_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionalDescriptor {
    pub geometry: BoxGeometry,
    pub r_x: f64,
    pub r_y: f64,
}

impl PositionalDescriptor {
    /// Flat 10-vector layout consumed by the spatial projection matrix.
    pub fn as_array(&self) -> [f64; 10] {
        let g = &self.geometry;
        [
            g.x_min, g.y_min, g.x_max, g.y_max, g.x_c, g.y_c, g.w, g.h, self.r_x, self.r_y,
        ]
    }
}

/// Computes the tight, normalized bounding box of a non-empty mask by
/// walking its run list.
pub fn bounding_box(mask: &BinaryMask) -> Result<BoxGeometry> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("bounding_box"));
    }
    let w = mask.width() as u64;
    let mut x_min = u64::MAX;
    let mut y_min = u64::MAX;
    let mut x_max = 0u64;
    let mut y_max = 0u64;
    let mut pos = 0u64;
    let mut fg = false;
    for &run in mask.runs() {
        let run = run as u64;
        if fg && run > 0 {
            let first = pos;
            let last = pos + run - 1;
            let (y0, y1) = (first / w, last / w);
            y_min = y_min.min(y0);
            y_max = y_max.max(y1);
            if y1 > y0 {
                // the run wraps at least one row boundary, so it touches
                // both the first and last columns
                x_min = 0;
                x_max = w - 1;
            } else {
                x_min = x_min.min(first % w);
                x_max = x_max.max(last % w);
            }
        }
        pos += run;
        fg = !fg;
    }

    // normalize so a full-width/height extent maps exactly onto [0, 1];
    // max(dim−1, 1) keeps 1-pixel frames finite
    let dx = ((mask.width() - 1).max(1)) as f64;
    let dy = ((mask.height() - 1).max(1)) as f64;
    let x_min = x_min as f64 / dx;
    let x_max = x_max as f64 / dx;
    let y_min = y_min as f64 / dy;
    let y_max = y_max as f64 / dy;
    Ok(BoxGeometry {
        x_min,
        y_min,
        x_max,
        y_max,
        x_c: (x_min + x_max) / 2.0,
        y_c: (y_min + y_max) / 2.0,
        w: x_max - x_min,
        h: y_max - y_min,
    })
}

/// Computes the full descriptor set for one frame's candidates.
///
/// The rank index `r_x` of candidate `i` is its 0-based position when all
/// candidates are ordered by ascending box center `x_c` (ties keep input
/// order), divided by `max(N − 1, 1)`; `r_y` analogously. Errors on an
/// empty candidate list, any empty mask, or mixed frame sizes.
pub fn positional_descriptors(masks: &[BinaryMask]) -> Result<Vec<PositionalDescriptor>> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("positional_descriptors"));
    }
    let (w, h) = (masks[0].width(), masks[0].height());
    for m in masks {
        if m.width() != w || m.height() != h {
            return Err(Error::MaskSizeMismatch {
                a_w: w,
                a_h: h,
                b_w: m.width(),
                b_h: m.height(),
            });
        }
    }
    let boxes: Vec<BoxGeometry> = masks.iter().map(bounding_box).collect::<Result<_>>()?;

    let n = boxes.len();
    let divisor = (n - 1).max(1) as f64;
    let rank_of = |key: &dyn Fn(&BoxGeometry) -> f64| -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        // stable sort on the center; equal centers keep candidate order
        order.sort_by(|&a, &b| key(&boxes[a]).partial_cmp(&key(&boxes[b])).unwrap());
        let mut rank = vec![0usize; n];
        for (pos, &idx) in order.iter().enumerate() {
            rank[idx] = pos;
        }
        rank
    };
    let rank_x = rank_of(&|g: &BoxGeometry| g.x_c);
    let rank_y = rank_of(&|g: &BoxGeometry| g.y_c);

    Ok(boxes
        .into_iter()
        .enumerate()
        .map(|(i, geometry)| PositionalDescriptor {
            geometry,
            r_x: rank_x[i] as f64 / divisor,
            r_y: rank_y[i] as f64 / divisor,
        })
        .collect())
}

//! Overlay rendering to binary portable pixmaps.
//!
//! Masks are blended over the frame at a fixed alpha of one half, using
//! integer arithmetic so output bytes are exactly reproducible:
//! `out = (base + overlay + 1) / 2` per channel. The best-scoring mask is
//! the referent and gets a solid white outline along its inner boundary —
//! mask pixels with a 4-neighbor outside the mask but inside the image.
//! (A mask covering the whole frame has no such boundary, so it renders
//! as a uniform tint.)

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::Real;

/// Overlay palette, cycled by mask index.
pub const OVERLAY_COLORS: [[u8; 3]; 6] = [
    [230, 60, 60],
    [60, 200, 80],
    [70, 110, 230],
    [235, 210, 60],
    [200, 70, 200],
    [70, 200, 200],
];

pub const OUTLINE_COLOR: [u8; 3] = [255, 255, 255];

fn blend(base: u8, overlay: u8) -> u8 {
    ((base as u16 + overlay as u16 + 1) / 2) as u8
}

/// Composites `masks` over an RGB frame and outlines `outline` (a mask
/// index). Later masks paint over earlier ones where they overlap.
pub fn compose_overlay(
    rgb: &[u8],
    width: u32,
    height: u32,
    masks: &[BinaryMask],
    outline: Option<usize>,
) -> Result<Vec<u8>> {
    let (w, h) = (width as usize, height as usize);
    if rgb.len() != w * h * 3 {
        return Err(Error::DimMismatch {
            context: "compose_overlay: rgb buffer",
            expected: w * h * 3,
            got: rgb.len(),
        });
    }
    let mut out = rgb.to_vec();
    for (i, mask) in masks.iter().enumerate() {
        if mask.width() != width || mask.height() != height {
            return Err(Error::MaskSizeMismatch {
                a_w: mask.width(),
                a_h: mask.height(),
                b_w: width,
                b_h: height,
            });
        }
        let color = OVERLAY_COLORS[i % OVERLAY_COLORS.len()];
        let bits = mask.to_bitmap();
        for (p, &on) in bits.iter().enumerate() {
            if on {
                for c in 0..3 {
                    out[p * 3 + c] = blend(out[p * 3 + c], color[c]);
                }
            }
        }
    }
    if let Some(idx) = outline {
        let mask = masks.get(idx).ok_or(Error::DimMismatch {
            context: "compose_overlay: outline index",
            expected: masks.len(),
            got: idx,
        })?;
        let bits = mask.to_bitmap();
        for y in 0..h {
            for x in 0..w {
                if !bits[y * w + x] {
                    continue;
                }
                let exposed = (x > 0 && !bits[y * w + x - 1])
                    || (x + 1 < w && !bits[y * w + x + 1])
                    || (y > 0 && !bits[(y - 1) * w + x])
                    || (y + 1 < h && !bits[(y + 1) * w + x]);
                if exposed {
                    let p = (y * w + x) * 3;
                    out[p..p + 3].copy_from_slice(&OUTLINE_COLOR);
                }
            }
        }
    }
    Ok(out)
}

/// Writes raw RGB bytes as a binary (P6) portable pixmap.
pub fn write_ppm(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    if rgb.len() != (width * height * 3) as usize {
        return Err(Error::DimMismatch {
            context: "write_ppm: rgb buffer",
            expected: (width * height * 3) as usize,
            got: rgb.len(),
        });
    }
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(rgb);
    fs::write(path, bytes)?;
    Ok(())
}

/// Renders one frame with its candidate masks blended in and the
/// best-scoring mask outlined, then writes the result to `out_path`.
pub fn render_overlay(
    rgb: &[u8],
    width: u32,
    height: u32,
    masks: &[BinaryMask],
    scores: &[Real],
    out_path: &Path,
) -> Result<()> {
    if scores.len() != masks.len() {
        return Err(Error::DimMismatch {
            context: "render_overlay: one score per mask",
            expected: masks.len(),
            got: scores.len(),
        });
    }
    let outline = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let composed = compose_overlay(rgb, width, height, masks, outline)?;
    write_ppm(out_path, width, height, &composed)
}

//! Run-length-encoded binary masks.
//!
//! A mask covers a `width × height` frame in row-major pixel order and is
//! stored as alternating run lengths, starting with a background run (which
//! may be zero when the very first pixel is foreground). The run lengths
//! always sum to `width × height`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary segmentation mask in run-length encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    /// Alternating background/foreground run lengths over row-major pixels.
    runs: Vec<u32>,
}

impl BinaryMask {
    /// Encodes a row-major bitmap. The resulting run list is canonical:
    /// only the leading background run may be zero.
    pub fn from_bitmap(width: u32, height: u32, pixels: &[bool]) -> Self {
        assert_eq!(
            pixels.len(),
            (width as usize) * (height as usize),
            "from_bitmap: pixel count must equal width × height"
        );
        let mut runs = Vec::new();
        let mut current = false; // runs start counting background
        let mut len: u32 = 0;
        for &p in pixels {
            if p == current {
                len += 1;
            } else {
                runs.push(len);
                current = p;
                len = 1;
            }
        }
        runs.push(len);
        if pixels.is_empty() {
            runs.clear();
        }
        BinaryMask { width, height, runs }
    }

    /// Builds an all-background mask.
    pub fn empty(width: u32, height: u32) -> Self {
        let total = width * height;
        BinaryMask {
            width,
            height,
            runs: if total > 0 { vec![total] } else { Vec::new() },
        }
    }

    /// Validates and adopts externally supplied run lengths (e.g. read
    /// from a dataset file). Zero-length runs are only legal in the
    /// leading position; the lengths must sum to `width × height`.
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::InvalidRle(format!(
                "run lengths sum to {total}, expected {expected} for {width}x{height}"
            )));
        }
        if runs.iter().skip(1).any(|&r| r == 0) {
            return Err(Error::InvalidRle(
                "zero-length run after the first position".into(),
            ));
        }
        if expected == 0 && !runs.is_empty() {
            return Err(Error::InvalidRle("runs present for empty frame".into()));
        }
        Ok(BinaryMask { width, height, runs })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    /// Decodes to a row-major bitmap.
    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut pixels = Vec::with_capacity((self.width as usize) * (self.height as usize));
        let mut fg = false;
        for &run in &self.runs {
            pixels.extend(std::iter::repeat(fg).take(run as usize));
            fg = !fg;
        }
        pixels
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.runs
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&r| r as u64)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Foreground test for one pixel.
    pub fn contains(&self, x: u32, y: u32) -> bool {
        let idx = y as u64 * self.width as u64 + x as u64;
        let mut seen: u64 = 0;
        let mut fg = false;
        for &run in &self.runs {
            seen += run as u64;
            if idx < seen {
                return fg;
            }
            fg = !fg;
        }
        false
    }

    /// Pixel count of the intersection, by walking both run lists in
    /// lockstep without materializing bitmaps.
    pub fn intersection_area(&self, other: &Self) -> Result<u64> {
        self.check_same_size(other)?;
        let mut inter: u64 = 0;
        let (mut i, mut j) = (0usize, 0usize);
        // (remaining length, is-foreground) cursors into each run list
        let mut a_rem = self.runs.first().copied().unwrap_or(0) as u64;
        let mut b_rem = other.runs.first().copied().unwrap_or(0) as u64;
        let (mut a_fg, mut b_fg) = (false, false);
        let total = self.width as u64 * self.height as u64;
        let mut consumed: u64 = 0;
        while consumed < total {
            while a_rem == 0 {
                i += 1;
                a_fg = !a_fg;
                a_rem = self.runs[i] as u64;
            }
            while b_rem == 0 {
                j += 1;
                b_fg = !b_fg;
                b_rem = other.runs[j] as u64;
            }
            let step = a_rem.min(b_rem);
            if a_fg && b_fg {
                inter += step;
            }
            a_rem -= step;
            b_rem -= step;
            consumed += step;
        }
        Ok(inter)
    }

    /// Intersection-over-union. Two empty masks yield 0 rather than an
    /// error so the value can flow straight into similarity sums.
    pub fn iou(&self, other: &Self) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(0.0);
        }
        Ok(inter as f64 / union as f64)
    }

    /// Mirrors the mask around the vertical axis.
    pub fn horizontal_flip(&self) -> Self {
        let (w, h) = (self.width as usize, self.height as usize);
        let src = self.to_bitmap();
        let mut dst = vec![false; src.len()];
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = src[y * w + (w - 1 - x)];
            }
        }
        BinaryMask::from_bitmap(self.width, self.height, &dst)
    }

    /// Removes one boundary layer (4-neighborhood erosion). Pixels on the
    /// frame edge count their out-of-frame neighbors as background.
    pub fn erode(&self) -> Self {
        let (w, h) = (self.width as i64, self.height as i64);
        let src = self.to_bitmap();
        let at = |x: i64, y: i64| -> bool {
            x >= 0 && y >= 0 && x < w && y < h && src[(y * w + x) as usize]
        };
        let mut dst = vec![false; src.len()];
        for y in 0..h {
            for x in 0..w {
                dst[(y * w + x) as usize] = at(x, y)
                    && at(x - 1, y)
                    && at(x + 1, y)
                    && at(x, y - 1)
                    && at(x, y + 1);
            }
        }
        BinaryMask::from_bitmap(self.width, self.height, &dst)
    }

    /// Adds one boundary layer (4-neighborhood dilation), clipped to the
    /// frame.
    pub fn dilate(&self) -> Self {
        let (w, h) = (self.width as i64, self.height as i64);
        let src = self.to_bitmap();
        let at = |x: i64, y: i64| -> bool {
            x >= 0 && y >= 0 && x < w && y < h && src[(y * w + x) as usize]
        };
        let mut dst = vec![false; src.len()];
        for y in 0..h {
            for x in 0..w {
                dst[(y * w + x) as usize] = at(x, y)
                    || at(x - 1, y)
                    || at(x + 1, y)
                    || at(x, y - 1)
                    || at(x, y + 1);
            }
        }
        BinaryMask::from_bitmap(self.width, self.height, &dst)
    }

    fn check_same_size(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::MaskSizeMismatch {
                a_w: self.width,
                a_h: self.height,
                b_w: other.width,
                b_h: other.height,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Rectangle helper for readable test masks.
    fn rect(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> BinaryMask {
        let mut px = vec![false; (w * h) as usize];
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                px[(y * w + x) as usize] = true;
            }
        }
        BinaryMask::from_bitmap(w, h, &px)
    }

    #[test]
    fn runs_start_with_background_and_sum_to_frame() {
        // 2×2 frame, foreground at (0,0): first run must be 0.
        let m = BinaryMask::from_bitmap(2, 2, &[true, false, false, false]);
        assert_eq!(m.runs(), &[0, 1, 3]);
        assert_eq!(m.runs().iter().sum::<u32>(), 4);
        assert_eq!(m.area(), 1);
    }

    #[test]
    fn from_runs_validates() {
        assert!(BinaryMask::from_runs(2, 2, vec![0, 1, 3]).is_ok());
        // wrong total
        assert!(matches!(
            BinaryMask::from_runs(2, 2, vec![0, 1, 2]),
            Err(Error::InvalidRle(_))
        ));
        // interior zero run
        assert!(matches!(
            BinaryMask::from_runs(2, 2, vec![1, 0, 3]),
            Err(Error::InvalidRle(_))
        ));
    }

    #[test]
    fn iou_identical_disjoint_and_counted_by_hand() {
        let a = rect(4, 4, 0, 0, 2, 2);
        assert_eq!(a.iou(&a).unwrap(), 1.0);

        let b = rect(4, 4, 2, 2, 2, 2);
        assert_eq!(a.iou(&b).unwrap(), 0.0);

        // 2×2 at (0,0) vs 2×2 at (1,0): overlap 2 px, union 6 px.
        let c = rect(4, 4, 1, 0, 2, 2);
        assert!((a.iou(&c).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_of_two_empty_masks_is_zero() {
        let a = BinaryMask::empty(4, 4);
        let b = BinaryMask::empty(4, 4);
        assert_eq!(a.iou(&b).unwrap(), 0.0);
    }

    #[test]
    fn iou_rejects_size_mismatch() {
        let a = BinaryMask::empty(4, 4);
        let b = BinaryMask::empty(4, 5);
        assert!(matches!(a.iou(&b), Err(Error::MaskSizeMismatch { .. })));
    }

    #[test]
    fn flip_moves_edge_pixel() {
        // single pixel at (0, y) lands at (W−1, y)
        let mut px = vec![false; 5 * 3];
        px[5] = true; // (0, 1)
        let m = BinaryMask::from_bitmap(5, 3, &px);
        let f = m.horizontal_flip();
        assert!(f.contains(4, 1));
        assert_eq!(f.area(), 1);
    }

    #[test]
    fn flip_fixes_symmetric_mask() {
        let m = rect(5, 5, 1, 1, 3, 3); // centered square
        assert_eq!(m.horizontal_flip(), m);
    }

    #[test]
    fn erode_then_dilate_shrinks_and_grows() {
        let m = rect(8, 8, 2, 2, 4, 4);
        let e = m.erode();
        assert_eq!(e, rect(8, 8, 3, 3, 2, 2));
        let d = m.dilate();
        assert_eq!(d.area(), 16 + 4 * 4); // plus one layer on each side
        // dilation is clipped at the frame boundary
        let corner = rect(3, 3, 0, 0, 1, 1);
        assert_eq!(corner.dilate().area(), 3);
    }

    /// Naive per-pixel IoU oracle.
    fn iou_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let (pa, pb) = (a.to_bitmap(), b.to_bitmap());
        let inter = pa.iter().zip(&pb).filter(|(&x, &y)| x && y).count();
        let union = pa.iter().zip(&pb).filter(|(&x, &y)| x || y).count();
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn run_walk_iou_matches_pixel_oracle_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w = rng.gen_range(1..=64);
            let h = rng.gen_range(1..=64);
            let n = (w * h) as usize;
            let density_a = rng.gen_range(0.0..1.0);
            let density_b = rng.gen_range(0.0..1.0);
            let pa: Vec<bool> = (0..n).map(|_| rng.gen_bool(density_a)).collect();
            let pb: Vec<bool> = (0..n).map(|_| rng.gen_bool(density_b)).collect();
            let a = BinaryMask::from_bitmap(w, h, &pa);
            let b = BinaryMask::from_bitmap(w, h, &pb);
            assert_eq!(a.iou(&b).unwrap(), iou_oracle(&a, &b));
            // symmetry
            assert_eq!(a.iou(&b).unwrap(), b.iou(&a).unwrap());
        }
    }

    proptest! {
        #[test]
        fn rle_round_trip_is_lossless(
            w in 1u32..=24,
            h in 1u32..=24,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let px: Vec<bool> = (0..(w * h) as usize).map(|_| rng.gen_bool(0.4)).collect();
            let m = BinaryMask::from_bitmap(w, h, &px);
            prop_assert_eq!(m.to_bitmap(), px);
            // and the runs round-trip through the validating constructor
            let rebuilt = BinaryMask::from_runs(w, h, m.runs().to_vec()).unwrap();
            prop_assert_eq!(rebuilt, m);
        }

        #[test]
        fn flip_is_an_involution(
            w in 1u32..=24,
            h in 1u32..=24,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let px: Vec<bool> = (0..(w * h) as usize).map(|_| rng.gen_bool(0.4)).collect();
            let m = BinaryMask::from_bitmap(w, h, &px);
            let flipped = m.horizontal_flip();
            prop_assert_eq!(flipped.area(), m.area());
            prop_assert_eq!(flipped.horizontal_flip(), m);
        }
    }
}

//! Detection outputs to network inputs: normalized bounding-box vectors,
//! downsampled binary masks and min-max scaled positions. Every output lies
//! in [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MaskGrid;
use crate::scene_sim::PixelBBox;

/// Default mask resolution fed to the mask network.
pub const MASK_SIDE: usize = 32;

/// `[x_c / W, y_c / H, w / W, h / H]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBoxSemantic(pub [f64; 4]);

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSemantic {
    pub width: usize,
    pub height: usize,
    /// Row-major, `height` rows of `width` values.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSemantic(pub [f64; 2]);

pub fn bbox_vector(b: &PixelBBox, width: f64, height: f64) -> Result<BBoxSemantic> {
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::Domain(format!("image size {width}x{height} must be positive")));
    }
    let v = [b.x_c / width, b.y_c / height, b.w / width, b.h / height];
    Ok(BBoxSemantic(v.map(|x| x.clamp(0.0, 1.0))))
}

/// Block-max pooling over a uniform tiling: output cell `(i, j)` covers input
/// columns `floor(i W / W') .. ceil((i + 1) W / W')` (and likewise for rows)
/// and is 1 iff any covered pixel is set.
pub fn downsample_mask(mask: &MaskGrid, out_w: usize, out_h: usize) -> Result<MaskSemantic> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Domain("target mask size must be positive".into()));
    }
    let (w, h) = (mask.width(), mask.height());
    if out_w > w || out_h > h {
        return Err(Error::Domain(format!(
            "cannot downsample {w}x{h} to a larger {out_w}x{out_h}"
        )));
    }
    let span = |i: usize, n: usize, out: usize| (i * n / out, ((i + 1) * n).div_ceil(out));
    let mut values = vec![0.0; out_w * out_h];
    for j in 0..out_h {
        let (y0, y1) = span(j, h, out_h);
        for i in 0..out_w {
            let (x0, x1) = span(i, w, out_w);
            let hit = (y0..y1).any(|y| (x0..x1).any(|x| mask.get(x, y) != 0));
            values[j * out_w + i] = if hit { 1.0 } else { 0.0 };
        }
    }
    Ok(MaskSemantic {
        width: out_w,
        height: out_h,
        values,
    })
}

/// Per-dimension min/max taken from the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl PositionBounds {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Result<Self> {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        for d in 0..2 {
            if !(self.min[d] < self.max[d]) || !self.min[d].is_finite() || !self.max[d].is_finite() {
                return Err(Error::Domain(format!(
                    "degenerate position bounds in dimension {d}: [{}, {}]",
                    self.min[d], self.max[d]
                )));
            }
        }
        Ok(())
    }
}

pub fn normalize_position(pos: [f64; 2], bounds: &PositionBounds) -> Result<PositionSemantic> {
    bounds.validate()?;
    let mut out = [0.0; 2];
    for d in 0..2 {
        out[d] = ((pos[d] - bounds.min[d]) / (bounds.max[d] - bounds.min[d])).clamp(0.0, 1.0);
    }
    Ok(PositionSemantic(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_image_box() {
        let b = PixelBBox { x_c: 320.0, y_c: 180.0, w: 640.0, h: 360.0 };
        assert_eq!(bbox_vector(&b, 640.0, 360.0).unwrap().0, [0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn bbox_vector_divides() {
        let b = PixelBBox { x_c: 160.0, y_c: 90.0, w: 64.0, h: 36.0 };
        let v = bbox_vector(&b, 640.0, 360.0).unwrap();
        assert_eq!(v.0.len(), 4);
        assert_eq!(v.0[0], 0.25);
        assert!(matches!(bbox_vector(&b, 0.0, 360.0), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_and_full_masks() {
        let zero = MaskGrid::filled(640, 360, 0);
        assert!(downsample_mask(&zero, 32, 32).unwrap().values.iter().all(|&v| v == 0.0));
        let ones = MaskGrid::filled(640, 360, 1);
        assert!(downsample_mask(&ones, 32, 32).unwrap().values.iter().all(|&v| v == 1.0));
        assert!(matches!(downsample_mask(&ones, 0, 32), Err(Error::Domain(_))));
        assert!(matches!(downsample_mask(&ones, 700, 32), Err(Error::Domain(_))));
    }

    /// Pixel-driven oracle: each set pixel `[x, x+1)` lights every cell whose
    /// continuous interval `[i W/W', (i+1) W/W')` it overlaps.
    fn oracle(mask: &MaskGrid, ow: usize, oh: usize) -> Vec<f64> {
        let (w, h) = (mask.width(), mask.height());
        let mut out = vec![0.0; ow * oh];
        let cells = |p: usize, n: usize, o: usize| {
            // first cell: floor(p o / n); last: ceil((p + 1) o / n) - 1
            let first = p * o / n;
            let last = ((p + 1) * o).div_ceil(n) - 1;
            first..=last.min(o - 1)
        };
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) == 1 {
                    for j in cells(y, h, oh) {
                        for i in cells(x, w, ow) {
                            out[j * ow + i] = 1.0;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn blob_matches_pixel_scan_oracle() {
        for (bx, by) in [(0, 0), (300, 170), (617, 339), (13, 201), (455, 77)] {
            let mut mask = MaskGrid::filled(640, 360, 0);
            for y in by..(by + 20).min(360) {
                for x in bx..(bx + 20).min(640) {
                    mask.set(x, y, 1);
                }
            }
            let got = downsample_mask(&mask, 32, 32).unwrap();
            assert_eq!(got.values, oracle(&mask, 32, 32), "blob at ({bx}, {by})");
            assert!(got.values.iter().any(|&v| v == 1.0));
        }
    }

    #[test]
    fn position_endpoints_and_midpoint() {
        let b = PositionBounds { min: [-10.0, 5.0], max: [30.0, 25.0] };
        assert_eq!(normalize_position([-10.0, 5.0], &b).unwrap().0, [0.0, 0.0]);
        assert_eq!(normalize_position([30.0, 25.0], &b).unwrap().0, [1.0, 1.0]);
        assert_eq!(normalize_position([10.0, 15.0], &b).unwrap().0, [0.5, 0.5]);
        assert_eq!(normalize_position([99.0, -99.0], &b).unwrap().0, [1.0, 0.0]);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let b = PositionBounds { min: [0.0, 1.0], max: [0.0, 2.0] };
        assert!(matches!(normalize_position([0.0, 1.5], &b), Err(Error::Domain(_))));
        assert!(PositionBounds::from_points(&[[1.0, 1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn bbox_vector_is_scale_consistent(
            xc in 1.0f64..600.0, yc in 1.0f64..300.0, w in 1.0f64..50.0, h in 1.0f64..50.0,
            k in prop::sample::select(vec![0.5, 2.0, 4.0, 0.25]),
        ) {
            let b = PixelBBox { x_c: xc, y_c: yc, w, h };
            let s = PixelBBox { x_c: xc * k, y_c: yc * k, w: w * k, h: h * k };
            let a = bbox_vector(&b, 640.0, 360.0).unwrap();
            let c = bbox_vector(&s, 640.0 * k, 360.0 * k).unwrap();
            prop_assert_eq!(a, c);
            prop_assert!(a.0.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn downsampling_preserves_presence(
            w in 8usize..90, h in 8usize..90, ow in 1usize..8, oh in 1usize..8,
            px in 0usize..10_000,
        ) {
            let mut mask = MaskGrid::filled(w, h, 0);
            mask.set(px % w, (px / w) % h, 1);
            let out = downsample_mask(&mask, ow, oh).unwrap();
            prop_assert!(out.values.iter().any(|&v| v == 1.0));
            prop_assert!(out.values.iter().all(|&v| v == 0.0 || v == 1.0));
            prop_assert_eq!(out.values, oracle(&mask, ow, oh));
        }
    }
}

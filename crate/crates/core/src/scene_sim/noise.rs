//! Detector noise: box jitter, ragged mask boundaries, speckle, GPS error
//! and outright misses.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{PixelBBox, Sample};
use crate::error::{Error, Result};
use crate::grid::MaskGrid;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Std-dev of box center/size jitter as a fraction of the box size.
    pub bbox_jitter: f64,
    /// Probability of flipping each mask boundary pixel.
    pub mask_flip_prob: f64,
    /// Per-pixel probability of a spurious foreground pixel.
    pub mask_speckle_prob: f64,
    /// GPS std-dev per axis, meters.
    pub gps_sigma: f64,
    pub miss_prob: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("mask_flip_prob", self.mask_flip_prob),
            ("mask_speckle_prob", self.mask_speckle_prob),
            ("miss_prob", self.miss_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        for (name, s) in [("bbox_jitter", self.bbox_jitter), ("gps_sigma", self.gps_sigma)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("{name} = {s} must be >= 0")));
            }
        }
        Ok(())
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Clamps one axis of a box into `[0, limit]`, keeping at least one pixel.
fn clip_axis(center: f64, size: f64, limit: f64) -> (f64, f64) {
    let lo = (center - size / 2.0).clamp(0.0, limit);
    let hi = (center + size / 2.0).clamp(0.0, limit);
    if hi - lo >= 1.0 {
        return (lo, hi);
    }
    let c = center.clamp(0.5, (limit - 0.5).max(0.5));
    (c - 0.5, c + 0.5)
}

fn jitter_bbox<R: Rng + ?Sized>(b: &PixelBBox, sigma: f64, width: f64, height: f64, rng: &mut R) -> PixelBBox {
    let x_c = b.x_c + sigma * b.w * gauss(rng);
    let y_c = b.y_c + sigma * b.h * gauss(rng);
    let w = (b.w * (1.0 + sigma * gauss(rng))).max(1.0);
    let h = (b.h * (1.0 + sigma * gauss(rng))).max(1.0);
    let (x0, x1) = clip_axis(x_c, w, width);
    let (y0, y1) = clip_axis(y_c, h, height);
    PixelBBox::from_edges(x0, y0, x1, y1)
}

fn is_boundary(mask: &MaskGrid, x: usize, y: usize) -> bool {
    let v = mask.get(x, y);
    (x > 0 && mask.get(x - 1, y) != v)
        || (x + 1 < mask.width() && mask.get(x + 1, y) != v)
        || (y > 0 && mask.get(x, y - 1) != v)
        || (y + 1 < mask.height() && mask.get(x, y + 1) != v)
}

fn roughen_mask<R: Rng + ?Sized>(mask: &MaskGrid, flip: f64, speckle: f64, rng: &mut R) -> MaskGrid {
    let mut out = mask.clone();
    let (w, h) = (mask.width(), mask.height());
    if flip > 0.0 {
        for y in 0..h {
            for x in 0..w {
                if is_boundary(mask, x, y) && rng.random::<f64>() < flip {
                    out.set(x, y, 1 - mask.get(x, y));
                }
            }
        }
    }
    if speckle > 0.0 {
        let count = Binomial::new((w * h) as u64, speckle)
            .map(|d| d.sample(rng))
            .unwrap_or(0);
        for _ in 0..count {
            let x = rng.random_range(0..w);
            let y = rng.random_range(0..h);
            out.set(x, y, 1);
        }
    }
    out
}

/// Applies the detector noise model to a clean sample. Expects a validated
/// `NoiseConfig`; an all-zero config returns the sample unchanged.
pub fn perturb_detection<R: Rng + ?Sized>(mut sample: Sample, noise: &NoiseConfig, rng: &mut R) -> Sample {
    let (w, h) = (sample.mask.width() as f64, sample.mask.height() as f64);
    if noise.miss_prob > 0.0 && rng.random::<f64>() < noise.miss_prob {
        sample.missed = true;
    }
    if noise.bbox_jitter > 0.0 {
        sample.bbox = jitter_bbox(&sample.bbox, noise.bbox_jitter, w, h, rng);
    }
    if noise.mask_flip_prob > 0.0 || noise.mask_speckle_prob > 0.0 {
        sample.mask = roughen_mask(&sample.mask, noise.mask_flip_prob, noise.mask_speckle_prob, rng);
    }
    if noise.gps_sigma > 0.0 {
        sample.gps[0] += noise.gps_sigma * gauss(rng);
        sample.gps[1] += noise.gps_sigma * gauss(rng);
    }
    sample
}

//! Synthetic roadway scenes seen by a basestation camera.
//!
//! The basestation sits at the ground-plane origin with its array along the
//! x axis and its camera looking along +y. One vehicle on the road is the
//! transmitter; optional distractor vehicles share the road on parallel
//! lanes. Each frame is projected through a pinhole camera to produce the
//! transmitter's bounding box and binary mask plus a grayscale raster of the
//! whole scene, and is labelled with the SNR-optimal codebook beam.

mod camera;
mod dataset;
mod noise;
pub mod pgm;
mod preset;

pub use camera::{
    background_level, convex_hull, project_bbox, project_corners, render_mask, render_raster,
    render_vehicles, Camera, PixelBBox,
};
pub use dataset::{
    audit_labels, frame_for, generate_dataset, generate_records, label_for, load_dataset,
    read_manifest, read_meta, read_poses, write_dataset, write_manifest, Dataset, DatasetMeta,
    DatasetRecord, ManifestRow, PoseRow, Sample, Split, MANIFEST_FILE, META_FILE, POSES_FILE,
};
pub use noise::{perturb_detection, NoiseConfig};
pub use preset::{Preset, PRESET_NAMES};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lighting {
    Day,
    Night,
}

/// Inclusive `[lo, hi]` range for uniform draws.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub image_width: usize,
    pub image_height: usize,
    #[serde(default = "one")]
    pub channels: usize,
    /// Pinhole focal length, pixels.
    pub focal_length: f64,
    /// Camera height above ground, meters.
    pub camera_height: f64,
    /// Road segment end points in ground-plane meters.
    pub road_start: [f64; 2],
    pub road_end: [f64; 2],
    pub vehicle_length: Range,
    pub vehicle_width: Range,
    pub vehicle_height: Range,
    pub num_distractors: [usize; 2],
    /// Lateral lane offsets (meters, away from the basestation) available to
    /// distractors. Offset 0 is the transmitter's lane.
    #[serde(default = "default_lanes")]
    pub distractor_lanes: Vec<f64>,
    pub lighting: Lighting,
    pub num_samples: usize,
    /// Integer factor by which stored mask/raster files are reduced.
    #[serde(default = "one")]
    pub storage_scale: usize,
}

fn one() -> usize {
    1
}

fn default_lanes() -> Vec<f64> {
    vec![0.0, 3.5]
}

/// Minimum bumper-to-bumper gap between vehicles sharing a lane, meters.
const LANE_GAP: f64 = 0.5;
const MAX_PLACEMENT_TRIES: usize = 200;

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if self.channels != 1 {
            return Err(Error::Config("only grayscale (channels = 1) rasters are rendered".into()));
        }
        if self.storage_scale == 0
            || self.image_width % self.storage_scale != 0
            || self.image_height % self.storage_scale != 0
        {
            return Err(Error::Config(format!(
                "storage_scale {} must divide {}x{}",
                self.storage_scale, self.image_width, self.image_height
            )));
        }
        if !(self.focal_length > 0.0 && self.camera_height > 0.0) {
            return Err(Error::Config("focal_length and camera_height must be positive".into()));
        }
        for (name, r) in [
            ("vehicle_length", self.vehicle_length),
            ("vehicle_width", self.vehicle_width),
            ("vehicle_height", self.vehicle_height),
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return Err(Error::Config(format!("{name} must satisfy 0 < lo <= hi")));
            }
        }
        if self.num_distractors[0] > self.num_distractors[1] {
            return Err(Error::Config("num_distractors lo > hi".into()));
        }
        if self.num_distractors[1] > 0 && self.distractor_lanes.is_empty() {
            return Err(Error::Config("distractors need at least one lane".into()));
        }
        if self.num_distractors[1] + 1 > PALETTE.len() {
            return Err(Error::Config(format!(
                "at most {} distractors supported",
                PALETTE.len() - 1
            )));
        }
        let camera = Camera::from_config(self);
        let half_len = self.vehicle_length[1] / 2.0;
        for p in [self.road_start, self.road_end] {
            let depth = p[1] - self.vehicle_width[1] / 2.0;
            if depth <= 0.0 {
                return Err(Error::Config(format!("road point {p:?} is behind the camera")));
            }
            let (u_left, _) = camera.project([p[0] - half_len, depth, 0.0])?;
            let (u_right, _) = camera.project([p[0] + half_len, depth, 0.0])?;
            let (u, _) = camera.project([p[0], p[1], 0.0])?;
            if !(0.0..=self.image_width as f64).contains(&u)
                || u_right < 0.0
                || u_left > self.image_width as f64
            {
                return Err(Error::Config(format!(
                    "road point {p:?} projects outside the image"
                )));
            }
        }
        Ok(())
    }

    pub fn road_length(&self) -> f64 {
        let dx = self.road_end[0] - self.road_start[0];
        let dy = self.road_end[1] - self.road_start[1];
        dx.hypot(dy)
    }

    /// Unit vector along the road (x axis for a degenerate segment).
    pub fn road_direction(&self) -> [f64; 2] {
        let len = self.road_length();
        if len == 0.0 {
            return [1.0, 0.0];
        }
        [
            (self.road_end[0] - self.road_start[0]) / len,
            (self.road_end[1] - self.road_start[1]) / len,
        ]
    }

    /// Unit normal pointing away from the basestation.
    fn road_normal(&self) -> [f64; 2] {
        let [dx, dy] = self.road_direction();
        let n = [-dy, dx];
        let mid = [
            (self.road_start[0] + self.road_end[0]) / 2.0,
            (self.road_start[1] + self.road_end[1]) / 2.0,
        ];
        if n[0] * mid[0] + n[1] * mid[1] >= 0.0 {
            n
        } else {
            [-n[0], -n[1]]
        }
    }

    fn road_point(&self, t: f64, lane: f64) -> [f64; 2] {
        let n = self.road_normal();
        [
            self.road_start[0] + t * (self.road_end[0] - self.road_start[0]) + lane * n[0],
            self.road_start[1] + t * (self.road_end[1] - self.road_start[1]) + lane * n[1],
        ]
    }
}

/// Gray levels available to vehicles; each vehicle in a frame gets a distinct one.
const PALETTE: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Box-shaped vehicle on the ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub x: f64,
    pub y: f64,
    /// Heading of the long axis, radians from +x.
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Raster gray level in [0, 1].
    pub gray: f64,
}

impl Vehicle {
    /// The eight box corners in world coordinates (z up).
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let (s, c) = self.heading.sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let mut out = [[0.0; 3]; 8];
        let mut i = 0;
        for &dl in &[-hl, hl] {
            for &dw in &[-hw, hw] {
                for &z in &[0.0, self.height] {
                    out[i] = [self.x + dl * c - dw * s, self.y + dl * s + dw * c, z];
                    i += 1;
                }
            }
        }
        out
    }

    pub fn azimuth(&self) -> f64 {
        self.x.atan2(self.y)
    }

    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub transmitter: Vehicle,
    pub distractors: Vec<Vehicle>,
    /// Azimuth of the transmitter seen from the basestation, radians.
    pub azimuth: f64,
    /// Ground range to the transmitter, meters.
    pub range: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: Range) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Draws one frame: transmitter uniform along the road, distractors on the
/// configured lanes without footprint overlap.
pub fn sample_scene<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<SceneFrame> {
    let dir = cfg.road_direction();
    let heading = dir[1].atan2(dir[0]);
    let road_len = cfg.road_length();

    let mut palette = PALETTE;
    palette.shuffle(rng);
    let mut grays = palette.into_iter();

    let t = rng.random_range(0.0..=1.0);
    let [x, y] = cfg.road_point(t, 0.0);
    let transmitter = Vehicle {
        x,
        y,
        heading,
        length: uniform(rng, cfg.vehicle_length),
        width: uniform(rng, cfg.vehicle_width),
        height: uniform(rng, cfg.vehicle_height),
        gray: grays.next().unwrap(),
    };

    let [lo, hi] = cfg.num_distractors;
    let count = rng.random_range(lo..=hi);
    // (along-road position, lane offset, length, width) of everything placed so far
    let mut placed = vec![(t * road_len, 0.0, transmitter.length, transmitter.width)];
    let mut distractors = Vec::with_capacity(count);
    for _ in 0..count {
        let length = uniform(rng, cfg.vehicle_length);
        let width = uniform(rng, cfg.vehicle_width);
        let height = uniform(rng, cfg.vehicle_height);
        let mut spot = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let lane = cfg.distractor_lanes[rng.random_range(0..cfg.distractor_lanes.len())];
            let t = rng.random_range(0.0..=1.0);
            let s = t * road_len;
            let clear = placed.iter().all(|&(ps, pl, plen, pw)| {
                (s - ps).abs() >= (length + plen) / 2.0 + LANE_GAP
                    || (lane - pl).abs() >= (width + pw) / 2.0
            });
            if clear {
                spot = Some((t, s, lane));
                break;
            }
        }
        let Some((t, s, lane)) = spot else {
            return Err(Error::Generation(format!(
                "no room for distractor {} of {count} on the road",
                distractors.len() + 1
            )));
        };
        placed.push((s, lane, length, width));
        let [x, y] = cfg.road_point(t, lane);
        distractors.push(Vehicle {
            x,
            y,
            heading,
            length,
            width,
            height,
            gray: grays.next().unwrap(),
        });
    }

    Ok(SceneFrame {
        azimuth: transmitter.azimuth(),
        range: transmitter.range(),
        transmitter,
        distractors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_channel::{build_codebook, optimal_beam, synth_channel};
    use crate::seed::rng_for;

    fn s5() -> SceneConfig {
        Preset::builtin("scenario5").unwrap().scene
    }

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            let p = Preset::builtin(name).unwrap();
            p.validate().unwrap();
        }
    }

    #[test]
    fn same_seed_same_frame() {
        let cfg = s5();
        let a = sample_scene(&cfg, &mut rng_for(5, &[1])).unwrap();
        let b = sample_scene(&cfg, &mut rng_for(5, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_length_road_pins_position() {
        let mut cfg = s5();
        cfg.road_end = cfg.road_start;
        cfg.num_distractors = [0, 0];
        let mut rng = rng_for(1, &[]);
        for _ in 0..50 {
            let f = sample_scene(&cfg, &mut rng).unwrap();
            assert_eq!([f.transmitter.x, f.transmitter.y], cfg.road_start);
        }
    }

    #[test]
    fn distractors_never_overlap_transmitter() {
        let cfg = s5();
        let mut rng = rng_for(2, &[]);
        for _ in 0..500 {
            let f = sample_scene(&cfg, &mut rng).unwrap();
            assert!(f.distractors.len() >= cfg.num_distractors[0]);
            assert!(f.distractors.len() <= cfg.num_distractors[1]);
            let t = &f.transmitter;
            let [dx, dy] = cfg.road_direction();
            for d in &f.distractors {
                let (rx, ry) = (d.x - t.x, d.y - t.y);
                let along = (rx * dx + ry * dy).abs();
                let across = (-rx * dy + ry * dx).abs();
                assert!(
                    along >= (d.length + t.length) / 2.0 || across >= (d.width + t.width) / 2.0 - 1e-9
                );
            }
            let mut grays: Vec<f64> = f.distractors.iter().map(|d| d.gray).collect();
            grays.push(t.gray);
            grays.sort_by(f64::total_cmp);
            grays.dedup();
            assert_eq!(grays.len(), f.distractors.len() + 1);
        }
    }

    #[test]
    fn crowded_short_road_reports_generation_error() {
        let mut cfg = s5();
        cfg.road_end = [cfg.road_start[0] + 1.0, cfg.road_start[1]];
        cfg.distractor_lanes = vec![0.0];
        cfg.num_distractors = [3, 3];
        let err = sample_scene(&cfg, &mut rng_for(0, &[])).unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
    }

    #[test]
    fn transmitter_azimuths_cover_the_codebook() {
        for name in PRESET_NAMES {
            let p = Preset::builtin(name).unwrap();
            let mut ch = p.channel.clone();
            ch.num_nlos_paths = 0;
            let cb = build_codebook(&ch).unwrap();
            let mut hits = vec![0usize; cb.len()];
            let mut rng = rng_for(3, &[]);
            for _ in 0..10_000 {
                let f = sample_scene(&p.scene, &mut rng).unwrap();
                assert!(f.azimuth.abs() <= ch.max_azimuth() + 1e-9);
                assert!(f.range > 0.0);
                let h = synth_channel(f.azimuth, f.range, &ch, &mut rng).unwrap();
                hits[optimal_beam(&h, &cb, &ch).unwrap()] += 1;
            }
            let covered = hits.iter().filter(|&&c| c > 0).count();
            assert!(
                covered as f64 >= 0.95 * cb.len() as f64,
                "{name}: {covered}/{} bins",
                cb.len()
            );
        }
    }
}

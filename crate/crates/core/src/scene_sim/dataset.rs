//! Dataset generation and the on-disk layout.
//!
//! A dataset directory holds:
//!
//! - `manifest.csv`: one row per sample (detector view: noisy box, noisy GPS,
//!   file paths, label, split, miss flag);
//! - `poses.csv`: the true transmitter pose and clean box per sample, used to
//!   audit labels;
//! - `dataset.toml`: the generating preset and seed;
//! - `masks/NNNNN.pgm`, `rasters/NNNNN.pgm`: 8-bit P5 images at
//!   `1 / storage_scale` of the camera resolution.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    perturb_detection, project_bbox, render_mask, render_raster, sample_scene, pgm, PixelBBox,
    Preset, SceneFrame,
};
use crate::array_channel::{build_codebook, optimal_beam, synth_channel, Codebook};
use crate::error::{Error, Result};
use crate::grid::{GrayGrid, Grid, MaskGrid};
use crate::harness::{assign_splits, SplitSpec};
use crate::seed::{rng_for, stream};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const POSES_FILE: &str = "poses.csv";
pub const META_FILE: &str = "dataset.toml";
const MASK_DIR: &str = "masks";
const RASTER_DIR: &str = "rasters";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split tag `{other}`"))),
        }
    }
}

/// One fully rendered sample at camera resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: u64,
    /// Ground-plane position reported by GPS, meters.
    pub gps: [f64; 2],
    pub bbox_clean: PixelBBox,
    pub bbox: PixelBBox,
    pub mask: MaskGrid,
    pub raster: GrayGrid,
    pub beam: usize,
    pub split: Option<Split>,
    pub missed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample_id: u64,
    pub scenario: String,
    pub split: String,
    pub pos_x: f64,
    pub pos_y: f64,
    pub bbox_xc: f64,
    pub bbox_yc: f64,
    pub bbox_w: f64,
    pub bbox_h: f64,
    pub mask_path: String,
    pub raster_path: String,
    pub beam_index: usize,
    pub missed: u8,
}

impl ManifestRow {
    pub fn split_tag(&self) -> Result<Option<Split>> {
        if self.split.is_empty() {
            Ok(None)
        } else {
            self.split.parse().map(Some)
        }
    }

    pub fn bbox(&self) -> PixelBBox {
        PixelBBox {
            x_c: self.bbox_xc,
            y_c: self.bbox_yc,
            w: self.bbox_w,
            h: self.bbox_h,
        }
    }

    pub fn is_missed(&self) -> bool {
        self.missed != 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub sample_id: u64,
    pub tx_x: f64,
    pub tx_y: f64,
    pub tx_heading: f64,
    pub tx_length: f64,
    pub tx_width: f64,
    pub tx_height: f64,
    pub azimuth: f64,
    pub range: f64,
    pub clean_xc: f64,
    pub clean_yc: f64,
    pub clean_w: f64,
    pub clean_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub preset: Preset,
}

/// A sample as stored: manifest row, true pose, and the reduced-resolution
/// mask and raster.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub row: ManifestRow,
    pub pose: PoseRow,
    pub mask: MaskGrid,
    pub raster: Grid<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn image_size(&self) -> (usize, usize) {
        let s = &self.meta.preset.scene;
        (s.image_width, s.image_height)
    }

    pub fn manifest(&self) -> Vec<ManifestRow> {
        self.records.iter().map(|r| r.row.clone()).collect()
    }
}

pub fn frame_for(preset: &Preset, seed: u64, sample_id: u64) -> Result<SceneFrame> {
    sample_scene(&preset.scene, &mut rng_for(seed, &[stream::SCENE, sample_id]))
}

/// Beam label from a pose; the channel's random scatterers come from the
/// sample's own seed stream, so the label is reproducible from the pose alone.
pub fn label_for(
    preset: &Preset,
    codebook: &Codebook,
    seed: u64,
    sample_id: u64,
    azimuth: f64,
    range: f64,
) -> Result<usize> {
    let mut rng = rng_for(seed, &[stream::CHANNEL, sample_id]);
    let h = synth_channel(azimuth, range, &preset.channel, &mut rng)?;
    optimal_beam(&h, codebook, &preset.channel)
}

fn render_sample(preset: &Preset, codebook: &Codebook, seed: u64, id: u64) -> Result<(Sample, SceneFrame)> {
    let frame = frame_for(preset, seed, id)?;
    let bbox = project_bbox(&frame, &preset.scene)?;
    let mask = render_mask(&frame, &preset.scene)?;
    let raster = render_raster(&frame, &preset.scene)?;
    let beam = label_for(preset, codebook, seed, id, frame.azimuth, frame.range)?;
    let clean = Sample {
        sample_id: id,
        gps: [frame.transmitter.x, frame.transmitter.y],
        bbox_clean: bbox,
        bbox,
        mask,
        raster,
        beam,
        split: None,
        missed: false,
    };
    let noisy = perturb_detection(clean, &preset.noise, &mut rng_for(seed, &[stream::NOISE, id]));
    Ok((noisy, frame))
}

/// Block-max reduction by an integer factor.
fn shrink_mask(mask: &MaskGrid, scale: usize) -> MaskGrid {
    let (w, h) = (mask.width() / scale, mask.height() / scale);
    let mut out = MaskGrid::filled(w, h, 0);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) != 0 {
                out.set(x / scale, y / scale, 1);
            }
        }
    }
    out
}

/// Block-mean reduction by an integer factor, quantized to 8 bits.
fn shrink_raster(raster: &GrayGrid, scale: usize) -> Grid<u8> {
    let (w, h) = (raster.width() / scale, raster.height() / scale);
    let mut out = Grid::filled(w, h, 0u8);
    let norm = 1.0 / (scale * scale) as f64;
    for by in 0..h {
        for bx in 0..w {
            let mut acc = 0.0f64;
            for y in by * scale..(by + 1) * scale {
                for x in bx * scale..(bx + 1) * scale {
                    acc += raster.get(x, y) as f64;
                }
            }
            out.set(bx, by, (acc * norm * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

fn file_name(id: u64) -> String {
    format!("{id:05}.pgm")
}

fn to_record(preset: &Preset, sample: Sample, frame: &SceneFrame) -> DatasetRecord {
    let scale = preset.scene.storage_scale;
    let tx = &frame.transmitter;
    let name = file_name(sample.sample_id);
    DatasetRecord {
        row: ManifestRow {
            sample_id: sample.sample_id,
            scenario: preset.name.clone(),
            split: String::new(),
            pos_x: sample.gps[0],
            pos_y: sample.gps[1],
            bbox_xc: sample.bbox.x_c,
            bbox_yc: sample.bbox.y_c,
            bbox_w: sample.bbox.w,
            bbox_h: sample.bbox.h,
            mask_path: format!("{MASK_DIR}/{name}"),
            raster_path: format!("{RASTER_DIR}/{name}"),
            beam_index: sample.beam,
            missed: sample.missed as u8,
        },
        pose: PoseRow {
            sample_id: sample.sample_id,
            tx_x: tx.x,
            tx_y: tx.y,
            tx_heading: tx.heading,
            tx_length: tx.length,
            tx_width: tx.width,
            tx_height: tx.height,
            azimuth: frame.azimuth,
            range: frame.range,
            clean_xc: sample.bbox_clean.x_c,
            clean_yc: sample.bbox_clean.y_c,
            clean_w: sample.bbox_clean.w,
            clean_h: sample.bbox_clean.h,
        },
        mask: shrink_mask(&sample.mask, scale),
        raster: shrink_raster(&sample.raster, scale),
    }
}

/// Generates every sample in memory. Samples are produced in parallel from
/// per-sample seed streams and collected in `sample_id` order, then tagged
/// with the default 70/20/10 split.
pub fn generate_records(preset: &Preset, seed: u64) -> Result<Dataset> {
    preset.validate()?;
    let codebook = build_codebook(&preset.channel)?;
    let n = preset.scene.num_samples as u64;
    let mut records = (0..n)
        .into_par_iter()
        .map(|id| {
            let (sample, frame) = render_sample(preset, &codebook, seed, id)?;
            Ok(to_record(preset, sample, &frame))
        })
        .collect::<Result<Vec<_>>>()?;

    if records.len() >= 3 {
        let mut manifest: Vec<ManifestRow> = records.iter().map(|r| r.row.clone()).collect();
        assign_splits(&mut manifest, &SplitSpec::with_seed(seed))?;
        for (rec, row) in records.iter_mut().zip(manifest) {
            rec.row.split = row.split;
        }
    }
    Ok(Dataset {
        meta: DatasetMeta {
            seed,
            preset: preset.clone(),
        },
        records,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    write_csv(path, rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        wtr.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::parse(path, e)
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    read_csv(path)
}

pub fn read_poses(path: &Path) -> Result<Vec<PoseRow>> {
    read_csv(path)
}

/// Writes a generated dataset below `out`.
pub fn write_dataset(ds: &Dataset, out: &Path) -> Result<()> {
    create_dir(&out.join(MASK_DIR))?;
    create_dir(&out.join(RASTER_DIR))?;
    ds.records.par_iter().try_for_each(|rec| {
        let m = &rec.mask;
        let mask_px: Vec<u8> = m.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        pgm::write(&out.join(&rec.row.mask_path), m.width(), m.height(), &mask_px)?;
        let r = &rec.raster;
        pgm::write(&out.join(&rec.row.raster_path), r.width(), r.height(), r.data())
    })?;
    let rows: Vec<ManifestRow> = ds.records.iter().map(|r| r.row.clone()).collect();
    write_manifest(&out.join(MANIFEST_FILE), &rows)?;
    let poses: Vec<PoseRow> = ds.records.iter().map(|r| r.pose.clone()).collect();
    write_csv(&out.join(POSES_FILE), &poses)?;
    let meta_path = out.join(META_FILE);
    let meta = toml::to_string(&ds.meta).map_err(|e| Error::parse(&meta_path, e))?;
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
}

/// Generates `preset.scene.num_samples` samples and writes them to `out`.
pub fn generate_dataset(preset: &Preset, seed: u64, out: &Path) -> Result<Dataset> {
    let ds = generate_records(preset, seed)?;
    write_dataset(&ds, out)?;
    Ok(ds)
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::parse(&path, e))
}

/// Loads a dataset written by [`generate_dataset`]. Manifest rows may carry
/// any split tags; files are resolved relative to `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::io(
            &manifest_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        ));
    }
    let meta = read_meta(dir)?;
    let rows = read_manifest(&manifest_path)?;
    let poses = read_poses(&dir.join(POSES_FILE))?;
    if poses.len() != rows.len() {
        return Err(Error::parse(
            dir.join(POSES_FILE),
            format!("{} poses for {} manifest rows", poses.len(), rows.len()),
        ));
    }
    let records = rows
        .into_par_iter()
        .zip(poses)
        .map(|(row, pose)| {
            if row.sample_id != pose.sample_id {
                return Err(Error::parse(
                    dir.join(POSES_FILE),
                    format!("pose for sample {} out of order", row.sample_id),
                ));
            }
            let (w, h, px) = pgm::read(&resolve(dir, &row.mask_path))?;
            let mask = Grid::from_vec(w, h, px.into_iter().map(|v| (v >= 128) as u8).collect());
            let (w, h, px) = pgm::read(&resolve(dir, &row.raster_path))?;
            let raster = Grid::from_vec(w, h, px);
            Ok(DatasetRecord { row, pose, mask, raster })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { meta, records })
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}

/// Recomputes every label from the stored pose; returns the ids that disagree.
pub fn audit_labels(ds: &Dataset) -> Result<Vec<u64>> {
    let preset = &ds.meta.preset;
    let codebook = build_codebook(&preset.channel)?;
    let mut bad = Vec::new();
    for rec in &ds.records {
        let beam = label_for(
            preset,
            &codebook,
            ds.meta.seed,
            rec.pose.sample_id,
            rec.pose.azimuth,
            rec.pose.range,
        )?;
        if beam != rec.row.beam_index {
            bad.push(rec.row.sample_id);
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str, n: usize) -> Preset {
        let mut p = Preset::builtin(name).unwrap();
        p.scene.num_samples = n;
        p
    }

    #[test]
    fn generation_is_deterministic_and_labels_audit() {
        let p = small("scenario5", 40);
        let a = generate_records(&p, 11).unwrap();
        let b = generate_records(&p, 11).unwrap();
        assert_eq!(a, b);
        assert!(audit_labels(&a).unwrap().is_empty());
        for rec in &a.records {
            assert!(rec.row.beam_index < 64);
            assert!(rec.mask.data().iter().all(|&v| v <= 1));
            assert!(!rec.row.split.is_empty());
        }
        let c = generate_records(&p, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tampered_label_is_caught() {
        let p = small("scenario7", 10);
        let mut ds = generate_records(&p, 3).unwrap();
        ds.records[4].row.beam_index = (ds.records[4].row.beam_index + 1) % 64;
        assert_eq!(audit_labels(&ds).unwrap(), vec![4]);
    }

    #[test]
    fn disk_round_trip_is_byte_stable() {
        let p = small("scenario7", 12);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&p, 5, d1.path()).unwrap();
        generate_dataset(&p, 5, d2.path()).unwrap();
        let m1 = std::fs::read(d1.path().join(MANIFEST_FILE)).unwrap();
        let m2 = std::fs::read(d2.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m1, m2);
        let header = String::from_utf8(m1).unwrap().lines().next().unwrap().to_string();
        assert_eq!(
            header,
            "sample_id,scenario,split,pos_x,pos_y,bbox_xc,bbox_yc,bbox_w,bbox_h,mask_path,raster_path,beam_index,missed"
        );
        let back = load_dataset(d1.path()).unwrap();
        assert_eq!(back, ds);
        assert!(audit_labels(&back).unwrap().is_empty());
    }

    #[test]
    fn missing_manifest_names_the_path() {
        let d = tempfile::tempdir().unwrap();
        let err = load_dataset(d.path()).unwrap_err();
        assert!(err.to_string().contains("manifest.csv"));
    }

    #[test]
    fn stored_masks_keep_every_object() {
        let p = small("scenario5", 30).noiseless();
        let ds = generate_records(&p, 2).unwrap();
        for rec in &ds.records {
            assert!(rec.mask.count_ones() > 0);
            assert_eq!(rec.mask.width(), 160);
            assert_eq!(rec.mask.height(), 90);
        }
    }
}

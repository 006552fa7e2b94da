use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::predictors::PredictorKind;
use crate::scene_sim::{Dataset, DatasetRecord, Split};
use crate::semantics::{bbox_vector, downsample_mask, normalize_position, PositionBounds, MASK_SIDE};

/// Flattened inputs and labels for one split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitData {
    pub ids: Vec<u64>,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub sample_len: usize,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.sample_len..(i + 1) * self.sample_len]
    }

    pub fn subset(&self, idx: &[usize]) -> SplitData {
        let mut out = SplitData {
            sample_len: self.sample_len,
            ..Default::default()
        };
        for &i in idx {
            out.ids.push(self.ids[i]);
            out.inputs.extend_from_slice(self.sample(i));
            out.labels.push(self.labels[i]);
        }
        out
    }
}

/// Semantic inputs of one predictor kind for all three splits.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub kind: PredictorKind,
    pub input_shape: Vec<usize>,
    pub train: SplitData,
    pub val: SplitData,
    pub test: SplitData,
}

impl FeatureSet {
    pub fn split(&self, s: Split) -> &SplitData {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Min/max of the training positions. A dimension that never varies (a
/// straight road seen without GPS noise) is widened by half a meter each way
/// so it maps to a constant 0.5 instead of being rejected.
fn training_bounds(pts: &[[f64; 2]]) -> Result<PositionBounds> {
    if pts.is_empty() {
        return Err(Error::Split("training split has no usable samples".into()));
    }
    let mut b = PositionBounds {
        min: [f64::INFINITY; 2],
        max: [f64::NEG_INFINITY; 2],
    };
    for p in pts {
        for d in 0..2 {
            b.min[d] = b.min[d].min(p[d]);
            b.max[d] = b.max[d].max(p[d]);
        }
    }
    for d in 0..2 {
        if b.max[d] - b.min[d] < 1e-9 {
            b.min[d] -= 0.5;
            b.max[d] += 0.5;
        }
    }
    Ok(b)
}

/// Computes the semantic input of `kind` for every usable record. Samples
/// whose detection was missed carry no semantics and are left out of every
/// split; position bounds come from the training split.
pub fn build_features(ds: &Dataset, kind: PredictorKind) -> Result<FeatureSet> {
    let mut tagged: Vec<(Split, &DatasetRecord)> = Vec::with_capacity(ds.records.len());
    for rec in &ds.records {
        let split = rec.row.split_tag()?.ok_or_else(|| {
            Error::Split(format!("sample {} has no split tag", rec.row.sample_id))
        })?;
        if !rec.row.is_missed() {
            tagged.push((split, rec));
        }
    }
    let (img_w, img_h) = ds.image_size();
    let bounds = if kind == PredictorKind::PositionMlp {
        let pts: Vec<[f64; 2]> = tagged
            .iter()
            .filter(|(s, _)| *s == Split::Train)
            .map(|(_, r)| [r.row.pos_x, r.row.pos_y])
            .collect();
        Some(training_bounds(&pts)?)
    } else {
        None
    };
    let input_shape = match kind {
        PredictorKind::ImageCnnBaseline => {
            let r = &tagged
                .first()
                .ok_or_else(|| Error::Split("no usable samples".into()))?
                .1
                .raster;
            vec![1, r.height(), r.width()]
        }
        other => other.default_input_shape(),
    };
    let sample_len: usize = input_shape.iter().product();

    let encode = |rec: &DatasetRecord| -> Result<Vec<f64>> {
        let v = match kind {
            PredictorKind::BboxMlp => bbox_vector(&rec.row.bbox(), img_w as f64, img_h as f64)?.0.to_vec(),
            PredictorKind::PositionMlp => {
                let b = bounds.as_ref().expect("bounds computed");
                normalize_position([rec.row.pos_x, rec.row.pos_y], b)?.0.to_vec()
            }
            PredictorKind::MaskLenet => downsample_mask(&rec.mask, MASK_SIDE, MASK_SIDE)?.values,
            PredictorKind::ImageCnnBaseline => {
                rec.raster.data().iter().map(|&p| p as f64 / 255.0).collect()
            }
        };
        if v.len() != sample_len {
            return Err(Error::Contract(format!(
                "sample {} yields {} features, expected {sample_len}",
                rec.row.sample_id,
                v.len()
            )));
        }
        Ok(v)
    };
    let encoded: Vec<Vec<f64>> = tagged
        .par_iter()
        .map(|(_, rec)| encode(rec))
        .collect::<Result<_>>()?;

    let mut sets = [SplitData::default(), SplitData::default(), SplitData::default()];
    for ((split, rec), v) in tagged.iter().zip(encoded) {
        let d = &mut sets[*split as usize];
        d.sample_len = sample_len;
        d.ids.push(rec.row.sample_id);
        d.inputs.extend(v);
        d.labels.push(rec.row.beam_index);
    }
    let [train, val, test] = sets;
    Ok(FeatureSet {
        kind,
        input_shape,
        train,
        val,
        test,
    })
}

//! Predictor architectures as layer stacks, plus their default training
//! configurations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Model, TrainConfig};
use crate::semantics::MASK_SIDE;

pub const BBOX_HIDDEN: usize = 175;
pub const POSITION_HIDDEN: usize = 64;
pub const IMAGE_WIDTH: usize = 160;
pub const IMAGE_HEIGHT: usize = 90;
/// The image baseline must carry more than this multiple of the bbox MLP's parameters.
pub const IMAGE_TO_BBOX_MIN_RATIO: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    BboxMlp,
    MaskLenet,
    PositionMlp,
    ImageCnnBaseline,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 4] = [
        PredictorKind::PositionMlp,
        PredictorKind::BboxMlp,
        PredictorKind::MaskLenet,
        PredictorKind::ImageCnnBaseline,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PredictorKind::BboxMlp => "bbox_mlp",
            PredictorKind::MaskLenet => "mask_lenet",
            PredictorKind::PositionMlp => "position_mlp",
            PredictorKind::ImageCnnBaseline => "image_cnn_baseline",
        }
    }

    /// Stable small integer used to derive per-predictor seeds.
    pub fn ordinal(self) -> u64 {
        match self {
            PredictorKind::BboxMlp => 0,
            PredictorKind::MaskLenet => 1,
            PredictorKind::PositionMlp => 2,
            PredictorKind::ImageCnnBaseline => 3,
        }
    }

    /// Per-sample input shape with default dimensions.
    pub fn default_input_shape(self) -> Vec<usize> {
        match self {
            PredictorKind::BboxMlp => vec![4],
            PredictorKind::MaskLenet => vec![1, MASK_SIDE, MASK_SIDE],
            PredictorKind::PositionMlp => vec![2],
            PredictorKind::ImageCnnBaseline => vec![1, IMAGE_HEIGHT, IMAGE_WIDTH],
        }
    }

    pub fn default_layers(self, q: usize) -> Vec<LayerSpec> {
        match self {
            PredictorKind::BboxMlp => bbox_mlp_layers(q),
            PredictorKind::MaskLenet => mask_lenet_layers(q),
            PredictorKind::PositionMlp => position_mlp_layers(q),
            PredictorKind::ImageCnnBaseline => image_cnn_layers(q),
        }
    }

    pub fn default_train_config(self) -> TrainConfig {
        match self {
            PredictorKind::BboxMlp | PredictorKind::PositionMlp => TrainConfig::bbox_default(),
            PredictorKind::MaskLenet => TrainConfig::mask_default(),
            PredictorKind::ImageCnnBaseline => TrainConfig {
                batch_size: 32,
                base_lr: 1e-3,
                decay_epochs: vec![8],
                decay_factor: 0.1,
                total_epochs: 12,
                seed: 0,
            },
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| {
                let known: Vec<_> = PredictorKind::ALL.iter().map(|k| k.tag()).collect();
                Error::Config(format!("unknown predictor `{s}` (known: {})", known.join(", ")))
            })
    }
}

fn check_classes(q: usize) -> Result<()> {
    if q < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {q}")));
    }
    Ok(())
}

fn dense(units: usize) -> LayerSpec {
    LayerSpec::Dense { units }
}

fn conv(filters: usize, kernel: usize) -> LayerSpec {
    LayerSpec::Conv2d { filters, kernel, stride: 1 }
}

fn pool2() -> LayerSpec {
    LayerSpec::MaxPool2d { size: 2, stride: 2 }
}

fn bbox_mlp_layers(q: usize) -> Vec<LayerSpec> {
    vec![
        dense(BBOX_HIDDEN),
        LayerSpec::Relu,
        dense(BBOX_HIDDEN),
        LayerSpec::Relu,
        dense(q),
    ]
}

fn mask_lenet_layers(q: usize) -> Vec<LayerSpec> {
    vec![
        conv(6, 5),
        LayerSpec::Relu,
        pool2(),
        conv(16, 5),
        LayerSpec::Relu,
        pool2(),
        LayerSpec::Flatten,
        dense(120),
        LayerSpec::Relu,
        dense(q),
    ]
}

fn position_mlp_layers(q: usize) -> Vec<LayerSpec> {
    vec![dense(POSITION_HIDDEN), LayerSpec::Relu, dense(q)]
}

fn image_cnn_layers(q: usize) -> Vec<LayerSpec> {
    vec![
        conv(16, 3),
        LayerSpec::Relu,
        pool2(),
        conv(32, 3),
        LayerSpec::Relu,
        pool2(),
        conv(64, 3),
        LayerSpec::Relu,
        pool2(),
        LayerSpec::Flatten,
        dense(256),
        LayerSpec::Relu,
        dense(q),
    ]
}

/// Two hidden layers of 175 units and a `q`-way head over `[x_c, y_c, w, h]`.
pub fn build_bbox_mlp(q: usize, seed: u64) -> Result<Model> {
    check_classes(q)?;
    Model::new(vec![4], bbox_mlp_layers(q), seed)
}

/// LeNet-style stack over a `1 x h x w` mask; 400 flattened features at 32x32.
pub fn build_mask_lenet(w: usize, h: usize, q: usize, seed: u64) -> Result<Model> {
    check_classes(q)?;
    if (w, h) != (MASK_SIDE, MASK_SIDE) {
        return Err(Error::Shape {
            layer: 0,
            msg: format!("mask network expects {MASK_SIDE}x{MASK_SIDE} input, got {w}x{h}"),
        });
    }
    Model::new(vec![1, h, w], mask_lenet_layers(q), seed)
}

pub fn build_position_mlp(q: usize, seed: u64) -> Result<Model> {
    check_classes(q)?;
    Model::new(vec![2], position_mlp_layers(q), seed)
}

/// Raw-image baseline: three conv/pool blocks, a 256-unit dense layer and the head.
pub fn build_image_cnn_baseline(w: usize, h: usize, q: usize, seed: u64) -> Result<Model> {
    check_classes(q)?;
    let model = Model::new(vec![1, h, w], image_cnn_layers(q), seed)?;
    let bbox = bbox_param_count(q);
    if model.param_count() <= IMAGE_TO_BBOX_MIN_RATIO * bbox {
        return Err(Error::Config(format!(
            "image baseline at {w}x{h} has {} parameters, not above {}x the bbox network's {bbox}",
            model.param_count(),
            IMAGE_TO_BBOX_MIN_RATIO
        )));
    }
    Ok(model)
}

fn bbox_param_count(q: usize) -> usize {
    4 * BBOX_HIDDEN + BBOX_HIDDEN + BBOX_HIDDEN * BBOX_HIDDEN + BBOX_HIDDEN + BBOX_HIDDEN * q + q
}

/// Builds a predictor with its default architecture for the given input shape,
/// or with `layers` when an override is supplied.
pub fn build(
    kind: PredictorKind,
    input_shape: &[usize],
    q: usize,
    layers: Option<&[LayerSpec]>,
    seed: u64,
) -> Result<Model> {
    if let Some(layers) = layers {
        check_classes(q)?;
        let model = Model::new(input_shape.to_vec(), layers.to_vec(), seed)?;
        if model.num_classes() != q {
            return Err(Error::Config(format!(
                "{kind} override emits {} logits, codebook has {q} beams",
                model.num_classes()
            )));
        }
        return Ok(model);
    }
    let model = match kind {
        PredictorKind::BboxMlp => build_bbox_mlp(q, seed)?,
        PredictorKind::PositionMlp => build_position_mlp(q, seed)?,
        PredictorKind::MaskLenet => match *input_shape {
            [1, h, w] => build_mask_lenet(w, h, q, seed)?,
            _ => return Err(shape_error(kind, input_shape)),
        },
        PredictorKind::ImageCnnBaseline => match *input_shape {
            [1, h, w] => build_image_cnn_baseline(w, h, q, seed)?,
            _ => return Err(shape_error(kind, input_shape)),
        },
    };
    model.expect_input(input_shape)?;
    Ok(model)
}

fn shape_error(kind: PredictorKind, shape: &[usize]) -> Error {
    Error::Shape {
        layer: 0,
        msg: format!("{kind} cannot take input of shape {shape:?}"),
    }
}

pub fn param_count(model: &Model) -> usize {
    model.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_tags_round_trip() {
        for k in PredictorKind::ALL {
            assert_eq!(k.tag().parse::<PredictorKind>().unwrap(), k);
        }
        assert!("resnet".parse::<PredictorKind>().is_err());
    }

    #[test]
    fn mask_lenet_rejects_other_sizes() {
        assert!(matches!(
            build_mask_lenet(28, 28, 64, 0),
            Err(Error::Shape { layer: 0, .. })
        ));
    }

    #[test]
    fn too_few_classes_is_rejected() {
        assert!(build_bbox_mlp(1, 0).is_err());
    }

    #[test]
    fn override_must_match_codebook() {
        let layers = [LayerSpec::Dense { units: 10 }];
        assert!(build(PredictorKind::BboxMlp, &[4], 64, Some(&layers), 0).is_err());
        let layers = [LayerSpec::Dense { units: 64 }];
        let m = build(PredictorKind::BboxMlp, &[4], 64, Some(&layers), 0).unwrap();
        assert_eq!(m.param_count(), 4 * 64 + 64);
    }
}

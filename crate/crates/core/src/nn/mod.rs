//! Small double-precision network substrate: dense and 2-D convolution
//! layers, ReLU, max pooling, softmax cross-entropy and Adam.
//!
//! Activations are flat sample-major buffers. Spatial tensors are laid out
//! `C x H x W` per sample; a model's input shape is either `[D]` or `[C, H, W]`.

pub mod layers;
pub mod params;
pub mod schedule;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};
use layers::{ConvGeom, PoolGeom};
pub use params::{adam_step, AdamConfig, Grads, Param, ParamStore};
pub use schedule::{lr_at_epoch, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Samples per forward chunk when no backward pass is needed.
const INFER_CHUNK: usize = 64;

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv2d {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Relu,
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        size: usize,
        stride: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let err = |msg: String| Error::Shape { layer: index, msg };
        match *self {
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return Err(err(format!("dense expects a flat input, got {input:?}")));
                }
                if units == 0 || input[0] == 0 {
                    return Err(err("dense dimensions must be positive".into()));
                }
                Ok(vec![units])
            }
            LayerSpec::Conv2d { filters, kernel, stride } => {
                let [c, h, w] = spatial(input).ok_or_else(|| {
                    err(format!("conv2d expects [C, H, W], got {input:?}"))
                })?;
                if filters == 0 || kernel == 0 || stride == 0 || c == 0 {
                    return Err(err("conv2d dimensions must be positive".into()));
                }
                if h < kernel || w < kernel {
                    return Err(err(format!("kernel {kernel} larger than {h}x{w} input")));
                }
                Ok(vec![filters, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool2d { size, stride } => {
                let [c, h, w] = spatial(input).ok_or_else(|| {
                    err(format!("maxpool2d expects [C, H, W], got {input:?}"))
                })?;
                if size == 0 || stride == 0 {
                    return Err(err("pool size and stride must be positive".into()));
                }
                if h < size || w < size {
                    return Err(err(format!("pool window {size} larger than {h}x{w} input")));
                }
                Ok(vec![c, (h - size) / stride + 1, (w - size) / stride + 1])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Trainable element count for this layer, from its dimensions alone.
    pub fn formula_params(&self, input: &[usize]) -> usize {
        match *self {
            LayerSpec::Dense { units } => input[0] * units + units,
            LayerSpec::Conv2d { filters, kernel, .. } => {
                filters * input[0] * kernel * kernel + filters
            }
            _ => 0,
        }
    }
}

fn spatial(shape: &[usize]) -> Option<[usize; 3]> {
    match shape {
        &[c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

/// A feed-forward stack of layers with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output.
    shapes: Vec<Vec<usize>>,
    /// For trainable layers, the index of the weight tensor (bias follows).
    slots: Vec<Option<usize>>,
    pub params: ParamStore,
}

enum Saved {
    Input(Vec<f64>),
    Argmax(Vec<u32>, usize),
    Nothing,
}

impl Model {
    /// Builds a model and initializes weights and biases uniformly in
    /// `+-sqrt(1 / fan_in)` from the given seed.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut model = Self::skeleton(input_shape, layers)?;
        let mut rng = rng_for(seed, &[stream::INIT]);
        for i in 0..model.layers.len() {
            if let Some(slot) = model.slots[i] {
                let fan_in: usize = match model.layers[i] {
                    LayerSpec::Dense { .. } => model.shapes[i][0],
                    LayerSpec::Conv2d { kernel, .. } => model.shapes[i][0] * kernel * kernel,
                    _ => unreachable!(),
                };
                let bound = (1.0 / fan_in as f64).sqrt();
                for p in &mut model.params.params[slot..slot + 2] {
                    for v in &mut p.value {
                        *v = rng.random_range(-bound..=bound);
                    }
                }
            }
        }
        Ok(model)
    }

    /// Shape-checks the stack and allocates zeroed parameters.
    fn skeleton(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape {
                layer: 0,
                msg: format!("invalid input shape {input_shape:?}"),
            });
        }
        let mut shapes = vec![input_shape.clone()];
        let mut slots = Vec::with_capacity(layers.len());
        let mut params = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            let inp = shapes[i].clone();
            let out = layer.output_shape(i, &inp)?;
            let tensors = match *layer {
                LayerSpec::Dense { units } => Some((vec![units, inp[0]], units)),
                LayerSpec::Conv2d { filters, kernel, .. } => {
                    Some((vec![filters, inp[0], kernel, kernel], filters))
                }
                _ => None,
            };
            if let Some((wshape, bias)) = tensors {
                slots.push(Some(params.len()));
                let n = wshape.iter().product();
                params.push(Param::new(format!("layer{i}.weight"), wshape, vec![0.0; n]));
                params.push(Param::new(format!("layer{i}.bias"), vec![bias], vec![0.0; bias]));
            } else {
                slots.push(None);
            }
            shapes.push(out);
        }
        if shapes.last().map(Vec::len) != Some(1) {
            return Err(Error::Shape {
                layer: layers.len().saturating_sub(1),
                msg: "network must end in a flat logit vector".into(),
            });
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
            slots,
            params: ParamStore { params, step: 0 },
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Input shape of each layer followed by the output shape.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().expect("non-empty")[0]
    }

    /// Sum of all trainable tensor element counts.
    pub fn param_count(&self) -> usize {
        self.params.num_elements()
    }

    /// Trainable parameter count from layer dimensions alone.
    pub fn formula_param_count(&self) -> usize {
        self.layers
            .iter()
            .zip(&self.shapes)
            .map(|(l, s)| l.formula_params(s))
            .sum()
    }

    /// Checks that a per-sample input shape is the one this model accepts.
    pub fn expect_input(&self, shape: &[usize]) -> Result<()> {
        if shape != self.input_shape.as_slice() {
            return Err(Error::Shape {
                layer: 0,
                msg: format!("expected input {:?}, got {shape:?}", self.input_shape),
            });
        }
        Ok(())
    }

    fn check_batch(&self, input: &[f64], n: usize) -> Result<()> {
        if n == 0 || input.len() != n * self.input_len() {
            return Err(Error::Shape {
                layer: 0,
                msg: format!(
                    "batch of {n} needs {} values of shape {:?}, got {}",
                    n * self.input_len(),
                    self.input_shape,
                    input.len()
                ),
            });
        }
        Ok(())
    }

    fn conv_geom(&self, i: usize) -> ConvGeom {
        let s = &self.shapes[i];
        match self.layers[i] {
            LayerSpec::Conv2d { filters, kernel, stride } => ConvGeom {
                channels: s[0],
                height: s[1],
                width: s[2],
                filters,
                kernel,
                stride,
            },
            _ => unreachable!(),
        }
    }

    fn pool_geom(&self, i: usize) -> PoolGeom {
        let s = &self.shapes[i];
        match self.layers[i] {
            LayerSpec::MaxPool2d { size, stride } => PoolGeom {
                channels: s[0],
                height: s[1],
                width: s[2],
                size,
                stride,
            },
            _ => unreachable!(),
        }
    }

    fn weights(&self, i: usize) -> (&[f64], &[f64]) {
        let slot = self.slots[i].expect("trainable layer");
        (
            &self.params.params[slot].value,
            &self.params.params[slot + 1].value,
        )
    }

    fn run(&self, input: &[f64], n: usize, keep: bool) -> (Vec<f64>, Vec<Saved>) {
        let mut x = input.to_vec();
        let mut saved = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, s) = match *layer {
                LayerSpec::Dense { .. } => {
                    let (w, b) = self.weights(i);
                    let y = layers::dense_forward(&x, n, self.shapes[i][0], w, b);
                    (y, Saved::Input(x))
                }
                LayerSpec::Conv2d { .. } => {
                    let (w, b) = self.weights(i);
                    let y = layers::conv_forward(&x, n, &self.conv_geom(i), w, b);
                    (y, Saved::Input(x))
                }
                LayerSpec::Relu => (layers::relu_forward(&x), Saved::Input(x)),
                LayerSpec::MaxPool2d { .. } => {
                    let (y, arg) = layers::maxpool_forward(&x, n, &self.pool_geom(i));
                    (y, Saved::Argmax(arg, x.len()))
                }
                LayerSpec::Flatten => (x, Saved::Nothing),
            };
            if keep {
                saved.push(s);
            }
            x = y;
        }
        (x, saved)
    }

    /// Logits for a batch of `n` samples, `n x Q` row-major.
    pub fn forward(&self, input: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_batch(input, n)?;
        let d = self.input_len();
        let mut out = Vec::with_capacity(n * self.num_classes());
        for chunk in input.chunks(INFER_CHUNK * d) {
            out.extend(self.run(chunk, chunk.len() / d, false).0);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite logits".into()));
        }
        Ok(out)
    }

    /// Mean cross-entropy loss and exact parameter gradients.
    pub fn loss_and_grad(&self, input: &[f64], labels: &[usize]) -> Result<(f64, Grads)> {
        let (loss, grads, _) = self.backprop(input, labels)?;
        Ok((loss, grads))
    }

    /// Like [`Model::loss_and_grad`] but also returns the gradient with
    /// respect to the input batch.
    pub fn loss_and_grads_with_input(
        &self,
        input: &[f64],
        labels: &[usize],
    ) -> Result<(f64, Grads, Vec<f64>)> {
        self.backprop(input, labels)
    }

    fn backprop(&self, input: &[f64], labels: &[usize]) -> Result<(f64, Grads, Vec<f64>)> {
        let n = labels.len();
        self.check_batch(input, n)?;
        let q = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&l| l >= q) {
            return Err(Error::Contract(format!("label {bad} outside [0, {q})")));
        }
        let (logits, saved) = self.run(input, n, true);
        let (loss, mut dy) = layers::softmax_cross_entropy(&logits, labels, q);
        let mut grads = self.params.zero_grads();
        for (i, s) in saved.iter().enumerate().rev() {
            dy = match (&self.layers[i], s) {
                (LayerSpec::Dense { .. }, Saved::Input(x)) => {
                    let slot = self.slots[i].expect("trainable");
                    let (w, _) = self.weights(i);
                    let (gw, gb) = split_pair(&mut grads.tensors, slot);
                    layers::dense_backward(x, &dy, n, self.shapes[i][0], w, gw, gb)
                }
                (LayerSpec::Conv2d { .. }, Saved::Input(x)) => {
                    let slot = self.slots[i].expect("trainable");
                    let (w, _) = self.weights(i);
                    let (gw, gb) = split_pair(&mut grads.tensors, slot);
                    layers::conv_backward(x, &dy, n, &self.conv_geom(i), w, gw, gb)
                }
                (LayerSpec::Relu, Saved::Input(x)) => layers::relu_backward(x, &dy),
                (LayerSpec::MaxPool2d { .. }, Saved::Argmax(arg, len)) => {
                    layers::maxpool_backward(*len, arg, &dy)
                }
                (LayerSpec::Flatten, Saved::Nothing) => dy,
                _ => unreachable!(),
            };
        }
        Ok((loss, grads, dy))
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Self::from_checkpoint(ck).map_err(|e| Error::parse(path, e))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Contract(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        let mut model = Self::skeleton(ck.input_shape, ck.layers)?;
        ck.params.validate()?;
        let expected: Vec<(&str, &[usize])> = model
            .params
            .params
            .iter()
            .map(|p| (p.name.as_str(), p.shape.as_slice()))
            .collect();
        let found: Vec<(&str, &[usize])> = ck
            .params
            .params
            .iter()
            .map(|p| (p.name.as_str(), p.shape.as_slice()))
            .collect();
        if expected != found {
            return Err(Error::Contract("checkpoint tensors do not match its layers".into()));
        }
        model.params = ck.params;
        Ok(model)
    }
}

fn split_pair(t: &mut [Vec<f64>], slot: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = t[slot..slot + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Serialized model: layer specs, named tensors and Adam state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub params: ParamStore,
}

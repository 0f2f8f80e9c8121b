use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{Activation, FeatureShape, LayerKind, ModelSpec, PaddingMode};
use crate::autodiff::{Padding2d, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Pcg32, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Training,
    Eval,
}

/// A trainable tensor with the bookkeeping its initialiser and constraint need.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub fan_in: usize,
    pub fan_out: usize,
    /// Only weights carry a cap; biases never do.
    pub max_norm: Option<f64>,
}

impl Param {
    pub fn glorot_bound(&self) -> f64 {
        (6.0 / (self.fan_in + self.fan_out) as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    spec: ModelSpec,
    params: Vec<Param>,
    /// Parameter index range owned by each layer.
    layer_params: Vec<Range<usize>>,
    mode: Mode,
}

fn padding(mode: PaddingMode, kernel: (usize, usize)) -> Padding2d {
    match mode {
        PaddingMode::Valid => Padding2d::VALID,
        PaddingMode::Same => Padding2d::same(kernel.0, kernel.1),
    }
}

/// Glorot-uniform weights and zero biases for `spec`, deterministic in `seed`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Network> {
    let shapes = spec.trace_shapes()?;
    let mut rng = rng::pcg(seed, Stream::Init);
    let mut params = Vec::new();
    let mut layer_params = Vec::with_capacity(spec.layers.len());
    let mut input = spec.input_shape();

    let mut weight = |params: &mut Vec<Param>, name: String, shape: Vec<usize>, fan_in, fan_out, cap| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = Tensor::from_fn(shape, |_| rng.random_range(-bound..bound));
        params.push(Param {
            name,
            value,
            fan_in,
            fan_out,
            max_norm: cap,
        });
    };
    let bias = |params: &mut Vec<Param>, name: String, n: usize| {
        params.push(Param {
            name,
            value: Tensor::zeros([n]),
            fan_in: n,
            fan_out: n,
            max_norm: None,
        });
    };

    for (i, (layer, out)) in spec.layers.iter().zip(&shapes).enumerate() {
        let start = params.len();
        let cap = layer.max_norm;
        match &layer.kind {
            LayerKind::Conv2d { filters, kernel, .. } => {
                let rf = kernel.0 * kernel.1;
                weight(
                    &mut params,
                    format!("{i}.conv2d.weight"),
                    vec![*filters, input.c, kernel.0, kernel.1],
                    input.c * rf,
                    filters * rf,
                    cap,
                );
                bias(&mut params, format!("{i}.conv2d.bias"), *filters);
            }
            LayerKind::DepthwiseConv2d {
                depth_multiplier,
                kernel,
                ..
            } => {
                let rf = kernel.0 * kernel.1;
                weight(
                    &mut params,
                    format!("{i}.depthwise.weight"),
                    vec![input.c * depth_multiplier, 1, kernel.0, kernel.1],
                    rf,
                    depth_multiplier * rf,
                    cap,
                );
            }
            LayerKind::SeparableConv2d { filters, kernel, .. } => {
                let rf = kernel.0 * kernel.1;
                weight(
                    &mut params,
                    format!("{i}.separable.depthwise"),
                    vec![input.c, 1, kernel.0, kernel.1],
                    rf,
                    rf,
                    None,
                );
                weight(
                    &mut params,
                    format!("{i}.separable.pointwise"),
                    vec![*filters, input.c, 1, 1],
                    input.c,
                    *filters,
                    cap,
                );
            }
            LayerKind::FullyConnected { units } => {
                let k = input.len();
                weight(&mut params, format!("{i}.dense.weight"), vec![*units, k], k, *units, cap);
                bias(&mut params, format!("{i}.dense.bias"), *units);
            }
            LayerKind::AvgPool2d { .. } | LayerKind::MaxPool2d { .. } | LayerKind::Softmax => {}
        }
        layer_params.push(start..params.len());
        input = *out;
    }
    Ok(Network {
        spec: spec.clone(),
        params,
        layer_params,
        mode: Mode::Eval,
    })
}

/// Rescales every row (first-axis slice) whose L2 norm exceeds `cap` to norm
/// exactly `cap`. Returns how many rows were rescaled.
pub fn max_norm_rows(t: &mut Tensor, cap: f64) -> usize {
    let rows = t.shape()[0];
    let width = t.len() / rows;
    let mut touched = 0;
    for row in t.data_mut().chunks_mut(width) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > cap {
            let s = cap / norm;
            row.iter_mut().for_each(|v| *v *= s);
            touched += 1;
        }
    }
    touched
}

impl Network {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Applies each weight's max-norm cap. Returns the number of rescaled rows.
    pub fn apply_max_norm(&mut self) -> usize {
        self.params
            .iter_mut()
            .filter_map(|p| p.max_norm.map(|cap| max_norm_rows(&mut p.value, cap)))
            .sum()
    }

    /// Records every parameter on `tape` as a gradient-tracked leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let FeatureShape { c, h, w } = self.spec.input_shape();
        match shape {
            [_, sc, sh, sw] if (*sc, *sh, *sw) == (c, h, w) => Ok(()),
            _ => Err(Error::shape(
                "forward",
                format!("batch {shape:?} does not match model input [N, {c}, {h}, {w}]"),
            )),
        }
    }

    /// Records the forward pass up to the logits (the softmax head is left to
    /// the loss). `params` must come from [`Network::bind`] on the same tape.
    /// Dropout draws from `rng` only in training mode.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], input: Var, rng: &mut Pcg32) -> Result<Var> {
        self.record(tape, params, input, rng, self.mode == Mode::Training)
    }

    /// A single-channel temporal convolution directly followed by a valid
    /// `(kh, 1)` depthwise layer is evaluated as one fused primitive.
    fn fuses_with_next(&self, i: usize, in_channels: usize) -> bool {
        let layers = &self.spec.layers;
        let (Some(a), Some(b)) = (layers.get(i), layers.get(i + 1)) else {
            return false;
        };
        matches!(a.kind, LayerKind::Conv2d { kernel: (1, _), .. })
            && a.activation.is_none()
            && a.dropout.is_none()
            && in_channels == 1
            && matches!(
                b.kind,
                LayerKind::DepthwiseConv2d {
                    kernel: (_, 1),
                    padding: PaddingMode::Valid,
                    ..
                }
            )
    }

    fn record(&self, tape: &mut Tape, params: &[Var], input: Var, rng: &mut Pcg32, training: bool) -> Result<Var> {
        self.check_input(tape.value(input).shape())?;
        let layers = &self.spec.layers;
        let mut x = input;
        let mut i = 0;
        while i < layers.len() {
            let p = &params[self.layer_params[i].clone()];
            let layer = if self.fuses_with_next(i, tape.value(x).shape()[1]) {
                let LayerKind::Conv2d { kernel, padding: pm, .. } = layers[i].kind else {
                    unreachable!()
                };
                let spatial = params[self.layer_params[i + 1].start];
                x = tape.temporal_spatial_conv(x, p[0], Some(p[1]), spatial, padding(pm, kernel))?;
                i += 1;
                &layers[i]
            } else {
                let layer = &layers[i];
                x = match &layer.kind {
                    LayerKind::Conv2d {
                        kernel, padding: pm, ..
                    } => tape.conv2d(x, p[0], Some(p[1]), (1, 1), padding(*pm, *kernel))?,
                    LayerKind::DepthwiseConv2d {
                        kernel, padding: pm, ..
                    } => tape.depthwise_conv2d(x, p[0], (1, 1), padding(*pm, *kernel))?,
                    LayerKind::SeparableConv2d {
                        kernel, padding: pm, ..
                    } => tape.separable_conv2d(x, p[0], p[1], padding(*pm, *kernel))?,
                    LayerKind::AvgPool2d { window, stride } => tape.avg_pool2d(x, *window, *stride)?,
                    LayerKind::MaxPool2d { window, stride } => tape.max_pool2d(x, *window, *stride)?,
                    LayerKind::FullyConnected { .. } => {
                        let flat = tape.flatten(x)?;
                        tape.linear(flat, p[0], Some(p[1]))?
                    }
                    LayerKind::Softmax => x,
                };
                layer
            };
            if let Some(Activation::Elu) = layer.activation {
                x = tape.elu(x)?;
            }
            if let Some(rate) = layer.dropout {
                x = tape.dropout(x, rate, rng, training)?;
            }
            i += 1;
        }
        Ok(x)
    }

    /// Eval-mode logits for a `[N, 1, channels, samples]` batch, without gradient tracking.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.value.clone())).collect();
        let input = tape.constant(batch.clone());
        // eval mode never draws from the rng
        let mut rng = rng::pcg(0, Stream::Dropout);
        let logits = self.record(&mut tape, &params, input, &mut rng, false)?;
        Ok(tape.value(logits).clone())
    }
}

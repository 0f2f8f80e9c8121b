use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    EegNet,
    DeepConvNet,
    FingerNet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::EegNet, ModelKind::DeepConvNet, ModelKind::FingerNet];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::EegNet => "eegnet",
            ModelKind::DeepConvNet => "deepconvnet",
            ModelKind::FingerNet => "fingernet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eegnet" => Ok(ModelKind::EegNet),
            "deepconvnet" => Ok(ModelKind::DeepConvNet),
            "fingernet" => Ok(ModelKind::FingerNet),
            other => Err(Error::invalid(
                "model",
                format!("unknown model {other:?} (expected eegnet, deepconvnet or fingernet)"),
            )),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaddingMode {
    Valid,
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Elu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        padding: PaddingMode,
    },
    DepthwiseConv2d {
        depth_multiplier: usize,
        kernel: (usize, usize),
        padding: PaddingMode,
    },
    SeparableConv2d {
        filters: usize,
        kernel: (usize, usize),
        padding: PaddingMode,
    },
    AvgPool2d {
        window: (usize, usize),
        stride: (usize, usize),
    },
    MaxPool2d {
        window: (usize, usize),
        stride: (usize, usize),
    },
    FullyConnected {
        units: usize,
    },
    Softmax,
}

impl LayerKind {
    /// Row label used in structural comparison tables.
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "Conv2D",
            LayerKind::DepthwiseConv2d { .. } => "DepthwiseConv2D",
            LayerKind::SeparableConv2d { .. } => "SeparableConv2D",
            LayerKind::AvgPool2d { .. } => "AvgPool2D",
            LayerKind::MaxPool2d { .. } => "MaxPool2D",
            LayerKind::FullyConnected { .. } => "Fully-Connected Layer",
            LayerKind::Softmax => "Softmax",
        }
    }
}

/// One structural layer. Activation and dropout are applied after the layer
/// itself, in that order; `max_norm` caps the row norms of its weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Option<Activation>,
    pub dropout: Option<f64>,
    pub max_norm: Option<f64>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        Self {
            kind,
            activation: None,
            dropout: None,
            max_norm: None,
        }
    }

    pub fn elu(mut self) -> Self {
        self.activation = Some(Activation::Elu);
        self
    }

    pub fn dropout(mut self, rate: f64) -> Self {
        self.dropout = (rate > 0.0).then_some(rate);
        self
    }

    pub fn max_norm(mut self, cap: Option<f64>) -> Self {
        self.max_norm = cap;
        self
    }
}

/// Spatial layout of one feature map: `(channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub layers: Vec<LayerSpec>,
    /// Electrodes.
    pub channels: usize,
    /// Samples per epoch.
    pub samples: usize,
    pub n_classes: usize,
}

/// Architecture hyperparameters. Every model reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub channels: usize,
    pub samples: usize,
    pub n_classes: usize,
    pub f1: usize,
    pub depth_multiplier: usize,
    pub f2: usize,
    pub temporal_kernel: usize,
    pub separable_kernel: usize,
    pub pool1: usize,
    pub pool2: usize,
    /// FingerNet: filters of the three trailing conv/pool pairs.
    /// DeepConvNet: filters of all five convolutions.
    pub deep_filters: Vec<usize>,
    pub deep_kernel: usize,
    pub deep_pool: usize,
    pub dropout: f64,
    pub max_norm_depthwise: Option<f64>,
    pub max_norm_dense: Option<f64>,
}

impl ModelConfig {
    pub fn defaults(kind: ModelKind) -> Self {
        let (deep_filters, deep_kernel, deep_pool) = match kind {
            ModelKind::DeepConvNet => (vec![25, 25, 50, 100, 200], 10, 3),
            _ => (vec![32, 64, 128], 5, 2),
        };
        Self {
            channels: 24,
            samples: 1000,
            n_classes: 5,
            f1: 8,
            depth_multiplier: 2,
            f2: 16,
            temporal_kernel: 125,
            separable_kernel: 16,
            pool1: 4,
            pool2: 8,
            deep_filters,
            deep_kernel,
            deep_pool,
            dropout: 0.5,
            max_norm_depthwise: Some(1.0),
            max_norm_dense: Some(0.25),
        }
    }
}

fn eegnet_front(cfg: &ModelConfig) -> Vec<LayerSpec> {
    use LayerKind::*;
    vec![
        LayerSpec::new(Conv2d {
            filters: cfg.f1,
            kernel: (1, cfg.temporal_kernel),
            padding: PaddingMode::Same,
        }),
        LayerSpec::new(DepthwiseConv2d {
            depth_multiplier: cfg.depth_multiplier,
            kernel: (cfg.channels, 1),
            padding: PaddingMode::Valid,
        })
        .elu()
        .max_norm(cfg.max_norm_depthwise),
        LayerSpec::new(AvgPool2d {
            window: (1, cfg.pool1),
            stride: (1, cfg.pool1),
        })
        .dropout(cfg.dropout),
        LayerSpec::new(SeparableConv2d {
            filters: cfg.f2,
            kernel: (1, cfg.separable_kernel),
            padding: PaddingMode::Same,
        })
        .elu(),
        LayerSpec::new(AvgPool2d {
            window: (1, cfg.pool2),
            stride: (1, cfg.pool2),
        })
        .dropout(cfg.dropout),
    ]
}

fn head(cfg: &ModelConfig) -> [LayerSpec; 2] {
    [
        LayerSpec::new(LayerKind::FullyConnected { units: cfg.n_classes }).max_norm(cfg.max_norm_dense),
        LayerSpec::new(LayerKind::Softmax),
    ]
}

fn finish(kind: ModelKind, cfg: &ModelConfig, layers: Vec<LayerSpec>) -> Result<ModelSpec> {
    let spec = ModelSpec {
        kind,
        layers,
        channels: cfg.channels,
        samples: cfg.samples,
        n_classes: cfg.n_classes,
    };
    spec.trace_shapes()?;
    Ok(spec)
}

pub fn eegnet_spec(cfg: &ModelConfig) -> Result<ModelSpec> {
    let mut layers = eegnet_front(cfg);
    layers.extend(head(cfg));
    finish(ModelKind::EegNet, cfg, layers)
}

pub fn fingernet_spec(cfg: &ModelConfig) -> Result<ModelSpec> {
    if cfg.deep_filters.len() != 3 {
        return Err(Error::invalid(
            "fingernet_spec",
            format!("expected 3 deep filter counts, got {:?}", cfg.deep_filters),
        ));
    }
    let mut layers = eegnet_front(cfg);
    for &filters in &cfg.deep_filters {
        layers.push(
            LayerSpec::new(LayerKind::Conv2d {
                filters,
                kernel: (1, cfg.deep_kernel),
                padding: PaddingMode::Same,
            })
            .elu(),
        );
        layers.push(
            LayerSpec::new(LayerKind::AvgPool2d {
                window: (1, cfg.deep_pool),
                stride: (1, cfg.deep_pool),
            })
            .dropout(cfg.dropout),
        );
    }
    layers.extend(head(cfg));
    finish(ModelKind::FingerNet, cfg, layers)
}

pub fn deepconvnet_spec(cfg: &ModelConfig) -> Result<ModelSpec> {
    use LayerKind::*;
    let f = &cfg.deep_filters;
    if f.len() != 5 {
        return Err(Error::invalid(
            "deepconvnet_spec",
            format!("expected 5 filter counts, got {f:?}"),
        ));
    }
    let pool = || {
        LayerSpec::new(MaxPool2d {
            window: (1, cfg.deep_pool),
            stride: (1, cfg.deep_pool),
        })
        .dropout(cfg.dropout)
    };
    let temporal = |filters| {
        LayerSpec::new(Conv2d {
            filters,
            kernel: (1, cfg.deep_kernel),
            padding: PaddingMode::Valid,
        })
    };
    let mut layers = vec![
        temporal(f[0]),
        LayerSpec::new(Conv2d {
            filters: f[1],
            kernel: (cfg.channels, 1),
            padding: PaddingMode::Valid,
        })
        .elu(),
        pool(),
    ];
    for &filters in &f[2..] {
        layers.push(temporal(filters).elu());
        layers.push(pool());
    }
    layers.extend(head(cfg));
    finish(ModelKind::DeepConvNet, cfg, layers)
}

pub fn model_spec(kind: ModelKind, cfg: &ModelConfig) -> Result<ModelSpec> {
    match kind {
        ModelKind::EegNet => eegnet_spec(cfg),
        ModelKind::DeepConvNet => deepconvnet_spec(cfg),
        ModelKind::FingerNet => fingernet_spec(cfg),
    }
}

fn conv_out(len: usize, k: usize, padding: PaddingMode) -> Option<usize> {
    match padding {
        PaddingMode::Same => Some(len),
        PaddingMode::Valid => len.checked_sub(k).map(|d| d + 1),
    }
}

fn pool_out(len: usize, window: usize, stride: usize) -> Option<usize> {
    if stride == 0 {
        return None;
    }
    len.checked_sub(window).map(|d| d / stride + 1)
}

impl ModelSpec {
    pub fn input_shape(&self) -> FeatureShape {
        FeatureShape {
            c: 1,
            h: self.channels,
            w: self.samples,
        }
    }

    pub fn layer_labels(&self) -> Vec<&'static str> {
        self.layers.iter().map(|l| l.kind.label()).collect()
    }

    /// Output shape after every layer, checked symbolically.
    pub fn trace_shapes(&self) -> Result<Vec<FeatureShape>> {
        let mut shape = self.input_shape();
        let mut trace = Vec::with_capacity(self.layers.len());
        let last = self.layers.len().checked_sub(1);
        for (index, layer) in self.layers.iter().enumerate() {
            let fail = |detail: String| Error::Layer {
                index,
                kind: layer.kind.label().to_string(),
                detail,
            };
            if let Some(rate) = layer.dropout {
                if !(0.0..1.0).contains(&rate) {
                    return Err(fail(format!("dropout rate {rate} outside [0, 1)")));
                }
            }
            if layer.max_norm.is_some_and(|c| c <= 0.0) {
                return Err(fail("max-norm cap must be positive".into()));
            }
            let positive = |sizes: &[usize]| sizes.iter().all(|&s| s > 0);
            shape = match &layer.kind {
                LayerKind::Conv2d {
                    filters,
                    kernel,
                    padding,
                }
                | LayerKind::SeparableConv2d {
                    filters,
                    kernel,
                    padding,
                } => {
                    if !positive(&[*filters, kernel.0, kernel.1]) {
                        return Err(fail("sizes must be positive".into()));
                    }
                    let h = conv_out(shape.h, kernel.0, *padding);
                    let w = conv_out(shape.w, kernel.1, *padding);
                    match (h, w) {
                        (Some(h), Some(w)) => FeatureShape { c: *filters, h, w },
                        _ => return Err(fail(format!("kernel {kernel:?} does not fit input {shape:?}"))),
                    }
                }
                LayerKind::DepthwiseConv2d {
                    depth_multiplier,
                    kernel,
                    padding,
                } => {
                    if !positive(&[*depth_multiplier, kernel.0, kernel.1]) {
                        return Err(fail("sizes must be positive".into()));
                    }
                    let h = conv_out(shape.h, kernel.0, *padding);
                    let w = conv_out(shape.w, kernel.1, *padding);
                    match (h, w) {
                        (Some(h), Some(w)) => FeatureShape {
                            c: shape.c * depth_multiplier,
                            h,
                            w,
                        },
                        _ => return Err(fail(format!("kernel {kernel:?} does not fit input {shape:?}"))),
                    }
                }
                LayerKind::AvgPool2d { window, stride } | LayerKind::MaxPool2d { window, stride } => {
                    if !positive(&[window.0, window.1]) {
                        return Err(fail("window must be positive".into()));
                    }
                    let h = pool_out(shape.h, window.0, stride.0);
                    let w = pool_out(shape.w, window.1, stride.1);
                    match (h, w) {
                        (Some(h), Some(w)) => FeatureShape { c: shape.c, h, w },
                        _ => return Err(fail(format!("window {window:?} does not fit input {shape:?}"))),
                    }
                }
                LayerKind::FullyConnected { units } => {
                    if *units == 0 {
                        return Err(fail("units must be positive".into()));
                    }
                    FeatureShape { c: *units, h: 1, w: 1 }
                }
                LayerKind::Softmax => {
                    if Some(index) != last {
                        return Err(fail("softmax may only be the final layer".into()));
                    }
                    shape
                }
            };
            trace.push(shape);
        }
        if shape.len() != self.n_classes {
            return Err(Error::invalid(
                "model_spec",
                format!("final layer yields {} values, expected {}", shape.len(), self.n_classes),
            ));
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EEGNET_ROWS: [&str; 7] = [
        "Conv2D",
        "DepthwiseConv2D",
        "AvgPool2D",
        "SeparableConv2D",
        "AvgPool2D",
        "Fully-Connected Layer",
        "Softmax",
    ];

    #[test]
    fn eegnet_defaults_match_table_rows() {
        let spec = eegnet_spec(&ModelConfig::defaults(ModelKind::EegNet)).unwrap();
        assert_eq!(spec.layer_labels(), EEGNET_ROWS);
        let widths: Vec<usize> = spec.trace_shapes().unwrap().iter().map(|s| s.w).collect();
        assert_eq!(widths, [1000, 1000, 250, 250, 31, 1, 1]);
    }

    #[test]
    fn fingernet_temporal_trace() {
        let spec = fingernet_spec(&ModelConfig::defaults(ModelKind::FingerNet)).unwrap();
        assert_eq!(spec.layers.len(), 13);
        let pools: Vec<usize> = spec
            .layers
            .iter()
            .zip(spec.trace_shapes().unwrap())
            .filter(|(l, _)| matches!(l.kind, LayerKind::AvgPool2d { .. }))
            .map(|(_, s)| s.w)
            .collect();
        assert_eq!(pools, [250, 31, 15, 7, 3]);
    }

    #[test]
    fn fingernet_without_deep_pairs_is_eegnet() {
        let fing = fingernet_spec(&ModelConfig::defaults(ModelKind::FingerNet)).unwrap();
        let mut labels = fing.layer_labels();
        labels.drain(5..11);
        assert_eq!(labels, EEGNET_ROWS);
    }

    #[test]
    fn deepconvnet_uses_max_pooling_only() {
        let spec = deepconvnet_spec(&ModelConfig::defaults(ModelKind::DeepConvNet)).unwrap();
        let labels = spec.layer_labels();
        assert_eq!(labels.len(), 11);
        assert_eq!(labels.iter().filter(|l| **l == "MaxPool2D").count(), 4);
        assert_eq!(labels.iter().filter(|l| **l == "AvgPool2D").count(), 0);
        assert_eq!(spec.trace_shapes().unwrap().last().unwrap().len(), 5);
    }

    #[test]
    fn collapse_names_offending_layer() {
        let mut cfg = ModelConfig::defaults(ModelKind::FingerNet);
        cfg.samples = 40;
        match fingernet_spec(&cfg) {
            Err(Error::Layer { index, kind, .. }) => {
                assert_eq!(kind, "AvgPool2D");
                assert!(index >= 4);
            }
            other => panic!("expected a layer error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_must_be_last() {
        let cfg = ModelConfig::defaults(ModelKind::EegNet);
        let mut spec = eegnet_spec(&cfg).unwrap();
        spec.layers.swap(5, 6);
        assert!(spec.trace_shapes().is_err());
    }
}

//! Architecture descriptions and their executable networks.

mod network;
mod spec;

pub use network::{init_params, max_norm_rows, Mode, Network, Param};
pub use spec::{
    deepconvnet_spec, eegnet_spec, fingernet_spec, model_spec, Activation, FeatureShape, LayerKind, LayerSpec,
    ModelConfig, ModelKind, ModelSpec, PaddingMode,
};

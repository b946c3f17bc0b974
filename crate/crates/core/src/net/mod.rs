//! The measurement + reconstruction network and its structural calculators.

mod config;
mod count;
mod network;

pub use config::{
    measurement_kernel_count, receptive_field, LayerKind, NetworkConfig, PatternPreset,
};
pub use count::{count_parameters, ParamScope};
pub use network::{
    build_network, param_layout, ConvLayer, ForwardTrace, Gradients, Network, ParamInfo,
};

//! Learned block compressed sensing with a multi-scale dilated CNN
//! reconstruction network, plus the classical references used to check it.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` for training and
//! inference, `f64` for oracles); the aliases below fix the common choices.

pub mod cs;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Axis, Error, Result};
pub use net::{
    build_network, count_parameters, LayerKind, Network, NetworkConfig, ParamScope, PatternPreset,
};
pub use scalar::Scalar;
pub use tensor::{Dims, Tensor};
pub use train::TrainPlan;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;
pub type CSMatrix64 = cs::CSMatrix<f64>;

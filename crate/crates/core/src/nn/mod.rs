//! Hand-wired CNN layers with forward and backward passes.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod linear;
pub mod network;
pub mod pool;
pub mod sgd;

pub use activation::{relu, relu_backward};
pub use conv::{conv_backward, conv_forward, ConvGrads, ConvStage};
pub use linear::{linear_backward, linear_forward, LinearGrads, LinearStage};
pub use network::{ForwardTrace, NetworkParams, ParamGrads, FEATURE_DIM, FLAT_DIM, INPUT_SIZE};
pub use pool::{maxpool_backward, maxpool_forward, ArgmaxMask};
pub use sgd::sgd_step;

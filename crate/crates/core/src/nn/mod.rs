//! Dense feed-forward networks with exact reverse-mode gradients, batch
//! normalization and first-order optimizers. Double precision throughout.

pub mod gradcheck;
pub mod network;
pub mod optim;

pub use gradcheck::{check_gradient, grad_check, mse_loss, GradCheckReport};
pub use network::{
    chain, Activation, BatchNorm, DenseNetwork, ForwardCache, GradientSet, Layer, LayerGrads, LayerSpec, Mode,
    ParamKind, LEAKY_RELU_SLOPE,
};
pub use optim::{Algorithm, Optimizer};

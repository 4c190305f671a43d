//! Dense numeric core: tensors, parameter sets, MLPs with reverse-mode
//! gradients, loss primitives and optimizers.

mod loss;
mod mlp;
mod optim;
mod params;
mod tensor;

pub use loss::{mse_loss, softmax_cross_entropy};
pub use mlp::{backward, forward, mlp_init, Activation, ActivationTrace, Mlp, MlpSpec};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Param, ParamSet};
pub use tensor::Tensor;

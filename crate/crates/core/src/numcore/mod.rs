//! Dense arrays, the toy denoiser network, its gradients and optimizer.

pub mod checkpoint;
pub mod denoiser;
pub mod gradcheck;
pub mod objective;
pub mod optim;
mod real;
mod tensor;

pub use checkpoint::Checkpoint;
pub use denoiser::{
    denoiser_forward, ConditioningMode, DenoiserConfig, DenoiserParams, GradientSet, Param,
};
pub use gradcheck::finite_diff_check;
pub use objective::{loss_and_grads, TrainingItem};
pub use optim::{Optimizer, OptimizerKind};
pub use real::{gemm, Op, Real};
pub use tensor::{Dims4, Tensor4, VideoTensor};

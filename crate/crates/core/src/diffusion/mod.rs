//! Latent video diffusion: schedule, training loop and DDIM sampling.

pub mod condition;
pub mod config;
pub mod latent;
pub mod loss;
pub mod precond;
pub mod sample;
pub mod schedule;
pub mod train;

pub use condition::{draw_drop, make_condition, Condition};
pub use config::{DataSpec, HeatmapSource, ModelSpec, PromptEncoder, SamplingSpec, TrainConfig};
pub use latent::{decode, encode, from_model_space, latent_dims, to_model_space};
pub use loss::{
    diffusion_loss, loss_with_grad, motif_loss, total_loss, FocalWeighting, HeatmapMode, LossSpec, LossTerms,
    ResidualSpace,
};
pub use precond::{mixture_skip_v, model_skip, skip_v, SkipKind};
pub use sample::{ddim_loop, ddim_sample, ddim_timesteps, guided_v, Generator, VPredictor};
pub use schedule::{predict_eps, predict_z0, q_sample, v_target, DiffusionSchedule, ScheduleConfig};
pub use train::{clip_latents, gaussian, loss_drop, prompt_library, train, StepLog, TrainRun};

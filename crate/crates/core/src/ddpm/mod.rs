//! Noise schedule, forward noising, reverse DDPM sampling and
//! noise-prediction training.

mod model;
mod process;
mod schedule;
mod train;

pub use model::{time_embedding, with_time, DiffusionModel, EMBED_DIM};
pub use process::{
    ddpm_mean, ddpm_step, ddpm_step_with_noise, q_joint_pair, q_sample, q_step, sample, sample_one, sample_rng,
};
pub use schedule::{NoiseSchedule, ScheduleParams};
pub use train::{denoising_loss, draw_denoising_batch, train_ddpm, DenoisingBatch};

use super::{q_sample, with_time, DiffusionModel, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nn::{AdamwState, RngStream, Tensor, WarmupSchedule};

/// Noised minibatch for the noise-prediction objective.
#[derive(Clone, Debug)]
pub struct DenoisingBatch {
    pub x0: Tensor,
    pub x_t: Tensor,
    pub timesteps: Vec<usize>,
    pub noise: Tensor,
}

/// Draws rows of `data` with replacement, `t ~ U{1..T}` and `eps ~ N(0, I)` per row.
pub fn draw_denoising_batch(
    data: &Tensor,
    batch: usize,
    sched: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<DenoisingBatch> {
    let d = data.last_dim();
    let n = data.rows();
    let mut x0 = Vec::with_capacity(batch * d);
    let mut timesteps = Vec::with_capacity(batch);
    for _ in 0..batch {
        x0.extend_from_slice(data.row(rng.index(n)));
        timesteps.push(rng.int_inclusive(1, sched.steps()));
    }
    let x0 = Tensor::from_vec(&[batch, d], x0)?;
    let noise = rng.gaussian(&[batch, d])?;
    let mut x_t = Vec::with_capacity(batch * d);
    for (r, &t) in timesteps.iter().enumerate() {
        let row = Tensor::vector(x0.row(r));
        let eps = Tensor::vector(noise.row(r));
        x_t.extend_from_slice(q_sample(&row, t, &eps, sched)?.data());
    }
    let x_t = Tensor::from_vec(&[batch, d], x_t)?;
    Ok(DenoisingBatch { x0, x_t, timesteps, noise })
}

/// Mean squared error over every element.
pub fn denoising_loss(pred: &Tensor, noise: &Tensor) -> Result<f64> {
    pred.same_shape(noise)?;
    let sum: f64 = pred.data().iter().zip(noise.data()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sum / pred.len() as f64)
}

/// Trains `model` on the noise-prediction objective; returns the per-step loss.
/// The optimizer's configured learning rate is the post-warm-up target.
pub fn train_ddpm(
    data: &Tensor,
    model: &mut DiffusionModel,
    opt: &mut AdamwState,
    steps: usize,
    batch: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if data.is_empty() || data.last_dim() != model.data_dim() {
        return Err(Error::invalid("training data must be nonempty with the model's width"));
    }
    if steps == 0 || batch == 0 {
        return Err(Error::invalid("steps and batch must be at least 1"));
    }
    let warmup = WarmupSchedule::for_run(opt.config.lr, steps);
    let total = model.schedule.steps();
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let b = draw_denoising_batch(data, batch, &model.schedule, rng)?;
        let input = with_time(&b.x_t, &b.timesteps, total)?;
        let (pred, cache) = model.net.forward_cached(&input)?;
        let pred = pred.reshape(b.noise.shape())?;
        losses.push(denoising_loss(&pred, &b.noise)?);
        let scale = 2.0 / pred.len() as f64;
        let upstream = pred.axpy(-1.0, &b.noise)?.scale(scale);
        let (grads, _) = model.net.backward(cache, &upstream)?;
        opt.config.lr = warmup.lr_at(step);
        opt.step(&mut model.net.params_mut(), &grads.tensors())?;
    }
    opt.config.lr = warmup.base_lr;
    Ok(losses)
}

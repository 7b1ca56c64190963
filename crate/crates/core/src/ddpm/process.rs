//! Forward noising and the reverse DDPM update.

use super::{DiffusionModel, NoiseSchedule};
use crate::error::Result;
use crate::nn::{RngStream, Tensor};

/// Closed-form marginal `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn q_sample(x0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    x0.same_shape(eps)?;
    let ab = sched.alpha_bar(t);
    x0.scale(ab.sqrt()).axpy((1.0 - ab).sqrt(), eps)
}

/// One forward kernel step `x_t = sqrt(alpha_t) x_{t-1} + sqrt(beta_t) eps`.
pub fn q_step(x_prev: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    x_prev.scale(sched.alpha(t).sqrt()).axpy(sched.beta(t).sqrt(), eps)
}

/// Draws `(x_{t-1}, x_t)` jointly under the forward process: `x_{t-1}` from
/// its marginal given `x0` (exactly `x0` when `t = 1`), then `x_t` from the
/// single-step kernel.
pub fn q_joint_pair(x0: &Tensor, t: usize, rng: &mut RngStream, sched: &NoiseSchedule) -> Result<(Tensor, Tensor)> {
    sched.check_t(t)?;
    let x_prev = if t == 1 {
        x0.clone()
    } else {
        let eps = rng.gaussian(x0.shape())?;
        q_sample(x0, t - 1, &eps, sched)?
    };
    let eps = rng.gaussian(x0.shape())?;
    let x_t = q_step(&x_prev, t, &eps, sched)?;
    Ok((x_prev, x_t))
}

/// Posterior mean `(x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t)`.
pub fn ddpm_mean(x_t: &Tensor, t: usize, eps_hat: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    let a = sched.alpha(t);
    let coef = (1.0 - a) / (1.0 - sched.alpha_bar(t)).sqrt();
    Ok(x_t.axpy(-coef, eps_hat)?.scale(1.0 / a.sqrt()))
}

/// Reverse update with an explicit noise tensor.
pub fn ddpm_step_with_noise(x_t: &Tensor, t: usize, model: &DiffusionModel, noise: &Tensor) -> Result<Tensor> {
    let eps_hat = model.predict_noise(x_t, t)?;
    let mean = ddpm_mean(x_t, t, &eps_hat, &model.schedule)?;
    let sigma = model.schedule.sigma2(t).sqrt();
    mean.axpy(sigma, noise)
}

/// Reverse update drawing fresh noise from `rng`. At `t = 1` the variance is
/// zero and no draw is made.
pub fn ddpm_step(x_t: &Tensor, t: usize, model: &DiffusionModel, rng: &mut RngStream) -> Result<Tensor> {
    model.schedule.check_t(t)?;
    let eps_hat = model.predict_noise(x_t, t)?;
    let mean = ddpm_mean(x_t, t, &eps_hat, &model.schedule)?;
    let sigma2 = model.schedule.sigma2(t);
    if sigma2 == 0.0 {
        return Ok(mean);
    }
    let noise = rng.gaussian(x_t.shape())?;
    mean.axpy(sigma2.sqrt(), &noise)
}

/// Stream for sample `index` of a sampling run seeded with `seed`. Sampling
/// streams live above `2^32` so they never coincide with training streams.
pub fn sample_rng(seed: u64, index: usize) -> RngStream {
    RngStream::derive(seed, (1u64 << 32) + index as u64)
}

/// Full reverse chain for one sample, starting from `x_T ~ N(0, I)`.
pub fn sample_one(model: &DiffusionModel, rng: &mut RngStream) -> Result<Tensor> {
    let mut x = rng.gaussian(&[1, model.data_dim()])?;
    for t in (1..=model.schedule.steps()).rev() {
        x = ddpm_step(&x, t, model, rng)?;
    }
    Ok(x)
}

/// `n` independent samples, sample `i` driven by `sample_rng(seed, i)`.
pub fn sample(model: &DiffusionModel, n: usize, seed: u64) -> Result<Tensor> {
    let d = model.data_dim();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        data.extend_from_slice(sample_one(model, &mut sample_rng(seed, i))?.data());
    }
    Tensor::from_vec(&[n, d], data)
}

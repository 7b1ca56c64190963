//! Preference-guided sampling.
//!
//! Each reverse step proposes
//! `x~_{t-1} = DDPM(x_t) + gamma * sigma_t^2 * grad log S(x_t)`. With
//! rejection enabled, a proposal scoring below the current state is pushed
//! back to timestep `t` by deterministic DDIM inversion and re-proposed, at
//! most `max_resamples` times, after which the last proposal is accepted.
//!
//! Scores compare `S(x_t)` at timestep `t` against `S(x~_{t-1})` at `t - 1`
//! (the final `x_0` uses the `t = 1` features). Each retry draws fresh noise.

use rayon::prelude::*;

use crate::ddpm::{ddpm_step, sample_rng, DiffusionModel};
use crate::error::{Error, Result};
use crate::nn::{RngStream, Tensor};
use crate::prefclassifier::PreferenceClassifier;

/// Retry ceiling for the unbounded variant, after which sampling fails.
pub const UNBOUNDED_RETRY_LIMIT: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceConfig {
    /// Weight `gamma` on the correction. 1 matches the first-order tilt; the
    /// default of 3 is what the toy tasks need to steer at `T = 50`.
    pub gamma: f64,
    /// Maximum inversion-and-retry attempts per timestep (`M`).
    pub max_resamples: usize,
    pub rejection_enabled: bool,
    /// Retry until the score stops decreasing, ignoring `max_resamples`.
    pub unbounded: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { gamma: 3.0, max_resamples: 5, rejection_enabled: true, unbounded: false }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::invalid(format!("guidance weight must be finite and >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Plain DDPM: no correction, no rejection.
    pub fn disabled() -> Self {
        Self { gamma: 0.0, rejection_enabled: false, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcceptedBy {
    FirstTry,
    ZResample,
    /// Retries ran out (or rejection is off) with the score still lower.
    CapExhausted,
}

impl AcceptedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            AcceptedBy::FirstTry => "first_try",
            AcceptedBy::ZResample => "z_resample",
            AcceptedBy::CapExhausted => "cap_exhausted",
        }
    }
}

/// Audit record of one reverse step. `score_before` is the score of the
/// state the accepted proposal was drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub score_before: f64,
    pub score_after: f64,
    pub resamples: usize,
    pub accepted_by: AcceptedBy,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SamplerTrace {
    pub steps: Vec<TraceStep>,
}

impl SamplerTrace {
    pub fn total_resamples(&self) -> usize {
        self.steps.iter().map(|s| s.resamples).sum()
    }
}

/// DDPM step plus the preference correction evaluated at `x_t`. Consumes
/// the rng exactly like [`ddpm_step`].
pub fn guided_step(
    x_t: &Tensor,
    t: usize,
    model: &DiffusionModel,
    clf: &PreferenceClassifier,
    cfg: &GuidanceConfig,
    rng: &mut RngStream,
) -> Result<Tensor> {
    model.schedule.check_t(t)?;
    let grad = if cfg.gamma != 0.0 { Some(clf.log_score_grad(x_t, t)?.grad) } else { None };
    let mut out = ddpm_step(x_t, t, model, rng)?;
    if let Some(g) = grad {
        let k = cfg.gamma * model.schedule.sigma2(t);
        for (o, gi) in out.data_mut().iter_mut().zip(g.data()) {
            let c = k * gi;
            if c != 0.0 {
                *o += c;
            }
        }
    }
    Ok(out)
}

/// First-order DDIM inversion from `t - 1` back to `t`, using the noise
/// prediction at `(x_{t-1}, t - 1)`.
pub fn ddim_inverse_step(x_tm1: &Tensor, t: usize, model: &DiffusionModel) -> Result<Tensor> {
    let s = &model.schedule;
    s.check_t(t)?;
    let (ab_t, ab_prev) = (s.alpha_bar(t), s.alpha_bar(t - 1));
    let eps = model.predict_noise(x_tm1, t - 1)?;
    let scale = (ab_t / ab_prev).sqrt();
    let coef = (1.0 - ab_t).sqrt() - (ab_t * (1.0 - ab_prev) / ab_prev).sqrt();
    x_tm1.scale(scale).axpy(coef, &eps)
}

/// Deterministic DDIM update from `t` to `t - 1`; the map `ddim_inverse_step` approximately undoes.
pub fn ddim_step(x_t: &Tensor, t: usize, model: &DiffusionModel) -> Result<Tensor> {
    let s = &model.schedule;
    s.check_t(t)?;
    let (ab_t, ab_prev) = (s.alpha_bar(t), s.alpha_bar(t - 1));
    let eps = model.predict_noise(x_t, t)?;
    let x0 = x_t.axpy(-(1.0 - ab_t).sqrt(), &eps)?.scale(1.0 / ab_t.sqrt());
    x0.scale(ab_prev.sqrt()).axpy((1.0 - ab_prev).sqrt(), &eps)
}

fn check_pair(model: &DiffusionModel, clf: &PreferenceClassifier) -> Result<()> {
    if model.data_dim() != clf.data_dim() {
        return Err(Error::invalid(format!(
            "classifier dim {} does not match model dim {}",
            clf.data_dim(),
            model.data_dim()
        )));
    }
    if clf.time_conditioned() && clf.total_steps() != model.schedule.steps() {
        return Err(Error::invalid(format!(
            "classifier was built for T = {} but the model has T = {}",
            clf.total_steps(),
            model.schedule.steps()
        )));
    }
    Ok(())
}

/// One constrained reverse chain from `x_T ~ N(0, I)` drawn from `rng`.
pub fn constrained_sample_one(
    model: &DiffusionModel,
    clf: &PreferenceClassifier,
    cfg: &GuidanceConfig,
    rng: &mut RngStream,
) -> Result<(Tensor, SamplerTrace)> {
    check_pair(model, clf)?;
    cfg.validate()?;
    let limit = match (cfg.rejection_enabled, cfg.unbounded) {
        (false, _) => 0,
        (true, false) => cfg.max_resamples,
        (true, true) => UNBOUNDED_RETRY_LIMIT,
    };
    let mut x = rng.gaussian(&[1, model.data_dim()])?;
    let mut trace = SamplerTrace { steps: Vec::with_capacity(model.schedule.steps()) };
    for t in (1..=model.schedule.steps()).rev() {
        let mut s_cur = clf.score(&x, t)?;
        let mut cand = guided_step(&x, t, model, clf, cfg, rng)?;
        let mut s_cand = clf.score(&cand, t - 1)?;
        let mut m = 0;
        while s_cand < s_cur && m < limit {
            x = ddim_inverse_step(&cand, t, model)?;
            s_cur = clf.score(&x, t)?;
            cand = guided_step(&x, t, model, clf, cfg, rng)?;
            s_cand = clf.score(&cand, t - 1)?;
            m += 1;
        }
        if cfg.unbounded && cfg.rejection_enabled && s_cand < s_cur {
            return Err(Error::Construction(format!(
                "unbounded resampling at t = {t} did not reach a non-decreasing score in {limit} attempts"
            )));
        }
        let accepted_by = if s_cand < s_cur {
            AcceptedBy::CapExhausted
        } else if m == 0 {
            AcceptedBy::FirstTry
        } else {
            AcceptedBy::ZResample
        };
        trace.steps.push(TraceStep { t, score_before: s_cur, score_after: s_cand, resamples: m, accepted_by });
        x = cand;
    }
    Ok((x, trace))
}

/// `n` constrained samples; sample `i` uses `sample_rng(seed, i)`, so the
/// result does not depend on `threads`.
pub fn constrained_sample(
    model: &DiffusionModel,
    clf: &PreferenceClassifier,
    cfg: &GuidanceConfig,
    seed: u64,
    n: usize,
    threads: usize,
) -> Result<(Tensor, Vec<SamplerTrace>)> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    check_pair(model, clf)?;
    cfg.validate()?;
    let run = |i: usize| constrained_sample_one(model, clf, cfg, &mut sample_rng(seed, i));
    let results: Vec<(Tensor, SamplerTrace)> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(run).collect::<Result<_>>())?
    } else {
        (0..n).map(run).collect::<Result<_>>()?
    };
    let d = model.data_dim();
    let mut data = Vec::with_capacity(n * d);
    let mut traces = Vec::with_capacity(n);
    for (x, tr) in results {
        data.extend_from_slice(x.data());
        traces.push(tr);
    }
    Ok((Tensor::from_vec(&[n, d], data)?, traces))
}

//! In-memory train, sample and evaluate steps shared by the subcommands.
//!
//! Each step draws from its own stream under the configured seed, so any
//! step can be rerun alone and reproduce the same numbers.

use serde::Serialize;

use super::config::Config;
use crate::data::{make_preference_pairs, win_rate, PreferencePairSet, ToyDataset};
use crate::ddpm::{train_ddpm, DiffusionModel, NoiseSchedule};
use crate::error::{Error, Result};
use crate::guidance::{constrained_sample, GuidanceConfig, SamplerTrace};
use crate::nn::{AdamwConfig, AdamwState, RngStream, Tensor};
use crate::prefclassifier::{
    train_classifier as fit_classifier, ClassifierTraining, PcLossConfig, PreferenceClassifier, TimestepSampling,
};

const STREAM_DATA: u64 = 1;
const STREAM_DIFFUSION_INIT: u64 = 2;
const STREAM_DIFFUSION_TRAIN: u64 = 3;
const STREAM_PAIR_POOL: u64 = 4;
const STREAM_PAIRS: u64 = 5;
const STREAM_CLASSIFIER_INIT: u64 = 6;
const STREAM_CLASSIFIER_TRAIN: u64 = 7;
const STREAM_EVAL_UNGUIDED: u64 = 8;

pub struct TrainedDiffusion {
    pub model: DiffusionModel,
    pub losses: Vec<f64>,
    pub data: ToyDataset,
}

pub fn training_data(cfg: &Config) -> Result<ToyDataset> {
    cfg.data.task.dataset(cfg.data.n, &mut RngStream::derive(cfg.seed, STREAM_DATA))
}

pub fn train_diffusion(cfg: &Config) -> Result<TrainedDiffusion> {
    let data = training_data(cfg)?;
    let sched = cfg.noise_schedule()?;
    let mut init = RngStream::derive(cfg.seed, STREAM_DIFFUSION_INIT);
    let mut model = DiffusionModel::init(cfg.data.task.dim(), &cfg.train.hidden, sched, &mut init)?;
    let mut opt = AdamwState::new(AdamwConfig::with_lr(cfg.train.lr), &model.net.param_shapes())?;
    let mut rng = RngStream::derive(cfg.seed, STREAM_DIFFUSION_TRAIN);
    let losses = train_ddpm(&data.points, &mut model, &mut opt, cfg.train.steps, cfg.train.batch, &mut rng)?;
    Ok(TrainedDiffusion { model, losses, data })
}

/// Pairs drawn from a fresh pool of `data.n` task points, labelled by the
/// task's ground-truth reward.
pub fn preference_pairs(cfg: &Config) -> Result<PreferencePairSet> {
    let pool = cfg.data.task.dataset(cfg.data.n, &mut RngStream::derive(cfg.seed, STREAM_PAIR_POOL))?;
    let reward = cfg.data.task.reward();
    make_preference_pairs(&pool, &reward, cfg.data.pairs, &mut RngStream::derive(cfg.seed, STREAM_PAIRS))
}

pub fn train_classifier(
    cfg: &Config,
    sched: &NoiseSchedule,
    pairs: &PreferencePairSet,
) -> Result<(PreferenceClassifier, Vec<f64>)> {
    let c = &cfg.classifier;
    let dim = pairs.dim().ok_or_else(|| Error::invalid("preference pair set is empty"))?;
    let mut init = RngStream::derive(cfg.seed, STREAM_CLASSIFIER_INIT);
    let mut clf = PreferenceClassifier::init(dim, &c.hidden, c.time_conditioned, sched.steps(), &mut init)?;
    let loss_cfg = PcLossConfig::new(cfg.pc_beta, sched.steps())?;
    let mut opt = AdamwState::new(AdamwConfig::with_lr(c.lr), &clf.trunk.param_shapes())?;
    let run = ClassifierTraining {
        steps: c.steps,
        batch: c.batch,
        timesteps: TimestepSampling::Uniform,
        shared_noise: c.shared_noise,
    };
    let mut rng = RngStream::derive(cfg.seed, STREAM_CLASSIFIER_TRAIN);
    let losses = fit_classifier(&mut clf, pairs, sched, &loss_cfg, &mut opt, run, &mut rng)?;
    Ok((clf, losses))
}

/// Guided samples, or plain DDPM samples when `clf` is `None`.
pub fn draw_samples(
    model: &DiffusionModel,
    clf: Option<&PreferenceClassifier>,
    guidance: &GuidanceConfig,
    seed: u64,
    n: usize,
    threads: usize,
) -> Result<(Tensor, Vec<SamplerTrace>)> {
    match clf {
        Some(clf) => constrained_sample(model, clf, guidance, seed, n, threads),
        None => {
            let flat = PreferenceClassifier::constant(model.data_dim(), false, model.schedule.steps())?;
            constrained_sample(model, &flat, &GuidanceConfig::disabled(), seed, n, threads)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub win_rate: f64,
    pub preferred_mode_mass_guided: f64,
    pub preferred_mode_mass_unguided: f64,
    /// Mean resampling attempts per guided reverse step.
    pub mean_resamples: f64,
}

/// Seed of the unguided comparison set in [`evaluate`].
pub fn unguided_seed(seed: u64) -> u64 {
    RngStream::derive(seed, STREAM_EVAL_UNGUIDED).next_u64()
}

/// Guided samples use `seed` (as `sample` would) and the unguided set uses
/// [`unguided_seed`], so the two sets are independent draws.
pub fn evaluate(
    cfg: &Config,
    model: &DiffusionModel,
    clf: &PreferenceClassifier,
    n: usize,
    threads: usize,
) -> Result<Metrics> {
    if n == 0 {
        return Err(Error::invalid("eval needs n >= 1"));
    }
    let (guided, traces) = draw_samples(model, Some(clf), &cfg.guidance, cfg.seed, n, threads)?;
    let (plain, _) = draw_samples(model, None, &cfg.guidance, unguided_seed(cfg.seed), n, threads)?;
    let reward = cfg.data.task.reward();
    let steps: usize = traces.iter().map(|t| t.steps.len()).sum();
    let resamples: usize = traces.iter().map(SamplerTrace::total_resamples).sum();
    Ok(Metrics {
        win_rate: win_rate(&guided, &plain, &reward)?,
        preferred_mode_mass_guided: reward.preferred_mass(&guided),
        preferred_mode_mass_unguided: reward.preferred_mass(&plain),
        mean_resamples: resamples as f64 / steps as f64,
    })
}

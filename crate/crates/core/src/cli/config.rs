//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::data::{make_mixture, make_two_moons, GroundTruthReward, MixtureSpec, ToyDataset};
use crate::ddpm::{NoiseSchedule, ScheduleParams};
use crate::error::{Error, Result};
use crate::guidance::GuidanceConfig;
use crate::nn::RngStream;

/// Toy dataset and its ground-truth preference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// 2D modes at `(+-2, 0)`, std 0.3; the right mode is preferred.
    TwoMode,
    /// The same mixture on the real line.
    TwoMode1d,
    /// Two moons; larger first coordinate is preferred.
    TwoMoons,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::TwoMode => "two_mode",
            Task::TwoMode1d => "two_mode_1d",
            Task::TwoMoons => "two_moons",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Task::TwoMode1d => 1,
            Task::TwoMode | Task::TwoMoons => 2,
        }
    }

    pub fn dataset(self, n: usize, rng: &mut RngStream) -> Result<ToyDataset> {
        match self {
            Task::TwoMode | Task::TwoMode1d => make_mixture(&MixtureSpec::two_mode(self.dim()), n, rng),
            Task::TwoMoons => make_two_moons(n, 0.05, rng),
        }
    }

    pub fn reward(self) -> GroundTruthReward {
        match self {
            Task::TwoMode | Task::TwoMode1d => {
                GroundTruthReward::ModeIndicator { spec: MixtureSpec::two_mode(self.dim()), preferred: 1 }
            }
            Task::TwoMoons => GroundTruthReward::Linear { weights: vec![1.0, 0.0] },
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "two_mode" => Ok(Task::TwoMode),
            "two_mode_1d" => Ok(Task::TwoMode1d),
            "two_moons" => Ok(Task::TwoMoons),
            other => Err(format!("unknown task {other:?} (expected two_mode, two_mode_1d or two_moons)")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    /// Off by default: with a per-timestep score the loss only constrains
    /// differences between adjacent timesteps, and the fitted gradients can
    /// point away from the preferred region.
    pub time_conditioned: bool,
    /// Noise winner and loser with the same draws.
    pub shared_noise: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub task: Task,
    /// Points in the training set (and in the pool pairs are drawn from).
    pub n: usize,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub schedule: ScheduleParams,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub pc_beta: f64,
    pub guidance: GuidanceConfig,
    pub data: DataConfig,
}

/// Every accepted key, in the order [`Config::to_text`] writes them.
pub const KEYS: [&str; 25] = [
    "seed",
    "schedule.T",
    "schedule.beta_start",
    "schedule.beta_end",
    "train.steps",
    "train.batch",
    "train.lr",
    "train.hidden",
    "classifier.steps",
    "classifier.batch",
    "classifier.lr",
    "classifier.hidden",
    "classifier.time_conditioned",
    "classifier.shared_noise",
    "pc.beta",
    "guidance.gamma",
    "guidance.M",
    "guidance.rejection",
    "guidance.unbounded",
    "data.task",
    "data.n",
    "data.pairs",
    "sample.n",
    "eval.n",
    "threads",
];

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            schedule: ScheduleParams::default(),
            train: TrainConfig { steps: 5000, batch: 128, lr: 1e-3, hidden: vec![64, 64, 64] },
            classifier: ClassifierConfig {
                steps: 2000,
                batch: 64,
                lr: 1e-4,
                hidden: vec![32, 32],
                time_conditioned: false,
                shared_noise: true,
            },
            pc_beta: 0.1,
            guidance: GuidanceConfig::default(),
            data: DataConfig { task: Task::TwoMode, n: 10_000, pairs: 5_000 },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::config(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got {value:?}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let out: Vec<usize> = value.split(',').map(|v| parse(key, v.trim())).collect::<Result<_>>()?;
    if out.is_empty() || out.contains(&0) {
        return Err(Error::config(key, "layer widths must be positive"));
    }
    Ok(out)
}

fn list_text(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be a positive finite number, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::config(key, "must be at least 1"))
    }
}

/// Values for keys that only shape a single command (sample and eval
/// sizes, thread count). They are not part of [`Config`] proper.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub sample_n: Option<usize>,
    pub eval_n: Option<usize>,
    pub threads: Option<usize>,
}

impl Config {
    /// Parses `key = value` lines on top of the defaults. `#` starts a
    /// comment; blank lines are ignored; a repeated key is an error.
    pub fn parse_text(text: &str) -> Result<(Self, RunOptions)> {
        let mut cfg = Config::default();
        let mut opts = RunOptions::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("line {} is not `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::config(key, "given more than once"));
            }
            cfg.set(key, value, &mut opts)?;
        }
        cfg.validate()?;
        Ok((cfg, opts))
    }

    pub fn load(path: &Path) -> Result<(Self, RunOptions)> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str, opts: &mut RunOptions) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "schedule.T" => self.schedule.steps = parse(key, value)?,
            "schedule.beta_start" => self.schedule.beta_start = parse(key, value)?,
            "schedule.beta_end" => self.schedule.beta_end = parse(key, value)?,
            "train.steps" => self.train.steps = parse(key, value)?,
            "train.batch" => self.train.batch = parse(key, value)?,
            "train.lr" => self.train.lr = parse(key, value)?,
            "train.hidden" => self.train.hidden = parse_list(key, value)?,
            "classifier.steps" => self.classifier.steps = parse(key, value)?,
            "classifier.batch" => self.classifier.batch = parse(key, value)?,
            "classifier.lr" => self.classifier.lr = parse(key, value)?,
            "classifier.hidden" => self.classifier.hidden = parse_list(key, value)?,
            "classifier.time_conditioned" => self.classifier.time_conditioned = parse_bool(key, value)?,
            "classifier.shared_noise" => self.classifier.shared_noise = parse_bool(key, value)?,
            "pc.beta" => self.pc_beta = parse(key, value)?,
            "guidance.gamma" => self.guidance.gamma = parse(key, value)?,
            "guidance.M" => self.guidance.max_resamples = parse(key, value)?,
            "guidance.rejection" => self.guidance.rejection_enabled = parse_bool(key, value)?,
            "guidance.unbounded" => self.guidance.unbounded = parse_bool(key, value)?,
            "data.task" => self.data.task = parse(key, value)?,
            "data.n" => self.data.n = parse(key, value)?,
            "data.pairs" => self.data.pairs = parse(key, value)?,
            "sample.n" => opts.sample_n = Some(parse(key, value)?),
            "eval.n" => opts.eval_n = Some(parse(key, value)?),
            "threads" => opts.threads = Some(parse(key, value)?),
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Checks every value against the preconditions of the module that
    /// consumes it, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if s.steps < 2 {
            return Err(Error::config("schedule.T", "must be at least 2"));
        }
        for (key, b) in [("schedule.beta_start", s.beta_start), ("schedule.beta_end", s.beta_end)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(key, format!("must lie in (0, 1), got {b}")));
            }
        }
        if s.beta_start > s.beta_end {
            return Err(Error::config("schedule.beta_end", "must not be below schedule.beta_start"));
        }
        NoiseSchedule::new(*s).map_err(|e| Error::config("schedule.T", e.to_string()))?;
        at_least_one("train.steps", self.train.steps)?;
        at_least_one("train.batch", self.train.batch)?;
        positive("train.lr", self.train.lr)?;
        at_least_one("classifier.steps", self.classifier.steps)?;
        at_least_one("classifier.batch", self.classifier.batch)?;
        positive("classifier.lr", self.classifier.lr)?;
        positive("pc.beta", self.pc_beta)?;
        if !(self.guidance.gamma.is_finite() && self.guidance.gamma >= 0.0) {
            return Err(Error::config(
                "guidance.gamma",
                format!("must be finite and >= 0, got {}", self.guidance.gamma),
            ));
        }
        if self.data.n < 2 {
            return Err(Error::config("data.n", "must be at least 2"));
        }
        at_least_one("data.pairs", self.data.pairs)?;
        Ok(())
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule)
    }

    /// The full configuration in the accepted file format.
    pub fn to_text(&self) -> String {
        let g = &self.guidance;
        let c = &self.classifier;
        let lines = [
            ("seed", self.seed.to_string()),
            ("schedule.T", self.schedule.steps.to_string()),
            ("schedule.beta_start", self.schedule.beta_start.to_string()),
            ("schedule.beta_end", self.schedule.beta_end.to_string()),
            ("train.steps", self.train.steps.to_string()),
            ("train.batch", self.train.batch.to_string()),
            ("train.lr", self.train.lr.to_string()),
            ("train.hidden", list_text(&self.train.hidden)),
            ("classifier.steps", c.steps.to_string()),
            ("classifier.batch", c.batch.to_string()),
            ("classifier.lr", c.lr.to_string()),
            ("classifier.hidden", list_text(&c.hidden)),
            ("classifier.time_conditioned", c.time_conditioned.to_string()),
            ("classifier.shared_noise", c.shared_noise.to_string()),
            ("pc.beta", self.pc_beta.to_string()),
            ("guidance.gamma", g.gamma.to_string()),
            ("guidance.M", g.max_resamples.to_string()),
            ("guidance.rejection", g.rejection_enabled.to_string()),
            ("guidance.unbounded", g.unbounded.to_string()),
            ("data.task", self.data.task.to_string()),
            ("data.n", self.data.n.to_string()),
            ("data.pairs", self.data.pairs.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_text_gives_defaults() {
        let (cfg, opts) = Config::parse_text("# nothing\n\n").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(opts, RunOptions::default());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = Config::default();
        cfg.guidance.gamma = 2.5;
        cfg.classifier.hidden = vec![8, 4];
        cfg.data.task = Task::TwoMoons;
        let (back, _) = Config::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let mut cfg = Config::default();
        let mut opts = RunOptions::default();
        for key in KEYS {
            let value = match key {
                "train.hidden" | "classifier.hidden" => "4,4",
                "data.task" => "two_mode",
                k if k.starts_with("classifier.") && k.ends_with("noise") => "true",
                "classifier.time_conditioned" | "guidance.rejection" | "guidance.unbounded" => "false",
                "schedule.beta_start" | "schedule.beta_end" | "train.lr" | "classifier.lr" | "pc.beta" => "0.01",
                _ => "3",
            };
            cfg.set(key, value, &mut opts).unwrap();
        }
        assert_eq!(opts.threads, Some(3));
    }

    #[test]
    fn bad_values_name_their_key() {
        let err = Config::parse_text("schedule.beta_start = 1.5").unwrap_err();
        assert_eq!(key_of(err), "schedule.beta_start");
        assert_eq!(key_of(Config::parse_text("bogus.key = 1").unwrap_err()), "bogus.key");
        assert_eq!(key_of(Config::parse_text("train.steps = -3").unwrap_err()), "train.steps");
        assert_eq!(key_of(Config::parse_text("guidance.rejection = maybe").unwrap_err()), "guidance.rejection");
        assert_eq!(key_of(Config::parse_text("seed = 1\nseed = 2").unwrap_err()), "seed");
        assert_eq!(key_of(Config::parse_text("data.task = spiral").unwrap_err()), "data.task");
        assert_eq!(key_of(Config::parse_text("guidance.gamma = -1").unwrap_err()), "guidance.gamma");
        assert_eq!(key_of(Config::parse_text("schedule.T = 1").unwrap_err()), "schedule.T");
    }

    #[test]
    fn comments_and_spacing() {
        let (cfg, _) = Config::parse_text("  seed=11   # trailing\n#x = 1\nguidance.M = 3").unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.guidance.max_resamples, 3);
    }

    #[test]
    fn task_rewards_prefer_the_right() {
        for task in [Task::TwoMode, Task::TwoMode1d, Task::TwoMoons] {
            let r = task.reward();
            let mut right = vec![0.0; task.dim()];
            right[0] = 1.5;
            let left: Vec<f64> = right.iter().map(|v| -v).collect();
            assert!(r.reward(&right) > r.reward(&left), "{task}");
        }
    }
}

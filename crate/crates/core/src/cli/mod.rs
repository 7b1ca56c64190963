//! Command-line front end: subcommands, artifact files and exit codes.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 I/O
//! or format error.

pub mod checkpoint;
pub mod config;
pub mod pipeline;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use checkpoint::{Checkpoint, CheckpointHeader, ModelKind, FORMAT_VERSION, MAGIC};
pub use config::{ClassifierConfig, Config, DataConfig, RunOptions, Task, TrainConfig, KEYS};
pub use pipeline::Metrics;

use crate::data::{read_pairs_csv, write_pairs_csv, write_points_csv, PreferencePairSet};
use crate::ddpm::{DiffusionModel, ScheduleParams};
use crate::error::{Error, Result};
use crate::guidance::SamplerTrace;
use crate::nn::Tensor;
use crate::oracle::{run_verify, Suite};
use crate::prefclassifier::PreferenceClassifier;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "pcdiff", version, about = "Preference-classifier guided diffusion on toy data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Extra `key=value` assignment applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the noise-prediction network; writes diffusion.pcdf, losses.csv, data.csv.
    TrainDiffusion {
        #[command(flatten)]
        common: Common,
    },
    /// Train the preference classifier; writes classifier.pcdf, losses.csv, pairs.csv.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        diffusion: PathBuf,
        /// Pairs CSV to train on instead of generating pairs from the task.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Draw samples; writes samples.csv and trace.csv.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        diffusion: PathBuf,
        /// Without a classifier the sampler is plain DDPM.
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(short = 'n', long = "num-samples")]
        n: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the verification suites; exits 1 if any bound is missed.
    Verify {
        /// theorem1, theorem2, theorem3, gradcheck or all.
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Directory for report.json and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare guided and unguided samples; writes metrics.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        diffusion: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(short = 'n', long = "num-samples")]
        n: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// Runs a parsed command, returning the exit code for a completed run.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::TrainDiffusion { common } => train_diffusion_cmd(&common),
        Command::TrainClassifier { common, diffusion, pairs } => {
            train_classifier_cmd(&common, &diffusion, pairs.as_deref())
        }
        Command::Sample { common, diffusion, classifier, n, threads } => {
            sample_cmd(&common, &diffusion, classifier.as_deref(), n, threads)
        }
        Command::Verify { suite, seed, out } => verify_cmd(&suite, seed, out.as_deref()),
        Command::Eval { common, diffusion, classifier, n, threads } => {
            eval_cmd(&common, &diffusion, &classifier, n, threads)
        }
    }
}

/// Parses `args` (program name first), runs, and maps errors to exit codes
/// with a message on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve(common: &Common) -> Result<(Config, RunOptions)> {
    let (mut cfg, mut opts) = match &common.config {
        Some(path) => Config::load(path)?,
        None => (Config::default(), RunOptions::default()),
    };
    for assignment in &common.set {
        let (k, v) =
            assignment.split_once('=').ok_or_else(|| Error::config(assignment.as_str(), "--set expects KEY=VALUE"))?;
        cfg.set(k.trim(), v.trim(), &mut opts)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&common.out)?;
    Ok((cfg, opts))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

pub fn write_losses_csv<W: Write>(losses: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "loss"]).map_err(csv_err)?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples_csv<W: Write>(samples: &Tensor, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = samples.last_dim();
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..d).map(|k| format!("dim_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..samples.rows() {
        let mut rec = vec![i.to_string()];
        rec.extend(samples.row(i).iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(traces: &[SamplerTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_id", "t", "score_before", "score_after", "resamples", "accepted_by"]).map_err(csv_err)?;
    for (i, tr) in traces.iter().enumerate() {
        for s in &tr.steps {
            w.write_record([
                i.to_string(),
                s.t.to_string(),
                s.score_before.to_string(),
                s.score_after.to_string(),
                s.resamples.to_string(),
                s.accepted_by.as_str().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(value: &T, dir: &Path, name: &str) -> Result<String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))? + "\n";
    std::fs::write(dir.join(name), &text)?;
    Ok(text)
}

fn schedule_text(s: &ScheduleParams) -> String {
    format!("T = {}, beta_start = {}, beta_end = {}", s.steps, s.beta_start, s.beta_end)
}

fn check_header(header: &CheckpointHeader, cfg: &Config, path: &Path) -> Result<()> {
    if header.schedule != cfg.schedule {
        return Err(Error::invalid(format!(
            "{}: checkpoint schedule ({}) disagrees with the config ({})",
            path.display(),
            schedule_text(&header.schedule),
            schedule_text(&cfg.schedule)
        )));
    }
    if header.data_dim != cfg.data.task.dim() {
        return Err(Error::invalid(format!(
            "{}: checkpoint has data_dim {} but task {} is {}-dimensional",
            path.display(),
            header.data_dim,
            cfg.data.task,
            cfg.data.task.dim()
        )));
    }
    Ok(())
}

fn load_diffusion(path: &Path, cfg: &Config) -> Result<DiffusionModel> {
    let ckpt = Checkpoint::load(path)?;
    check_header(&ckpt.header, cfg, path)?;
    ckpt.into_diffusion()
}

fn load_classifier(path: &Path, cfg: &Config) -> Result<PreferenceClassifier> {
    let ckpt = Checkpoint::load(path)?;
    check_header(&ckpt.header, cfg, path)?;
    ckpt.into_classifier()
}

fn train_diffusion_cmd(common: &Common) -> Result<i32> {
    let (cfg, _) = resolve(common)?;
    let out = &common.out;
    let trained = pipeline::train_diffusion(&cfg)?;
    Checkpoint::from_diffusion(&trained.model, cfg.seed).save(&out.join("diffusion.pcdf"))?;
    write_losses_csv(&trained.losses, create(out, "losses.csv")?)?;
    write_points_csv(&trained.data.points, create(out, "data.csv")?)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    Ok(EXIT_OK)
}

fn train_classifier_cmd(common: &Common, diffusion: &Path, pairs_path: Option<&Path>) -> Result<i32> {
    let (cfg, _) = resolve(common)?;
    let out = &common.out;
    let model = load_diffusion(diffusion, &cfg)?;
    let pairs: PreferencePairSet = match pairs_path {
        Some(p) => read_pairs_csv(File::open(p)?)?,
        None => pipeline::preference_pairs(&cfg)?,
    };
    if pairs.dim() != Some(model.data_dim()) {
        return Err(Error::invalid(format!(
            "pairs have dimension {:?} but the model is {}-dimensional",
            pairs.dim(),
            model.data_dim()
        )));
    }
    let (clf, losses) = pipeline::train_classifier(&cfg, &model.schedule, &pairs)?;
    Checkpoint::from_classifier(&clf, &model.schedule, cfg.seed).save(&out.join("classifier.pcdf"))?;
    write_losses_csv(&losses, create(out, "losses.csv")?)?;
    write_pairs_csv(&pairs, create(out, "pairs.csv")?)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    Ok(EXIT_OK)
}

fn sample_count(flag: Option<usize>, from_config: Option<usize>) -> Result<usize> {
    let n = flag.or(from_config).unwrap_or(DEFAULT_SAMPLES);
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Ok(n)
}

fn sample_cmd(
    common: &Common,
    diffusion: &Path,
    classifier: Option<&Path>,
    n: Option<usize>,
    threads: Option<usize>,
) -> Result<i32> {
    let (cfg, opts) = resolve(common)?;
    let n = sample_count(n, opts.sample_n)?;
    let threads = threads.or(opts.threads).unwrap_or(1);
    let model = load_diffusion(diffusion, &cfg)?;
    let clf = classifier.map(|p| load_classifier(p, &cfg)).transpose()?;
    let (samples, traces) = pipeline::draw_samples(&model, clf.as_ref(), &cfg.guidance, cfg.seed, n, threads)?;
    write_samples_csv(&samples, create(&common.out, "samples.csv")?)?;
    write_trace_csv(&traces, create(&common.out, "trace.csv")?)?;
    Ok(EXIT_OK)
}

fn verify_cmd(suite: &str, seed: u64, out: Option<&Path>) -> Result<i32> {
    let suite: Suite = suite.parse()?;
    let report = run_verify(suite, seed)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), &text)?;
        write_json(&report, dir, "report.json")?;
    }
    if report.passed {
        Ok(EXIT_OK)
    } else {
        eprintln!("verification failed: {}", report.failing_suites().join(", "));
        Ok(EXIT_VERIFY_FAILED)
    }
}

fn eval_cmd(
    common: &Common,
    diffusion: &Path,
    classifier: &Path,
    n: Option<usize>,
    threads: Option<usize>,
) -> Result<i32> {
    let (cfg, opts) = resolve(common)?;
    let n = sample_count(n, opts.eval_n)?;
    let threads = threads.or(opts.threads).unwrap_or(1);
    let model = load_diffusion(diffusion, &cfg)?;
    let clf = load_classifier(classifier, &cfg)?;
    let metrics = pipeline::evaluate(&cfg, &model, &clf, n, threads)?;
    print!("{}", write_json(&metrics, &common.out, "metrics.json")?);
    Ok(EXIT_OK)
}

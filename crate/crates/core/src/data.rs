//! Synthetic datasets, ground-truth rewards and preference pairs.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::{RngStream, Tensor};

/// Gaussian mixture with a shared isotropic standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub std: f64,
    pub weights: Vec<f64>,
}

impl MixtureSpec {
    /// Two equal-weight modes at `(-2, 0, ..)` and `(+2, 0, ..)` with std 0.3.
    pub fn two_mode(dim: usize) -> Self {
        let mut left = vec![0.0; dim];
        let mut right = vec![0.0; dim];
        left[0] = -2.0;
        right[0] = 2.0;
        Self { means: vec![left, right], std: 0.3, weights: vec![0.5, 0.5] }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return Err(Error::invalid("mixture means must share a positive dimension"));
        }
        if self.weights.len() != self.means.len()
            || self.weights.iter().any(|&w| !(w >= 0.0))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid(format!("mixture weights {:?} must be >= 0 and sum to 1", self.weights)));
        }
        if !(self.std >= 0.0) || !self.std.is_finite() {
            return Err(Error::invalid(format!("mixture std must be finite and >= 0, got {}", self.std)));
        }
        Ok(())
    }

    /// Posterior probability that `x` came from component `k`.
    pub fn responsibility(&self, x: &[f64], k: usize) -> f64 {
        let var = self.std * self.std;
        let logits: Vec<f64> = self
            .means
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| {
                let d2: f64 = m.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                w.ln() - d2 / (2.0 * var)
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        (logits[k] - max).exp() / denom
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Mixture(MixtureSpec),
    TwoMoons { noise: f64 },
}

#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub points: Tensor,
    pub generator: Generator,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.last_dim()
    }
}

pub fn make_mixture(spec: &MixtureSpec, n: usize, rng: &mut RngStream) -> Result<ToyDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let d = spec.dim();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut k = spec.weights.len() - 1;
        for (i, w) in spec.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        for &m in &spec.means[k] {
            data.push(m + spec.std * rng.normal());
        }
    }
    Ok(ToyDataset { points: Tensor::from_vec(&[n, d], data)?, generator: Generator::Mixture(spec.clone()) })
}

/// The classic interleaved half-circles, centred at the origin.
pub fn make_two_moons(n: usize, noise: f64, rng: &mut RngStream) -> Result<ToyDataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let mut data = Vec::with_capacity(2 * n);
    for i in 0..n {
        let angle = std::f64::consts::PI * rng.uniform();
        let (x, y) = if i % 2 == 0 { (angle.cos(), angle.sin()) } else { (1.0 - angle.cos(), 0.5 - angle.sin()) };
        data.push(x - 0.5 + noise * rng.normal());
        data.push(y - 0.25 + noise * rng.normal());
    }
    Ok(ToyDataset { points: Tensor::from_vec(&[n, 2], data)?, generator: Generator::TwoMoons { noise } })
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruthReward {
    /// Responsibility of mixture component `preferred`.
    ModeIndicator {
        spec: MixtureSpec,
        preferred: usize,
    },
    Linear {
        weights: Vec<f64>,
    },
}

impl GroundTruthReward {
    pub fn reward(&self, x: &[f64]) -> f64 {
        match self {
            Self::ModeIndicator { spec, preferred } => spec.responsibility(x, *preferred),
            Self::Linear { weights } => weights.iter().zip(x).map(|(w, v)| w * v).sum(),
        }
    }

    /// Whether `x` lies in the preferred region: responsibility above one half,
    /// or positive linear reward.
    pub fn in_preferred_region(&self, x: &[f64]) -> bool {
        match self {
            Self::ModeIndicator { .. } => self.reward(x) > 0.5,
            Self::Linear { .. } => self.reward(x) > 0.0,
        }
    }

    /// Fraction of rows of `samples` in the preferred region.
    pub fn preferred_mass(&self, samples: &Tensor) -> f64 {
        let n = samples.rows();
        (0..n).filter(|&i| self.in_preferred_region(samples.row(i))).count() as f64 / n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferencePair {
    pub winner: Tensor,
    pub loser: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreferencePairSet {
    pub pairs: Vec<PreferencePair>,
}

impl PreferencePairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.pairs.first().map(|p| p.winner.len())
    }

    /// True when every stored winner strictly out-rewards its loser.
    pub fn is_sound(&self, reward: &GroundTruthReward) -> bool {
        self.pairs.iter().all(|p| reward.reward(p.winner.data()) > reward.reward(p.loser.data()))
    }
}

/// Draws distinct pairs uniformly and labels the higher-reward point the
/// winner. Exact ties are discarded; gives up after `100 * n_pairs` draws.
pub fn make_preference_pairs(
    ds: &ToyDataset,
    reward: &GroundTruthReward,
    n_pairs: usize,
    rng: &mut RngStream,
) -> Result<PreferencePairSet> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::invalid("need at least two points to form pairs"));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    let max_attempts = 100 * n_pairs;
    let mut attempts = 0;
    while pairs.len() < n_pairs {
        if attempts == max_attempts {
            return Err(Error::Construction(format!(
                "only {} of {n_pairs} strict pairs after {max_attempts} draws; reward is constant on the data?",
                pairs.len()
            )));
        }
        attempts += 1;
        let i = rng.index(n);
        let mut j = rng.index(n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (ds.points.row(i), ds.points.row(j));
        let (ra, rb) = (reward.reward(a), reward.reward(b));
        if ra == rb {
            continue;
        }
        let (w, l) = if ra > rb { (a, b) } else { (b, a) };
        pairs.push(PreferencePair { winner: Tensor::vector(w), loser: Tensor::vector(l) });
    }
    Ok(PreferencePairSet { pairs })
}

/// Paired head-to-head rate: 1 for a strict win of `a`, 0.5 for a tie.
pub fn win_rate(samples_a: &Tensor, samples_b: &Tensor, reward: &GroundTruthReward) -> Result<f64> {
    if samples_a.rows() != samples_b.rows() || samples_a.last_dim() != samples_b.last_dim() {
        return Err(Error::invalid(format!(
            "win rate needs equal sample sets, got {:?} vs {:?}",
            samples_a.shape(),
            samples_b.shape()
        )));
    }
    let n = samples_a.rows();
    let total: f64 = (0..n)
        .map(|i| {
            let (ra, rb) = (reward.reward(samples_a.row(i)), reward.reward(samples_b.row(i)));
            if ra > rb {
                1.0
            } else if ra == rb {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / n as f64)
}

fn dim_header(d: usize) -> Vec<String> {
    (0..d).map(|k| format!("dim_{k}")).collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

fn parse_row(record: &csv::StringRecord, skip: usize) -> Result<Vec<f64>> {
    record
        .iter()
        .skip(skip)
        .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number `{f}`: {e}"))))
        .collect()
}

/// Writes one row per point with columns `dim_0..dim_{d-1}`.
pub fn write_points_csv<W: Write>(points: &Tensor, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dim_header(points.last_dim())).map_err(csv_err)?;
    for r in 0..points.rows() {
        w.write_record(points.row(r).iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv<R: Read>(input: R) -> Result<Tensor> {
    let mut r = csv::Reader::from_reader(input);
    let d = r.headers().map_err(csv_err)?.len();
    let mut data = Vec::new();
    for rec in r.records() {
        let row = parse_row(&rec.map_err(csv_err)?, 0)?;
        data.extend(row);
    }
    if d == 0 || data.is_empty() {
        return Err(Error::Format("points file has no data".into()));
    }
    Tensor::from_vec(&[data.len() / d, d], data)
}

/// Columns `pair_id, role, dim_0..`; each pair is a `winner` row then a `loser` row.
pub fn write_pairs_csv<W: Write>(pairs: &PreferencePairSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = pairs.dim().unwrap_or(0);
    let mut header = vec!["pair_id".to_string(), "role".to_string()];
    header.extend(dim_header(d));
    w.write_record(&header).map_err(csv_err)?;
    for (i, p) in pairs.pairs.iter().enumerate() {
        for (role, x) in [("winner", &p.winner), ("loser", &p.loser)] {
            let mut rec = vec![i.to_string(), role.to_string()];
            rec.extend(x.data().iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(input: R) -> Result<PreferencePairSet> {
    let mut r = csv::Reader::from_reader(input);
    let mut winners: Vec<(String, Vec<f64>)> = Vec::new();
    let mut losers: Vec<(String, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let x = parse_row(&rec, 2)?;
        if x.is_empty() {
            return Err(Error::Format(format!("pair {id} has no coordinates")));
        }
        match rec.get(1) {
            Some("winner") => winners.push((id, x)),
            Some("loser") => losers.push((id, x)),
            other => return Err(Error::Format(format!("unknown pair role {other:?}"))),
        }
    }
    if winners.len() != losers.len() {
        return Err(Error::Format("every pair needs one winner and one loser row".into()));
    }
    let mut pairs = Vec::with_capacity(winners.len());
    for ((wid, w), (lid, l)) in winners.into_iter().zip(losers) {
        if wid != lid || w.len() != l.len() {
            return Err(Error::Format(format!("mismatched pair rows {wid} / {lid}")));
        }
        pairs.push(PreferencePair { winner: Tensor::vector(&w), loser: Tensor::vector(&l) });
    }
    Ok(PreferencePairSet { pairs })
}

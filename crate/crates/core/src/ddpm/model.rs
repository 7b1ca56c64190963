use std::f64::consts::PI;

use super::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{Mlp, RngStream, Tensor};

/// Width of the sinusoidal timestep features appended to every input.
pub const EMBED_DIM: usize = 8;

/// Sinusoidal features of `t / total` at frequencies `pi * 2^k`, `k = 0..4`.
pub fn time_embedding(t: usize, total: usize) -> [f64; EMBED_DIM] {
    let tau = t as f64 / total as f64;
    let mut out = [0.0; EMBED_DIM];
    for k in 0..EMBED_DIM / 2 {
        let w = PI * (1u32 << k) as f64;
        out[2 * k] = (w * tau).sin();
        out[2 * k + 1] = (w * tau).cos();
    }
    out
}

/// Concatenates each row of `x` with the embedding of its timestep.
/// `ts` has one entry per row, or a single entry shared by all rows.
pub fn with_time(x: &Tensor, ts: &[usize], total: usize) -> Result<Tensor> {
    let rows = x.rows();
    let d = x.last_dim();
    if ts.len() != rows && ts.len() != 1 {
        return Err(Error::invalid(format!("{} timesteps for {rows} rows", ts.len())));
    }
    let mut data = Vec::with_capacity(rows * (d + EMBED_DIM));
    let shared = (ts.len() == 1).then(|| time_embedding(ts[0], total));
    for r in 0..rows {
        data.extend_from_slice(x.row(r));
        match shared {
            Some(e) => data.extend_from_slice(&e),
            None => data.extend_from_slice(&time_embedding(ts[r], total)),
        }
    }
    Tensor::from_vec(&[rows, d + EMBED_DIM], data)
}

/// Noise-prediction network together with its schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionModel {
    pub net: Mlp,
    pub schedule: NoiseSchedule,
    data_dim: usize,
}

impl DiffusionModel {
    pub fn new(net: Mlp, schedule: NoiseSchedule) -> Result<Self> {
        let data_dim = net.output_dim();
        if net.input_dim() != data_dim + EMBED_DIM {
            return Err(Error::invalid(format!(
                "network input {} must equal data dim {data_dim} + {EMBED_DIM}",
                net.input_dim()
            )));
        }
        Ok(Self { net, schedule, data_dim })
    }

    /// Freshly initialized model with `hidden` tanh layers between data+time and data.
    pub fn init(data_dim: usize, hidden: &[usize], schedule: NoiseSchedule, rng: &mut RngStream) -> Result<Self> {
        let sizes = Self::layer_sizes(data_dim, hidden);
        Self::new(Mlp::init(&sizes, rng)?, schedule)
    }

    pub fn layer_sizes(data_dim: usize, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![data_dim + EMBED_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(data_dim);
        sizes
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn check_x(&self, x: &Tensor) -> Result<()> {
        if x.last_dim() != self.data_dim {
            return Err(Error::invalid(format!(
                "sample width {} does not match model dim {}",
                x.last_dim(),
                self.data_dim
            )));
        }
        Ok(())
    }

    /// `eps_phi(x, t)` for every row of `x`, shaped like `x`. A timestep of 0
    /// is evaluated with the `t = 1` features.
    pub fn predict_noise(&self, x: &Tensor, t: usize) -> Result<Tensor> {
        self.check_x(x)?;
        let input = with_time(x, &[t.max(1)], self.schedule.steps())?;
        self.net.forward(&input)?.reshape(x.shape())
    }
}

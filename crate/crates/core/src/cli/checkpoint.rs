//! Binary checkpoints.
//!
//! Layout: the magic bytes `PCDF`, a little-endian `u32` format version, a
//! little-endian `u32` header length, a UTF-8 JSON header, then every
//! parameter as a little-endian `f64` in the order `w0, b0, w1, b1, ...`
//! (weights row-major `[out, in]`).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ddpm::{DiffusionModel, NoiseSchedule, ScheduleParams};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::prefclassifier::PreferenceClassifier;

pub const MAGIC: &[u8; 4] = b"PCDF";
pub const FORMAT_VERSION: u32 = 1;
/// Upper bound on the JSON header, to reject garbage lengths early.
const MAX_HEADER: u32 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Diffusion,
    Classifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub layer_sizes: Vec<usize>,
    pub schedule: ScheduleParams,
    pub time_conditioned: bool,
    pub seed: u64,
    pub data_dim: usize,
}

impl CheckpointHeader {
    fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_diffusion(model: &DiffusionModel, seed: u64) -> Self {
        Self {
            header: CheckpointHeader {
                kind: ModelKind::Diffusion,
                layer_sizes: model.net.layer_sizes().to_vec(),
                schedule: model.schedule.params(),
                time_conditioned: true,
                seed,
                data_dim: model.data_dim(),
            },
            params: model.net.flat_params(),
        }
    }

    /// The classifier's schedule is the one its training tuples were noised with.
    pub fn from_classifier(clf: &PreferenceClassifier, schedule: &NoiseSchedule, seed: u64) -> Self {
        Self {
            header: CheckpointHeader {
                kind: ModelKind::Classifier,
                layer_sizes: clf.trunk.layer_sizes().to_vec(),
                schedule: schedule.params(),
                time_conditioned: clf.time_conditioned(),
                seed,
                data_dim: clf.data_dim(),
            },
            params: clf.trunk.flat_params(),
        }
    }

    fn net(&self) -> Result<Mlp> {
        let mut net = Mlp::zeros(&self.header.layer_sizes).map_err(|e| Error::Format(format!("header: {e}")))?;
        net.set_flat_params(&self.params)?;
        Ok(net)
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::invalid(format!("expected a {kind:?} checkpoint, found {:?}", self.header.kind)));
        }
        Ok(())
    }

    pub fn into_diffusion(self) -> Result<DiffusionModel> {
        self.expect_kind(ModelKind::Diffusion)?;
        let schedule = NoiseSchedule::new(self.header.schedule).map_err(|e| Error::Format(format!("header: {e}")))?;
        let model = DiffusionModel::new(self.net()?, schedule).map_err(|e| Error::Format(format!("header: {e}")))?;
        if model.data_dim() != self.header.data_dim {
            return Err(Error::Format("header data_dim disagrees with layer sizes".into()));
        }
        Ok(model)
    }

    pub fn into_classifier(self) -> Result<PreferenceClassifier> {
        self.expect_kind(ModelKind::Classifier)?;
        let h = &self.header;
        PreferenceClassifier::new(self.net()?, h.data_dim, h.time_conditioned, h.schedule.steps)
            .map_err(|e| Error::Format(format!("header: {e}")))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        let mut payload = Vec::with_capacity(8 * self.params.len());
        for p in &self.params {
            payload.extend_from_slice(&p.to_le_bytes());
        }
        out.write_all(&payload)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Format(format!("checkpoint truncated: {} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"PCDF\"",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if header_len > MAX_HEADER || bytes.len() < 12 + header_len as usize {
            return Err(Error::Format(format!("header length {header_len} exceeds the file")));
        }
        let end = 12 + header_len as usize;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[12..end]).map_err(|e| Error::Format(format!("header: {e}")))?;
        if header.layer_sizes.len() < 2 || header.layer_sizes.contains(&0) {
            return Err(Error::Format(format!("header has invalid layer sizes {:?}", header.layer_sizes)));
        }
        let payload = &bytes[end..];
        let expected = 8 * header.param_count();
        if payload.len() != expected {
            return Err(Error::Format(format!("payload is {} bytes, header declares {expected}", payload.len())));
        }
        let params = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

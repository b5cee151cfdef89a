//! On-disk formats: LSDT tensors, JSON checkpoints and TOML run configs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderModel, Layer, Mlp, MlpSpec};
use crate::error::{Error, Result};
use crate::fom::ParamVector;
use crate::gp::{GpCoefficientField, GpModelState};
use crate::greedy::{TrainConfig, TrainedRom};
use crate::rom::RomBundle;
use crate::sindy::CoefficientTensor;

const MAGIC: &[u8; 4] = b"LSDT";
const TENSOR_VERSION: u16 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_tensor(t: &ArrayD<f64>) -> Result<Vec<u8>> {
    let rank = u16::try_from(t.ndim()).map_err(|_| Error::TensorFormat("rank exceeds u16".into()))?;
    let mut out = Vec::with_capacity(8 + 8 * t.ndim() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&rank.to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    // iter() walks in logical row-major order regardless of memory layout
    for v in t.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<ArrayD<f64>> {
    let bad = |m: &str| Error::TensorFormat(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing LSDT magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TENSOR_VERSION {
        return Err(Error::TensorFormat(format!("unsupported tensor version {version}")));
    }
    let rank = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let header = 8 + 8 * rank;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let mut dims = Vec::with_capacity(rank);
    for chunk in bytes[8..header].chunks_exact(8) {
        let d = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        dims.push(usize::try_from(d).map_err(|_| bad("dimension overflows usize"))?);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("element count overflow"))?;
    let payload = &bytes[header..];
    if count.checked_mul(8) != Some(payload.len()) {
        return Err(Error::TensorFormat(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            8 * count
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|e| Error::TensorFormat(e.to_string()))
}

pub fn write_tensor(path: &Path, t: &ArrayD<f64>) -> Result<()> {
    let bytes = encode_tensor(t)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<ArrayD<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    write_tensor(path, &m.clone().into_dyn())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    read_tensor(path)?
        .into_dimensionality()
        .map_err(|_| Error::TensorFormat("expected a rank-2 tensor".into()))
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn config_to_toml(cfg: &TrainConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerData {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_in x fan_out`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerData {
    fn from_layer(l: &Layer) -> Self {
        LayerData {
            fan_in: l.weight.nrows(),
            fan_out: l.weight.ncols(),
            weight: l.weight.iter().copied().collect(),
            bias: l.bias.to_vec(),
        }
    }

    fn to_layer(&self) -> Result<Layer> {
        let weight = Array2::from_shape_vec((self.fan_in, self.fan_out), self.weight.clone())
            .map_err(|e| Error::Checkpoint(format!("layer weight: {e}")))?;
        if self.bias.len() != self.fan_out {
            return Err(Error::Checkpoint("layer bias length mismatch".into()));
        }
        Ok(Layer {
            weight,
            bias: self.bias.clone().into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub config: TrainConfig,
    pub spec: MlpSpec,
    pub encoder: Vec<LayerData>,
    pub decoder: Vec<LayerData>,
    /// One `N_z x N_l` row-major matrix per training parameter.
    pub coefficients: Vec<Vec<f64>>,
    pub sampled: Vec<usize>,
    pub params: Vec<ParamVector>,
    /// Row-major over `(j, k)`.
    pub gp: Vec<GpModelState>,
}

impl Checkpoint {
    pub fn from_rom(rom: &TrainedRom) -> Self {
        let m = &rom.bundle.model;
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            seed: rom.config.seed,
            config: rom.config.clone(),
            spec: m.spec.clone(),
            encoder: m.encoder.layers.iter().map(LayerData::from_layer).collect(),
            decoder: m.decoder.layers.iter().map(LayerData::from_layer).collect(),
            coefficients: rom.coefficients.matrices.iter().map(|x| x.iter().copied().collect()).collect(),
            sampled: rom.sampled.clone(),
            params: rom.params.clone(),
            gp: rom.bundle.field.states(),
        }
    }

    pub fn to_rom(&self) -> Result<TrainedRom> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", self.format_version)));
        }
        if self.sampled.len() != self.params.len() || self.coefficients.len() != self.params.len() {
            return Err(Error::Checkpoint("sampled/params/coefficients lengths differ".into()));
        }
        let layers = |v: &[LayerData]| v.iter().map(LayerData::to_layer).collect::<Result<Vec<_>>>();
        let mlp = |v: &[LayerData]| -> Result<Mlp> {
            Ok(Mlp {
                layers: layers(v)?,
                activation: self.spec.activation,
            })
        };
        let model = AutoencoderModel::from_parts(self.spec.clone(), mlp(&self.encoder)?, mlp(&self.decoder)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let nz = model.latent_dim();
        let nl = self.config.dictionary.n_terms(nz);
        let matrices = self
            .coefficients
            .iter()
            .map(|c| Array2::from_shape_vec((nz, nl), c.clone()).map_err(|e| Error::Checkpoint(format!("coefficients: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let field = GpCoefficientField::from_states(nz, nl, &self.gp)?;
        Ok(TrainedRom {
            config: self.config.clone(),
            bundle: RomBundle {
                model,
                field,
                dictionary: self.config.dictionary,
                dt: self.config.fom.dt,
                n_steps: self.config.fom.n_steps(),
            },
            coefficients: CoefficientTensor { matrices },
            sampled: self.sampled.clone(),
            params: self.params.clone(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn save_checkpoint(path: &Path, rom: &TrainedRom) -> Result<()> {
    let bytes = Checkpoint::from_rom(rom).to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedRom> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)?.to_rom()
}

/// Appends JSON lines to a file.
pub struct JsonLines {
    out: BufWriter<fs::File>,
    path: std::path::PathBuf,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(JsonLines {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let line = serde_json::to_string(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_header_layout() {
        let t = ArrayD::from_shape_vec(IxDyn(&[2, 1]), vec![1.0, -0.5]).unwrap();
        let b = encode_tensor(&t).unwrap();
        assert_eq!(&b[..4], b"LSDT");
        assert_eq!(&b[4..8], &[1, 0, 2, 0]);
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &1u64.to_le_bytes());
        assert_eq!(&b[24..32], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 40);
    }

    #[test]
    fn tensor_rejects_corruption() {
        let t = ArrayD::from_shape_vec(IxDyn(&[3]), vec![1.0, 2.0, 3.0]).unwrap();
        let b = encode_tensor(&t).unwrap();
        assert!(decode_tensor(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_tensor(&bad).is_err());
        let mut bad = b.clone();
        bad[4] = 9;
        assert!(decode_tensor(&bad).is_err());
    }

    #[test]
    fn non_standard_layout_written_row_major() {
        let m = ndarray::array![[1.0, 2.0], [3.0, 4.0]];
        let t = m.t().to_owned().into_dyn();
        let back = decode_tensor(&encode_tensor(&m.t().into_dyn().to_owned()).unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.iter().copied().collect::<Vec<_>>(), vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut text = config_to_toml(&TrainConfig::desk_scale()).unwrap();
        assert_eq!(parse_config(&text).unwrap(), TrainConfig::desk_scale());
        text.push_str("\nbogus = 1\n");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
    }
}

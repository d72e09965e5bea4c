//! Model checkpoints: a binary parameter file plus a JSON sidecar.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! "HRFM" | version u16 = 1 | layer count u16
//! per layer: rows u32 | cols u32 | rows·cols f32 weights (row-major) | rows f32 biases
//! ```
//!
//! The sidecar sits next to it with the extension replaced by `.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mlp::{Linear, Mlp, MlpConfig};
use super::train::{EpochMetrics, TrainConfig};
use super::NeuralError;
use crate::matrix::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"HRFM";
const MODEL_VERSION: u16 = 1;

/// Sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: MlpConfig,
    pub init_seed: u64,
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub metrics: Vec<EpochMetrics>,
}

impl Checkpoint {
    pub fn new(architecture: MlpConfig, init_seed: u64) -> Self {
        Self {
            format_version: 1,
            architecture,
            init_seed,
            train: None,
            metrics: Vec::new(),
        }
    }
}

pub fn write_model(model: &Mlp<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u16).to_le_bytes());
    for l in model.layers() {
        out.extend_from_slice(&(l.weights.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(l.weights.cols() as u32).to_le_bytes());
        for v in l.weights.as_slice().iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses the binary parameter file into layers.
pub fn read_model(bytes: &[u8]) -> Result<Vec<Linear<f32>>, NeuralError> {
    let bad = |m: &str| NeuralError::Checkpoint(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(bad("missing HRFM magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MODEL_VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let mut pos = 8;
    let mut take = |n: usize| -> Result<&[u8], NeuralError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let head = take(8)?;
        let rows = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(head[4..].try_into().unwrap()) as usize;
        let n = rows
            .checked_mul(cols)
            .and_then(|w| w.checked_add(rows))
            .and_then(|w| w.checked_mul(4))
            .ok_or_else(|| bad("layer size overflows"))?;
        let vals: Vec<f32> = take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (w, b) = vals.split_at(rows * cols);
        layers.push(Linear {
            weights: Matrix::from_vec(rows, cols, w.to_vec()).expect("sized above"),
            bias: b.to_vec(),
        });
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(layers)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_checkpoint(model: &Mlp<f32>, meta: &Checkpoint, path: impl AsRef<Path>) -> Result<(), NeuralError> {
    let path = path.as_ref();
    let io = |p: &Path, e| NeuralError::Io {
        path: p.to_path_buf(),
        source: e,
    };
    fs::write(path, write_model(model)).map_err(|e| io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).expect("checkpoint metadata serializes");
    fs::write(&side, json + "\n").map_err(|e| io(&side, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Mlp<f32>, Checkpoint), NeuralError> {
    let path = path.as_ref();
    let io = |p: &Path, e| NeuralError::Io {
        path: p.to_path_buf(),
        source: e,
    };
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io(&side, e))?;
    let meta: Checkpoint =
        serde_json::from_str(&text).map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", side.display())))?;
    let model = Mlp::from_layers(meta.architecture.clone(), read_model(&bytes)?)?;
    Ok((model, meta))
}

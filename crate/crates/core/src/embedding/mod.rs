//! Frame-embedding files, temporal mean pooling, and labelled datasets of
//! pooled vectors.

mod hrf;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Manifest, Split, CLASS_COUNT};
use crate::matrix::{Matrix, Real};

pub use hrf::{decode_hrf, encode_hrf, read_hrf, write_hrf};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic, not an HRF file")]
    BadMagic,
    #[error("truncated header")]
    Truncated,
    #[error("unsupported HRF version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported HRF flags {0:#06x}")]
    UnsupportedFlags(u16),
    #[error("header declares {frames}x{width} but payload holds {payload_floats} floats")]
    DimensionMismatch {
        frames: usize,
        width: usize,
        payload_floats: f64,
    },
    #[error("payload contains NaN or infinity")]
    NonFinitePayload,
    #[error("matrix must have at least one frame and one column, got {frames}x{width}")]
    EmptyMatrix { frames: usize, width: usize },
    #[error("entry {id:?}: width {found} differs from {expected}")]
    MixedWidth {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("entry {id:?}: missing embedding file {path:?}")]
    MissingFile { id: String, path: PathBuf },
    #[error("entry {id:?}: {source}")]
    Entry {
        id: String,
        #[source]
        source: Box<EmbeddingError>,
    },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("{path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EmbeddingError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Encoder output for one utterance: `T` frames of width `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddingMatrix(Matrix<f32>);

impl FrameEmbeddingMatrix {
    pub fn new(m: Matrix<f32>) -> Result<Self, EmbeddingError> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(EmbeddingError::EmptyMatrix {
                frames: m.rows(),
                width: m.cols(),
            });
        }
        if !m.all_finite() {
            return Err(EmbeddingError::NonFinitePayload);
        }
        Ok(Self(m))
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn width(&self) -> usize {
        self.0.cols()
    }

    pub fn as_matrix(&self) -> &Matrix<f32> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceEmbedding {
    pub vector: Vec<f32>,
    pub source_id: String,
}

/// Column means over the time axis.
///
/// Each column is summed in `f64` over its values in sorted order, so the
/// result depends only on the multiset of rows, never on their order.
pub fn mean_pool(m: &FrameEmbeddingMatrix) -> Vec<f32> {
    let data = m.as_matrix();
    let frames = data.rows();
    let mut column = vec![0f32; frames];
    (0..data.cols())
        .map(|j| {
            for (t, slot) in column.iter_mut().enumerate() {
                *slot = data.get(t, j);
            }
            column.sort_unstable_by(f32::total_cmp);
            let sum: f64 = column.iter().map(|&v| v as f64).sum();
            (sum / frames as f64) as f32
        })
        .collect()
}

pub fn pool_utterance(m: &FrameEmbeddingMatrix, source_id: impl Into<String>) -> UtteranceEmbedding {
    UtteranceEmbedding {
        vector: mean_pool(m),
        source_id: source_id.into(),
    }
}

/// Pooled vectors with class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset<F = f32> {
    x: Matrix<F>,
    y: Vec<usize>,
    ids: Vec<String>,
    classes: usize,
}

impl<F: Real> EmbeddingDataset<F> {
    pub fn new(x: Matrix<F>, y: Vec<usize>, ids: Vec<String>, classes: usize) -> Result<Self, EmbeddingError> {
        if x.rows() != y.len() || y.len() != ids.len() {
            return Err(EmbeddingError::InvalidDataset(format!(
                "{} rows, {} labels, {} ids",
                x.rows(),
                y.len(),
                ids.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= classes) {
            return Err(EmbeddingError::InvalidDataset(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        if !x.all_finite() {
            return Err(EmbeddingError::NonFinitePayload);
        }
        Ok(Self { x, y, ids, classes })
    }

    pub fn empty(dim: usize, classes: usize) -> Self {
        Self {
            x: Matrix::zeros(0, dim),
            y: Vec::new(),
            ids: Vec::new(),
            classes,
        }
    }

    pub fn x(&self) -> &Matrix<F> {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            classes: self.classes,
        }
    }

    pub fn cast<G: Real>(&self) -> EmbeddingDataset<G> {
        EmbeddingDataset {
            x: self.x.map(|v| G::from_f64(v.to_f64())),
            y: self.y.clone(),
            ids: self.ids.clone(),
            classes: self.classes,
        }
    }

    /// Same labels and ids with replaced features.
    pub fn with_features(&self, x: Matrix<F>) -> Result<Self, EmbeddingError> {
        Self::new(x, self.y.clone(), self.ids.clone(), self.classes)
    }
}

/// Reads and pools the embedding file of every entry in `split`, in manifest
/// order. Relative paths are resolved against `base_dir`.
pub fn assemble(manifest: &Manifest, split: Split, base_dir: &Path) -> Result<EmbeddingDataset, EmbeddingError> {
    let selected: Vec<_> = manifest.in_split(split).collect();
    let pooled: Vec<Result<Vec<f32>, EmbeddingError>> = selected
        .par_iter()
        .map(|e| {
            let rel = e.embedding_path.as_deref().ok_or_else(|| EmbeddingError::MissingFile {
                id: e.id.clone(),
                path: PathBuf::new(),
            })?;
            let path = base_dir.join(rel);
            if !path.is_file() {
                return Err(EmbeddingError::MissingFile {
                    id: e.id.clone(),
                    path,
                });
            }
            let m = read_hrf(&path).map_err(|source| EmbeddingError::Entry {
                id: e.id.clone(),
                source: Box::new(source),
            })?;
            Ok(mean_pool(&m))
        })
        .collect();

    let mut rows = Vec::with_capacity(selected.len());
    for (e, r) in selected.iter().zip(pooled) {
        let v = r?;
        if let Some(first) = rows.first().map(Vec::len) {
            if v.len() != first {
                return Err(EmbeddingError::MixedWidth {
                    id: e.id.clone(),
                    expected: first,
                    found: v.len(),
                });
            }
        }
        rows.push(v);
    }
    if rows.is_empty() {
        return Ok(EmbeddingDataset::empty(0, CLASS_COUNT));
    }
    let x = Matrix::from_rows(&rows).expect("widths checked");
    let y = selected.iter().map(|e| e.class_id()).collect();
    let ids = selected.iter().map(|e| e.id.clone()).collect();
    EmbeddingDataset::new(x, y, ids, CLASS_COUNT)
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    n: usize,
    dim: usize,
    classes: usize,
}

const FEATURES_FILE: &str = "features.hrf";
const LABELS_FILE: &str = "labels.csv";
const META_FILE: &str = "meta.json";

/// Writes a dataset directory: `meta.json`, `labels.csv` (id, class_id) and,
/// when non-empty, the feature matrix as `features.hrf`.
pub fn save_dataset(ds: &EmbeddingDataset, dir: &Path) -> Result<(), EmbeddingError> {
    fs::create_dir_all(dir).map_err(|e| EmbeddingError::io(dir, e))?;
    let meta = DatasetMeta {
        n: ds.len(),
        dim: ds.dim(),
        classes: ds.classes(),
    };
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")
        .map_err(|e| EmbeddingError::io(&meta_path, e))?;

    let labels_path = dir.join(LABELS_FILE);
    let mut w = csv::Writer::from_path(&labels_path)
        .map_err(|e| EmbeddingError::io(&labels_path, e.into()))?;
    let wrap = |e: csv::Error| EmbeddingError::io(&labels_path, e.into());
    w.write_record(["id", "class_id"]).map_err(wrap)?;
    for (id, y) in ds.ids().iter().zip(ds.y()) {
        w.write_record([id.as_str(), &y.to_string()]).map_err(wrap)?;
    }
    w.flush().map_err(|e| EmbeddingError::io(&labels_path, e))?;

    if !ds.is_empty() {
        write_hrf(&FrameEmbeddingMatrix::new(ds.x().clone())?, dir.join(FEATURES_FILE))?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<EmbeddingDataset, EmbeddingError> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| EmbeddingError::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)
        .map_err(|e| EmbeddingError::InvalidDataset(format!("{meta_path:?}: {e}")))?;

    let labels_path = dir.join(LABELS_FILE);
    let mut r = csv::Reader::from_path(&labels_path)
        .map_err(|e| EmbeddingError::io(&labels_path, e.into()))?;
    let mut ids = Vec::with_capacity(meta.n);
    let mut y = Vec::with_capacity(meta.n);
    for rec in r.records() {
        let rec = rec.map_err(|e| EmbeddingError::InvalidDataset(e.to_string()))?;
        ids.push(rec.get(0).unwrap_or_default().to_string());
        let class = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| EmbeddingError::InvalidDataset(format!("bad label row {rec:?}")))?;
        y.push(class);
    }
    if y.len() != meta.n {
        return Err(EmbeddingError::InvalidDataset(format!(
            "meta says {} rows, labels has {}",
            meta.n,
            y.len()
        )));
    }
    if meta.n == 0 {
        return Ok(EmbeddingDataset::empty(meta.dim, meta.classes));
    }
    let features = read_hrf(dir.join(FEATURES_FILE))?;
    if features.width() != meta.dim {
        return Err(EmbeddingError::InvalidDataset(format!(
            "meta says width {}, features have {}",
            meta.dim,
            features.width()
        )));
    }
    EmbeddingDataset::new(features.0, y, ids, meta.classes)
}

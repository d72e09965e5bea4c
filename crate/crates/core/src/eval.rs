//! Clean and robust accuracy, per-class breakdown, confusions and ε sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::{pgd, AttackConfig, AttackInit};
use crate::embedding::EmbeddingDataset;
use crate::matrix::Real;
use crate::neural::{Mlp, NeuralError};

/// Reference figures reported for the full-size corpus. Not reproducible on
/// synthetic data; they are printed next to local results for comparison.
pub mod reference {
    /// Off-the-shelf transcription model, letter accuracy (body text).
    pub const ENCODER_BASELINE: f64 = 0.37;
    /// Same model as quoted in the abstract.
    pub const ENCODER_BASELINE_ABSTRACT: f64 = 0.35;
    pub const ENCODER_FINETUNED_VAL: f64 = 0.82;
    pub const ENCODER_FINETUNED_TEST: f64 = 0.65;
    pub const MLP_VAL: f64 = 0.766;
    pub const MLP_TEST: f64 = 0.66;
    pub const MLP_MACRO: f64 = 0.6784;
    pub const ADVERSARIAL_VAL: f64 = 0.675;
    pub const ADVERSARIAL_TEST: f64 = 0.5896;
    pub const ATTACK_EPSILON: f64 = 0.05;
    pub const STANDARD_CLEAN: f64 = 0.65;
    pub const STANDARD_ATTACKED: f64 = 0.32;
    /// Accuracy drop of the adversarially trained model under attack, in points.
    pub const ADVERSARIAL_DROP_POINTS: f64 = 9.0;
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("epsilons must be finite, non-negative and strictly increasing: {0:?}")]
    BadEpsilons(Vec<f64>),
    #[error("models disagree: {0}")]
    ModelMismatch(String),
    #[error("bad sweep csv: {0}")]
    Csv(String),
    #[error("{path:?}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub n: usize,
    pub classes: usize,
    pub clean_accuracy: f64,
    /// `None` for classes absent from the dataset.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Mean of the per-class accuracies over classes that occur.
    pub macro_average: f64,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn from_predictions(classes: usize, y: &[usize], pred: &[usize]) -> Result<Self, NeuralError> {
        if let Some(&label) = y.iter().chain(pred).find(|&&l| l >= classes) {
            return Err(NeuralError::LabelOutOfRange { label, classes });
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&t, &p) in y.iter().zip(pred) {
            confusion[t][p] += 1;
        }
        let correct: u64 = (0..classes).map(|k| confusion[k][k]).sum();
        let per_class_accuracy: Vec<Option<f64>> = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let total: u64 = row.iter().sum();
                (total > 0).then(|| row[k] as f64 / total as f64)
            })
            .collect();
        let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
        let macro_average = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            n: y.len(),
            classes,
            clean_accuracy: if y.is_empty() { 0.0 } else { correct as f64 / y.len() as f64 },
            per_class_accuracy,
            macro_average,
            confusion,
        })
    }

    /// The `k` largest off-diagonal cells as `(true, predicted, count)`.
    pub fn top_confusions(&self, k: usize) -> Vec<(usize, usize, u64)> {
        let mut cells: Vec<(usize, usize, u64)> = self
            .confusion
            .iter()
            .enumerate()
            .flat_map(|(t, row)| row.iter().enumerate().map(move |(p, &c)| (t, p, c)))
            .filter(|&(t, p, c)| t != p && c > 0)
            .collect();
        cells.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        cells.truncate(k);
        cells
    }
}

pub fn top_confusions(report: &EvalReport, k: usize) -> Vec<(usize, usize, u64)> {
    report.top_confusions(k)
}

fn check_dataset<F: Real>(model: &Mlp<F>, data: &EmbeddingDataset<F>) -> Result<(), NeuralError> {
    if !data.is_empty() && data.dim() != model.input_dim() {
        return Err(NeuralError::ShapeMismatch {
            what: "dataset width",
            expected: model.input_dim(),
            found: data.dim(),
        });
    }
    if let Some(&label) = data.y().iter().find(|&&l| l >= model.classes()) {
        return Err(NeuralError::LabelOutOfRange {
            label,
            classes: model.classes(),
        });
    }
    Ok(())
}

/// Eval-mode accuracy report.
pub fn evaluate<F: Real>(model: &Mlp<F>, data: &EmbeddingDataset<F>) -> Result<EvalReport, NeuralError> {
    check_dataset(model, data)?;
    let pred = if data.is_empty() {
        Vec::new()
    } else {
        model.predict(data.x())?
    };
    EvalReport::from_predictions(model.classes(), data.y(), &pred)
}

const ROBUST_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustResult {
    pub n: usize,
    pub clean_accuracy: f64,
    pub robust_accuracy: f64,
}

/// Accuracy under PGD. An example counts as robustly correct only if it is
/// classified correctly when clean and at every iterate the attack visits.
///
/// Rows are attacked in fixed chunks of 256; a random start is salted with the
/// chunk index, so the result does not depend on scheduling.
pub fn evaluate_robust<F: Real>(
    model: &Mlp<F>,
    data: &EmbeddingDataset<F>,
    cfg: &AttackConfig,
) -> Result<RobustResult, NeuralError> {
    check_dataset(model, data)?;
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Ok(RobustResult {
            n,
            clean_accuracy: 0.0,
            robust_accuracy: 0.0,
        });
    }
    let clean = model.predict(data.x())?;
    let chunks: Vec<Vec<usize>> = (0..n)
        .collect::<Vec<_>>()
        .chunks(ROBUST_CHUNK)
        .map(<[usize]>::to_vec)
        .collect();
    let fooled: Vec<Vec<bool>> = chunks
        .par_iter()
        .enumerate()
        .map(|(c, idx)| {
            let x = data.x().select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.y()[i]).collect();
            pgd(model, &x, &y, &cfg.salted(c as u64)).map(|p| p.fooled)
        })
        .collect::<Result<_, _>>()?;
    let clean_ok: Vec<bool> = clean.iter().zip(data.y()).map(|(p, y)| p == y).collect();
    let clean_correct = clean_ok.iter().filter(|&&b| b).count();
    let robust_correct = clean_ok
        .iter()
        .zip(fooled.iter().flatten())
        .filter(|&(&ok, &f)| ok && !f)
        .count();
    Ok(RobustResult {
        n,
        clean_accuracy: clean_correct as f64 / n as f64,
        robust_accuracy: robust_correct as f64 / n as f64,
    })
}

/// PGD settings shared by every cell of a sweep; α is `2.5 ε / steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub steps: usize,
    pub init: AttackInit,
    pub track_best: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            init: AttackInit::Zero,
            track_best: true,
        }
    }
}

impl SweepConfig {
    pub fn attack(&self, epsilon: f64) -> AttackConfig {
        AttackConfig {
            init: self.init,
            track_best: self.track_best,
            ..AttackConfig::pgd(epsilon, self.steps)
        }
    }
}

pub const DEFAULT_EPSILONS: [f64; 5] = [0.0, 0.01, 0.02, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub acc_standard: f64,
    pub acc_adversarial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Clean accuracies of the standard and adversarial model.
    pub clean_standard: f64,
    pub clean_adversarial: f64,
}

fn check_epsilons(eps: &[f64]) -> Result<(), EvalError> {
    let ok = !eps.is_empty()
        && eps.iter().all(|e| e.is_finite() && *e >= 0.0)
        && eps.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(EvalError::BadEpsilons(eps.to_vec()))
    }
}

/// Robust accuracy of both models at every ε.
pub fn sweep<F: Real>(
    standard: &Mlp<F>,
    adversarial: &Mlp<F>,
    data: &EmbeddingDataset<F>,
    epsilons: &[f64],
    cfg: &SweepConfig,
) -> Result<SweepResult, EvalError> {
    check_epsilons(epsilons)?;
    if standard.input_dim() != adversarial.input_dim() || standard.classes() != adversarial.classes() {
        return Err(EvalError::ModelMismatch(format!(
            "{}→{} vs {}→{}",
            standard.input_dim(),
            standard.classes(),
            adversarial.input_dim(),
            adversarial.classes()
        )));
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    let mut clean = (0.0, 0.0);
    for &e in epsilons {
        let attack = cfg.attack(e);
        let s = evaluate_robust(standard, data, &attack)?;
        let a = evaluate_robust(adversarial, data, &attack)?;
        clean = (s.clean_accuracy, a.clean_accuracy);
        rows.push(SweepRow {
            epsilon: e,
            acc_standard: s.robust_accuracy,
            acc_adversarial: a.robust_accuracy,
        });
    }
    Ok(SweepResult {
        rows,
        clean_standard: clean.0,
        clean_adversarial: clean.1,
    })
}

impl SweepResult {
    /// CSV with columns `epsilon,acc_standard,acc_adversarial`. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,acc_standard,acc_adversarial\n");
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.epsilon, r.acc_standard, r.acc_adversarial).unwrap();
        }
        out
    }

    /// Parses rows written by [`to_csv`](Self::to_csv). Clean accuracies are
    /// taken from the ε = 0 row when present.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| EvalError::Csv(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["epsilon", "acc_standard", "acc_adversarial"] {
            return Err(EvalError::Csv(format!("unexpected header {headers:?}")));
        }
        let rows: Vec<SweepRow> = reader
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| EvalError::Csv(e.to_string()))?;
        check_epsilons(&rows.iter().map(|r| r.epsilon).collect::<Vec<_>>())?;
        let zero = rows.iter().find(|r| r.epsilon == 0.0);
        Ok(Self {
            clean_standard: zero.map_or(f64::NAN, |r| r.acc_standard),
            clean_adversarial: zero.map_or(f64::NAN, |r| r.acc_adversarial),
            rows,
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Line plot of both columns against ε.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (480.0, 320.0, 40.0);
        let max_eps = self.rows.last().map_or(1.0, |r| r.epsilon).max(f64::MIN_POSITIVE);
        let px = |e: f64| pad + (w - 2.0 * pad) * e / max_eps;
        let py = |a: f64| h - pad - (h - 2.0 * pad) * a;
        let line = |pick: fn(&SweepRow) -> f64| -> String {
            self.rows
                .iter()
                .map(|r| format!("{:.2},{:.2}", px(r.epsilon), py(pick(r))))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#).unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<path d="M{pad},{pad} V{} H{}" stroke="black" fill="none"/>"#,
            h - pad,
            w - pad
        )
        .unwrap();
        for a in [0.0, 0.5, 1.0] {
            writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{a}</text>"#, pad - 4.0, py(a) + 4.0).unwrap();
        }
        for r in &self.rows {
            writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, px(r.epsilon), h - pad + 14.0, r.epsilon).unwrap();
        }
        writeln!(s, r#"<polyline points="{}" stroke="crimson" fill="none" stroke-width="2"/>"#, line(|r| r.acc_standard)).unwrap();
        writeln!(s, r#"<polyline points="{}" stroke="steelblue" fill="none" stroke-width="2"/>"#, line(|r| r.acc_adversarial)).unwrap();
        writeln!(s, r#"<text x="{}" y="20" fill="crimson">standard</text>"#, pad + 10.0).unwrap();
        writeln!(s, r#"<text x="{}" y="20" fill="steelblue">adversarial</text>"#, pad + 90.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epsilon</text>"#, w / 2.0, h - 6.0).unwrap();
        s.push_str("</svg>\n");
        s
    }
}

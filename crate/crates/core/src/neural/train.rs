use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{argmax, cross_entropy};
use super::mlp::{Mlp, Mode};
use super::NeuralError;
use crate::adversarial::{pgd, AttackConfig};
use crate::embedding::EmbeddingDataset;
use crate::matrix::Real;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// When set, every batch is replaced by its PGD perturbation before the update.
    pub attack: Option<AttackConfig>,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 9,
            batch_size: 32,
            seed,
            adam: AdamConfig::default(),
            attack: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean Train-mode loss over the (possibly perturbed) batches.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub model: Mlp<F>,
    pub metrics: Vec<EpochMetrics>,
}

/// Minibatch Adam on mean cross-entropy.
///
/// Batch order comes from `hash(seed, epoch)` and dropout masks from
/// `hash(seed, epoch, batch)`, so a run is a pure function of its inputs.
pub fn train<F: Real>(
    mut model: Mlp<F>,
    data: &EmbeddingDataset<F>,
    val: Option<&EmbeddingDataset<F>>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<F>, NeuralError> {
    if cfg.batch_size == 0 {
        return Err(NeuralError::InvalidConfig("batch size must be positive".into()));
    }
    if let Some(a) = &cfg.attack {
        a.validate()?;
    }
    if data.is_empty() {
        return Err(NeuralError::EmptyBatch);
    }
    if data.dim() != model.input_dim() {
        return Err(NeuralError::ShapeMismatch {
            what: "dataset width",
            expected: model.input_dim(),
            found: data.dim(),
        });
    }
    let mut metrics = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { model, metrics });
    }
    let mut adam = AdamState::for_model(cfg.adam, &model);
    let n = data.len();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed::hash_parts(cfg.seed, &[epoch as u64])));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.x().select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.y()[i]).collect();
            let x = match &cfg.attack {
                Some(a) => {
                    let a = a.salted(seed::hash_parts(epoch as u64, &[b as u64]));
                    pgd(&model, &x, &y, &a)?.apply(&x)
                }
                None => x,
            };
            let drop_seed = seed::hash_parts(cfg.seed, &[epoch as u64, b as u64, 1]);
            let trace = model.forward_trace(&x, Mode::Train, drop_seed)?;
            correct += trace
                .logits()
                .iter_rows()
                .zip(&y)
                .filter(|(r, &l)| argmax(r) == l)
                .count();
            let g = model.backward(&trace, &y)?;
            if !g.loss.is_finite() {
                return Err(NeuralError::NonFinite(format!("loss at epoch {}, batch {}", epoch + 1, b + 1)));
            }
            loss_sum += g.loss * y.len() as f64;
            adam.step_model(&mut model, &g.params)?;
            if !model.params_finite() {
                return Err(NeuralError::NonFinite(format!("parameters after epoch {}, batch {}", epoch + 1, b + 1)));
            }
        }
        let (val_loss, val_accuracy) = match val.filter(|v| !v.is_empty()) {
            Some(v) => {
                let logits = model.forward(v.x(), Mode::Eval, 0)?;
                let acc = logits.iter_rows().zip(v.y()).filter(|(r, &l)| argmax(r) == l).count() as f64
                    / v.len() as f64;
                (Some(cross_entropy(&logits, v.y())?), Some(acc))
            }
            None => (None, None),
        };
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
            val_loss,
            val_accuracy,
        };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(TrainOutcome { model, metrics })
}

/// [`train`] with every batch replaced by its PGD perturbation under `attack`.
pub fn adversarial_train<F: Real>(
    model: Mlp<F>,
    data: &EmbeddingDataset<F>,
    val: Option<&EmbeddingDataset<F>>,
    attack: AttackConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<F>, NeuralError> {
    let cfg = TrainConfig {
        attack: Some(attack),
        ..cfg.clone()
    };
    train(model, data, val, &cfg, on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::neural::MlpConfig;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> EmbeddingDataset<f32> {
        let mut rng = seed::rng(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 3;
            let mut r = vec![0.0f32; 4];
            r[c] = 3.0;
            for v in &mut r {
                *v += rng.random_range(-0.5..0.5);
            }
            rows.push(r);
            y.push(c);
        }
        let ids = (0..n).map(|i| i.to_string()).collect();
        EmbeddingDataset::new(Matrix::from_rows(&rows).unwrap(), y, ids, 3).unwrap()
    }

    fn model() -> Mlp<f32> {
        Mlp::new(
            MlpConfig {
                input_dim: 4,
                hidden: vec![16],
                classes: 3,
                dropout: 0.3,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let m = model();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::new(0)
        };
        let out = train(m.clone(), &blobs(30, 0), None, &cfg, |_| {}).unwrap();
        assert_eq!(out.model, m);
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn deterministic_and_learns() {
        let data = blobs(150, 2);
        let cfg = TrainConfig {
            epochs: 20,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::new(5)
        };
        let a = train(model(), &data, Some(&data), &cfg, |_| {}).unwrap();
        let b = train(model(), &data, Some(&data), &cfg, |_| {}).unwrap();
        assert_eq!(a.model.layers(), b.model.layers());
        assert!(a.metrics.last().unwrap().val_accuracy.unwrap() > 0.95);
    }

    #[test]
    fn zero_budget_attack_matches_plain_training() {
        let data = blobs(60, 3);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::new(7)
        };
        let plain = train(model(), &data, None, &cfg, |_| {}).unwrap();
        let adv = adversarial_train(model(), &data, None, AttackConfig::pgd(0.0, 10), &cfg, |_| {}).unwrap();
        assert_eq!(plain.model.layers(), adv.model.layers());
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = EmbeddingDataset::<f32>::empty(4, 3);
        assert!(matches!(
            train(model(), &data, None, &TrainConfig::new(0), |_| {}),
            Err(NeuralError::EmptyBatch)
        ));
    }

    #[test]
    fn divergence_reported() {
        let data = blobs(30, 4);
        let cfg = TrainConfig {
            epochs: 3,
            adam: AdamConfig {
                lr: f64::INFINITY,
                ..AdamConfig::default()
            },
            ..TrainConfig::new(0)
        };
        assert!(matches!(
            train(model(), &data, None, &cfg, |_| {}),
            Err(NeuralError::NonFinite(_))
        ));
    }
}
